import click

from config import get_config
from topocon.routes.cli_routes import commands
from topocon.utils.logging_utils import configure_logging


def create_cli(config_name=None):
    config = get_config(config_name)

    @click.group(name='topocon')
    @click.pass_context
    def cli(ctx):
        """Simulateur de contrôle de topologie pour équipes de robots."""
        ctx.ensure_object(dict)
        ctx.obj['config'] = config
        logger = configure_logging(config)
        logger.debug("CLI initialisée", env=config.__name__)

    for command in commands:
        cli.add_command(command)
    return cli


if __name__ == '__main__':
    create_cli()()
