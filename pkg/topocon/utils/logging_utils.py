import os
import logging
import logging.config
import structlog
import yaml

_RENDERERS = {
    'json': lambda: structlog.processors.JSONRenderer(),
    'console': lambda: structlog.dev.ConsoleRenderer(colors=False),
}


def _load_dict_config(path, log_dir, log_level):
    with open(path, encoding='utf8') as fh:
        dict_config = yaml.safe_load(fh)
    for formatter in dict_config.get('formatters', {}).values():
        renderer = formatter.pop('renderer', None)
        if renderer:
            formatter['processor'] = _RENDERERS[renderer]()
    for handler in dict_config.get('handlers', {}).values():
        if 'filename' in handler:
            handler['filename'] = os.path.join(log_dir, os.path.basename(handler['filename']))
    dict_config.setdefault('root', {})['level'] = log_level
    return dict_config


def configure_logging(config):
    log_level_name = getattr(config, 'LOG_LEVEL', 'INFO')
    log_level = getattr(logging, log_level_name)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="%Y-%m-%d %H:%M:%S"),
            structlog.contextvars.merge_contextvars,
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    config_file = getattr(config, 'LOG_CONFIG_FILE', '')
    if config_file and os.path.exists(config_file):
        log_dir = getattr(config, 'LOG_DIR', 'logs')
        if not os.path.exists(log_dir):
            os.makedirs(log_dir)
        logging.config.dictConfig(_load_dict_config(config_file, log_dir, log_level_name))
    else:
        # pas de fichier de config : console seule
        handler = logging.StreamHandler()
        handler.setFormatter(structlog.stdlib.ProcessorFormatter(
            processor=_RENDERERS['console'](),
        ))
        root_logger = logging.getLogger()
        root_logger.handlers = [handler]
        root_logger.setLevel(log_level)
    logging.getLogger('topocon').setLevel(log_level)
    return structlog.get_logger('topocon')
