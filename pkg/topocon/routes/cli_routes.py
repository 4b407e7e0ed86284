import csv
import os
import uuid

import click
import structlog
import yaml

from ..exceptions import InvariantViolationError, OutputWriteError, ScenarioError
from ..models.decision import MethodTag
from ..services import benchmark_service, plot_service, scenario_service, simulation_service
from ..services.report_service import ReportService

logger = structlog.get_logger(__name__)

EXIT_SCENARIO_ERROR = 1
EXIT_INVARIANT_VIOLATION = 2

METHOD_CHOICE = click.Choice([m.value for m in MethodTag], case_sensitive=False)


def scenario_options(func):
    """Surcharges communes aux sous-commandes."""
    options = [
        click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False),
                     help="Fichier YAML de scénario (ou de benchmark)."),
        click.option('--seed', type=click.IntRange(min=0), help="Graine racine."),
        click.option('--nodes', type=click.IntRange(min=1), help="Nombre de robots N."),
        click.option('--tau-d', 'tau_d', type=click.IntRange(min=1), help="Borne de diamètre."),
        click.option('--steps', type=click.IntRange(min=0), help="Nombre de pas simulés."),
        click.option('--out-dir', type=click.Path(file_okay=False), help="Répertoire de sortie."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _load(ctx, config_file, **overrides):
    path = config_file or ctx.obj['config'].DEFAULT_SCENARIO
    scenario = scenario_service.load_scenario(path)
    return scenario.with_overrides(seed=overrides.get('seed'), n=overrides.get('nodes'),
                                   tau_D=overrides.get('tau_d'), steps=overrides.get('steps'),
                                   method=overrides.get('method'))


def _out_dir(ctx, out_dir, label):
    return out_dir or os.path.join(ctx.obj['config'].OUTPUT_DIR, label)


def _fail(message, code, **context):
    logger.error(message, **context)
    click.echo(f"Erreur: {message}", err=True)
    raise SystemExit(code)


def _write_runs_csv(result, path):
    fields = sorted({k for run in result.runs for k in run})
    try:
        with open(path, 'w', newline='', encoding='utf8') as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(result.runs)
    except OSError as e:
        logger.error("Erreur d'écriture", path=path, error=str(e))
        raise OutputWriteError(path, e)


def _write_text(path, text):
    try:
        with open(path, 'w', encoding='utf8') as fh:
            fh.write(text)
    except OSError as e:
        logger.error("Erreur d'écriture", path=path, error=str(e))
        raise OutputWriteError(path, e)


def _emit_batch(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    table = ReportService().render_batch(result)
    _write_text(os.path.join(out_dir, 'summary.md'), table)
    _write_runs_csv(result, os.path.join(out_dir, 'runs.csv'))
    click.echo(table)
    violations = [r for r in result.runs if r.get('failed') and 'InvariantViolationError' in r['error']]
    violations += [r for r in result.runs if not r.get('failed') and r.get('violations')]
    if violations:
        _fail(f"{len(violations)} exécution(s) avec violation d'invariant", EXIT_INVARIANT_VIOLATION,
              out_dir=out_dir)


@click.command('run')
@scenario_options
@click.option('--method', type=METHOD_CHOICE, help="Méthode A, B, C ou D.")
@click.option('--no-plots', is_flag=True, help="N'écrit que les fichiers de données.")
@click.pass_context
def run_command(ctx, config_file, seed, nodes, tau_d, steps, out_dir, method, no_plots):
    """Exécute un scénario et écrit métriques et figures."""
    run_id = str(uuid.uuid4())[:8]
    log = logger.bind(run_id=run_id)
    try:
        scenario = _load(ctx, config_file, seed=seed, nodes=nodes, tau_d=tau_d, steps=steps,
                         method=MethodTag(method.upper()) if method else None)
    except ScenarioError as e:
        _fail(str(e), EXIT_SCENARIO_ERROR, details=e.details)
    target = _out_dir(ctx, out_dir, f"run-{scenario.method.value}-{scenario.seed}")
    log.info("Exécution d'un scénario", scenario=scenario.name, method=scenario.method.value,
             seed=scenario.seed, out_dir=target)
    try:
        metrics = simulation_service.run(scenario)
    except InvariantViolationError as e:
        os.makedirs(target, exist_ok=True)
        _write_text(os.path.join(target, 'violation.yaml'),
                    yaml.safe_dump({'error': str(e), 'diagnostic': e.diagnostic}, sort_keys=False))
        _fail(f"violation d'invariant: {e}", EXIT_INVARIANT_VIOLATION, out_dir=target)
    except ScenarioError as e:
        _fail(str(e), EXIT_SCENARIO_ERROR, details=e.details)
    if no_plots:
        os.makedirs(target, exist_ok=True)
        plot_service.write_steps_csv(metrics, os.path.join(target, 'steps.csv'))
        plot_service.write_decisions(metrics, os.path.join(target, 'decisions.ndjson'))
        plot_service.write_summary(metrics, os.path.join(target, 'summary.yaml'))
    else:
        plot_service.emit_plots(metrics, target)
    click.echo(ReportService().render_run(metrics))


@click.command('batch')
@scenario_options
@click.option('--preset', type=click.Choice(['table1', 'table2', 'table3']),
              help="Matrice prédéfinie (à la place de --config).")
@click.option('--repetitions', type=click.IntRange(min=1), help="Répétitions par cellule.")
@click.option('--workers', type=click.IntRange(min=1), help="Processus parallèles.")
@click.pass_context
def batch_command(ctx, config_file, seed, nodes, tau_d, steps, out_dir, preset, repetitions, workers):
    """Exécute une matrice de benchmark (méthodes x N x tau_D x répétitions)."""
    try:
        source = scenario_service.preset_path(preset) if preset else (
            config_file or ctx.obj['config'].DEFAULT_SCENARIO)
        spec = scenario_service.load_batch(source)
    except ScenarioError as e:
        _fail(str(e), EXIT_SCENARIO_ERROR, details=e.details)
    if seed is not None:
        spec['seed'] = seed
    if steps is not None:
        spec['steps'] = steps
    if nodes is not None:
        spec['nodes'] = [nodes]
    if tau_d is not None:
        spec['tau_D'] = [tau_d]
    if repetitions is not None:
        spec['repetitions'] = repetitions
    result = benchmark_service.run_matrix(spec, workers or ctx.obj['config'].BATCH_WORKERS)
    _emit_batch(result, _out_dir(ctx, out_dir, f"batch-{spec['name']}"))


@click.command('compare')
@scenario_options
@click.option('--methods', default='A,B,C,D', show_default=True, help="Méthodes séparées par des virgules.")
@click.option('--repetitions', type=click.IntRange(min=1), default=10, show_default=True)
@click.option('--workers', type=click.IntRange(min=1), help="Processus parallèles.")
@click.pass_context
def compare_command(ctx, config_file, seed, nodes, tau_d, steps, out_dir, methods, repetitions, workers):
    """Compare des méthodes sur les mêmes graines."""
    try:
        scenario = _load(ctx, config_file, seed=seed, nodes=nodes, tau_d=tau_d, steps=steps)
        tags = [MethodTag(m.strip().upper()) for m in methods.split(',') if m.strip()]
    except ScenarioError as e:
        _fail(str(e), EXIT_SCENARIO_ERROR, details=e.details)
    except ValueError as e:
        _fail(f"méthode inconnue: {e}", EXIT_SCENARIO_ERROR)
    result = benchmark_service.compare(scenario, [t.value for t in tags], repetitions,
                                       workers or ctx.obj['config'].BATCH_WORKERS)
    _emit_batch(result, _out_dir(ctx, out_dir, f"compare-{scenario.name}"))


commands = [run_command, batch_command, compare_command]
