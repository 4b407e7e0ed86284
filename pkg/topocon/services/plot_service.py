import csv
import json
import os
from contextlib import contextmanager
from typing import Dict

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import networkx as nx  # noqa: E402
import structlog  # noqa: E402
import yaml  # noqa: E402

from ..exceptions import OutputWriteError  # noqa: E402
from ..models.scenario import RunMetrics  # noqa: E402

logger = structlog.get_logger(__name__)

STEP_FIELDS = ['step', 't', 'edges', 'realized', 'stressed', 'broken', 'cost', 'cumulative_cost']


@contextmanager
def _guard(path: str):
    """Toute erreur d'E/S devient OutputWriteError avec le chemin."""
    try:
        yield
    except (OSError, ValueError) as e:
        logger.error("Erreur d'écriture", path=path, error=str(e))
        raise OutputWriteError(path, e) from e


def write_steps_csv(metrics: RunMetrics, path: str) -> str:
    with _guard(path), open(path, 'w', newline='', encoding='utf8') as fh:
        writer = csv.DictWriter(fh, fieldnames=STEP_FIELDS)
        writer.writeheader()
        for sample in metrics.steps:
            writer.writerow({name: getattr(sample, name) for name in STEP_FIELDS})
    return path


def write_snapshot_csv(metrics: RunMetrics, path: str) -> str:
    snapshot = metrics.snapshot
    with _guard(path), open(path, 'w', newline='', encoding='utf8') as fh:
        writer = csv.writer(fh)
        dim = snapshot.positions.shape[1] if snapshot is not None else 0
        writer.writerow(['node'] + [f"x{k}" for k in range(dim)] + ['radius', 'central'])
        if snapshot is not None:
            for k in range(snapshot.node_count):
                node = k + 1
                writer.writerow([node] + [float(c) for c in snapshot.positions[k]]
                                + [snapshot.region_radii.get(node, 0.0), int(node == snapshot.central)])
    return path


def write_decisions(metrics: RunMetrics, path: str) -> str:
    with _guard(path), open(path, 'w', encoding='utf8') as fh:
        for record in metrics.decisions:
            fh.write(json.dumps(record.to_dict()) + '\n')
    return path


def write_messages(metrics: RunMetrics, path: str) -> str:
    with _guard(path), open(path, 'w', encoding='utf8') as fh:
        for entry in metrics.messages:
            fh.write(json.dumps(entry) + '\n')
    return path


def write_summary(metrics: RunMetrics, path: str) -> str:
    with _guard(path), open(path, 'w', encoding='utf8') as fh:
        yaml.safe_dump(metrics.summary(), fh, sort_keys=False)
    return path


def plot_traces(metrics: RunMetrics, path: str) -> str:
    """|E|, |E_r| et |E_s| au cours du temps, avec la ligne de seuil éventuelle."""
    t = [s.t for s in metrics.steps]
    fig, ax = plt.subplots(figsize=(8, 4))
    try:
        ax.plot(t, [s.edges for s in metrics.steps], label='|E| (validé)')
        ax.plot(t, [s.realized for s in metrics.steps], label='|E_r| (réalisé)', alpha=0.8)
        ax.plot(t, [s.stressed for s in metrics.steps], label='|E_s| (coûteuses)')
        if metrics.stressed_threshold is not None:
            ax.axhline(metrics.stressed_threshold, color='red', linestyle=':', label='seuil')
        ax.set_xlabel('t (s)')
        ax.set_ylabel("nombre d'arêtes")
        ax.set_title(f"Méthode {metrics.method}, N={metrics.n}, graine {metrics.seed}")
        ax.legend(loc='upper right')
        with _guard(path):
            fig.savefig(path, dpi=120, bbox_inches='tight')
    finally:
        plt.close(fig)
    return path


def plot_topology(metrics: RunMetrics, path: str) -> str:
    """Topologie finale : noeud central en étoile, cercles d'incertitude par noeud."""
    snapshot = metrics.snapshot
    fig, ax = plt.subplots(figsize=(6, 6))
    try:
        if snapshot is not None and snapshot.node_count:
            graph = nx.Graph()
            graph.add_nodes_from(range(1, snapshot.node_count + 1))
            graph.add_edges_from(tuple(e) for e in snapshot.edges)
            layout = {k + 1: tuple(snapshot.positions[k][:2]) for k in range(snapshot.node_count)}
            for node, radius in snapshot.region_radii.items():
                if radius > 0:
                    ax.add_patch(plt.Circle(layout[node], radius, fill=False, alpha=0.3, color='grey'))
            nx.draw_networkx_edges(graph, layout, ax=ax, alpha=0.6)
            nx.draw_networkx_nodes(graph, layout, ax=ax, node_size=60)
            nx.draw_networkx_labels(graph, layout, ax=ax, font_size=7)
            if snapshot.central is not None:
                x, y = layout[snapshot.central]
                ax.scatter([x], [y], marker='*', s=300, color='orange', zorder=5, label='noeud central')
                ax.legend(loc='upper right')
            ax.set_aspect('equal')
        ax.set_title(f"Topologie finale, méthode {metrics.method}")
        with _guard(path):
            fig.savefig(path, dpi=120, bbox_inches='tight')
    finally:
        plt.close(fig)
    return path


def emit_plots(metrics: RunMetrics, out_dir: str) -> Dict[str, str]:
    """Écrit les données (CSV, NDJSON, YAML) puis les figures ; renvoie les chemins par type."""
    with _guard(out_dir):
        os.makedirs(out_dir, exist_ok=True)
    paths = {
        'steps': write_steps_csv(metrics, os.path.join(out_dir, 'steps.csv')),
        'snapshot': write_snapshot_csv(metrics, os.path.join(out_dir, 'snapshot.csv')),
        'decisions': write_decisions(metrics, os.path.join(out_dir, 'decisions.ndjson')),
        'summary': write_summary(metrics, os.path.join(out_dir, 'summary.yaml')),
        'traces': plot_traces(metrics, os.path.join(out_dir, 'traces.png')),
        'topology': plot_topology(metrics, os.path.join(out_dir, 'topology.png')),
    }
    if metrics.messages:
        paths['messages'] = write_messages(metrics, os.path.join(out_dir, 'messages.ndjson'))
    logger.info("Sorties écrites", out_dir=out_dir, files=len(paths))
    return paths
