from typing import Any, Dict

import structlog
from jinja2 import BaseLoader, Environment

from ..models.scenario import RunMetrics
from .benchmark_service import BatchResult

logger = structlog.get_logger(__name__)

BATCH_TEMPLATE = """\
# {{ name }}

| Méthode | N | tau_D | Exécutions | Échecs | Coût cumulé moyen | Écart-type | Temps de décision moyen (s) |
|---|---|---|---|---|---|---|---|
{% for row in rows %}
| {{ row.method }} | {{ row.n }} | {{ row.tau_D }} | {{ row.runs }} | {{ row.failures }} | {{ row.mean_cost | number }} | {{ row.std_cost | number }} | {{ row.mean_decision_time | seconds }} |
{% endfor %}
{% if comparisons %}

| Comparaison | Paires | Différence moyenne | IC 95 % | Établie |
|---|---|---|---|---|
{% for c in comparisons %}
| {{ c.better }} < {{ c.worse }} | {{ c.pairs }} | {{ c.mean_diff | number }} | [{{ c.ci_low | number }}, {{ c.ci_high | number }}] | {{ 'oui' if c.established else 'non' }} |
{% endfor %}
{% endif %}
{% if scaling %}

| Méthode | Exposant du temps de décision en N |
|---|---|
{% for method, slope in scaling.items() %}
| {{ method }} | {{ '%.2f' | format(slope) }} |
{% endfor %}
{% endif %}
{% if failures %}

Échecs :
{% for f in failures %}
- méthode {{ f.method }}, N={{ f.n }}, graine {{ f.seed }} : {{ f.error }}
{% endfor %}
{% endif %}
"""

RUN_TEMPLATE = """\
Scénario {{ scenario }} (méthode {{ method }}, graine {{ seed }}, N={{ n }}, tau_D={{ tau_D }})
  pas simulés            : {{ steps }}
  coût cumulé            : {{ cumulative_cost | number }}
  décisions              : {{ decisions }} ({{ committed_decisions }} validées, {{ skipped_decisions }} ignorées)
  décisions infaisables  : {{ infeasible_decisions }}
  replis d'estimation    : {{ estimation_fallbacks }}
  temps de décision moyen: {{ mean_decision_time | seconds }} s
  arêtes rompues (max)   : {{ max_broken_edges }}
  violations             : {{ violations }}
"""


class ReportService:
    """Rendu texte des synthèses (exécution isolée et benchmarks)."""

    def __init__(self):
        self.env = Environment(
            loader=BaseLoader(),
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True
        )
        self.env.filters['number'] = self._number
        self.env.filters['seconds'] = self._seconds

    def _number(self, value):
        if value is None or value != value:
            return '-'
        return f"{value:.1f}"

    def _seconds(self, value):
        if value is None or value != value:
            return '-'
        return f"{value:.4f}"

    def render(self, template_str: str, data: Dict[str, Any]) -> str:
        try:
            template = self.env.from_string(template_str)
            return template.render(**data)
        except Exception as e:
            logger.error("Erreur Jinja", error=str(e))
            raise

    def render_batch(self, result: BatchResult) -> str:
        return self.render(BATCH_TEMPLATE, {
            'name': result.name,
            'rows': result.rows,
            'comparisons': result.comparisons,
            'scaling': result.scaling,
            'failures': result.failures,
        })

    def render_run(self, metrics: RunMetrics) -> str:
        return self.render(RUN_TEMPLATE, metrics.summary())
