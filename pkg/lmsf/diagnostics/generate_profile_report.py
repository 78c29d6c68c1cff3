import logging
from pathlib import Path
from typing import List, Optional, Union

import plotly.graph_objects as go
import plotly.io as pio
from jinja2 import Template
from plotly.subplots import make_subplots

from lmsf.diagnostics.profile_model import AblationRow, ProfileReport

logger = logging.getLogger(__name__)

REPORT_TEMPLATE = Template(
    """<!DOCTYPE html>
<html>
<head><meta charset="utf-8"><title>LMSF profile</title></head>
<body>
<h1>Model complexity @ {{ report.input_size }}x{{ report.input_size }} ({{ report.form }} form)</h1>
<p>{{ report.total_parameter_count | int }} parameters, {{ "%.3f" | format(report.total_flop_count / 1e9) }} GFLOPs
({{ report.flop_convention }})</p>
{{ module_figure }}
{% if ablation_figure %}<h2>Ablation</h2>
{{ ablation_figure }}{% endif %}
<table border="1" cellpadding="4">
<tr><th>module</th><th>parameters</th><th>GFLOPs</th></tr>
{% for module in report.modules %}<tr><td>{{ module.name }}</td><td>{{ module.parameter_count }}</td>
<td>{{ "%.4f" | format(module.flop_count / 1e9) }}</td></tr>
{% endfor %}</table>
</body>
</html>
"""
)


def generate_module_figure(report: ProfileReport) -> go.Figure:
    names = [module.name for module in report.modules]
    figure = make_subplots(rows=1, cols=2, subplot_titles=["Parameters (M)", "GFLOPs"], horizontal_spacing=0.12)
    figure.add_trace(
        go.Bar(x=names, y=[module.parameter_count / 1e6 for module in report.modules], showlegend=False),
        row=1,
        col=1,
    )
    figure.add_trace(
        go.Bar(x=names, y=[module.flop_count / 1e9 for module in report.modules], showlegend=False),
        row=1,
        col=2,
    )
    figure.update_layout(title="Per-module complexity", height=450, title_font=dict(size=20))
    return figure


def generate_ablation_figure(ablation_rows: List[AblationRow]) -> go.Figure:
    names = [row.name for row in ablation_rows]
    figure = go.Figure()
    figure.add_trace(go.Bar(x=names, y=[row.parameter_delta / 1e3 for row in ablation_rows], name="Δ params (K)"))
    figure.add_trace(go.Bar(x=names, y=[row.flop_delta / 1e6 for row in ablation_rows], name="Δ MFLOPs"))
    figure.update_layout(barmode="group", title="Complexity delta against the deploy-form default", height=450)
    return figure


def generate_profile_html_report(
    report: ProfileReport,
    output_path: Union[str, Path],
    ablation_rows: Optional[List[AblationRow]] = None,
) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    module_figure = pio.to_html(generate_module_figure(report), full_html=False, include_plotlyjs="cdn")
    ablation_figure = (
        pio.to_html(generate_ablation_figure(ablation_rows), full_html=False, include_plotlyjs=False)
        if ablation_rows
        else ""
    )
    output_path.write_text(
        REPORT_TEMPLATE.render(report=report, module_figure=module_figure, ablation_figure=ablation_figure),
        encoding="utf-8",
    )
    logger.info(f"Wrote profile report to {output_path}")
    return output_path
