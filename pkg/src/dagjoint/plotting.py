'''
Static SVG plots of evaluation output: grouped metric bars with bootstrap
error bars, a per-scene minFDE scatter of the factorized model against the
baseline, and the training loss series.
'''

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.style as style  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

from .errors import MetricError  # noqa: E402

logger = logging.getLogger(__name__)

style.use('ggplot')

COLORS = ['#27ae60', '#e67e22', '#2c3e50', '#3498db', '#e74c3c', '#f1c40f', '#e056fd']
DISTANCE_METRICS = ['minFDE', 'minADE', 'iminFDE', 'iminADE']
RATE_METRICS = ['SMR', 'SCR', 'CrossCol', 'CMR']


def parse_summary(value):
    '''
    "mean +- std" -> (mean, 1.96 * std), the 95% error bar.
    '''
    try:
        mean, std = (float(x) for x in value.split('+-'))
    except (AttributeError, ValueError) as e:
        raise MetricError(f"not a 'mean +- std' summary: {value!r}") from e
    return mean, std * 1.96


def plot_metric_bars(summaries, metrics, out_path, title=None):
    '''
    summaries: {model name: {metric: "mean +- std"}}; one bar group per
    metric, one bar per model.
    '''
    models = list(summaries)
    values = pd.DataFrame({m: [parse_summary(summaries[m][x])[0] for x in metrics] for m in models}, index=metrics)
    errors = pd.DataFrame({m: [parse_summary(summaries[m][x])[1] for x in metrics] for m in models}, index=metrics)
    ax = values.plot(y=models, yerr=errors[models].values.T, kind="bar", figsize=(8, 6), fontsize=14,
                     color=COLORS[:len(models)], capsize=3)
    plt.xticks(rotation=360, ha='center')
    plt.legend(loc='center left', bbox_to_anchor=(1, 0.5))
    if title:
        ax.set_title(title)
    plt.savefig(out_path, bbox_inches='tight', format='svg')
    plt.close()
    return Path(out_path)


def plot_scene_scatter(per_scene, baseline_per_scene, out_path, metric='minFDE', names=('factorized', 'nonfactorized')):
    """Per-scene `metric` of the model against the baseline, with the y = x line."""
    merged = per_scene[['scene_id', metric]].merge(
        baseline_per_scene[['scene_id', metric]], on='scene_id', suffixes=('_model', '_baseline'),
    ).dropna()
    fig, ax = plt.subplots(figsize=(6, 6))
    sns.scatterplot(data=merged, x=f'{metric}_baseline', y=f'{metric}_model', ax=ax, color=COLORS[0], s=20)
    if len(merged):
        hi = float(max(merged[f'{metric}_baseline'].max(), merged[f'{metric}_model'].max()))
        ax.plot([0, hi], [0, hi], color='#2c3e50', linewidth=1)
    ax.set_xlabel(f'{names[1]} {metric} (m)')
    ax.set_ylabel(f'{names[0]} {metric} (m)')
    fig.savefig(out_path, bbox_inches='tight', format='svg')
    plt.close(fig)
    return Path(out_path)


def plot_loss(log, out_path):
    '''Mean training loss per epoch, one line per stage.'''
    fig, ax = plt.subplots(figsize=(8, 5))
    sns.lineplot(data=log, x='epoch', y='loss', hue='stage', marker='o', ax=ax, palette=COLORS[:log['stage'].nunique()])
    ax.set_yscale('log')
    fig.savefig(out_path, bbox_inches='tight', format='svg')
    plt.close(fig)
    return Path(out_path)


def emit_plots(doc, out_dir, log=None):
    '''
    doc: evaluation document {"reports": {name: MetricReport dict},
    "bootstrap": {name: {metric: "mean +- std"}}}. Returns the written paths.
    '''
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    bootstrap = doc.get('bootstrap') or {}
    if bootstrap:
        written.append(plot_metric_bars(bootstrap, DISTANCE_METRICS, out_dir / 'distance_metrics.svg', 'Displacement (m)'))
        written.append(plot_metric_bars(bootstrap, RATE_METRICS, out_dir / 'rate_metrics.svg', 'Rates'))
    reports = doc.get('reports') or {}
    names = list(reports)
    if len(names) >= 2 and all('per_scene' in reports[n] for n in names[:2]):
        written.append(plot_scene_scatter(
            pd.DataFrame(reports[names[0]]['per_scene']), pd.DataFrame(reports[names[1]]['per_scene']),
            out_dir / 'scene_minfde.svg', names=names[:2],
        ))
    if log is not None and len(log):
        written.append(plot_loss(log, out_dir / 'train_loss.svg'))
    for path in written:
        logger.info("wrote %s", path)
    return written
