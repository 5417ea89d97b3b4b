"""Static report figures (PNG, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .dynamics import tire_curve, tire_preset  # noqa: E402
from .validity import DOMAINS, VARIABLES, ModelId  # noqa: E402

# Print-friendly style: white panels, dotted grid, compact sans labels
plt.rcParams.update({
    'figure.facecolor': 'white',
    'axes.facecolor': '#fafafa',
    'axes.edgecolor': '#4b5563',
    'axes.spines.top': False,
    'axes.spines.right': False,
    'axes.titlelocation': 'left',
    'grid.linestyle': ':',
    'grid.color': '#9ca3af',
    'lines.markeredgewidth': 0.0,
    'legend.frameon': False,
    'font.family': 'DejaVu Sans',
    'font.size': 10,
})

COLORS = {
    'dbm-linear': '#b91c1c',
    'dbm-dugoff': '#c2410c',
    'dbm-pacejka': '#1d4ed8',
    'fwm-pacejka': '#0f766e',
}
DOMAIN_COLORS = {'below_0.5g': '#93c5fd', 'above_0.5g': '#fca5a5'}
THRESHOLD_COLOR = '#111827'
MARKERS = {'dbm-linear': 'o', 'dbm-dugoff': 's', 'dbm-pacejka': '^', 'fwm-pacejka': 'D'}
UNITS = {'Vx': 'm/s', 'Vy': 'm/s', 'yaw_rate': 'rad/s'}


def _label(model: str) -> str:
    try:
        return ModelId(model).label
    except ValueError:
        return model


def _save(fig, out: Path) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout(pad=2)
    fig.savefig(out, dpi=150, bbox_inches='tight')
    plt.close(fig)
    return out


def plot_per_trajectory(per_traj: pd.DataFrame, threshold: float, title: str, out: Union[str, Path]) -> Path:
    """Per-trajectory MAE against realized a_y^max, one panel per variable."""
    fig, axes = plt.subplots(len(VARIABLES), 1, figsize=(12, 11), sharex=True)
    for ax, var in zip(axes, VARIABLES):
        sub = per_traj[per_traj['variable'] == var]
        for model, grp in sub.groupby('model', sort=False):
            grp = grp.sort_values('ay_max')
            ax.plot(grp['ay_max'], grp['mae'], marker=MARKERS.get(model, 'o'), markersize=5,
                    label=_label(model), color=COLORS.get(model), linewidth=1.5)
        ax.axvline(threshold, color=THRESHOLD_COLOR, linestyle='--', linewidth=1)
        ax.set_ylabel(f'MAE {var} [{UNITS[var]}]')
        ax.grid(True)
    axes[0].set_title(title, fontsize=16, fontweight='bold', pad=12)
    axes[0].legend(loc='upper left', fontsize=10)
    axes[-1].set_xlabel('max |a_y| of trajectory [m/s²]')
    return _save(fig, Path(out))


def plot_domain_bars(domain: pd.DataFrame, title: str, out: Union[str, Path]) -> Path:
    """Domain MAE bars per model, one panel per variable."""
    fig, axes = plt.subplots(1, len(VARIABLES), figsize=(15, 5))
    models = list(dict.fromkeys(domain['model']))
    x = np.arange(len(models))
    w = 0.35
    for ax, var in zip(axes, VARIABLES):
        sub = domain[domain['variable'] == var].set_index(['model', 'domain'])['mae']
        for j, dom in enumerate(DOMAINS):
            heights = [sub.get((m, dom), np.nan) for m in models]
            ax.bar(x + (j - 0.5) * w, heights, w, label=dom, alpha=0.85,
                   color=DOMAIN_COLORS.get(dom))
        ax.set_xticks(x)
        ax.set_xticklabels([_label(m) for m in models], rotation=20)
        ax.set_title(var, fontsize=14, fontweight='bold', pad=10)
        ax.set_ylabel(f'MAE [{UNITS[var]}]')
        ax.grid(True, axis='y')
    axes[0].legend(loc='upper left', fontsize=10)
    fig.suptitle(title, fontsize=16, fontweight='bold')
    return _save(fig, Path(out))


def plot_tire_curves(out: Union[str, Path], f_z: float = 3870.0) -> Path:
    """Lateral force of the three candidate tire laws over slip angle."""
    alphas = np.linspace(-0.25, 0.25, 201)
    fig, ax = plt.subplots(figsize=(10, 6))
    for name, color in (('linear', COLORS['dbm-linear']), ('dugoff', COLORS['dbm-dugoff']), ('pacejka', COLORS['dbm-pacejka'])):
        ax.plot(np.degrees(alphas), tire_curve(tire_preset(name), alphas, f_z), label=name.capitalize(),
                color=color, linewidth=2)
    ax.set_ylim(-2.0 * f_z, 2.0 * f_z)
    ax.set_title(f'Lateral tire force at F_z = {f_z:.0f} N', fontsize=16, fontweight='bold', pad=12)
    ax.set_xlabel('slip angle [deg]')
    ax.set_ylabel('F_yp [N]')
    ax.legend(loc='upper left', fontsize=10)
    ax.grid(True)
    return _save(fig, Path(out))


def render_report_figures(report_dir: Union[str, Path], consolidated: pd.DataFrame,
                          per_traj: pd.DataFrame, threshold: float) -> List[Path]:
    report_dir = Path(report_dir)
    written = []
    for source, grp in per_traj.groupby('source', sort=False):
        if len(grp):
            written.append(plot_per_trajectory(grp, threshold, f'{source}: per-trajectory MAE',
                                               report_dir / f'{source}_per_trajectory.png'))
    for source, grp in consolidated.groupby('source', sort=False):
        written.append(plot_domain_bars(grp, f'{source}: MAE by domain', report_dir / f'{source}_domains.png'))
    written.append(plot_tire_curves(report_dir / 'tire_curves.png'))
    return written
