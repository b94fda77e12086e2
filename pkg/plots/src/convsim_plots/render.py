"""Render figure panels from simulation summary tables.

Reads summary.csv (columns: sim, regime, trial, mean, ci_low, ci_high,
metric) produced by the simulator CLI and draws one row per pooling
regime: the per-trial mean as a line with the bootstrap CI as a shaded
band, plus vertical rules at partner boundaries. Output is a PNG at a
fixed 200 DPI. Rendering never writes anything except the output image.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

SUMMARY_COLUMNS = ["sim", "regime", "trial", "mean", "ci_low", "ci_high", "metric"]
REGIME_ORDER = ("partial", "complete", "none")

PANEL_METRICS = {
    "accuracy": ("listener_target_prob",),
    "length": ("utterance_length",),
    "convergence": ("alignment_within", "alignment_across"),
}
PANEL_YLABEL = {
    "accuracy": "P(target)",
    "length": "expected utterance length",
    "convergence": "alignment",
}
DPI = 200


class SchemaError(RuntimeError):
    """summary.csv does not have the expected shape."""


@dataclass(frozen=True)
class FigureSpec:
    input_dir: Path
    panel: str
    output: Path
    regimes: tuple[str, ...] = REGIME_ORDER

    def __post_init__(self):
        object.__setattr__(self, "input_dir", Path(self.input_dir))
        object.__setattr__(self, "output", Path(self.output))
        if self.panel not in PANEL_METRICS:
            raise ValueError(f"unknown panel {self.panel!r}; "
                             f"choose from {sorted(PANEL_METRICS)}")
        if not self.regimes:
            raise ValueError("regimes filter is empty")


def load_summary(input_dir: Path) -> pd.DataFrame:
    path = Path(input_dir) / "summary.csv"
    if not path.exists():
        raise SchemaError(f"missing {path}")
    frame = pd.read_csv(path)
    for column in SUMMARY_COLUMNS:
        if column not in frame.columns:
            raise SchemaError(f"summary.csv is missing column {column!r}")
    return frame


def partner_boundaries(input_dir: Path, trials: list[int]) -> list[float]:
    """Boundary positions between partners, from the run manifest when
    available (trials-per-partner cadence), defaulting to 4."""
    cadence = 4
    manifest = Path(input_dir) / "manifest.json"
    if manifest.exists():
        try:
            cadence = int(json.loads(manifest.read_text()).get("trials_per_partner", 4))
        except (ValueError, json.JSONDecodeError):
            cadence = 4
    last = max(trials)
    return [b + 0.5 for b in range(cadence, last, cadence)]


def render(spec: FigureSpec):
    """Draw the requested panel and write it to spec.output.

    Returns the matplotlib Figure (axes/lines are inspectable, e.g. for
    structural tests).
    """
    frame = load_summary(spec.input_dir)
    metrics = PANEL_METRICS[spec.panel]
    data = frame[frame["metric"].isin(metrics)]
    if data.empty:
        raise SchemaError(f"summary.csv has no rows for metrics {metrics}")
    regimes = [r for r in spec.regimes if r in set(data["regime"])]
    if not regimes:
        raise SchemaError(f"no rows for regimes {spec.regimes}")

    fig, axes = plt.subplots(len(regimes), 1, sharex=True, sharey=True,
                             figsize=(6.0, 2.2 * len(regimes)), squeeze=False)
    if spec.panel == "convergence":
        boundaries = None  # block axis: rules between consecutive blocks
    else:
        boundaries = partner_boundaries(spec.input_dir,
                                        data["trial"].astype(int).tolist())
    for ax, regime in zip(axes[:, 0], regimes):
        rows = data[data["regime"] == regime]
        for metric in metrics:
            series = rows[rows["metric"] == metric].sort_values("trial")
            label = metric.replace("alignment_", "") if len(metrics) > 1 else None
            ax.plot(series["trial"], series["mean"], marker="o", markersize=3,
                    label=label)
            ax.fill_between(series["trial"], series["ci_low"], series["ci_high"],
                            alpha=0.25)
        xs = boundaries
        if xs is None:
            blocks = sorted(set(rows["trial"].astype(int)))
            xs = [b + 0.5 for b in blocks[:-1]]
        for x in xs:
            ax.axvline(x, color="0.6", linestyle=":", linewidth=1.0)
        ax.set_ylabel(PANEL_YLABEL[spec.panel])
        ax.set_title(regime, loc="left", fontsize=10)
        if len(metrics) > 1:
            ax.legend(fontsize=8, loc="lower right")
    axes[-1, 0].set_xlabel("block" if spec.panel == "convergence" else "trial")
    fig.tight_layout()
    fig.savefig(spec.output, dpi=DPI)
    return fig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="render", description="Render a figure panel from summary.csv.")
    parser.add_argument("--in", dest="input_dir", required=True,
                        help="directory with summary.csv")
    parser.add_argument("--panel", required=True, choices=sorted(PANEL_METRICS))
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--regimes", default=",".join(REGIME_ORDER),
                        help="comma-separated regime filter")
    args = parser.parse_args(argv)
    regimes = tuple(r for r in args.regimes.split(",") if r)
    try:
        spec = FigureSpec(Path(args.input_dir), args.panel, Path(args.out), regimes)
        fig = render(spec)
        plt.close(fig)
    except (SchemaError, ValueError, OSError) as e:
        print(f"render error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
