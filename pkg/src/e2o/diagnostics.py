"""Post-hoc analysis and figure emission over run logs.

Every plot writes an SVG plus a companion CSV holding the exact plotted
numbers; re-plotting from the CSV reproduces the SVG byte-for-byte. Charts
cover normalized-return curves, average dataset Q-value tracking, and
policy-vs-dataset action-distance histograms; ``summarize`` condenses runs
into final score, maximum online drop, and area-under-curve.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .agent import action_distance
from .dataset import Dataset, load_dataset
from .errors import ConfigError
from .pipeline import read_runlog
from .svgplot import Series, histogram_series, render_line_chart

AGGREGATIONS = ("per_seed", "mean_std")
X_AXES = ("env_steps", "grad_steps")


@dataclass
class CurveBundle:
    runs: list  # (label, runlog path) pairs
    aggregation: str = "per_seed"
    x_axis: str = "env_steps"

    def __post_init__(self) -> None:
        if not self.runs:
            raise ConfigError("a curve bundle needs at least one run")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"unknown aggregation {self.aggregation!r}")
        if self.x_axis not in X_AXES:
            raise ConfigError(f"unknown x_axis {self.x_axis!r}")


def global_steps(log: dict) -> np.ndarray:
    """Concatenate phases on one axis: online steps continue after the last
    offline step."""
    steps = log["step"].astype(np.float64).copy()
    offline = log["phase"] == "offline"
    if offline.any() and (~offline).any():
        steps[~offline] += steps[offline].max()
    return steps


def runlog_metrics(log: dict) -> dict:
    """Final score, max online drop from the offline-final score, and AUC of
    the online normalized-score curve (anchored at the handoff score)."""
    offline = log["phase"] == "offline"
    online = ~offline
    scores = log["normalized_score"]
    out = {
        "offline_final": float(scores[offline][-1]) if offline.any() else None,
        "online_final": float(scores[online][-1]) if online.any() else None,
        "final": float(scores[-1]) if len(scores) else None,
        "max_drop": 0.0,
        "auc": 0.0,
    }
    if online.any():
        on_scores = scores[online]
        on_steps = log["step"][online].astype(np.float64)
        baseline = out["offline_final"] if out["offline_final"] is not None else float(on_scores[0])
        out["max_drop"] = max(0.0, baseline - float(on_scores.min()))
        if out["offline_final"] is not None:
            xs = np.concatenate([[0.0], on_steps])
            ys = np.concatenate([[baseline], on_scores])
        else:
            xs, ys = on_steps, on_scores
        out["auc"] = float(np.trapezoid(ys, xs))
    return out


# --- curve extraction -----------------------------------------------------------


def _load_runs(bundle: CurveBundle, metric: str):
    out = []
    for label, path in bundle.runs:
        log = read_runlog(path)
        if metric not in log:
            raise ConfigError(f"run {path}: missing metric {metric!r}")
        out.append((str(label), str(path), global_steps(log), log[metric]))
    return out


def _grouped_rows(bundle: CurveBundle, metric: str):
    """Plot rows: per_seed -> (label, step, value); mean_std -> (label, step, mean, std)."""
    runs = _load_runs(bundle, metric)
    if bundle.aggregation == "per_seed":
        seen: dict = {}
        rows = []
        for label, _, steps, values in runs:
            seen[label] = seen.get(label, 0) + 1
            name = label if seen[label] == 1 else f"{label}#{seen[label]}"
            rows.extend((name, float(s), float(v)) for s, v in zip(steps, values))
        return ("label", "step", "value"), rows
    groups: dict = {}
    order = []
    for label, path, steps, values in runs:
        if label not in groups:
            groups[label] = (path, steps, [])
            order.append(label)
        ref_path, ref_steps, stack = groups[label]
        if steps.shape != ref_steps.shape or not np.array_equal(steps, ref_steps):
            raise ConfigError(
                f"run {path}: eval steps do not align with {ref_path} for label {label!r}"
            )
        stack.append(values)
    rows = []
    for label in order:
        _, steps, stack = groups[label]
        arr = np.stack(stack)
        mean, std = arr.mean(axis=0), arr.std(axis=0)
        rows.extend(
            (label, float(s), float(m), float(d)) for s, m, d in zip(steps, mean, std)
        )
    return ("label", "step", "mean", "std"), rows


def _series_from_rows(columns, rows) -> list[Series]:
    order = []
    by_label: dict = {}
    for row in rows:
        label = row[0]
        if label not in by_label:
            by_label[label] = []
            order.append(label)
        by_label[label].append(row[1:])
    out = []
    banded = len(columns) == 4
    for label in order:
        arr = np.array(by_label[label], dtype=np.float64)
        if banded:
            out.append(Series(label, arr[:, 0], arr[:, 1],
                              arr[:, 1] - arr[:, 2], arr[:, 1] + arr[:, 2]))
        else:
            out.append(Series(label, arr[:, 0], arr[:, 1]))
    return out


def _write_curve_csv(path, meta: dict, columns, rows) -> None:
    lines = ["# " + json.dumps(meta, sort_keys=True), ",".join(columns)]
    for row in rows:
        lines.append(",".join([row[0]] + [repr(float(v)) for v in row[1:]]))
    Path(path).write_text("\n".join(lines) + "\n")


def _read_curve_csv(path):
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ConfigError(f"{path}: not a plot CSV (missing metadata line)")
    meta = json.loads(lines[0][2:])
    columns = tuple(lines[1].split(","))
    rows = []
    for line in lines[2:]:
        if not line or line.startswith("#"):
            continue
        cells = line.split(",")
        rows.append((cells[0], *[float(c) for c in cells[1:]]))
    return meta, columns, rows


def _chart_paths(out_path):
    out_path = Path(out_path)
    return out_path.with_suffix(".svg"), out_path.with_suffix(".csv")


def _emit_chart(out_path, meta: dict, columns, rows) -> tuple[Path, Path]:
    svg_path, csv_path = _chart_paths(out_path)
    _write_curve_csv(csv_path, meta, columns, rows)
    svg = render_line_chart(
        _series_from_rows(columns, rows), meta["title"], meta["x_label"], meta["y_label"]
    )
    svg_path.write_text(svg)
    return svg_path, csv_path


def replot_from_csv(csv_path, out_svg) -> Path:
    """Re-render a chart from its companion CSV; byte-identical to the original."""
    meta, columns, rows = _read_curve_csv(csv_path)
    if meta.get("chart") == "actdist":
        series = [
            histogram_series(label, np.array([r[2] for r in rows if r[0] == label]),
                             _edges_from_rows(rows, label))
            for label in dict.fromkeys(r[0] for r in rows)
        ]
        svg = render_line_chart(series, meta["title"], meta["x_label"], meta["y_label"])
    else:
        svg = render_line_chart(
            _series_from_rows(columns, rows), meta["title"], meta["x_label"], meta["y_label"]
        )
    out_svg = Path(out_svg)
    out_svg.write_text(svg)
    return out_svg


def _edges_from_rows(rows, label) -> np.ndarray:
    lefts = [r[1] for r in rows if r[0] == label]
    rights = [r[2] for r in rows if r[0] == label]
    return np.array(lefts + rights[-1:])


def plot_returns(bundle: CurveBundle, out_path) -> tuple[Path, Path]:
    """Normalized-return curves (mean with ±1 std shading under mean_std)."""
    columns, rows = _grouped_rows(bundle, "normalized_score")
    meta = {
        "chart": "returns",
        "title": "Normalized return",
        "x_label": "env steps" if bundle.x_axis == "env_steps" else "gradient steps",
        "y_label": "normalized score",
        "aggregation": bundle.aggregation,
    }
    return _emit_chart(out_path, meta, columns, rows)


def plot_avg_q(bundle: CurveBundle, out_path, dataset: Dataset | None = None) -> tuple[Path, Path]:
    """Average ensemble Q over the seeded dataset subsample, per eval point."""
    columns, rows = _grouped_rows(bundle, "avg_q_on_dataset")
    meta = {
        "chart": "avgq",
        "title": "Average Q-value on dataset",
        "x_label": "env steps" if bundle.x_axis == "env_steps" else "gradient steps",
        "y_label": "average Q",
        "aggregation": bundle.aggregation,
    }
    return _emit_chart(out_path, meta, columns, rows)


def plot_action_distance(checkpoint_paths, dataset_path, out_path, labels=None,
                         sample_size: int = 20_000, seed: int = 0) -> tuple[Path, Path]:
    """Overlaid histograms of squared policy-vs-dataset action distances for
    each checkpoint plus a uniform-random reference policy."""
    ds = load_dataset(dataset_path)
    act_dim = ds.records.actions.shape[1]
    if labels is None:
        labels = [Path(p).stem for p in checkpoint_paths]
    if len(labels) != len(checkpoint_paths):
        raise ConfigError("labels and checkpoints must have equal length")
    entries = []
    for label, path in zip(labels, checkpoint_paths):
        agent, env_id = ckpt.load_checkpoint(path)
        if env_id != ds.header.env_id:
            raise ConfigError(
                f"checkpoint {path} is for env {env_id!r}, dataset is {ds.header.env_id!r}"
            )
        rng = np.random.default_rng(seed)
        mean_sq, (counts, edges) = action_distance(agent.policy, ds, sample_size, rng)
        entries.append((str(label), mean_sq, counts, edges))
    rng = np.random.default_rng(seed)
    mean_sq, (counts, edges) = action_distance(None, ds, sample_size, rng)
    entries.append(("uniform-random", mean_sq, counts, edges))

    edges = entries[0][3]
    columns = ("label", "bin_left", "bin_right", "density")
    rows = []
    for label, _, counts, _ in entries:
        dens = counts / sample_size
        rows.extend(
            (label, float(edges[i]), float(edges[i + 1]), float(dens[i]))
            for i in range(len(counts))
        )
    meta = {
        "chart": "actdist",
        "title": "Squared action distance to dataset",
        "x_label": "squared distance",
        "y_label": "fraction of samples",
        "bin_edges": [float(e) for e in edges],
        "mean_sq_dist": {label: m for label, m, _, _ in entries},
        "sample_size": sample_size,
    }
    svg_path, csv_path = _chart_paths(out_path)
    _write_curve_csv(csv_path, meta, columns, rows)
    series = [histogram_series(label, counts / sample_size, edges)
              for label, _, counts, _ in entries]
    svg_path.write_text(render_line_chart(series, meta["title"], meta["x_label"], meta["y_label"]))
    return svg_path, csv_path


# --- summary table ----------------------------------------------------------------


@dataclass
class SummaryRow:
    label: str
    final_mean: float
    final_std: float
    max_drop_mean: float
    auc_mean: float
    n_runs: int


def summarize(bundle: CurveBundle) -> list[SummaryRow]:
    groups: dict = {}
    order = []
    for label, path in bundle.runs:
        metrics = runlog_metrics(read_runlog(path))
        if label not in groups:
            groups[label] = []
            order.append(label)
        groups[label].append(metrics)
    rows = []
    for label in order:
        ms = groups[label]
        finals = np.array([m["final"] for m in ms], dtype=np.float64)
        rows.append(
            SummaryRow(
                label=str(label),
                final_mean=float(finals.mean()),
                final_std=float(finals.std()),
                max_drop_mean=float(np.mean([m["max_drop"] for m in ms])),
                auc_mean=float(np.mean([m["auc"] for m in ms])),
                n_runs=len(ms),
            )
        )
    return rows


def summary_csv(rows: list[SummaryRow]) -> str:
    lines = ["label,n_runs,final_mean,final_std,max_drop_mean,auc_mean"]
    for r in rows:
        lines.append(
            f"{r.label},{r.n_runs},{r.final_mean!r},{r.final_std!r},"
            f"{r.max_drop_mean!r},{r.auc_mean!r}"
        )
    return "\n".join(lines) + "\n"


def summary_text(rows: list[SummaryRow]) -> str:
    header = f"{'label':<24} {'runs':>4} {'final':>16} {'max drop':>9} {'AUC':>14}"
    lines = [header, "-" * len(header)]
    for r in rows:
        final = f"{r.final_mean:.2f} ± {r.final_std:.2f}"
        lines.append(
            f"{r.label:<24} {r.n_runs:>4} {final:>16} {r.max_drop_mean:>9.2f} {r.auc_mean:>14.1f}"
        )
    return "\n".join(lines) + "\n"
