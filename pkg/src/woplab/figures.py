"""Figure rendering for the report command.

Consumes the CSV artifacts emitted by evaluate/ablate/train/verify-solver and
renders PNG figures next to them. Purely a presentation layer: every number
shown here lives in a CSV first.
"""

from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

SPLIT_LABELS = {
    "val": "Validation",
    "id_test": "ID",
    "ood_freq": "OOD-frequency",
    "ood_smooth": "OOD-smoothness",
}
MODEL_COLORS = {"fno": "#1f77b4", "deeponet": "#d62728"}

plt.rcParams.update(
    {
        "figure.dpi": 150,
        "font.size": 9,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "legend.frameon": False,
    }
)


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, bbox_inches="tight")
        os.replace(tmp, path)
    finally:
        plt.close(fig)
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def plot_metrics_bars(metrics_csv: Path, out_path: Path) -> Path:
    rows = _read_csv(metrics_csv)
    models = sorted({r["model"] for r in rows})
    splits = [s for s in SPLIT_LABELS if any(r["split"] == s for r in rows)]
    fig, ax = plt.subplots(figsize=(5.2, 3.2))
    width = 0.8 / max(len(models), 1)
    for mi, model in enumerate(models):
        means = []
        stds = []
        for split in splits:
            row = next(r for r in rows if r["model"] == model and r["split"] == split)
            means.append(float(row["mean"]))
            stds.append(float(row["std"]))
        xs = [i + mi * width for i in range(len(splits))]
        ax.bar(
            xs,
            means,
            width=width,
            yerr=stds,
            capsize=2,
            label=model.upper() if model == "fno" else "DeepONet",
            color=MODEL_COLORS.get(model),
        )
    ax.set_xticks([i + width * (len(models) - 1) / 2 for i in range(len(splits))])
    ax.set_xticklabels([SPLIT_LABELS[s] for s in splits])
    ax.set_ylabel("relative $L_2$ error")
    ax.legend()
    return _save(fig, out_path)


def plot_modal_curves(curve_csvs: dict[tuple[str, str], Path], out_path: Path) -> Path:
    """One panel per split with one line per model; log-scale modal MSE."""
    splits = [s for s in SPLIT_LABELS if any(k[0] == s for k in curve_csvs)]
    fig, axes = plt.subplots(1, len(splits), figsize=(2.8 * len(splits), 2.8), sharey=True)
    if len(splits) == 1:
        axes = [axes]
    for ax, split in zip(axes, splits):
        for (s, model), path in sorted(curve_csvs.items()):
            if s != split:
                continue
            rows = _read_csv(path)
            modes = [int(r["mode"]) for r in rows]
            mse = [float(r["mse"]) for r in rows]
            ax.semilogy(
                modes,
                mse,
                marker=".",
                markersize=3,
                label=model.upper() if model == "fno" else "DeepONet",
                color=MODEL_COLORS.get(model),
            )
        ax.set_title(SPLIT_LABELS[split])
        ax.set_xlabel("mode $k$")
    axes[0].set_ylabel("mean squared modal error")
    axes[-1].legend()
    return _save(fig, out_path)


def plot_ablation(ablation_csv: Path, out_path: Path) -> Path:
    rows = _read_csv(ablation_csv)
    modes = [int(r["modes"]) for r in rows]
    ood = [float(r["ood_freq"]) for r in rows]
    ident = [float(r["id"]) for r in rows]
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    xs = range(len(modes))
    ax.bar(xs, ood, width=0.55, color="#1f77b4", label="OOD-frequency")
    ax.plot(xs, ident, "k--", marker="o", markersize=4, label="ID (dashed)")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([str(m) for m in modes])
    ax.set_xlabel("retained Fourier modes")
    ax.set_ylabel("relative $L_2$ error")
    ax.legend()
    return _save(fig, out_path)


def plot_representative_case(case_csv: Path, out_path: Path) -> Path:
    rows = _read_csv(case_csv)
    xs = [float(r["x"]) for r in rows]
    truth = [float(r["truth"]) for r in rows]
    model_names = [
        name[: -len("_pred")] for name in rows[0] if name.endswith("_pred")
    ]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(4.6, 4.2), sharex=True)
    top.plot(xs, truth, "k-", linewidth=1.4, label="truth")
    for name in model_names:
        top.plot(
            xs,
            [float(r[f"{name}_pred"]) for r in rows],
            label=name.upper() if name == "fno" else "DeepONet",
            color=MODEL_COLORS.get(name),
            linewidth=1.0,
        )
        bottom.plot(
            xs,
            [float(r[f"{name}_err"]) for r in rows],
            color=MODEL_COLORS.get(name),
            linewidth=1.0,
        )
    top.set_ylabel("$u(x, T)$")
    top.legend()
    bottom.set_ylabel("pointwise error")
    bottom.set_xlabel("$x$")
    return _save(fig, out_path)


def plot_training_log(log_csv: Path, out_path: Path) -> Path:
    rows = _read_csv(log_csv)
    epochs = [int(r["epoch"]) for r in rows]
    fig, ax = plt.subplots(figsize=(4.0, 2.8))
    ax.semilogy(epochs, [float(r["train_loss"]) for r in rows], label="train")
    ax.semilogy(epochs, [float(r["val_loss"]) for r in rows], label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("relative $L_2$ loss")
    ax.legend()
    return _save(fig, out_path)


def plot_convergence(conv_csv: Path, out_path: Path) -> Path:
    rows = _read_csv(conv_csv)
    ns = [int(r["n_points"]) for r in rows]
    errs = [float(r["rel_error"]) for r in rows]
    fig, ax = plt.subplots(figsize=(3.6, 2.8))
    ax.loglog(ns, errs, "o-", label="measured")
    guide = [errs[0] * (ns[0] / n) ** 2 for n in ns]
    ax.loglog(ns, guide, "k--", linewidth=0.8, label=r"$O(n^{-2})$")
    ax.set_xlabel("grid points")
    ax.set_ylabel("relative $L_2$ error")
    ax.legend()
    return _save(fig, out_path)


def render_all(results_dir: Path, out_dir: Path) -> list[Path]:
    """Render every figure whose source CSV exists under results_dir."""
    results_dir = Path(results_dir)
    out_dir = Path(out_dir)
    rendered: list[Path] = []

    metrics = results_dir / "metrics_report.csv"
    if metrics.exists():
        rendered.append(plot_metrics_bars(metrics, out_dir / "metrics_report.png"))

    curves = {}
    for path in sorted(results_dir.glob("modal_error_*.csv")):
        stem = path.stem[len("modal_error_") :]
        for model in ("fno", "deeponet"):
            if stem.endswith(f"_{model}"):
                curves[(stem[: -len(model) - 1], model)] = path
    if curves:
        rendered.append(plot_modal_curves(curves, out_dir / "modal_error_curves.png"))

    ablation = results_dir / "ablation.csv"
    if ablation.exists():
        rendered.append(plot_ablation(ablation, out_dir / "ablation.png"))

    for path in sorted(results_dir.glob("representative_case_*.csv")):
        rendered.append(plot_representative_case(path, out_dir / f"{path.stem}.png"))

    for path in sorted(results_dir.glob("*_training_log.csv")):
        rendered.append(plot_training_log(path, out_dir / f"{path.stem}.png"))

    convergence = results_dir / "convergence.csv"
    if convergence.exists():
        rendered.append(plot_convergence(convergence, out_dir / "convergence.png"))

    return rendered
