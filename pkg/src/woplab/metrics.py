"""Error metrics and degradation analyses.

Relative-L2 statistics per split, the gradient-energy diagnostic
E(u) = integral of c^2 (u_x)^2, per-mode spectral error curves in the
Dirichlet-adapted sine basis, representative-case exports, and the
retained-modes ablation. All CSV output prints floats at 17 significant
digits so parsed values round-trip exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import DegenerateTargetError, DimensionError, ResolvabilityError
from .models import FnoConfig, forward_for, init_fno
from .solver import Grid
from .training import TrainConfig, fit, per_sample_relative_l2

EVAL_SPLITS = ("val", "id_test", "ood_freq", "ood_smooth")

# Analysis band: covers the largest retained-mode setting with headroom.
DEFAULT_ANALYSIS_MODES = 32

ABLATION_MODE_SETTINGS = (8, 16, 32)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def relative_l2(pred: np.ndarray, truth: np.ndarray) -> float:
    """||pred - truth||_2 / ||truth||_2 over grid values."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {truth.shape}")
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise DegenerateTargetError("reference field has zero norm")
    return float(np.linalg.norm(pred - truth)) / denom


def energy_diagnostic(u: np.ndarray, c: np.ndarray, grid: Grid) -> float:
    """E(u) = trapezoid of c^2 (u_x)^2; u_x central inside, 2nd-order one-sided at ends."""
    u = np.asarray(u, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if u.shape != (grid.n_points,) or c.shape != (grid.n_points,):
        raise DimensionError("fields do not conform to grid")
    ux = np.gradient(u, grid.dx, edge_order=2)
    return float(np.trapezoid(c * c * ux * ux, dx=grid.dx))


def sine_coefficients(f: np.ndarray, grid: Grid, modes: int) -> np.ndarray:
    """Project onto sin(k pi x), k = 1..modes: a_k = 2 dx sum_interior f_i sin(k pi x_i).

    Exact for fields band-limited below the resolvable cutoff; assumes zero
    endpoint values (Dirichlet-consistent input).
    """
    if modes > (grid.n_points - 1) // 2:
        raise ResolvabilityError(
            f"{modes} analysis modes exceed limit {(grid.n_points - 1) // 2}"
        )
    f = np.asarray(f, dtype=np.float64)
    interior_x = grid.xs[1:-1]
    basis = np.sin(np.pi * np.outer(np.arange(1, modes + 1), interior_x))
    return 2.0 * grid.dx * (basis @ f[1:-1])


@dataclass(frozen=True)
class ModalErrorCurve:
    modes: np.ndarray  # 1..M
    mse: np.ndarray  # mean squared modal error per mode

    def __post_init__(self):
        assert self.modes.shape == self.mse.shape


def modal_error_curve(model, ds: Dataset, grid: Grid, modes: int = DEFAULT_ANALYSIS_MODES) -> ModalErrorCurve:
    """Mean squared sine coefficient of the prediction error, per mode."""
    if len(ds) == 0:
        raise ValueError("dataset is empty")
    u0s, cs, uTs = ds.arrays()
    total = np.zeros(modes)
    for start in range(0, len(ds), 64):
        sl = slice(start, start + 64)
        preds = forward_for(model, u0s[sl], cs[sl], grid).data
        for pred, truth in zip(preds, uTs[sl]):
            coeffs = sine_coefficients(pred - truth, grid, modes)
            total += coeffs * coeffs
    return ModalErrorCurve(modes=np.arange(1, modes + 1), mse=total / len(ds))


@dataclass(frozen=True)
class SplitMetrics:
    model: str
    split: str
    mean: float
    std: float
    energy_diff_mean: float


@dataclass(frozen=True)
class MetricsReport:
    rows: tuple[SplitMetrics, ...]
    meta: dict

    def row(self, model: str, split: str) -> SplitMetrics:
        for r in self.rows:
            if r.model == model and r.split == split:
                return r
        raise KeyError((model, split))


def split_metrics(model, name: str, split: str, ds: Dataset, grid: Grid) -> SplitMetrics:
    u0s, cs, uTs = ds.arrays()
    errors = per_sample_relative_l2(model, u0s, cs, uTs, grid)
    energy_diffs = np.empty(len(ds))
    for start in range(0, len(ds), 64):
        sl = slice(start, start + 64)
        preds = forward_for(model, u0s[sl], cs[sl], grid).data
        for j, (pred, truth, c) in enumerate(zip(preds, uTs[sl], cs[sl]), start=start):
            e_true = energy_diagnostic(truth, c, grid)
            e_pred = energy_diagnostic(pred, c, grid)
            energy_diffs[j] = abs(e_pred - e_true) / e_true if e_true > 0 else abs(e_pred)
    return SplitMetrics(
        model=name,
        split=split,
        mean=float(np.mean(errors)),
        std=float(np.std(errors)),
        energy_diff_mean=float(np.mean(energy_diffs)),
    )


def metrics_report(models: dict[str, object], datasets: dict[str, Dataset], grid: Grid, meta: dict | None = None) -> MetricsReport:
    """Per-split relative-L2 statistics and energy discrepancies for each model."""
    rows = []
    for name, model in models.items():
        for split in EVAL_SPLITS:
            if split not in datasets:
                raise KeyError(f"missing evaluation split {split!r}")
            rows.append(split_metrics(model, name, split, datasets[split], grid))
    return MetricsReport(rows=tuple(rows), meta=meta or {})


def write_metrics_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "split", "mean", "std", "energy_diff_mean"])
        for r in report.rows:
            writer.writerow([r.model, r.split, fmt(r.mean), fmt(r.std), fmt(r.energy_diff_mean)])


def write_modal_curve_csv(curve: ModalErrorCurve, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["mode", "mse"])
        for k, v in zip(curve.modes, curve.mse):
            writer.writerow([int(k), fmt(v)])


@dataclass(frozen=True)
class AblationRow:
    modes: int
    val: float
    id_test: float
    ood_freq: float
    ood_smooth: float


def modes_ablation(
    datasets: dict[str, Dataset],
    grid: Grid,
    fno_config: FnoConfig,
    train_cfg: TrainConfig,
    mode_settings=ABLATION_MODE_SETTINGS,
) -> list[AblationRow]:
    """Train one FNO per retained-mode setting from the same seed; evaluate all splits."""
    rows = []
    for modes in mode_settings:
        cfg = replace(fno_config, modes=modes)
        model = init_fno(cfg, seed=train_cfg.seed)
        model, _ = fit(model, datasets["train"], datasets["val"], grid, train_cfg)
        errs = {}
        for split in EVAL_SPLITS:
            u0s, cs, uTs = datasets[split].arrays()
            errs[split] = float(np.mean(per_sample_relative_l2(model, u0s, cs, uTs, grid)))
        rows.append(
            AblationRow(
                modes=modes,
                val=errs["val"],
                id_test=errs["id_test"],
                ood_freq=errs["ood_freq"],
                ood_smooth=errs["ood_smooth"],
            )
        )
    return rows


def write_ablation_csv(rows: list[AblationRow], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["modes", "val", "id", "ood_freq", "ood_smooth"])
        for r in rows:
            writer.writerow([r.modes, fmt(r.val), fmt(r.id_test), fmt(r.ood_freq), fmt(r.ood_smooth)])


def representative_case_export(
    models: dict[str, object],
    ds: Dataset,
    indices,
    grid: Grid,
    out_dir,
    prefix: str = "representative_case",
) -> list:
    """One CSV per selected sample: x, truth, per-model predictions, then errors.

    Expects the fno/deeponet pair; written paths are returned in index order.
    """
    from pathlib import Path

    out_dir = Path(out_dir)
    for i in indices:
        if not 0 <= i < len(ds):
            raise IndexError(f"case index {i} out of range for dataset of {len(ds)}")
    names = list(models)
    paths = []
    for i in indices:
        s = ds[i]
        preds = {
            name: forward_for(model, s.u0[None, :], s.c[None, :], grid).data[0]
            for name, model in models.items()
        }
        path = out_dir / f"{prefix}_{s.meta.split}_{i}.csv"
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            header = ["x", "truth"]
            header += [f"{name}_pred" for name in names]
            header += [f"{name}_err" for name in names]
            writer.writerow(header)
            for j in range(grid.n_points):
                row = [fmt(grid.xs[j]), fmt(s.uT[j])]
                row += [fmt(preds[name][j]) for name in names]
                row += [fmt(preds[name][j] - s.uT[j]) for name in names]
                writer.writerow(row)
        paths.append(path)
    return paths
