"""Command-line pipeline: data generation, training, evaluation, ablation,
solver verification, and figure rendering from the emitted CSVs.

Exit codes: 0 success, 1 runtime failure, 2 usage/configuration error.
All artifacts are written atomically (temp file + rename); a failed run never
leaves a manifest behind.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, load_config
from .data import generate_split, read_dataset, write_dataset
from .errors import ConfigError, WoplabError
from .metrics import (
    metrics_report,
    modal_error_curve,
    modes_ablation,
    representative_case_export,
    write_ablation_csv,
    write_metrics_csv,
    write_modal_curve_csv,
)
from .models import from_checkpoint, init_deeponet, init_fno
from .solver import (
    analytic_standing_wave,
    cfl_timestep,
    convergence_study,
    first_order_divergence,
    make_grid,
    solve_terminal,
)
from .training import fit, write_training_log_csv

EVAL_SPLITS = ("val", "id_test", "ood_freq", "ood_smooth")
TEST_SPLITS = ("id_test", "ood_freq", "ood_smooth")

# Order-of-accuracy verification defaults. The measurement time deliberately
# avoids integer multiples of the k=1 half-period, where the dispersion error
# is quadratically suppressed and ratios look fourth-order.
VERIFY_RESOLUTIONS = (65, 129, 257)
VERIFY_TIME = 0.45
RATIO_BOUNDS = (3.2, 4.8)


@contextmanager
def atomic_file(path: Path):
    """Yield a temp path in the target directory, renamed over path on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    tmp = Path(tmp)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ManifestWriter:
    def __init__(self, out_dir: Path, command: str, config: RunConfig | None):
        self.out_dir = Path(out_dir)
        self.command = command
        self.config = config
        self.artifacts: dict[str, Path] = {}
        self.timings: dict[str, float] = {}
        self.started = time.perf_counter()
        self.started_utc = datetime.now(timezone.utc).isoformat()

    def add(self, path: Path) -> Path:
        self.artifacts[Path(path).name] = Path(path)
        return Path(path)

    def write(self) -> Path:
        payload = {
            "command": self.command,
            "tool_version": __version__,
            "started_utc": self.started_utc,
            "wall_seconds": time.perf_counter() - self.started,
            "config": self.config.to_dict() if self.config else None,
            "timings": self.timings,
            "artifacts": {
                name: {
                    "path": str(p),
                    "bytes": p.stat().st_size,
                    "sha256": sha256_of(p),
                }
                for name, p in sorted(self.artifacts.items())
            },
        }
        target = self.out_dir / f"{self.command.replace('-', '_')}_manifest.json"
        with atomic_file(target) as tmp:
            tmp.write_text(json.dumps(payload, indent=2) + "\n")
        return target


def _load_split(data_dir: Path, split: str):
    path = Path(data_dir) / f"{split}.wvop"
    if not path.exists():
        raise WoplabError(f"missing dataset file for split {split!r}: {path}")
    return read_dataset(path)


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.set)
    out_dir = Path(args.out)
    writer = ManifestWriter(out_dir, "gen-data", cfg)
    grid = cfg.grid()
    for split, manifest in cfg.manifests().items():
        t0 = time.perf_counter()
        ds = generate_split(
            manifest,
            grid,
            cfl=cfg.cfl_number,
            terminal_time=cfg.terminal_time,
            threads=cfg.threads,
        )
        target = out_dir / f"{split}.wvop"
        with atomic_file(target) as tmp:
            write_dataset(ds, tmp)
        writer.add(target)
        writer.timings[f"generate_{split}"] = time.perf_counter() - t0
        print(f"wrote {target} ({manifest.count} samples)")
    manifest_path = writer.write()
    print(f"manifest: {manifest_path}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    out_dir = Path(args.out)
    writer = ManifestWriter(out_dir, f"train-{args.model}", cfg)
    grid = cfg.grid()
    train_ds = _load_split(args.data, "train")
    val_ds = _load_split(args.data, "val")
    if args.model == "fno":
        model = init_fno(cfg.fno, seed=cfg.train.seed)
    else:
        model = init_deeponet(cfg.deeponet, seed=cfg.train.seed)
    t0 = time.perf_counter()
    model, log = fit(model, train_ds, val_ds, grid, cfg.train)
    writer.timings["fit"] = time.perf_counter() - t0
    writer.timings["epoch_seconds"] = log.seconds
    ckpt = out_dir / f"{args.model}_checkpoint.wopm"
    with atomic_file(ckpt) as tmp:
        save_checkpoint(tmp, args.model, model.params)
    writer.add(ckpt)
    log_path = out_dir / f"{args.model}_training_log.csv"
    with atomic_file(log_path) as tmp:
        write_training_log_csv(log, tmp)
    writer.add(log_path)
    manifest_path = writer.write()
    print(
        f"trained {args.model}: best epoch {log.best_epoch}, "
        f"best val {log.best_val_loss():.6f}, stop reason {log.stop_reason}"
    )
    print(f"checkpoint: {ckpt}\nlog: {log_path}\nmanifest: {manifest_path}")
    return 0


def _rebuild_model(cfg: RunConfig, kind: str, params):
    """Validate checkpoint parameters against the configured architecture."""
    reference = (
        init_fno(cfg.fno, seed=0) if kind == "fno" else init_deeponet(cfg.deeponet, seed=0)
    )
    expected = {name: t.data.shape for name, t in reference.params.items()}
    got = {name: t.data.shape for name, t in params.items()}
    if expected != got:
        raise WoplabError(
            f"checkpoint does not match the configured {kind} architecture; "
            f"expected parameters {sorted(expected)} with matching shapes"
        )
    return from_checkpoint(kind, params, cfg.fno if kind == "fno" else cfg.deeponet)


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.set)
    out_dir = Path(args.out)
    writer = ManifestWriter(out_dir, "evaluate", cfg)
    grid = cfg.grid()
    models = {}
    for ckpt in args.checkpoint:
        kind, params = load_checkpoint(ckpt)
        if kind in models:
            raise WoplabError(f"duplicate {kind} checkpoint: {ckpt}")
        models[kind] = _rebuild_model(cfg, kind, params)
    datasets = {split: _load_split(args.data, split) for split in EVAL_SPLITS}
    t0 = time.perf_counter()
    report = metrics_report(models, datasets, grid, meta={"checkpoints": list(args.checkpoint)})
    metrics_path = out_dir / "metrics_report.csv"
    with atomic_file(metrics_path) as tmp:
        write_metrics_csv(report, tmp)
    writer.add(metrics_path)
    writer.timings["metrics"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    for kind, model in models.items():
        for split in EVAL_SPLITS:
            curve = modal_error_curve(
                model, datasets[split], grid, modes=cfg.evaluation.analysis_modes
            )
            curve_path = out_dir / f"modal_error_{split}_{kind}.csv"
            with atomic_file(curve_path) as tmp:
                write_modal_curve_csv(curve, tmp)
            writer.add(curve_path)
    writer.timings["modal_curves"] = time.perf_counter() - t0
    if set(models) == {"fno", "deeponet"}:
        for split in TEST_SPLITS:
            indices = [
                i for i in cfg.evaluation.representative_indices if i < len(datasets[split])
            ]
            for path in representative_case_export(
                models, datasets[split], indices, grid, out_dir
            ):
                final = Path(path)
                writer.add(final)
    manifest_path = writer.write()
    print(f"metrics: {metrics_path}\nmanifest: {manifest_path}")
    for row in report.rows:
        print(
            f"  {row.model:9s} {row.split:11s} rel_l2 {row.mean:.6f} +/- {row.std:.6f} "
            f"energy_diff {row.energy_diff_mean:.6f}"
        )
    return 0


def cmd_ablate(args) -> int:
    cfg = load_config(args.config, args.set)
    out_dir = Path(args.out)
    writer = ManifestWriter(out_dir, "ablate", cfg)
    grid = cfg.grid()
    datasets = {split: _load_split(args.data, split) for split in ("train",) + EVAL_SPLITS}
    t0 = time.perf_counter()
    rows = modes_ablation(
        datasets, grid, cfg.fno, cfg.train, mode_settings=tuple(cfg.evaluation.ablation_modes)
    )
    writer.timings["ablation"] = time.perf_counter() - t0
    path = out_dir / "ablation.csv"
    with atomic_file(path) as tmp:
        write_ablation_csv(rows, tmp)
    writer.add(path)
    manifest_path = writer.write()
    print(f"ablation: {path}\nmanifest: {manifest_path}")
    for r in rows:
        print(
            f"  modes {r.modes:3d}: val {r.val:.6f} id {r.id_test:.6f} "
            f"ood_freq {r.ood_freq:.6f} ood_smooth {r.ood_smooth:.6f}"
        )
    return 0


def cmd_verify_solver(args) -> int:
    out_dir = Path(args.out)
    writer = ManifestWriter(out_dir, "verify-solver", None)
    divergence = first_order_divergence if args.first_order_stencil else None
    kwargs = {"divergence": divergence} if divergence else {}
    results = convergence_study(1, 1.0, VERIFY_RESOLUTIONS, VERIFY_TIME, 0.9, **kwargs)
    errors = [e for _, e in results]
    ratios = [None] + [c / f for c, f in zip(errors, errors[1:])]
    conv_path = out_dir / "convergence.csv"
    with atomic_file(conv_path) as tmp:
        lines = ["n_points,rel_error,ratio_vs_previous"]
        for (n, e), r in zip(results, ratios):
            lines.append(f"{n},{e:.17g},{'' if r is None else format(r, '.17g')}")
        tmp.write_text("\n".join(lines) + "\n")
    writer.add(conv_path)

    # energy drift of multi-mode standing fields over one time unit at c = 1
    grid = make_grid(128)
    c = np.ones(128)
    config = cfl_timestep(c, grid, 0.9, 1.0)
    from .metrics import energy_diagnostic

    drift_lines = ["mode,energy_initial,energy_final,rel_drift"]
    drifts = []
    for k in (1, 2, 3, 4):
        u0 = analytic_standing_wave(k, 1.0, 0.0, grid)
        uT = solve_terminal(u0, c, grid, config)
        e0 = energy_diagnostic(u0, c, grid)
        eT = energy_diagnostic(uT, c, grid)
        rel = abs(eT - e0) / e0
        drifts.append(rel)
        drift_lines.append(f"{k},{e0:.17g},{eT:.17g},{rel:.17g}")
    drift_path = out_dir / "energy_drift.csv"
    with atomic_file(drift_path) as tmp:
        tmp.write_text("\n".join(drift_lines) + "\n")
    writer.add(drift_path)
    manifest_path = writer.write()

    ok = all(RATIO_BOUNDS[0] <= r <= RATIO_BOUNDS[1] for r in ratios[1:])
    print(f"convergence: {conv_path}")
    for (n, e), r in zip(results, ratios):
        print(f"  n={n:4d} rel_error={e:.3e}" + (f" ratio={r:.2f}" if r else ""))
    print(f"energy drift: {drift_path} (max {max(drifts):.3e})")
    print(f"manifest: {manifest_path}")
    if not ok:
        print(
            f"FAIL: convergence ratios outside {RATIO_BOUNDS}", file=sys.stderr
        )
        return 1
    return 0


def cmd_report(args) -> int:
    from . import figures

    results_dir = Path(args.results)
    out_dir = Path(args.out) if args.out else results_dir
    writer = ManifestWriter(out_dir, "report", None)
    rendered = figures.render_all(results_dir, out_dir)
    if not rendered:
        print(f"no known CSV artifacts found under {results_dir}", file=sys.stderr)
        return 1
    for path in rendered:
        writer.add(path)
        print(f"rendered {path}")
    manifest_path = writer.write()
    print(f"manifest: {manifest_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="woplab",
        description="Wave-operator learning testbed: data, training, OOD evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"woplab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False):
        p.add_argument("--config", help="JSON config file (defaults used if omitted)")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="PATH=VALUE",
            help="override a config field, e.g. train.max_epochs=1",
        )
        if data:
            p.add_argument("--data", required=True, help="directory with .wvop splits")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("gen-data", help="generate the five dataset splits")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one surrogate model")
    p.add_argument("--model", required=True, choices=("fno", "deeponet"))
    common(p, data=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics, modal curves, representative cases")
    p.add_argument(
        "--checkpoint",
        action="append",
        required=True,
        help="WOPM checkpoint (repeat for several models)",
    )
    common(p, data=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="retained-modes ablation for the FNO")
    common(p, data=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("verify-solver", help="order-of-accuracy and energy-drift checks")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument(
        "--first-order-stencil",
        action="store_true",
        help=argparse.SUPPRESS,  # negative-control stencil for tests
    )
    p.set_defaults(func=cmd_verify_solver)

    p = sub.add_parser("report", help="render figures from previously emitted CSVs")
    p.add_argument("--results", required=True, help="directory with pipeline CSVs")
    p.add_argument("--out", help="figure output directory (default: results dir)")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except WoplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
