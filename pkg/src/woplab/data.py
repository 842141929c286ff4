"""Seeded dataset generation and the WVOP on-disk format.

Initial conditions are random sine-mode combinations u0(x) = sum_k a_k sin(k pi x);
wave-speed fields are random frequency superpositions c(x) = 1 + sum_k b_k
sin(2 pi k x + phi_k) grouped into smooth/medium/rough regimes. Five splits are
produced: train, val, id_test (same sampling rules as train, fresh seeds),
ood_freq (higher initial-condition modes), ood_smooth (shifted coefficient
regime). Per-sample seeds make generation embarrassingly parallel and
bit-reproducible regardless of worker count.
"""

from __future__ import annotations

import csv
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import solver
from .errors import FormatError, InstabilityError, ResolvabilityError
from .solver import Grid, cfl_timestep, solve_terminal

SPLIT_NAMES = ("train", "val", "id_test", "ood_freq", "ood_smooth")
REGIME_NAMES = ("smooth", "medium", "rough")

# Mode cutoff K_c per coefficient regime, in order of increasing roughness.
REGIME_K_C = {"smooth": 2, "medium": 5, "rough": 10}

# Master seed; split base seeds are spaced 10^6 apart to keep per-sample
# seeds disjoint across splits.
MASTER_SEED = 2026
SPLIT_SEED_STRIDE = 1_000_000

# Offset separating the coefficient-field stream from the initial-condition
# stream within one sample; stays inside the split's seed band.
COEFF_SEED_OFFSET = 500_000

WVOP_MAGIC = b"WVOP"
WVOP_VERSION = 1


@dataclass(frozen=True)
class InitialConditionSpec:
    """Sine-mode range and amplitude law for initial displacement fields."""

    k_min: int = 1
    k_max: int = 6
    amplitude_bound: float = 1.0
    normalize: bool = True
    # For the OOD-frequency split the active k_max is drawn per sample from
    # [k_max_low, k_max_high]; None means the fixed k_max above is used.
    k_max_low: int | None = None
    k_max_high: int | None = None

    def validate(self, grid: Grid) -> None:
        if self.k_min < 1 or self.k_max < self.k_min:
            raise ResolvabilityError(
                f"invalid mode range [{self.k_min}, {self.k_max}]"
            )
        top = self.k_max_high if self.k_max_high is not None else self.k_max
        if top > (grid.n_points - 1) // 2:
            raise ResolvabilityError(
                f"k_max {top} not resolvable on a {grid.n_points}-point grid "
                f"(limit {(grid.n_points - 1) // 2})"
            )
        if self.amplitude_bound <= 0:
            raise ResolvabilityError("amplitude_bound must be positive")


@dataclass(frozen=True)
class CoefficientSpec:
    """Regime and amplitude law for wave-speed fields."""

    regime: str = "medium"
    amplitude_scale: float = 0.1
    c_min: float = solver.C_MIN

    def __post_init__(self):
        if self.regime not in REGIME_NAMES:
            raise ValueError(f"unknown regime {self.regime!r}")

    @property
    def k_max(self) -> int:
        return REGIME_K_C[self.regime]


@dataclass(frozen=True)
class SampleMeta:
    seed: int
    split: str
    k_max: int
    regime: str


@dataclass(frozen=True)
class Sample:
    u0: np.ndarray
    c: np.ndarray
    uT: np.ndarray
    meta: SampleMeta


@dataclass(frozen=True)
class SplitManifest:
    split: str
    count: int
    base_seed: int
    ic_spec: InitialConditionSpec
    coeff_spec: CoefficientSpec

    def __post_init__(self):
        if self.split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {self.split!r}")
        if self.count < 0:
            raise ValueError("count must be non-negative")


@dataclass
class Dataset:
    samples: list[Sample] = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def __iter__(self):
        return iter(self.samples)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (u0, c, uT) arrays of shape [count, n_points]."""
        u0 = np.stack([s.u0 for s in self.samples])
        c = np.stack([s.c for s in self.samples])
        uT = np.stack([s.uT for s in self.samples])
        return u0, c, uT


def default_manifests(
    master_seed: int = MASTER_SEED,
    counts: dict[str, int] | None = None,
    train_regime: str = "medium",
    ood_smooth_regime: str = "smooth",
) -> dict[str, SplitManifest]:
    """The canonical five-split layout.

    Train/val/id_test share sampling rules (fresh base seeds); ood_freq draws a
    per-sample k_max from {8..14} with all lower modes active; ood_smooth keeps
    the train initial-condition spec but shifts the coefficient regime.
    """
    counts = counts or {
        "train": 2000,
        "val": 200,
        "id_test": 200,
        "ood_freq": 200,
        "ood_smooth": 200,
    }
    train_ic = InitialConditionSpec()
    ood_ic = replace(train_ic, k_max_low=8, k_max_high=14)
    train_cs = CoefficientSpec(regime=train_regime)
    manifests = {}
    for index, split in enumerate(SPLIT_NAMES):
        ic = ood_ic if split == "ood_freq" else train_ic
        cs = (
            CoefficientSpec(regime=ood_smooth_regime)
            if split == "ood_smooth"
            else train_cs
        )
        manifests[split] = SplitManifest(
            split=split,
            count=counts[split],
            base_seed=master_seed + index * SPLIT_SEED_STRIDE,
            ic_spec=ic,
            coeff_spec=cs,
        )
    return manifests


def sample_initial_condition(
    seed: int,
    spec: InitialConditionSpec,
    grid: Grid,
    forced_coefficients: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Draw one initial displacement field.

    Returns (field, mode coefficients a_k for k = 1..active_k_max, active_k_max).
    Coefficients below k_min are zero. The forced_coefficients hook bypasses the
    random draw for tests.
    """
    spec.validate(grid)
    rng = np.random.default_rng(seed)
    if spec.k_max_low is not None:
        k_max = int(rng.integers(spec.k_max_low, spec.k_max_high + 1))
    else:
        k_max = spec.k_max
    if forced_coefficients is not None:
        a = np.asarray(forced_coefficients, dtype=np.float64)
        k_max = spec.k_min + len(a) - 1
        coeffs = np.zeros(k_max)
        coeffs[spec.k_min - 1 :] = a
    else:
        coeffs = np.zeros(k_max)
        coeffs[spec.k_min - 1 :] = rng.uniform(
            -spec.amplitude_bound, spec.amplitude_bound, k_max - spec.k_min + 1
        )
    ks = np.arange(1, k_max + 1)
    u0 = np.sin(np.outer(grid.xs, ks * np.pi)) @ coeffs
    if spec.normalize:
        peak = np.max(np.abs(u0))
        if peak > 0:
            u0 /= peak
            coeffs = coeffs / peak
    u0[0] = 0.0
    u0[-1] = 0.0
    return u0, coeffs, k_max


def sample_coefficient_field(
    seed: int,
    spec: CoefficientSpec,
    grid: Grid,
    forced_amplitudes: np.ndarray | None = None,
    forced_phases: np.ndarray | None = None,
) -> np.ndarray:
    """Draw one wave-speed field c(x) = 1 + sum_k b_k sin(2 pi k x + phi_k).

    If min(c) falls below the positivity floor, all b_k are rescaled by a
    common factor so min(c) = c_min + 0.05; rescaling (not rejection) keeps the
    draw a pure function of the seed.
    """
    rng = np.random.default_rng(seed)
    k_c = spec.k_max
    b = rng.uniform(-spec.amplitude_scale, spec.amplitude_scale, k_c)
    phi = rng.uniform(0.0, 2.0 * np.pi, k_c)
    if forced_amplitudes is not None:
        b = np.asarray(forced_amplitudes, dtype=np.float64)
    if forced_phases is not None:
        phi = np.asarray(forced_phases, dtype=np.float64)
    ks = np.arange(1, k_c + 1)
    bump = np.sin(2.0 * np.pi * np.outer(grid.xs, ks) + phi) @ b
    low = np.min(bump)
    if 1.0 + low < spec.c_min:
        bump *= (spec.c_min + 0.05 - 1.0) / low
    return 1.0 + bump


def _generate_one(j: int, manifest: SplitManifest, grid: Grid, cfl: float, t_end: float) -> Sample:
    seed = manifest.base_seed + j
    u0, _, k_max = sample_initial_condition(seed, manifest.ic_spec, grid)
    c = sample_coefficient_field(seed + COEFF_SEED_OFFSET, manifest.coeff_spec, grid)
    config = cfl_timestep(c, grid, cfl, t_end)
    try:
        uT = solve_terminal(u0, c, grid, config)
    except InstabilityError as exc:
        raise InstabilityError(
            exc.step, f"sample {j} of split {manifest.split!r}: {exc}"
        ) from None
    return Sample(
        u0=u0,
        c=c,
        uT=uT,
        meta=SampleMeta(seed=seed, split=manifest.split, k_max=k_max, regime=manifest.coeff_spec.regime),
    )


def generate_split(
    manifest: SplitManifest,
    grid: Grid,
    cfl: float = solver.DEFAULT_CFL,
    terminal_time: float = solver.DEFAULT_TERMINAL_TIME,
    threads: int = 1,
) -> Dataset:
    """Generate all samples of one split; output is independent of thread count."""
    manifest.ic_spec.validate(grid)
    indices = range(manifest.count)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(
                pool.map(lambda j: _generate_one(j, manifest, grid, cfl, terminal_time), indices)
            )
    else:
        samples = [_generate_one(j, manifest, grid, cfl, terminal_time) for j in indices]
    return Dataset(samples)


# --- WVOP binary format -----------------------------------------------------
#
# Little-endian layout:
#   magic "WVOP" (4 bytes), version u16, n_points u32, sample count u32,
#   then per sample: split label u8, k_max u16, regime u8, seed i64,
#   then three f64 arrays (u0, c, uT) of n_points entries each.

_HEADER = struct.Struct("<4sHII")
_SAMPLE_HEAD = struct.Struct("<BHBq")


def write_dataset(ds: Dataset, path) -> None:
    if len(ds) == 0:
        n_points = 0
    else:
        n_points = len(ds[0].u0)
    chunks = [_HEADER.pack(WVOP_MAGIC, WVOP_VERSION, n_points, len(ds))]
    for s in ds:
        chunks.append(
            _SAMPLE_HEAD.pack(
                SPLIT_NAMES.index(s.meta.split),
                s.meta.k_max,
                REGIME_NAMES.index(s.meta.regime),
                s.meta.seed,
            )
        )
        for arr in (s.u0, s.c, s.uT):
            chunks.append(np.asarray(arr, "<f8").tobytes())
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


def read_dataset(path) -> Dataset:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < _HEADER.size:
        raise FormatError("file too short for WVOP header", offset=len(blob))
    magic, version, n_points, count = _HEADER.unpack_from(blob, 0)
    if magic != WVOP_MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != WVOP_VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    offset = _HEADER.size
    record = _SAMPLE_HEAD.size + 3 * 8 * n_points
    samples = []
    for i in range(count):
        if offset + record > len(blob):
            raise FormatError(
                f"truncated: sample {i} of {count} incomplete", offset=offset
            )
        split_id, k_max, regime_id, seed = _SAMPLE_HEAD.unpack_from(blob, offset)
        if split_id >= len(SPLIT_NAMES):
            raise FormatError(f"unknown split id {split_id}", offset=offset)
        if regime_id >= len(REGIME_NAMES):
            raise FormatError(f"unknown regime id {regime_id}", offset=offset + 3)
        pos = offset + _SAMPLE_HEAD.size
        fields = []
        for _ in range(3):
            fields.append(np.frombuffer(blob, "<f8", n_points, pos).copy())
            pos += 8 * n_points
        samples.append(
            Sample(
                u0=fields[0],
                c=fields[1],
                uT=fields[2],
                meta=SampleMeta(
                    seed=seed,
                    split=SPLIT_NAMES[split_id],
                    k_max=k_max,
                    regime=REGIME_NAMES[regime_id],
                ),
            )
        )
        offset += record
    if offset != len(blob):
        raise FormatError("trailing bytes after final sample", offset=offset)
    return Dataset(samples)


def export_samples_csv(ds: Dataset, indices, path) -> None:
    """Write selected samples as long-form CSV: sample, x, u0, c, uT."""
    for i in indices:
        if not 0 <= i < len(ds):
            raise IndexError(f"sample index {i} out of range for dataset of {len(ds)}")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample", "x", "u0", "c", "uT"])
        for i in indices:
            s = ds[i]
            n = len(s.u0)
            xs = np.linspace(0.0, 1.0, n)
            for j in range(n):
                writer.writerow(
                    [
                        i,
                        format(xs[j], ".17g"),
                        format(s.u0[j], ".17g"),
                        format(s.c[j], ".17g"),
                        format(s.uT[j], ".17g"),
                    ]
                )
