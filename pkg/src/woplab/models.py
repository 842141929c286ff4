"""The two surrogate architectures: spectral-convolution FNO and branch-trunk DeepONet.

Both consume (u0, c) sampled on the grid and predict the terminal wave field;
both multiply their raw output by a sin(pi x) envelope so Dirichlet boundary
values are exactly zero for any parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .errors import DimensionError
from .solver import Grid

# Hidden width of the FNO projection head.
PROJECTION_HIDDEN = 128


@dataclass(frozen=True)
class FnoConfig:
    n_points: int = 128
    modes: int = 16
    width: int = 64
    layers: int = 4
    padding: int = 0

    # input channels are fixed: [u0, c, x]
    in_channels = 3

    def validate(self) -> None:
        if self.layers < 1 or self.width < 1:
            raise ValueError("layers and width must be >= 1")
        limit = (self.n_points + self.padding) // 2 + 1
        if not 1 <= self.modes <= limit:
            raise ValueError(f"modes {self.modes} outside [1, {limit}]")


@dataclass(frozen=True)
class DeepOnetConfig:
    n_points: int = 128
    branch_hidden: int = 128
    trunk_hidden: int = 128
    latent: int = 128
    depth: int = 3  # affine layers per net; activations between them
    output_bias: bool = True

    def validate(self) -> None:
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if min(self.branch_hidden, self.trunk_hidden, self.latent) < 1:
            raise ValueError("hidden and latent sizes must be >= 1")


@dataclass
class FnoModel:
    config: FnoConfig
    params: ParameterStore


@dataclass
class DeepOnetModel:
    config: DeepOnetConfig
    params: ParameterStore


def _uniform_affine(store: ParameterStore, rng, name: str, fan_in: int, fan_out: int):
    bound = 1.0 / np.sqrt(fan_in)
    store.add(f"{name}_w", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
    store.add(f"{name}_b", rng.uniform(-bound, bound, size=fan_out))


def init_fno(config: FnoConfig, seed: int) -> FnoModel:
    """Fan-in uniform affines; small Gaussian complex spectral weights."""
    config.validate()
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    _uniform_affine(store, rng, "lift", config.in_channels, config.width)
    spectral_scale = 1.0 / (config.width * config.width)
    for layer in range(config.layers):
        real = rng.normal(size=(config.modes, config.width, config.width))
        imag = rng.normal(size=(config.modes, config.width, config.width))
        store.add(f"spectral_{layer}", spectral_scale * (real + 1j * imag))
        _uniform_affine(store, rng, f"pointwise_{layer}", config.width, config.width)
    _uniform_affine(store, rng, "proj_hidden", config.width, PROJECTION_HIDDEN)
    _uniform_affine(store, rng, "proj_out", PROJECTION_HIDDEN, 1)
    return FnoModel(config=config, params=store)


def init_deeponet(config: DeepOnetConfig, seed: int) -> DeepOnetModel:
    config.validate()
    rng = np.random.default_rng(seed)
    store = ParameterStore()
    branch_dims = [2 * config.n_points] + [config.branch_hidden] * (config.depth - 1) + [config.latent]
    for i, (fi, fo) in enumerate(zip(branch_dims, branch_dims[1:])):
        _uniform_affine(store, rng, f"branch_{i}", fi, fo)
    trunk_dims = [1] + [config.trunk_hidden] * (config.depth - 1) + [config.latent]
    for i, (fi, fo) in enumerate(zip(trunk_dims, trunk_dims[1:])):
        _uniform_affine(store, rng, f"trunk_{i}", fi, fo)
    if config.output_bias:
        store.add("output_bias", np.zeros(()))
    return DeepOnetModel(config=config, params=store)


def dirichlet_envelope(grid: Grid) -> np.ndarray:
    """sin(pi x) per node with exactly-zero endpoints."""
    env = np.sin(np.pi * grid.xs)
    env[0] = 0.0
    env[-1] = 0.0
    return env


def fourier_layer(
    v: Tensor, spectral: Tensor, w: Tensor, b: Tensor, modes: int
) -> Tensor:
    """One FNO layer: gelu(pointwise affine + inverse-DFT(mode-mixed truncated DFT))."""
    n = v.data.shape[-1]
    local = ad.pointwise_affine(v, w, b)
    spec = ad.irdft(ad.mode_mix(ad.rdft_truncated(v, modes), spectral), n)
    return ad.gelu(ad.add(local, spec))


def _stack_inputs(u0: np.ndarray, c: np.ndarray, grid: Grid) -> np.ndarray:
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    if u0.shape != c.shape or u0.shape[1] != grid.n_points:
        raise DimensionError(
            f"field batches {u0.shape} / {c.shape} do not conform to grid n={grid.n_points}"
        )
    batch = u0.shape[0]
    stacked = np.empty((batch, 3, grid.n_points))
    stacked[:, 0, :] = u0
    stacked[:, 1, :] = c
    stacked[:, 2, :] = grid.xs
    return stacked


def fno_forward(model: FnoModel, u0: np.ndarray, c: np.ndarray, grid: Grid) -> Tensor:
    """Predict the terminal field batch: lift, Fourier layers, projection, envelope."""
    cfg = model.config
    p = model.params
    x = Tensor(_stack_inputs(u0, c, grid), constant=True)
    v = ad.pointwise_affine(x, p["lift_w"], p["lift_b"])
    if cfg.padding:
        v = ad.pad_last(v, cfg.padding)
    for layer in range(cfg.layers):
        v = fourier_layer(
            v,
            p[f"spectral_{layer}"],
            p[f"pointwise_{layer}_w"],
            p[f"pointwise_{layer}_b"],
            cfg.modes,
        )
    if cfg.padding:
        v = ad.crop_last(v, grid.n_points)
    h = ad.gelu(ad.pointwise_affine(v, p["proj_hidden_w"], p["proj_hidden_b"]))
    out = ad.pointwise_affine(h, p["proj_out_w"], p["proj_out_b"])
    out = ad.reshape(out, (x.data.shape[0], grid.n_points))
    return ad.mul_vector(out, dirichlet_envelope(grid))


def _mlp(x: Tensor, params: ParameterStore, prefix: str, depth: int) -> Tensor:
    h = x
    for i in range(depth):
        h = ad.affine(h, params[f"{prefix}_{i}_w"], params[f"{prefix}_{i}_b"])
        if i < depth - 1:
            h = ad.relu(h)
    return h


def deeponet_forward(
    model: DeepOnetModel, u0: np.ndarray, c: np.ndarray, grid: Grid
) -> Tensor:
    """Branch on [u0 || c], trunk on grid coordinates, combined by inner product."""
    cfg = model.config
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    if u0.shape != c.shape or u0.shape[1] != grid.n_points:
        raise DimensionError(
            f"field batches {u0.shape} / {c.shape} do not conform to grid n={grid.n_points}"
        )
    branch_in = Tensor(np.concatenate([u0, c], axis=1), constant=True)
    trunk_in = Tensor(grid.xs[:, None], constant=True)
    branch = _mlp(branch_in, model.params, "branch", cfg.depth)
    trunk = _mlp(trunk_in, model.params, "trunk", cfg.depth)
    out = ad.matmul_nt(branch, trunk)
    if cfg.output_bias:
        out = ad.add_scalar(out, model.params["output_bias"])
    return ad.mul_vector(out, dirichlet_envelope(grid))


def forward_for(model, u0: np.ndarray, c: np.ndarray, grid: Grid) -> Tensor:
    """Dispatch on model type; shared by training and evaluation."""
    if isinstance(model, FnoModel):
        return fno_forward(model, u0, c, grid)
    if isinstance(model, DeepOnetModel):
        return deeponet_forward(model, u0, c, grid)
    raise TypeError(f"unknown model type {type(model).__name__}")


def model_kind(model) -> str:
    return "fno" if isinstance(model, FnoModel) else "deeponet"


def from_checkpoint(kind: str, params: ParameterStore, config):
    """Rebuild a model object from a loaded parameter store and its config."""
    if kind == "fno":
        return FnoModel(config=config, params=params)
    if kind == "deeponet":
        return DeepOnetModel(config=config, params=params)
    raise ValueError(f"unknown model kind {kind!r}")
