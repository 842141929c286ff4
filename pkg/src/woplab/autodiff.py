"""Dense-tensor arithmetic with recorded-tape reverse-mode differentiation.

Covers exactly the primitives the two surrogate architectures need: affine
maps (flat and pointwise-over-grid), GELU/ReLU, truncated real DFT and its
inverse, per-mode complex mixing, and the relative-L2 training loss. Complex
tensors follow the interleaved real/imaginary convention of complex128, and
gradients of real losses with respect to complex values are stored as
dL/dRe + i dL/dIm.

Recording is scoped: ops executed inside ``tape.recording()`` append nodes to
that tape; outside any recording they are plain forward evaluations. A tape is
single-writer and can be differentiated once.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import (
    DegenerateTargetError,
    DimensionError,
    NonScalarLossError,
    StaleTapeError,
)

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Thin wrapper over a float64 or complex128 ndarray.

    constant=True marks leaf inputs whose gradients are never needed, letting
    ops skip that part of the backward work.
    """

    __slots__ = ("data", "constant")

    def __init__(self, data, constant: bool = False):
        arr = np.asarray(data)
        if np.iscomplexobj(arr):
            arr = arr.astype(np.complex128, copy=False)
        else:
            arr = arr.astype(np.float64, copy=False)
        self.data = arr
        self.constant = constant

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


@dataclass
class Node:
    out: Tensor
    inputs: tuple
    backward_fn: object  # grad_out -> tuple of grads aligned with inputs (None = skip)


class ParameterStore:
    """Named parameter tensors with stable, deterministic iteration order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, values: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        # np.array (not ascontiguousarray) so 0-d scalars keep their shape
        t = Tensor(np.array(values, copy=True, order="C"))
        if not np.all(np.isfinite(t.data.view(np.float64) if t.is_complex else t.data)):
            raise ValueError(f"parameter {name!r} has non-finite entries")
        self._params[name] = t
        return t

    def __len__(self):
        return len(self._params)

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def tensors(self):
        return list(self._params.values())

    def entry_count(self) -> int:
        """Total scalar entries, counting complex values as two reals."""
        return sum(
            t.data.size * (2 if t.is_complex else 1) for t in self._params.values()
        )

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self._params.items():
            np.copyto(t.data, values[name])


_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "woplab_active_tape", default=None
)


class Tape:
    """Ordered op recording; topological order equals recording order."""

    def __init__(self, params: ParameterStore | None = None):
        self.params = params
        self.nodes: list[Node] = []
        self._consumed = False

    @contextlib.contextmanager
    def recording(self):
        token = _ACTIVE_TAPE.set(self)
        try:
            yield self
        finally:
            _ACTIVE_TAPE.reset(token)


def _record(out: Tensor, inputs: tuple, backward_fn) -> Tensor:
    tape = _ACTIVE_TAPE.get()
    if tape is not None:
        tape.nodes.append(Node(out, inputs, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> list[np.ndarray]:
    """Reverse-accumulate d(loss)/d(param) for every tensor in the tape's store.

    Returns gradient arrays in ParameterStore order. A tape can be consumed
    once; re-running without re-recording raises StaleTapeError.
    """
    if tape._consumed:
        raise StaleTapeError("tape already differentiated; re-record the forward pass")
    if loss.data.shape != ():
        raise NonScalarLossError(f"loss must be scalar, got shape {loss.data.shape}")
    tape._consumed = True
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward_fn(g)):
            if gi is None:
                continue
            key = id(inp)
            held = grads.get(key)
            # no in-place accumulation: gi may alias upstream buffers
            grads[key] = gi if held is None else held + gi
    if tape.params is None:
        return []
    return [
        grads.get(id(t), np.zeros_like(t.data)) for t in tape.params.tensors()
    ]


# --- primitives ---------------------------------------------------------------


def _require(cond: bool, message: str):
    if not cond:
        raise DimensionError(message)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b for x:[batch, in], w:[in, out], b:[out]."""
    _require(x.data.ndim == 2 and w.data.ndim == 2, "affine expects 2-D x and w")
    _require(x.data.shape[1] == w.data.shape[0], "affine inner dimensions differ")
    _require(b.data.shape == (w.data.shape[1],), "affine bias shape mismatch")
    out = Tensor(x.data @ w.data + b.data)

    def bwd(g):
        gx = None if x.constant else g @ w.data.T
        return gx, x.data.T @ g, g.sum(axis=0)

    return _record(out, (x, w, b), bwd)


def pointwise_affine(v: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map applied independently at every grid point of v:[batch, cin, n]."""
    _require(v.data.ndim == 3, "pointwise_affine expects [batch, channels, n]")
    _require(w.data.ndim == 2 and v.data.shape[1] == w.data.shape[0], "channel mismatch")
    wt = np.ascontiguousarray(w.data.T)
    out_data = np.matmul(wt, v.data)
    out_data += b.data[:, None]
    out = Tensor(out_data)

    def bwd(g):
        gv = None if v.constant else np.matmul(w.data, g)
        gw = np.tensordot(v.data, g, axes=([0, 2], [0, 2]))
        gb = g.sum(axis=(0, 2))
        return gv, gw, gb

    return _record(out, (v, w, b), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    _require(a.data.shape == b.data.shape, "add expects identical shapes")
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (g, g))


def add_scalar(x: Tensor, s: Tensor) -> Tensor:
    """Broadcast-add a scalar parameter."""
    _require(s.data.shape == (), "add_scalar expects a 0-d scalar tensor")
    out = Tensor(x.data + s.data)
    return _record(out, (x, s), lambda g: (g, g.sum()))


def scale(x: Tensor, alpha: float) -> Tensor:
    out = Tensor(alpha * x.data)
    return _record(out, (x,), lambda g: (alpha * g,))


def mul_vector(x: Tensor, vec: np.ndarray) -> Tensor:
    """Multiply by a fixed vector broadcast over leading axes (e.g. an envelope)."""
    vec = np.asarray(vec, dtype=np.float64)
    _require(x.data.shape[-1] == vec.shape[0], "mul_vector length mismatch")
    out = Tensor(x.data * vec)
    return _record(out, (x,), lambda g: (g * vec,))


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    return _record(out, (x,), lambda g: (g.reshape(x.data.shape),))


def gelu(x: Tensor) -> Tensor:
    """Exact-erf GELU 0.5 x (1 + erf(x / sqrt(2)))."""
    e = np.multiply(x.data, _INV_SQRT2)
    erf(e, out=e)
    out_data = e + 1.0
    out_data *= x.data
    out_data *= 0.5
    out = Tensor(out_data)

    def bwd(g):
        d = np.multiply(x.data, x.data)
        d *= -0.5
        np.exp(d, out=d)
        d *= x.data
        d *= _INV_SQRT_2PI
        half = np.multiply(e, 0.5)
        half += 0.5
        d += half
        d *= g
        return (d,)

    return _record(out, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    """max(x, 0); subgradient at 0 is 0."""
    out = Tensor(np.maximum(x.data, 0.0))

    def bwd(g):
        return (g * (x.data > 0.0),)

    return _record(out, (x,), bwd)


def pad_last(x: Tensor, pad: int) -> Tensor:
    """Append pad zeros along the last axis."""
    if pad == 0:
        return x
    n = x.data.shape[-1]
    out_data = np.zeros(x.data.shape[:-1] + (n + pad,), dtype=x.data.dtype)
    out_data[..., :n] = x.data
    out = Tensor(out_data)
    return _record(out, (x,), lambda g: (np.ascontiguousarray(g[..., :n]),))


def crop_last(x: Tensor, n: int) -> Tensor:
    """Keep the first n entries of the last axis."""
    full = x.data.shape[-1]
    if n == full:
        return x
    _require(n < full, "crop length exceeds axis length")
    out = Tensor(np.ascontiguousarray(x.data[..., :n]))

    def bwd(g):
        gx = np.zeros(x.data.shape, dtype=g.dtype)
        gx[..., :n] = g
        return (gx,)

    return _record(out, (x,), bwd)


# Interleaved DFT kernel tables per (n, modes). Column/row pairs carry
# (cos, -sin) so a contiguous complex array viewed as float64 multiplies
# straight through a single real gemm. For small retained-mode counts this
# beats pocketfft by a wide margin; full-spectrum calls fall back to FFTs.
_SPECTRAL_TABLES: dict[tuple[int, int], tuple] = {}


def _spectral_tables(n: int, modes: int):
    key = (n, modes)
    hit = _SPECTRAL_TABLES.get(key)
    if hit is None:
        theta = 2.0 * np.pi * np.outer(np.arange(n), np.arange(modes)) / n
        fwd = np.empty((n, 2 * modes))
        fwd[:, 0::2] = np.cos(theta)
        fwd[:, 1::2] = -np.sin(theta)
        weights = _irdft_weights(n, modes)
        scaled = fwd * (np.repeat(weights, 2) / n)
        hit = _SPECTRAL_TABLES[key] = (
            fwd,
            np.ascontiguousarray(fwd.T),
            scaled,
            np.ascontiguousarray(scaled.T),
        )
    return hit


def _irdft_weights(n: int, modes: int) -> np.ndarray:
    weights = np.full(modes, 2.0)
    weights[0] = 1.0
    if n % 2 == 0 and modes == n // 2 + 1:
        weights[-1] = 1.0
    return weights


def _use_gemm_path(n: int, modes: int) -> bool:
    return modes <= max(1, n // 4)


def rdft_truncated(x: Tensor, modes: int) -> Tensor:
    """Unnormalized real-to-complex DFT over the last axis, keeping modes 0..m-1."""
    n = x.data.shape[-1]
    limit = n // 2 + 1
    if not 1 <= modes <= limit:
        raise DimensionError(f"modes {modes} out of range [1, {limit}] for n={n}")
    lead = x.data.shape[:-1]
    if _use_gemm_path(n, modes):
        fwd, fwd_t, _, _ = _spectral_tables(n, modes)
        flat = (x.data.reshape(-1, n) @ fwd).view(np.complex128)
        out = Tensor(flat.reshape(lead + (modes,)))

        def bwd(g):
            # adjoint of truncate-after-rfft: gx_j = Re(sum_k G_k e^{2 pi i jk/n})
            flat_g = np.ascontiguousarray(g.reshape(-1, modes)).view(np.float64)
            return ((flat_g @ fwd_t).reshape(lead + (n,)),)

    else:
        out = Tensor(np.ascontiguousarray(np.fft.rfft(x.data, axis=-1)[..., :modes]))

        def bwd(g):
            padded = np.zeros(lead + (n,), dtype=np.complex128)
            padded[..., :modes] = g
            return (n * np.real(np.fft.ifft(padded, axis=-1)),)

    return _record(out, (x,), bwd)


def irdft(x: Tensor, n: int) -> Tensor:
    """Inverse real DFT with 1/n normalization; modes beyond the input are zero.

    Imaginary parts at mode 0 (and the Nyquist mode when present) do not
    influence the output, matching the Hermitian-symmetric inverse; the adjoint
    is exactly consistent with that behavior.
    """
    modes = x.data.shape[-1]
    limit = n // 2 + 1
    if modes > limit:
        raise DimensionError(f"{modes} modes exceed capacity {limit} for length {n}")
    lead = x.data.shape[:-1]
    if _use_gemm_path(n, modes):
        _, _, scaled, scaled_t = _spectral_tables(n, modes)
        flat = np.ascontiguousarray(x.data.reshape(-1, modes)).view(np.float64)
        out = Tensor((flat @ scaled_t).reshape(lead + (n,)))

        def bwd(g):
            spec = (g.reshape(-1, n) @ scaled).view(np.complex128)
            return (spec.reshape(lead + (modes,)),)

    else:
        full = np.zeros(lead + (limit,), dtype=np.complex128)
        full[..., :modes] = x.data
        out = Tensor(np.fft.irfft(full, n, axis=-1))

        def bwd(g):
            spec = np.fft.rfft(g, axis=-1)[..., :modes]
            spec *= _irdft_weights(n, modes) / n
            return (spec,)

    return _record(out, (x,), bwd)


def mode_mix(x: Tensor, r: Tensor) -> Tensor:
    """Per-mode complex channel mixing: y[b,:,k] = r[k]^T x[b,:,k].

    x: [batch, c_in, m] complex; r: [m, c_in, c_out] complex.
    Gradients flow through real and imaginary parts of both operands.
    """
    _require(x.data.ndim == 3 and r.data.ndim == 3, "mode_mix expects rank-3 tensors")
    _require(
        x.data.shape[2] == r.data.shape[0] and x.data.shape[1] == r.data.shape[1],
        f"mode_mix shapes {x.data.shape} / {r.data.shape} do not conform",
    )
    xk = np.ascontiguousarray(x.data.transpose(2, 0, 1))  # [m, batch, c_in]
    yk = np.matmul(xk, r.data)  # [m, batch, c_out]
    out = Tensor(np.ascontiguousarray(yk.transpose(1, 2, 0)))

    def bwd(g):
        gk = np.ascontiguousarray(g.transpose(2, 0, 1))  # [m, batch, c_out]
        gr = np.matmul(np.conj(xk).transpose(0, 2, 1), gk)
        gx = np.matmul(gk, np.conj(r.data).transpose(0, 2, 1))
        return np.ascontiguousarray(gx.transpose(1, 2, 0)), gr

    return _record(out, (x, r), bwd)


def matmul_nt(a: Tensor, b: Tensor) -> Tensor:
    """a @ b.T for a:[p, k], b:[q, k]; the DeepONet branch-trunk combine."""
    _require(
        a.data.ndim == 2 and b.data.ndim == 2 and a.data.shape[1] == b.data.shape[1],
        "matmul_nt expects [p, k] and [q, k]",
    )
    out = Tensor(a.data @ b.data.T)

    def bwd(g):
        return g @ b.data, g.T @ a.data

    return _record(out, (a, b), bwd)


def relative_l2_loss(pred: Tensor, target: Tensor | np.ndarray) -> Tensor:
    """Batch mean of per-sample ||pred - target||_2 / ||target||_2."""
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target, np.float64)
    _require(pred.data.shape == tgt.shape, "prediction/target shape mismatch")
    _require(pred.data.ndim == 2, "relative_l2_loss expects [batch, n]")
    resid = pred.data - tgt
    resid_norm = np.sqrt(np.einsum("ij,ij->i", resid, resid))
    target_norm = np.sqrt(np.einsum("ij,ij->i", tgt, tgt))
    if np.any(target_norm == 0.0):
        bad = int(np.argmin(target_norm))
        raise DegenerateTargetError(f"target sample {bad} has zero norm")
    batch = pred.data.shape[0]
    out = Tensor(np.mean(resid_norm / target_norm))

    def grad_pred(g):
        safe = np.where(resid_norm > 0.0, resid_norm, 1.0)
        coeff = np.where(resid_norm > 0.0, 1.0 / (safe * target_norm), 0.0)
        return resid * (float(g) / batch * coeff)[:, None]

    if isinstance(target, Tensor):
        return _record(out, (pred, target), lambda g: (grad_pred(g), None))
    return _record(out, (pred,), lambda g: (grad_pred(g),))


# --- finite-difference gradient checking --------------------------------------


@dataclass
class GradientCheckReport:
    max_rel_error: float
    per_param: dict[str, float]
    tol: float
    entries_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def gradient_check(
    f,
    params: ParameterStore,
    h: float = 1e-5,
    tol: float = 1e-6,
    max_entries: int = 50,
    seed: int = 0,
) -> GradientCheckReport:
    """Compare tape gradients of the scalar function f() against central differences.

    f reads parameters from `params` and must be deterministic. Every parameter
    entry is checked (real and imaginary parts separately), or a seeded random
    subsample of max_entries per tensor for large tensors. Relative discrepancy
    uses |a - fd| / max(|a|, |fd|, 1e-6).
    """
    tape = Tape(params)
    with tape.recording():
        loss = f()
    analytic = backward(tape, loss)

    rng = np.random.default_rng(seed)
    per_param: dict[str, float] = {}
    checked = 0
    worst = 0.0
    for (name, tensor), grad in zip(params.items(), analytic):
        flat = tensor.data.view(np.float64).reshape(-1)
        grad_flat = np.ascontiguousarray(grad).view(np.float64).reshape(-1)
        size = flat.shape[0]
        if size <= max_entries:
            idxs = np.arange(size)
        else:
            idxs = rng.choice(size, size=max_entries, replace=False)
        local = 0.0
        for idx in idxs:
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = float(f().data)
            flat[idx] = orig - h
            f_minus = float(f().data)
            flat[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            a = grad_flat[idx]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
            local = max(local, rel)
            checked += 1
        per_param[name] = local
        worst = max(worst, local)
    return GradientCheckReport(
        max_rel_error=worst, per_param=per_param, tol=tol, entries_checked=checked
    )
