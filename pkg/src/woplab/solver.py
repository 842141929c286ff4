"""Conservative finite-difference solver for the variable-coefficient 1D wave equation.

Solves u_tt = d/dx(c(x)^2 u_x) on [0, 1] with homogeneous Dirichlet boundaries
and zero initial velocity, using an interface-flux spatial discretization and
leapfrog time stepping. The scheme is second order in space and time; interface
wave speeds use harmonic averaging of c^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InstabilityError, InvalidCoefficientError

# Positivity floor for wave-speed fields.
C_MIN = 0.3

# Default CFL number and time horizon used throughout the pipeline.
DEFAULT_CFL = 0.9
DEFAULT_TERMINAL_TIME = 1.0


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0, 1] including both Dirichlet boundary nodes."""

    n_points: int
    dx: float
    xs: np.ndarray

    def __post_init__(self):
        if self.n_points < 3:
            raise DimensionError(f"grid needs at least 3 points, got {self.n_points}")


def make_grid(n_points: int) -> Grid:
    """Build the uniform grid x_i = i/(n_points-1), i = 0..n_points-1."""
    if n_points < 3:
        raise DimensionError(f"grid needs at least 3 points, got {n_points}")
    xs = np.linspace(0.0, 1.0, n_points)
    xs.setflags(write=False)
    return Grid(n_points=n_points, dx=1.0 / (n_points - 1), xs=xs)


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping parameters; n_steps * dt equals terminal_time exactly."""

    cfl_number: float
    terminal_time: float
    dt: float
    n_steps: int


def _check_field(values: np.ndarray, grid: Grid, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != grid.n_points:
        raise DimensionError(
            f"{name} must be a 1-D array of length {grid.n_points}, got shape {arr.shape}"
        )
    return arr


def _check_coefficient(c: np.ndarray, grid: Grid) -> np.ndarray:
    arr = _check_field(c, grid, "coefficient field")
    if not np.all(np.isfinite(arr)):
        raise InvalidCoefficientError("coefficient field contains non-finite entries")
    if np.min(arr) <= 0.0:
        raise InvalidCoefficientError(
            f"coefficient field must be positive everywhere, min = {np.min(arr)}"
        )
    return arr


def harmonic_interface_speed_sq(c_sq_left, c_sq_right):
    """Harmonic mean 2ab/(a+b) of squared speeds at a cell interface.

    Symmetric in its arguments; the result lies between min and max of the inputs.
    Accepts scalars or arrays elementwise.
    """
    a = np.asarray(c_sq_left, dtype=np.float64)
    b = np.asarray(c_sq_right, dtype=np.float64)
    if np.any(a <= 0.0) or np.any(b <= 0.0):
        raise InvalidCoefficientError("squared speeds must be positive")
    out = 2.0 * a * b / (a + b)
    if out.ndim == 0:
        return float(out)
    return out


def _interface_speed_sq(c: np.ndarray) -> np.ndarray:
    """Squared interface speeds c^2_{i+1/2}, i = 0..n-2, via harmonic averaging."""
    csq = c * c
    return harmonic_interface_speed_sq(csq[:-1], csq[1:])


def flux_divergence(u: np.ndarray, c: np.ndarray, grid: Grid) -> np.ndarray:
    """Discrete d/dx(c^2 u_x) via interface fluxes F_{i+1/2} = c^2_{i+1/2}(u_{i+1}-u_i)/dx.

    Returns (F_{i+1/2} - F_{i-1/2})/dx at interior nodes; boundary entries are 0
    since Dirichlet nodes are never updated.
    """
    u = _check_field(u, grid, "wave field")
    c = _check_coefficient(c, grid)
    return _flux_divergence_raw(u, _interface_speed_sq(c), grid.dx)


def _flux_divergence_raw(u: np.ndarray, csq_half: np.ndarray, dx: float) -> np.ndarray:
    flux = csq_half * np.diff(u) / dx
    out = np.zeros_like(u)
    out[1:-1] = np.diff(flux) / dx
    return out


def cfl_timestep(
    c: np.ndarray,
    grid: Grid,
    cfl_number: float = DEFAULT_CFL,
    terminal_time: float = DEFAULT_TERMINAL_TIME,
) -> SolverConfig:
    """Choose dt from the CFL bound max(c)*dt/dx <= cfl_number, snapped onto T.

    dt is reduced from the CFL-limited maximum so that n_steps * dt equals
    terminal_time exactly. Values of cfl_number above 1 are accepted so that
    deliberately unstable configurations can be constructed; the stable regime
    for this scheme is (0, 1].
    """
    if cfl_number <= 0.0:
        raise ValueError(f"cfl_number must be positive, got {cfl_number}")
    if terminal_time <= 0.0:
        raise ValueError(f"terminal_time must be positive, got {terminal_time}")
    c = _check_coefficient(c, grid)
    dt_max = cfl_number * grid.dx / float(np.max(c))
    n_steps = math.ceil(terminal_time / dt_max)
    return SolverConfig(
        cfl_number=cfl_number,
        terminal_time=terminal_time,
        dt=terminal_time / n_steps,
        n_steps=n_steps,
    )


def taylor_first_step(u0: np.ndarray, c: np.ndarray, grid: Grid, dt: float) -> np.ndarray:
    """First time level u^1 = u^0 + (dt^2/2) d/dx(c^2 u_x), assuming zero initial velocity."""
    return u0 + 0.5 * dt * dt * flux_divergence(u0, c, grid)


def leapfrog_step(
    u_prev: np.ndarray, u_curr: np.ndarray, c: np.ndarray, grid: Grid, dt: float
) -> np.ndarray:
    """One leapfrog update u^{n+1} = 2u^n - u^{n-1} + dt^2 d/dx(c^2 u_x)^n."""
    u_prev = _check_field(u_prev, grid, "previous field")
    return 2.0 * u_curr - u_prev + dt * dt * flux_divergence(u_curr, c, grid)


def solve_terminal(
    u0: np.ndarray, c: np.ndarray, grid: Grid, config: SolverConfig
) -> np.ndarray:
    """March the wave field to t = terminal_time and return u(x, T).

    Raises InstabilityError naming the step index if the field goes non-finite.
    """
    u0 = _check_field(u0, grid, "initial field")
    c = _check_coefficient(c, grid)
    return _march(u0, _interface_speed_sq(c), grid, config)


def _march(
    u0: np.ndarray,
    csq_half: np.ndarray,
    grid: Grid,
    config: SolverConfig,
    divergence=_flux_divergence_raw,
) -> np.ndarray:
    dt = config.dt
    dx = grid.dx
    half_dt2 = 0.5 * dt * dt
    dt2 = dt * dt
    # Overflow past float range is expected for unstable configs; the finite
    # check below converts it into a diagnosable error instead of a warning.
    with np.errstate(over="ignore", invalid="ignore"):
        u_prev = u0.copy()
        u_curr = u0 + half_dt2 * divergence(u0, csq_half, dx)
        if not np.all(np.isfinite(u_curr)):
            raise InstabilityError(1)
        for step in range(2, config.n_steps + 1):
            u_next = 2.0 * u_curr - u_prev + dt2 * divergence(u_curr, csq_half, dx)
            if not np.all(np.isfinite(u_next)):
                raise InstabilityError(step)
            u_prev = u_curr
            u_curr = u_next
    return u_curr


def analytic_standing_wave(k: int, c_const: float, t: float, grid: Grid) -> np.ndarray:
    """Exact solution sin(k*pi*x) cos(k*pi*c*t) of the constant-coefficient problem."""
    if k < 1:
        raise ValueError(f"mode number must be >= 1, got {k}")
    if c_const <= 0.0:
        raise InvalidCoefficientError(f"constant speed must be positive, got {c_const}")
    u = np.sin(k * np.pi * grid.xs) * np.cos(k * np.pi * c_const * t)
    u[0] = 0.0
    u[-1] = 0.0
    return u


def relative_l2_field(pred: np.ndarray, truth: np.ndarray) -> float:
    """||pred - truth||_2 / ||truth||_2 over grid values."""
    denom = float(np.linalg.norm(truth))
    if denom == 0.0:
        raise ValueError("relative error undefined for a zero-norm reference field")
    return float(np.linalg.norm(pred - truth)) / denom


def convergence_study(
    k: int,
    c_const: float,
    resolutions,
    terminal_time: float = DEFAULT_TERMINAL_TIME,
    cfl: float = DEFAULT_CFL,
    divergence=_flux_divergence_raw,
) -> list[tuple[int, float]]:
    """Error against the analytic standing wave at each resolution.

    Joint dx/dt refinement through the CFL tie means errors should fall by ~4x
    per doubling for the second-order scheme. The divergence hook exists so a
    deliberately degraded stencil can be injected as a negative control.
    """
    resolutions = list(resolutions)
    if any(n < 9 for n in resolutions):
        raise ValueError("resolutions must each be >= 9")
    if any(b <= a for a, b in zip(resolutions, resolutions[1:])):
        raise ValueError("resolutions must be strictly increasing")
    results = []
    for n_points in resolutions:
        grid = make_grid(n_points)
        c = np.full(n_points, c_const)
        u0 = analytic_standing_wave(k, c_const, 0.0, grid)
        if terminal_time == 0.0:
            u_num = u0
        else:
            config = cfl_timestep(c, grid, cfl, terminal_time)
            u_num = _march(u0, _interface_speed_sq(c), grid, config, divergence)
        u_exact = analytic_standing_wave(k, c_const, terminal_time, grid)
        results.append((n_points, relative_l2_field(u_num, u_exact)))
    return results


def first_order_divergence(u: np.ndarray, csq_half: np.ndarray, dx: float) -> np.ndarray:
    """Flux divergence with an O(dx) calibration defect; negative control.

    The (1 + dx) factor keeps the stencil symmetric and stable but degrades
    convergence to first order, so order-of-accuracy checks must reject it.
    """
    return (1.0 + dx) * _flux_divergence_raw(u, csq_half, dx)
