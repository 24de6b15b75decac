"""Dense linear-algebra, integration and fitting kernels shared by the physics modules.

All functions are pure: they take arrays and return new arrays, and raise
`NumericalError` (or `ValueError` for malformed input) instead of returning
non-finite results.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-12


class NumericalError(RuntimeError):
    """A numerical kernel failed to produce a trustworthy result."""


class IntegrationError(NumericalError):
    def __init__(self, message: str, t_fail: float):
        super().__init__(f"{message} (t = {t_fail:.12g})")
        self.t_fail = t_fail


def as_matrix(a, square: bool = False) -> np.ndarray:
    """Validate `a` as a finite complex 2-D array."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def expm(a, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``exp(a * t)``.

    Uses scaling-and-squaring with Pade approximants (scipy's implementation).
    Raises `NumericalError` if the result overflows.
    """
    m = as_matrix(a, square=True)
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(m * t)
    if not np.all(np.isfinite(out)):
        raise NumericalError(
            f"expm overflow: ||A t||_1 = {np.linalg.norm(m, 1) * abs(t):.3g}"
        )
    return out


def expm_eig(a, t: float = 1.0) -> np.ndarray:
    """Eigendecomposition route to ``exp(a * t)``; only for cross-checks on
    diagonalizable input."""
    m = as_matrix(a, square=True)
    w, v = np.linalg.eig(m)
    return (v * np.exp(w * t)) @ np.linalg.inv(v)


class EigResult(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray
    condition: float


def eig(a) -> EigResult:
    """Right eigenpairs of a dense square matrix.

    `condition` is the 2-norm condition number of the eigenvector matrix; a
    huge value signals (near-)Jordan structure.
    """
    m = as_matrix(a, square=True)
    try:
        w, v = scipy.linalg.eig(m, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    scale = max(np.linalg.norm(m, 2), np.finfo(float).tiny)
    residual = np.linalg.norm(m @ v - v * w, axis=0) / scale
    if np.max(residual) > 1e-9:
        raise NumericalError(
            f"eigenpair residual {np.max(residual):.3g} exceeds 1e-9"
        )
    with np.errstate(divide="ignore"):
        cond = float(np.linalg.cond(v))
    if not np.isfinite(cond):
        cond = np.inf
    return EigResult(w, v, cond)


def eigvals(a) -> np.ndarray:
    """Eigenvalues only, for sweeps where eigenvectors are not needed."""
    m = as_matrix(a, square=True)
    try:
        return scipy.linalg.eigvals(m, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc


def integrate_ode(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    t0: float,
    t1: float,
    rel_tol: float = DEFAULT_RTOL,
    abs_tol: float = DEFAULT_ATOL,
    t_eval: Sequence[float] | None = None,
    method: str = "DOP853",
):
    """Integrate ``y' = rhs(t, y)`` from `t0` to `t1` with an embedded
    Runge-Kutta pair (Dormand-Prince 8(5,3) by default).

    Returns the state at `t1`, or, when `t_eval` is given, a tuple
    ``(y_t1, samples)`` where ``samples[:, i]`` is the state at ``t_eval[i]``.
    Complex states are supported.
    """
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    y0 = np.asarray(y0)
    times = None
    if t_eval is not None:
        times = np.asarray(t_eval, dtype=float)
        if times.size and (times.min() < t0 or times.max() > t1):
            raise ValueError("t_eval must lie inside [t0, t1]")
    if t1 == t0:
        if times is not None:
            return y0.copy(), np.repeat(y0[:, None], times.size, axis=1)
        return y0.copy()
    grid = None if times is None else np.union1d(times, [t1])
    sol = solve_ivp(rhs, (t0, t1), y0, method=method, rtol=rel_tol, atol=abs_tol, t_eval=grid)
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if sol.t.size else t0
        raise IntegrationError(f"ODE integration failed: {sol.message}", t_fail)
    y1 = sol.y[:, -1]
    if not np.all(np.isfinite(y1)):
        raise IntegrationError("non-finite state", float(sol.t[-1]))
    if times is None:
        return y1
    return y1, sol.y[:, np.searchsorted(grid, times)]


def integrate_until(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    t0: float,
    t1: float,
    event: Callable[[float, np.ndarray], float],
    rel_tol: float = DEFAULT_RTOL,
    abs_tol: float = DEFAULT_ATOL,
    method: str = "DOP853",
) -> tuple[float, np.ndarray, bool]:
    """Integrate until `t1` or until `event(t, y)` crosses zero downwards.

    Returns ``(t_stop, y_stop, hit)``.
    """
    def ev(t, y):
        return event(t, y)

    ev.terminal = True
    ev.direction = -1
    sol = solve_ivp(rhs, (t0, t1), np.asarray(y0), method=method, rtol=rel_tol, atol=abs_tol, events=ev)
    if sol.status == -1:
        t_fail = float(sol.t[-1]) if sol.t.size else t0
        raise IntegrationError(f"ODE integration failed: {sol.message}", t_fail)
    if sol.status == 1:
        t_stop, y_stop = float(sol.t_events[0][0]), sol.y_events[0][0]
    else:
        t_stop, y_stop = float(sol.t[-1]), sol.y[:, -1]
    if not np.all(np.isfinite(y_stop)):
        raise IntegrationError("non-finite state", t_stop)
    return t_stop, y_stop, sol.status == 1


class ExpFit(NamedTuple):
    c: float
    kappa: float
    residual: float
    degenerate: bool = False


class BiasedExpFit(NamedTuple):
    a: float
    b: float
    kappa: float
    residual: float
    degenerate: bool = False


def fit_exponential(xs, ys) -> ExpFit:
    """Least-squares fit of ``c * exp(kappa * x)`` as a line through ``(x, ln y)``.

    `residual` is the RMS of the log-residuals.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D and of equal length")
    if x.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise ValueError("fit_exponential requires finite, strictly positive ys")
    ly = np.log(y)
    kappa, lnc = np.polyfit(x, ly, 1)
    res = ly - (lnc + kappa * x)
    return ExpFit(float(np.exp(lnc)), float(kappa), float(np.sqrt(np.mean(res**2))))


def _biased_linear(x, y, kappa):
    basis = np.column_stack([np.ones_like(x), np.exp(kappa * (x - x[0]))])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    r = y - basis @ coef
    return coef, float(np.sqrt(np.mean(r**2)))


def fit_biased_exponential(xs, ys, n_grid: int = 400) -> BiasedExpFit:
    """Fit ``a + b * exp(kappa * x)``.

    For each trial rate on a log-spaced grid (both signs) the offset and
    prefactor follow from linear least squares; the best grid rate is then
    polished by golden-section search. `residual` is the RMS residual in y.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-D and of equal length")
    if x.size < 4:
        raise ValueError("need at least 4 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite data")
    order = np.argsort(x)
    x, y = x[order], y[order]
    span = x[-1] - x[0]
    if span <= 0:
        raise ValueError("xs must not all be equal")

    mags = np.logspace(-3, np.log10(50.0), n_grid // 2) / span
    grid = np.concatenate([-mags[::-1], mags])
    resid = np.array([_biased_linear(x, y, k)[1] for k in grid])
    i = int(np.argmin(resid))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, grid.size - 1)]
    kappa = grid[i]
    if lo < kappa < hi:
        opt = minimize_scalar(
            lambda k: _biased_linear(x, y, k)[1],
            bracket=(lo, kappa, hi),
            method="golden",
            options={"xtol": 1e-12},
        )
        if opt.fun <= resid[i]:
            kappa = float(opt.x)
    (a, b_shift), res = _biased_linear(x, y, kappa)
    b = b_shift * np.exp(-kappa * x[0])

    scale = max(np.max(np.abs(y)), np.finfo(float).tiny)
    variation = abs(b_shift) * np.ptp(np.exp(kappa * (x - x[0])))
    degenerate = bool(variation < 1e-8 * scale)
    if degenerate:
        a, b, res = float(np.mean(y)), 0.0, float(np.sqrt(np.mean((y - np.mean(y)) ** 2)))
    return BiasedExpFit(float(a), float(b), float(kappa), float(res), degenerate)


def dft_at(samples, period: float, frequencies) -> np.ndarray:
    """Finite-window Fourier sum ``(1/W) sum_k s_k exp(-i w k T)`` at each
    requested angular frequency ``w``; samples are spaced by `period`."""
    s = np.asarray(samples, dtype=complex)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("need a non-empty 1-D sample list")
    w = np.atleast_1d(np.asarray(frequencies, dtype=float))
    k = np.arange(s.size)
    phases = np.exp(-1j * np.outer(w, k) * period)
    return phases @ s / s.size
