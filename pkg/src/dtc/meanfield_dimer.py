"""Mean-field dynamics of the dissipative two-site model.

The state is the spin vector ``S = (Sx, Sy, Sz)`` on the sphere of radius
1/2, or its polar/azimuth angles ``(theta, phi)`` with
``S = (cos(phi) sin(theta), sin(phi) sin(theta), cos(theta)) / 2``.
Only the combinations ``U N``, ``gamma N`` and ``alpha`` (in units of the
tunneling) enter the equations.

Trajectories are integrated in angle form, which keeps ``|S| = 1/2`` by
construction. The angle form is singular at its poles, where self-trapped
attractors sit, so each trajectory carries its own choice of polar axis and
switches axis before it gets close to a pole.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .liouvillian import DriveProtocol
from .numerics import DEFAULT_ATOL, DEFAULT_RTOL, IntegrationError, integrate_ode, integrate_until

POLE_GUARD = 1e-6
CLUSTER_RADIUS = 1e-3
MAX_PERIOD = 8
# centers of the dissipation-free flow count as (Lyapunov) stable
NEUTRAL_TOL = 1e-8


@dataclass(frozen=True)
class MfParams:
    UN: float
    gammaN: float
    alpha: float
    drive: DriveProtocol

    def __post_init__(self):
        if self.gammaN < 0:
            raise ValueError(f"gammaN must be >= 0, got {self.gammaN}")


@dataclass(frozen=True)
class FixedPoint:
    state: np.ndarray
    jacobian_eigenvalues: np.ndarray
    stable: bool

    @property
    def angles(self) -> tuple[float, float]:
        th, ph = spin_to_angles(self.state)
        return float(th), float(ph)


def angles_to_spin(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return 0.5 * np.array([np.cos(phi) * np.sin(theta), np.sin(phi) * np.sin(theta), np.cos(theta)])


def spin_to_angles(S) -> tuple[np.ndarray, np.ndarray]:
    S = np.asarray(S, dtype=float)
    r = np.sqrt(np.sum(S**2, axis=0))
    theta = np.arccos(np.clip(S[2] / r, -1.0, 1.0))
    phi = np.mod(np.arctan2(S[1], S[0]), 2 * np.pi)
    return theta, phi


def spin_rhs(S, J: float, p: MfParams) -> np.ndarray:
    """Time derivative of the spin vector; `S` may carry trailing batch axes."""
    sx, sy, sz = S
    g = 8.0 * p.gammaN
    return np.array([
        -p.alpha * sy - 2 * p.UN * sy * sz + g * (sz * sz + sy * sy),
        2 * J * sz + p.alpha * sx + 2 * p.UN * sx * sz - g * sy * sx,
        -2 * J * sy - g * sz * sx,
    ])


def angle_rhs(a, J: float, p: MfParams, pole_guard: float = POLE_GUARD) -> np.ndarray:
    """Time derivative of ``(theta, phi)``; raises near the poles."""
    theta, phi = np.asarray(a[0], dtype=float), np.asarray(a[1], dtype=float)
    s = np.sin(theta)
    if np.any(np.abs(s) < pole_guard):
        raise ValueError("angle form is singular within the pole guard; use spin_rhs")
    c = np.cos(theta)
    g = 4.0 * p.gammaN
    return np.array([
        2 * J * np.sin(phi) + g * c * np.cos(phi),
        2 * J * c / s * np.cos(phi) + p.alpha + p.UN * c - g * np.sin(phi) / s,
    ])


def angle_jacobian(theta: float, phi: float, J: float, p: MfParams, h: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian of `angle_rhs`."""
    jac = np.empty((2, 2))
    for k, (dt, dp) in enumerate(((h, 0.0), (0.0, h))):
        fp = angle_rhs((theta + dt, phi + dp), J, p)
        fm = angle_rhs((theta - dt, phi - dp), J, p)
        jac[:, k] = (fp - fm) / (2 * h)
    return jac


def _constant_J(p: MfParams) -> float:
    js = {j for _, j in p.drive.segments}
    if len(js) != 1:
        raise ValueError("fixed points need an undriven (single-valued) tunneling")
    return js.pop()


def find_fixed_points(
    p: MfParams,
    J: float | None = None,
    n_seed: int = 16,
    dedup_radius: float = 1e-6,
    max_iter: int = 200,
) -> list[FixedPoint]:
    """Stationary points of the mean-field equations on the sphere.

    Newton iterations (in angle coordinates) start from an ``n_seed x n_seed``
    lattice; converged roots with ``|rhs| < 1e-10`` are deduplicated and
    classified with the 2x2 angle Jacobian.
    """
    J = _constant_J(p) if J is None else J
    th0 = (np.arange(n_seed) + 0.5) * np.pi / n_seed
    ph0 = np.arange(n_seed) * 2 * np.pi / n_seed
    TH, PH = np.meshgrid(th0, ph0, indexing="ij")
    x = np.array([TH.ravel(), PH.ravel()])
    h = 1e-7
    alive = np.ones(x.shape[1], dtype=bool)
    for _ in range(max_iter):
        f = angle_rhs(x, J, p, pole_guard=0.0)
        jac = np.empty((x.shape[1], 2, 2))
        for k in range(2):
            dx = np.zeros((2, 1))
            dx[k] = h
            jac[:, :, k] = ((angle_rhs(x + dx, J, p, 0.0) - angle_rhs(x - dx, J, p, 0.0)) / (2 * h)).T
        a, b, c, d = jac[:, 0, 0], jac[:, 0, 1], jac[:, 1, 0], jac[:, 1, 1]
        with np.errstate(all="ignore"):
            det = a * d - b * c
            step = -np.array([d * f[0] - b * f[1], a * f[1] - c * f[0]]) / det
        bad = ~np.all(np.isfinite(step), axis=0)
        step[:, bad] = 0.0
        alive &= ~bad
        # damp steps to stay away from the poles
        scale = np.minimum(1.0, 0.5 / np.maximum(np.max(np.abs(step), axis=0), 1e-300))
        x = x + step * scale
        x[0] = np.clip(x[0], 1e-3, np.pi - 1e-3)
        if np.all(np.max(np.abs(step), axis=0)[alive] < 1e-14):
            break
    points: list[FixedPoint] = []
    S_all = angles_to_spin(x[0], x[1])
    for i in np.flatnonzero(alive):
        S = S_all[:, i]
        if np.linalg.norm(spin_rhs(S, J, p)) >= 1e-10:
            continue
        if any(np.linalg.norm(S - fp.state) < dedup_radius for fp in points):
            continue
        th, ph = spin_to_angles(S)
        ev = np.linalg.eigvals(angle_jacobian(float(th), float(ph), J, p))
        points.append(FixedPoint(S, ev, bool(np.all(ev.real < NEUTRAL_TOL))))
    if not points:
        raise RuntimeError("no fixed points found")
    return points


def count_stable(p: MfParams, J: float | None = None) -> int:
    return sum(fp.stable for fp in find_fixed_points(p, J))


def stable_transition(
    gammaN: float,
    alpha: float = 0.0,
    J: float = 1.0,
    bracket: tuple[float, float] = (-10.0, 0.0),
    tol: float = 1e-4,
) -> float:
    """Interaction ``U N`` below which an additional stable fixed point exists
    (one to two for dissipative dimers), by bisection on `bracket`."""
    def n_stable(UN):
        return count_stable(MfParams(UN, gammaN, alpha, DriveProtocol.constant(J, 1.0)), J)

    lo, hi = bracket
    base = n_stable(hi)
    if n_stable(lo) <= base:
        raise RuntimeError(f"no stable-point transition inside {bracket}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if n_stable(mid) > base:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def critical_interaction(gammaN_over_J: float, J: float = 1.0, tol: float = 1e-4) -> float:
    """Measured critical ``U N / J`` of the symmetric undriven dimer."""
    if gammaN_over_J < 0:
        raise ValueError("gammaN/J must be >= 0")
    return stable_transition(gammaN_over_J * J, 0.0, J, tol=tol) / J


def critical_interaction_formula(gammaN_over_J: float) -> float:
    return -2.0 - 8.0 * gammaN_over_J**2


def random_angles(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """`n` points uniform on the sphere."""
    theta = np.arccos(rng.uniform(-1.0, 1.0, n))
    phi = rng.uniform(0.0, 2 * np.pi, n)
    return theta, phi


@dataclass
class StroboscopicSamples:
    """States at ``t = nT`` after the transient; arrays have shape ``(n_record, n_traj)``."""

    theta: np.ndarray
    phi: np.ndarray
    S: np.ndarray

    @property
    def O(self) -> np.ndarray:
        return np.cos(self.theta) / 2


# a trajectory changes chart once sin(theta) in its current chart drops below this
CHART_SWITCH = 0.5


def _chart_index(charts: np.ndarray) -> np.ndarray:
    """Lab components seen as chart ``(x, y, z)``: chart c has its polar
    axis along lab axis c (cyclic relabeling, so handedness is kept)."""
    return np.stack([(charts + 1) % 3, (charts + 2) % 3, charts])


def best_chart(S) -> np.ndarray:
    """Per trajectory, the lab axis along which ``|S|`` has its smallest
    component; the state then sits at ``sin(theta) >= sqrt(2/3)``."""
    return np.argmin(np.abs(np.asarray(S)), axis=0)


class _Charts:
    """Fancy indices mapping lab components to chart components."""

    def __init__(self, charts):
        self.charts = np.asarray(charts)
        self.rows = _chart_index(self.charts)
        self.cols = np.broadcast_to(np.arange(self.charts.size), self.rows.shape)

    def to_lab(self, u: np.ndarray) -> np.ndarray:
        S = np.empty_like(u)
        S[self.rows, self.cols] = u
        return S

    def from_lab(self, S: np.ndarray) -> np.ndarray:
        return S[self.rows, self.cols]

    def rhs(self, theta, phi, J: float, p: MfParams) -> tuple[np.ndarray, np.ndarray]:
        st, ct = np.sin(theta), np.cos(theta)
        u = 0.5 * np.array([np.cos(phi) * st, np.sin(phi) * st, ct])
        du = self.from_lab(spin_rhs(self.to_lab(u), J, p))
        dtheta = -2.0 * du[2] / st
        dphi = (u[0] * du[1] - u[1] * du[0]) / (0.25 * st * st)
        return dtheta, dphi


def chart_rhs(theta, phi, charts, J: float, p: MfParams) -> tuple[np.ndarray, np.ndarray]:
    """Angle derivatives in the given charts; for chart 2 this is `angle_rhs`."""
    return _Charts(np.atleast_1d(charts)).rhs(np.atleast_1d(theta), np.atleast_1d(phi), J, p)


def evolve_spin(
    S0,
    p: MfParams,
    n_periods: int,
    record_from: int = 0,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    form: str = "angle",
    renormalize: bool = True,
) -> np.ndarray:
    """Integrate one or many spin trajectories over whole drive periods.

    `S0` has shape ``(3,)`` or ``(3, K)``. Returns the states at
    ``t = nT`` for ``n = record_from..n_periods`` with shape
    ``(n_periods - record_from + 1, 3, K)``.

    ``form="angle"`` integrates ``(theta, phi)``, which keeps ``|S| = 1/2``
    exactly. Each trajectory uses a polar axis far from its current state
    and switches axis when it nears that chart's pole, so self-trapped
    states near ``Sz = +-1/2`` are handled without a pole guard.
    ``form="spin"`` integrates the three components directly; `renormalize`
    then resets ``|S|`` to 1/2 after every period.
    """
    if form not in ("angle", "spin"):
        raise ValueError(f"unknown form {form!r}")
    S = np.array(S0, dtype=float)
    single = S.ndim == 1
    if single:
        S = S[:, None]
    S *= 0.5 / np.linalg.norm(S, axis=0)
    K = S.shape[1]
    # the embedded-RK error norm is an RMS over all components
    rt, at = rtol / np.sqrt(K), atol / np.sqrt(K)
    out = []
    t = 0.0
    for n in range(n_periods + 1):
        if n >= record_from:
            out.append(S.copy())
        if n == n_periods:
            break
        for d, J in p.drive.segments:
            try:
                if form == "angle":
                    S = _angle_segment(S, J, p, t, t + d, rt, at)
                else:
                    def rhs(_t, y, J=J):
                        return spin_rhs(y.reshape(3, K), J, p).ravel()
                    S = integrate_ode(rhs, S.ravel(), t, t + d, rt, at).reshape(3, K)
            except IntegrationError as exc:
                raise IntegrationError(f"failed in period {n}: {exc}", exc.t_fail) from exc
            t += d
        if form == "spin" and renormalize:
            S *= 0.5 / np.linalg.norm(S, axis=0)
    arr = np.array(out)
    return arr[:, :, 0] if single else arr


def _angle_segment(S, J, p, t0, t1, rt, at) -> np.ndarray:
    K = S.shape[1]
    ch = _Charts(best_chart(S))
    y = np.concatenate(spin_to_angles(ch.from_lab(S)))

    def rhs(_t, y):
        return np.concatenate(ch.rhs(y[:K], y[K:], J, p))

    def near_pole(_t, y):
        return float(np.min(np.abs(np.sin(y[:K])))) - CHART_SWITCH

    t = t0
    while True:
        t, y, hit = integrate_until(rhs, y, t, t1, near_pole, rt, at)
        S = ch.to_lab(angles_to_spin(y[:K], y[K:]))
        if not hit:
            return S
        ch = _Charts(best_chart(S))
        y = np.concatenate(spin_to_angles(ch.from_lab(S)))


def stroboscopic_map(
    p: MfParams,
    initial,
    n_transient: int = 500,
    n_record: int = 50,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> StroboscopicSamples:
    """States at ``t = nT`` for ``n_transient < n <= n_transient + n_record``.

    `initial` is ``(theta, phi)`` with scalar or 1-D array entries.
    """
    th0 = np.atleast_1d(np.asarray(initial[0], dtype=float))
    ph0 = np.atleast_1d(np.asarray(initial[1], dtype=float))
    S0 = angles_to_spin(th0, ph0)
    traj = evolve_spin(S0, p, n_transient + n_record, record_from=n_transient + 1, rtol=rtol, atol=atol)
    theta, phi = spin_to_angles(np.moveaxis(traj, 1, 0))
    return StroboscopicSamples(theta, phi, traj)


def classify_attractor(samples, radius: float = CLUSTER_RADIUS, max_period: int = MAX_PERIOD) -> str:
    """Label a stroboscopic sample sequence ``period-k`` or ``chaotic``.

    `samples` is a ``(n, 3)`` array of spin vectors, or a pair of angle arrays
    ``(theta, phi)``. Samples are clustered greedily (Euclidean distance
    between spin vectors); a cycle is reported when at most `max_period`
    clusters are visited in strict rotation.
    """
    if isinstance(samples, tuple) and len(samples) == 2:
        S = angles_to_spin(samples[0], samples[1]).T
    else:
        S = np.asarray(samples, dtype=float)
    if S.shape[0] < 20:
        raise ValueError("need at least 20 samples")
    centers: list[np.ndarray] = []
    labels = np.empty(S.shape[0], dtype=int)
    for i, s in enumerate(S):
        for c, ctr in enumerate(centers):
            if np.linalg.norm(s - ctr) < radius:
                labels[i] = c
                break
        else:
            if len(centers) >= max_period:
                return "chaotic"
            centers.append(s)
            labels[i] = len(centers) - 1
    k = len(centers)
    if np.array_equal(labels[k:], labels[:-k]) and len(set(labels[:k])) == k:
        return f"period-{k}"
    return "chaotic"


def attractor_period(label: str) -> int | None:
    return int(label.split("-")[1]) if label.startswith("period-") else None


def with_axis(p: MfParams, axis: str, value: float) -> MfParams:
    """Copy of `p` with one scan coordinate replaced. For ``T`` the flip
    segment is kept and the remaining time absorbed by the last segment."""
    if axis == "gammaN":
        return replace(p, gammaN=value)
    if axis == "UN":
        return replace(p, UN=value)
    if axis == "alpha":
        return replace(p, alpha=value)
    if axis == "T":
        segs = list(p.drive.segments)
        head = sum(d for d, _ in segs[:-1])
        if value <= head:
            raise ValueError(f"period {value} does not exceed the fixed segments ({head})")
        segs[-1] = (value - head, segs[-1][1])
        return replace(p, drive=DriveProtocol(tuple(segs)))
    raise ValueError(f"unknown scan axis {axis!r}")


@dataclass
class ScanRecord:
    axis_value: float
    init_seed: int
    sample_index: int
    theta: float
    phi: float
    O_value: float
    attractor_class: str


SCAN_COLUMNS = ("axis_value", "init_seed", "sample_index", "theta", "phi", "O_value", "attractor_class")


def cell_seed(seed: int, cell: int, init: int) -> int:
    """Deterministic 63-bit seed for one (axis value, initial state) cell."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(cell, init))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def scan_point(
    p: MfParams,
    seeds: Sequence[int],
    n_transient: int = 500,
    n_record: int = 50,
    radius: float = CLUSTER_RADIUS,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> tuple[StroboscopicSamples, list[str]]:
    """Stroboscopic samples and attractor labels for one parameter point,
    one trajectory per seed (initial state uniform on the sphere)."""
    th, ph = np.empty(len(seeds)), np.empty(len(seeds))
    for i, s in enumerate(seeds):
        t, f = random_angles(np.random.default_rng(s), 1)
        th[i], ph[i] = t[0], f[0]
    smp = stroboscopic_map(p, (th, ph), n_transient, n_record, rtol, atol)
    labels = [classify_attractor(smp.S[:, :, i], radius) for i in range(len(seeds))]
    return smp, labels


def scan_cell(
    axis: str,
    value: float,
    cell: int,
    p: MfParams,
    n_random_inits: int,
    seed: int = 0,
    n_transient: int = 500,
    n_record: int = 50,
    radius: float = CLUSTER_RADIUS,
) -> list[ScanRecord]:
    """Records for one scan value; `cell` is its position in the scan and
    fixes the initial-state seeds, so cells can run in any order."""
    q = with_axis(p, axis, float(value))
    seeds = [cell_seed(seed, cell, i) for i in range(n_random_inits)]
    smp, labels = scan_point(q, seeds, n_transient, n_record, radius)
    return [
        ScanRecord(float(value), s, k, float(smp.theta[k, i]), float(smp.phi[k, i]), float(smp.O[k, i]), labels[i])
        for i, s in enumerate(seeds)
        for k in range(smp.theta.shape[0])
    ]


def bifurcation_scan(
    axis: str,
    values: Iterable[float],
    p: MfParams,
    n_random_inits: int,
    seed: int = 0,
    n_transient: int = 500,
    n_record: int = 50,
    radius: float = CLUSTER_RADIUS,
) -> list[ScanRecord]:
    """Stroboscopic samples and attractor class for each scan value and each
    seeded random initial state."""
    records = []
    for cell, v in enumerate(values):
        records += scan_cell(axis, v, cell, p, n_random_inits, seed, n_transient, n_record, radius)
    return records


def class_counts(records: Sequence[ScanRecord]) -> dict[float, dict[str, int]]:
    """Number of initial states per attractor class at each scan value."""
    seen: dict[float, dict[int, str]] = {}
    for r in records:
        seen.setdefault(r.axis_value, {})[r.init_seed] = r.attractor_class
    return {v: dict(Counter(labels.values())) for v, labels in seen.items()}


def write_scan_csv(records: Sequence[ScanRecord], path, header: Sequence[str] = ()) -> None:
    with open(Path(path), "w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(SCAN_COLUMNS)
        for r in records:
            w.writerow([repr(r.axis_value), r.init_seed, r.sample_index, repr(r.theta), repr(r.phi),
                        repr(r.O_value), r.attractor_class])
