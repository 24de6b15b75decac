"""Lindblad generator of the driven-dissipative dimer and its one-period maps.

Density matrices are vectorized row-major (``rho.reshape(-1)``), so that
``vec(A rho B) = kron(A, B.T) @ vec(rho)``. Nothing outside this module relies
on that choice; use `vec`/`unvec` or `Superoperator.apply`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .fock import DimerBasis, DimerParams, SiteOperator, build_flip, build_hamiltonian, build_jump
from .numerics import expm

VEC_CONVENTION = "row-major"


def vec(rho) -> np.ndarray:
    return np.asarray(rho, dtype=complex).reshape(-1)


def unvec(v, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    d = int(round(np.sqrt(v.size))) if dim is None else dim
    return v.reshape(d, d)


def left(a: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> a @ rho``."""
    return np.kron(a, np.eye(a.shape[0]))


def right(b: np.ndarray) -> np.ndarray:
    """Superoperator of ``rho -> rho @ b``."""
    return np.kron(np.eye(b.shape[0]), b.T)


@dataclass(frozen=True, eq=False)
class Superoperator:
    N: int
    matrix: np.ndarray
    convention: str = VEC_CONVENTION

    @property
    def dim(self) -> int:
        return self.N + 1

    def apply(self, rho) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.dim)

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        return Superoperator(self.N, self.matrix @ other.matrix, self.convention)


@dataclass(frozen=True)
class DriveProtocol:
    """Piecewise-constant tunneling: ``segments[i] = (duration, J)`` applied in order."""

    segments: tuple[tuple[float, float], ...]

    def __post_init__(self):
        segs = tuple((float(d), float(j)) for d, j in self.segments)
        if not segs:
            raise ValueError("a drive protocol needs at least one segment")
        for d, j in segs:
            if not d > 0:
                raise ValueError(f"segment durations must be > 0, got {d}")
            if not np.isfinite(j):
                raise ValueError("segment tunneling must be finite")
        object.__setattr__(self, "segments", segs)

    @property
    def period(self) -> float:
        return float(sum(d for d, _ in self.segments))

    @property
    def omega(self) -> float:
        return 2 * np.pi / self.period

    @classmethod
    def constant(cls, J: float, T: float) -> "DriveProtocol":
        return cls(((T, J),))

    @classmethod
    def two_step(cls, J1: float, J2: float, xi: float, T: float) -> "DriveProtocol":
        """``J(t) = J1`` on ``[0, xi)`` and ``J2`` on ``[xi, T)``."""
        if not 0 < xi < T:
            raise ValueError(f"need 0 < xi < T, got xi={xi}, T={T}")
        return cls(((xi, J1), (T - xi, J2)))

    def J_at(self, t: float) -> float:
        t = float(np.mod(t, self.period))
        acc = 0.0
        for d, j in self.segments:
            acc += d
            if t < acc:
                return j
        return self.segments[-1][1]


@dataclass(frozen=True, eq=False)
class FloquetPropagator:
    N: int
    matrix: np.ndarray
    period: float

    @property
    def dim(self) -> int:
        return self.N + 1

    def apply(self, rho) -> np.ndarray:
        return unvec(self.matrix @ vec(rho), self.dim)

    def power(self, n: int) -> "FloquetPropagator":
        return FloquetPropagator(self.N, np.linalg.matrix_power(self.matrix, n), n * self.period)


def master_equation_rhs(H: np.ndarray, c: np.ndarray, gamma: float, rho: np.ndarray) -> np.ndarray:
    """Direct matrix evaluation of ``-i[H, rho] + gamma (2 c rho c^dag - {c^dag c, rho})``."""
    cd = c.conj().T
    cdc = cd @ c
    return -1j * (H @ rho - rho @ H) + gamma * (2 * c @ rho @ cd - cdc @ rho - rho @ cdc)


def build_liouvillian(p: DimerParams, J_value: float | None = None) -> Superoperator:
    """Lindblad superoperator for tunneling `J_value` (defaults to ``p.J``)."""
    H = build_hamiltonian(p, J_value).matrix
    c = build_jump(p.basis).matrix
    cdc = c.conj().T @ c
    L = -1j * (left(H) - right(H)) + p.gamma * (
        2 * np.kron(c, c.conj()) - left(cdc) - right(cdc)
    )
    return Superoperator(p.N, L)


def flip_superoperator(N: int) -> Superoperator:
    """``rho -> X rho X^dag`` with the site-swap unitary X."""
    X = build_flip(DimerBasis(N)).matrix
    return Superoperator(N, np.kron(X, X.conj()))


def segment_propagators(p: DimerParams, protocol: DriveProtocol) -> list[np.ndarray]:
    cache: dict[float, Superoperator] = {}
    out = []
    for d, j in protocol.segments:
        if j not in cache:
            cache[j] = build_liouvillian(p, j)
        out.append(expm(cache[j].matrix, d))
    return out


def propagate_piecewise(p: DimerParams, protocol: DriveProtocol) -> FloquetPropagator:
    """One-period map ``exp(L_K dt_K) ... exp(L_1 dt_1)``."""
    V = np.eye((p.N + 1) ** 2, dtype=complex)
    for U_seg in segment_propagators(p, protocol):
        V = U_seg @ V
    return FloquetPropagator(p.N, V, protocol.period)


def ideal_flip_propagator(p: DimerParams, xi: float, T: float) -> FloquetPropagator:
    """Perfect flip followed by free dissipative evolution for ``T - xi``:
    ``exp(L (T - xi)) X``, with L built at tunneling ``p.J``."""
    if not 0 < xi < T:
        raise ValueError(f"need 0 < xi < T, got xi={xi}, T={T}")
    L = build_liouvillian(p).matrix
    X = flip_superoperator(p.N).matrix
    return FloquetPropagator(p.N, expm(L, T - xi) @ X, T)


class StateError(ValueError):
    """A density matrix left the physical set beyond tolerance."""


def check_density_matrix(rho: np.ndarray, tol_trace=1e-9, tol_herm=1e-10, tol_pos=1e-8, where=""):
    tr = np.trace(rho)
    if abs(tr - 1) > tol_trace:
        raise StateError(f"trace {tr:.12g} deviates from 1 {where}")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > tol_herm:
        raise StateError(f"hermiticity violated by {herm:.3g} {where}")
    lam = np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0]
    if lam < -tol_pos:
        raise StateError(f"minimum eigenvalue {lam:.3g} < -{tol_pos:g} {where}")


@dataclass
class Trajectory:
    """Expectation values sampled in time; ``values[name][i]`` at ``times[i]``."""

    times: np.ndarray
    period_index: np.ndarray
    values: dict[str, np.ndarray]
    states: list[np.ndarray] | None = field(default=None, repr=False)

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(Path(path), "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["period_index", "time", "observable_name", "value_re", "value_im"])
            for i, t in enumerate(self.times):
                for name, vals in self.values.items():
                    z = complex(vals[i])
                    w.writerow([int(self.period_index[i]), repr(float(t)), name, repr(z.real), repr(z.imag)])


def evolve_state(
    rho0,
    p: DimerParams,
    protocol: DriveProtocol,
    n_periods: int,
    observables: Mapping[str, SiteOperator | np.ndarray],
    samples_per_segment: int = 0,
    keep_states: bool = False,
    check: bool = True,
) -> Trajectory:
    """Stroboscopic evolution by repeated application of the one-period map.

    With ``samples_per_segment > 0`` every drive segment is additionally
    sampled at that many equally spaced interior times.
    """
    rho = np.array(rho0, dtype=complex)
    D = p.N + 1
    if rho.shape != (D, D):
        raise ValueError(f"rho0 has shape {rho.shape}, expected {(D, D)}")
    if check:
        check_density_matrix(rho, tol_trace=1e-10, tol_herm=1e-10, tol_pos=1e-10, where="in rho0")
    ops = {k: (o.matrix if isinstance(o, SiteOperator) else np.asarray(o)) for k, o in observables.items()}

    seg_props = segment_propagators(p, protocol)
    V = np.eye(D * D, dtype=complex)
    for U_seg in seg_props:
        V = U_seg @ V

    # interior checkpoints: (offset within the period, map from period start)
    sub = []
    if samples_per_segment > 0:
        prefix, t_start = np.eye(D * D, dtype=complex), 0.0
        for (d, j), U_seg in zip(protocol.segments, seg_props):
            dt = d / (samples_per_segment + 1)
            step = expm(build_liouvillian(p, j).matrix, dt)
            acc = prefix
            for s in range(1, samples_per_segment + 1):
                acc = step @ acc
                sub.append((t_start + s * dt, acc))
            prefix = U_seg @ prefix
            t_start += d

    T = protocol.period
    times, pidx, states = [], [], []
    v = vec(rho)
    for k in range(n_periods + 1):
        times.append(k * T)
        pidx.append(k)
        states.append(unvec(v, D))
        if k == n_periods:
            break
        for t_off, P in sub:
            times.append(k * T + t_off)
            pidx.append(k)
            states.append(unvec(P @ v, D))
        v = V @ v
        if check:
            check_density_matrix(unvec(v, D), where=f"after period {k + 1}")

    values = {name: np.array([np.trace(op @ r) for r in states]) for name, op in ops.items()}
    return Trajectory(np.array(times), np.array(pidx), values, states if keep_states else None)
