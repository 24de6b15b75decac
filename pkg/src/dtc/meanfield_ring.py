"""Mean-field dynamics of the dissipative ring with ``M = 2n`` sites.

Site amplitudes are normalized, ``z_l = b_l / sqrt(N)``, so site densities
``|z_l|^2`` sum to one and only ``U N`` and ``gamma N`` enter. Sites are
numbered ``1..M`` in the docs and ``0..M-1`` in arrays; bond ``l`` joins sites
``l`` and ``l+1`` (mod M).

Drive: two flip windows per period. The odd bonds ``1, 3, 5, ...`` (sites
1-2, 3-4, ...) carry ``J_o(t)``, which equals the flip tunneling ``J_f`` on
``[T/2 - xi, T/2)``; the even bonds carry ``J_e(t)``, equal to ``J_f`` on
``[T - xi, T)``. Both are ``J`` otherwise, so a condensate loaded on site 1
moves 1 -> 2 -> 3 within the first period.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import DEFAULT_ATOL, DEFAULT_RTOL, IntegrationError, dft_at, integrate_ode


@dataclass(frozen=True)
class RingProtocol:
    J: float
    Jf: float
    xi: float
    T: float

    def __post_init__(self):
        if not 0 < self.xi < self.T / 2:
            raise ValueError(f"need 0 < xi < T/2, got xi={self.xi}, T={self.T}")
        if not self.J > 0 or not self.Jf > 0:
            raise ValueError("tunneling amplitudes must be > 0")

    @property
    def omega(self) -> float:
        return 2 * np.pi / self.T

    def segments(self) -> list[tuple[float, float, float, float]]:
        """``(t_start, t_end, J_odd, J_even)`` over one period."""
        T, xi, J, Jf = self.T, self.xi, self.J, self.Jf
        return [
            (0.0, T / 2 - xi, J, J),
            (T / 2 - xi, T / 2, Jf, J),
            (T / 2, T - xi, J, J),
            (T - xi, T, J, Jf),
        ]


def drive_protocol_eval(proto: RingProtocol, t: float) -> tuple[float, float]:
    """Tunneling ``(J_odd, J_even)`` of the two bond families at time `t`."""
    t = float(np.mod(t, proto.T))
    J, Jf, T, xi = proto.J, proto.Jf, proto.T, proto.xi
    J_odd = Jf if T / 2 - xi <= t < T / 2 else J
    J_even = Jf if T - xi <= t < T else J
    return J_odd, J_even


@dataclass(frozen=True)
class RingParams:
    UN: float
    gammaN: float
    alpha: float = 0.0

    def __post_init__(self):
        if self.gammaN < 0:
            raise ValueError(f"gammaN must be >= 0, got {self.gammaN}")


def bond_tunneling(M: int, J_odd: float, J_even: float) -> np.ndarray:
    """Per-bond tunneling; array index ``b`` is bond ``b+1`` (sites b+1, b+2)."""
    if M < 2 or M % 2:
        raise ValueError(f"ring size must be even and >= 2, got {M}")
    Jb = np.empty(M)
    Jb[0::2] = J_odd
    Jb[1::2] = J_even
    return Jb


def site_offsets(M: int, alpha: float) -> np.ndarray:
    """``alpha`` on odd sites (1, 3, ...), zero on even sites."""
    a = np.zeros(M)
    a[0::2] = alpha
    return a


class _RingField:
    """Right-hand side with per-segment constants precomputed; `z` is ``(M, ...)``."""

    def __init__(self, M: int, J_per_bond, p: RingParams, open_chain: bool = False):
        Jb = np.array(J_per_bond, dtype=float)
        if Jb.shape != (M,):
            raise ValueError(f"need {M} bond tunnelings, got shape {Jb.shape}")
        g = np.full(M, float(p.gammaN))
        if open_chain:
            Jb[-1] = 0.0
            g[-1] = 0.0
        self.up = (np.arange(M) + 1) % M
        self.down = (np.arange(M) - 1) % M
        self.J = Jb
        self.Jm = Jb[self.down]
        self.g2 = 2 * g
        self.gm2 = 2 * g[self.down]
        self.alpha = site_offsets(M, p.alpha)
        self.UN = p.UN

    def __call__(self, z: np.ndarray) -> np.ndarray:
        shape = (-1,) + (1,) * (z.ndim - 1)
        zp = z[self.up]
        zm = z[self.down]
        n = (z * z.conj()).real
        coherent = -1j * ((self.alpha.reshape(shape) + self.UN * n) * z
                          - (self.J.reshape(shape) * zp + self.Jm.reshape(shape) * zm))
        gain = self.gm2.reshape(shape) * (zm.conj() * (zm + z)) * (zm - z)
        loss = self.g2.reshape(shape) * (zp.conj() * (zp + z)) * (z - zp)
        return coherent + gain - loss


def ring_rhs(z, J_per_bond, p: RingParams, open_chain: bool = False) -> np.ndarray:
    """Time derivative of the normalized amplitudes.

    `z` has shape ``(M,)`` or ``(M, K)``. ``J_per_bond[l]`` couples sites
    ``l`` and ``l+1`` (0-based); each bond also carries one jump channel.
    With `open_chain` the bond from the last site back to the first is
    dropped, which is the single-bond dimer for ``M = 2``.
    """
    z = np.asarray(z, dtype=complex)
    return _RingField(z.shape[0], J_per_bond, p, open_chain)(z)


def generalized_imbalance(z) -> complex | np.ndarray:
    """``sum_j exp(2 pi i j / n) |z_{2j+1}|^2`` over the odd sites."""
    z = np.asarray(z)
    M = z.shape[0]
    n = M // 2
    dens = np.abs(z[0::2]) ** 2
    phase = np.exp(2j * np.pi * np.arange(n) / n).reshape((n,) + (1,) * (z.ndim - 1))
    return np.sum(phase * dens, axis=0)


def localized_state(M: int, site: int = 1) -> np.ndarray:
    """All density on `site` (1-based)."""
    z = np.zeros(M, dtype=complex)
    z[site - 1] = 1.0
    return z


@dataclass
class RingTrajectory:
    """Stroboscopic record; ``density[k, l]`` is ``|z_{l+1}|^2`` at ``t = kT``."""

    period: float
    density: np.ndarray
    O: np.ndarray
    z_final: np.ndarray

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(Path(path), "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["period", "site", "density"])
            for k, row in enumerate(self.density):
                for l, d in enumerate(row):
                    w.writerow([k, l + 1, repr(float(d))])


def run_ring(
    p: RingParams,
    proto: RingProtocol,
    initial,
    n_periods: int,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
) -> RingTrajectory | list[RingTrajectory]:
    """Integrate segment by segment and record densities and the generalized
    imbalance at every ``t = kT``. `initial` may be ``(M,)`` or a batch
    ``(M, K)``; a batch returns one trajectory per column."""
    z = np.array(initial, dtype=complex)
    single = z.ndim == 1
    if single:
        z = z[:, None]
    M, K = z.shape
    rt, at = rtol / np.sqrt(K), atol / np.sqrt(K)
    dens = [np.abs(z) ** 2]
    for k in range(n_periods):
        for t0, t1, j_odd, j_even in proto.segments():
            vf = _RingField(M, bond_tunneling(M, j_odd, j_even), p)

            def rhs(_t, y, vf=vf):
                return vf(y.reshape(M, K)).ravel()

            try:
                z = integrate_ode(rhs, z.ravel(), k * proto.T + t0, k * proto.T + t1, rt, at).reshape(M, K)
            except IntegrationError as exc:
                raise IntegrationError(f"failed in period {k}: {exc}", exc.t_fail) from exc
        dens.append(np.abs(z) ** 2)
    dens = np.array(dens)
    phase = np.exp(2j * np.pi * np.arange(M // 2) / (M // 2))
    O = np.einsum("kjb,j->kb", dens[:, 0::2, :], phase)
    trajs = [RingTrajectory(proto.T, dens[:, :, b], O[:, b], z[:, b]) for b in range(K)]
    return trajs[0] if single else trajs


def fourier_grid(W: int, max_denominator: int = 8) -> np.ndarray:
    """Frequencies in units of the drive frequency: ``m / W`` for
    ``m = 0..W-1`` plus every ``p / q`` in ``[0, 1)`` with ``q <= max_denominator``."""
    fr = {Fraction(m, W) for m in range(W)}
    fr |= {Fraction(a, q) for q in range(1, max_denominator + 1) for a in range(q)}
    return np.array(sorted(float(f) for f in fr))


@dataclass
class RingSpectrum:
    nu: np.ndarray            # omega_s / omega
    magnitude: np.ndarray
    W: int
    samples: np.ndarray = field(repr=False)

    @property
    def dominant(self) -> float:
        return float(self.nu[np.argmax(self.magnitude)])

    def at(self, nu: float) -> float:
        return float(self.magnitude[np.argmin(np.abs(self.nu - nu))])

    def dominance(self, nu: float) -> float:
        """Sharpness of the spectral line at `nu`.

        The line ``A exp(2 pi i nu k)`` with ``A`` the transform at `nu` is
        subtracted from the samples, and ``|A|`` is divided by the largest
        bin of what remains. This removes the window leakage of the line
        itself, which for ``W`` not divisible by the line's period would
        otherwise put up to 0.83 of the peak into the neighboring bin.
        """
        k = np.arange(self.W)
        A = dft_at(self.samples, 1.0, [2 * np.pi * nu])[0]
        resid = self.samples - A * np.exp(2j * np.pi * nu * k)
        rest = np.abs(dft_at(resid, 1.0, 2 * np.pi * self.nu))
        return float(abs(A) / max(float(np.max(rest)), np.finfo(float).tiny))

    def raw_dominance(self, nu: float) -> float:
        """``|O(nu)|`` over the largest grid bin more than ``1/W`` away."""
        d = np.abs(self.nu - nu)
        d = np.minimum(d, 1 - d)
        far = d >= 1.0 / self.W - 1e-12
        return self.at(nu) / max(float(np.max(self.magnitude[far])), np.finfo(float).tiny)


def ring_fourier(O, W: int = 512, transient: int = 100, max_denominator: int = 8) -> RingSpectrum:
    """Spectrum of the stroboscopic imbalance ``O(kT)`` over `W` periods
    following `transient` periods. `O` may be a trajectory or a sample array."""
    samples = np.asarray(getattr(O, "O", O))
    if samples.size < transient + W:
        raise ValueError(f"need {transient + W} samples, got {samples.size}")
    window = samples[transient: transient + W]
    nu = fourier_grid(W, max_denominator)
    # unit period: the grid is in units of the drive frequency
    mag = np.abs(dft_at(window, 1.0, 2 * np.pi * nu))
    return RingSpectrum(nu, mag, W, window)


def with_axis(p: RingParams, proto: RingProtocol, axis: str, value: float) -> tuple[RingParams, RingProtocol]:
    if axis == "gammaN":
        return replace(p, gammaN=value), proto
    if axis == "UN":
        return replace(p, UN=value), proto
    if axis == "alpha":
        return replace(p, alpha=value), proto
    if axis == "Jf":
        return p, replace(proto, Jf=value * proto.J)
    raise ValueError(f"unknown ring scan axis {axis!r}")


@dataclass
class RingScan:
    axis: str
    values: np.ndarray
    spectra: list[RingSpectrum]
    trajectories: list[RingTrajectory]

    def dominance(self, nu: float) -> np.ndarray:
        return np.array([s.dominance(nu) for s in self.spectra])

    def window(self, nu: float, ratio: float = 5.0) -> list[tuple[float, float]]:
        """Contiguous axis intervals where the peak at `nu` dominates by `ratio`."""
        ok = self.dominance(nu) >= ratio
        out, start = [], None
        for v, flag in zip(self.values, ok):
            if flag and start is None:
                start = v
            if not flag and start is not None:
                out.append((start, prev))
                start = None
            prev = v
        if start is not None:
            out.append((start, prev))
        return out

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(Path(path), "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["axis_value", "omega_over_driving_frequency", "magnitude"])
            for v, s in zip(self.values, self.spectra):
                for nu, m in zip(s.nu, s.magnitude):
                    w.writerow([repr(float(v)), repr(float(nu)), repr(float(m))])


def ring_parameter_scan(
    axis: str,
    values: Iterable[float],
    p: RingParams,
    proto: RingProtocol,
    M: int = 6,
    initial_site: int = 1,
    W: int = 512,
    transient: int = 100,
) -> RingScan:
    """Fourier spectrum of the generalized imbalance for each scan value."""
    vals = np.asarray(list(values), dtype=float)
    spectra, trajs = [], []
    for v in vals:
        q, pr = with_axis(p, proto, axis, float(v))
        tr = run_ring(q, pr, localized_state(M, initial_site), transient + W)
        trajs.append(tr)
        spectra.append(ring_fourier(tr, W, transient))
    return RingScan(axis, vals, spectra, trajs)
