"""Eigenmode analysis of one-period Floquet maps.

Modes are sorted by decreasing ``|lambda|`` (ties: larger real part, then
larger imaginary part first). For each eigenvalue the relaxation rate is
``ln|lambda| / T`` and the quasi-frequency ``arg(lambda) / T`` on the
half-open branch ``(-omega/2, omega/2]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .fock import DimerBasis, DimerParams, build_coherent, build_imbalance
from .liouvillian import (
    DriveProtocol,
    FloquetPropagator,
    Superoperator,
    flip_superoperator,
    propagate_piecewise,
    unvec,
    vec,
)
from .numerics import BiasedExpFit, ExpFit, NumericalError, eig, eigvals, fit_biased_exponential, fit_exponential

JORDAN_CONDITION = 1e8
# arguments this close to -pi are put on the +pi side of the branch cut
BRANCH_TOL = 1e-9
META_STABLE_THRESHOLD = np.exp(-1.0)

PARITY_EVEN = "+1"
PARITY_ODD = "-1"
PARITY_MIXED = "mixed"
PARITY_NA = "n/a"


def quasi_frequency(lam, period: float) -> np.ndarray:
    ang = np.angle(lam)
    ang = np.where(ang <= -np.pi + BRANCH_TOL, np.pi, ang)
    return ang / period


def relaxation_rate(lam, period: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(lam)) / period


def sort_order(lam) -> np.ndarray:
    lam = np.asarray(lam)
    return np.lexsort((-lam.imag, -lam.real, -np.abs(lam)))


@dataclass(eq=False)
class FloquetMode:
    index: int
    eigenvalue: complex
    theta_re: float
    theta_im: float
    mode: np.ndarray
    parity: str = PARITY_NA

    @property
    def lifetime(self) -> float:
        return np.inf if self.theta_re >= 0 else -1.0 / self.theta_re


@dataclass(eq=False)
class SpectrumReport:
    modes: list[FloquetMode]
    period: float
    jordan_flag: bool
    eigvec_condition: float
    degenerate_leading: bool
    right_vectors: np.ndarray = field(repr=False)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([m.eigenvalue for m in self.modes])

    @property
    def omega(self) -> float:
        return 2 * np.pi / self.period

    def to_csv(self, path, header: Sequence[str] = ()) -> None:
        with open(Path(path), "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["mode_index", "lambda_re", "lambda_im", "theta_re", "theta_im", "lifetime", "parity"])
            for m in self.modes:
                w.writerow([m.index, repr(m.eigenvalue.real), repr(m.eigenvalue.imag),
                            repr(m.theta_re), repr(m.theta_im), repr(m.lifetime), m.parity])


def _normalize_mode(m: np.ndarray, steady: bool) -> np.ndarray:
    if steady:
        tr = np.trace(m)
        if abs(tr) > 1e-8 * np.linalg.norm(m):
            return m / tr
    m = m / np.linalg.norm(m)
    flat = m.reshape(-1)
    anchor = flat[np.argmax(np.abs(flat))]
    return m * (abs(anchor) / anchor)


def classify_parity(mode: np.ndarray | FloquetMode, flip: Superoperator, tol: float = 1e-6) -> str:
    """``+1`` if ``X[m] = m``, ``-1`` if ``X[m] = -m`` (relative Frobenius
    tolerance `tol`), else ``mixed``."""
    m = mode.mode if isinstance(mode, FloquetMode) else np.asarray(mode, dtype=complex)
    xm = flip.apply(m)
    scale = np.linalg.norm(m)
    if np.linalg.norm(xm - m) < tol * scale:
        return PARITY_EVEN
    if np.linalg.norm(xm + m) < tol * scale:
        return PARITY_ODD
    return PARITY_MIXED


def spectral_decompose(
    V: FloquetPropagator,
    flip: Superoperator | None = None,
    parity_tol: float = 1e-6,
    degeneracy_tol: float = 1e-8,
) -> SpectrumReport:
    """Full eigendecomposition of a one-period map.

    Pass the flip superoperator as `flip` (meaningful for zero offset only)
    to label mode parities.
    """
    res = eig(V.matrix)
    order = sort_order(res.values)
    lam = res.values[order]
    vecs = res.vectors[:, order]
    T = V.period
    th_re = relaxation_rate(lam, T)
    th_im = quasi_frequency(lam, T)
    modes = []
    for j in range(lam.size):
        m = _normalize_mode(unvec(vecs[:, j], V.dim), steady=(j == 0))
        fm = FloquetMode(j, complex(lam[j]), float(th_re[j]), float(th_im[j]), m)
        if flip is not None:
            fm.parity = classify_parity(fm, flip, parity_tol)
        modes.append(fm)
    degenerate = lam.size > 1 and abs(lam[0] - lam[1]) < degeneracy_tol
    return SpectrumReport(
        modes, T, res.condition > JORDAN_CONDITION, res.condition, bool(degenerate), vecs
    )


def leading_eigenvalues(V: FloquetPropagator, k: int = 3) -> np.ndarray:
    """The `k` leading eigenvalues in mode order, without eigenvectors."""
    lam = eigvals(V.matrix)
    return lam[sort_order(lam)][:k]


def expand_initial_state(rho0, report: SpectrumReport, max_condition: float = JORDAN_CONDITION) -> np.ndarray:
    """Coefficients ``eta`` with ``rho0 = sum_j eta_j m_j``."""
    if report.jordan_flag or report.eigvec_condition > max_condition:
        raise NumericalError(
            f"mode basis is ill-conditioned (cond = {report.eigvec_condition:.3g}); "
            "expansion needs a diagonalizable map"
        )
    R = np.column_stack([vec(m.mode) for m in report.modes])
    target = vec(rho0)
    eta = np.linalg.solve(R, target)
    resid = np.linalg.norm(R @ eta - target)
    if resid > 1e-8 * max(1.0, np.linalg.norm(target)):
        raise NumericalError(f"mode expansion residual {resid:.3g} too large")
    return eta


def predict_expectation(report: SpectrumReport, eta, observable, n_periods: int) -> np.ndarray:
    """``O(nT) = sum_j eta_j lambda_j^n Tr[O m_j]`` for ``n = 0..n_periods``."""
    op = getattr(observable, "matrix", observable)
    weights = np.asarray(eta) * np.array([np.trace(op @ m.mode) for m in report.modes])
    lam = report.eigenvalues
    n = np.arange(n_periods + 1)
    return (lam[None, :] ** n[:, None]) @ weights


def _hermitize(mode) -> np.ndarray:
    m = mode.mode if isinstance(mode, FloquetMode) else np.asarray(mode, dtype=complex)
    return (m + m.conj().T) / 2


def project_onto_imbalance(mode) -> tuple[np.ndarray, np.ndarray]:
    """Weights of the Hermitized mode on the imbalance eigenstates.

    Returns ``(O_values, weights)`` with ``O_values = (2k - N) / (2N)``
    ascending.
    """
    m = _hermitize(mode)
    N = m.shape[0] - 1
    O = np.diag(build_imbalance(DimerBasis(N)).matrix).real
    return O, np.real(np.diag(m))


def husimi_projection(mode, thetas, phis) -> np.ndarray:
    """``Q[i, j] = Re <theta_i, phi_j| m |theta_i, phi_j>`` on the given grid."""
    m = _hermitize(mode)
    basis = DimerBasis(m.shape[0] - 1)
    thetas = np.atleast_1d(thetas)
    phis = np.atleast_1d(phis)
    Q = np.empty((thetas.size, phis.size))
    for i, th in enumerate(thetas):
        states = np.array([build_coherent(basis, th, ph) for ph in phis])
        Q[i] = np.real(np.einsum("ai,ij,aj->a", states.conj(), m, states))
    return Q


@dataclass
class ScalingResult:
    Ns: np.ndarray
    gammaN: float
    theta2_re: np.ndarray
    theta3_re: np.ndarray
    exp_fit: ExpFit
    biased_fit: BiasedExpFit

    @property
    def rate2(self) -> np.ndarray:
        """``-theta2_re / (gamma N)``."""
        return -self.theta2_re / self.gammaN

    @property
    def rate3(self) -> np.ndarray:
        return -self.theta3_re / self.gammaN


def fit_scaling(Ns, theta2_re, theta3_re, gammaN: float) -> tuple[ExpFit, BiasedExpFit]:
    """Exponential fit of ``-theta2/(gamma N)`` and biased exponential fit of
    ``-theta3/(gamma N)`` versus N. A vanishing second rate yields a flagged
    ``kappa = 0`` fit instead of an error."""
    y2 = -np.asarray(theta2_re, dtype=float) / gammaN
    y3 = -np.asarray(theta3_re, dtype=float) / gammaN
    if np.any(y2 <= 1e-12):
        exp_fit = ExpFit(float(np.mean(np.abs(y2))), 0.0, 0.0, True)
    else:
        exp_fit = fit_exponential(Ns, y2)
    biased = fit_biased_exponential(Ns, y3) if len(Ns) >= 4 else BiasedExpFit(np.nan, np.nan, np.nan, np.nan, True)
    return exp_fit, biased


def scaling_run(
    UN: float,
    gammaN: float,
    protocol: DriveProtocol,
    N_list: Sequence[int],
    alpha: float = 0.0,
    J: float = 1.0,
) -> ScalingResult:
    """Second and third relaxation rates of the one-period map versus N at
    fixed ``U N`` and ``gamma N``, with their exponential fits."""
    Ns = np.asarray(N_list, dtype=int)
    if Ns.size < 3 or np.any(np.diff(Ns) <= 0):
        raise ValueError("N_list must be ascending with at least 3 entries")
    th2, th3 = [], []
    for N in Ns:
        p = DimerParams.from_scaled(int(N), UN, gammaN, alpha, J)
        lam = leading_eigenvalues(propagate_piecewise(p, protocol), 3)
        rates = relaxation_rate(lam, protocol.period)
        th2.append(rates[1])
        th3.append(rates[2])
    th2, th3 = np.array(th2), np.array(th3)
    exp_fit, biased = fit_scaling(Ns, th2, th3, gammaN)
    return ScalingResult(Ns, gammaN, th2, th3, exp_fit, biased)
