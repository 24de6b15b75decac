"""Two-mode Fock sector of the Bose-Hubbard dimer and the operators acting on it.

Basis index ``k = 0..N`` labels ``|k, N-k>``: ``k`` bosons on site 1 and
``N-k`` on site 2. Every operator is a dense ``(N+1) x (N+1)`` complex matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from math import comb
from pathlib import Path

import numpy as np

from .numerics import expm


def basis_dimension(N: int, M: int) -> int:
    """Number of Fock states of `N` bosons on `M` sites, ``C(N+M-1, N)``."""
    if N < 0 or M < 1:
        raise ValueError("need N >= 0 and M >= 1")
    return comb(N + M - 1, N)


@dataclass(frozen=True)
class DimerBasis:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"particle number must be a positive integer, got {self.N}")

    @property
    def dim(self) -> int:
        return self.N + 1

    def index(self, n1: int, n2: int) -> int:
        """Basis index of ``|n1, n2>``."""
        if n1 < 0 or n2 < 0 or n1 + n2 != self.N:
            raise ValueError(f"|{n1},{n2}> is not in the N={self.N} sector")
        return n1

    def ket(self, n1: int, n2: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(n1, n2)] = 1.0
        return v


@dataclass(frozen=True)
class DimerParams:
    """Dimer couplings in absolute units: tunneling `J`, site-1 offset `alpha`,
    on-site interaction `U` and dissipation rate `gamma` (not scaled by N)."""

    J: float
    alpha: float
    U: float
    gamma: float
    N: int

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError(f"J must be > 0, got {self.J}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")

    @classmethod
    def from_scaled(cls, N: int, UN: float, gammaN: float, alpha: float = 0.0, J: float = 1.0):
        """Build from the mean-field combinations ``U*N`` and ``gamma*N``."""
        return cls(J=J, alpha=alpha, U=UN / N, gamma=gammaN / N, N=N)

    @property
    def basis(self) -> DimerBasis:
        return DimerBasis(self.N)


@dataclass(frozen=True, eq=False)
class SiteOperator:
    basis: DimerBasis
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ValueError(f"operator shape {m.shape} does not match dimension {self.basis.dim}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other):
        if isinstance(other, SiteOperator):
            return SiteOperator(self.basis, self.matrix @ other.matrix)
        return self.matrix @ other

    @property
    def dag(self) -> "SiteOperator":
        return SiteOperator(self.basis, self.matrix.conj().T)

    def expect(self, rho) -> complex:
        return complex(np.trace(self.matrix @ rho))

    def to_csv(self, path) -> None:
        """Write nonzero entries as ``row, col, re, im``."""
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "col", "re", "im"])
            for r, c in zip(*np.nonzero(self.matrix)):
                z = self.matrix[r, c]
                w.writerow([r, c, repr(z.real), repr(z.imag)])


def _hop_12(N: int) -> np.ndarray:
    """Matrix of b1^dag b2: ``<k+1| b1^dag b2 |k> = sqrt((k+1)(N-k))``."""
    k = np.arange(N)
    m = np.zeros((N + 1, N + 1), dtype=complex)
    m[k + 1, k] = np.sqrt((k + 1) * (N - k))
    return m


def number_ops(basis: DimerBasis) -> tuple[np.ndarray, np.ndarray]:
    k = np.arange(basis.dim, dtype=float)
    return np.diag(k).astype(complex), np.diag(basis.N - k).astype(complex)


def hopping(basis: DimerBasis) -> SiteOperator:
    """``b1^dag b2 + b2^dag b1``."""
    h = _hop_12(basis.N)
    return SiteOperator(basis, h + h.T)


def build_hamiltonian(p: DimerParams, J_value: float | None = None) -> SiteOperator:
    """``H = -J (b1^dag b2 + h.c.) + alpha n1 + (U/2) sum_l n_l (n_l - 1)``.

    `J_value` overrides ``p.J`` for the tunneling term (drive segments).
    """
    J = p.J if J_value is None else J_value
    if not J > 0:
        raise ValueError(f"tunneling must be > 0, got {J}")
    basis = p.basis
    n1, n2 = number_ops(basis)
    ident = np.eye(basis.dim)
    H = (
        -J * hopping(basis).matrix
        + p.alpha * n1
        + 0.5 * p.U * (n1 @ (n1 - ident) + n2 @ (n2 - ident))
    )
    return SiteOperator(basis, H)


def build_jump(basis: DimerBasis) -> SiteOperator:
    """Quasi-local jump operator ``(b1^dag + b2^dag)(b1 - b2)``."""
    n1, n2 = number_ops(basis)
    h12 = _hop_12(basis.N)
    return SiteOperator(basis, n1 - h12 + h12.T - n2)


def build_imbalance(basis: DimerBasis) -> SiteOperator:
    """Population imbalance ``(n1 - n2) / (2N)``."""
    k = np.arange(basis.dim)
    return SiteOperator(basis, np.diag((2 * k - basis.N) / (2 * basis.N)).astype(complex))


def build_flip(basis: DimerBasis) -> SiteOperator:
    """Site-swap unitary ``exp[i pi (b1^dag b2 + b2^dag b1) / 2]``."""
    return SiteOperator(basis, expm(1j * np.pi / 2 * hopping(basis).matrix))


def build_coherent(basis: DimerBasis, theta: float, phi: float) -> np.ndarray:
    """SU(2) coherent state, unit-normalized.

    Component on ``|k, N-k>`` is
    ``sqrt(C(N,k)) cos(theta/2)^k (e^{i phi} sin(theta/2))^(N-k)``.
    """
    N = basis.N
    k = np.arange(N + 1)
    binom = np.array([comb(N, int(j)) for j in k], dtype=float)
    c = np.cos(theta / 2)
    s = np.exp(1j * phi) * np.sin(theta / 2)
    return np.sqrt(binom) * c**k * s ** (N - k)


def build_bec_state(basis: DimerBasis) -> np.ndarray:
    """Zero-quasimomentum condensate, the dark state of the jump operator."""
    return build_coherent(basis, np.pi / 2, 0.0)


def spin_ops(basis: DimerBasis) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collective spin operators ``(Sx, Sy, Sz)`` scaled by ``1/N``."""
    N = basis.N
    h12 = _hop_12(N)
    n1, n2 = number_ops(basis)
    sx = (h12 + h12.T) / (2 * N)
    sy = (h12 - h12.T) / (2j * N)
    sz = (n1 - n2) / (2 * N)
    return sx, sy, sz
