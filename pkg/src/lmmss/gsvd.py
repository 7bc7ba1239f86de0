"""Generalized singular value decomposition of a matrix pair (A, L).

For A (m x n), L (p x n) with m >= n >= p, rank(L) = p and
N(A) ∩ N(L) = {0}, the pair factors as::

    A = U * blockdiag(Sigma, I_{n-p}) * X^{-1}
    L = V * [M  0] * X^{-1}

with U (m x n) and V (p x p) having orthonormal columns, X (n x n)
nonsingular, and diagonals sigma (nondecreasing, in [0, 1]) and mu
(nonincreasing, in (0, 1]) normalized by sigma_i^2 + mu_i^2 = 1.  The ratios
zeta_i = sigma_i / mu_i are the generalized singular values.

The factorization is computed from a QR of the stacked matrix [A; L]
followed by a cosine-sine split of the orthonormal factor (SVD of the lower
block, then a thin QR to orthonormalize the upper block).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import CompletenessViolated, DimensionMismatch, RankDeficientL
from .scaling import RANK_RTOL

#: Relative threshold when locating the first "nonzero" entry of a column.
_SIGN_RTOL = 1e-12


@dataclass(frozen=True)
class GsvdFactors:
    """Factors of a pair (A, L); see the module docstring for the layout."""

    U: np.ndarray
    V: np.ndarray
    X: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray

    @property
    def m(self) -> int:
        return self.U.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.V.shape[0]


def _as_matrix(L) -> np.ndarray:
    return np.asarray(getattr(L, "matrix", L), dtype=float)


def gsvd(A, L, rank_rtol: float = RANK_RTOL) -> GsvdFactors:
    """Factor the pair (A, L).

    Parameters
    ----------
    A : (m, n) array
    L : (p, n) array or ScalingOperator
    rank_rtol : float, optional
        Relative threshold for the rank decisions on L and on the stacked
        pair [A; L].

    Raises
    ------
    DimensionMismatch
        If m < n, p > n, p < 1 or the column counts differ.
    RankDeficientL
        If L does not have full row rank.
    CompletenessViolated
        If the stacked pair [A; L] is numerically rank deficient, i.e. the
        null spaces of A and L intersect nontrivially.
    """
    A = np.asarray(A, dtype=float)
    Lmat = _as_matrix(L)
    if A.ndim != 2 or Lmat.ndim != 2:
        raise DimensionMismatch("A and L must be two-dimensional arrays")
    m, n = A.shape
    p, nL = Lmat.shape
    if nL != n:
        raise DimensionMismatch(f"column counts differ: A has {n}, L has {nL}")
    if m < n:
        raise DimensionMismatch(f"need m >= n, got m={m}, n={n}")
    if p > n or p < 1:
        raise DimensionMismatch(f"need 1 <= p <= n, got p={p}, n={n}")

    sL = np.linalg.svd(Lmat, compute_uv=False)
    if sL[0] == 0.0 or sL[-1] <= rank_rtol * sL[0]:
        raise RankDeficientL("L is numerically rank deficient")

    Q, R = np.linalg.qr(np.vstack([A, Lmat]))
    sK = np.linalg.svd(R, compute_uv=False)
    if sK[0] == 0.0 or sK[-1] <= rank_rtol * sK[0]:
        raise CompletenessViolated(
            "stacked pair [A; L] is rank deficient: N(A) and N(L) intersect"
        )

    # Cosine-sine split of Q = [Q1; Q2]: the SVD of the lower block fixes the
    # sines mu and the right factor W; the upper block times W then has
    # orthogonal columns whose norms are the cosines.
    V, mu, Wt = np.linalg.svd(Q[m:], full_matrices=True)
    W = Wt.T
    U, Ru = np.linalg.qr(Q[:m] @ W)
    diag = np.diag(Ru).copy()
    U = U * np.where(diag < 0.0, -1.0, 1.0)
    sigma = np.clip(np.abs(diag)[:p], 0.0, 1.0)
    mu = np.clip(mu, 0.0, 1.0)

    X = scipy.linalg.solve_triangular(R, W)

    # Reproducible signs: make the first nonzero entry of each X column
    # positive, compensating in U (and V for the leading p columns).
    for j in range(n):
        col = X[:, j]
        big = np.abs(col).max()
        nz = np.nonzero(np.abs(col) > _SIGN_RTOL * big)[0]
        lead = nz[0] if nz.size else 0
        if col[lead] < 0.0:
            X[:, j] = -col
            U[:, j] = -U[:, j]
            if j < p:
                V[:, j] = -V[:, j]

    return GsvdFactors(U=U, V=V, X=X, sigma=sigma, mu=mu)


def generalized_singular_values(f: GsvdFactors) -> np.ndarray:
    """Return zeta_i = sigma_i / mu_i, nondecreasing and finite since mu_i > 0."""
    return f.sigma / f.mu


def _middle_factors(f: GsvdFactors):
    n, p = f.n, f.p
    D = np.zeros((n, n))
    D[:p, :p] = np.diag(f.sigma)
    D[p:, p:] = np.eye(n - p)
    ML = np.zeros((p, n))
    ML[:, :p] = np.diag(f.mu)
    return D, ML


@dataclass(frozen=True)
class GsvdValidation:
    """Relative reconstruction and orthonormality residuals of a factorization."""

    recon_a: float
    recon_l: float
    orth_u: float
    orth_v: float
    normalization: float
    tol: float

    @property
    def max_residual(self) -> float:
        return max(self.recon_a, self.recon_l, self.orth_u, self.orth_v)

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


def validate(f: GsvdFactors, A, L, tol: float = 1e-10) -> GsvdValidation:
    """Measure how well the factors reproduce (A, L).

    Returns the Frobenius-relative reconstruction residuals of A and L, the
    orthonormality defects of U and V, and the worst normalization defect
    max_i |sigma_i^2 + mu_i^2 - 1|; ``passed`` compares the residual maximum
    against ``tol``.
    """
    A = np.asarray(A, dtype=float)
    Lmat = _as_matrix(L)
    if A.shape != (f.m, f.n):
        raise DimensionMismatch(f"A has shape {A.shape}, factors expect {(f.m, f.n)}")
    if Lmat.shape != (f.p, f.n):
        raise DimensionMismatch(
            f"L has shape {Lmat.shape}, factors expect {(f.p, f.n)}"
        )
    Xinv = np.linalg.inv(f.X)
    D, ML = _middle_factors(f)
    recon_a = np.linalg.norm(A - f.U @ D @ Xinv) / max(np.linalg.norm(A), 1e-300)
    recon_l = np.linalg.norm(Lmat - f.V @ ML @ Xinv) / max(np.linalg.norm(Lmat), 1e-300)
    orth_u = np.linalg.norm(f.U.T @ f.U - np.eye(f.n))
    orth_v = np.linalg.norm(f.V.T @ f.V - np.eye(f.p))
    normalization = float(np.abs(f.sigma**2 + f.mu**2 - 1.0).max()) if f.p else 0.0
    return GsvdValidation(
        recon_a=float(recon_a),
        recon_l=float(recon_l),
        orth_u=float(orth_u),
        orth_v=float(orth_v),
        normalization=normalization,
        tol=float(tol),
    )
