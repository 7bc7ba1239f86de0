"""Scaling operators for seminorm regularization and the completeness check.

A scaling operator is a p-by-n matrix L with full row rank, p <= n.  It
induces the seminorm ``||v||_L = ||L v||_2``, which vanishes exactly on the
null space of L.  Singular choices (p < n) penalize only selected solution
components, e.g. non-smooth ones for difference stencils.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DimensionTooSmall, RankDeficientL

#: Relative threshold for numerical rank decisions.
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class ScalingOperator:
    """A p-by-n scaling matrix together with a tag naming its construction."""

    matrix: np.ndarray
    kind: str = "custom"

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]


def identity(n: int) -> ScalingOperator:
    """Identity scaling (p = n); the induced seminorm is the Euclidean norm."""
    if n < 1:
        raise DimensionTooSmall("identity scaling needs n >= 1")
    return ScalingOperator(np.eye(n), kind="identity")


def first_difference(n: int) -> ScalingOperator:
    """Forward-difference stencil (-1, 1); p = n - 1, null space = constants."""
    if n < 2:
        raise DimensionTooSmall("first-difference scaling needs n >= 2")
    L = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    L[idx, idx] = -1.0
    L[idx, idx + 1] = 1.0
    return ScalingOperator(L, kind="first-difference")


def second_difference(n: int) -> ScalingOperator:
    """Stencil (1, -2, 1); p = n - 2, null space = affine vectors."""
    if n < 3:
        raise DimensionTooSmall("second-difference scaling needs n >= 3")
    L = np.zeros((n - 2, n))
    idx = np.arange(n - 2)
    L[idx, idx] = 1.0
    L[idx, idx + 1] = -2.0
    L[idx, idx + 2] = 1.0
    return ScalingOperator(L, kind="second-difference")


def from_matrix(matrix) -> ScalingOperator:
    """Wrap a user-supplied matrix, enforcing full row rank and p <= n."""
    L = np.atleast_2d(np.asarray(matrix, dtype=float))
    p, n = L.shape
    if p > n:
        raise DimensionMismatch(f"scaling matrix must have p <= n, got {p}x{n}")
    s = np.linalg.svd(L, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficientL(f"scaling matrix has numerical rank below {p}")
    return ScalingOperator(L, kind="custom")


def from_spec(spec: str, n: int) -> ScalingOperator:
    """Build a scaling operator from a CLI-style spec string.

    Accepted values: ``identity``, ``d1``, ``d2`` and ``file:<path>`` pointing
    to a whitespace-delimited matrix with n columns.
    """
    if spec == "identity":
        return identity(n)
    if spec in ("d1", "first-difference"):
        return first_difference(n)
    if spec in ("d2", "second-difference"):
        return second_difference(n)
    if spec.startswith("file:"):
        M = np.loadtxt(spec[5:], ndmin=2)
        if M.shape[1] != n:
            raise DimensionMismatch(
                f"scaling matrix has {M.shape[1]} columns, problem has n={n}"
            )
        return from_matrix(M)
    raise ValueError(
        f"unknown scaling spec {spec!r}; use identity, d1, d2 or file:<path>"
    )


def seminorm(L: ScalingOperator, v) -> float:
    """Return ``||L v||_2``; zero exactly on the null space of L."""
    v = np.asarray(v, dtype=float)
    if v.shape != (L.n,):
        raise DimensionMismatch(f"expected vector of length {L.n}, got shape {v.shape}")
    return float(np.linalg.norm(L.matrix @ v))


@dataclass(frozen=True)
class CompletenessReport:
    """Smallest eigenvalue of J^T J + L^T L and whether it clears the floor.

    ``holds`` is equivalent (numerically) to N(J) and N(L) intersecting only
    at the origin, which makes J^T J + lam L^T L positive definite for every
    lam > 0.
    """

    gamma: float
    holds: bool
    point: np.ndarray | None = None


def completeness_check(J, L: ScalingOperator, point=None) -> CompletenessReport:
    """Check the joint-rank condition via the smallest eigenvalue of J^T J + L^T L.

    The pass threshold is scale aware: gamma > 1e-10 * (1 + ||J||^2 + ||L||^2)
    with spectral norms.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[1] != L.n:
        raise DimensionMismatch(
            f"J must be m x {L.n}, got shape {J.shape}"
        )
    G = J.T @ J + L.matrix.T @ L.matrix
    gamma = max(float(np.linalg.eigvalsh(G)[0]), 0.0)
    jnorm = float(np.linalg.norm(J, 2))
    lnorm = float(np.linalg.norm(L.matrix, 2))
    threshold = 1e-10 * (1.0 + jnorm**2 + lnorm**2)
    return CompletenessReport(gamma=gamma, holds=gamma > threshold, point=point)
