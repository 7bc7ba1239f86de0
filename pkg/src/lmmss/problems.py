"""Bundled zero-residual inverse problems and exact-norm noise injection.

All bundled instances are square (m = n) desk-scale discretizations chosen
so that the solver's working assumptions (joint rank of Jacobian and
scaling, tangential-cone bound, closeness of the initial guess) can be
checked empirically: a linear smoothing operator, an autoconvolution map,
and a 1-D conductivity identification problem.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    DimensionTooSmall,
    EvaluationFailure,
    NegativeDelta,
    NonpositiveCoefficient,
)

#: Positivity floor for nodal conductivities.
A_MIN = 1e-6


@dataclass(frozen=True)
class Box:
    """Axis-aligned box used as a domain hint by sampling-based diagnostics."""

    lower: np.ndarray
    upper: np.ndarray

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def finite_difference_jacobian(F: Callable, x, step: float | None = None) -> np.ndarray:
    """Central-difference Jacobian with step ``1e-6 * (1 + ||x||)``."""
    x = np.asarray(x, dtype=float)
    h = step if step is not None else 1e-6 * (1.0 + float(np.linalg.norm(x)))
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(F(x + e), float) - np.asarray(F(x - e), float)) / (2.0 * h))
    return np.column_stack(cols)


@dataclass(frozen=True)
class InverseProblem:
    """A forward map with Jacobian, exact data, and optional exact solution.

    ``eval_J = None`` installs a central finite-difference fallback.  When an
    exact solution ``x_dagger`` is supplied it must reproduce ``y_exact`` to
    within ``1e-10 * (1 + ||y_exact||)`` (zero-residual setting).
    """

    name: str
    eval_F: Callable
    eval_J: Callable | None
    m: int
    n: int
    y_exact: np.ndarray
    x_dagger: np.ndarray | None = None
    domain_hint: Box | None = None
    x0_default: np.ndarray | None = None

    def __post_init__(self):
        if self.m < self.n:
            raise DimensionMismatch(f"need m >= n, got m={self.m}, n={self.n}")
        if self.eval_J is None:
            base = self.eval_F
            object.__setattr__(
                self, "eval_J", lambda x: finite_difference_jacobian(base, x)
            )
        if self.x_dagger is not None:
            gap = float(np.linalg.norm(self.eval_F(self.x_dagger) - self.y_exact))
            if gap > 1e-10 * (1.0 + float(np.linalg.norm(self.y_exact))):
                raise ValueError(
                    f"x_dagger is not a zero-residual solution (gap {gap:.3e})"
                )

    def evaluate_F(self, x) -> np.ndarray:
        """Evaluate the forward map, guarding shape and finiteness."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"x has shape {x.shape}, expected ({self.n},)")
        try:
            out = np.asarray(self.eval_F(x), dtype=float)
        except EvaluationFailure:
            raise
        except Exception as exc:
            raise EvaluationFailure(f"forward map failed: {exc}") from exc
        if out.shape != (self.m,):
            raise EvaluationFailure(
                f"forward map returned shape {out.shape}, expected ({self.m},)"
            )
        if not np.all(np.isfinite(out)):
            raise EvaluationFailure("forward map returned non-finite values")
        return out

    def evaluate_J(self, x) -> np.ndarray:
        """Evaluate the Jacobian, guarding shape and finiteness."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"x has shape {x.shape}, expected ({self.n},)")
        try:
            out = np.asarray(self.eval_J(x), dtype=float)
        except EvaluationFailure:
            raise
        except Exception as exc:
            raise EvaluationFailure(f"Jacobian evaluation failed: {exc}") from exc
        if out.shape != (self.m, self.n):
            raise EvaluationFailure(
                f"Jacobian has shape {out.shape}, expected ({self.m}, {self.n})"
            )
        if not np.all(np.isfinite(out)):
            raise EvaluationFailure("Jacobian contains non-finite values")
        return out


@dataclass(frozen=True)
class NoisyData:
    """Perturbed data with ``||y_exact - y_delta|| = delta`` exactly."""

    y_delta: np.ndarray
    delta: float
    seed: int


@lru_cache(maxsize=None)
def _noise_direction(m: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(m)
    u /= np.linalg.norm(u)
    u.setflags(write=False)
    return u

def make_noisy_data(y, delta: float, seed: int = 0, direction=None) -> NoisyData:
    """Perturb y by exactly ``delta`` along a seeded (or given) unit direction.

    The direction is drawn once per (m, seed) and cached, so repeated sweeps
    over the same seed are reproducible.  ``direction`` overrides the random
    draw (it is normalized first); the norm identity holds either way.
    """
    y = np.asarray(y, dtype=float)
    if delta < 0.0:
        raise NegativeDelta(f"delta must be nonnegative, got {delta}")
    if direction is not None:
        u = np.asarray(direction, dtype=float)
        nu = float(np.linalg.norm(u))
        if nu == 0.0:
            raise ValueError("direction must be a nonzero vector")
        u = u / nu
    else:
        u = _noise_direction(y.size, int(seed))
    return NoisyData(y_delta=y + delta * u, delta=float(delta), seed=int(seed))


def problem_linear_illposed(n: int, kernel_width: float = 0.06) -> InverseProblem:
    """Discretized smoothing operator: the Gram matrix of a Gaussian kernel.

    The forward map is linear, F(x) = A x, with A built from the kernel
    ``exp(-((t_i - t_j) / w)^2 / 2)`` scaled by the grid spacing.  Its
    spectrum decays rapidly, so the condition number grows quickly with n.
    The exact profile is ``sin(pi t)``.
    """
    if n < 4:
        raise DimensionTooSmall("linear problem needs n >= 4")
    t = (np.arange(n) + 0.5) / n
    A = (1.0 / n) * np.exp(-0.5 * ((t[:, None] - t[None, :]) / kernel_width) ** 2)
    x_dag = np.sin(np.pi * t)
    return InverseProblem(
        name="linear",
        eval_F=lambda x: A @ x,
        eval_J=lambda x: A,
        m=n,
        n=n,
        y_exact=A @ x_dag,
        x_dagger=x_dag,
        x0_default=np.zeros(n),
    )


def problem_autoconvolution(n: int) -> InverseProblem:
    """Autoconvolution on (0, 1]: trapezoid rule for ``int_0^t x(t-s) x(s) ds``.

    The unknown lives on the grid ``t_i = i/n``; the boundary value x(0) is
    pinned to 1 (the exact profile ``1 + sin(2 pi t)`` attains it), which the
    trapezoid endpoints require.  The map is quadratic in x with an analytic
    lower-triangular Jacobian.
    """
    if n < 8:
        raise DimensionTooSmall("autoconvolution problem needs n >= 8")
    h = 1.0 / n
    t = np.arange(1, n + 1) * h
    bc = 1.0

    def eval_F(x):
        F = h * bc * x.astype(float).copy()
        F[1:] += h * np.convolve(x, x)[: n - 1]
        return F

    def eval_J(x):
        col = np.concatenate(([0.0], 2.0 * x[: n - 1]))
        return h * scipy.linalg.toeplitz(col, np.zeros(n)) + (h * bc) * np.eye(n)

    x_dag = 1.0 + np.sin(2.0 * np.pi * t)
    return InverseProblem(
        name="autoconvolution",
        eval_F=eval_F,
        eval_J=eval_J,
        m=n,
        n=n,
        y_exact=eval_F(x_dag),
        x_dagger=x_dag,
        x0_default=np.ones(n),
    )


def _conductivity_halfpoints(a: np.ndarray) -> np.ndarray:
    # Flux-point values by averaging, with constant extension at the boundary.
    am = np.empty(a.size + 1)
    am[0] = a[0]
    am[-1] = a[-1]
    am[1:-1] = 0.5 * (a[:-1] + a[1:])
    return am


def _conductivity_solve(am: np.ndarray, rhs):
    # Symmetric tridiagonal solve in banded (upper) form.
    n = am.size - 1
    ab = np.zeros((2, n))
    ab[0, 1:] = -am[1:n]
    ab[1, :] = am[:n] + am[1:]
    return scipy.linalg.solveh_banded(ab, rhs)


def problem_coefficient_identification(
    n: int, log_parameterization: bool = False, source=None
) -> InverseProblem:
    """Recover a 1-D conductivity profile from interior solution values.

    Steady state ``-(a u')' = f`` on (0, 1) with homogeneous Dirichlet
    boundary, discretized by finite differences on n interior nodes; the
    unknowns are the nodal conductivities a_i (flux points by averaging,
    constant extension at the boundary).  The forward solve is one
    tridiagonal system; the Jacobian comes from the sensitivity equation,
    one tridiagonal solve per column.  Evaluation fails when any a_i drops
    to the positivity floor ``A_MIN``.  With ``log_parameterization`` the
    unknowns are log-conductivities instead.

    ``source`` is a constant or a callable of the grid; the default
    ``4 pi^2 cos(2 pi t)`` makes the flux vanish at the boundary, so the
    solution is least sensitive to boundary-adjacent conductivities (the
    hardest components to recover).  A constant source admits the
    closed-form parabola solution for constant conductivity.
    """
    if n < 8:
        raise DimensionTooSmall("coefficient problem needs n >= 8")
    h = 1.0 / (n + 1)
    t = np.arange(1, n + 1) * h
    if source is None:
        f = 4.0 * np.pi**2 * np.cos(2.0 * np.pi * t)
    elif callable(source):
        f = np.asarray(source(t), dtype=float)
    else:
        f = np.full(n, float(source))
    rhs = h * h * f

    def forward(a):
        if np.any(a <= A_MIN):
            raise NonpositiveCoefficient(f"conductivity at or below {A_MIN}")
        return _conductivity_solve(_conductivity_halfpoints(a), rhs)

    def jacobian(a):
        if np.any(a <= A_MIN):
            raise NonpositiveCoefficient(f"conductivity at or below {A_MIN}")
        am = _conductivity_halfpoints(a)
        u = _conductivity_solve(am, rhs)
        ue = np.concatenate(([0.0], u, [0.0]))
        diff = ue[1:] - ue[:-1]
        # B[:, k] = d(T u)/d am_k: flux point k couples rows k-1 and k.
        B = np.zeros((n, n + 1))
        idx = np.arange(n)
        B[idx, idx] = diff[:n]
        B[idx, idx + 1] = -diff[1:]
        # Chain rule flux points -> nodal values.
        G = np.zeros((n, n))
        G[:, 0] += B[:, 0]
        G[:, -1] += B[:, -1]
        G[:, : n - 1] += 0.5 * B[:, 1:n]
        G[:, 1:] += 0.5 * B[:, 1:n]
        return -_conductivity_solve(am, G)

    a_dag = 1.0 + 0.5 * np.sin(np.pi * t)
    if log_parameterization:
        x_dag = np.log(a_dag)
        return InverseProblem(
            name="coefficient-log",
            eval_F=lambda z: forward(np.exp(z)),
            eval_J=lambda z: jacobian(np.exp(z)) * np.exp(z)[None, :],
            m=n,
            n=n,
            y_exact=forward(a_dag),
            x_dagger=x_dag,
            x0_default=np.zeros(n),
        )
    return InverseProblem(
        name="coefficient",
        eval_F=forward,
        eval_J=jacobian,
        m=n,
        n=n,
        y_exact=forward(a_dag),
        x_dagger=a_dag,
        domain_hint=Box(lower=np.full(n, 0.05), upper=np.full(n, np.inf)),
        x0_default=np.ones(n),
    )


PROBLEMS = {
    "linear": problem_linear_illposed,
    "autoconvolution": problem_autoconvolution,
    "coefficient": problem_coefficient_identification,
}


def make_problem(name: str, n: int) -> InverseProblem:
    """Instantiate a bundled problem by name."""
    if name not in PROBLEMS:
        known = ", ".join(sorted(PROBLEMS))
        raise ValueError(f"unknown problem {name!r}; available: {known}")
    return PROBLEMS[name](n)


def problem_from_files(matrix_path, rhs_path, solution_path=None) -> InverseProblem:
    """Custom linear problem from whitespace-delimited text files.

    ``matrix_path`` holds the m x n forward matrix (row-major), ``rhs_path``
    the exact data vector; ``solution_path`` optionally supplies an exact
    solution, which must reproduce the data to zero-residual tolerance.
    """
    A = np.loadtxt(matrix_path, ndmin=2)
    y = np.loadtxt(rhs_path).ravel()
    m, n = A.shape
    if y.shape != (m,):
        raise DimensionMismatch(f"data has length {y.size}, matrix has {m} rows")
    x_dag = None
    if solution_path is not None:
        x_dag = np.loadtxt(solution_path).ravel()
        if x_dag.shape != (n,):
            raise DimensionMismatch(
                f"solution has length {x_dag.size}, matrix has {n} columns"
            )
    return InverseProblem(
        name="custom-linear",
        eval_F=lambda x: A @ x,
        eval_J=lambda x: A,
        m=m,
        n=n,
        y_exact=y,
        x_dagger=x_dag,
        x0_default=np.zeros(n),
    )
