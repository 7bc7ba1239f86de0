"""Empirical verification of the solver's convergence guarantees.

The checks work on recorded runs: the sampled tangential-cone constant, the
per-iteration decrease ("gain") of the squared L-distance to a reference
solution against its certified lower bounds, the stopping-index bound, the
Euclidean-norm bound implied by the seminorm analysis, and the noise-sweep
trend of the stopped iterates.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBall, LmmssError, MissingExactSolution
from .problems import InverseProblem, make_noisy_data
from .scaling import ScalingOperator, seminorm
from .solver import RunRecord, SolverConfig, solve

_DENOM_FLOOR = 1e-14


@dataclass(frozen=True)
class TccEstimate:
    """Sampled lower bound on the tangential-cone constant in the L-seminorm.

    ``c_hat`` maximizes ``||J(x)(x~ - x) - F(x~) + F(x)||`` over sampled
    pairs, relative to ``||x~ - x||_L * ||F(x~) - F(x)||``; pairs whose
    denominator falls below 1e-14 are skipped.  ``samples`` counts the pairs
    that actually entered the maximum.
    """

    c_hat: float
    rho: float
    samples: int
    worst_pair: tuple[np.ndarray, np.ndarray]


def tcc_ratio(problem: InverseProblem, L: ScalingOperator, x, x_tilde) -> float | None:
    """Tangential-cone ratio of a single pair.

    Returns None when the denominator is below 1e-14 (pair unusable) and 0.0
    when the numerator sits below measurement precision; for nearby points
    the numerator is pure cancellation noise and would otherwise inflate the
    estimate.
    """
    x = np.asarray(x, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    Fx = problem.evaluate_F(x)
    Fxt = problem.evaluate_F(x_tilde)
    lhs = float(np.linalg.norm(problem.evaluate_J(x) @ (x_tilde - x) - Fxt + Fx))
    rhs = seminorm(L, x_tilde - x) * float(np.linalg.norm(Fxt - Fx))
    if rhs < _DENOM_FLOOR:
        return None
    scale = 1.0 + float(np.linalg.norm(Fx)) + float(np.linalg.norm(Fxt))
    if lhs <= _DENOM_FLOOR * scale:
        return 0.0
    return lhs / rhs


def estimate_tcc_constant(
    problem: InverseProblem,
    L: ScalingOperator,
    x0,
    rho: float,
    samples: int = 200,
    seed: int = 0,
) -> TccEstimate:
    """Estimate the tangential-cone constant by sampling pairs in an L-ball.

    Points are drawn as ``x0 + v`` with ``||v||_L`` uniform on (0, rho];
    draws falling outside the problem's domain hint are rejected.  Raises
    DegenerateBall when no pair with a usable denominator is found.
    """
    if rho <= 0.0:
        raise ValueError(f"rho must be positive, got {rho}")
    if samples < 100:
        raise ValueError(f"need at least 100 sample pairs, got {samples}")
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(seed)

    def draw():
        for _ in range(200):
            z = rng.standard_normal(problem.n)
            nl = seminorm(L, z)
            if nl == 0.0:
                continue
            pt = x0 + z * (rho * rng.uniform() / nl)
            if problem.domain_hint is None or problem.domain_hint.contains(pt):
                return pt
        return None

    best = -1.0
    worst = None
    valid = 0
    for _ in range(samples):
        x = draw()
        xt = draw()
        if x is None or xt is None:
            continue
        ratio = tcc_ratio(problem, L, x, xt)
        if ratio is None:
            continue
        valid += 1
        if ratio > best:
            best = ratio
            worst = (x, xt)
    if valid == 0:
        raise DegenerateBall("no admissible sample pairs with usable denominators")
    return TccEstimate(c_hat=best, rho=float(rho), samples=valid, worst_pair=worst)


def run_tcc_ratios(problem, L, run: RunRecord, x_star) -> np.ndarray:
    """Tangential-cone ratios between each trace iterate and x_star.

    Useful to sharpen a sampled estimate to the pairs an actual run visits.
    """
    if x_star is None:
        raise MissingExactSolution("run_tcc_ratios needs the exact solution")
    x_star = np.asarray(x_star, dtype=float)
    ratios = [tcc_ratio(problem, L, rec.x, x_star) for rec in run.trace]
    return np.array([0.0 if r is None else r for r in ratios])


def theta_exact(q: float, c: float, dist_L: float) -> float:
    """Margin factor certified by the exact-data analysis; 1.1 when c * dist is 0."""
    if c * dist_L == 0.0:
        return 1.1
    return q / (c * dist_L)


def theta_noisy(q: float, tau: float, c: float, dist_L: float) -> float:
    """Margin factor certified by the noisy-data analysis (q tau at zero distance)."""
    return q * tau / (1.0 + c * (1.0 + tau) * dist_L)


@dataclass(frozen=True)
class GainReport:
    """Per-iteration gains ``||x_k - x*||_L^2 - ||x_{k+1} - x*||_L^2``.

    Three lower bounds are checked with slack ``-1e-10 * (1 + initial
    squared L-distance)``: the squared L-norm of the step at every
    iteration, and (at equality-kind iterations only, since they presume the
    q-condition holds with equality) ``2(theta-1)/(theta lam) ||linearized
    residual||^2`` and ``2(theta-1)(1-q)q / (zeta_p^2 theta) ||residual||^2``.
    ``assumption_ok`` is False when theta <= 1, flagging that the
    initial-guess assumption is breached rather than failing the check.
    """

    theta: float
    q: float
    gains: np.ndarray
    rhs_step: np.ndarray
    rhs_residual: np.ndarray
    rhs_spectral: np.ndarray
    kinds: tuple[str, ...]
    violations: tuple[tuple[int, str], ...]
    slack: float
    assumption_ok: bool


def check_gain(run: RunRecord, x_star, L: ScalingOperator, q: float, theta: float) -> GainReport:
    """Check the gain inequalities along a recorded run against x_star."""
    if x_star is None:
        raise MissingExactSolution("check_gain needs the exact solution")
    x_star = np.asarray(x_star, dtype=float)
    d2 = np.array([seminorm(L, rec.x - x_star) ** 2 for rec in run.trace])
    slack = -1e-10 * (1.0 + d2[0])
    steps = run.trace[:-1]
    gains = d2[:-1] - d2[1:]
    rhs_step = np.array([rec.step_Lnorm**2 for rec in steps])
    coef = 2.0 * (theta - 1.0) / theta
    rhs_residual = np.array(
        [coef / rec.lam * rec.lin_res_norm**2 for rec in steps]
    )
    rhs_spectral = np.array(
        [coef * (1.0 - q) * q / rec.zeta_p**2 * rec.res_norm**2 for rec in steps]
    )
    violations = []
    for k, rec in enumerate(steps):
        if gains[k] - rhs_step[k] < slack:
            violations.append((k, "step"))
        if rec.qcond_kind == "equality":
            if gains[k] - rhs_residual[k] < slack:
                violations.append((k, "residual"))
            if gains[k] - rhs_spectral[k] < slack:
                violations.append((k, "spectral"))
    return GainReport(
        theta=float(theta),
        q=float(q),
        gains=gains,
        rhs_step=rhs_step,
        rhs_residual=rhs_residual,
        rhs_spectral=rhs_spectral,
        kinds=tuple(rec.qcond_kind for rec in steps),
        violations=tuple(violations),
        slack=slack,
        assumption_ok=theta > 1.0,
    )


@dataclass(frozen=True)
class KstarBoundReport:
    """Stopping-index bound ``k* tau^2 delta^2 <= C * B``.

    ``C = theta zeta_hat^2 / (2 (theta-1)(1-q) q)`` and B is evaluated in
    both plausible readings: the L-distance of the initial guess to x_star
    unsquared (``rhs_linear``) and squared (``rhs_squared``, the form the
    telescoped gain inequality yields).
    """

    k_star: int
    lhs: float
    rhs_linear: float
    rhs_squared: float
    holds_linear: bool
    holds_squared: bool
    theta: float
    zeta_hat: float | None


def check_kstar_bound(
    run: RunRecord, x_star, L: ScalingOperator, q: float, tau: float, delta: float, theta: float
) -> KstarBoundReport:
    """Evaluate the stopping-index bound for a discrepancy-stopped run."""
    if x_star is None:
        raise MissingExactSolution("check_kstar_bound needs the exact solution")
    if run.stop_reason != "discrepancy":
        raise ValueError(
            f"run stopped by {run.stop_reason!r}, not by the discrepancy principle"
        )
    lhs = run.k_star * tau**2 * delta**2
    if run.k_star == 0:
        return KstarBoundReport(
            k_star=0,
            lhs=0.0,
            rhs_linear=0.0,
            rhs_squared=0.0,
            holds_linear=True,
            holds_squared=True,
            theta=float(theta),
            zeta_hat=run.zeta_hat,
        )
    dist = seminorm(L, run.trace[0].x - np.asarray(x_star, dtype=float))
    C = theta * run.zeta_hat**2 / (2.0 * (theta - 1.0) * (1.0 - q) * q)
    rhs_linear = C * dist
    rhs_squared = C * dist**2
    pad = 1.0 + 1e-10
    return KstarBoundReport(
        k_star=run.k_star,
        lhs=lhs,
        rhs_linear=rhs_linear,
        rhs_squared=rhs_squared,
        holds_linear=lhs <= rhs_linear * pad,
        holds_squared=lhs <= rhs_squared * pad,
        theta=float(theta),
        zeta_hat=run.zeta_hat,
    )


@dataclass(frozen=True)
class EuclideanBoundReport:
    """Per-iteration Euclidean distance of the new iterate against the seminorm bound."""

    lhs: np.ndarray
    rhs: np.ndarray
    violations: tuple[int, ...]


def check_euclidean_bound(
    run: RunRecord, problem: InverseProblem, x_star, L: ScalingOperator, c: float
) -> EuclideanBoundReport:
    """Check, per iteration of an exact-data run, that

    ``||x_{k+1} - x*|| <= ||(J^T J + lam L^T L)^{-1}|| (||J|| c ||F_k - y||
    ||x_k - x*||_L + lam ||L|| ||x_k - x*||_L)``.

    Violations signal that ``c`` underestimates the true tangential-cone
    constant; they are reported, not raised.
    """
    if x_star is None:
        raise MissingExactSolution("check_euclidean_bound needs the exact solution")
    if run.mode != "exact":
        raise ValueError("the Euclidean bound applies to exact-data runs")
    x_star = np.asarray(x_star, dtype=float)
    lnorm = float(np.linalg.norm(L.matrix, 2))
    LTL = L.matrix.T @ L.matrix
    lhs_list, rhs_list, violations = [], [], []
    for k, rec in enumerate(run.trace[:-1]):
        J = problem.evaluate_J(rec.x)
        M = J.T @ J + rec.lam * LTL
        inv_norm = 1.0 / max(float(np.linalg.eigvalsh(M)[0]), 1e-300)
        dist_L = seminorm(L, rec.x - x_star)
        rhs = inv_norm * (
            float(np.linalg.norm(J, 2)) * c * rec.res_norm * dist_L
            + rec.lam * lnorm * dist_L
        )
        lhs = float(np.linalg.norm(run.trace[k + 1].x - x_star))
        lhs_list.append(lhs)
        rhs_list.append(rhs)
        if lhs > rhs * (1.0 + 1e-10) + 1e-14:
            violations.append(k)
    return EuclideanBoundReport(
        lhs=np.array(lhs_list), rhs=np.array(rhs_list), violations=tuple(violations)
    )


@dataclass(frozen=True)
class SweepRow:
    delta: float
    seed: int
    k_star: int
    err_euclid: float
    err_Lnorm: float
    final_residual: float
    stop_reason: str


def trend_violations(rows, slack_factor: float = 1.1):
    """Per-seed check that the final error is nonincreasing as delta drops.

    ``rows`` are SweepRows ordered by decreasing delta within each seed;
    returns (delta_coarse, delta_fine, seed) triples where the error grew by
    more than the slack factor between consecutive noise levels.
    """
    seeds = []
    for r in rows:
        if r.seed not in seeds:
            seeds.append(r.seed)
    violations = []
    for s in seeds:
        track = [r for r in rows if r.seed == s]
        for coarse, fine in zip(track, track[1:]):
            if fine.err_euclid > slack_factor * coarse.err_euclid:
                violations.append((coarse.delta, fine.delta, s))
    return tuple(violations)


@dataclass(frozen=True)
class SweepReport:
    """Noise-sweep outcome: one row per (delta, seed) plus the trend verdict.

    ``trend_ok`` asserts that, per seed, the final Euclidean error is
    nonincreasing between consecutive noise levels up to the slack factor;
    ``all_discrepancy`` that every run stopped by the discrepancy rule.
    """

    rows: tuple[SweepRow, ...]
    all_discrepancy: bool
    trend_ok: bool
    trend_violations: tuple[tuple[float, float, int], ...]
    slack_factor: float


def regularization_sweep(
    problem: InverseProblem,
    L: ScalingOperator,
    x0,
    cfg: SolverConfig,
    deltas,
    seeds,
    workers: int = 1,
    slack_factor: float = 1.1,
) -> SweepReport:
    """Solve at every (delta, seed) and check the error trend as delta drops.

    ``deltas`` must be strictly decreasing and positive (exact data is the
    solver's exact mode, not a sweep entry).  Solve errors are re-raised
    annotated with the offending delta and seed.
    """
    deltas = [float(d) for d in deltas]
    if not deltas or any(d <= 0.0 for d in deltas):
        raise ValueError("deltas must be positive (exact data is not a sweep entry)")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    seeds = [int(s) for s in seeds]
    if problem.x_dagger is None:
        raise MissingExactSolution("regularization_sweep needs the exact solution")

    def run_one(d, s):
        data = make_noisy_data(problem.y_exact, d, s)
        try:
            run = solve(problem, data, L, x0, cfg)
        except LmmssError as exc:
            raise type(exc)(f"delta={d:g} seed={s}: {exc}") from exc
        return SweepRow(
            delta=d,
            seed=s,
            k_star=run.k_star,
            err_euclid=float(np.linalg.norm(run.final_x - problem.x_dagger)),
            err_Lnorm=seminorm(L, run.final_x - problem.x_dagger),
            final_residual=run.trace[-1].res_norm,
            stop_reason=run.stop_reason,
        )

    jobs = [(d, s) for d in deltas for s in seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda args: run_one(*args), jobs))
    else:
        rows = [run_one(d, s) for d, s in jobs]

    violations = trend_violations(rows, slack_factor)
    return SweepReport(
        rows=tuple(rows),
        all_discrepancy=all(r.stop_reason == "discrepancy" for r in rows),
        trend_ok=not violations,
        trend_violations=tuple(violations),
        slack_factor=float(slack_factor),
    )
