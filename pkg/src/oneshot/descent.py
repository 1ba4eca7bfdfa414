"""The four coupled iteration schemes and their run loop.

Two classical schemes solve state and adjoint exactly at every outer step:

    usual gradient descent      sigma' = sigma - tau M* p - tau alpha sigma
    semi-implicit descent       sigma' = (sigma - tau M* p) / (1 + tau alpha)

and two one-shot schemes replace the exact solves by exactly k warm-started
fixed-point sweeps per outer iteration (the semi-implicit variant treats
the regularization term implicitly in the sigma update):

    k-step one-shot             explicit sigma update, then k sweeps
    semi-implicit k-step        implicit sigma update, then k sweeps

At alpha = 0 the explicit and semi-implicit variants coincide exactly.
The run loop records one trace row per outer iteration and stops on an
iteration cap, a cost tolerance, a relative step tolerance, or a
divergence guard; divergence is an outcome, not an error, so parameter
sweeps can record both.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import OneShotError, SingularSystemError
from .problem import (IterationState, Objective, cost, fixed_point_sweep,
                      gradient, regularized_solution, solve_adjoint_exact,
                      solve_state_exact)

#: Cost level beyond which a run is declared diverged.
DIVERGENCE_GUARD = 1e12


class SchemeKind(str, enum.Enum):
    """The four iteration schemes; serialized by exact member name."""

    UsualGD = "UsualGD"
    SemiImplicitGD = "SemiImplicitGD"
    KStepOneShot = "KStepOneShot"
    SemiImplicitKStepOneShot = "SemiImplicitKStepOneShot"

    @property
    def is_one_shot(self) -> bool:
        return self in (SchemeKind.KStepOneShot, SchemeKind.SemiImplicitKStepOneShot)


class RunStatus(str, enum.Enum):
    MAX_OUTER = "max_outer"
    TOL_COST = "tol_cost"
    TOL_STEP = "tol_step"
    DIVERGED = "diverged"


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Scheme, step size, inner-iteration count, stop rules and start point.

    ``k`` is ignored by the two gradient-descent schemes.  Initial vectors
    default to zeros (the schemes only prescribe sigma^0; u^0 = p^0 = 0 is
    the neutral, reproducible choice).
    """

    scheme: SchemeKind
    tau: float
    k: int = 1
    max_outer: int = 100
    tol_cost: float = 0.0
    tol_step: float = 0.0
    sigma0: np.ndarray | None = None
    u0: np.ndarray | None = None
    p0: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", SchemeKind(self.scheme))
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_outer < 1:
            raise ValueError(f"max_outer must be >= 1, got {self.max_outer}")
        if self.tol_cost < 0 or self.tol_step < 0:
            raise ValueError("tolerances must be >= 0")


@dataclass(frozen=True)
class TraceRecord:
    """One completed outer iteration (n = 0 is the starting point)."""

    n: int
    cost: float
    grad_norm: float
    rel_err_sigma: float | None
    acc_inner: int
    wall_ms: float


@dataclass(eq=False)
class ConvergenceTrace:
    """Per-iteration records plus the terminal status of one run."""

    scheme: SchemeKind
    tau: float
    k: int
    records: list[TraceRecord] = field(default_factory=list)
    status: RunStatus | None = None
    final_state: IterationState | None = None

    @property
    def diverged(self) -> bool:
        return self.status is RunStatus.DIVERGED

    @property
    def final_cost(self) -> float:
        return self.records[-1].cost

    @property
    def final_rel_err(self) -> float | None:
        return self.records[-1].rel_err_sigma

    def iterations_to_cost(self, level: float):
        """First outer iteration n with J(sigma^n) <= level, or None."""
        for rec in self.records:
            if rec.cost <= level:
                return rec.n
        return None

    def to_csv(self, path, deterministic_wall=True):
        """Write the documented trace CSV.

        Floats carry 17 significant digits.  ``deterministic_wall`` zeroes
        the wall-time column so repeated runs are byte-identical; pass
        False to keep measured times.
        """
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(format_trace_csv(self, deterministic_wall=deterministic_wall))

    def __iter__(self):
        return iter(self.records)


def _fmt(x: float) -> str:
    return f"{x:.16e}"


def format_trace_csv(trace: ConvergenceTrace, deterministic_wall=True) -> str:
    lines = ["n,cost,grad_norm,rel_err_sigma,acc_inner,wall_ms,status"]
    status = trace.status.value if trace.status is not None else ""
    for rec in trace.records:
        rel = "" if rec.rel_err_sigma is None else _fmt(rec.rel_err_sigma)
        wall = "0" if deterministic_wall else _fmt(rec.wall_ms)
        lines.append(
            f"{rec.n},{_fmt(rec.cost)},{_fmt(rec.grad_norm)},{rel},"
            f"{rec.acc_inner},{wall},{status}")
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# single steps (pure functions state -> state)
# ----------------------------------------------------------------------

def step_usual_gd(objective: Objective, state: IterationState, tau: float) -> IterationState:
    """One usual gradient-descent step with exact state/adjoint solves.

    sigma' = sigma - tau M* p(sigma) - tau alpha sigma; the returned u, p
    hold the exact solves at the incoming sigma.
    """
    problem = objective.problem
    u = solve_state_exact(problem, state.sigma)
    p = solve_adjoint_exact(problem, u, objective.g)
    sigma_new = state.sigma - tau * (problem.M.T @ p) - tau * objective.alpha * state.sigma
    return IterationState(sigma_new, u, p)


def step_semi_implicit_gd(objective: Objective, state: IterationState, tau: float) -> IterationState:
    """Semi-implicit variant: sigma' = (sigma - tau M* p(sigma)) / (1 + tau alpha)."""
    problem = objective.problem
    u = solve_state_exact(problem, state.sigma)
    p = solve_adjoint_exact(problem, u, objective.g)
    sigma_new = (state.sigma - tau * (problem.M.T @ p)) / (1.0 + tau * objective.alpha)
    return IterationState(sigma_new, u, p)


def step_k_shot(objective: Objective, state: IterationState, tau: float, k: int) -> IterationState:
    """One k-step one-shot iteration.

    Explicit sigma update from the carried adjoint iterate, then exactly k
    warm-started inner sweeps with the new sigma.
    """
    problem = objective.problem
    sigma_new = state.sigma - tau * (problem.M.T @ state.p) - tau * objective.alpha * state.sigma
    u, p = fixed_point_sweep(problem, state, sigma_new, objective.g, k)
    return IterationState(sigma_new, u, p)


def step_semi_implicit_k_shot(objective: Objective, state: IterationState,
                              tau: float, k: int) -> IterationState:
    """One semi-implicit k-step one-shot iteration."""
    problem = objective.problem
    sigma_new = (state.sigma - tau * (problem.M.T @ state.p)) / (1.0 + tau * objective.alpha)
    u, p = fixed_point_sweep(problem, state, sigma_new, objective.g, k)
    return IterationState(sigma_new, u, p)


_STEPPERS = {
    SchemeKind.UsualGD: lambda obj, st, cfg: step_usual_gd(obj, st, cfg.tau),
    SchemeKind.SemiImplicitGD: lambda obj, st, cfg: step_semi_implicit_gd(obj, st, cfg.tau),
    SchemeKind.KStepOneShot: lambda obj, st, cfg: step_k_shot(obj, st, cfg.tau, cfg.k),
    SchemeKind.SemiImplicitKStepOneShot:
        lambda obj, st, cfg: step_semi_implicit_k_shot(obj, st, cfg.tau, cfg.k),
}


def run(objective: Objective, config: RunConfig) -> ConvergenceTrace:
    """Run one scheme to termination, recording a trace row per iteration.

    Stop conditions, checked in this order after every step: divergence
    guard (non-finite iterates or cost above 1e12), cost tolerance,
    relative step tolerance, iteration cap.  The trace always contains a
    record for n = 0 (the starting point).
    """
    problem = objective.problem
    state = IterationState.zero(problem, config.sigma0, config.u0, config.p0)
    try:
        sigma_ref = regularized_solution(objective)
        ref_norm = float(np.linalg.norm(sigma_ref))
    except (SingularSystemError, OneShotError):
        sigma_ref, ref_norm = None, 0.0

    stepper = _STEPPERS[config.scheme]
    inner_per_outer = config.k if config.scheme.is_one_shot else 1

    trace = ConvergenceTrace(scheme=config.scheme, tau=config.tau,
                             k=config.k if config.scheme.is_one_shot else 1)
    t0 = time.perf_counter()

    def record(n, state):
        j = cost(objective, state.sigma)
        gnorm = float(np.linalg.norm(gradient(objective, state.sigma)))
        if sigma_ref is None:
            rel = None
        else:
            err = float(np.linalg.norm(state.sigma - sigma_ref))
            rel = err / ref_norm if ref_norm > 0 else err
        wall = (time.perf_counter() - t0) * 1e3
        trace.records.append(TraceRecord(n, j, gnorm, rel, inner_per_outer * n, wall))
        return j

    record(0, state)
    status = RunStatus.MAX_OUTER
    for n in range(1, config.max_outer + 1):
        prev_sigma = state.sigma
        state = stepper(objective, state, config)
        if not np.isfinite(state.sigma).all() or not np.isfinite(state.u).all() \
                or not np.isfinite(state.p).all():
            # Leave a finite-cost guard row out: the iterate itself is unusable.
            trace.records.append(TraceRecord(
                n, float("inf"), float("inf"), None, inner_per_outer * n,
                (time.perf_counter() - t0) * 1e3))
            status = RunStatus.DIVERGED
            break
        j = record(n, state)
        if not np.isfinite(j) or j > DIVERGENCE_GUARD:
            status = RunStatus.DIVERGED
            break
        if j <= config.tol_cost:
            status = RunStatus.TOL_COST
            break
        # The step test arms at n >= 2: a one-shot scheme started from the
        # default p^0 = 0 leaves sigma unchanged on its very first update.
        step_size = float(np.linalg.norm(state.sigma - prev_sigma))
        if n >= 2 and config.tol_step > 0 and step_size <= config.tol_step * (
                1.0 + float(np.linalg.norm(prev_sigma))):
            status = RunStatus.TOL_STEP
            break

    trace.status = status
    trace.final_state = state
    return trace
