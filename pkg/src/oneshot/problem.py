"""Discretized linear inverse problems and their exact solvers.

The forward (state) model is the fixed-point form

    u = B u + M sigma + F,      u in R^{n_u},  sigma in R^{n_sigma},

with measurements g = H u(sigma) in R^{n_g}.  Everything built on top
relies on two standing assumptions, both checked at construction time:

* the state iteration contracts, rho(B) < 1, so I - B is invertible and
  the sweep u_{l+1} = B u_l + M sigma + F converges for any start;
* the end-to-end parameter-to-data map A = H (I - B)^{-1} M has full
  column rank, so the inverse problem has a unique regularized solution.

The regularized output least-squares functional is

    J(sigma) = 1/2 ||H u(sigma) - g||^2 + alpha/2 ||sigma||^2

with gradient M* p(sigma) + alpha sigma, where the adjoint state p solves

    p = B* p + H* (H u - g).

All exact solves use one dense LU factorization of I - B with partial
pivoting, shared between the state equation and the (transposed) adjoint
equation.  Problems and objectives are immutable after construction and
safe to share across threads; every operation here is a pure function of
its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import ProblemAssumptionError, SingularSystemError

#: Relative singular-value cutoff for the full-column-rank check of A.
RANK_TOL = 1e-10


def _readonly(a, dtype=float, ndim=None, name="array"):
    arr = np.array(a, dtype=dtype)
    if ndim is not None and arr.ndim != ndim:
        raise ProblemAssumptionError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def operator_norm(x) -> float:
    """Spectral (2-)norm of a dense matrix."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if min(x.shape) == 0:
        return 0.0
    return float(np.linalg.norm(x, 2))


def spectral_radius(x) -> float:
    """Spectral radius of a dense square matrix, by dense eigensolve."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(x))))


@dataclass(frozen=True, eq=False)
class LinearInverseProblem:
    """The quadruple (B, M, H, F) defining state model and measurements.

    Parameters
    ----------
    B : (n_u, n_u) array
        State-iteration operator; must satisfy rho(B) < 1.
    M : (n_u, n_sigma) array
        Parameter-to-state coupling.
    H : (n_g, n_u) array
        Measurement operator.
    F : (n_u,) array
        Source term.
    rank_tol : float, optional
        Relative singular-value cutoff for the injectivity check of
        A = H (I - B)^{-1} M.
    spectral_radius_bound : float, optional
        A caller-supplied rigorous bound on rho(B), used instead of the
        dense eigensolve.  Intended for structured constructions (e.g.
        block-diagonal stacking of blocks whose radius is already known)
        where the n_u^3 eigensolve would dominate the build.
    """

    B: np.ndarray
    M: np.ndarray
    H: np.ndarray
    F: np.ndarray
    rank_tol: float = RANK_TOL
    spectral_radius_bound: float | None = None

    def __post_init__(self):
        B = _readonly(self.B, ndim=2, name="B")
        M = _readonly(self.M, ndim=2, name="M")
        H = _readonly(self.H, ndim=2, name="H")
        F = _readonly(self.F, ndim=1, name="F")
        n_u = B.shape[0]
        if B.shape != (n_u, n_u):
            raise ProblemAssumptionError(f"B must be square, got {B.shape}")
        if M.shape[0] != n_u:
            raise ProblemAssumptionError(f"M has {M.shape[0]} rows, expected {n_u}")
        if H.shape[1] != n_u:
            raise ProblemAssumptionError(f"H has {H.shape[1]} columns, expected {n_u}")
        if F.shape != (n_u,):
            raise ProblemAssumptionError(f"F has shape {F.shape}, expected ({n_u},)")
        for name, arr in (("B", B), ("M", M), ("H", H), ("F", F)):
            if not np.isfinite(arr).all():
                raise ProblemAssumptionError(f"{name} contains non-finite entries")
        for name, arr in (("B", B), ("M", M), ("H", H), ("F", F)):
            object.__setattr__(self, name, arr)

        if self.spectral_radius_bound is not None:
            rho = float(self.spectral_radius_bound)
        else:
            rho = spectral_radius(B)
        if not rho < 1.0:
            raise ProblemAssumptionError(
                f"state iteration does not contract: rho(B) = {rho:.6g} >= 1")
        object.__setattr__(self, "_rho_B", rho)

        # Injectivity of A = H (I-B)^{-1} M via its singular values.
        sv = scipy.linalg.svdvals(self.reduced_operator()) if self.n_sigma else np.array([])
        if self.n_sigma:
            if sv[0] == 0.0 or sv[-1] <= self.rank_tol * sv[0]:
                raise ProblemAssumptionError(
                    "parameter-to-data map is rank deficient: "
                    f"smallest/largest singular value = {sv[-1]:.3e}/{sv[0]:.3e}")
            object.__setattr__(self, "_singular_values_A", sv)

    # -- dimensions ----------------------------------------------------
    @property
    def n_u(self) -> int:
        return self.B.shape[0]

    @property
    def n_sigma(self) -> int:
        return self.M.shape[1]

    @property
    def n_g(self) -> int:
        return self.H.shape[0]

    @property
    def rho_B(self) -> float:
        """The checked spectral radius (or caller-supplied bound) of B."""
        return self._rho_B

    # -- cached dense factorizations and norms -------------------------
    @cached_property
    def _lu_state(self):
        """LU factorization of I - B (used transposed for the adjoint)."""
        try:
            return scipy.linalg.lu_factor(np.eye(self.n_u) - self.B)
        except scipy.linalg.LinAlgError as exc:  # pragma: no cover - guarded by rho(B)<1
            raise SingularSystemError("I - B is numerically singular") from exc

    @cached_property
    def norm_B(self) -> float:
        return operator_norm(self.B)

    @cached_property
    def norm_M(self) -> float:
        return operator_norm(self.M)

    @cached_property
    def norm_H(self) -> float:
        return operator_norm(self.H)

    def solve_I_minus_B(self, rhs, adjoint=False):
        """Solve (I - B) x = rhs, or (I - B*) x = rhs when ``adjoint``."""
        try:
            return scipy.linalg.lu_solve(self._lu_state, rhs, trans=1 if adjoint else 0)
        except (scipy.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystemError("exact solve failed") from exc

    def reduced_operator(self) -> np.ndarray:
        """The end-to-end map A = H (I - B)^{-1} M (n_g x n_sigma)."""
        cached = self.__dict__.get("_A")
        if cached is None:
            cached = self.H @ self.solve_I_minus_B(self.M)
            cached.setflags(write=False)
            self.__dict__["_A"] = cached
        return cached

    def data_offset(self) -> np.ndarray:
        """The sigma-independent measurement part H (I - B)^{-1} F."""
        cached = self.__dict__.get("_offset")
        if cached is None:
            cached = self.H @ self.solve_I_minus_B(self.F)
            cached.setflags(write=False)
            self.__dict__["_offset"] = cached
        return cached


@dataclass(frozen=True, eq=False)
class Objective:
    """Measurements g plus Tikhonov weight alpha on top of a problem."""

    problem: LinearInverseProblem
    g: np.ndarray
    alpha: float = 0.0

    def __post_init__(self):
        g = _readonly(self.g, ndim=1, name="g")
        if g.shape != (self.problem.n_g,):
            raise ProblemAssumptionError(
                f"g has shape {g.shape}, expected ({self.problem.n_g},)")
        if not np.isfinite(g).all():
            raise ProblemAssumptionError("g contains non-finite entries")
        if not self.alpha >= 0.0:
            raise ProblemAssumptionError(f"alpha must be >= 0, got {self.alpha}")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "alpha", float(self.alpha))

    def shifted_data(self) -> np.ndarray:
        """g with the source contribution removed: g - H (I-B)^{-1} F."""
        return self.g - self.problem.data_offset()


@dataclass(frozen=True, eq=False)
class IterationState:
    """The triple (sigma, u, p) carried by all coupled iterations."""

    sigma: np.ndarray
    u: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        for name in ("sigma", "u", "p"):
            object.__setattr__(self, name, _readonly(getattr(self, name), ndim=1, name=name))
        if self.u.shape != self.p.shape:
            raise ProblemAssumptionError("u and p must have equal length")

    @classmethod
    def zero(cls, problem: LinearInverseProblem, sigma0=None, u0=None, p0=None):
        """Default start: given sigma0 (or zeros), u0 = p0 = 0 unless overridden."""
        sigma = np.zeros(problem.n_sigma) if sigma0 is None else np.asarray(sigma0, float)
        u = np.zeros(problem.n_u) if u0 is None else np.asarray(u0, float)
        p = np.zeros(problem.n_u) if p0 is None else np.asarray(p0, float)
        return cls(sigma, u, p)


# ----------------------------------------------------------------------
# operations
# ----------------------------------------------------------------------

def solve_state_exact(problem: LinearInverseProblem, sigma) -> np.ndarray:
    """Exact state solve: u with (I - B) u = M sigma + F."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (problem.n_sigma,):
        raise ProblemAssumptionError(
            f"sigma has shape {sigma.shape}, expected ({problem.n_sigma},)")
    return problem.solve_I_minus_B(problem.M @ sigma + problem.F)


def solve_adjoint_exact(problem: LinearInverseProblem, u, g) -> np.ndarray:
    """Exact adjoint solve: p with (I - B*) p = H* (H u - g)."""
    u = np.asarray(u, dtype=float)
    g = np.asarray(g, dtype=float)
    return problem.solve_I_minus_B(problem.H.T @ (problem.H @ u - g), adjoint=True)


def fixed_point_sweep(problem: LinearInverseProblem, state: IterationState,
                      sigma_new, g, k: int):
    """Run exactly k inner sweeps on state and adjoint, warm-started.

    Starting from u_0 = state.u and p_0 = state.p, repeat for l = 0..k-1:

        u_{l+1} = B u_l + M sigma_new + F
        p_{l+1} = B* p_l + H* (H u_l - g)

    The adjoint update deliberately uses the pre-update state u_l; changing
    that changes the coupled iteration matrix.

    Returns the pair (u_k, p_k).
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    sigma_new = np.asarray(sigma_new, dtype=float)
    g = np.asarray(g, dtype=float)
    if sigma_new.shape != (problem.n_sigma,):
        raise ProblemAssumptionError(
            f"sigma has shape {sigma_new.shape}, expected ({problem.n_sigma},)")
    if g.shape != (problem.n_g,):
        raise ProblemAssumptionError(f"g has shape {g.shape}, expected ({problem.n_g},)")
    B, M, H, F = problem.B, problem.M, problem.H, problem.F
    drive = M @ sigma_new + F
    u, p = state.u, state.p
    for _ in range(k):
        p_next = B.T @ p + H.T @ (H @ u - g)
        u = B @ u + drive
        p = p_next
    return u, p


def cost(objective: Objective, sigma) -> float:
    """J(sigma) = 1/2 ||H u(sigma) - g||^2 + alpha/2 ||sigma||^2."""
    sigma = np.asarray(sigma, dtype=float)
    u = solve_state_exact(objective.problem, sigma)
    residual = objective.problem.H @ u - objective.g
    return 0.5 * float(residual @ residual) + 0.5 * objective.alpha * float(sigma @ sigma)


def gradient(objective: Objective, sigma) -> np.ndarray:
    """grad J(sigma) = M* p(sigma) + alpha sigma, with exact solves."""
    sigma = np.asarray(sigma, dtype=float)
    problem = objective.problem
    u = solve_state_exact(problem, sigma)
    p = solve_adjoint_exact(problem, u, objective.g)
    return problem.M.T @ p + objective.alpha * sigma


def reduced_operator(problem: LinearInverseProblem) -> np.ndarray:
    """A = H (I - B)^{-1} M; full column rank by the problem invariant."""
    return problem.reduced_operator()


def regularized_solution(objective: Objective) -> np.ndarray:
    """argmin of J, via the normal equations (A*A + alpha I) s = A* g_tilde."""
    problem = objective.problem
    A = problem.reduced_operator()
    g_tilde = objective.shifted_data()
    lhs = A.T @ A + objective.alpha * np.eye(problem.n_sigma)
    if objective.alpha == 0.0:
        sv = problem.__dict__.get("_singular_values_A")
        if sv is not None and sv[-1] <= problem.rank_tol * sv[0]:
            raise SingularSystemError(
                "alpha = 0 with a rank-deficient reduced operator")
    try:
        return scipy.linalg.solve(lhs, A.T @ g_tilde, assume_a="pos")
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError("normal equations are singular") from exc


def random_problem(n_u=8, n_sigma=3, n_g=5, *, norm_b=0.5, rng=None,
                   with_source=True) -> LinearInverseProblem:
    """Dense synthetic instance with exactly ||B|| = norm_b (< 1).

    Handy for tests and demonstrations: B is a rescaled Gaussian matrix, so
    rho(B) <= ||B|| = norm_b < 1, and M, H are Gaussian, which makes the
    reduced operator full rank with probability one (and the constructor
    verifies it).
    """
    if not 0.0 <= norm_b < 1.0:
        raise ValueError(f"norm_b must lie in [0, 1), got {norm_b}")
    rng = np.random.default_rng(rng)
    if norm_b == 0.0:
        B = np.zeros((n_u, n_u))
    else:
        G = rng.standard_normal((n_u, n_u))
        B = norm_b * G / operator_norm(G)
    M = rng.standard_normal((n_u, n_sigma))
    H = rng.standard_normal((n_g, n_u))
    F = rng.standard_normal(n_u) if with_source else np.zeros(n_u)
    return LinearInverseProblem(B, M, H, F)
