"""Influence matrices, the effort game's Nash equilibrium, and agent payoffs."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .config import TOL
from .errors import NumericError
from .model import ModelInstance, require_assumptions

_EXP_MAX = 709.78


@dataclass(frozen=True, eq=False)
class InfluenceSummary:
    """Walk-counting matrix and its row/column sums.

    Homogeneous costs fill ``m`` = (I - lambda G)^{-1} and ``lam``; otherwise
    ``b_het`` = (C - beta G)^{-1} is filled and the sums refer to it.
    """

    m: np.ndarray | None
    b_het: np.ndarray | None
    bonacich: np.ndarray
    alpha: np.ndarray
    lam: float | None

    @property
    def matrix(self) -> np.ndarray:
        return self.m if self.m is not None else self.b_het


@dataclass(frozen=True, eq=False)
class Contract:
    z: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if not (np.all(np.isfinite(self.z)) and np.all(np.isfinite(self.v))):
            raise NumericError("contract has non-finite entries")


@dataclass(frozen=True, eq=False)
class EffortProfile:
    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))

    def __array__(self, dtype=None, copy=None):
        return self.a if dtype is None else self.a.astype(dtype)


def _vec(x) -> np.ndarray:
    if isinstance(x, EffortProfile):
        return x.a
    return np.asarray(x, dtype=float)


def _solve_identity(a: np.ndarray, what: str) -> np.ndarray:
    n = a.shape[0]
    try:
        x = np.linalg.solve(a, np.eye(n))
    except np.linalg.LinAlgError:
        raise NumericError(f"{what} is singular") from None
    resid = np.linalg.norm(a @ x - np.eye(n), ord=np.inf)
    if not resid < TOL.solve_residual:
        raise NumericError(f"inverse of {what} inaccurate (residual {resid:.3g})", residual=resid)
    return x


def influence_matrix(inst: ModelInstance, *, unsafe: bool = False) -> InfluenceSummary:
    if not unsafe:
        require_assumptions(inst, a2=False)
    n = inst.n
    if inst.homogeneous:
        lam = inst.beta / inst.c
        m = _solve_identity(np.eye(n) - lam * inst.g, "I - lambda*G")
        return InfluenceSummary(m, None, m.sum(axis=1), m.sum(axis=0), lam)
    b = _solve_identity(np.diag(inst.cost) - inst.beta * inst.g, "C - beta*G")
    return InfluenceSummary(None, b, b.sum(axis=1), b.sum(axis=0), None)


def nash_efforts(inst: ModelInstance, v, *, unsafe: bool = False, interior: bool = True) -> EffortProfile:
    """Unique equilibrium efforts a = (C - beta G)^{-1} v.

    With ``interior`` set, a negative entry (beyond round-off) is an error:
    the linear closed form is only the equilibrium when no a_i >= 0 bound binds.
    """
    v = _vec(v)
    if not unsafe:
        require_assumptions(inst, a2=False)
    lhs = np.diag(inst.cost) - inst.beta * inst.g
    try:
        a = np.linalg.solve(lhs, v)
    except np.linalg.LinAlgError:
        raise NumericError("C - beta*G is singular") from None
    scale = max(1.0, float(np.max(np.abs(v), initial=0.0)), float(np.max(np.abs(a), initial=0.0)))
    resid = float(np.max(np.abs(lhs @ a - v), initial=0.0))
    if resid > TOL.solve_residual * scale:
        raise NumericError(f"best-response residual {resid:.3g} too large", residual=resid)
    if interior and np.any(a < -TOL.nonneg_slack * scale):
        raise NumericError(
            "equilibrium has negative effort; corner solutions are not modelled",
            min_effort=float(a.min()),
        )
    return EffortProfile(a)


def best_response(inst: ModelInstance, i: int, v_i: float, others) -> float:
    a = _vec(others)
    return max(0.0, (v_i + inst.beta * float(inst.g[i] @ a)) / inst.cost[i])


def certainty_equivalents(inst: ModelInstance, contract: Contract, a) -> np.ndarray:
    a = _vec(a)
    peer = inst.beta * (inst.g @ a)
    return (
        contract.z
        + a * (contract.v + peer)
        - 0.5 * inst.cost * a**2
        - 0.5 * inst.params.risk * contract.v**2
    )


def certainty_equivalent(inst: ModelInstance, i: int, contract: Contract, a) -> float:
    return float(certainty_equivalents(inst, contract, a)[i])


def cara_utility(inst: ModelInstance, i: int, realized_wage: float, a) -> float:
    a = _vec(a)
    x = realized_wage - 0.5 * inst.cost[i] * a[i] ** 2 + inst.beta * a[i] * float(inst.g[i] @ a)
    arg = -inst.eta * x
    if arg > _EXP_MAX:
        warnings.warn("CARA utility underflows to -inf", RuntimeWarning, stacklevel=2)
        return -math.inf
    return -math.exp(arg)
