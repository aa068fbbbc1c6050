"""Optimal linear contracts: the no-network baseline, the common-influence matrix, and the full solve."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from .config import TOL
from .equilibrium import Contract, EffortProfile, certainty_equivalents, influence_matrix, nash_efforts
from .errors import AssumptionViolation, ConsistencyError, ModelValidationError, NetContractError, NumericError
from .model import AssumptionReport, ModelInstance, check_assumptions, require_assumptions, resolvent


class Baseline(NamedTuple):
    z: float
    v: float
    a: float


@dataclass(frozen=True, eq=False)
class CommonInfluence:
    w: np.ndarray
    delta: float
    mg: np.ndarray


@dataclass(frozen=True, eq=False)
class ContractSolution:
    contract: Contract
    efforts: EffortProfile
    profit: float
    ce: np.ndarray
    diagnostics: AssumptionReport
    method: str = "closed-form"

    def to_dict(self, labels: list[str] | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {}
        if labels is not None:
            out["agents"] = list(labels)
        out.update(
            v=self.contract.v.tolist(),
            z=self.contract.z.tolist(),
            a=self.efforts.a.tolist(),
            ce=self.ce.tolist(),
            profit=self.profit,
            method=self.method,
            diagnostics=self.diagnostics.to_dict(),
        )
        return out


def _require_homogeneous(inst: ModelInstance, what: str) -> float:
    if not inst.homogeneous:
        raise ModelValidationError(f"{what} needs homogeneous costs; use optimal_v_het")
    return inst.c


def empty_baseline(inst: ModelInstance, i: int) -> Baseline:
    """Single-agent optimum, which also applies to isolated agents and to beta = 0."""
    c = float(inst.cost[i])
    v = 1.0 / (1.0 + c * inst.params.risk)
    a = v / c
    z = float(inst.reservation[i]) + 0.5 * inst.params.risk * v**2 - 0.5 * c * a**2
    return Baseline(z, v, a)


def w_matrix(inst: ModelInstance, *, unsafe: bool = False) -> CommonInfluence:
    c = _require_homogeneous(inst, "w_matrix")
    if not unsafe:
        require_assumptions(inst)
    n = inst.n
    m = influence_matrix(inst, unsafe=True).m
    mg = m @ inst.g
    lam = inst.beta / c
    delta = lam**2 / (1.0 + c * inst.params.risk)
    lhs = np.eye(n) - delta * mg.T @ mg
    try:
        w = np.linalg.solve(lhs, np.eye(n))
    except np.linalg.LinAlgError:
        raise NumericError("I - delta (MG)'MG is singular") from None
    resid = np.linalg.norm(lhs @ w - np.eye(n), ord=np.inf)
    if not resid <= TOL.solve_residual:
        raise NumericError(f"W solve residual {resid:.3g}", residual=resid)
    asym = float(np.max(np.abs(w - w.T)))
    if asym > TOL.symmetry:
        raise NumericError(f"W asymmetric by {asym:.3g}", asymmetry=asym)
    w = 0.5 * (w + w.T)
    return CommonInfluence(w, delta, mg)


def optimal_v(inst: ModelInstance, *, unsafe: bool = False) -> np.ndarray:
    """Closed-form optimal performance pay, W alpha / (1 + c eta sigma2)."""
    c = _require_homogeneous(inst, "optimal_v")
    risk = inst.params.risk
    ci = w_matrix(inst, unsafe=unsafe)
    m = influence_matrix(inst, unsafe=True).m
    alpha = m.sum(axis=0)
    v = ci.w @ alpha / (1.0 + c * risk)

    # residual of the untransformed first-order system c*risk*v = alpha - Mv - M'v + M'Mv
    resid = float(np.max(np.abs(foc_residual(inst, v))))
    if resid > TOL.foc_residual * max(1.0, float(np.max(np.abs(v))), float(np.max(alpha))):
        raise ConsistencyError(f"first-order residual {resid:.3g}", residual=resid)
    if not unsafe and np.any(v <= 0):
        raise NumericError("optimal performance pay not strictly positive", v=v.tolist())
    return v


def foc_residual(inst: ModelInstance, v) -> np.ndarray:
    """c*eta*sigma2*v - (alpha - Mv - M'v + M'Mv); zero at the optimum (homogeneous costs)."""
    c = _require_homogeneous(inst, "foc_residual")
    v = np.asarray(v, dtype=float)
    m = influence_matrix(inst, unsafe=True).m
    alpha = m.sum(axis=0)
    return c * inst.params.risk * v - (alpha - m @ v - m.T @ v + m.T @ (m @ v))


def het_system(inst: ModelInstance) -> tuple[np.ndarray, np.ndarray]:
    """Principal's first-order system S v = B' 1 with B = (C - beta G)^{-1}."""
    b = resolvent(inst)
    s = b + b.T - b.T @ (inst.cost[:, None] * b) + inst.params.risk * np.eye(inst.n)
    return 0.5 * (s + s.T), b.sum(axis=0)


def optimal_v_het(inst: ModelInstance, *, unsafe: bool = False) -> np.ndarray:
    """Optimal performance pay for arbitrary per-agent costs via the first-order system."""
    if not unsafe:
        require_assumptions(inst, a2=False)
    s, rhs = het_system(inst)
    min_eig = float(np.linalg.eigvalsh(s).min())
    if min_eig <= 0 and not unsafe:
        raise AssumptionViolation(
            f"objective not concave (smallest eigenvalue {min_eig:.6g})", min_eigenvalue=min_eig
        )
    try:
        return np.linalg.solve(s, rhs)
    except np.linalg.LinAlgError:
        raise NumericError("first-order system is singular") from None


def optimal_z(inst: ModelInstance, v, a) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    a = np.asarray(a.a if isinstance(a, EffortProfile) else a, dtype=float)
    return inst.reservation + 0.5 * inst.params.risk * v**2 - 0.5 * inst.cost * a**2


def _profit_forms(inst: ModelInstance, v: np.ndarray, a: np.ndarray) -> tuple[float, float]:
    reduced = (
        float(a @ (1.0 - v))
        - float(inst.reservation.sum())
        + 0.5 * float(inst.cost @ a**2)
        - 0.5 * inst.params.risk * float(v @ v)
    )
    z = optimal_z(inst, v, a)
    direct = float(np.sum(a - z - v * a))
    return reduced, direct


def principal_profit(inst: ModelInstance, v, *, unsafe: bool = False) -> float:
    """Expected profit when pay is ``v`` and every participation constraint binds.

    The equilibrium is taken from the linear closed form without the
    interiority check, so the reduced objective can be evaluated anywhere
    (the numeric oracle probes around its iterates).
    """
    v = np.asarray(v, dtype=float)
    a = nash_efforts(inst, v, unsafe=unsafe, interior=False).a
    reduced, direct = _profit_forms(inst, v, a)
    if abs(reduced - direct) > TOL.contract_identity * max(1.0, abs(reduced)):
        raise ConsistencyError(
            f"profit forms disagree: {reduced!r} vs {direct!r}", reduced=reduced, direct=direct
        )
    return reduced


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NetContractError as e:
        if e.stage is None:
            e.stage = name
        raise


def solve(inst: ModelInstance, *, unsafe: bool = False) -> ContractSolution:
    report = _stage("check_assumptions", check_assumptions, inst)
    if not unsafe and not report.holds:
        which = "A1" if not report.a1_holds else "A2"
        rho = report.rho1 if not report.a1_holds else report.rho2
        err = AssumptionViolation(f"{which} violated, rho={rho:.6g}", **report.to_dict())
        err.stage = "check_assumptions"
        raise err
    if inst.homogeneous:
        v = _stage("optimal_v", optimal_v, inst, unsafe=unsafe)
        method = "closed-form"
    else:
        v = _stage("optimal_v_het", optimal_v_het, inst, unsafe=unsafe)
        method = "foc-system"
    a = _stage("nash_efforts", nash_efforts, inst, v, unsafe=True, interior=not unsafe)
    z = _stage("optimal_z", optimal_z, inst, v, a)
    profit = _stage("principal_profit", principal_profit, inst, v, unsafe=True)

    contract = Contract(z, v)
    ce = certainty_equivalents(inst, contract, a)
    gap = float(np.max(np.abs(ce - inst.reservation)))
    scale = max(1.0, float(np.max(np.abs(z))), float(np.max(np.abs(v))))
    if gap > TOL.contract_identity * scale:
        err = ConsistencyError(f"participation constraint not binding (gap {gap:.3g})", gap=gap)
        err.stage = "certainty_equivalent"
        raise err
    return ContractSolution(contract, a, profit, ce, report, method)
