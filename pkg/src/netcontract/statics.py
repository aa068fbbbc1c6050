"""Comparative statics of the optimal contract.

Analytic derivatives of v* and a* with respect to a link weight, beta, the
cost of effort, risk aversion and output variance (homogeneous costs), each
cross-checked against central finite differences; the marginal network effect
on profit at beta = 0; and the graph-theoretic prediction of which agents
respond to a link change.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .config import TOL
from .contracts import optimal_v, optimal_v_het, principal_profit
from .equilibrium import nash_efforts
from .errors import AssumptionViolation, ConsistencyError, ModelValidationError, PropertyViolation
from .model import ModelInstance, check_assumptions, has_in_link, weak_components, Network

log = logging.getLogger(__name__)

PARAMS = ("beta", "cost", "eta", "sigma2")


def fd_derivative(f: Callable[[float], Any], x0: float, h: float | None = None):
    """Central difference (f(x0+h) - f(x0-h)) / 2h; default h = 1e-5 * max(1, |x0|)."""
    if h is None:
        h = 1e-5 * max(1.0, abs(x0))
    if not h > 0:
        raise ValueError("step must be positive")
    hi = np.asarray(f(x0 + h), dtype=float)
    lo = np.asarray(f(x0 - h), dtype=float)
    out = (hi - lo) / (2.0 * h)
    return float(out) if out.ndim == 0 else out


def classify(values, *, strict: float = TOL.strict_threshold, zero: float = TOL.zero_threshold) -> tuple[str, ...]:
    out = []
    for d in np.atleast_1d(values):
        if abs(d) < zero:
            out.append("zero")
        elif d > strict:
            out.append("strict_increase")
        elif d < -strict:
            out.append("strict_decrease")
        elif d > 0:
            out.append("weak_increase")
        else:
            out.append("weak_decrease")
    return tuple(out)


def rel_err(analytic, fd) -> float:
    analytic, fd = np.atleast_1d(analytic), np.atleast_1d(fd)
    return float(np.max(np.abs(analytic - fd) / np.maximum(1.0, np.abs(fd))))


@dataclass(frozen=True, eq=False)
class DerivativeReport:
    target: str
    parameter: str
    analytic: np.ndarray | None
    fd: np.ndarray
    max_rel_err: float | None
    sign_class: tuple[str, ...]
    h: float

    @property
    def method(self) -> str:
        return "analytic" if self.analytic is not None else "fd-only"

    def to_dict(self, labels: list[str] | None = None) -> dict[str, Any]:
        return {
            "target": self.target,
            "parameter": self.parameter,
            "method": self.method,
            "agents": labels,
            "analytic": None if self.analytic is None else self.analytic.tolist(),
            "fd": self.fd.tolist(),
            "max_rel_err": self.max_rel_err,
            "h": self.h,
            "sign_class": list(self.sign_class),
        }


@dataclass(frozen=True)
class MarginalEffect:
    """dPi/dbeta at beta = 0.

    ``kappa`` and ``kappa_expanded`` are two algebraically equivalent closed forms of the
    constant; ``kappa_envelope`` = v0 / c^2 follows from the envelope theorem
    (only the direct effect of beta on efforts survives at the optimum).  The
    closed forms coincide with it only when c = 1.
    """

    kappa: float
    kappa_expanded: float
    kappa_envelope: float
    total_weight: float
    analytic_slope: float
    envelope_slope: float
    fd_slope: float
    fd_agrees: bool
    envelope_fd_agrees: bool

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


# --------------------------------------------------------------------------
# closed-form pieces (homogeneous costs)


class _Pieces:
    def __init__(self, inst: ModelInstance):
        if not inst.homogeneous:
            raise ModelValidationError("analytic derivatives need homogeneous costs")
        n = inst.n
        self.n = n
        self.c = c = inst.c
        self.beta = beta = inst.beta
        self.eta, self.sigma2 = inst.eta, inst.sigma2
        self.k = k = c * inst.params.risk
        self.lam = lam = beta / c
        self.g = g = inst.g
        self.i = np.eye(n)
        self.m = m = np.linalg.solve(self.i - lam * g, self.i)
        self.mg = mg = m @ g
        self.q = mg.T @ mg
        self.delta = lam**2 / (1.0 + k)
        w = np.linalg.solve(self.i - self.delta * self.q, self.i)
        self.w = 0.5 * (w + w.T)
        self.alpha = m.sum(axis=0)
        self.v = self.w @ self.alpha / (1.0 + k)
        self.a = m @ self.v / c


def _d_link(p: _Pieces, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    n, m, g, lam = p.n, p.m, p.g, p.lam
    e_ij = np.zeros((n, n))
    e_ij[i, j] = 1.0
    e_ji = e_ij.T
    mtm = m.T @ m
    bracket = (
        e_ji @ mtm @ g
        + lam * g.T @ m.T @ e_ji @ mtm @ g
        + lam * g.T @ mtm @ e_ij @ m @ g
        + g.T @ mtm @ e_ij
    )
    dw = p.delta * p.w @ bracket @ p.w
    dalpha = lam * m[j, :] * m[:, i].sum()
    dv = (dw @ p.alpha + p.w @ dalpha) / (1.0 + p.k)
    dm = lam * m @ e_ij @ m
    da = (dm @ p.v + m @ dv) / p.c
    return dv, da


def _d_beta(p: _Pieces) -> tuple[np.ndarray, np.ndarray]:
    # v* = (1/k) Mbar alpha with Mbar = [I + (M + M' - M'M)/k]^{-1}
    m, g, c, k, eye = p.m, p.g, p.c, p.k, p.i
    mbar = np.linalg.solve(eye + (m + m.T - m.T @ m) / k, eye)
    mgm = m @ g @ m
    dmbar = mbar @ (m.T @ g.T @ m.T @ (m - eye) + (m.T - eye) @ mgm) @ mbar / (c * k)
    dalpha = mgm.sum(axis=0) / c
    dv = (dmbar @ p.alpha + mbar @ dalpha) / k
    da = (mgm @ p.v / c + m @ dv) / c
    return dv, da


def _d_param(p: _Pieces, which: str) -> tuple[np.ndarray, np.ndarray]:
    m, g, w, q, k, c = p.m, p.g, p.w, p.q, p.k, p.c
    pref = 1.0 / (1.0 + k)
    wa = w @ p.alpha
    if which == "cost":
        dk = p.eta * p.sigma2
        dlam = -p.beta / c**2
        dm = dlam * m @ g @ m
        dmg = dm @ g
        dq = dmg.T @ p.mg + p.mg.T @ dmg
        ddelta = 2 * p.lam * dlam / (1.0 + k) - p.lam**2 * dk / (1.0 + k) ** 2
        dw = w @ (ddelta * q + p.delta * dq) @ w
        dalpha = dm.sum(axis=0)
        dv = -dk * pref**2 * wa + pref * (dw @ p.alpha + w @ dalpha)
        da = -p.a / c + (dm @ p.v + m @ dv) / c
        return dv, da
    if which == "eta":
        dk = c * p.sigma2
    elif which == "sigma2":
        dk = c * p.eta
    else:
        raise ModelValidationError(f"unknown parameter '{which}'")
    ddelta = -p.lam**2 * dk / (1.0 + k) ** 2
    dw = w @ (ddelta * q) @ w
    dv = -dk * pref**2 * wa + pref * dw @ p.alpha
    da = m @ dv / c
    return dv, da


# --------------------------------------------------------------------------
# finite differences on the full solver


def _optimum(inst: ModelInstance) -> tuple[np.ndarray, np.ndarray]:
    v = optimal_v(inst, unsafe=True) if inst.homogeneous else optimal_v_het(inst, unsafe=True)
    a = nash_efforts(inst, v, unsafe=True, interior=False).a
    return v, a


def _perturb(inst: ModelInstance, param: str | tuple[int, int], x: float) -> ModelInstance:
    if isinstance(param, tuple):
        g = inst.g.copy()
        g[param] = x
        return inst.replace(g=g)
    if param == "cost":
        return inst.replace(cost=x)
    return inst.replace(**{param: x})


def _base_value(inst: ModelInstance, param) -> float:
    if isinstance(param, tuple):
        return float(inst.g[param])
    if param == "cost":
        return float(inst.cost[0])
    return float(getattr(inst, param))


def _fd_optimum(inst: ModelInstance, param, h: float | None = None) -> tuple[np.ndarray, np.ndarray, float]:
    """Central differences of (v*, a*); h shrinks (floor 1e-8) if a step breaks the assumptions."""
    if param == "cost" and not inst.homogeneous:
        raise ModelValidationError("cost perturbation is defined for homogeneous costs only")
    x0 = _base_value(inst, param)
    h = 1e-5 * max(1.0, abs(x0)) if h is None else h
    while True:
        lo, hi = _perturb(inst, param, x0 - h), _perturb(inst, param, x0 + h)
        if check_assumptions(lo).holds and check_assumptions(hi).holds:
            break
        if h / 2 < TOL.fd_floor:
            raise AssumptionViolation(f"finite-difference step cannot stay inside the assumptions at h={h:.1e}")
        h /= 2
    v_hi, a_hi = _optimum(hi)
    v_lo, a_lo = _optimum(lo)
    return (v_hi - v_lo) / (2 * h), (a_hi - a_lo) / (2 * h), h


def _param_name(inst: ModelInstance, param) -> str:
    if isinstance(param, tuple):
        names = inst.label_names
        return f"g:{names[param[0]]}:{names[param[1]]}"
    return param


def _analytic(inst: ModelInstance, param) -> tuple[np.ndarray, np.ndarray]:
    p = _Pieces(inst)
    if isinstance(param, tuple):
        return _d_link(p, *param)
    if param == "beta":
        return _d_beta(p)
    return _d_param(p, param)


def derivative_reports(inst: ModelInstance, param, *, h: float | None = None, check: bool = True) -> tuple[DerivativeReport, DerivativeReport]:
    """Reports for v* and a* with respect to ``param`` ("beta", "cost", "eta", "sigma2" or an (i, j) link).

    Heterogeneous-cost instances get finite differences only.  With ``check``
    an analytic/fd gap above 1e-4 relative raises ConsistencyError.
    """
    if isinstance(param, tuple):
        i, j = inst.index(param[0]), inst.index(param[1])
        if i == j:
            raise ModelValidationError("self-loops are not links")
        param = (i, j)
    elif param not in PARAMS:
        raise ModelValidationError(f"unknown parameter '{param}'")
    report = check_assumptions(inst)
    if not report.holds:
        raise AssumptionViolation("assumptions fail at the base point", **report.to_dict())
    fd_v, fd_a, h_used = _fd_optimum(inst, param, h)
    name = _param_name(inst, param)
    if inst.homogeneous:
        dv, da = _analytic(inst, param)
        out = []
        for target, an, fd in (("v", dv, fd_v), ("a", da, fd_a)):
            err = rel_err(an, fd)
            if check and err > TOL.fd_mismatch:
                raise ConsistencyError(
                    f"analytic d{target}/d{name} disagrees with finite differences (rel err {err:.3g})",
                    max_rel_err=err,
                )
            out.append(DerivativeReport(target, name, an, fd, err, classify(an), h_used))
        return out[0], out[1]
    return (
        DerivativeReport("v", name, None, fd_v, None, classify(fd_v, zero=1e-8, strict=1e-6), h_used),
        DerivativeReport("a", name, None, fd_a, None, classify(fd_a, zero=1e-8, strict=1e-6), h_used),
    )


def dv_dg(inst: ModelInstance, i, j, **kw) -> DerivativeReport:
    return derivative_reports(inst, (i, j), **kw)[0]


def da_dg(inst: ModelInstance, i, j, **kw) -> DerivativeReport:
    return derivative_reports(inst, (i, j), **kw)[1]


def dv_dbeta(inst: ModelInstance, **kw) -> DerivativeReport:
    return derivative_reports(inst, "beta", **kw)[0]


def da_dbeta(inst: ModelInstance, **kw) -> DerivativeReport:
    return derivative_reports(inst, "beta", **kw)[1]


def dv_dparam(inst: ModelInstance, which: str, **kw) -> DerivativeReport:
    if which not in ("cost", "eta", "sigma2"):
        raise ModelValidationError(f"unknown parameter '{which}'")
    return derivative_reports(inst, which, **kw)[0]


def da_dparam(inst: ModelInstance, which: str, **kw) -> DerivativeReport:
    if which not in ("cost", "eta", "sigma2"):
        raise ModelValidationError(f"unknown parameter '{which}'")
    return derivative_reports(inst, which, **kw)[1]


def dm_dg(inst: ModelInstance, i: int, j: int) -> np.ndarray:
    p = _Pieces(inst)
    e = np.zeros((p.n, p.n))
    e[i, j] = 1.0
    return p.lam * p.m @ e @ p.m


def dm_dbeta(inst: ModelInstance) -> np.ndarray:
    p = _Pieces(inst)
    return p.m @ p.g @ p.m / p.c


# --------------------------------------------------------------------------
# marginal network effect


def kappa_forms(c: float, eta: float, sigma2: float) -> tuple[float, float, float]:
    """(compact form, expanded form, envelope value) of the marginal-effect constant."""
    k = c * eta * sigma2
    compact = 1.0 / (c**2 * (1.0 + k)) + (c - 1.0) * (1.0 + k) / (c**3 * k**2)
    # the expanded coefficient multiplies v0' G v0 = v0^2 * sum(G)
    coeff = (1.0 + k) * (c * k**2 + (c - 1.0) * (1.0 + k) ** 2) / (c**3 * k**2)
    expanded = coeff / (1.0 + k) ** 2
    envelope = 1.0 / (c**2 * (1.0 + k))
    return compact, expanded, envelope


def optimal_profit(inst: ModelInstance) -> float:
    v = optimal_v(inst, unsafe=True) if inst.homogeneous else optimal_v_het(inst, unsafe=True)
    return principal_profit(inst, v, unsafe=True)


def marginal_effect(inst: ModelInstance, *, h: float = 1e-6) -> MarginalEffect:
    if not inst.homogeneous:
        raise ModelValidationError("marginal_effect needs homogeneous costs")
    kappa, kappa_app, kappa_env = kappa_forms(inst.c, inst.eta, inst.sigma2)
    if abs(kappa - kappa_app) > TOL.kappa_forms * max(1.0, abs(kappa)):
        raise ConsistencyError(f"kappa forms disagree: {kappa!r} vs {kappa_app!r}")
    total = float(inst.g.sum())
    fd = fd_derivative(lambda b: optimal_profit(inst.replace(beta=b)), 0.0, h)
    slope, env_slope = kappa * total, kappa_env * total
    tol = TOL.kappa_fd * max(1.0, abs(fd))
    return MarginalEffect(
        kappa=kappa,
        kappa_expanded=kappa_app,
        kappa_envelope=kappa_env,
        total_weight=total,
        analytic_slope=slope,
        envelope_slope=env_slope,
        fd_slope=fd,
        fd_agrees=abs(slope - fd) <= tol,
        envelope_fd_agrees=abs(env_slope - fd) <= tol,
    )


# --------------------------------------------------------------------------
# sign predictions


@dataclass(frozen=True, eq=False)
class LinkEffect:
    i: int
    j: int
    predicted_v: tuple[str, ...]
    predicted_a: tuple[str, ...]
    numeric_v: tuple[str, ...]
    numeric_a: tuple[str, ...]
    dv: np.ndarray
    da: np.ndarray

    @property
    def mismatches(self) -> list[tuple[str, int]]:
        out = []
        for target, pred, num in (("v", self.predicted_v, self.numeric_v), ("a", self.predicted_a, self.numeric_a)):
            out += [(target, k) for k, (p, q) in enumerate(zip(pred, num)) if p != q]
        return out


def predict_link_effect(net: Network, i: int, j: int) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Which agents' pay and effort respond strictly to raising g_ij, from graph structure alone.

    Connectivity is judged with the i-j link present, since raising its weight
    makes it a link even when it starts at zero.
    """
    linked = net.with_weight(i, j, max(1.0, float(net.g[i, j])))
    block = next(b for b in weak_components(linked) if j in b)
    pv, pa = [], []
    for k in range(net.n):
        connected = k in block
        pv.append("strict_increase" if connected and (k == j or has_in_link(net, k)) else "zero")
        pa.append("strict_increase" if connected else "zero")
    return tuple(pv), tuple(pa)


def classify_link_effect(inst: ModelInstance, i, j, *, strict: bool = True) -> LinkEffect:
    i, j = inst.index(i), inst.index(j)
    if i == j:
        raise ModelValidationError("self-loops are not links")
    dv, da = _analytic(inst, (i, j))
    pv, pa = predict_link_effect(inst.network, i, j)
    eff = LinkEffect(i, j, pv, pa, classify(dv), classify(da), dv, da)
    if strict and eff.mismatches:
        raise PropertyViolation(
            f"link {i}->{j}: prediction disagrees with derivative signs", mismatches=eff.mismatches
        )
    return eff


def predict_beta_effect(net: Network) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Agents whose pay / effort rise strictly with beta.

    Effort responds for every agent with a link in either direction; pay only
    for agents someone links to (an agent nobody listens to keeps the
    no-network pay).  Agents linked only by out-links are logged.
    """
    g = net.g
    inl = (g > 0).any(axis=0)
    outl = (g > 0).any(axis=1)
    for k in np.nonzero(outl & ~inl)[0]:
        log.info("agent %d has only out-links: effort rises with beta, pay does not", k)
    pv = tuple("strict_increase" if x else "zero" for x in inl)
    pa = tuple("strict_increase" if x else "zero" for x in (inl | outl))
    return pv, pa


def dprofit(inst: ModelInstance, param, *, h: float | None = None) -> DerivativeReport:
    """Finite-difference slope of optimal profit in ``param`` (no closed form away from beta = 0)."""
    if isinstance(param, tuple):
        param = (inst.index(param[0]), inst.index(param[1]))
    elif param not in PARAMS:
        raise ModelValidationError(f"unknown parameter '{param}'")
    x0 = _base_value(inst, param)
    h = 1e-5 * max(1.0, abs(x0)) if h is None else h
    while not (check_assumptions(_perturb(inst, param, x0 - h)).holds and check_assumptions(_perturb(inst, param, x0 + h)).holds):
        if h / 2 < TOL.fd_floor:
            raise AssumptionViolation(f"finite-difference step cannot stay inside the assumptions at h={h:.1e}")
        h /= 2
    fd = fd_derivative(lambda x: optimal_profit(_perturb(inst, param, x)), x0, h)
    fd = np.atleast_1d(fd)
    return DerivativeReport("profit", _param_name(inst, param), None, fd, None, classify(fd, zero=1e-8, strict=1e-6), h)
