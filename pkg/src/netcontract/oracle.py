"""Independent checks on the closed forms.

Nothing here calls ``optimal_v`` or ``w_matrix``: the profit maximiser works
from ``principal_profit`` alone, the equilibrium is found by iterating best
responses, and utilities and profit are estimated by Monte Carlo.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import TOL, worker_count
from .contracts import principal_profit
from .equilibrium import Contract, EffortProfile, _vec
from .errors import AssumptionViolation, NumericError
from .model import ModelInstance, require_assumptions

CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class OracleResult:
    v_opt: np.ndarray
    profit_opt: float
    iterations: int
    convergence: float  # scaled gradient norm at v_opt


def _grad(f, v: np.ndarray, h: float) -> np.ndarray:
    g = np.empty_like(v)
    for i in range(v.size):
        e = np.zeros_like(v)
        e[i] = h
        g[i] = (f(v + e) - f(v - e)) / (2 * h)
    return g


def _hessian(f, v: np.ndarray, h: float) -> np.ndarray:
    n = v.size
    hs = np.empty((n, n))
    eye = np.eye(n) * h
    for i in range(n):
        for j in range(i, n):
            d = (
                f(v + eye[i] + eye[j]) - f(v + eye[i] - eye[j]) - f(v - eye[i] + eye[j]) + f(v - eye[i] - eye[j])
            ) / (4 * h * h)
            hs[i, j] = hs[j, i] = d
    return hs


def maximize_profit_numeric(
    inst: ModelInstance,
    v0=None,
    *,
    ascent_tol: float = 1e-6,
    max_iter: int = TOL.iteration_cap,
    polish_rounds: int = 3,
) -> OracleResult:
    """Maximise expected profit over performance pay numerically.

    Gradient ascent with central-difference gradients, Barzilai-Borwein trial
    steps and Armijo backtracking brings the iterate near the optimum.  Since
    profit is quadratic in v, a Newton step with a finite-difference Hessian
    then lands on it up to round-off.
    """
    require_assumptions(inst, a2=False)
    n = inst.n
    v = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float).copy()
    f = lambda x: principal_profit(inst, x, unsafe=True)  # noqa: E731
    h = 1e-3 * max(1.0, float(np.max(np.abs(v), initial=0.0)))

    fv = f(v)
    g = _grad(f, v, h)
    step = 1.0 / max(1.0, float(np.max(inst.cost)) + inst.params.risk)
    it = 0
    while it < max_iter and np.max(np.abs(g)) > ascent_tol * max(1.0, abs(fv)):
        it += 1
        t = step
        while True:
            cand = v + t * g
            fc = f(cand)
            if fc >= fv + 1e-4 * t * float(g @ g):
                break
            t *= 0.5
            if t < 1e-16:
                raise NumericError("line search failed; profit may not be concave along the ascent path")
        g_new = _grad(f, cand, h)
        s, y = cand - v, g_new - g
        sy = float(s @ y)
        # BB step for a maximiser: s's / (-s'y), only meaningful when curvature is negative
        step = float(s @ s) / -sy if sy < 0 else 2.0 * t
        v, fv, g = cand, fc, g_new
        if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > 1e12:
            raise AssumptionViolation("profit ascent diverged; objective not concave")
    if it >= max_iter:
        raise NumericError(f"gradient ascent did not converge in {max_iter} iterations")

    for _ in range(polish_rounds):
        hs = _hessian(f, v, h)
        hs = 0.5 * (hs + hs.T)
        top = float(np.linalg.eigvalsh(hs).max())
        if top >= 0:
            raise AssumptionViolation(
                f"profit Hessian not negative definite (largest eigenvalue {top:.3g})", max_eigenvalue=top
            )
        v = v - np.linalg.solve(hs, _grad(f, v, h))
        it += 1
    fv = f(v)
    g = _grad(f, v, h)
    conv = float(np.max(np.abs(g))) / max(1.0, abs(fv))
    return OracleResult(v, fv, it, conv)


@dataclass(frozen=True, eq=False)
class BestResponseResult:
    efforts: EffortProfile
    iterations: int
    residual: float
    contraction_ratio: float

    @property
    def a(self) -> np.ndarray:
        return self.efforts.a


def _br_map(inst: ModelInstance, v: np.ndarray):
    c, bg = inst.cost, inst.beta * inst.g
    return lambda a: np.maximum(0.0, (v + bg @ a) / c)


def contraction_ratio(inst: ModelInstance, v, a_star, *, steps: int = 240, burn: int = 120) -> float:
    """Asymptotic per-step shrink factor of best-response iteration near ``a_star``.

    A small perturbation is pushed through the best-response map and
    renormalised each step; the geometric mean of its growth after a burn-in
    is the local contraction rate.  Returns 0 when the perturbation dies out
    exactly (acyclic networks).
    """
    t = _br_map(inst, _vec(v))
    a_star = _vec(a_star)
    eps = 1e-6 * max(1.0, float(np.max(np.abs(a_star))))
    base = t(a_star)
    d = np.ones_like(a_star)
    logs = []
    for _ in range(steps):
        norm = float(np.max(np.abs(d)))
        if norm == 0.0:
            return 0.0
        d = t(a_star + eps * d / norm) - base
        grown = float(np.max(np.abs(d)))
        if grown == 0.0:
            return 0.0
        logs.append(math.log(grown / eps))
    return math.exp(float(np.mean(logs[burn:])))


def iterate_best_response(inst: ModelInstance, v, tol: float = 1e-12, *, max_iter: int = TOL.iteration_cap) -> BestResponseResult:
    """Synchronous best-response iteration from a = 0 until successive iterates differ by < tol."""
    require_assumptions(inst, a2=False)
    v = _vec(v)
    t = _br_map(inst, v)
    a = np.zeros(inst.n)
    for it in range(1, max_iter + 1):
        nxt = t(a)
        step = float(np.max(np.abs(nxt - a), initial=0.0))
        a = nxt
        if step < tol:
            return BestResponseResult(EffortProfile(a), it, step, contraction_ratio(inst, v, a))
    raise NumericError(f"best-response iteration did not converge in {max_iter} steps", residual=step)


@dataclass(frozen=True, eq=False)
class SimulationSummary:
    draws: int
    seed: int
    mean_utility: np.ndarray
    std_err: np.ndarray
    mean_profit: float
    profit_std_err: float
    eta: float

    @property
    def implied_ce(self) -> np.ndarray:
        """Certainty equivalent implied by the mean utility, -ln(-E u) / eta."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.log(-self.mean_utility) / self.eta

    def to_dict(self) -> dict:
        return {
            "draws": self.draws,
            "seed": self.seed,
            "mean_utility": self.mean_utility.tolist(),
            "std_err": self.std_err.tolist(),
            "implied_ce": self.implied_ce.tolist(),
            "mean_profit": self.mean_profit,
            "profit_std_err": self.profit_std_err,
        }


def _chunk_moments(inst: ModelInstance, contract: Contract, a: np.ndarray, size: int, seed) -> tuple:
    rng = np.random.Generator(np.random.PCG64(seed))
    eps = rng.standard_normal((size, inst.n)) * math.sqrt(inst.sigma2)
    wage = contract.z + contract.v * (a + eps)
    private = -0.5 * inst.cost * a**2 + inst.beta * a * (inst.g @ a)
    arg = -inst.eta * (wage + private)
    if np.any(arg > 709.78):
        warnings.warn("utility draws overflow; results include -inf", RuntimeWarning, stacklevel=3)
    with np.errstate(over="ignore"):
        u = -np.exp(arg)
    profit = ((a + eps) - wage).sum(axis=1)
    out = []
    for x in (u, profit):
        mean = x.mean(axis=0)
        m2 = ((x - mean) ** 2).sum(axis=0)
        out.append((size, mean, m2))
    return tuple(out)


def _merge(parts):
    # pairwise combination of (count, mean, M2) in a fixed order
    while len(parts) > 1:
        nxt = []
        for k in range(0, len(parts) - 1, 2):
            (na, ma, sa), (nb, mb, sb) = parts[k], parts[k + 1]
            n = na + nb
            d = mb - ma
            nxt.append((n, ma + d * nb / n, sa + sb + d * d * na * nb / n))
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def simulate_outputs(inst: ModelInstance, contract: Contract, a, draws: int, seed: int = 0) -> SimulationSummary:
    """Monte Carlo estimate of each agent's CARA utility and of the principal's profit.

    Draws are split into fixed-size chunks with seeds spawned from ``seed``,
    so the result does not depend on the number of worker threads.
    """
    if draws < 1:
        raise ValueError("draws must be at least 1")
    a = _vec(a)
    sizes = [CHUNK] * (draws // CHUNK) + ([draws % CHUNK] if draws % CHUNK else [])
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        parts = list(pool.map(lambda p: _chunk_moments(inst, contract, a, *p), zip(sizes, seeds)))
    n_u, mean_u, m2_u = _merge([p[0] for p in parts])
    n_p, mean_p, m2_p = _merge([p[1] for p in parts])
    ddof = 1 if draws > 1 else 0
    se_u = np.sqrt(m2_u / max(1, draws - ddof)) / math.sqrt(draws)
    se_p = math.sqrt(float(m2_p) / max(1, draws - ddof)) / math.sqrt(draws)
    return SimulationSummary(draws, int(seed), np.asarray(mean_u), np.asarray(se_u), float(mean_p), se_p, inst.eta)
