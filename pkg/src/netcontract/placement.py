"""Beta sweeps of the optimal contract and exhaustive search over cost placements."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import worker_count
from .contracts import solve
from .errors import ModelValidationError, NetContractError
from .model import EconParams, ModelInstance, Network, check_assumptions

MAX_PLACEMENT_AGENTS = 9
TIE_TOL = 1e-10


def feasible_beta_max(inst: ModelInstance, *, safety: float = 0.01, iters: int = 200) -> float:
    """Largest beta at which both spectral conditions hold, shrunk by ``safety``.

    Both radii grow monotonically with beta, so the boundary is found by
    bracketing and bisection.  Returns inf when no beta violates them (an
    empty network).
    """
    def ok(b: float) -> bool:
        return check_assumptions(inst.replace(beta=b)).holds

    if not ok(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while ok(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            return float("inf")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo * (1.0 - safety)


@dataclass(frozen=True, eq=False)
class SweepRow:
    beta: float
    v: np.ndarray
    a: np.ndarray
    profit: float
    rho1: float
    rho2: float


@dataclass(frozen=True, eq=False)
class BetaSweep:
    grid: np.ndarray
    rows: tuple[SweepRow, ...]
    infeasible: tuple[float, ...]
    labels: tuple[str, ...] = ()

    @property
    def betas(self) -> np.ndarray:
        return np.array([r.beta for r in self.rows])

    def series(self, what: str) -> np.ndarray:
        """Stack of ``v``, ``a`` or ``profit`` over the feasible rows."""
        return np.array([getattr(r, what) for r in self.rows])

    def is_feasible(self, beta: float) -> bool:
        return beta not in self.infeasible


def _sweep_point(inst: ModelInstance, b: float) -> SweepRow | None:
    try:
        sol = solve(inst.replace(beta=b))
    except NetContractError:
        return None
    d = sol.diagnostics
    return SweepRow(b, sol.contract.v, sol.efforts.a, sol.profit, d.rho1, d.rho2)


def beta_sweep(inst: ModelInstance, betas: Sequence[float]) -> BetaSweep:
    """Solve at each beta; points where the assumptions fail are recorded, not raised."""
    grid = np.asarray(betas, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ModelValidationError("beta grid must be a nonempty list")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ModelValidationError("beta grid must be finite and nonnegative")
    if np.any(np.diff(grid) <= 0):
        raise ModelValidationError("beta grid must be strictly increasing")
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(lambda b: _sweep_point(inst, float(b)), grid))
    rows = tuple(r for r in results if r is not None)
    bad = tuple(float(b) for b, r in zip(grid, results) if r is None)
    return BetaSweep(grid, rows, bad, tuple(inst.label_names))


def crossing_points(sweep: BetaSweep, i: int, j: int, what: str = "v", *, tol: float = 1e-9) -> list[float]:
    """Betas where series i and j change order, linearly interpolated.

    Gaps within ``tol`` (relative) count as ties, so round-off between
    symmetric agents is not reported as a crossing.
    """
    if len(sweep.rows) < 2:
        return []
    s = sweep.series(what)
    d = s[:, i] - s[:, j]
    scale = np.maximum(1.0, np.maximum(np.abs(s[:, i]), np.abs(s[:, j])))
    sign = np.where(np.abs(d) <= tol * scale, 0, np.sign(d))
    b = sweep.betas
    out = []
    last = None
    for k in np.nonzero(sign)[0]:
        if last is not None and sign[k] != sign[last]:
            t = d[last] / (d[last] - d[k])
            out.append(float(b[last] + t * (b[k] - b[last])))
        last = k
    return out


@dataclass(frozen=True, eq=False)
class Assignment:
    costs: tuple[float, ...]
    profit: np.ndarray  # one entry per beta; nan where infeasible

    @property
    def feasible(self) -> np.ndarray:
        return np.isfinite(self.profit)


@dataclass(frozen=True, eq=False)
class PlacementResult:
    betas: np.ndarray
    assignments: tuple[Assignment, ...]
    best: tuple[Assignment | None, ...]  # per beta
    tie_classes: tuple[int, ...]  # per beta: groups of assignments sharing one profit

    def ranking(self, k: int = 0) -> list[Assignment]:
        """Feasible assignments at the k-th beta, best first; equal profits keep permutation order."""
        feas = sorted((a for a in self.assignments if np.isfinite(a.profit[k])), key=lambda a: -a.profit[k])
        out: list[Assignment] = []
        group: list[Assignment] = []
        for a in feas:
            if group and group[0].profit[k] - a.profit[k] > TIE_TOL * max(1.0, abs(group[0].profit[k])):
                out += sorted(group, key=lambda x: x.costs)
                group = []
            group.append(a)
        return out + sorted(group, key=lambda x: x.costs)

    def find(self, costs: Sequence[float]) -> Assignment:
        key = tuple(float(c) for c in costs)
        for a in self.assignments:
            if a.costs == key:
                return a
        raise KeyError(key)


def distinct_permutations(costs: Sequence[float]) -> list[tuple[float, ...]]:
    return sorted(set(itertools.permutations(float(c) for c in costs)))


def _profit_curve(net: Network, params: EconParams, costs: tuple[float, ...], betas: np.ndarray) -> np.ndarray:
    inst = ModelInstance(net, EconParams(0.0, np.array(costs), params.eta, params.sigma2, params.reservation))
    out = np.full(betas.shape, np.nan)
    for k, b in enumerate(betas):
        row = _sweep_point(inst, float(b))
        if row is not None:
            out[k] = row.profit
    return out


def _tie_groups(values: np.ndarray) -> int:
    v = np.sort(values[np.isfinite(values)])
    if v.size == 0:
        return 0
    size, count = 1, 0
    for x, y in zip(v[:-1], v[1:]):
        if y - x <= TIE_TOL * max(1.0, abs(y)):
            size += 1
        else:
            count += size > 1
            size = 1
    return count + (size > 1)


def enumerate_placements(net: Network, costs: Sequence[float], params: EconParams, beta) -> PlacementResult:
    """Profit of every distinct assignment of ``costs`` to the network's positions.

    ``beta`` is a single value or a grid.  Infeasible assignments carry nan
    and never win; among equal profits (within 1e-10) the lexicographically
    first permutation wins.
    """
    if len(costs) != net.n:
        raise ModelValidationError(f"{len(costs)} costs for {net.n} agents")
    if net.n > MAX_PLACEMENT_AGENTS:
        raise ModelValidationError(
            f"exhaustive placement is capped at {MAX_PLACEMENT_AGENTS} agents; sweep named assignments instead"
        )
    if any(not (np.isfinite(c) and c > 0) for c in costs):
        raise ModelValidationError("costs must be positive and finite")
    betas = np.atleast_1d(np.asarray(beta, dtype=float))
    perms = distinct_permutations(costs)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        curves = list(pool.map(lambda p: _profit_curve(net, params, p, betas), perms))
    assignments = tuple(Assignment(p, c) for p, c in zip(perms, curves))

    best, ties = [], []
    profits = np.array(curves).reshape(len(perms), betas.size)
    for k in range(betas.size):
        col = profits[:, k]
        ties.append(_tie_groups(col))
        if not np.any(np.isfinite(col)):
            best.append(None)
            continue
        top = np.nanmax(col)
        idx = next(i for i, x in enumerate(col) if np.isfinite(x) and x >= top - TIE_TOL * max(1.0, abs(top)))
        best.append(assignments[idx])
    return PlacementResult(betas, assignments, tuple(best), tuple(ties))
