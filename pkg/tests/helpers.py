"""Shared fixtures: the worked instances and a sampler of admissible random models."""

from __future__ import annotations

import numpy as np

from netcontract.model import ModelInstance, build_instance, check_assumptions


def star_in_graph() -> np.ndarray:
    """Agents 1 and 3 both link to agent 2 (0-based: g[0,1] = g[2,1] = 1)."""
    g = np.zeros((3, 3))
    g[0, 1] = g[2, 1] = 1.0
    return g


def zigzag_graph() -> np.ndarray:
    """Edges 2->1, 2->3, 4->3, 4->5."""
    g = np.zeros((5, 5))
    for i, j in [(1, 0), (1, 2), (3, 2), (3, 4)]:
        g[i, j] = 1.0
    return g


def line3() -> np.ndarray:
    return np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)


def star_in(beta=0.5, cost=1.0, eta=1.0, sigma2=1.0) -> ModelInstance:
    return build_instance(star_in_graph(), beta=beta, cost=cost, eta=eta, sigma2=sigma2)


def zigzag(beta=0.25) -> ModelInstance:
    return build_instance(zigzag_graph(), beta=beta, cost=1.0)


def line_instance(beta=0.0, costs=(0.5, 1.0, 0.5)) -> ModelInstance:
    return build_instance(line3(), beta=beta, cost=np.array(costs, dtype=float))


def random_instance(rng: np.random.Generator, *, n_max=6, rho_max=0.6, p_edge=0.5,
                    homogeneous=True, lam_min=0.0) -> ModelInstance:
    """Random weighted digraph with parameters drawn until both radii are <= rho_max.

    Weights are U[0,1] on edges present with probability ``p_edge``; costs,
    risk aversion and variance are U[0.5, 2]; beta is U[0, 2].  ``lam_min``
    rejects draws whose peer effect beta / max(cost) is weaker than that.
    """
    while True:
        n = int(rng.integers(2, n_max + 1))
        g = np.where(rng.random((n, n)) < p_edge, rng.random((n, n)), 0.0)
        np.fill_diagonal(g, 0.0)
        cost = float(rng.uniform(0.5, 2)) if homogeneous else rng.uniform(0.5, 2, n)
        inst = build_instance(g, beta=float(rng.uniform(0, 2)), cost=cost,
                              eta=float(rng.uniform(0.5, 2)), sigma2=float(rng.uniform(0.5, 2)))
        rep = check_assumptions(inst)
        if rep.rho1 <= rho_max and rep.rho2 <= rho_max and inst.beta / float(np.max(inst.cost)) >= lam_min:
            return inst


def random_instances(seed: int, count: int, **kw) -> list[ModelInstance]:
    rng = np.random.default_rng(seed)
    return [random_instance(rng, **kw) for _ in range(count)]


def two_component(rng: np.random.Generator, **kw) -> tuple[ModelInstance, list[int], list[int]]:
    """Block-diagonal union of two random graphs under shared parameters."""
    a = random_instance(rng, n_max=4, **kw)
    while True:
        n2 = int(rng.integers(2, 4))
        g2 = np.where(rng.random((n2, n2)) < 0.6, rng.random((n2, n2)), 0.0)
        np.fill_diagonal(g2, 0.0)
        g = np.zeros((a.n + n2, a.n + n2))
        g[: a.n, : a.n] = a.g
        g[a.n :, a.n :] = g2
        inst = build_instance(g, beta=a.beta, cost=a.c, eta=a.eta, sigma2=a.sigma2)
        rep = check_assumptions(inst)
        if rep.rho1 <= 0.6 and rep.rho2 <= 0.6:
            return inst, list(range(a.n)), list(range(a.n, a.n + n2))
