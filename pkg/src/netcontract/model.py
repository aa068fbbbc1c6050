"""Problem instances: network, economic parameters, parsing and structural queries.

Internally agents are addressed by 0-based dense indices; files and CLI output
use the string labels, mapped in declaration order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import jsonschema
import numpy as np
from scipy.sparse.csgraph import connected_components

from .config import TOL
from .errors import AssumptionViolation, ModelValidationError, NumericError, SpectralRadiusError

log = logging.getLogger(__name__)

MODEL_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["agents", "beta", "cost", "eta", "sigma2"],
    "properties": {
        "agents": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["from", "to", "w"],
                "properties": {
                    "from": {"type": "string"},
                    "to": {"type": "string"},
                    "w": {"type": "number"},
                },
            },
        },
        "beta": {"type": "number"},
        "cost": {
            "oneOf": [
                {"type": "number"},
                {"type": "array", "items": {"type": "number"}},
            ]
        },
        "eta": {"type": "number"},
        "sigma2": {"type": "number"},
        "reservation": {"type": "array", "items": {"type": "number"}},
    },
}


def _frozen(arr: Any, ndim: int) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    if out.ndim != ndim:
        raise ModelValidationError(f"expected a {ndim}-d array, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AgentId:
    label: str
    index: int


@dataclass(frozen=True, eq=False)
class Network:
    """Weighted digraph; ``g[i, j]`` is how strongly i's marginal benefit responds to j's effort."""

    g: np.ndarray

    def __post_init__(self):
        g = _frozen(self.g, 2)
        if g.shape[0] != g.shape[1]:
            raise ModelValidationError(f"adjacency must be square, got {g.shape}")
        object.__setattr__(self, "g", g)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def __eq__(self, other):
        return isinstance(other, Network) and np.array_equal(self.g, other.g)

    __hash__ = None

    def in_degree(self) -> np.ndarray:
        return (self.g > 0).sum(axis=0)

    def out_degree(self) -> np.ndarray:
        return (self.g > 0).sum(axis=1)

    def transpose(self) -> "Network":
        return Network(self.g.T)

    def with_weight(self, i: int, j: int, w: float) -> "Network":
        g = self.g.copy()
        g[i, j] = w
        return Network(g)

    @classmethod
    def empty(cls, n: int) -> "Network":
        return cls(np.zeros((n, n)))


@dataclass(frozen=True, eq=False)
class EconParams:
    beta: float
    cost: np.ndarray
    eta: float
    sigma2: float
    reservation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "cost", _frozen(self.cost, 1))
        object.__setattr__(self, "reservation", _frozen(self.reservation, 1))

    def __eq__(self, other):
        return (
            isinstance(other, EconParams)
            and self.beta == other.beta
            and self.eta == other.eta
            and self.sigma2 == other.sigma2
            and np.array_equal(self.cost, other.cost)
            and np.array_equal(self.reservation, other.reservation)
        )

    __hash__ = None

    @property
    def homogeneous(self) -> bool:
        return bool(np.all(self.cost == self.cost[0]))

    @property
    def risk(self) -> float:
        """eta * sigma2, the per-unit risk premium coefficient."""
        return self.eta * self.sigma2


@dataclass(frozen=True, eq=False)
class ModelInstance:
    """A network plus economic parameters.

    Construction only checks shapes.  Domain constraints (non-negative
    weights, positive costs, ...) are enforced by :func:`validate_instance`,
    which :func:`parse_model` and :func:`build_instance` call; internal
    finite-difference code relies on being able to step slightly outside them.
    """

    network: Network
    params: EconParams
    labels: tuple[AgentId, ...] = field(default=())

    def __post_init__(self):
        n = self.network.n
        if not self.labels:
            object.__setattr__(self, "labels", tuple(AgentId(str(k + 1), k) for k in range(n)))
        else:
            object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) != n:
            raise ModelValidationError(f"{len(self.labels)} labels for {n} agents")
        for name in ("cost", "reservation"):
            vec = getattr(self.params, name)
            if vec.shape != (n,):
                raise ModelValidationError(
                    f"dimension mismatch: '{name}' has length {vec.shape[0]}, expected {n}"
                )

    def __eq__(self, other):
        return (
            isinstance(other, ModelInstance)
            and self.network == other.network
            and self.params == other.params
            and self.labels == other.labels
        )

    __hash__ = None

    @property
    def n(self) -> int:
        return self.network.n

    @property
    def g(self) -> np.ndarray:
        return self.network.g

    @property
    def beta(self) -> float:
        return self.params.beta

    @property
    def cost(self) -> np.ndarray:
        return self.params.cost

    @property
    def eta(self) -> float:
        return self.params.eta

    @property
    def sigma2(self) -> float:
        return self.params.sigma2

    @property
    def reservation(self) -> np.ndarray:
        return self.params.reservation

    @property
    def homogeneous(self) -> bool:
        return self.params.homogeneous

    @property
    def c(self) -> float:
        """The common cost of effort; only defined for homogeneous instances."""
        if not self.homogeneous:
            raise ModelValidationError("instance has heterogeneous costs; no single c")
        return float(self.cost[0])

    @property
    def label_names(self) -> list[str]:
        return [a.label for a in self.labels]

    def index(self, agent: int | str) -> int:
        """Resolve a label (or an already 0-based index) to an index."""
        if isinstance(agent, (int, np.integer)) and not isinstance(agent, bool):
            if not 0 <= agent < self.n:
                raise ModelValidationError(f"agent index {agent} out of range")
            return int(agent)
        for a in self.labels:
            if a.label == agent:
                return a.index
        raise ModelValidationError(f"unknown agent '{agent}'")

    def replace(self, *, g=None, beta=None, cost=None, eta=None, sigma2=None, reservation=None) -> "ModelInstance":
        p = self.params
        if cost is not None and np.ndim(cost) == 0:
            cost = np.full(self.n, float(cost))
        params = EconParams(
            beta=p.beta if beta is None else beta,
            cost=p.cost if cost is None else cost,
            eta=p.eta if eta is None else eta,
            sigma2=p.sigma2 if sigma2 is None else sigma2,
            reservation=p.reservation if reservation is None else reservation,
        )
        network = self.network if g is None else Network(g)
        return ModelInstance(network, params, self.labels)


@dataclass(frozen=True)
class AssumptionReport:
    rho1: float
    rho2: float
    a1_holds: bool
    a2_holds: bool
    margin1: float
    margin2: float
    generalized: bool = False

    @property
    def holds(self) -> bool:
        return self.a1_holds and self.a2_holds

    def to_dict(self) -> dict[str, Any]:
        d = {
            "rho1": self.rho1,
            "rho2": self.rho2 if np.isfinite(self.rho2) else None,
            "a1_holds": self.a1_holds,
            "a2_holds": self.a2_holds,
            "margin1": self.margin1,
            "margin2": self.margin2 if np.isfinite(self.margin2) else None,
        }
        if self.generalized:
            d["flags"] = ["generalized-A1", "generalized-A2"]
        return d


def validate_instance(inst: ModelInstance) -> ModelInstance:
    names = inst.label_names
    seen: set[str] = set()
    for name in names:
        if name in seen:
            raise ModelValidationError(f"duplicate label '{name}'", agents=[name])
        seen.add(name)
    g = inst.g
    if not np.all(np.isfinite(g)):
        raise ModelValidationError("non-finite edge weight")
    for i, j in zip(*np.nonzero(g < 0)):
        raise ModelValidationError(
            f"negative weight on edge {names[i]}->{names[j]}", agents=[names[i], names[j]]
        )
    for i in np.nonzero(np.diag(g) != 0)[0]:
        raise ModelValidationError(f"self-loop at agent '{names[i]}'", agents=[names[i]])
    p = inst.params
    if not np.isfinite(p.beta) or p.beta < 0:
        raise ModelValidationError(f"beta must be a finite value >= 0, got {p.beta}")
    for k in np.nonzero(~(np.isfinite(p.cost) & (p.cost > 0)))[0]:
        raise ModelValidationError(
            f"nonpositive cost {p.cost[k]} for agent '{names[k]}'", agents=[names[k]]
        )
    if not (np.isfinite(p.eta) and p.eta > 0):
        raise ModelValidationError(f"nonpositive eta {p.eta}")
    if not (np.isfinite(p.sigma2) and p.sigma2 > 0):
        raise ModelValidationError(f"nonpositive sigma2 {p.sigma2}")
    if not np.all(np.isfinite(p.reservation)):
        raise ModelValidationError("non-finite reservation wage")
    return inst


def build_instance(
    g,
    *,
    beta: float,
    cost,
    eta: float = 1.0,
    sigma2: float = 1.0,
    reservation=None,
    labels: Sequence[str] | None = None,
) -> ModelInstance:
    """Construct and validate an instance from arrays; scalar ``cost`` is broadcast."""
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    cost = np.full(n, float(cost)) if np.ndim(cost) == 0 else cost
    reservation = np.zeros(n) if reservation is None else reservation
    agent_ids = tuple(AgentId(str(s), k) for k, s in enumerate(labels)) if labels else ()
    inst = ModelInstance(Network(g), EconParams(beta, cost, eta, sigma2, reservation), agent_ids)
    return validate_instance(inst)


def parse_model(text: str) -> ModelInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelValidationError(f"malformed JSON: {e}") from None
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ModelValidationError(f"schema violation at {where}: {e.message}") from None

    names = doc["agents"]
    n = len(names)
    index: dict[str, int] = {}
    for k, name in enumerate(names):
        if name in index:
            raise ModelValidationError(f"duplicate label '{name}'", agents=[name])
        index[name] = k

    g = np.zeros((n, n))
    seen: set[tuple[int, int]] = set()
    for e in doc.get("edges", []):
        src, dst = e["from"], e["to"]
        for name in (src, dst):
            if name not in index:
                raise ModelValidationError(f"edge refers to unknown agent '{name}'", agents=[name])
        i, j = index[src], index[dst]
        if i == j:
            raise ModelValidationError(f"self-loop at agent '{src}'", agents=[src])
        if (i, j) in seen:
            raise ModelValidationError(f"duplicate edge {src}->{dst}", agents=[src, dst])
        seen.add((i, j))
        w = float(e["w"])
        if not np.isfinite(w):
            raise ModelValidationError(f"non-finite weight on edge {src}->{dst}", agents=[src, dst])
        if w < 0:
            raise ModelValidationError(f"negative weight on edge {src}->{dst}", agents=[src, dst])
        g[i, j] = w

    cost = doc["cost"]
    if isinstance(cost, list):
        if len(cost) != n:
            raise ModelValidationError(f"dimension mismatch: 'cost' has length {len(cost)}, expected {n}")
        cost = np.array(cost, dtype=float)
    else:
        cost = np.full(n, float(cost))
    reservation = doc.get("reservation")
    if reservation is None:
        reservation = np.zeros(n)
    elif len(reservation) != n:
        raise ModelValidationError(
            f"dimension mismatch: 'reservation' has length {len(reservation)}, expected {n}"
        )
    params = EconParams(doc["beta"], cost, doc["eta"], doc["sigma2"], np.array(reservation, dtype=float))
    labels = tuple(AgentId(name, k) for k, name in enumerate(names))
    return validate_instance(ModelInstance(Network(g), params, labels))


def load_model(path) -> ModelInstance:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ModelValidationError(f"cannot read model file: {e}") from None
    return parse_model(text)


def model_to_dict(inst: ModelInstance) -> dict[str, Any]:
    names = inst.label_names
    edges = [
        {"from": names[i], "to": names[j], "w": float(inst.g[i, j])}
        for i, j in zip(*np.nonzero(inst.g))
    ]
    cost = float(inst.cost[0]) if inst.homogeneous else [float(c) for c in inst.cost]
    return {
        "agents": names,
        "edges": edges,
        "beta": inst.beta,
        "cost": cost,
        "eta": inst.eta,
        "sigma2": inst.sigma2,
        "reservation": [float(w) for w in inst.reservation],
    }


def dump_model(inst: ModelInstance) -> str:
    # json writes floats with repr(), which round-trips 64-bit values exactly
    return json.dumps(model_to_dict(inst), indent=2)


def _pattern_is_acyclic(a: np.ndarray) -> bool:
    nz = a != 0
    if np.any(np.diag(nz)):
        return False
    ncomp, _ = connected_components(nz, directed=True, connection="strong")
    return ncomp == a.shape[0]


def _power_radius(a: np.ndarray, tol: float, max_iter: int) -> float:
    # Gelfand-style estimate: geometric mean growth of a renormalised iterate
    n = a.shape[0]
    x = np.ones(n) / np.sqrt(n)
    window = 60
    logs: list[float] = []
    prev = np.nan
    for it in range(max_iter):
        y = a @ x
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        logs.append(np.log(nrm))
        x = y / nrm
        if (it + 1) % window == 0:
            est = float(np.exp(np.mean(logs[-window:])))
            if np.isfinite(prev) and abs(est - prev) <= tol * max(est, 1e-300):
                return est
            prev = est
    est = float(np.exp(np.mean(logs[-window:]))) if logs else np.nan
    raise SpectralRadiusError(f"power iteration did not converge in {max_iter} steps", estimate=est)


def spectral_radius(m, *, tol: float = TOL.spectral_rel, max_iter: int = TOL.power_iter_cap) -> float:
    """Largest eigenvalue modulus of a square matrix.

    Matrices whose sparsity pattern is acyclic are nilpotent and return exactly
    0.  Otherwise a dense eigen decomposition is used, with power iteration as
    the fallback if LAPACK fails to converge.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"spectral_radius needs a square matrix, got shape {a.shape}")
    if a.size == 0:
        return 0.0
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    if _pattern_is_acyclic(a):
        return 0.0
    try:
        return float(np.max(np.abs(np.linalg.eigvals(a))))
    except np.linalg.LinAlgError:
        log.warning("eigvals failed to converge; falling back to power iteration")
        return _power_radius(a, tol, max_iter)


def resolvent(inst: ModelInstance) -> np.ndarray:
    """(C - beta G)^{-1} by a dense solve; raises NumericError if singular."""
    a = np.diag(inst.cost) - inst.beta * inst.g
    try:
        return np.linalg.solve(a, np.eye(inst.n))
    except np.linalg.LinAlgError:
        raise NumericError("C - beta*G is singular") from None


def check_assumptions(inst: ModelInstance) -> AssumptionReport:
    """Spectral conditions for a unique interior equilibrium (rho1) and a concave principal problem (rho2).

    With heterogeneous costs rho1 is taken on beta C^{-1} G and rho2 on the
    scaled curvature matrix of the principal's objective; both collapse to the
    homogeneous forms when all costs are equal.
    """
    g, beta, c = inst.g, inst.beta, inst.cost
    rho1 = spectral_radius(beta * g / c[:, None])
    a1 = rho1 < 1.0
    rho2 = np.inf
    if a1:
        n = inst.n
        if inst.homogeneous:
            c0 = float(c[0])
            lam = beta / c0
            m = np.linalg.solve(np.eye(n) - lam * g, np.eye(n))
            mg = m @ g
            delta = lam**2 / (1.0 + c0 * inst.params.risk)
            rho2 = spectral_radius(delta * mg.T @ mg)
        else:
            gb = g @ resolvent(inst)
            d = inst.params.risk + 1.0 / c
            s = 1.0 / np.sqrt(d)
            x = beta**2 * (gb.T / c) @ gb
            rho2 = spectral_radius(s[:, None] * x * s[None, :])
    a2 = bool(rho2 < 1.0)
    return AssumptionReport(
        rho1=rho1,
        rho2=float(rho2),
        a1_holds=bool(a1),
        a2_holds=a2,
        margin1=1.0 - rho1,
        margin2=1.0 - float(rho2),
        generalized=not inst.homogeneous,
    )


def require_assumptions(inst: ModelInstance, *, a2: bool = True) -> AssumptionReport:
    report = check_assumptions(inst)
    if not report.a1_holds:
        raise AssumptionViolation(f"A1 violated, rho={report.rho1:.6g}", rho1=report.rho1)
    if a2 and not report.a2_holds:
        raise AssumptionViolation(f"A2 violated, rho={report.rho2:.6g}", rho2=report.rho2)
    return report


def weak_components(net: Network) -> list[tuple[int, ...]]:
    """Blocks of the symmetrised graph, each sorted, ordered by smallest member."""
    sym = (net.g + net.g.T) > 0
    _, lab = connected_components(sym, directed=False)
    blocks: dict[int, list[int]] = {}
    for k, b in enumerate(lab):
        blocks.setdefault(int(b), []).append(k)
    return sorted((tuple(v) for v in blocks.values()), key=lambda t: t[0])


def has_in_link(net: Network, k: int) -> bool:
    return bool(np.any(net.g[:, k] > 0))
