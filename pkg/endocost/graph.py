"""Interaction matrices W, their topologies and graph invariants.

A graph is an immutable N x N weight matrix plus the coupling strength
lambda. Positive entries are cooperative links, negative entries are
competitive links. Edge connectivity is measured on the underlying
undirected simple graph (antiparallel directed edges collapse).
"""
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
import orjson
from tenacity import RetryError, retry, retry_if_exception_type, stop_after_attempt

from .errors import (AssumptionViolationError, ConstructionFailedError, DimensionMismatchError,
                     InvalidSizeError, InvalidWeightError)
from .models import GraphSpec, TopologyKind
from .observability import get_logger

logger = get_logger(__name__)

RANDOM_SPARSE_MAX_ATTEMPTS = 1000
EXACT_CONNECTIVITY_LIMIT = 64


@dataclass(frozen=True)
class TopologyStats:
    m_directed: int
    m_undirected: int
    d_max: int
    kappa: int
    has_coop_and_comp_per_vertex: bool
    connected: bool


@dataclass(frozen=True, eq=False)
class InteractionGraph:
    n: int
    entries: np.ndarray
    edges: Tuple[Tuple[int, int], ...]
    lam: float
    topology: str = "custom"
    # edge endpoint and weight arrays in the same (sorted) order as `edges`
    rows: np.ndarray = field(repr=False, default=None)
    cols: np.ndarray = field(repr=False, default=None)
    weights: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_matrix(cls, entries, lam: float, topology: str = "custom",
                    validated: bool = False) -> "InteractionGraph":
        """Freeze a weight matrix; `validated` enforces the bounded-interaction assumption."""
        w = np.array(entries, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionMismatchError(f"interaction matrix must be square, got shape {w.shape}")
        n = w.shape[0]
        if n < 2:
            raise InvalidSizeError(f"need at least 2 modules, got {n}")
        if lam < 0 or not np.isfinite(lam):
            raise InvalidWeightError(f"coupling strength must be a finite non-negative number, got {lam}")
        w.setflags(write=False)
        # argwhere walks row-major, i.e. lexicographic (i, j)
        nz = np.argwhere(w != 0.0)
        rows = np.ascontiguousarray(nz[:, 0]) if len(nz) else np.zeros(0, dtype=np.intp)
        cols = np.ascontiguousarray(nz[:, 1]) if len(nz) else np.zeros(0, dtype=np.intp)
        weights = w[rows, cols]
        for arr in (rows, cols, weights):
            arr.setflags(write=False)
        graph = cls(n=n, entries=w, edges=tuple((int(i), int(j)) for i, j in zip(rows, cols)),
                    lam=float(lam), topology=topology, rows=rows, cols=cols, weights=weights)
        if validated:
            report = validate_assumptions(graph)
            if not report.passed:
                raise AssumptionViolationError("; ".join(report.violations), report=report)
        return graph

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def topology_stats(self) -> TopologyStats:
        return stats(self)

    def undirected_adjacency(self) -> np.ndarray:
        nz = self.entries != 0.0
        adj = nz | nz.T
        np.fill_diagonal(adj, False)
        return adj


@dataclass
class ValidationReport:
    violations: List[str]
    notes: List[str]
    lambda_n: float
    spectral_proxy_ok: bool
    spectral_norm: float
    curvature: float
    constraint_violations: List[str]

    @property
    def passed(self) -> bool:
        return not self.violations


def _check_size(n: int, minimum: int, kind: str) -> None:
    if n < minimum:
        raise InvalidSizeError(f"{kind} topology needs n >= {minimum}, got {n}")


def _check_magnitude(**weights: float) -> None:
    for name, value in weights.items():
        if not (-1.0 <= value <= 1.0):
            raise InvalidWeightError(f"{name}={value} is outside [-1, 1]")


def build_full(n: int, w_coop: float = 1.0, w_comp: float = -1.0, lam: float = 0.0) -> InteractionGraph:
    """Complete graph; W_ij = w_coop when i + j is even, w_comp otherwise."""
    _check_size(n, 2, "full")
    _check_magnitude(w_coop=w_coop, w_comp=w_comp)
    idx = np.arange(n)
    w = np.where((idx[:, None] + idx[None, :]) % 2 == 0, w_coop, w_comp).astype(np.float64)
    np.fill_diagonal(w, 0.0)
    return InteractionGraph.from_matrix(w, lam, TopologyKind.FULL.value)


def _circulant(n: int, offsets_and_weights: List[Tuple[int, float]]) -> np.ndarray:
    w = np.zeros((n, n))
    for i in range(n):
        for offset, weight in offsets_and_weights:
            w[i, (i + offset) % n] = weight
    return w


def build_generalized_wuxing(n: int, lam: float, w_sheng: float = 1.0, w_ke: float = -1.0) -> InteractionGraph:
    """Cooperative cycle (i -> i+1) plus competitive chords (i -> i + n//2)."""
    _check_size(n, 5, "generalized-wuxing")
    if not w_sheng > 0:
        raise InvalidWeightError(f"cooperative weight must be positive, got {w_sheng}")
    if not w_ke < 0:
        raise InvalidWeightError(f"competitive weight must be negative, got {w_ke}")
    _check_magnitude(w_sheng=w_sheng, w_ke=w_ke)
    w = _circulant(n, [(1, w_sheng), (n // 2, w_ke)])
    return InteractionGraph.from_matrix(w, lam, TopologyKind.GENERALIZED_WUXING.value)


def build_wuxing(lam: float, w_sheng: float = 1.0, w_ke: float = -1.0) -> InteractionGraph:
    g = build_generalized_wuxing(5, lam, w_sheng, w_ke)
    return InteractionGraph.from_matrix(g.entries, lam, TopologyKind.WUXING.value)


def build_ring(n: int, lam: float, w: float = 1.0) -> InteractionGraph:
    """Bidirectional ring: W[i, i+1] = w forward, W[i+1, i] = -w backward."""
    _check_size(n, 3, "ring")
    _check_magnitude(w=w)
    return InteractionGraph.from_matrix(_circulant(n, [(1, w), (n - 1, -w)]), lam, TopologyKind.RING.value)


def build_star(n: int, lam: float, w: float = 1.0) -> InteractionGraph:
    """Hub 0; hub -> leaf links carry w, leaf -> hub links carry -w."""
    _check_size(n, 3, "star")
    _check_magnitude(w=w)
    m = np.zeros((n, n))
    m[0, 1:] = w
    m[1:, 0] = -w
    return InteractionGraph.from_matrix(m, lam, TopologyKind.STAR.value)


class _RejectedSample(Exception):
    pass


def build_random_sparse(n: int, m_target: int, lam: float, seed: int,
                        w_coop: float = 1.0, w_comp: float = -1.0,
                        max_attempts: int = RANDOM_SPARSE_MAX_ATTEMPTS) -> InteractionGraph:
    """Random directed edge set of size m_target with random signs.

    Samples are rejected until the undirected graph is connected and every
    vertex touches both a cooperative and a competitive link.
    """
    _check_size(n, 2, "random-sparse")
    _check_magnitude(w_coop=w_coop, w_comp=w_comp)
    if not 1 <= m_target <= n * (n - 1):
        raise InvalidSizeError(f"m_target must be in [1, {n * (n - 1)}], got {m_target}")

    rng = np.random.default_rng(seed)
    pairs = np.array([(i, j) for i in range(n) for j in range(n) if i != j])

    @retry(stop=stop_after_attempt(max_attempts), retry=retry_if_exception_type(_RejectedSample))
    def attempt() -> InteractionGraph:
        chosen = pairs[np.sort(rng.choice(len(pairs), size=m_target, replace=False))]
        cooperative = rng.random(m_target) < 0.5
        w = np.zeros((n, n))
        w[chosen[:, 0], chosen[:, 1]] = np.where(cooperative, w_coop, w_comp)
        g = InteractionGraph.from_matrix(w, lam, TopologyKind.RANDOM_SPARSE.value)
        s = g.topology_stats
        if not (s.connected and s.has_coop_and_comp_per_vertex):
            raise _RejectedSample()
        return g

    try:
        return attempt()
    except RetryError as e:
        raise ConstructionFailedError(
            f"random-sparse graph (n={n}, m_target={m_target}, seed={seed}) not found in {max_attempts} attempts"
        ) from e


def build_graph(spec: GraphSpec) -> InteractionGraph:
    """Dispatch a declarative GraphSpec to its generator"""
    kind = spec.kind
    if kind == TopologyKind.FULL:
        return build_full(spec.n, spec.w_coop, spec.w_comp, spec.lam)
    if kind == TopologyKind.WUXING:
        return build_wuxing(spec.lam, spec.w_sheng, spec.w_ke)
    if kind == TopologyKind.GENERALIZED_WUXING:
        return build_generalized_wuxing(spec.n, spec.lam, spec.w_sheng, spec.w_ke)
    if kind == TopologyKind.RING:
        return build_ring(spec.n, spec.lam, spec.w)
    if kind == TopologyKind.STAR:
        return build_star(spec.n, spec.lam, spec.w)
    return build_random_sparse(spec.n, spec.m_target, spec.lam, spec.seed, spec.w_coop, spec.w_comp)


def _bfs_augmenting_path(residual: np.ndarray, source: int, sink: int) -> Optional[List[int]]:
    parent = [-1] * residual.shape[0]
    parent[source] = source
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(residual[u] > 0):
            if parent[v] == -1:
                parent[v] = u
                if v == sink:
                    return parent
                queue.append(v)
    return None


def max_flow(capacity: np.ndarray, source: int, sink: int) -> int:
    """Edmonds-Karp on an integer capacity matrix"""
    residual = np.array(capacity, dtype=np.int64)
    flow = 0
    while (parent := _bfs_augmenting_path(residual, source, sink)) is not None:
        bottleneck = None
        v = sink
        while v != source:
            u = parent[v]
            bottleneck = residual[u, v] if bottleneck is None else min(bottleneck, residual[u, v])
            v = u
        v = sink
        while v != source:
            u = parent[v]
            residual[u, v] -= bottleneck
            residual[v, u] += bottleneck
            v = u
        flow += int(bottleneck)
    return flow


def edge_connectivity(adjacency: np.ndarray) -> int:
    """Minimum number of undirected edges whose removal disconnects the graph.

    Unit-capacity max-flow from vertex 0 to every other vertex; some s-t
    pair is separated by any global minimum cut, and vertex 0 lies on one
    side of it.
    """
    n = adjacency.shape[0]
    if n < 2:
        return 0
    if n > EXACT_CONNECTIVITY_LIMIT:
        logger.warning("edge_connectivity_large_graph", n=n)
    capacity = adjacency.astype(np.int64)
    return min(max_flow(capacity, 0, t) for t in range(1, n))


def _connected(adjacency: np.ndarray) -> bool:
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adjacency[u] & ~seen):
            seen[v] = True
            queue.append(v)
    return bool(seen.all())


def stats(g: InteractionGraph) -> TopologyStats:
    adj = g.undirected_adjacency()
    incident = np.vstack([g.entries, g.entries.T])  # row i: out-links of i; row n + i: in-links of i
    coop = (incident > 0).any(axis=1).reshape(2, g.n).any(axis=0)
    comp = (incident < 0).any(axis=1).reshape(2, g.n).any(axis=0)
    connected = _connected(adj)
    return TopologyStats(
        m_directed=g.m,
        m_undirected=int(np.triu(adj, k=1).sum()),
        d_max=int(adj.sum(axis=1).max()),
        kappa=edge_connectivity(adj) if connected else 0,
        has_coop_and_comp_per_vertex=bool((coop & comp).all()),
        connected=connected,
    )


def _tangent_basis(n: int) -> np.ndarray:
    """Orthonormal basis of {d : sum(d) = 0}, shape (n, n - 1)."""
    _, _, vt = np.linalg.svd(np.ones((1, n)))
    return vt[1:].T


def curvature_on_simplex(g: InteractionGraph) -> float:
    """Largest second derivative of the payoff along a unit simplex direction.

    The payoff is concave on the simplex iff this is <= 0.
    """
    hessian = g.lam * (g.entries + g.entries.T)
    basis = _tangent_basis(g.n)
    return float(np.linalg.eigvalsh(basis.T @ hessian @ basis).max())


def topology_constraint_violations(s: TopologyStats) -> List[str]:
    """Conditions of the optimal-sparsity characterisation that the graph misses"""
    violations = []
    if not s.connected:
        violations.append("disconnected")
    elif s.kappa < 2:
        violations.append("kappa < 2")
    if not s.has_coop_and_comp_per_vertex:
        violations.append("vertex without both cooperative and competitive links")
    return violations


def validate_assumptions(g: InteractionGraph) -> ValidationReport:
    violations: List[str] = []
    notes: List[str] = []

    diag = np.flatnonzero(np.diag(g.entries) != 0.0)
    if len(diag):
        violations.append(f"nonzero diagonal at modules {[int(i) + 1 for i in diag]}")
    if (np.abs(g.entries) > 1.0).any():
        violations.append("weight magnitude exceeds 1")
    lambda_n = g.lam * g.n
    if g.lam > 1.0 / (2 * g.n):
        violations.append(f"lambda exceeds 1/(2N): lambda={g.lam!r}, 1/(2N)={1.0 / (2 * g.n)!r}")

    spectral_norm = float(np.linalg.norm(g.lam * g.entries, ord=2))
    curvature = curvature_on_simplex(g)
    if curvature > 0:
        notes.append(f"payoff is not concave on the simplex (max curvature {curvature:.6g}); "
                     "oracles use multi-start ascent")

    s = g.topology_stats
    if g.topology == TopologyKind.GENERALIZED_WUXING.value and s.kappa != 4:
        notes.append(f"generalized Wuxing with n={g.n} has kappa={s.kappa}, not the claimed 4 "
                     f"(d_max={s.d_max})")

    return ValidationReport(
        violations=violations,
        notes=notes,
        lambda_n=lambda_n,
        spectral_proxy_ok=lambda_n <= 0.5,
        spectral_norm=spectral_norm,
        curvature=curvature,
        constraint_violations=topology_constraint_violations(s),
    )


def to_json(g: InteractionGraph) -> str:
    return orjson.dumps({"n": g.n, "lambda": g.lam, "entries": g.entries.ravel().tolist()}).decode()


def from_json(text: str) -> InteractionGraph:
    data = orjson.loads(text)
    n = int(data["n"])
    entries = data["entries"]
    if len(entries) != n * n:
        raise DimensionMismatchError(f"expected {n * n} entries for n={n}, got {len(entries)}")
    return InteractionGraph.from_matrix(np.array(entries, dtype=np.float64).reshape(n, n),
                                        float(data["lambda"]), data.get("topology", "custom"))
