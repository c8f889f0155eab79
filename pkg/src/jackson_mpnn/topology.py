"""Random topologies (Erdos-Renyi, Barabasi-Albert) and queueing-parameter randomization."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import queueing
from .dataset import Sample
from .exceptions import DegenerateGraph, GenerationFailed
from .seeding import derive_seed, make_rng

MAX_RETRIES = 100


@dataclass(eq=False)
class Topology:
    """Undirected simple graph on nodes ``0..node_count-1``.

    ``edges`` holds unordered pairs stored as ``(min, max)`` rows, sorted.
    """

    node_count: int
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
        self.edges = e
        self.node_count = int(self.node_count)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.node_count)

    def is_connected(self) -> bool:
        return len(_components(self.node_count, self.edges)) == 1


@dataclass
class GenConfig:
    """Generator settings.

    ``n`` fixes the node count before LCC extraction; otherwise it is drawn
    uniformly from ``n_range`` (inclusive). ``p=None`` means ``2/n`` for ER.
    """

    family: str = "er"
    n: int | None = 40
    n_range: tuple[int, int] | None = None
    p: float | None = None
    m: int = 2
    utilization: tuple[float, float] = (0.3, 0.9)
    seed: int = 0

    def __post_init__(self):
        self.family = self.family.lower()
        if self.family not in ("er", "ba"):
            raise ValueError(f"unknown family {self.family!r}; expected 'er' or 'ba'")
        lo, hi = self.utilization
        if not 0.0 < lo < hi < 1.0:
            raise ValueError(f"utilization range must satisfy 0 < lo < hi < 1, got {self.utilization}")
        if self.p is not None and not 0.0 < self.p <= 1.0:
            raise ValueError("p must lie in (0, 1]")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.n is None and self.n_range is None:
            raise ValueError("either n or n_range is required")
        if self.n_range is not None:
            a, b = self.n_range
            if not 2 <= a <= b:
                raise ValueError(f"invalid n_range {self.n_range}")
        elif self.n < 2:
            raise ValueError("n must be >= 2")

    @classmethod
    def er(cls, n=40, **kw):
        return cls(family="er", n=n, **kw)

    @classmethod
    def ba(cls, n_range=(10, 40), m=2, **kw):
        return cls(family="ba", n=None, n_range=tuple(n_range), m=m, **kw)

    def describe(self) -> str:
        size = f"n={self.n}" if self.n_range is None else f"n=[{self.n_range[0]},{self.n_range[1]}]"
        if self.family == "er":
            p = "2/n" if self.p is None else f"{self.p:g}"
            return f"er({size},p={p})"
        return f"ba({size},m={self.m})"


def _components(n, edges):
    parent = np.arange(n)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for s, t in edges.tolist():
        ra, rb = find(s), find(t)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for v in range(n):
        groups.setdefault(find(v), []).append(v)
    return list(groups.values())


def largest_connected_component(t: Topology) -> Topology:
    """Induced subgraph on the largest component, re-indexed in original order.

    Ties go to the component containing the smallest original node index.
    """
    comps = _components(t.node_count, t.edges)
    best = min(comps, key=lambda c: (-len(c), c[0]))
    if len(best) == t.node_count:
        return Topology(t.node_count, t.edges.copy())
    index = np.full(t.node_count, -1, dtype=np.int64)
    index[best] = np.arange(len(best))
    keep = index[t.edges[:, 0]] >= 0 if t.edge_count else np.zeros(0, dtype=bool)
    return Topology(len(best), index[t.edges[keep]])


def er_graph(n: int, p: float, rng: np.random.Generator) -> Topology:
    if n < 2 or not 0.0 < p <= 1.0:
        raise ValueError("er_graph requires n >= 2 and p in (0, 1]")
    i, j = np.triu_indices(n, k=1)
    keep = rng.random(i.size) < p
    lcc = largest_connected_component(Topology(n, np.column_stack([i[keep], j[keep]])))
    if lcc.node_count < 2:
        raise DegenerateGraph(f"largest connected component has {lcc.node_count} node(s)")
    return lcc


def ba_graph(n: int, m: int, rng: np.random.Generator) -> Topology:
    """Preferential attachment grown from a complete graph on ``m + 1`` nodes."""
    if m < 1 or n < m + 1:
        raise ValueError("ba_graph requires m >= 1 and n >= m + 1")
    i, j = np.triu_indices(m + 1, k=1)
    edges = list(zip(i.tolist(), j.tolist()))
    degree = np.zeros(n)
    degree[: m + 1] = m
    for v in range(m + 1, n):
        w = degree[:v]
        targets = rng.choice(v, size=m, replace=False, p=w / w.sum())
        for u in sorted(targets.tolist()):
            edges.append((u, v))
        degree[targets] += 1
        degree[v] = m
    return Topology(n, edges)


def randomize_network(t: Topology, cfg: GenConfig, rng: np.random.Generator) -> queueing.QueueNetwork:
    """Attach routing, demands and service rates to a connected topology.

    Each undirected edge becomes two arcs. A node of degree ``d`` routes to
    each neighbour with probability ``1/(d+1)`` and exits with the same
    probability. Demands are uniform then normalized to sum to one; service
    rates come from utilizations drawn uniformly from ``cfg.utilization``.
    """
    n = t.node_count
    if n < 2:
        raise DegenerateGraph("topology needs at least two nodes")
    if not t.is_connected():
        raise DegenerateGraph("topology is not connected")
    arcs = np.concatenate([t.edges, t.edges[:, ::-1]])
    arcs = arcs[np.lexsort((arcs[:, 1], arcs[:, 0]))]
    deg = t.degrees()
    routing = 1.0 / (deg[arcs[:, 0]] + 1.0)

    demand = 1.0 - rng.random(n)
    demand = demand / demand.sum()
    net = queueing.QueueNetwork(n, arcs, demand, np.ones(n), routing)
    lam = queueing.solve_intensities(net)
    lo, hi = cfg.utilization
    util = rng.uniform(lo, hi, size=n)
    net.service_rate = lam / util
    return net


def _draw_topology(cfg, rng):
    if cfg.n_range is not None:
        n = int(rng.integers(cfg.n_range[0], cfg.n_range[1], endpoint=True))
    else:
        n = cfg.n
    if cfg.family == "er":
        p = 2.0 / n if cfg.p is None else cfg.p
        return er_graph(n, p, rng)
    return ba_graph(n, cfg.m, rng)


def generate_sample(cfg: GenConfig, seed: int) -> Sample:
    """Draw one labelled sample; a pure function of ``(cfg, seed)``."""
    rng = make_rng(seed)
    for _ in range(MAX_RETRIES):
        try:
            topo = _draw_topology(cfg, rng)
            break
        except DegenerateGraph:
            continue
    else:
        raise GenerationFailed(f"no usable topology after {MAX_RETRIES} attempts (seed {seed})")
    net = randomize_network(topo, cfg, rng)
    W = queueing.average_delay(net, queueing.solve_intensities(net)).average_delay
    meta = {"family": cfg.family, "seed": int(seed), "n": net.node_count, "source": cfg.describe()}
    return Sample(net, W, meta)


def sample_seed(base_seed: int, index: int) -> int:
    return derive_seed(base_seed, index)


def _generate_one(args):
    cfg, seed = args
    return generate_sample(cfg, seed)


def generate_dataset(cfg: GenConfig, count: int, base_seed: int | None = None, n_jobs: int = 1) -> list[Sample]:
    """Generate ``count`` samples; sample ``i`` uses ``sample_seed(base_seed, i)``.

    The result does not depend on ``n_jobs``.
    """
    base = cfg.seed if base_seed is None else base_seed
    jobs = [(cfg, sample_seed(base, i)) for i in range(count)]
    if n_jobs == 1 or count < 2:
        return [_generate_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_generate_one, jobs, chunksize=max(1, count // (4 * n_jobs))))
