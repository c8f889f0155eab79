"""Open Jackson networks of M/M/1 queues: traffic balance and Little's law.

A network is described by per-node external arrival intensities, per-node
service rates and per-arc routing probabilities. The probability that a packet
leaves the network after service at ``v`` is the residual ``1 - sum_w r_vw``
and is never stored explicitly.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import InvalidNetwork, NoConvergence, SingularSystem, UnstableNode

ROW_SUM_SLACK = 1e-12
SINGULAR_PIVOT_RTOL = 1e-12
RESIDUAL_RTOL = 1e-10


@dataclass(eq=False)
class QueueNetwork:
    """Directed network of single-server exponential queues.

    Parameters
    ----------
    node_count : int
    arcs : array-like of shape (n_arcs, 2)
        ``(source, target)`` node indices.
    external_intensity : array-like of shape (node_count,)
        External Poisson arrival rate at each node.
    service_rate : array-like of shape (node_count,)
    routing : array-like of shape (n_arcs,)
        Probability that a packet finishing service at ``source`` moves to
        ``target``.
    """

    node_count: int
    arcs: np.ndarray
    external_intensity: np.ndarray
    service_rate: np.ndarray
    routing: np.ndarray

    def __post_init__(self):
        self.node_count = int(self.node_count)
        arcs = np.asarray(self.arcs, dtype=np.int64)
        self.arcs = arcs.reshape(-1, 2) if arcs.size else np.zeros((0, 2), dtype=np.int64)
        self.external_intensity = np.asarray(self.external_intensity, dtype=np.float64).reshape(-1)
        self.service_rate = np.asarray(self.service_rate, dtype=np.float64).reshape(-1)
        self.routing = np.asarray(self.routing, dtype=np.float64).reshape(-1)

    @property
    def arc_count(self) -> int:
        return len(self.arcs)

    def routing_matrix(self) -> np.ndarray:
        """Dense ``R`` with ``R[v, w] = r_vw`` and zeros for absent arcs."""
        R = np.zeros((self.node_count, self.node_count))
        if self.arc_count:
            R[self.arcs[:, 0], self.arcs[:, 1]] = self.routing
        return R

    def exit_probability(self) -> np.ndarray:
        return 1.0 - self.routing_matrix().sum(axis=1)

    def permuted(self, perm) -> "QueueNetwork":
        """Relabel nodes so that old node ``v`` becomes ``perm[v]``."""
        perm = np.asarray(perm, dtype=np.int64)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return QueueNetwork(
            self.node_count,
            perm[self.arcs],
            self.external_intensity[inv],
            self.service_rate[inv],
            self.routing.copy(),
        )

    def scaled(self, c: float) -> "QueueNetwork":
        """Same network with intensities and service rates multiplied by ``c``."""
        return QueueNetwork(
            self.node_count,
            self.arcs.copy(),
            self.external_intensity * c,
            self.service_rate * c,
            self.routing.copy(),
        )

    def equals(self, other: "QueueNetwork") -> bool:
        return (
            self.node_count == other.node_count
            and np.array_equal(self.arcs, other.arcs)
            and np.array_equal(self.external_intensity, other.external_intensity)
            and np.array_equal(self.service_rate, other.service_rate)
            and np.array_equal(self.routing, other.routing)
        )


@dataclass
class TrafficSolution:
    intensity: np.ndarray
    queue_length: np.ndarray
    average_delay: float
    utilization: np.ndarray = field(default=None)


def _weakly_connected(n, arcs):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for s, t in arcs:
        ra, rb = find(int(s)), find(int(t))
        if ra != rb:
            parent[ra] = rb
    return len({find(v) for v in range(n)}) == 1


def validate(net: QueueNetwork) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    n = net.node_count
    if n < 1:
        return [f"node count must be positive, got {n}"]
    for name, arr in (("external intensity", net.external_intensity), ("service rate", net.service_rate)):
        if arr.shape != (n,):
            problems.append(f"{name} has length {arr.size}, expected {n}")
    if net.routing.shape != (net.arc_count,):
        problems.append(f"routing has length {net.routing.size}, expected one value per arc ({net.arc_count})")
    if problems:
        return problems

    seen = set()
    arcs_ok = True
    for k, (s, t) in enumerate(net.arcs.tolist()):
        if not (0 <= s < n and 0 <= t < n):
            problems.append(f"arc {k} ({s}, {t}) has an endpoint out of range [0, {n})")
            arcs_ok = False
            continue
        if s == t:
            problems.append(f"arc {k} is a self-loop at node {s}")
        if (s, t) in seen:
            problems.append(f"arc {k} ({s}, {t}) is a duplicate")
        seen.add((s, t))

    for k, r in enumerate(net.routing.tolist()):
        if not (0.0 <= r <= 1.0):
            problems.append(f"routing probability {r} on arc {k} is outside [0, 1]")

    for v, lam in enumerate(net.external_intensity.tolist()):
        if not lam >= 0.0:
            problems.append(f"external intensity at node {v} must be nonnegative, got {lam}")
    if not net.external_intensity.sum() > 0.0:
        problems.append("total external intensity must be positive")
    for v, mu in enumerate(net.service_rate.tolist()):
        if not mu > 0.0:
            problems.append(f"service rate must be positive at node {v}, got {mu}")

    if arcs_ok:
        row = np.zeros(n)
        np.add.at(row, net.arcs[:, 0], net.routing)
        for v, total in enumerate(row.tolist()):
            if total > 1.0 + ROW_SUM_SLACK:
                problems.append(f"routing row sum {total:g} > 1 at node {v}")
        if n > 1 and not _weakly_connected(n, net.arcs.tolist()):
            problems.append("network is not weakly connected")
    return problems


def check_network(net: QueueNetwork) -> QueueNetwork:
    problems = validate(net)
    if problems:
        raise InvalidNetwork("; ".join(problems))
    return net


def _residual(net, lam):
    R = net.routing_matrix()
    return np.abs(lam - net.external_intensity - R.T @ lam)


def solve_intensities(net: QueueNetwork) -> np.ndarray:
    """Solve the traffic balance equations ``(I - R^T) lam = Lambda`` by dense LU."""
    n = net.node_count
    M = np.eye(n) - net.routing_matrix().T
    scale = np.abs(M).max()
    with warnings.catch_warnings():
        # an exactly zero pivot is reported below as SingularSystem
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    if np.abs(np.diag(lu)).min() < SINGULAR_PIVOT_RTOL * scale:
        raise SingularSystem("traffic balance system is singular: routing has a closed loop without exit")
    lam = scipy.linalg.lu_solve((lu, piv), net.external_intensity)
    res = _residual(net, lam).max()
    if res >= RESIDUAL_RTOL * max(1.0, lam.max()):
        raise SingularSystem(f"traffic balance residual {res:g} too large; system is ill-conditioned")
    return lam


def solve_intensities_fixed_point(net: QueueNetwork, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Iterate ``lam <- Lambda + R^T lam`` from ``lam = Lambda``.

    Stops once the largest componentwise change drops below ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    Rt = net.routing_matrix().T
    ext = net.external_intensity
    lam = ext.copy()
    for _ in range(max_iter):
        nxt = ext + Rt @ lam
        if np.abs(nxt - lam).max() < tol:
            return nxt
        lam = nxt
    raise NoConvergence(f"fixed-point iteration did not converge within {max_iter} iterations")


def average_delay(net: QueueNetwork, intensity) -> TrafficSolution:
    """Per-node M/M/1 queue lengths and the network-wide mean sojourn time."""
    lam = np.asarray(intensity, dtype=np.float64)
    mu = net.service_rate
    unstable = np.flatnonzero(lam >= mu)
    if unstable.size:
        v = int(unstable[0])
        raise UnstableNode(v, lam[v], mu[v])
    L = lam / (mu - lam)
    W = L.sum() / net.external_intensity.sum()
    return TrafficSolution(intensity=lam, queue_length=L, average_delay=float(W), utilization=lam / mu)


def solve(net: QueueNetwork) -> TrafficSolution:
    """Validate, solve the balance equations and apply Little's law."""
    check_network(net)
    return average_delay(net, solve_intensities(net))
