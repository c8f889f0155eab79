"""Discrete-event simulation of an open network of M/M/1 FIFO queues.

Used as an empirical check on the analytic delay. Packets arrive from outside
as independent Poisson streams, are served FIFO by a single exponential server
per node, and after each service move to a neighbour with probability ``r_vw``
or leave. Only external arrivals and service completions are events: an
internal hop is instantaneous, so the heap never holds more than ``n + 1``
entries.
"""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass

import numpy as np

from .queueing import QueueNetwork, check_network, solve_intensities

BATCHES = 20
_CHUNK = 1 << 16


@dataclass
class SimResult:
    W: float
    """Mean sojourn time of post-warmup packets (exit time - external arrival time)."""
    W_se: float
    node_queue_length: np.ndarray
    packets_completed: int
    warmup: int
    mean_in_system: float
    little_W: float
    little_W_se: float
    exit_rate: float
    exit_rate_se: float
    duration: float


class _Stream:
    """Chunked draws from one generator method; consumption order is fixed."""

    def __init__(self, draw):
        self._draw = draw
        self._buf = draw(_CHUNK)
        self._i = 0

    def next(self):
        if self._i == _CHUNK:
            self._buf = self._draw(_CHUNK)
            self._i = 0
        x = self._buf[self._i]
        self._i += 1
        return x


def _batch_se(values):
    values = np.asarray(values, dtype=np.float64)
    return float(values.std(ddof=1) / np.sqrt(values.size))


def simulate(
    net: QueueNetwork,
    packets: int = 200_000,
    warmup: int | None = None,
    rng: np.random.Generator | int | None = None,
    batches: int = BATCHES,
) -> SimResult:
    """Simulate until the first ``packets`` external arrivals have all left.

    The first ``warmup`` packets (default 10%) are discarded. The standard
    error of ``W`` comes from ``batches`` consecutive batch means over the
    retained packets in arrival order. Time averages (queue lengths, exit
    rate) cover the interval between the arrivals of packet ``warmup`` and
    packet ``packets``.
    """
    check_network(net)
    if warmup is None:
        warmup = packets // 10
    if not packets > warmup >= 0:
        raise ValueError("need packets > warmup >= 0")
    if packets - warmup < batches:
        raise ValueError(f"need at least {batches} retained packets for batch means")
    lam = net.external_intensity
    mu = net.service_rate
    if np.any(solve_intensities(net) >= mu):
        raise ValueError("network is unstable; the simulation would not reach steady state")

    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    g_arr, g_node, g_svc, g_route = rng.spawn(4)
    interarrival = _Stream(lambda k: g_arr.exponential(1.0 / lam.sum(), size=k))
    arrival_node = _Stream(lambda k: np.searchsorted(np.cumsum(lam) / lam.sum(), g_node.random(k), side="right"))
    service = _Stream(lambda k: g_svc.exponential(1.0, size=k))
    route_u = _Stream(lambda k: g_route.random(k))

    n = net.node_count
    # per-node cumulative routing rows
    targets = [[] for _ in range(n)]
    probs = [[] for _ in range(n)]
    for (s, t), r in zip(net.arcs.tolist(), net.routing.tolist()):
        targets[s].append(t)
        probs[s].append(r)
    cum = [np.cumsum(p).tolist() for p in probs]
    inv_mu = (1.0 / mu).tolist()

    queues = [deque() for _ in range(n)]
    in_node = [0] * n
    area = [0.0] * n
    last = [0.0] * n
    arrived_at = []
    sojourn = np.empty(packets - warmup)
    t_start = t_end = None
    recording = False
    exits = []  # exit times of any packet inside the observation window
    remaining = packets - warmup

    heap = []
    seq = 0
    next_id = 0
    heapq.heappush(heap, (interarrival.next(), seq, -1, -1))
    push, pop = heapq.heappush, heapq.heappop

    while remaining:
        t, _, v, _ = pop(heap)
        if v < 0:
            # external arrival
            pid = next_id
            next_id += 1
            if pid == warmup:
                t_start = t
                recording = True
                for u in range(n):
                    last[u] = t
            if pid == packets:
                t_end = t
                for u in range(n):
                    area[u] += in_node[u] * (t - last[u])
                    last[u] = t
                recording = False
            arrived_at.append(t)
            w = int(arrival_node.next())
            if recording:
                area[w] += in_node[w] * (t - last[w])
                last[w] = t
            in_node[w] += 1
            queues[w].append(pid)
            if in_node[w] == 1:
                seq += 1
                push(heap, (t + service.next() * inv_mu[w], seq, w, 0))
            seq += 1
            push(heap, (t + interarrival.next(), seq, -1, -1))
            continue

        # service completion at v
        pid = queues[v].popleft()
        if recording:
            area[v] += in_node[v] * (t - last[v])
            last[v] = t
        in_node[v] -= 1
        if in_node[v]:
            seq += 1
            push(heap, (t + service.next() * inv_mu[v], seq, v, 0))
        u = route_u.next()
        row = cum[v]
        k = 0
        while k < len(row) and u >= row[k]:
            k += 1
        if k < len(row):
            w = targets[v][k]
            if recording:
                area[w] += in_node[w] * (t - last[w])
                last[w] = t
            in_node[w] += 1
            queues[w].append(pid)
            if in_node[w] == 1:
                seq += 1
                push(heap, (t + service.next() * inv_mu[w], seq, w, 0))
        else:
            if recording:
                exits.append(t)
            if warmup <= pid < packets:
                sojourn[pid - warmup] = t - arrived_at[pid]
                remaining -= 1

    if t_end is None:
        # every tracked packet left before packet ``packets`` arrived
        t_end = t
        for u in range(n):
            area[u] += in_node[u] * (t - last[u])
    duration = t_end - t_start
    node_L = np.asarray(area) / duration
    total_lam = float(lam.sum())

    W_batches = [b.mean() for b in np.array_split(sojourn, batches)]
    # time-sliced batch means for rates and Little's law
    exits = np.asarray([x for x in exits if x <= t_end])
    edges = np.linspace(t_start, t_end, batches + 1)
    counts, _ = np.histogram(exits, bins=edges)
    rates = counts / np.diff(edges)
    little_batches = _little_batches(arrived_at, sojourn, warmup, edges)
    return SimResult(
        W=float(sojourn.mean()),
        W_se=_batch_se(W_batches),
        node_queue_length=node_L,
        packets_completed=int(sojourn.size),
        warmup=int(warmup),
        mean_in_system=float(node_L.sum()),
        little_W=float(node_L.sum() / total_lam),
        little_W_se=_batch_se(little_batches) / total_lam,
        exit_rate=float(exits.size / duration),
        exit_rate_se=_batch_se(rates),
        duration=float(duration),
    )


def _little_batches(arrived_at, sojourn, warmup, edges):
    """Time-average number in system per time slice, from packet intervals.

    Packets outside the retained range are ignored; slices are short enough
    relative to the run that the truncation only trims the slice edges.
    """
    start = np.asarray(arrived_at[warmup : warmup + sojourn.size])
    stop = start + sojourn
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        overlap = np.clip(np.minimum(stop, hi) - np.maximum(start, lo), 0.0, None)
        out.append(overlap.sum() / (hi - lo))
    return out
