"""Reader for SNDlib network files in the native plain-text format.

Only the ``NODES`` and ``LINKS`` sections are interpreted; coordinates, link
capacities and costs, ``META`` and ``DEMANDS`` are skipped. Links are taken
as undirected and parallel links between the same pair collapse to one edge.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import queueing
from .dataset import Sample
from .exceptions import DegenerateGraph, ParseError, UnknownNode
from .seeding import make_rng
from .topology import GenConfig, Topology, randomize_network

INSTANCES = ("janos-us", "janos-us-ca", "cost266", "germany50")

_SECTION = re.compile(r"^([A-Z_]+)\s*\($")
_NODE = re.compile(r"^(\S+)\s*\(\s*(\S+)\s+(\S+)\s*\)\s*$")
_LINK = re.compile(r"^(\S+)\s*\(\s*(\S+)\s+(\S+)\s*\)(.*)$")


@dataclass(eq=False)
class NamedTopology:
    topology: Topology
    names: list
    source: str = ""
    links_declared: int = 0
    links_collapsed: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return Path(self.source).stem if self.source else ""


def parse_sndlib(text: str, source: str = "") -> NamedTopology:
    names, index = [], {}
    edges, seen = [], set()
    declared = 0
    section = None
    found = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("?"):
            continue
        if section is None:
            m = _SECTION.match(line)
            if not m:
                raise ParseError(f"expected a section header like 'NODES (', got {line!r}", lineno)
            section = m.group(1)
            if section in found and section in ("NODES", "LINKS"):
                raise ParseError(f"duplicate {section} section", lineno)
            found.add(section)
            if section == "LINKS" and "NODES" not in found:
                raise ParseError("LINKS section appears before NODES", lineno)
            continue
        if line == ")":
            section = None
            continue
        if section == "NODES":
            m = _NODE.match(line)
            if not m:
                raise ParseError(f"malformed node entry {line!r}", lineno)
            name = m.group(1)
            try:
                float(m.group(2)), float(m.group(3))
            except ValueError:
                raise ParseError(f"non-numeric coordinates in {line!r}", lineno) from None
            if name in index:
                raise ParseError(f"duplicate node {name!r}", lineno)
            index[name] = len(names)
            names.append(name)
        elif section == "LINKS":
            m = _LINK.match(line)
            if not m:
                raise ParseError(f"malformed link entry {line!r}", lineno)
            a, b = m.group(2), m.group(3)
            for endpoint in (a, b):
                if endpoint not in index:
                    raise UnknownNode(endpoint, lineno)
            if a == b:
                raise ParseError(f"link {m.group(1)!r} is a self-loop", lineno)
            declared += 1
            pair = tuple(sorted((index[a], index[b])))
            if pair not in seen:
                seen.add(pair)
                edges.append(pair)
        # other sections (META, DEMANDS, ...) are skipped
    if section is not None:
        raise ParseError(f"section {section} is not closed", None)
    for required in ("NODES", "LINKS"):
        if required not in found:
            raise ParseError(f"missing {required} section")
    topo = Topology(len(names), edges)
    return NamedTopology(topo, names, source, declared, declared - len(edges))


def read_sndlib(path) -> NamedTopology:
    path = Path(path)
    return parse_sndlib(path.read_text(encoding="utf-8"), str(path))


def bundled_instance(name: str) -> Path:
    """Path of a bundled SNDlib topology (``janos-us``, ``cost266``, ...)."""
    ref = resources.files("jackson_mpnn") / "data" / "sndlib" / f"{name}.txt"
    path = Path(str(ref))
    if not path.exists():
        raise FileNotFoundError(f"no bundled SNDlib instance named {name!r}")
    return path


def sndlib_files(path) -> list[Path]:
    """A single file, or every ``*.txt`` in a directory (sorted by name)."""
    path = Path(path)
    if path.is_dir():
        return sorted(path.glob("*.txt"))
    return [path]


def sndlib_eval_set(files, cfg: GenConfig | None, seeds) -> list[Sample]:
    """Randomized, labelled networks on fixed SNDlib topologies.

    Every file is combined with every seed; the topology is identical across
    seeds while demands and service rates differ.
    """
    cfg = cfg or GenConfig()
    samples = []
    for f in files:
        named = f if isinstance(f, NamedTopology) else read_sndlib(f)
        topo = named.topology
        if topo.node_count < 2 or not topo.is_connected():
            raise DegenerateGraph(f"{named.source or 'topology'} is not a connected graph")
        for seed in seeds:
            net = randomize_network(topo, cfg, make_rng(seed))
            W = queueing.average_delay(net, queueing.solve_intensities(net)).average_delay
            meta = {
                "family": "sndlib",
                "seed": int(seed),
                "n": topo.node_count,
                "source": named.name,
                "links_collapsed": named.links_collapsed,
            }
            samples.append(Sample(net, W, meta))
    return samples
