import pytest

from jackson_mpnn.exceptions import DegenerateGraph, ParseError, UnknownNode
from jackson_mpnn.sndlib import INSTANCES, bundled_instance, parse_sndlib, read_sndlib, sndlib_eval_set, sndlib_files
from jackson_mpnn.topology import GenConfig

SMALL = """?SNDlib native format; type: network; version: 1.0
# network small

# META SECTION
META (
  granularity = 1month
)

# NODE SECTION
NODES (
  A ( 1.0 2.0 )
  B ( 3.0 4.0 )
  C ( 5.0 6.0 )
)

# LINK SECTION
LINKS (
  L1 ( A B ) 0.00 0.00 0.00 0.00 ( 10.0 1.0 )
  L2 ( B C ) 0.00 0.00 0.00 0.00 ( )
  L3 ( C B ) 0.00 0.00 0.00 0.00 ( )
)

# DEMAND SECTION
DEMANDS (
  D1 ( A C ) 1 5.0 UNLIMITED
)
"""


def test_parse_path_topology():
    named = parse_sndlib(SMALL)
    assert named.names == ["A", "B", "C"]
    assert named.topology.edges.tolist() == [[0, 1], [1, 2]]
    assert named.links_declared == 3 and named.links_collapsed == 1


def test_unknown_node_reports_name_and_line():
    text = SMALL.replace("L2 ( B C )", "L2 ( B Z )")
    with pytest.raises(UnknownNode) as info:
        parse_sndlib(text)
    assert info.value.name == "Z"
    assert info.value.line == text.splitlines().index("  L2 ( B Z ) 0.00 0.00 0.00 0.00 ( )") + 1


@pytest.mark.parametrize(
    "old, new",
    [
        ("  A ( 1.0 2.0 )", "  A 1.0 2.0"),
        ("  A ( 1.0 2.0 )", "  A ( x y )"),
        ("  L1 ( A B ) 0.00", "  L1 A B 0.00"),
        ("NODES (", "NODES"),
        ("  L1 ( A B )", "  L1 ( A A )"),
    ],
)
def test_malformed_input_has_line_number(old, new):
    with pytest.raises(ParseError) as info:
        parse_sndlib(SMALL.replace(old, new, 1))
    assert info.value.line is not None


def test_missing_sections():
    with pytest.raises(ParseError, match="LINKS"):
        parse_sndlib("NODES (\n A ( 0 0 )\n)\n")
    with pytest.raises(ParseError, match="not closed"):
        parse_sndlib("NODES (\n A ( 0 0 )\n")


@pytest.mark.parametrize("name, nodes, links", [("janos-us", 26, 42), ("janos-us-ca", 39, 61), ("cost266", 37, 57), ("germany50", 50, 88)])
def test_bundled_instances(name, nodes, links):
    named = read_sndlib(bundled_instance(name))
    assert named.topology.node_count == nodes
    assert named.topology.edge_count == links
    assert named.topology.is_connected()
    assert named.name == name


def test_sndlib_files_directory_listing():
    files = sndlib_files(bundled_instance("cost266").parent)
    assert sorted(f.stem for f in files) == sorted(INSTANCES)


def test_eval_set_fixed_topology_varied_rates():
    samples = sndlib_eval_set([bundled_instance("janos-us")], GenConfig(), range(100))
    assert len(samples) == 100
    arcs = samples[0].network.arcs
    assert all((s.network.arcs == arcs).all() for s in samples)
    assert len({s.W for s in samples}) == 100
    assert len({tuple(s.network.external_intensity) for s in samples}) == 100
    assert samples[0].meta["family"] == "sndlib" and samples[0].meta["source"] == "janos-us"


def test_eval_set_disconnected(tmp_path):
    path = tmp_path / "split.txt"
    path.write_text("NODES (\n A ( 0 0 )\n B ( 0 0 )\n C ( 0 0 )\n D ( 0 0 )\n)\nLINKS (\n L1 ( A B ) \n L2 ( C D )\n)\n")
    with pytest.raises(DegenerateGraph):
        sndlib_eval_set([path], GenConfig(), [0])
