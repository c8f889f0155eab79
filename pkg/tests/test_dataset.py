import json

import numpy as np
import pytest

from jackson_mpnn.dataset import (
    LabelTransform,
    Sample,
    fingerprint,
    fit_label_transform,
    label_sample,
    read_dataset,
    read_networks,
    write_dataset,
)
from jackson_mpnn.exceptions import DatasetError, DegenerateLabels, LabelMismatch
from jackson_mpnn.queueing import QueueNetwork
from jackson_mpnn.topology import GenConfig, generate_dataset


@pytest.fixture(scope="module")
def samples():
    return generate_dataset(GenConfig.ba(), 100, 31)


def test_round_trip_is_bitwise(samples, tmp_path):
    path = tmp_path / "ds.jsonl"
    write_dataset(samples, path)
    back = read_dataset(path)
    assert len(back) == 100
    assert all(a.equals(b) for a, b in zip(samples, back))
    assert len(path.read_text().splitlines()) == 100


def test_record_layout(samples):
    rec = samples[0].to_record()
    assert list(rec) == ["n", "arcs", "Lambda", "mu", "W", "meta"]
    assert all(len(a) == 3 for a in rec["arcs"])
    assert set(rec["meta"]) >= {"family", "seed", "n", "source"}


def test_negative_label_rejected(samples, tmp_path):
    rec = samples[0].to_record()
    rec["W"] = -1
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(samples[1].to_record()) + "\n" + json.dumps(rec) + "\n")
    with pytest.raises(DatasetError) as info:
        read_dataset(path)
    assert info.value.line == 2


def test_tampered_routing_detected(samples, tmp_path):
    rec = samples[0].to_record()
    rec["arcs"][0][2] *= 0.9
    path = tmp_path / "tampered.jsonl"
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(LabelMismatch):
        read_dataset(path)
    assert len(read_dataset(path, verify=False)) == 1


def test_malformed_line(tmp_path):
    path = tmp_path / "junk.jsonl"
    path.write_text("{not json}\n")
    with pytest.raises(DatasetError, match="line 1"):
        read_dataset(path)


def test_labels_match_solver(samples):
    for s in samples[:20]:
        assert label_sample(s.network).W == pytest.approx(s.W, rel=1e-9)


def test_read_networks_json_array(tmp_path):
    path = tmp_path / "nets.json"
    path.write_text(json.dumps([{"n": 2, "arcs": [[0, 1, 1.0]], "Lambda": [1, 0], "mu": [2, 2]}]))
    (net,) = read_networks(path)
    assert isinstance(net, QueueNetwork) and net.node_count == 2


def test_label_transform(samples):
    t = fit_label_transform(samples)
    W = np.array([s.W for s in samples])
    y = t.apply(W)
    assert abs(y.mean()) < 1e-9 and abs(y.std() - 1) < 1e-9
    np.testing.assert_allclose(t.invert(y), W, rtol=1e-12)


def test_label_transform_is_not_refit_on_other_sets(samples):
    t = fit_label_transform(samples[:50])
    assert abs(t.apply([s.W for s in samples[50:]]).mean()) > 1e-3


def test_label_transform_degenerate():
    with pytest.raises(DegenerateLabels):
        fit_label_transform([2.0, 2.0, 2.0])
    with pytest.raises(DegenerateLabels):
        fit_label_transform([2.0])
    with pytest.raises(DegenerateLabels):
        LabelTransform(1.0, 0.0)


def test_fingerprint_distinguishes(samples):
    assert len({fingerprint(s) for s in samples}) == len(samples)
    clone = Sample(samples[0].network, samples[0].W + 1)
    assert fingerprint(clone) == fingerprint(samples[0])
