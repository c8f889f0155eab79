"""Acceptance suite: each criterion at its stated tolerance, one pass/fail line each.

The desk-scale pipeline (datasets of 2,000 / 200 / 500 graphs, one ER-trained
and one BA-trained model) is built once per module and shared by criteria
5 to 9. Criteria 1 to 5 are run a second time from scratch for the
determinism check. Expect roughly 15 to 20 minutes on one CPU core.

Run standalone with ``python tests/test_acceptance.py``.
"""
import hashlib
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from jackson_mpnn import queueing
from jackson_mpnn.dataset import read_dataset, write_dataset
from jackson_mpnn.metrics import evaluate, table_report
from jackson_mpnn.model import MPNN, PARAM_GROUPS, GraphBatch, ModelConfig
from jackson_mpnn.nn import autodiff as ad
from jackson_mpnn.nn import gradient_check
from jackson_mpnn.queueing import QueueNetwork
from jackson_mpnn.seeding import derive_seed, make_rng
from jackson_mpnn.simulation import simulate
from jackson_mpnn.sndlib import INSTANCES, bundled_instance, read_sndlib, sndlib_eval_set
from jackson_mpnn.topology import GenConfig, generate_dataset, generate_sample
from jackson_mpnn.training import TrainConfig, batch_mse, train

SEED = 2024
DESK_STEPS = 8000
SIZES = {"train": 2000, "test": 200, "eval": 500}


def record(k, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a, dtype=np.float64)).tobytes())
    return h.hexdigest()


# --- criteria 1 to 4 -------------------------------------------------------------


def solver_equivalence(seed):
    t0 = time.perf_counter()
    nets = [s.network for s in generate_dataset(GenConfig.er(n=40), 100, derive_seed(seed, "solver"))]
    worst, lams = 0.0, []
    for net in nets:
        direct = queueing.solve_intensities(net)
        fixed = queueing.solve_intensities_fixed_point(net, tol=1e-12)
        worst = max(worst, float(np.max(np.abs(direct - fixed) / np.abs(direct))))
        lams.append(direct)
    return {"worst": worst, "seconds": time.perf_counter() - t0, "digest": _digest(*lams)}


def des_validation(seed):
    samples = generate_dataset(GenConfig.er(n=40), 20, derive_seed(seed, "des"))
    z = []
    for i, s in enumerate(samples):
        res = simulate(s.network, 200_000, rng=derive_seed(seed, "des-run", i))
        z.append((res.W - s.W) / res.W_se)
    mm1 = QueueNetwork(1, [], [1.0], [2.0], [])
    tandem = QueueNetwork(2, [(0, 1)], [1.0, 0.0], [2.0, 2.0], [1.0])
    r1 = simulate(mm1, 200_000, rng=derive_seed(seed, "mm1"))
    r2 = simulate(tandem, 200_000, rng=derive_seed(seed, "tandem"))
    return {
        "z": np.array(z),
        "mm1": (r1.W, r1.W_se),
        "tandem": (r2.W, r2.W_se),
        "digest": _digest(z, [r1.W, r1.W_se, r2.W, r2.W_se]),
    }


def five_node_graph(seed):
    # BA with m = 2 on 5 nodes is connected and keeps all 5 nodes
    return generate_sample(GenConfig(family="ba", n=5, m=2), derive_seed(seed, "grad"))


def gradient_integrity(seed):
    sample = five_node_graph(seed)
    model = MPNN(ModelConfig(), make_rng(derive_seed(seed, "grad-init")))
    rng = make_rng(derive_seed(seed, "grad-bn"))
    model.bn.running_mean = rng.normal(size=model.cfg.hidden_dim)
    model.bn.running_var = rng.uniform(0.5, 2.0, size=model.cfg.hidden_dim)
    batch = GraphBatch([sample.network], [0.3])
    report = gradient_check(lambda L: ad.mse(model.forward(batch, L, training=False), batch.labels), model.store, tol=1e-4)
    return {"report": report, "groups": report.group_errors(PARAM_GROUPS), "n": sample.network.node_count}


def permutation_invariance(seed):
    net = generate_sample(GenConfig(family="ba", n=20, m=2), derive_seed(seed, "perm")).network
    model = MPNN(ModelConfig(), make_rng(derive_seed(seed, "perm-init")))
    calib = generate_dataset(GenConfig.er(), 64, derive_seed(seed, "perm-calib"))
    model.input_scale = np.array([0.05, 0.1])
    model.calibrate_batch_norm([GraphBatch([s.network for s in calib])])
    base = float(model.predict(GraphBatch([net]))[0])
    rng = make_rng(derive_seed(seed, "perm-draws"))
    deltas = []
    for _ in range(100):
        perm = rng.permutation(net.node_count)
        deltas.append(abs(float(model.predict(GraphBatch([net.permuted(perm)]))[0]) - base))
    return {"n": net.node_count, "max_delta": max(deltas), "digest": _digest([base], deltas)}


# --- desk-scale pipeline ---------------------------------------------------------


def _datasets(family, seed, workdir):
    cfg = GenConfig.er(n=40) if family == "er" else GenConfig.ba(n_range=(10, 40), m=2)
    out = {}
    for split, count in SIZES.items():
        samples = generate_dataset(cfg, count, derive_seed(seed, family, split))
        path = Path(workdir) / f"{family}_{split}.jsonl"
        write_dataset(samples, path)
        out[split] = read_dataset(path)
    return out


def train_family(family, seed, workdir):
    t0 = time.perf_counter()
    data = _datasets(family, seed, workdir)
    hyper = TrainConfig(steps=DESK_STEPS, seed=derive_seed(seed, family, "train-run"))
    result = train(data["train"], data["test"], ModelConfig(), hyper)
    result.curve.write_csv(Path(workdir) / f"{family}_curve.csv")
    return {"data": data, "result": result, "seconds": time.perf_counter() - t0}


def criteria_1_to_5(seed, workdir):
    out = {
        1: solver_equivalence(seed),
        2: des_validation(seed),
        3: gradient_integrity(seed),
        4: permutation_invariance(seed),
    }
    t0 = time.perf_counter()
    er = train_family("er", seed, workdir)
    res = er["result"]
    report = evaluate(res.model, er["data"]["eval"], res.transform, "ER", "ER", seed=derive_seed(seed, "boot", "ER"))
    text, table = table_report([report])
    Path(workdir, "er_report.txt").write_text(text)
    Path(workdir, "er_report.csv").write_text(table)
    out[5] = {"report": report, "seconds": time.perf_counter() - t0, "run": er}
    return out


def _files(workdir):
    return {p.name: p.read_bytes() for p in sorted(Path(workdir).iterdir()) if p.is_file()}


@pytest.fixture(scope="module")
def first_run(tmp_path_factory):
    workdir = tmp_path_factory.mktemp("run_a")
    return criteria_1_to_5(SEED, workdir), workdir


@pytest.fixture(scope="module")
def ba_run(tmp_path_factory):
    return train_family("ba", SEED, tmp_path_factory.mktemp("run_ba"))


# --- the criteria ----------------------------------------------------------------


def test_criterion_1_solver_equivalence(first_run):
    r = first_run[0][1]
    ok = r["worst"] <= 1e-8 and r["seconds"] < 5.0
    record(1, ok, f"direct vs fixed point on 100 ER nets: max rel diff {r['worst']:.2e} (<= 1e-8), {r['seconds']:.2f} s (< 5 s)")


def test_criterion_2_des_cross_validation(first_run):
    r = first_run[0][2]
    inside = int(np.sum(np.abs(r["z"]) <= 3.0))
    (w1, se1), (w2, se2) = r["mm1"], r["tandem"]
    ok = inside >= 18 and abs(w1 - 1.0) <= 3 * se1 and abs(w2 - 2.0) <= 3 * se2
    record(
        2,
        ok,
        f"{inside}/20 nets within 3 SE (>= 18; max |z| {np.max(np.abs(r['z'])):.2f}); "
        f"M/M/1 W {w1:.4f} ± {se1:.4f} (1); tandem W {w2:.4f} ± {se2:.4f} (2)",
    )


def test_criterion_3_gradient_integrity(first_run):
    r = first_run[0][3]
    groups = r["groups"]
    ok = r["report"].max_rel_error < 1e-4 and all(e is not None and e < 1e-4 for e in groups.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in groups.items())
    record(3, ok, f"{r['report'].coordinates_checked} coordinates on a {r['n']}-node graph, max rel err {r['report'].max_rel_error:.2e} (< 1e-4): {detail}")


def test_criterion_4_permutation_invariance(first_run):
    r = first_run[0][4]
    record(4, r["max_delta"] < 1e-9, f"100 relabelings of a {r['n']}-node graph: max |dy| {r['max_delta']:.2e} (< 1e-9)")


def test_criterion_5_er_reproduction(first_run):
    r = first_run[0][5]
    rep = r["report"]
    ok = rep.rho >= 0.95 and rep.r2 >= 0.90 and r["seconds"] <= 30 * 60
    record(
        5,
        ok,
        f"ER->ER on {rep.n} held-out graphs: rho {rep.rho:.4f} (>= 0.95), R2 {rep.r2:.4f} (>= 0.90), "
        f"MSE {rep.mse:.4f}; bounds rho {rep.rho_bound:.4f} R2 {rep.r2_bound:.4f}; {r['seconds'] / 60:.1f} min (<= 30)",
    )


def test_criterion_6_generalization_direction(first_run, ba_run):
    er = first_run[0][5]["run"]
    er_on_ba = evaluate(er["result"].model, ba_run["data"]["eval"], er["result"].transform, "ER", "BA", seed=derive_seed(SEED, "boot", "ER-BA"))
    ba_res = ba_run["result"]
    ba_on_er = evaluate(ba_res.model, er["data"]["eval"], ba_res.transform, "BA", "ER", seed=derive_seed(SEED, "boot", "BA-ER"))
    text, _ = table_report([er_on_ba, ba_on_er])
    print(text)
    ok = er_on_ba.rho >= 0.90 and ba_on_er.rho < er_on_ba.rho
    record(6, ok, f"ER->BA rho {er_on_ba.rho:.4f} (>= 0.90); BA->ER rho {ba_on_er.rho:.4f} (< ER->BA); BA->ER R2 {ba_on_er.r2:.3f}")


def test_criterion_7_overfitting(first_run):
    er = first_run[0][5]["run"]
    res = er["result"]
    train_mse = batch_mse(res.model, er["data"]["train"], res.transform)
    test_mse = res.best_test_mse
    record(7, test_mse <= 2 * train_mse, f"best checkpoint (step {res.best_step}): test MSE {test_mse:.4f} <= 2 x train MSE {train_mse:.4f}")


def test_criterion_8_sndlib(first_run):
    res = first_run[0][5]["run"]["result"]
    seeds = [derive_seed(SEED, "sndlib", i) for i in range(100)]
    reports, parsed = [], []
    for name in INSTANCES:
        named = read_sndlib(bundled_instance(name))
        parsed.append(f"{name} ({named.topology.node_count} nodes, {named.topology.edge_count} links)")
        reports.append(evaluate(res.model, sndlib_eval_set([named], GenConfig.er(), seeds), res.transform, "ER", name, seed=derive_seed(SEED, "boot", name)))
    text, _ = table_report(reports)
    print(text)
    scored = {r.eval_name: r.rho for r in reports}
    ok = all(scored[k] >= 0.90 for k in ("janos-us", "janos-us-ca", "cost266"))
    detail = "; ".join(f"{r.eval_name} rho {r.rho:.4f}" + (" (report only)" if r.eval_name == "germany50" else " (>= 0.90)") for r in reports)
    record(8, ok, f"parsed {', '.join(parsed)}; {detail}")


def test_criterion_9_determinism(first_run, tmp_path_factory):
    first, dir_a = first_run
    dir_b = tmp_path_factory.mktemp("run_b")
    second = criteria_1_to_5(SEED, dir_b)
    files_a, files_b = _files(dir_a), _files(dir_b)
    same_files = files_a.keys() == files_b.keys() and all(files_a[k] == files_b[k] for k in files_a)
    same_outputs = (
        first[1]["digest"] == second[1]["digest"]
        and first[2]["digest"] == second[2]["digest"]
        and first[3]["report"].per_parameter == second[3]["report"].per_parameter
        and first[4]["digest"] == second[4]["digest"]
    )
    record(9, same_files and same_outputs, f"two seeded runs of criteria 1-5: {len(files_a)} files byte-identical {same_files}, solver/DES/gradient/invariance outputs identical {same_outputs}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
