import dataclasses
import itertools
import random

import pytest

from idrnet.cascade import run_cascade
from idrnet.dataset import CONTROL_CENTER, SynthConfig, generate_synthetic, load_manifest
from idrnet.ilp import (
    IlpConstraint,
    IlpError,
    build_ilp,
    embed_trace,
    emit_lp,
    model_stats,
    trajectories_for,
    verify_assignment,
    x_name,
)
from idrnet.network import build_network, inline_links
from idrnet.parser import parse_expr, parse_network


def small(seed, n=5):
    rng = random.Random(seed)
    p = rng.randint(1, n - 1)
    return generate_synthetic(SynthConfig(seed=seed, counts={"P.B": p, "C.SE": n - p}, max_arity=2))


def test_single_entity():
    net = build_network("miim", [("A", "P.B")], {}, name="one")
    m = build_ilp(net, 1)
    assert m.horizon == 0
    assert [v.name for v in m.variables] == ["x_A_t0", "y_A"]
    assert [str(c) for c in m.constraints] == ["y_A = 1", "x_A_t0 + 2 y_A = 2"]
    assert m.filename == "one-corrected-K1.lp"
    p = build_ilp(net, 1, mode="paper")
    assert [str(c) for c in p.constraints] == ["x_A_t0 = 1"]


CHAIN = parse_network(
    "dialect miim\nentity A class P.B\nentity B class P.B\nentity C class P.B\nidr A <- B & C\n", name="chain"
)


def test_chain_counts():
    m = build_ilp(CHAIN, 1)
    s = model_stats(m)
    # 3 entities x 3 steps; one AND node at t=1,2
    assert s.variables == {"x": 9, "z": 2, "y": 3, "b": 8}
    assert s.constraints == {"C1": 1, "C2": 6, "C3-min": 10, "link": 14, "init": 3}


def test_chain_selecting_c_forces_a_down():
    m = build_ilp(CHAIN, 1)
    trajs = trajectories_for(m, {"C"})
    assert len(trajs) == 1
    assert trajs[0][x_name("A", 1)] == 0
    assert trajs[0][x_name("A", 2)] == 0
    assert trajs[0][x_name("B", 2)] == 2


def test_paper_mode_example_shape():
    net = build_network(
        "miim",
        [(e, "P.B") for e in ("a", "b", "c", "m", "n")],
        {"a": parse_expr("(b @ c) & (m | n)")},
        name="ex",
    )
    m = build_ilp(net, 2, mode="paper")
    assert m.horizon == 4
    got = [str(c) for c in m.constraints if c.provenance.startswith("C3") and m.variable(c.terms[0][1]).t == 1]
    expected = [
        "z_a_r_t1 - g_a_r.0_t0 <= 0",
        "z_a_r_t1 - h_a_r.1_t0 <= 0",
        "g_a_r.0_t1 >= 0",
        "g_a_r.0_t1 <= 2",
        "2 g_a_r.0_t1 - x_b_t0 - x_c_t0 <= 0",
        "h_a_r.1_t1 - x_m_t0 >= 0",
        "h_a_r.1_t1 - x_n_t0 >= 0",
    ]
    assert got == expected
    c1 = [c for c in m.constraints if c.provenance == "C1"]
    assert [str(c) for c in c1] == ["x_a_t0 + x_b_t0 + x_c_t0 + x_m_t0 + x_n_t0 = 2"]
    c2 = [str(c) for c in m.constraints if c.provenance == "C2"]
    assert len(c2) == 5 * 4
    assert "x_a_t3 - x_a_t2 <= 0" in c2
    s = model_stats(m)
    assert s.constraints["C3-min"] == 2 * 4
    assert s.constraints["C3-max"] == 2 * 4
    assert s.constraints["C3-xor"] == 3 * 4
    assert s.variables == {"x": 25, "z": 5, "g": 5, "h": 5}


def test_paper_mode_is_loose():
    # nothing ties x to the aux variables, so x[A,1] is free once x[A,0] allows it
    m = build_ilp(CHAIN, 2, mode="paper")
    base = {v.name: 0 for v in m.variables}
    base[x_name("A", 0)] = base[x_name("B", 0)] = 1
    for value in (0, 1):
        ok, _ = verify_assignment(m, dict(base, **{x_name("A", 1): value}))
        assert ok


def test_verify_reports_violations():
    m = build_ilp(CHAIN, 1)
    a = embed_trace(m, {"C"})
    assert verify_assignment(m, a) == (True, [])
    bad = dict(a, **{x_name("A", 2): 2})
    ok, viol = verify_assignment(m, bad)
    assert not ok
    assert {c.provenance for c in viol} == {"C2", "link"}
    ok, viol = verify_assignment(m, dict(a, **{x_name("B", 1): 3}))
    assert viol[0].name == "bound_x_B_t1"
    with pytest.raises(IlpError):
        verify_assignment(m, {})


def test_errors():
    with pytest.raises(IlpError):
        build_ilp(CHAIN, 1, mode="fancy")
    with pytest.raises(IlpError):
        build_ilp(CHAIN, 4)
    with pytest.raises(IlpError):
        build_ilp(CHAIN, 1, protected={"Z"})
    with pytest.raises(IlpError):
        embed_trace(build_ilp(CHAIN, 1, mode="paper"), {"A"})
    with pytest.raises(IlpError):
        IlpConstraint((), "<=", 0, "C1")
    with pytest.raises(IlpError):
        IlpConstraint(((1, "x"),), "<=", 0, "C9")


@pytest.mark.parametrize("seed", range(50))
def test_embedding_is_feasible(seed):
    rng = random.Random(seed)
    net = small(seed, n=rng.randint(3, 7))
    K = rng.randint(1, 2)
    m = build_ilp(net, K)
    failed = rng.sample(list(m.pool), K)
    ok, viol = verify_assignment(m, embed_trace(m, failed))
    assert ok, [str(c) for c in viol[:3]]


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("K", [1, 2])
def test_selectors_determine_trajectory(seed, K):
    net = small(seed, n=3 + seed % 2)
    m = build_ilp(net, K)
    for sel in itertools.combinations(m.pool, K):
        trajs = trajectories_for(m, sel)
        tr = run_cascade(net, sel)
        assert len(trajs) == 1
        for t in range(m.horizon + 1):
            sv = tr.state(min(t, tr.converged_at))
            assert all(trajs[0][x_name(x, t)] == sv[x] for x in m.entities)


def test_enumeration_detects_looseness():
    m = build_ilp(CHAIN, 1)
    loose = dataclasses.replace(m, constraints=tuple(c for c in m.constraints if c.provenance != "link"))
    assert len(trajectories_for(m, {"B"})) == 1
    assert len(trajectories_for(loose, {"B"})) > 1


def test_emission_is_deterministic_and_counted():
    net = small(7, n=6)
    a, b = build_ilp(net, 2), build_ilp(net, 2)
    text = emit_lp(a)
    assert text == emit_lp(b)
    s = model_stats(a)
    body = text.split("Subject To")[1].split("Bounds")[0]
    names = [ln.split(":")[0].strip() for ln in body.splitlines() if ln.startswith(" ") and ":" in ln]
    assert len(names) == s.total_constraints
    for tag, n in s.constraints.items():
        assert sum(1 for x in names if x.startswith(tag.replace("-", "_") + "_")) == n
    bounds = text.split("Bounds")[1].split("General")[0].strip().splitlines()
    binaries = text.split("Binary")[1].split("End")[0].strip().splitlines()
    assert len(bounds) + len(binaries) == s.total_variables
    runs = [k for k, _ in itertools.groupby(c.provenance for c in a.constraints)]
    assert text.count("\\ provenance:") == len(runs)


def test_long_rows_are_wrapped():
    names = [f"P{i}" for i in range(1, 21)]
    net = build_network("miim", [(n, "P.B") for n in names], {}, name="wide")
    text = emit_lp(build_ilp(net, 1))
    assert all(len(line) < 200 for line in text.splitlines())


def test_ieee14_counts(miim):
    red = inline_links(miim)
    reg = load_manifest("ieee14-miim").regression["ilp"]
    for mode in ("paper", "corrected"):
        m = build_ilp(red, 2, mode=mode, protected=CONTROL_CENTER)
        s = model_stats(m)
        assert s.variables["x"] == 48 * 48
        assert s.as_dict() == {"variables": reg[mode]["variables"], "constraints": reg[mode]["constraints"]}
    m = build_ilp(red, 1, protected=CONTROL_CENTER)
    ok, _ = verify_assignment(m, embed_trace(m, {"P7"}))
    assert ok


highspy = pytest.importorskip("highspy")


def _solve(text, tmp_path):
    path = tmp_path / "m.lp"
    path.write_text(text)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    assert h.readModel(str(path)) == highspy.HighsStatus.kOk
    h.run()
    return h


@pytest.mark.parametrize("seed", range(8))
def test_highs_agrees_with_brute_force(seed, tmp_path):
    net = small(seed, n=4)
    K = 1 + seed % 2
    m = build_ilp(net, K)
    h = _solve(emit_lp(m), tmp_path)
    assert h.getModelStatus() == highspy.HighsModelStatus.kOptimal
    brute = min(
        sum(run_cascade(net, s).final) for s in itertools.combinations(m.pool, K)
    )
    assert round(h.getInfo().objective_function_value) == brute


def test_highs_reads_paper_mode(tmp_path):
    h = _solve(emit_lp(build_ilp(CHAIN, 1, mode="paper")), tmp_path)
    assert h.getNumRow() == len(build_ilp(CHAIN, 1, mode="paper").constraints)
