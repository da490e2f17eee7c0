import pytest

from idrnet.cascade import run_cascade
from idrnet.dataset import (
    CONTROL_CENTER,
    FIXTURES,
    SynthConfig,
    generate_synthetic,
    load_fixture,
    load_manifest,
)
from idrnet.network import inline_links, validate
from idrnet.ternary import NewXor, render


def test_inventory(miim, iim):
    assert miim.entities == iim.entities
    counts = load_manifest("ieee14-miim").entity_counts
    assert counts == {"C.DRE": 6, "C.SE": 22, "C.SRE": 6, "CP.L": 9, "P.B": 14, "P.T": 20}
    assert len(miim.scored_entities) == 48
    assert len(miim.of_class("P")) == 34
    assert miim.sources == ["P7"]


@pytest.mark.parametrize("name", FIXTURES)
def test_fixtures_validate(name):
    net = load_fixture(name)
    assert not [d for d in validate(net) if d.severity == "error"]
    assert set(CONTROL_CENTER) <= set(net.entities)


def test_iim_fixture_has_no_xor(iim):
    def walk(e):
        yield e
        for c in getattr(e, "operands", ()):
            yield from walk(c)

    assert not any(isinstance(n, NewXor) for expr in iim.idrs.values() for n in walk(expr))


@pytest.mark.parametrize("name", FIXTURES)
def test_manifest(name):
    m = load_manifest(name)
    net = load_fixture(name)
    assert set(m.evidenced) | set(m.inferred) == set(net.idrs)
    assert not set(m.evidenced) & set(m.inferred)
    assert m.notes
    assert "kve" in m.regression


def test_derived_constant_is_marked():
    k3 = load_manifest("ieee14-miim").regression["kve"]["3"]
    assert k3["provenance"] == "derived"
    assert k3["failed_count"] == 15


def test_inlined_network_keeps_final_states(miim):
    red = inline_links(miim)
    assert len(red) == 48
    for failed in ({"P7"}, {"P2", "P4"}, {"P4", "P5", "P6", "P7", "P9"}):
        a, b = run_cascade(miim, failed), run_cascade(red, failed)
        assert {e: a.state()[e] for e in red.entities} == b.state()


def test_synthetic_is_deterministic():
    cfg = SynthConfig(seed=42, counts={"P.B": 5, "C.SE": 5, "CP.L": 2})
    assert generate_synthetic(cfg) == generate_synthetic(cfg)
    assert generate_synthetic(cfg) != generate_synthetic(SynthConfig(seed=43, counts=cfg.counts))


@pytest.mark.parametrize("seed", range(500))
def test_synthetic_validates(seed):
    dialect = "iim" if seed % 2 else "miim"
    net = generate_synthetic(SynthConfig(seed=seed, dialect=dialect, max_arity=4))
    assert not [d for d in validate(net) if d.severity == "error"]


def test_synthetic_iim_never_uses_xor():
    for seed in range(100):
        net = generate_synthetic(SynthConfig(seed=seed, dialect="iim", op_mix=(0, 0, 1)))
        assert "@" not in "".join(render(e) for e in net.idrs.values())


@pytest.mark.parametrize(
    "kwargs",
    [
        {"counts": {"P.Q": 2}},
        {"counts": {"P.B": -1, "C.SE": 3}},
        {"counts": {}},
        {"min_arity": 1},
        {"min_arity": 3, "max_arity": 2},
        {"counts": {"P.B": 2}, "max_arity": 3},
        {"op_mix": (1, -1, 0)},
        {"dialect": "boolean"},
    ],
)
def test_synthetic_config_errors(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)


def test_unknown_fixture():
    with pytest.raises(KeyError):
        load_fixture("ieee30")
