import pytest

from idrnet.dataset import FIXTURES, SynthConfig, generate_synthetic, load_fixture
from idrnet.network import NetworkError, serialize_network
from idrnet.parser import ExprSyntaxError, check_network, parse_expr, parse_network
from idrnet.ternary import DialectError, MaxOr, MinAnd, NewXor, Ref

A, B, C, D = (Ref(x) for x in "ABCD")


@pytest.mark.parametrize(
    "text, tree",
    [
        ("A & B | C", MaxOr(MinAnd(A, B), C)),
        ("A | B & C", MaxOr(A, MinAnd(B, C))),
        ("A @ B | C & D", NewXor(A, MaxOr(B, MinAnd(C, D)))),
        ("(A @ B) & C", MinAnd(NewXor(A, B), C)),
        ("A & B & C", MinAnd(A, B, C)),
        ("(A & B) & C", MinAnd(MinAnd(A, B), C)),
        ("A @ B @ C", NewXor(A, B, C)),
        ("((A))", A),
    ],
)
def test_precedence(text, tree):
    assert parse_expr(text) == tree


@pytest.mark.parametrize(
    "text, column",
    [("A &", 4), ("A & & B", 5), ("(A | B", 7), ("A B", 3), ("A $ B", 3), ("", 1), ("A | B)", 6)],
)
def test_expression_syntax_errors(text, column):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr(text)
    assert info.value.column == column


def test_iim_rejects_xor():
    with pytest.raises(DialectError):
        parse_expr("A @ B", "iim")
    assert parse_expr("A & B", "iim") == MinAnd(A, B)


BAD = """dialect miim
entity A class P.B
entity B class P.X
entity A class P.B
idr A <- B & Z
idr A <- B
idr Q <- A
idr B <- (A |
frob
"""


def test_diagnostics_carry_positions():
    net, diags = check_network(BAD)
    assert net is None
    got = {(d.line, d.column): d.message for d in diags}
    assert "unknown entity class" in got[(3, 16)]
    assert "duplicate entity" in got[(4, 8)]
    assert "undeclared entity Z" in got[(5, 14)]
    assert "duplicate IDR" in got[(6, 5)]
    assert "undeclared entity Q" in got[(7, 5)]
    assert (8, 14) in got
    assert "unknown directive" in got[(9, 1)]
    assert all(d.severity == "error" for d in diags)
    with pytest.raises(NetworkError) as info:
        parse_network(BAD)
    assert len(info.value.diagnostics) == len(diags)


def test_dialect_errors():
    assert "missing 'dialect'" in check_network("entity A class P.B\n")[1][0].message
    _, diags = check_network("dialect iim\nentity A class P.B\nentity B class P.B\nidr A <- B @ B\n")
    assert (diags[0].line, diags[0].column) == (4, 12)


def test_self_reference_is_an_error():
    _, diags = check_network("dialect miim\nentity A class P.B\nidr A <- A | A\n")
    assert "references its own target" in diags[0].message


def test_cycles_and_isolated_are_warnings():
    text = "dialect miim\nentity A class P.B\nentity B class P.B\nentity C class P.B\nidr A <- B\nidr B <- A\n"
    net, diags = check_network(text)
    assert net is not None
    msgs = " ".join(d.message for d in diags)
    assert all(d.severity == "warning" for d in diags)
    assert "cycle" in msgs and "C" in msgs


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_round_trip(name):
    net = load_fixture(name)
    again = parse_network(serialize_network(net))
    assert again == net
    assert again.edges == net.edges


@pytest.mark.parametrize("seed", range(500))
def test_synthetic_round_trip(seed):
    dialect = "iim" if seed % 3 == 0 else "miim"
    net = generate_synthetic(SynthConfig(seed=seed, dialect=dialect))
    again = parse_network(serialize_network(net))
    assert again == net
    assert len(again.edges) == len(net.edges)
