"""Joint power/communication network: entity inventory plus the IDR set."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import networkx as nx

from .ternary import Dialect, Expr, NewXor, Ref, compile_expr, iter_nodes, render

ENTITY_ID = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")

SUBCLASSES = {
    "P": ("B", "T", "Batt"),
    "C": ("SE", "SRE", "DRE"),
    "CP": ("L", "R", "U"),
}
# classes whose members only fail through their endpoints; excluded from the
# default candidate pool and from damage counts
LINK_CLASSES = frozenset({"P.T", "CP.L"})


@dataclass(frozen=True, order=True)
class EntityClass:
    layer: str
    subclass: str

    def __post_init__(self):
        if self.subclass not in SUBCLASSES.get(self.layer, ()):
            raise ValueError(f"invalid entity class {self.layer}.{self.subclass}")

    @classmethod
    def parse(cls, text: str) -> "EntityClass":
        layer, sep, sub = text.partition(".")
        if not sep:
            raise ValueError(f"invalid entity class {text!r}; expected LAYER.SUBCLASS")
        return cls(layer, sub)

    @property
    def is_link(self) -> bool:
        return str(self) in LINK_CLASSES

    def __str__(self) -> str:
        return f"{self.layer}.{self.subclass}"


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    line: int
    column: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.column}: {self.severity}: {self.message}"


class NetworkError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        errors = [d for d in diagnostics if d.severity == "error"]
        super().__init__("; ".join(map(str, errors or diagnostics)))


def natural_key(entity_id: str):
    return [int(p) if p.isdigit() else p for p in re.split(r"(\d+)", entity_id)]


@dataclass(frozen=True)
class _Compiled:
    order: tuple[str, ...]
    index: dict[str, int]
    evaluators: tuple  # per entity: callable or None for sources
    dependents: tuple[tuple[int, ...], ...]
    scored: tuple[int, ...]


@dataclass(frozen=True)
class JointNetwork:
    dialect: Dialect
    entities: Mapping[str, EntityClass]
    idrs: Mapping[str, Expr]
    name: str = field(default="", compare=False)
    # (kind, entity) -> source line, filled in by the parser
    locations: Mapping[tuple[str, str], int] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "dialect", Dialect(self.dialect))
        object.__setattr__(self, "entities", dict(self.entities))
        object.__setattr__(self, "idrs", dict(self.idrs))

    def __len__(self) -> int:
        return len(self.entities)

    def __contains__(self, entity: str) -> bool:
        return entity in self.entities

    @cached_property
    def edges(self) -> frozenset[tuple[str, str]]:
        """Dependency edges u -> v, one per (referenced entity, target) pair."""
        return frozenset((u, v) for v, expr in self.idrs.items() for u in expr.entities())

    @property
    def sources(self) -> list[str]:
        return [e for e in self.entities if e not in self.idrs]

    @cached_property
    def scored_entities(self) -> tuple[str, ...]:
        return tuple(e for e, c in self.entities.items() if not c.is_link)

    def default_pool(self) -> list[str]:
        return list(self.scored_entities)

    def of_class(self, cls: str) -> list[str]:
        return [e for e, c in self.entities.items() if str(c) == cls or c.layer == cls]

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.entities)
        g.add_edges_from(self.edges)
        return g

    @cached_property
    def compiled(self) -> _Compiled:
        order = tuple(self.entities)
        index = {e: i for i, e in enumerate(order)}
        evaluators = tuple(
            compile_expr(self.idrs[e], index) if e in self.idrs else None for e in order
        )
        deps: list[set[int]] = [set() for _ in order]
        for u, v in self.edges:
            deps[index[u]].add(index[v])
        scored = tuple(index[e] for e in self.scored_entities)
        return _Compiled(order, index, evaluators, tuple(tuple(sorted(d)) for d in deps), scored)

    def with_idrs(self, idrs: Mapping[str, Expr], name: str | None = None) -> "JointNetwork":
        return JointNetwork(self.dialect, self.entities, idrs, self.name if name is None else name)


def validate(network: JointNetwork) -> list[Diagnostic]:
    """Re-check the structural invariants; errors first, then warnings."""
    loc = network.locations
    errors: list[Diagnostic] = []
    warnings: list[Diagnostic] = []

    for e in network.entities:
        if not ENTITY_ID.match(e):
            errors.append(Diagnostic("error", loc.get(("entity", e), 0), 1, f"invalid entity id {e!r}"))

    for target, expr in network.idrs.items():
        line = loc.get(("idr", target), 0)
        if target not in network.entities:
            errors.append(Diagnostic("error", line, 1, f"IDR for undeclared entity {target}"))
        for ref in sorted(expr.entities(), key=natural_key):
            if ref not in network.entities:
                errors.append(Diagnostic("error", line, 1, f"undeclared entity {ref} in IDR for {target}"))
        if target in expr.entities():
            errors.append(Diagnostic("error", line, 1, f"IDR for {target} references its own target"))
        if network.dialect is Dialect.IIM and any(isinstance(n, NewXor) for n in iter_nodes(expr)):
            errors.append(Diagnostic("error", line, 1, f"IDR for {target} uses '@' under the iim dialect"))

    referenced = {u for u, _ in network.edges}
    for e in network.entities:
        if e not in network.idrs and e not in referenced:
            warnings.append(Diagnostic("warning", loc.get(("entity", e), 0), 1, f"isolated entity {e}"))

    if not errors:
        for comp in nx.strongly_connected_components(network.graph()):
            if len(comp) > 1:
                members = sorted(comp, key=natural_key)
                line = min(loc.get(("idr", m), 0) for m in members)
                warnings.append(Diagnostic("warning", line, 1, "dependency cycle {" + ",".join(members) + "}"))
        warnings.sort(key=lambda d: (d.line, d.message))
    return errors + warnings


def serialize_network(network: JointNetwork) -> str:
    lines = [f"dialect {network.dialect.value}", ""]
    for e in sorted(network.entities, key=natural_key):
        lines.append(f"entity {e} class {network.entities[e]}")
    lines.append("")
    for e in sorted(network.idrs, key=natural_key):
        lines.append(f"idr {e} <- {render(network.idrs[e])}")
    return "\n".join(lines).rstrip("\n") + "\n"


def build_network(
    dialect: Dialect | str,
    entities: Iterable[tuple[str, str | EntityClass]],
    idrs: Mapping[str, Expr] | None = None,
    name: str = "",
) -> JointNetwork:
    """Construct and validate a network in code; raises NetworkError on errors."""
    ents = {}
    for e, cls in entities:
        if e in ents:
            raise NetworkError([Diagnostic("error", 0, 0, f"duplicate entity {e}")])
        ents[e] = cls if isinstance(cls, EntityClass) else EntityClass.parse(cls)
    net = JointNetwork(Dialect(dialect), ents, dict(idrs or {}), name)
    diags = validate(net)
    if any(d.severity == "error" for d in diags):
        raise NetworkError(diags)
    return net


def _substitute(expr: Expr, defs: Mapping[str, Expr]) -> Expr:
    if isinstance(expr, Ref):
        return defs.get(expr.name, expr)
    return type(expr)(*(_substitute(o, defs) for o in expr.operands))


def inline_links(network: JointNetwork, name: str | None = None) -> JointNetwork:
    """Drop link entities (P.T, CP.L), substituting each link's IDR wherever
    it is referenced.  Final cascade states of the remaining entities are
    unchanged; only the step at which they are reached can move earlier.
    Links without an IDR are kept because there is nothing to substitute."""
    links = {e for e, c in network.entities.items() if c.is_link and e in network.idrs}
    defs = {e: network.idrs[e] for e in links}
    # resolve links that reference other links; cycles among links are left alone
    for _ in range(len(defs)):
        nxt = {e: _substitute(x, {k: v for k, v in defs.items() if k != e}) for e, x in defs.items()}
        if nxt == defs:
            break
        defs = nxt
    if any(links & x.entities() for x in defs.values()):
        raise ValueError("cyclic dependency among link entities cannot be inlined")
    entities = {e: c for e, c in network.entities.items() if e not in links}
    idrs = {e: _substitute(x, defs) for e, x in network.idrs.items() if e not in links}
    return JointNetwork(network.dialect, entities, idrs, name if name is not None else f"{network.name}-reduced")
