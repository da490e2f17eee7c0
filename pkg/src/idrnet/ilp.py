"""Time-expanded integer program for the K-most-vulnerable-entity problem.

Two modes:

``paper``
    The textbook constraint sets as written: the sum of initial states
    equals K, states never increase, and every operator node of an IDR gets
    a one-sided relation to its operands one step earlier (``z <= operand``
    for min-AND, ``h >= operand`` for max-OR, ``N*g <= sum`` for new_XOR).
    Nothing ties ``x[a,t]`` to the IDR value, so the system is loose; it
    is kept for export only.

``corrected``
    Binary selectors ``y`` pick the K initial failures, every operator is
    an exact two-sided gadget evaluated on the previous step, and
    ``x[a,t] = min(x[a,t-1], idr_value)``.  For a fixed ``y`` the only
    feasible trajectory is the cascade engine's.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .cascade import run_cascade
from .network import JointNetwork, natural_key
from .ternary import FULL, MAX_STATE, Expr, IdrError, MaxOr, MinAnd, NewXor, Ref, new_xor

PROVENANCE = ("C1", "C2", "C3-min", "C3-max", "C3-xor", "link", "init")
MODES = ("paper", "corrected")
_KIND_OF = {MinAnd: "z", MaxOr: "h", NewXor: "g"}
M = MAX_STATE  # big-M for every gadget: all values live in [0, 2]


class IlpError(IdrError):
    pass


@dataclass(frozen=True)
class IlpVariable:
    name: str
    kind: str  # x | z | g | h | y | b (gadget selector)
    entity: str
    t: int
    lower: int = 0
    upper: int = MAX_STATE
    node: str = ""  # operator-node path inside the entity's IDR

    @property
    def binary(self) -> bool:
        return self.kind in ("y", "b")


@dataclass(frozen=True)
class IlpConstraint:
    terms: tuple[tuple[int, str], ...]
    sense: str  # "<=" | ">=" | "="
    rhs: int
    provenance: str
    name: str = ""

    def __post_init__(self):
        if not self.terms:
            raise IlpError("a constraint needs at least one term")
        if self.provenance not in PROVENANCE:
            raise IlpError(f"unknown provenance {self.provenance!r}")
        if self.sense not in ("<=", ">=", "="):
            raise IlpError(f"unknown comparator {self.sense!r}")

    def lhs(self, values: Mapping[str, int]) -> int:
        return sum(c * values[v] for c, v in self.terms)

    def holds(self, values: Mapping[str, int]) -> bool:
        lhs = self.lhs(values)
        if self.sense == "<=":
            return lhs <= self.rhs
        if self.sense == ">=":
            return lhs >= self.rhs
        return lhs == self.rhs

    def __str__(self) -> str:
        return f"{_fmt_terms(self.terms)} {self.sense} {self.rhs}"


@dataclass(frozen=True)
class IlpModel:
    name: str
    mode: str
    K: int
    horizon: int
    entities: tuple[str, ...]
    variables: tuple[IlpVariable, ...]
    constraints: tuple[IlpConstraint, ...]
    objective: tuple[tuple[int, str], ...]
    pool: tuple[str, ...] = ()
    max_state: int = MAX_STATE
    network: JointNetwork | None = field(default=None, compare=False, repr=False)

    @property
    def filename(self) -> str:
        return f"{self.name or 'network'}-{self.mode}-K{self.K}.lp"

    def variable(self, name: str) -> IlpVariable:
        return self._by_name[name]

    @property
    def _by_name(self) -> dict[str, IlpVariable]:
        cache = self.__dict__.get("_names")
        if cache is None:
            cache = {v.name: v for v in self.variables}
            object.__setattr__(self, "_names", cache)
        return cache


def x_name(entity: str, t: int) -> str:
    return f"x_{entity}_t{t}"


def _aux_name(kind: str, entity: str, path: str, t: int) -> str:
    return f"{kind}_{entity}_{path}_t{t}"


def _merge(terms: Iterable[tuple[int, str]]) -> tuple[tuple[int, str], ...]:
    acc: dict[str, int] = {}
    for c, v in terms:
        acc[v] = acc.get(v, 0) + c
    return tuple((c, v) for v, c in acc.items() if c != 0)


class _Builder:
    def __init__(self, name: str, mode: str, K: int, horizon: int):
        self.name, self.mode, self.K, self.horizon = name, mode, K, horizon
        self.variables: list[IlpVariable] = []
        self.names: set[str] = set()
        self.constraints: list[IlpConstraint] = []
        self.counter: Counter = Counter()

    def var(self, kind: str, entity: str, t: int, name: str, node: str = "") -> str:
        if name in self.names:
            raise IlpError(f"duplicate variable {name}")
        upper = 1 if kind in ("y", "b") else MAX_STATE
        self.variables.append(IlpVariable(name, kind, entity, t, 0, upper, node))
        self.names.add(name)
        return name

    def add(self, terms, sense: str, rhs: int, tag: str) -> None:
        merged = _merge(terms)
        if not merged:
            return
        self.counter[tag] += 1
        cname = f"{tag.replace('-', '_')}_{self.counter[tag]}"
        self.constraints.append(IlpConstraint(merged, sense, rhs, tag, cname))


def _op_nodes(expr: Expr, path: str = "r"):
    """Operator nodes in pre-order with their paths ("r", "r.0", "r.0.1", ...)."""
    if isinstance(expr, Ref):
        return
    yield path, expr
    for i, o in enumerate(expr.operands):
        yield from _op_nodes(o, f"{path}.{i}")


def build_ilp(
    network: JointNetwork,
    K: int,
    mode: str = "corrected",
    protected: Iterable[str] = (),
    pool: Sequence[str] | None = None,
) -> IlpModel:
    if mode not in MODES:
        raise IlpError(f"unknown mode {mode!r}; expected paper or corrected")
    if len(network) == 0:
        raise IlpError("cannot build a model for an empty network")
    entities = tuple(sorted(network.entities, key=natural_key))
    horizon = len(entities) - 1
    protected = set(protected)
    if pool is None:
        pool = [e for e in network.default_pool() if e not in protected]
    pool = tuple(sorted(pool, key=natural_key))
    unknown = [e for e in list(pool) + list(protected) if e not in network.entities]
    if unknown:
        raise IlpError("unknown entity " + ", ".join(sorted(unknown, key=natural_key)))
    if mode == "corrected" and not 0 <= K <= len(pool):
        raise IlpError(f"K={K} does not fit the candidate pool of {len(pool)}")
    if K < 0:
        raise IlpError("K must be non-negative")

    b = _Builder(network.name, mode, K, horizon)
    for e in entities:
        for t in range(horizon + 1):
            b.var("x", e, t, x_name(e, t))

    if mode == "paper":
        _paper(b, network, entities)
    else:
        _corrected(b, network, entities, pool)

    objective = tuple((1, x_name(e, horizon)) for e in entities)
    return IlpModel(
        name=network.name,
        mode=mode,
        K=K,
        horizon=horizon,
        entities=entities,
        variables=tuple(b.variables),
        constraints=tuple(b.constraints),
        objective=objective,
        pool=pool if mode == "corrected" else (),
        network=network,
    )


def _c2(b: _Builder, entities) -> None:
    for e in entities:
        for t in range(1, b.horizon + 1):
            b.add([(1, x_name(e, t)), (-1, x_name(e, t - 1))], "<=", 0, "C2")


def _paper(b: _Builder, network: JointNetwork, entities) -> None:
    H = b.horizon
    b.add([(1, x_name(e, 0)) for e in entities], "=", b.K, "C1")
    _c2(b, entities)
    for e in entities:
        expr = network.idrs.get(e)
        if expr is None:
            continue
        nodes = list(_op_nodes(expr))
        for path, node in nodes:
            kind = _KIND_OF[type(node)]
            for t in range(H + 1):
                b.var(kind, e, t, _aux_name(kind, e, path, t), path)

        def operand(o, i, path, t):
            if isinstance(o, Ref):
                return x_name(o.name, t)
            child = f"{path}.{i}"
            return _aux_name(_KIND_OF[type(o)], e, child, t)

        for t in range(1, H + 1):
            for path, node in nodes:
                v = _aux_name(_KIND_OF[type(node)], e, path, t)
                prev = [operand(o, i, path, t - 1) for i, o in enumerate(node.operands)]
                if isinstance(node, MinAnd):
                    for u in prev:
                        b.add([(1, v), (-1, u)], "<=", 0, "C3-min")
                elif isinstance(node, MaxOr):
                    for u in prev:
                        b.add([(1, v), (-1, u)], ">=", 0, "C3-max")
                else:
                    b.add([(1, v)], ">=", 0, "C3-xor")
                    b.add([(1, v)], "<=", MAX_STATE, "C3-xor")
                    b.add([(len(prev), v)] + [(-1, u) for u in prev], "<=", 0, "C3-xor")


def _min_gadget(b: _Builder, v: str, us: list[str], e: str, path: str, t: int, tag: str) -> None:
    sel = [b.var("b", e, t, f"b_{e}_{path}.s{j}_t{t}", path) for j in range(len(us))]
    for u, s in zip(us, sel):
        b.add([(1, v), (-1, u)], "<=", 0, tag)
        b.add([(1, v), (-1, u), (-M, s)], ">=", -M, tag)
    b.add([(1, s) for s in sel], "=", 1, tag)


def _max_gadget(b: _Builder, v: str, us: list[str], e: str, path: str, t: int, tag: str) -> None:
    sel = [b.var("b", e, t, f"b_{e}_{path}.s{j}_t{t}", path) for j in range(len(us))]
    for u, s in zip(us, sel):
        b.add([(1, v), (-1, u)], ">=", 0, tag)
        b.add([(1, v), (-1, u), (M, s)], "<=", M, tag)
    b.add([(1, s) for s in sel], "=", 1, tag)


def _xor_gadget(b: _Builder, v: str, us: list[str], e: str, path: str, t: int) -> None:
    tag = "C3-xor"
    hi = b.var("h", e, t, _aux_name("h", e, path + ".max", t), path)
    lo = b.var("z", e, t, _aux_name("z", e, path + ".min", t), path)
    _max_gadget(b, hi, us, e, path + ".max", t, tag)
    _min_gadget(b, lo, us, e, path + ".min", t, tag)
    eq = b.var("b", e, t, f"b_{e}_{path}.eq_t{t}", path)
    # eq = 1 exactly when every operand agrees
    b.add([(1, hi), (-1, lo), (1, eq)], ">=", 1, tag)
    b.add([(1, hi), (-1, lo), (M, eq)], "<=", M, tag)
    # eq = 1 -> v = lo ; eq = 0 -> v = 1
    b.add([(1, v), (-1, lo), (M, eq)], "<=", M, tag)
    b.add([(-1, v), (1, lo), (M, eq)], "<=", M, tag)
    b.add([(1, v), (-M, eq)], "<=", 1, tag)
    b.add([(1, v), (M, eq)], ">=", 1, tag)


def _corrected(b: _Builder, network: JointNetwork, entities, pool) -> None:
    H = b.horizon
    in_pool = set(pool)
    ys = []
    for e in pool:
        ys.append(b.var("y", e, 0, f"y_{e}"))
    if ys:
        b.add([(1, y) for y in ys], "=", b.K, "C1")
    for e in entities:
        if e in in_pool:
            b.add([(1, x_name(e, 0)), (M, f"y_{e}")], "=", FULL, "init")
        else:
            b.add([(1, x_name(e, 0))], "=", FULL, "init")
    _c2(b, entities)

    for e in entities:
        expr = network.idrs.get(e)
        for t in range(1, H + 1):
            cur, prev = x_name(e, t), x_name(e, t - 1)
            if expr is None:
                b.add([(1, cur), (-1, prev)], ">=", 0, "link")
                continue
            root = _corrected_node(b, expr, e, "r", t)
            # x[e,t] = min(x[e,t-1], idr value)
            _min_gadget(b, cur, [prev, root], e, "upd", t, "link")


def _corrected_node(b: _Builder, node: Expr, e: str, path: str, t: int) -> str:
    """Emit the gadget for ``node`` at step ``t`` and return the variable holding its value."""
    if isinstance(node, Ref):
        return x_name(node.name, t - 1)
    us = [_corrected_node(b, o, e, f"{path}.{i}", t) for i, o in enumerate(node.operands)]
    kind = _KIND_OF[type(node)]
    v = b.var(kind, e, t, _aux_name(kind, e, path, t), path)
    if isinstance(node, MinAnd):
        _min_gadget(b, v, us, e, path, t, "C3-min")
    elif isinstance(node, MaxOr):
        _max_gadget(b, v, us, e, path, t, "C3-max")
    else:
        _xor_gadget(b, v, us, e, path, t)
    return v


# --- checking -----------------------------------------------------------------

def verify_assignment(model: IlpModel, assignment: Mapping[str, int]) -> tuple[bool, list[IlpConstraint]]:
    """Check bounds, integrality and every constraint.  Bound violations are
    reported as synthetic single-term constraints tagged with the provenance
    "init" for x at t=0 and "C2" otherwise, so callers see one uniform list."""
    missing = [v.name for v in model.variables if v.name not in assignment]
    if missing:
        raise IlpError(f"assignment is missing {len(missing)} variable(s), e.g. {missing[0]}")
    violated: list[IlpConstraint] = []
    for v in model.variables:
        val = assignment[v.name]
        if not isinstance(val, int) or val < v.lower or val > v.upper:
            tag = "init" if v.t == 0 else "C2"
            violated.append(IlpConstraint(((1, v.name),), "<=", v.upper, tag, f"bound_{v.name}"))
    violated.extend(c for c in model.constraints if not c.holds(assignment))
    return not violated, violated


def _node_value(node: Expr, states: Mapping[str, int]) -> int:
    if isinstance(node, Ref):
        return states[node.name]
    vals = [_node_value(o, states) for o in node.operands]
    return node.apply(vals)


def _fill_min(a: dict, b_prefix: str, vals: list[int]) -> None:
    j = vals.index(min(vals))
    for i in range(len(vals)):
        a[b_prefix.format(i)] = int(i == j)


def _fill_max(a: dict, b_prefix: str, vals: list[int]) -> None:
    j = vals.index(max(vals))
    for i in range(len(vals)):
        a[b_prefix.format(i)] = int(i == j)


def embed_trace(model: IlpModel, failed: Iterable[str]) -> dict[str, int]:
    """Assignment of every model variable that follows the cascade of ``failed``.

    Only meaningful for corrected-mode models; the trajectory is padded with
    its fixed point up to the horizon.
    """
    if model.mode != "corrected":
        raise IlpError("trace embedding is defined for corrected-mode models")
    net = model.network
    failed = set(failed)
    trace = run_cascade(net, failed)
    if trace.converged_at > model.horizon:
        raise IlpError(f"cascade needs {trace.converged_at} steps, beyond the horizon {model.horizon}")
    vecs = [trace.state(min(t, trace.converged_at)) for t in range(model.horizon + 1)]
    a: dict[str, int] = {}
    for e in model.pool:
        a[f"y_{e}"] = int(e in failed)
    for t, sv in enumerate(vecs):
        for e in model.entities:
            a[x_name(e, t)] = sv[e]
    for e in model.entities:
        expr = net.idrs.get(e)
        for t in range(1, model.horizon + 1):
            prev = vecs[t - 1]
            if expr is None:
                continue
            root = _embed_node(a, expr, e, "r", t, prev)
            _fill_min(a, f"b_{e}_upd.s{{}}_t{t}", [prev[e], root])
    return a


def _embed_node(a: dict, node: Expr, e: str, path: str, t: int, prev: Mapping[str, int]) -> int:
    if isinstance(node, Ref):
        return prev[node.name]
    vals = [_embed_node(a, o, e, f"{path}.{i}", t, prev) for i, o in enumerate(node.operands)]
    kind = _KIND_OF[type(node)]
    if isinstance(node, MinAnd):
        value = min(vals)
        _fill_min(a, f"b_{e}_{path}.s{{}}_t{t}", vals)
    elif isinstance(node, MaxOr):
        value = max(vals)
        _fill_max(a, f"b_{e}_{path}.s{{}}_t{t}", vals)
    else:
        value = new_xor(vals)
        a[_aux_name("h", e, path + ".max", t)] = max(vals)
        a[_aux_name("z", e, path + ".min", t)] = min(vals)
        _fill_max(a, f"b_{e}_{path}.max.s{{}}_t{t}", vals)
        _fill_min(a, f"b_{e}_{path}.min.s{{}}_t{t}", vals)
        a[f"b_{e}_{path}.eq_t{t}"] = int(max(vals) == min(vals))
    a[_aux_name(kind, e, path, t)] = value
    return value


# --- statistics and LP text -------------------------------------------------------

@dataclass(frozen=True)
class ModelStats:
    variables: dict[str, int]
    constraints: dict[str, int]

    @property
    def total_variables(self) -> int:
        return sum(self.variables.values())

    @property
    def total_constraints(self) -> int:
        return sum(self.constraints.values())

    def as_dict(self) -> dict:
        return {"variables": self.variables, "constraints": self.constraints}


def model_stats(model: IlpModel) -> ModelStats:
    kinds = Counter(v.kind for v in model.variables)
    tags = Counter(c.provenance for c in model.constraints)
    return ModelStats(
        variables={k: kinds[k] for k in ("x", "z", "g", "h", "y", "b") if kinds[k]},
        constraints={p: tags[p] for p in PROVENANCE if tags[p]},
    )


def _fmt_terms(terms: Sequence[tuple[int, str]]) -> str:
    out = []
    for i, (c, v) in enumerate(terms):
        sign = "-" if c < 0 else ("+" if i else "")
        mag = abs(c)
        body = v if mag == 1 else f"{mag} {v}"
        out.append(f"{sign} {body}" if sign else body)
    return " ".join(out)


def _wrap(prefix: str, terms: Sequence[tuple[int, str]], tail: str = "", per_line: int = 8) -> list[str]:
    lines = []
    for i in range(0, len(terms), per_line):
        chunk = terms[i:i + per_line]
        text = _fmt_terms(chunk)
        if i and not text.startswith(("-", "+")):
            text = "+ " + text
        lines.append(("   " if i else prefix) + text)
    lines[-1] += tail
    return lines


def emit_lp(model: IlpModel) -> str:
    """CPLEX-style LP text with a provenance comment before each constraint group."""
    out = [
        f"\\ model: {model.name or 'network'} mode={model.mode} K={model.K} horizon={model.horizon}",
        f"\\ variables: {len(model.variables)} constraints: {len(model.constraints)}",
        "Minimize",
    ]
    out += _wrap(" obj: ", model.objective)
    out.append("Subject To")
    last = None
    for c in model.constraints:
        if c.provenance != last:
            out.append(f"\\ provenance: {c.provenance}")
            last = c.provenance
        out += _wrap(f" {c.name}: ", c.terms, f" {c.sense} {c.rhs}")
    out.append("Bounds")
    ints = [v for v in model.variables if not v.binary]
    for v in ints:
        out.append(f" {v.lower} <= {v.name} <= {v.upper}")
    if ints:
        out.append("General")
        out += [f" {v.name}" for v in ints]
    bins = [v for v in model.variables if v.binary]
    if bins:
        out.append("Binary")
        out += [f" {v.name}" for v in bins]
    out.append("End")
    return "\n".join(out) + "\n"


def trajectories_for(model: IlpModel, selection: Iterable[str]) -> list[dict[str, int]]:
    """Every x-trajectory feasible for a fixed selector choice, by exhaustive
    search one step at a time (each step's constraints only reach back one
    step).  Intended for tiny models."""
    if model.mode != "corrected":
        raise IlpError("selector enumeration needs a corrected-mode model")
    chosen = set(selection)
    fixed = {f"y_{e}": int(e in chosen) for e in model.pool}
    by_step: dict[int, list[IlpConstraint]] = {}
    var_t = {v.name: v for v in model.variables}
    rank = {v.name: i for i, v in enumerate(model.variables)}

    def step_of(c: IlpConstraint) -> int:
        return max((var_t[v].t for _, v in c.terms if var_t[v].kind != "y"), default=0)

    for c in model.constraints:
        by_step.setdefault(step_of(c), []).append(c)

    def owner_solutions(names: list[str], local: list[IlpConstraint], known: dict[str, int]):
        # backtrack in creation order, checking each constraint once its last variable is set
        names = sorted(names, key=rank.__getitem__)
        pos = {n: i for i, n in enumerate(names)}
        due: list[list[IlpConstraint]] = [[] for _ in names]
        for c in local:
            due[max(pos[v] for _, v in c.terms if v in pos)].append(c)
        trial = dict(known)
        found = set()

        def go(i: int) -> None:
            if i == len(names):
                found.add(tuple((n, trial[n]) for n in names if var_t[n].kind == "x"))
                return
            v = var_t[names[i]]
            for val in range(v.lower, v.upper + 1):
                trial[v.name] = val
                if all(c.holds(trial) for c in due[i]):
                    go(i + 1)
            del trial[v.name]

        go(0)
        return [dict(s) for s in found]

    def solve(t: int, known: dict[str, int]) -> list[dict[str, int]]:
        cons = by_step.get(t, [])
        free = {v for c in cons for _, v in c.terms if v not in known}
        # group free variables by owning entity; constraints never mix two owners' aux
        groups: dict[str, list[str]] = {}
        for v in free:
            groups.setdefault(var_t[v].entity, []).append(v)
        per_owner: list[list[dict[str, int]]] = []
        for owner, names in groups.items():
            mine = set(names)
            local = [c for c in cons if any(v in mine for _, v in c.terms)]
            per_owner.append(owner_solutions(names, local, known))
        closed = [c for c in cons if all(v in known for _, v in c.terms)]
        if not all(c.holds(known) for c in closed):
            return []
        results = []
        for parts in itertools.product(*per_owner):
            merged = dict(known)
            for p in parts:
                merged.update(p)
            results.append(merged)
        return results

    frontier = [dict(fixed)]
    for t in range(model.horizon + 1):
        nxt = []
        for known in frontier:
            nxt.extend(solve(t, known))
        # x values must all be known after step t
        frontier = [k for k in nxt if all(x_name(e, t) in k for e in model.entities)]
    return [{k: v for k, v in f.items() if k.startswith("x_")} for f in frontier]
