"""K-most-vulnerable-entity search.

``enumerate_kve`` is the brute-force oracle.  ``search_kve`` returns the
same answer with a depth-first branch and bound: each node carries the
fixed point reached by its partial set, children extend it incrementally,
and a subtree is cut when an optimistic completion bound falls strictly
below the incumbent (ties must survive because every optimum is reported).

The bound is a kill-cost lower bound computed by fixpoint: an entity can
only fail if all operands of an OR/XOR node fail, or any operand of an
AND node fails, so the number of extra picks needed to fail it is at
least the max (resp. min) of its operands' costs.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .cascade import (
    CascadeTrace,
    DamageMetrics,
    UnknownEntityError,
    _propagate,
    final_vector,
    run_cascade,
    step_cap,
)
from .network import JointNetwork, natural_key, serialize_network
from .ternary import FAILED, FULL, REDUCED, IdrError, compile_expr


class SearchError(IdrError):
    pass


def _set_key(names: Sequence[str]):
    return [natural_key(n) for n in names]


@dataclass(frozen=True)
class SearchProblem:
    network: JointNetwork
    K: int
    protected: frozenset[str] = frozenset()
    candidate_pool: tuple[str, ...] | None = None
    # frozen state vector the search starts from (see recompute_after_failure)
    baseline: Mapping[str, int] | None = field(default=None, compare=False)

    def __post_init__(self):
        net = self.network
        protected = frozenset(self.protected)
        object.__setattr__(self, "protected", protected)
        named = set(protected) | set(self.candidate_pool or ())
        if self.baseline:
            named |= set(self.baseline)
        unknown = [e for e in named if e not in net.entities]
        if unknown:
            raise UnknownEntityError(unknown)
        if self.candidate_pool is None:
            pool = [e for e in net.default_pool() if e not in protected]
            if self.baseline:
                pool = [e for e in pool if self.baseline.get(e, FULL) != FAILED]
        else:
            pool = list(dict.fromkeys(self.candidate_pool))
            clash = protected.intersection(pool)
            if clash:
                raise SearchError("candidate pool overlaps the protected set: " + ", ".join(sorted(clash, key=natural_key)))
        object.__setattr__(self, "candidate_pool", tuple(sorted(pool, key=natural_key)))
        if not self.candidate_pool:
            raise SearchError("empty candidate pool")
        if self.K < 1:
            raise SearchError(f"K must be positive, got {self.K}")
        if self.K > len(self.candidate_pool):
            raise SearchError(f"K={self.K} exceeds the candidate pool size {len(self.candidate_pool)}")

    @cached_property
    def base_vector(self) -> tuple[int, ...]:
        """The baseline pushed to its own fixed point (all FULL without one)."""
        comp = self.network.compiled
        base = self.baseline or {}
        start = [base.get(e, FULL) for e in comp.order]
        if not self.baseline:
            return tuple(start)
        vec, _ = _propagate(comp, start, range(len(start)), False, step_cap(self.network))
        return tuple(vec)

    def metrics(self, vector: Sequence[int]) -> DamageMetrics:
        """Damage relative to the baseline: newly failed, newly degraded, state drop."""
        base = self.base_vector
        failed = degraded = deficit = 0
        for i in self.network.compiled.scored:
            v, b = vector[i], base[i]
            if v < b:
                deficit += b - v
                if v == FAILED:
                    failed += 1
                elif v == REDUCED:
                    degraded += 1
        return DamageMetrics(failed, degraded, deficit)


@dataclass(frozen=True)
class KveResult:
    K: int
    optimal_damage: DamageMetrics
    optimal_sets: tuple[tuple[str, ...], ...]
    evaluated_count: int
    traces: Mapping[tuple[str, ...], CascadeTrace] = field(default_factory=dict, compare=False, repr=False)
    network_name: str = ""
    protected: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "network": self.network_name,
            "K": self.K,
            "protected": list(self.protected),
            "optimal_damage": self.optimal_damage.as_dict(),
            "optimal_sets": [list(s) for s in self.optimal_sets],
            "evaluated_count": self.evaluated_count,
            "traces": {",".join(s): tr.to_json() for s, tr in self.traces.items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _result(p: SearchProblem, best: DamageMetrics, sets, evaluated: int, with_traces: bool) -> KveResult:
    ordered = tuple(sorted((tuple(sorted(s, key=natural_key)) for s in sets), key=_set_key))
    traces = {}
    if with_traces:
        traces = {s: run_cascade(p.network, s, p.baseline) for s in ordered}
    return KveResult(
        K=p.K,
        optimal_damage=best,
        optimal_sets=ordered,
        evaluated_count=evaluated,
        traces=traces,
        network_name=p.network.name,
        protected=tuple(sorted(p.protected, key=natural_key)),
    )


def enumerate_kve(p: SearchProblem, with_traces: bool = True) -> KveResult:
    """Evaluate every K-subset of the pool and keep all maximisers."""
    comp = p.network.compiled
    base = p.base_vector
    best_key, best, sets, evaluated = None, None, [], 0
    for combo in itertools.combinations(p.candidate_pool, p.K):
        vec = final_vector(p.network, [comp.index[e] for e in combo], base)
        m = p.metrics(vec)
        evaluated += 1
        k = m.key()
        if best_key is None or k > best_key:
            best_key, best, sets = k, m, [combo]
        elif k == best_key:
            sets.append(combo)
    return _result(p, best, sets, evaluated, with_traces)


# --- branch and bound ---------------------------------------------------------

_KILL = {"MinAnd": "min", "MaxOr": "max", "NewXor": "max"}
# an XOR output drops below full as soon as any operand does
_DEGRADE = {"MinAnd": "min", "MaxOr": "max", "NewXor": "min"}


class _Bounder:
    """Optimistic completion bound for a node of the subset tree."""

    def __init__(self, p: SearchProblem):
        net = p.network
        comp = net.compiled
        self.comp = comp
        self.kill = [compile_expr(net.idrs[e], comp.index, _KILL) if e in net.idrs else None for e in comp.order]
        self.degrade = [compile_expr(net.idrs[e], comp.index, _DEGRADE) if e in net.idrs else None for e in comp.order]
        self.base = p.base_vector
        self.scored = comp.scored
        self.with_idr = [i for i, f in enumerate(self.kill) if f is not None]

    def _costs(self, funcs, seed: list[int], cap: int) -> list[int]:
        cost = seed
        dependents = self.comp.dependents
        todo = list(self.with_idr)
        queued = set(todo)
        while todo:
            i = todo.pop()
            queued.discard(i)
            c = funcs[i](cost)
            if c < cost[i]:
                cost[i] = c
                for j in dependents[i]:
                    if j not in queued and funcs[j] is not None:
                        queued.add(j)
                        todo.append(j)
        return cost

    def bound(self, vec: Sequence[int], remaining: Iterable[int], r: int) -> tuple[int, int]:
        """Upper bound on (failed_count, state_deficit) over all completions
        that add ``r`` more entities drawn from ``remaining``."""
        cap = r + 1
        rem = set(remaining)
        kill = [0 if v == FAILED else (1 if i in rem else cap) for i, v in enumerate(vec)]
        kill = self._costs(self.kill, kill, cap)
        deg = [0 if v <= REDUCED else (1 if i in rem else cap) for i, v in enumerate(vec)]
        deg = self._costs(self.degrade, deg, cap)
        failed = deficit = 0
        base = self.base
        for i in self.scored:
            b = base[i]
            if kill[i] <= r:
                if b > FAILED:
                    failed += 1
                    deficit += b
            elif deg[i] <= r and b == FULL:
                deficit += 1
            # a state-1 entity that cannot reach 0 adds no deficit
        return failed, deficit


@dataclass
class _Incumbent:
    key: tuple[int, int] | None = None
    metrics: DamageMetrics | None = None
    sets: list = field(default_factory=list)


class _Search:
    # bound only subtrees with more leaves than this; below it the exact
    # incremental cascades are as cheap as the bound itself
    MIN_LEAVES = 6

    def __init__(self, p: SearchProblem, shared=None):
        self.p = p
        self.net = p.network
        self.comp = p.network.compiled
        self.pool = [self.comp.index[e] for e in p.candidate_pool]
        self.bounder = _Bounder(p)
        self.inc = _Incumbent()
        self.evaluated = 0
        self.shared = shared  # optional cross-process best-so-far cell

    def _best_key(self):
        k = self.inc.key
        if self.shared is not None:
            with self.shared.get_lock():
                g = (self.shared[0], self.shared[1])
            if g[0] >= 0 and (k is None or g > k):
                return g
        return k

    def _offer(self, chosen: list[int], vec) -> None:
        m = self.p.metrics(vec)
        self.evaluated += 1
        k = m.key()
        inc = self.inc
        if inc.key is None or k > inc.key:
            inc.key, inc.metrics, inc.sets = k, m, [tuple(chosen)]
            if self.shared is not None:
                with self.shared.get_lock():
                    if k > (self.shared[0], self.shared[1]):
                        self.shared[0], self.shared[1] = k
        elif k == inc.key:
            inc.sets.append(tuple(chosen))

    def _extend(self, vec, i: int):
        return final_vector(self.net, [i], vec)

    def run(self, first_positions: Iterable[int] | None = None) -> None:
        K, pool = self.p.K, self.pool
        base = list(self.p.base_vector)
        firsts = range(len(pool) - K + 1) if first_positions is None else first_positions
        for pos in firsts:
            i = pool[pos]
            self._dfs([i], self._extend(base, i), pos + 1)

    def _dfs(self, chosen: list[int], vec, start: int) -> None:
        K, pool = self.p.K, self.pool
        r = K - len(chosen)
        if r == 0:
            self._offer(chosen, vec)
            return
        rest = pool[start:]
        if math.comb(len(rest), r) > self.MIN_LEAVES:
            best = self._best_key()
            if best is not None and self.bounder.bound(vec, rest, r) < best:
                return
        for pos in range(start, len(pool) - r + 1):
            i = pool[pos]
            if vec[i] == FAILED:
                # already failed by the partial set; still a distinct K-set
                nxt = vec
            else:
                nxt = self._extend(vec, i)
            self._dfs(chosen + [i], nxt, pos + 1)


def _names(comp, sets) -> list[tuple[str, ...]]:
    return [tuple(comp.order[i] for i in s) for s in sets]


# worker-side state for parallel search
_WORKER: dict = {}


def _worker_init(text: str, name: str, K: int, protected, pool, baseline, shared) -> None:
    from .parser import parse_network

    net = parse_network(text, name=name)
    p = SearchProblem(net, K, frozenset(protected), tuple(pool), baseline)
    _WORKER["problem"] = p
    _WORKER["shared"] = shared


def _worker_run(positions: list[int]):
    s = _Search(_WORKER["problem"], _WORKER["shared"])
    s.run(positions)
    return s.inc.key, s.inc.metrics, _names(s.comp, s.inc.sets), s.evaluated


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("KVE_JOBS", "1")))
    except ValueError:
        return 1


def search_kve(p: SearchProblem, jobs: int | None = None, with_traces: bool = True) -> KveResult:
    """Exact K-most-vulnerable sets via branch and bound; same contract as enumerate_kve."""
    jobs = default_jobs() if jobs is None else max(1, jobs)
    firsts = list(range(len(p.candidate_pool) - p.K + 1))
    if jobs == 1 or len(firsts) < 2:
        s = _Search(p)
        s.run()
        return _result(p, s.inc.metrics, _names(s.comp, s.inc.sets), s.evaluated, with_traces)

    import multiprocessing as mp

    ctx = mp.get_context("spawn")
    shared = ctx.Array("i", [-1, -1])
    # interleave first positions so the expensive early subtrees are spread out
    chunks = [firsts[j::jobs] for j in range(jobs)]
    init = (
        serialize_network(p.network), p.network.name, p.K, sorted(p.protected),
        p.candidate_pool, dict(p.baseline) if p.baseline else None, shared,
    )
    with ProcessPoolExecutor(jobs, mp_context=ctx, initializer=_worker_init, initargs=init) as ex:
        parts = list(ex.map(_worker_run, chunks))
    best_key = max(k for k, *_ in parts if k is not None)
    sets, evaluated, best = [], 0, None
    for k, m, found, n in parts:
        evaluated += n
        if k == best_key:
            best = m
            sets.extend(found)
    return _result(p, best, sets, evaluated, with_traces)


def decision_kve(p: SearchProblem, S: int) -> tuple[bool, tuple[str, ...] | None]:
    """Is there a K-set failing at least ``S`` entities?  Stops at the first witness."""
    if S < 1:
        raise SearchError(f"S must be positive, got {S}")
    search = _Search(p)
    pool, K = search.pool, p.K
    bounder = search.bounder

    def dfs(chosen, vec, start):
        r = K - len(chosen)
        if r == 0:
            return tuple(chosen) if p.metrics(vec).failed_count >= S else None
        rest = pool[start:]
        if bounder.bound(vec, rest, r)[0] < S:
            return None
        for pos in range(start, len(pool) - r + 1):
            i = pool[pos]
            found = dfs(chosen + [i], vec if vec[i] == FAILED else search._extend(vec, i), pos + 1)
            if found:
                return found
        return None

    witness = dfs([], list(p.base_vector), 0)
    if witness is None:
        return False, None
    return True, tuple(sorted((search.comp.order[i] for i in witness), key=natural_key))


@dataclass(frozen=True)
class ContingencyRow:
    K: int
    damage: DamageMetrics
    example_set: tuple[str, ...]
    optimal_count: int

    def as_csv_row(self) -> list:
        return [self.K, self.damage.failed_count, self.damage.state_deficit, " ".join(self.example_set)]


CSV_HEADER = ("K", "failed_count", "state_deficit", "example_set")


def contingency_list(
    network: JointNetwork,
    k_max: int,
    protected: Iterable[str] = (),
    pool: Sequence[str] | None = None,
    jobs: int | None = None,
) -> list[ContingencyRow]:
    if k_max < 1:
        raise SearchError(f"K_max must be at least 1, got {k_max}")
    rows = []
    for K in range(1, k_max + 1):
        res = search_kve(SearchProblem(network, K, frozenset(protected), pool), jobs, with_traces=False)
        rows.append(ContingencyRow(K, res.optimal_damage, res.optimal_sets[0], len(res.optimal_sets)))
    return rows


def rows_to_csv(rows: Iterable[ContingencyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.as_csv_row())
    return buf.getvalue()


def recompute_after_failure(
    network: JointNetwork,
    committed: Iterable[str],
    K: int,
    protected: Iterable[str] = (),
    jobs: int | None = None,
) -> KveResult:
    """Freeze the cascade of ``committed`` as the new baseline and solve KVE on
    what is left; damage counts only entities lost on top of that baseline."""
    committed = frozenset(committed)
    protected = frozenset(protected)
    clash = committed & protected
    if clash:
        raise SearchError("committed failures overlap the protected set: " + ", ".join(sorted(clash, key=natural_key)))
    if not committed:
        return search_kve(SearchProblem(network, K, protected), jobs)
    baseline = run_cascade(network, committed).state()
    return search_kve(SearchProblem(network, K, protected, baseline=baseline), jobs)
