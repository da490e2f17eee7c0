"""Synchronous cascade propagation to a fixed point.

Every step evaluates all IDRs against the previous vector and lowers each
entity to ``min(previous, idr value)``; entities never recover.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .network import JointNetwork, natural_key
from .ternary import FAILED, FULL, REDUCED, IdrError

StateVector = dict


class UnknownEntityError(IdrError):
    def __init__(self, names: Iterable[str]):
        names = sorted(names, key=natural_key)
        super().__init__("unknown entity " + ", ".join(names))
        self.names = names


@dataclass(frozen=True)
class DamageMetrics:
    failed_count: int
    degraded_count: int
    state_deficit: int

    def key(self) -> tuple[int, int]:
        """Ranking key: more failures first, then larger state deficit."""
        return (self.failed_count, self.state_deficit)

    def as_dict(self) -> dict:
        return {
            "failed_count": self.failed_count,
            "degraded_count": self.degraded_count,
            "state_deficit": self.state_deficit,
        }


@dataclass(frozen=True)
class CascadeTrace:
    entities: tuple[str, ...]
    initial_failures: frozenset[str]
    vectors: tuple[tuple[int, ...], ...]
    scored: tuple[int, ...]
    network_name: str = ""

    @property
    def converged_at(self) -> int:
        return len(self.vectors) - 1

    @property
    def final(self) -> tuple[int, ...]:
        return self.vectors[-1]

    def state(self, t: int = -1) -> dict[str, int]:
        return dict(zip(self.entities, self.vectors[t]))

    def _with_state(self, vec, value: int, scored_only: bool) -> set[str]:
        idx = self.scored if scored_only else range(len(self.entities))
        return {self.entities[i] for i in idx if vec[i] == value}

    def failed(self, t: int = -1, scored_only: bool = True) -> set[str]:
        return self._with_state(self.vectors[t], FAILED, scored_only)

    def degraded(self, t: int = -1, scored_only: bool = True) -> set[str]:
        return self._with_state(self.vectors[t], REDUCED, scored_only)

    def waves(self, scored_only: bool = True) -> list[set[str]]:
        """Entities newly failed at each step; wave 0 is the initial failure set."""
        out = [self.failed(0, scored_only)]
        for t in range(1, len(self.vectors)):
            out.append(self.failed(t, scored_only) - self.failed(t - 1, scored_only))
        return out

    def lines(self) -> list[str]:
        out = []
        for t in range(len(self.vectors)):
            if t == 0:
                new_f, new_d = self.failed(0, False), self.degraded(0, False)
            else:
                new_f = self.failed(t, False) - self.failed(t - 1, False)
                new_d = self.degraded(t, False) - self.degraded(t - 1, False)
            out.append(f"t={t}: failed {_fmt(new_f)} degraded {_fmt(new_d)}")
        return out

    def to_json(self) -> dict:
        return {
            "network": self.network_name,
            "entities": list(self.entities),
            "initial_failures": sorted(self.initial_failures, key=natural_key),
            "converged_at": self.converged_at,
            "vectors": [list(v) for v in self.vectors],
            "waves": [sorted(w, key=natural_key) for w in self.waves()],
            "final_failed": sorted(self.failed(), key=natural_key),
            "final_degraded": sorted(self.degraded(), key=natural_key),
            "metrics": damage(self).as_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _fmt(names: set[str]) -> str:
    return "{" + ", ".join(sorted(names, key=natural_key)) + "}"


def _check_known(network: JointNetwork, names: Iterable[str]) -> None:
    unknown = [n for n in names if n not in network.entities]
    if unknown:
        raise UnknownEntityError(unknown)


def initial_state(
    network: JointNetwork, failed: Iterable[str], baseline: Mapping[str, int] | None = None
) -> StateVector:
    failed = set(failed)
    _check_known(network, failed)
    base = baseline or {}
    return {e: FAILED if e in failed else base.get(e, FULL) for e in network.entities}


def step(network: JointNetwork, sv: Mapping[str, int]) -> StateVector:
    comp = network.compiled
    cur = [sv[e] for e in comp.order]
    out = {}
    for i, e in enumerate(comp.order):
        f = comp.evaluators[i]
        v = cur[i]
        if f is not None:
            w = f(cur)
            if w < v:
                v = w
        out[e] = v
    return out


def _propagate(comp, start: list[int], dirty: Iterable[int], keep: bool, cap: int):
    """Run synchronous steps from ``start``, re-evaluating only entities whose
    inputs changed.  Returns (final vector, list of vectors or None)."""
    evaluators, dependents = comp.evaluators, comp.dependents
    cur = start
    vectors = [tuple(cur)] if keep else None
    todo = set(dirty)
    steps = 0
    while todo:
        changed = []
        for j in todo:
            f = evaluators[j]
            if f is not None:
                w = f(cur)
                if w < cur[j]:
                    changed.append((j, w))
        if not changed:
            break
        steps += 1
        if steps > cap:
            raise RuntimeError(f"cascade exceeded its step cap of {cap}")
        nxt = list(cur)
        todo = set()
        for j, w in changed:
            nxt[j] = w
            todo.update(dependents[j])
        cur = nxt
        if keep:
            vectors.append(tuple(cur))
    return cur, vectors


def step_cap(network: JointNetwork) -> int:
    """Longest possible run: |E| - 1 steps.

    Whether an IDR evaluates to 0 depends only on which operands are 0, and
    whether it is at most 1 only on which operands are at most 1.  The
    failed set and the degraded-or-failed set therefore each grow like a
    binary cascade, gaining an entity every step until they stop, and
    both start non-empty whenever anything can move at all.
    """
    return max(len(network) - 1, 0)


def run_cascade(
    network: JointNetwork,
    failed: Iterable[str],
    baseline: Mapping[str, int] | None = None,
) -> CascadeTrace:
    failed = frozenset(failed)
    sv = initial_state(network, failed, baseline)
    comp = network.compiled
    start = [sv[e] for e in comp.order]
    if baseline is None or step(network, baseline) == dict(baseline):
        # the baseline is a fixed point, so only dependents of the new failures can move
        dirty = {d for e in failed for d in comp.dependents[comp.index[e]]}
    else:
        dirty = range(len(comp.order))
    _, vectors = _propagate(comp, start, dirty, True, step_cap(network))
    return CascadeTrace(comp.order, failed, tuple(vectors), comp.scored, network.name)


def metrics_of(vector: Sequence[int], scored: Sequence[int]) -> DamageMetrics:
    failed = degraded = 0
    for i in scored:
        v = vector[i]
        if v == FAILED:
            failed += 1
        elif v == REDUCED:
            degraded += 1
    return DamageMetrics(failed, degraded, 2 * failed + degraded)


def damage(trace: CascadeTrace) -> DamageMetrics:
    return metrics_of(trace.final, trace.scored)


def final_vector(network: JointNetwork, failed_idx: Iterable[int], base: Sequence[int]) -> list[int]:
    """Fixed point reached from a fixed-point ``base`` after failing ``failed_idx``."""
    comp = network.compiled
    start = list(base)
    dirty = set()
    for i in failed_idx:
        start[i] = FAILED
        dirty.update(comp.dependents[i])
    cur, _ = _propagate(comp, start, dirty, False, step_cap(network))
    return cur
