"""Bundled IEEE 14-bus fixtures and a seeded synthetic-network generator."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Mapping

from .network import EntityClass, JointNetwork, build_network
from .parser import parse_network
from .ternary import Dialect, Expr, MaxOr, MinAnd, NewXor, Ref

FIXTURES = ("ieee14-miim", "ieee14-iim")

# main control centre server and gateway; the backup pair (k=2) stays a candidate
CONTROL_CENTER = ("C_1_1_1_1", "C_1_2_1_1")
BACKUP_CONTROL_CENTER = ("C_1_1_2_2", "C_1_2_2_2")


def fixture_text(name: str) -> str:
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; expected one of {', '.join(FIXTURES)}")
    return resources.files(__package__).joinpath("data").joinpath(f"{name}.idr").read_text("utf-8")


@lru_cache(maxsize=None)
def load_fixture(name: str) -> JointNetwork:
    return parse_network(fixture_text(name), name=name)


def load_ieee14(dialect: Dialect | str = Dialect.MIIM) -> JointNetwork:
    return load_fixture(f"ieee14-{Dialect(dialect).value}")


@dataclass(frozen=True)
class DatasetManifest:
    fixture: str
    dialect: str
    entity_counts: dict[str, int]
    evidenced: tuple[str, ...]
    inferred: tuple[str, ...]
    notes: tuple[str, ...]
    regression: dict = field(default_factory=dict)


def _manifest_doc() -> dict:
    text = resources.files(__package__).joinpath("data").joinpath("ieee14.json").read_text("utf-8")
    return json.loads(text)


def load_manifest(name: str) -> DatasetManifest:
    doc = _manifest_doc()
    entry = doc["fixtures"][name]
    net = load_fixture(name)
    counts: dict[str, int] = {}
    for cls in net.entities.values():
        counts[str(cls)] = counts.get(str(cls), 0) + 1
    evidenced = tuple(entry["evidenced"])
    inferred = tuple(e for e in sorted(net.idrs) if e not in set(evidenced))
    return DatasetManifest(
        fixture=name,
        dialect=net.dialect.value,
        entity_counts=dict(sorted(counts.items())),
        evidenced=evidenced,
        inferred=inferred,
        notes=tuple(doc["notes"] + entry.get("notes", [])),
        regression=entry.get("regression", {}),
    )


# --- synthetic networks -----------------------------------------------------

_PREFIX = {
    "P.B": "P", "P.T": "T", "P.Batt": "B",
    "C.SE": "S", "C.SRE": "R", "C.DRE": "D",
    "CP.L": "L", "CP.R": "CR", "CP.U": "CU",
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    counts: Mapping[str, int] = field(default_factory=lambda: {"P.B": 4, "C.SE": 4, "C.SRE": 1, "C.DRE": 1})
    min_arity: int = 2
    max_arity: int = 3
    # relative weights of &, |, @ when picking an operator
    op_mix: tuple[float, float, float] = (0.4, 0.4, 0.2)
    nest_prob: float = 0.3
    source_prob: float = 0.3
    dialect: Dialect = Dialect.MIIM

    def __post_init__(self):
        object.__setattr__(self, "dialect", Dialect(self.dialect))
        object.__setattr__(self, "counts", dict(self.counts))
        for cls, n in self.counts.items():
            EntityClass.parse(cls)
            if n < 0:
                raise ValueError(f"negative count for {cls}")
        if sum(self.counts.values()) < 1:
            raise ValueError("a synthetic network needs at least one entity")
        if not 2 <= self.min_arity <= self.max_arity:
            raise ValueError("arity bounds must satisfy 2 <= min_arity <= max_arity")
        total = sum(self.counts.values())
        if self.max_arity > total:
            raise ValueError(f"max_arity {self.max_arity} exceeds the entity count {total}")
        if len(self.op_mix) != 3 or min(self.op_mix) < 0 or sum(self.op_mix) <= 0:
            raise ValueError("op_mix needs three non-negative weights")


def _random_expr(rng: random.Random, refs: list[str], cfg: SynthConfig, depth: int) -> Expr:
    ops = [MinAnd, MaxOr, NewXor]
    weights = list(cfg.op_mix)
    if cfg.dialect is Dialect.IIM:
        weights[2] = 0.0
    if sum(weights) == 0:
        weights = [1.0, 1.0, 0.0]
    op = rng.choices(ops, weights)[0]
    arity = rng.randint(cfg.min_arity, min(cfg.max_arity, len(refs)))
    leaves = rng.sample(refs, arity)
    operands: list[Expr] = []
    for name in leaves:
        if depth < 2 and len(refs) >= cfg.min_arity and rng.random() < cfg.nest_prob:
            operands.append(_random_expr(rng, refs, cfg, depth + 1))
        else:
            operands.append(Ref(name))
    return op(*operands)


def generate_synthetic(cfg: SynthConfig) -> JointNetwork:
    """Layered random network: power entities depend on power entities,
    communication entities on a mix of both, links on two endpoints."""
    rng = random.Random(cfg.seed)
    entities: list[tuple[str, str]] = []
    by_layer: dict[str, list[str]] = {"P": [], "C": [], "CP": []}
    for cls in sorted(cfg.counts):
        for i in range(1, cfg.counts[cls] + 1):
            name = f"{_PREFIX[cls]}{i}"
            entities.append((name, cls))
            by_layer[cls.split(".")[0]].append(name)
    nodes = by_layer["P"] + by_layer["C"]

    idrs: dict[str, Expr] = {}
    for name, cls in entities:
        if EntityClass.parse(cls).is_link:
            ends = [n for n in nodes if n != name]
            if len(ends) >= 2:
                a, b = rng.sample(ends, 2)
                idrs[name] = MaxOr(Ref(a), Ref(b))
            continue
        if cls.startswith("P."):
            refs = [n for n in by_layer["P"] if n != name]
            if name == by_layer["P"][0] or rng.random() < cfg.source_prob:
                continue
        else:
            refs = [n for n in nodes + by_layer["CP"] if n != name]
        if len(refs) < cfg.min_arity:
            continue
        idrs[name] = _random_expr(rng, refs, cfg, 0)
    return build_network(cfg.dialect, entities, idrs, name=f"synth-{cfg.seed}")
