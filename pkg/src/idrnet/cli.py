"""Command-line front end.  Exit codes: 0 success, 1 domain error, 2 usage error."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import dataset
from .cascade import damage, run_cascade
from .ilp import MODES, build_ilp, emit_lp, model_stats
from .network import JointNetwork, NetworkError, inline_links, natural_key, serialize_network, validate
from .parser import ExprSyntaxError, check_network, parse_expr
from .search import (
    SearchProblem,
    contingency_list,
    decision_kve,
    enumerate_kve,
    recompute_after_failure,
    rows_to_csv,
    search_kve,
)
from .ternary import Dialect, IdrError, eval_trace

FORMATS = ("text", "json", "csv")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    network: str | None = None
    fixture: str | None = None
    dialect: Dialect | None = None
    failed: list[str] = field(default_factory=list)
    committed: list[str] = field(default_factory=list)
    protected: list[str] = field(default_factory=list)
    pool: list[str] | None = None
    K: int | None = None
    k_max: int | None = None
    S: int | None = None
    fmt: str = "text"
    mode: str = "corrected"
    jobs: int | None = None
    seed: int = 0

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        return cls(
            command=ns.command,
            network=getattr(ns, "network", None),
            fixture=getattr(ns, "fixture", None),
            dialect=Dialect(ns.dialect) if getattr(ns, "dialect", None) else None,
            failed=_ids(getattr(ns, "fail", None)),
            committed=_ids(getattr(ns, "committed", None)),
            protected=_expand_protect(_ids(getattr(ns, "protect", None))),
            pool=_ids(ns.pool) if getattr(ns, "pool", None) else None,
            K=getattr(ns, "K", None),
            k_max=getattr(ns, "kmax", None),
            S=getattr(ns, "S", None),
            fmt=getattr(ns, "format", "text") or "text",
            mode=getattr(ns, "mode", "corrected") or "corrected",
            jobs=getattr(ns, "jobs", None),
            seed=getattr(ns, "seed", 0) or 0,
        )


def _ids(values: Sequence[str] | None) -> list[str]:
    out: list[str] = []
    for v in values or ():
        out.extend(p for p in v.replace(",", " ").split() if p)
    return out


def _expand_protect(ids: list[str]) -> list[str]:
    out: list[str] = []
    for e in ids:
        out.extend(dataset.CONTROL_CENTER if e == "cc" else [e])
    return list(dict.fromkeys(out))


def _fmt_set(names) -> str:
    return "{" + ", ".join(sorted(names, key=natural_key)) + "}"


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _dump(doc) -> None:
    _emit(json.dumps(doc, indent=2))


# --- network loading ------------------------------------------------------------

def _load(cfg: RunConfig) -> JointNetwork:
    if cfg.fixture:
        net = dataset.load_fixture(cfg.fixture)
    elif cfg.network:
        path = Path(cfg.network)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {cfg.network}")
        net, diags = check_network(path.read_text(encoding="utf-8"))
        if net is None:
            raise NetworkError(diags)
        object.__setattr__(net, "name", path.stem)
    else:
        raise UsageError("give a network file or --fixture")
    if cfg.dialect and cfg.dialect is not net.dialect:
        net = JointNetwork(cfg.dialect, net.entities, net.idrs, net.name)
        errors = [d for d in validate(net) if d.severity == "error"]
        if errors:
            raise NetworkError(errors)
    return net


# --- subcommands ------------------------------------------------------------------

def cmd_validate(cfg: RunConfig) -> int:
    if cfg.fixture:
        text, label = dataset.fixture_text(cfg.fixture), cfg.fixture
    else:
        path = Path(cfg.network)
        if not path.is_file():
            raise FileNotFoundError(f"no such file: {cfg.network}")
        text, label = path.read_text(encoding="utf-8"), cfg.network
    net, diags = check_network(text)
    errors = sum(d.severity == "error" for d in diags)
    if cfg.fmt == "json":
        _dump({
            "file": label,
            "ok": net is not None,
            "entities": len(net) if net else None,
            "idrs": len(net.idrs) if net else None,
            "diagnostics": [
                {"severity": d.severity, "line": d.line, "column": d.column, "message": d.message} for d in diags
            ],
        })
    else:
        for d in diags:
            _emit(f"{label}:{d}")
        if net is not None:
            _emit(f"ok: {len(net)} entities, {len(net.idrs)} IDRs, {len(diags)} warning(s)")
    return 1 if errors else 0


def cmd_eval(cfg: RunConfig, ns: argparse.Namespace) -> int:
    dialect = cfg.dialect or Dialect.MIIM
    expr = parse_expr(ns.expr, dialect)
    assignment = {}
    for item in _ids(ns.assign):
        name, sep, value = item.partition("=")
        if not sep or not value.strip().lstrip("-").isdigit():
            raise UsageError(f"bad assignment {item!r}; expected ID=STATE")
        assignment[name.strip()] = int(value)
    tr = eval_trace(expr, assignment, dialect)
    if cfg.fmt == "json":
        _dump({"dialect": dialect.value, "result": tr.final, "rows": tr.rows()})
    else:
        _emit(tr.render())
        _emit(f"result: {tr.final}")
    return 0


def cmd_cascade(cfg: RunConfig, ns: argparse.Namespace) -> int:
    net = _load(cfg)
    if not cfg.failed:
        raise UsageError("--fail needs at least one entity")
    tr = run_cascade(net, cfg.failed)
    m = damage(tr)
    if cfg.fmt == "json":
        _dump(tr.to_json())
        return 0
    if ns.trace:
        for line in tr.lines():
            _emit(line)
    for t, wave in enumerate(tr.waves()):
        _emit(f"wave {t}: {_fmt_set(wave)}")
    _emit(f"converged_at: {tr.converged_at}")
    _emit(f"failed_count: {m.failed_count}  degraded_count: {m.degraded_count}  state_deficit: {m.state_deficit}")
    return 0


def _print_result(res, fmt: str) -> None:
    if fmt == "json":
        _dump(res.to_json())
        return
    m = res.optimal_damage
    _emit(f"K={res.K} optimal: failed_count {m.failed_count}, degraded_count {m.degraded_count}, "
          f"state_deficit {m.state_deficit}")
    _emit(f"optimal sets ({len(res.optimal_sets)}):")
    for s in res.optimal_sets:
        _emit(f"  {_fmt_set(s)}")
    if len(res.optimal_sets) == 1:
        tr = res.traces.get(res.optimal_sets[0])
        if tr is not None:
            _emit(f"failed set: {_fmt_set(tr.failed())}")
    _emit(f"evaluated: {res.evaluated_count}")


def cmd_kve(cfg: RunConfig, ns: argparse.Namespace) -> int:
    net = _load(cfg)
    p = SearchProblem(net, cfg.K, frozenset(cfg.protected), tuple(cfg.pool) if cfg.pool else None)
    if ns.decision:
        if cfg.S is None:
            raise UsageError("--decision needs -S")
        ok, witness = decision_kve(p, cfg.S)
        if cfg.fmt == "json":
            _dump({"K": cfg.K, "S": cfg.S, "answer": ok, "witness": list(witness) if witness else None})
        else:
            _emit(f"{'yes' if ok else 'no'}" + (f": witness {_fmt_set(witness)}" if witness else ""))
        return 0
    if cfg.S is not None:
        raise UsageError("-S is only meaningful with --decision")
    res = enumerate_kve(p) if ns.oracle else search_kve(p, cfg.jobs)
    _print_result(res, cfg.fmt)
    return 0


def cmd_list(cfg: RunConfig) -> int:
    net = _load(cfg)
    rows = contingency_list(net, cfg.k_max, cfg.protected, cfg.pool, cfg.jobs)
    if cfg.fmt == "csv":
        _emit(rows_to_csv(rows).rstrip("\n"))
    elif cfg.fmt == "json":
        _dump([{"K": r.K, **r.damage.as_dict(), "example_set": list(r.example_set),
                "optimal_count": r.optimal_count} for r in rows])
    else:
        for r in rows:
            _emit(f"K={r.K}: failed_count {r.damage.failed_count}, state_deficit {r.damage.state_deficit}, "
                  f"e.g. {_fmt_set(r.example_set)} ({r.optimal_count} optimal)")
    return 0


def cmd_export_ilp(cfg: RunConfig, ns: argparse.Namespace) -> int:
    net = _load(cfg)
    if not ns.keep_links:
        net = inline_links(net, name=net.name)
    model = build_ilp(net, cfg.K, cfg.mode, protected=cfg.protected, pool=cfg.pool)
    text = emit_lp(model)
    out = Path(ns.output) if ns.output else None
    if out is not None and (out.is_dir() or ns.output.endswith(os.sep)):
        out.mkdir(parents=True, exist_ok=True)
        out = out / model.filename
    stats = model_stats(model)
    if out is None:
        sys.stdout.write(text)
        return 0
    out.write_text(text, encoding="utf-8")
    if cfg.fmt == "json":
        _dump({"file": str(out), **stats.as_dict()})
    else:
        _emit(f"wrote {out}")
        _emit("variables: " + ", ".join(f"{k}={v}" for k, v in stats.variables.items()))
        _emit("constraints: " + ", ".join(f"{k}={v}" for k, v in stats.constraints.items()))
    return 0


def _parse_counts(items: list[str]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for item in _ids(items):
        cls, sep, n = item.partition("=")
        if not sep or not n.isdigit():
            raise UsageError(f"bad count {item!r}; expected CLASS=N")
        counts[cls] = int(n)
    return counts


def cmd_gen(cfg: RunConfig, ns: argparse.Namespace) -> int:
    if ns.fixture:
        text = dataset.fixture_text(ns.fixture)
    else:
        kwargs = {"seed": cfg.seed, "dialect": cfg.dialect or Dialect.MIIM}
        if ns.counts:
            kwargs["counts"] = _parse_counts(ns.counts)
        if ns.max_arity:
            kwargs["max_arity"] = ns.max_arity
        try:
            synth = dataset.SynthConfig(**kwargs)
        except ValueError as exc:
            raise IdrError(str(exc)) from None
        text = serialize_network(dataset.generate_synthetic(synth))
    if ns.output:
        Path(ns.output).write_text(text, encoding="utf-8")
        _emit(f"wrote {ns.output}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_recompute(cfg: RunConfig) -> int:
    net = _load(cfg)
    if not cfg.committed:
        raise UsageError("--committed needs at least one entity")
    res = recompute_after_failure(net, cfg.committed, cfg.K, cfg.protected, cfg.jobs)
    _print_result(res, cfg.fmt)
    return 0


# --- argument parsing ----------------------------------------------------------

def _add_source(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("network", nargs="?", help="network file (.idr)")
    g.add_argument("--fixture", choices=dataset.FIXTURES, help="bundled network instead of a file")
    p.add_argument("--dialect", choices=[d.value for d in Dialect], help="override the file's dialect")


def _add_format(p: argparse.ArgumentParser, choices=("text", "json")) -> None:
    p.add_argument("--format", choices=choices, default="text")


def _add_search(p: argparse.ArgumentParser) -> None:
    p.add_argument("--protect", nargs="+", metavar="ID", help="entities excluded from candidacy; 'cc' = control centre")
    p.add_argument("--pool", nargs="+", metavar="ID", help="explicit candidate pool")
    p.add_argument("--jobs", type=int, help="worker processes (default: $KVE_JOBS or 1)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="idrnet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and check a network file")
    _add_source(p)
    _add_format(p)

    p = sub.add_parser("eval", help="evaluate one expression with a reduction trace")
    p.add_argument("--expr", required=True)
    p.add_argument("--assign", nargs="+", required=True, metavar="ID=STATE")
    p.add_argument("--dialect", choices=[d.value for d in Dialect])
    _add_format(p)

    p = sub.add_parser("cascade", help="simulate a cascade")
    _add_source(p)
    p.add_argument("--fail", nargs="+", required=True, metavar="ID")
    p.add_argument("--trace", action="store_true", help="per-step listing")
    _add_format(p)

    p = sub.add_parser("kve", help="K most vulnerable entities")
    _add_source(p)
    p.add_argument("-K", type=int, required=True)
    _add_search(p)
    p.add_argument("--decision", action="store_true", help="answer 'is there a K-set failing >= S'")
    p.add_argument("-S", type=int)
    p.add_argument("--oracle", action="store_true", help="exhaustive enumeration instead of branch and bound")
    _add_format(p)

    p = sub.add_parser("list", help="contingency table for K = 1..KMAX")
    _add_source(p)
    p.add_argument("--kmax", type=int, required=True)
    _add_search(p)
    _add_format(p, FORMATS)

    p = sub.add_parser("export-ilp", help="write the integer program as an LP file")
    _add_source(p)
    p.add_argument("-K", type=int, required=True)
    p.add_argument("--mode", choices=MODES, default="corrected")
    p.add_argument("-o", "--output", help="file or directory (named <network>-<mode>-K<k>.lp)")
    p.add_argument("--keep-links", action="store_true", help="keep link entities instead of inlining them")
    p.add_argument("--protect", nargs="+", metavar="ID")
    p.add_argument("--pool", nargs="+", metavar="ID")
    _add_format(p)

    p = sub.add_parser("gen", help="synthetic network or bundled fixture text")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", nargs="+", metavar="CLASS=N", help="entities per class, e.g. P.B=4 C.SE=5")
    p.add_argument("--max-arity", type=int)
    p.add_argument("--dialect", choices=[d.value for d in Dialect])
    p.add_argument("--fixture", choices=dataset.FIXTURES)
    p.add_argument("-o", "--output")

    p = sub.add_parser("recompute", help="KVE after committing failures")
    _add_source(p)
    p.add_argument("--committed", nargs="+", required=True, metavar="ID")
    p.add_argument("-K", type=int, required=True)
    p.add_argument("--protect", nargs="+", metavar="ID")
    p.add_argument("--jobs", type=int)
    _add_format(p)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    cfg = RunConfig.from_args(ns)
    if ns.command == "gen" and ns.fixture and (ns.counts or ns.max_arity):
        sys.stderr.write("idrnet gen: error: --fixture cannot be combined with --counts/--max-arity\n")
        return 2
    handlers = {
        "validate": lambda: cmd_validate(cfg),
        "eval": lambda: cmd_eval(cfg, ns),
        "cascade": lambda: cmd_cascade(cfg, ns),
        "kve": lambda: cmd_kve(cfg, ns),
        "list": lambda: cmd_list(cfg),
        "export-ilp": lambda: cmd_export_ilp(cfg, ns),
        "gen": lambda: cmd_gen(cfg, ns),
        "recompute": lambda: cmd_recompute(cfg),
    }
    try:
        if ns.command in ("validate", "cascade", "kve", "list", "export-ilp", "recompute") and not (cfg.network or cfg.fixture):
            raise UsageError("give a network file or --fixture")
        return handlers[ns.command]()
    except UsageError as exc:
        sys.stderr.write(f"idrnet {ns.command}: error: {exc}\n")
        return 2
    except NetworkError as exc:
        for d in exc.diagnostics:
            sys.stderr.write(f"{d}\n")
        return 1
    except ExprSyntaxError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (IdrError, FileNotFoundError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"error: {msg}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
