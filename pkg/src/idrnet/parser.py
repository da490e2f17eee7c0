"""Text formats: IDR expressions and line-oriented network files.

Expression grammar (``&`` binds tightest, ``@`` loosest)::

    expr := xor
    xor  := or ("@" or)*
    or   := and ("|" and)*
    and  := atom ("&" atom)*
    atom := ENTITY | "(" expr ")"

A chain of one operator at one level becomes a single n-ary node;
parentheses always introduce a new node.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .network import (
    Diagnostic,
    EntityClass,
    JointNetwork,
    NetworkError,
    validate,
)
from .ternary import Dialect, DialectError, Expr, MaxOr, MinAnd, NewXor, Ref

_TOKEN = re.compile(r"\s*(?:(?P<id>[A-Za-z][A-Za-z0-9_]*)|(?P<op>[&|@()]))")


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, column: int, line: int = 0):
        super().__init__(f"{line}:{column}: {message}" if line else f"column {column}: {message}")
        self.message = message
        self.column = column
        self.line = line


@dataclass(frozen=True)
class _Tok:
    kind: str  # "id" | "op" | "end"
    text: str
    col: int  # 1-based


class ExprDialectError(DialectError):
    def __init__(self, column: int):
        super().__init__(f"column {column}: '@' (new_XOR) is not allowed in the iim dialect")
        self.column = column


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos == len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos + 1)
        kind = "id" if m.group("id") else "op"
        toks.append(_Tok(kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    toks.append(_Tok("end", "", len(text) + 1))
    return toks


class _ExprParser:
    _levels = (("@", NewXor), ("|", MaxOr), ("&", MinAnd))

    def __init__(self, text: str, dialect: Dialect):
        self.toks = _tokenize(text)
        self.i = 0
        self.dialect = dialect

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def parse(self) -> Expr:
        if self.tok.kind == "end":
            raise ExprSyntaxError("empty expression", self.tok.col)
        expr = self.level(0)
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.col)
        return expr

    def level(self, depth: int) -> Expr:
        if depth == len(self._levels):
            return self.atom()
        symbol, node = self._levels[depth]
        operands = [self.level(depth + 1)]
        while self.tok.kind == "op" and self.tok.text == symbol:
            if symbol == "@" and self.dialect is Dialect.IIM:
                raise ExprDialectError(self.tok.col)
            self.i += 1
            operands.append(self.level(depth + 1))
        return operands[0] if len(operands) == 1 else node(*operands)

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "id":
            self.i += 1
            return Ref(tok.text)
        if tok.text == "(":
            self.i += 1
            expr = self.level(0)
            if self.tok.text != ")":
                raise ExprSyntaxError("expected ')'", self.tok.col)
            self.i += 1
            return expr
        what = "end of expression" if tok.kind == "end" else repr(tok.text)
        raise ExprSyntaxError(f"expected entity or '(' but found {what}", tok.col)


def parse_expr(text: str, dialect: Dialect | str = Dialect.MIIM) -> Expr:
    return _ExprParser(text, Dialect(dialect)).parse()


_CLASS_NAMES = "P.B|P.T|P.Batt|C.SE|C.SRE|C.DRE|CP.L|CP.R|CP.U"


def check_network(text: str) -> tuple[JointNetwork | None, list[Diagnostic]]:
    """Parse a network file, returning the network (if error-free) and all diagnostics."""
    diags: list[Diagnostic] = []
    dialect: Dialect | None = None
    entities: dict[str, EntityClass] = {}
    raw_idrs: dict[str, tuple[str, int, int]] = {}
    locations: dict[tuple[str, str], int] = {}

    def err(line, col, msg):
        diags.append(Diagnostic("error", line, col, msg))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        words = line.split()
        directive = words[0]
        if directive == "dialect":
            if len(words) != 2 or words[1] not in ("iim", "miim"):
                err(lineno, indent + 1, "expected 'dialect iim' or 'dialect miim'")
            elif dialect is not None:
                err(lineno, indent + 1, "duplicate dialect line")
            else:
                dialect = Dialect(words[1])
        elif directive == "entity":
            if len(words) != 4 or words[2] != "class":
                err(lineno, indent + 1, "expected 'entity <id> class <class>'")
                continue
            eid, cls = words[1], words[3]
            col = line.index(eid, indent + 6) + 1
            if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", eid):
                err(lineno, col, f"invalid entity id {eid!r}")
                continue
            try:
                ecls = EntityClass.parse(cls)
            except ValueError:
                err(lineno, line.rindex(cls) + 1, f"unknown entity class {cls!r}; expected one of {_CLASS_NAMES}")
                continue
            if eid in entities:
                err(lineno, col, f"duplicate entity {eid}")
                continue
            entities[eid] = ecls
            locations[("entity", eid)] = lineno
        elif directive == "idr":
            m = re.match(r"\s*idr\s+(\S+)\s*<-\s*", line)
            if not m:
                err(lineno, indent + 1, "expected 'idr <id> <- <expression>'")
                continue
            target = m.group(1)
            if target in raw_idrs:
                err(lineno, m.start(1) + 1, f"duplicate IDR for {target}")
                continue
            raw_idrs[target] = (line[m.end():], lineno, m.end())
            locations[("idr", target)] = lineno
        else:
            err(lineno, indent + 1, f"unknown directive {directive!r}")

    if dialect is None:
        err(1, 1, "missing 'dialect' line")
        dialect = Dialect.MIIM

    idrs: dict[str, Expr] = {}
    for target, (body, lineno, offset) in raw_idrs.items():
        try:
            idrs[target] = parse_expr(body, dialect)
        except ExprSyntaxError as exc:
            err(lineno, offset + exc.column, exc.message)
        except ExprDialectError as exc:
            err(lineno, offset + exc.column, "'@' (new_XOR) is not allowed in the iim dialect")

    for target, (body, lineno, offset) in raw_idrs.items():
        if target not in entities:
            err(lineno, 5, f"IDR for undeclared entity {target}")
        expr = idrs.get(target)
        if expr is None:
            continue
        for ref in sorted(expr.entities()):
            if ref not in entities:
                col = offset + 1 + _find_word(body, ref)
                err(lineno, col, f"undeclared entity {ref}")
        if target in expr.entities():
            col = offset + 1 + _find_word(body, target)
            err(lineno, col, f"IDR for {target} references its own target")

    if any(d.severity == "error" for d in diags):
        diags.sort(key=lambda d: (d.line, d.column))
        return None, diags
    net = JointNetwork(dialect, entities, idrs, locations=locations)
    return net, validate(net)


def _find_word(text: str, word: str) -> int:
    m = re.search(rf"(?<![A-Za-z0-9_]){re.escape(word)}(?![A-Za-z0-9_])", text)
    return m.start() if m else 0


def parse_network(text: str, name: str = "") -> JointNetwork:
    """Parse a network file; raises NetworkError carrying every diagnostic on failure."""
    net, diags = check_network(text)
    if net is None:
        raise NetworkError(diags)
    if name:
        object.__setattr__(net, "name", name)
    return net
