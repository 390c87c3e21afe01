"""Prefix-call expression language for LLM-proposed features and intrinsic rewards.

Grammar::

    expr    := number | ident | ident '(' expr (',' expr)* ')'
    number  := -?digits(.digits)?([eE][+-]?digits)?
    ident   := [a-z][a-z0-9_]*

Only the builtins in ``BUILTINS`` may be called. Nothing in an expression can
reach Python names or attributes; evaluation walks a closed AST.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

MAX_TEXT_BYTES = 4096
MAX_DEPTH = 32
MAX_NODES = 512
DIV_EPS = 1e-12

NAME_RE = re.compile(r"[a-z][a-z0-9_]*\Z")

SCALAR = "scalar"
VECTOR = "vector"

# name -> argument kinds
BUILTINS: dict[str, tuple[str, ...]] = {
    "add": (SCALAR, SCALAR),
    "sub": (SCALAR, SCALAR),
    "mul": (SCALAR, SCALAR),
    "div": (SCALAR, SCALAR),
    "neg": (SCALAR,),
    "abs": (SCALAR,),
    "min": (SCALAR, SCALAR),
    "max": (SCALAR, SCALAR),
    "clip": (SCALAR, SCALAR, SCALAR),
    "sqrt": (SCALAR,),
    "log": (SCALAR,),
    "exp": (SCALAR,),
    "sin": (SCALAR,),
    "cos": (SCALAR,),
    "atan2": (SCALAR, SCALAR),
    "dot": (VECTOR, VECTOR),
    "norm": (VECTOR,),
    "dist": (VECTOR, VECTOR),
    "angle_between": (VECTOR, VECTOR),
}


class DslError(ValueError):
    pass


class ParseError(DslError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnknownFunctionError(DslError):
    pass


class ArityError(DslError):
    pass


class LimitError(DslError):
    pass


class ValidationError(DslError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class DomainError(DslError):
    def __init__(self, message: str, subexpr: "Expr"):
        super().__init__(f"{message} in {to_text(subexpr)}")
        self.subexpr = subexpr


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Var, Call]


@dataclass(frozen=True)
class VarSchema:
    scalars: tuple[str, ...] = ()
    vectors: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "scalars", tuple(self.scalars))
        object.__setattr__(self, "vectors", dict(self.vectors))
        names = list(self.scalars) + list(self.vectors)
        if len(set(names)) != len(names):
            raise DslError("schema names must be unique")
        for name in names:
            if not NAME_RE.match(name):
                raise DslError(f"invalid variable name {name!r}")
        for name, dim in self.vectors.items():
            if int(dim) < 1:
                raise DslError(f"vector {name!r} needs dimension >= 1")

    @property
    def names(self) -> set[str]:
        return set(self.scalars) | set(self.vectors)

    def check_binding(self, binding: Mapping[str, object]) -> None:
        for name in self.scalars:
            value = float(binding[name])
            if not math.isfinite(value):
                raise DslError(f"binding {name!r} is not finite")
        for name, dim in self.vectors.items():
            value = np.asarray(binding[name], dtype=float)
            if value.shape != (dim,) or not np.all(np.isfinite(value)):
                raise DslError(f"binding {name!r} must be a finite {dim}-vector")


# ---------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)|(?P<ident>[a-z][a-z0-9_]*)|(?P<punct>[(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    raw = text.encode("utf-8")
    if len(raw) > MAX_TEXT_BYTES:
        raise LimitError(f"expression text exceeds {MAX_TEXT_BYTES} bytes")
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            offset = len(text[:pos].encode("utf-8"))
            offset += len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError("unexpected character", offset)
        kind = m.lastgroup
        start = len(text[: m.start(kind)].encode("utf-8"))
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.nodes = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind: str, value: str | None = None):
        tok = self.tokens[self.i]
        if tok[0] != kind or (value is not None and tok[1] != value):
            want = value or kind
            got = tok[1] or "end of input"
            raise ParseError(f"expected {want!r}, got {got!r}", tok[2])
        self.i += 1
        return tok

    def expr(self, depth: int) -> Expr:
        if depth > MAX_DEPTH:
            raise LimitError(f"expression depth exceeds {MAX_DEPTH}")
        self.nodes += 1
        if self.nodes > MAX_NODES:
            raise LimitError(f"expression exceeds {MAX_NODES} nodes")
        kind, value, offset = self.peek()
        if kind == "num":
            self.i += 1
            number = float(value)
            if not math.isfinite(number):
                raise ParseError("literal out of range", offset)
            return Num(number)
        if kind == "ident":
            self.i += 1
            if self.peek()[1] != "(":
                return Var(value)
            if value not in BUILTINS:
                raise UnknownFunctionError(f"unknown function {value!r} at byte {offset}")
            self.take("punct", "(")
            args = [self.expr(depth + 1)]
            while self.peek()[1] == ",":
                self.i += 1
                args.append(self.expr(depth + 1))
            self.take("punct", ")")
            want = len(BUILTINS[value])
            if len(args) != want:
                raise ArityError(f"{value} takes {want} argument(s), got {len(args)} at byte {offset}")
            return Call(value, tuple(args))
        raise ParseError(f"unexpected {value or 'end of input'!r}", offset)


def parse(text: str) -> Expr:
    parser = _Parser(text)
    expr = parser.expr(1)
    parser.take("end")
    return expr


def to_text(expr: Expr) -> str:
    """Canonical text; ``parse(to_text(e)) == e``."""
    if isinstance(expr, Num):
        return repr(float(expr.value))
    if isinstance(expr, Var):
        return expr.name
    return f"{expr.func}({', '.join(to_text(a) for a in expr.args)})"


def variables(expr: Expr) -> set[str]:
    if isinstance(expr, Var):
        return {expr.name}
    if isinstance(expr, Call):
        out: set[str] = set()
        for arg in expr.args:
            out |= variables(arg)
        return out
    return set()


def node_count(expr: Expr) -> int:
    if isinstance(expr, Call):
        return 1 + sum(node_count(a) for a in expr.args)
    return 1


def depth(expr: Expr) -> int:
    if isinstance(expr, Call):
        return 1 + max(depth(a) for a in expr.args)
    return 1


# ------------------------------------------------------------- validation


def validate(expr: Expr, schema: VarSchema) -> list[str]:
    """Return a list of problems; an empty list means the expression is usable."""
    errors: list[str] = []
    if depth(expr) > MAX_DEPTH:
        errors.append(f"depth exceeds {MAX_DEPTH}")
    if node_count(expr) > MAX_NODES:
        errors.append(f"node count exceeds {MAX_NODES}")
    _check(expr, SCALAR, schema, errors)
    return errors


def _check(expr: Expr, expected: str, schema: VarSchema, errors: list[str]) -> None:
    if isinstance(expr, Num):
        if expected == VECTOR:
            errors.append(f"literal {to_text(expr)} used where a vector is expected")
        return
    if isinstance(expr, Var):
        if expr.name in schema.vectors:
            if expected == SCALAR:
                errors.append(f"vector variable {expr.name!r} used where a scalar is expected")
        elif expr.name in schema.scalars:
            if expected == VECTOR:
                errors.append(f"scalar variable {expr.name!r} used where a vector is expected")
        else:
            errors.append(f"unknown variable {expr.name!r}")
        return
    kinds = BUILTINS.get(expr.func)
    if kinds is None:
        errors.append(f"unknown function {expr.func!r}")
        return
    if len(kinds) != len(expr.args):
        errors.append(f"{expr.func} takes {len(kinds)} argument(s), got {len(expr.args)}")
        return
    if expected == VECTOR:
        errors.append(f"{expr.func}(...) yields a scalar where a vector is expected")
    for kind, arg in zip(kinds, expr.args):
        if kind == VECTOR and not isinstance(arg, Var):
            errors.append(f"{expr.func} needs vector variables, got {to_text(arg)}")
            continue
        _check(arg, kind, schema, errors)
    if kinds == (VECTOR, VECTOR) and all(isinstance(a, Var) for a in expr.args):
        dims = [schema.vectors.get(a.name) for a in expr.args]
        if None not in dims and dims[0] != dims[1]:
            errors.append(f"{expr.func} dimension mismatch {dims[0]} vs {dims[1]}")


def check(expr: Expr, schema: VarSchema) -> Expr:
    errors = validate(expr, schema)
    if errors:
        raise ValidationError(errors)
    return expr


# ------------------------------------------------------------- evaluation


def _div(node, a, b):
    if abs(b) < DIV_EPS:
        raise DomainError("division by ~0", node)
    return a / b


def _sqrt(node, a):
    if a < 0:
        raise DomainError("sqrt of negative", node)
    return math.sqrt(a)


def _log(node, a):
    if a <= 0:
        raise DomainError("log of non-positive", node)
    return math.log(a)


def _exp(node, a):
    if a > 709.0:
        raise DomainError("exp overflow", node)
    return math.exp(a)


def _angle(node, u, v):
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu < DIV_EPS or nv < DIV_EPS:
        raise DomainError("angle with zero vector", node)
    return math.acos(max(-1.0, min(1.0, float(np.dot(u, v)) / (nu * nv))))


_SCALAR_FUNCS = {
    "add": lambda n, a, b: a + b,
    "sub": lambda n, a, b: a - b,
    "mul": lambda n, a, b: a * b,
    "div": _div,
    "neg": lambda n, a: -a,
    "abs": lambda n, a: abs(a),
    "min": lambda n, a, b: min(a, b),
    "max": lambda n, a, b: max(a, b),
    "clip": lambda n, a, lo, hi: min(max(a, lo), hi),
    "sqrt": _sqrt,
    "log": _log,
    "exp": _exp,
    "sin": lambda n, a: math.sin(a),
    "cos": lambda n, a: math.cos(a),
    "atan2": lambda n, a, b: math.atan2(a, b),
    "dot": lambda n, u, v: float(np.dot(u, v)),
    "norm": lambda n, u: float(np.linalg.norm(u)),
    "dist": lambda n, u, v: float(np.linalg.norm(np.subtract(u, v))),
    "angle_between": _angle,
}


def evaluate(expr: Expr, binding: Mapping[str, object]) -> float:
    """Evaluate ``expr``; raises :class:`DomainError` on a guarded-domain violation."""
    value = _eval(expr, binding)
    if not math.isfinite(value):
        raise DomainError("non-finite result", expr)
    return value


def _eval(expr: Expr, binding: Mapping[str, object]):
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            value = binding[expr.name]
        except KeyError:
            raise DslError(f"unbound variable {expr.name!r}") from None
        if isinstance(value, (int, float)):
            return float(value)
        return np.asarray(value, dtype=float)
    args = [_eval(a, binding) for a in expr.args]
    value = _SCALAR_FUNCS[expr.func](expr, *args)
    if not math.isfinite(value):
        raise DomainError("non-finite intermediate", expr)
    return value


@dataclass
class Diagnostics:
    """Counts domain errors swallowed by :func:`guarded_eval`."""

    errors: int = 0
    last_error: str | None = None
    by_expr: dict[str, int] = field(default_factory=dict)

    def record(self, expr: Expr, exc: Exception) -> None:
        self.errors += 1
        self.last_error = str(exc)
        key = to_text(expr)
        self.by_expr[key] = self.by_expr.get(key, 0) + 1


def guarded_eval(
    expr: Expr,
    binding: Mapping[str, object],
    fallback: float = 0.0,
    diagnostics: Diagnostics | None = None,
) -> float:
    """Like :func:`evaluate`, but returns ``fallback`` instead of raising a domain error."""
    if not math.isfinite(fallback):
        raise ValueError("fallback must be finite")
    try:
        return evaluate(expr, binding)
    except DomainError as exc:
        if diagnostics is not None:
            diagnostics.record(expr, exc)
        return float(fallback)
