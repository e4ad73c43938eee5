"""Ground-truth predicates, safety properties and robustness regions.

Predicates are finite ASTs over the features of a bounded domain: integer
comparisons against constants or other features, boolean connectives, and
bounded quantifiers that are expanded at parse time. The builtin library
covers the standard relational properties of finite graphs encoded as
adjacency-matrix bits.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

from .models import FeatureSpec, InputDomain, ModelError


class PredicateError(ValueError):
    """Syntax or resolution error in a predicate expression."""


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: bool

    def evaluate(self, point) -> bool:
        return self.value


@dataclass(frozen=True)
class CmpConst:
    """feature <op> constant, with op one of <= < >= > = !=."""

    op: str
    feature: int
    constant: int

    def evaluate(self, point) -> bool:
        return _apply_op(self.op, point[self.feature], self.constant)


@dataclass(frozen=True)
class CmpFeature:
    """feature <op> feature."""

    op: str
    left: int
    right: int

    def evaluate(self, point) -> bool:
        return _apply_op(self.op, point[self.left], point[self.right])


@dataclass(frozen=True)
class Not:
    child: "Predicate"

    def evaluate(self, point) -> bool:
        return not self.child.evaluate(point)


@dataclass(frozen=True)
class And:
    children: tuple

    def evaluate(self, point) -> bool:
        return all(c.evaluate(point) for c in self.children)


@dataclass(frozen=True)
class Or:
    children: tuple

    def evaluate(self, point) -> bool:
        return any(c.evaluate(point) for c in self.children)


Predicate = Union[Const, CmpConst, CmpFeature, Not, And, Or]

_OPS = ("<=", "<", ">=", ">", "=", "!=")


def _apply_op(op: str, a: int, b: int) -> bool:
    if op == "<=":
        return a <= b
    if op == "<":
        return a < b
    if op == ">=":
        return a >= b
    if op == ">":
        return a > b
    if op == "=":
        return a == b
    return a != b


def implies(a: Predicate, b: Predicate) -> Predicate:
    return Or((Not(a), b))


def validate_predicate(pred: Predicate, domain: InputDomain) -> None:
    """Check that every feature reference fits the domain."""
    n = len(domain.features)
    stack = [pred]
    while stack:
        p = stack.pop()
        if isinstance(p, CmpConst):
            refs = (p.feature,)
        elif isinstance(p, CmpFeature):
            refs = (p.left, p.right)
        elif isinstance(p, Not):
            stack.append(p.child)
            continue
        elif isinstance(p, (And, Or)):
            stack.extend(p.children)
            continue
        else:
            continue
        for f in refs:
            if not (0 <= f < n):
                raise PredicateError(
                    f"feature index {f} out of range for a {n}-feature domain"
                )


def eval_predicate(pred: Predicate, point: Sequence[int], domain: InputDomain | None = None) -> bool:
    """Evaluate a predicate on a concrete input vector."""
    if domain is not None:
        domain.check_point(point)
        validate_predicate(pred, domain)
    return pred.evaluate(point)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<int>-?\d+)|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym><=|>=|!=|==|=>|&&|\|\||[<>=!()\[\],:]))"
)

_KEYWORDS = {"forall", "exists", "in", "true", "false"}


@dataclass(frozen=True)
class _Token:
    kind: str  # "int", "ident", "sym", "end"
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            if text[pos:].strip() == "":
                break
            raise PredicateError(f"syntax error at position {pos}: unexpected {text[pos]!r}")
        if match.lastgroup == "int":
            tokens.append(_Token("int", match.group("int"), match.start("int")))
        elif match.lastgroup == "ident":
            tokens.append(_Token("ident", match.group("ident"), match.start("ident")))
        else:
            tokens.append(_Token("sym", match.group("sym"), match.start("sym")))
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser; quantifiers bind as loosely as possible."""

    def __init__(self, text: str, domain: InputDomain):
        self.text = text
        self.domain = domain
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise PredicateError(
                f"syntax error at position {tok.pos}: expected {text!r}, got {tok.text!r}"
            )
        return tok

    def fail(self, tok: _Token, what: str):
        raise PredicateError(f"syntax error at position {tok.pos}: {what}")

    def parse(self) -> Predicate:
        pred = self.parse_pred({})
        tok = self.peek()
        if tok.kind != "end":
            self.fail(tok, f"unexpected trailing input {tok.text!r}")
        return pred

    def parse_pred(self, env) -> Predicate:
        tok = self.peek()
        if tok.kind == "ident" and tok.text in ("forall", "exists"):
            return self.parse_quant(env)
        return self.parse_implies(env)

    def parse_quant(self, env) -> Predicate:
        kind = self.next().text
        names = [self.parse_binder(env)]
        while self.peek().text == ",":
            self.next()
            names.append(self.parse_binder(env))
        self.expect("in")
        self.expect("[")
        lo_tok = self.next()
        if lo_tok.kind != "int":
            self.fail(lo_tok, "quantifier bound must be a constant integer")
        self.expect(",")
        hi_tok = self.next()
        if hi_tok.kind != "int":
            self.fail(hi_tok, "quantifier bound must be a constant integer")
        self.expect(")")
        self.expect(":")
        lo, hi = int(lo_tok.text), int(hi_tok.text)
        body_start = self.i
        children = []
        for values in itertools.product(range(lo, hi), repeat=len(names)):
            self.i = body_start
            child_env = dict(env)
            child_env.update(zip(names, values))
            children.append(self.parse_pred(child_env))
        if not children:
            self.i = body_start
            self.parse_pred(dict(env, **{n: 0 for n in names}))  # still syntax-check the body
            return Const(kind == "forall")
        return And(tuple(children)) if kind == "forall" else Or(tuple(children))

    def parse_binder(self, env) -> str:
        tok = self.next()
        if tok.kind != "ident" or tok.text in _KEYWORDS:
            self.fail(tok, "expected quantifier variable name")
        if tok.text in env:
            self.fail(tok, f"variable {tok.text!r} already bound")
        return tok.text

    def parse_implies(self, env) -> Predicate:
        left = self.parse_or(env)
        if self.peek().text == "=>":
            self.next()
            right = self.parse_implies(env)
            return implies(left, right)
        return left

    def parse_or(self, env) -> Predicate:
        terms = [self.parse_and(env)]
        while self.peek().text == "||":
            self.next()
            terms.append(self.parse_and(env))
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def parse_and(self, env) -> Predicate:
        terms = [self.parse_not(env)]
        while self.peek().text == "&&":
            self.next()
            terms.append(self.parse_not(env))
        return terms[0] if len(terms) == 1 else And(tuple(terms))

    def parse_not(self, env) -> Predicate:
        if self.peek().text == "!":
            self.next()
            return Not(self.parse_not(env))
        return self.parse_atom(env)

    def parse_atom(self, env) -> Predicate:
        tok = self.peek()
        if tok.text == "(":
            self.next()
            inner = self.parse_pred(env)
            self.expect(")")
            return inner
        if tok.kind == "ident" and tok.text in ("forall", "exists"):
            return self.parse_quant(env)
        if tok.kind == "ident" and tok.text == "true":
            self.next()
            return Const(True)
        if tok.kind == "ident" and tok.text == "false":
            self.next()
            return Const(False)
        left = self.parse_term(env)
        op_tok = self.next()
        op = "=" if op_tok.text == "==" else op_tok.text
        if op not in _OPS:
            self.fail(op_tok, f"expected comparison operator, got {op_tok.text!r}")
        right = self.parse_term(env)
        return self.make_cmp(op, left, right, op_tok)

    def parse_term(self, env):
        """Returns ('int', value) or ('feat', feature_index)."""
        tok = self.next()
        if tok.kind == "int":
            return ("int", int(tok.text))
        if tok.kind != "ident" or tok.text in _KEYWORDS:
            self.fail(tok, f"expected integer or feature, got {tok.text!r}")
        name = tok.text
        if name in env and self.peek().text != "[":
            return ("int", env[name])
        while self.peek().text == "[":
            self.next()
            idx_tok = self.next()
            if idx_tok.kind == "int":
                idx = int(idx_tok.text)
            elif idx_tok.kind == "ident" and idx_tok.text in env:
                idx = env[idx_tok.text]
            else:
                self.fail(idx_tok, f"unknown index {idx_tok.text!r}")
            self.expect("]")
            name += f"[{idx}]"
        try:
            return ("feat", self.domain.index_of(name))
        except KeyError:
            raise PredicateError(f"unknown feature {name!r} at position {tok.pos}") from None

    def make_cmp(self, op, left, right, tok) -> Predicate:
        lk, lv = left
        rk, rv = right
        if lk == "int" and rk == "int":
            return Const(_apply_op(op, lv, rv))
        if lk == "feat" and rk == "int":
            return CmpConst(op, lv, rv)
        if lk == "int" and rk == "feat":
            flipped = {"<=": ">=", "<": ">", ">=": "<=", ">": "<", "=": "=", "!=": "!="}
            return CmpConst(flipped[op], rv, lv)
        return CmpFeature(op, lv, rv)


def parse_predicate(text: str, domain: InputDomain) -> Predicate:
    """Parse the infix predicate grammar; quantifiers are expanded eagerly."""
    return _Parser(text, domain).parse()


# ---------------------------------------------------------------------------
# Builtin graph properties
# ---------------------------------------------------------------------------

GRAPH_PROPERTIES = (
    "antisymmetric",
    "connex",
    "equivalence",
    "irreflexive",
    "nonstrictorder",
    "partialorder",
    "preorder",
    "reflexive",
    "strictorder",
    "totalorder",
    "transitive",
)


def graph_domain(n_nodes: int) -> InputDomain:
    """Domain of n^2 binary adjacency bits e[i][j], row-major order."""
    if n_nodes < 1:
        raise ModelError("n_nodes must be >= 1")
    return InputDomain(
        tuple(
            FeatureSpec(f"e[{i}][{j}]", 0, 1)
            for i in range(n_nodes)
            for j in range(n_nodes)
        )
    )


def _edge(n: int, i: int, j: int) -> int:
    return i * n + j


def _has(n, i, j) -> Predicate:
    return CmpConst("=", _edge(n, i, j), 1)


def _lacks(n, i, j) -> Predicate:
    return CmpConst("=", _edge(n, i, j), 0)


def _reflexive(n):
    return And(tuple(_has(n, i, i) for i in range(n)))


def _irreflexive(n):
    return And(tuple(_lacks(n, i, i) for i in range(n)))


def _symmetric(n):
    return And(
        tuple(
            implies(_has(n, i, j), _has(n, j, i))
            for i in range(n)
            for j in range(n)
            if i != j
        )
    )


def _antisymmetric(n):
    return And(
        tuple(
            Not(And((_has(n, i, j), _has(n, j, i))))
            for i in range(n)
            for j in range(i + 1, n)
        )
    )


def _connex(n):
    return And(
        tuple(
            Or((_has(n, i, j), _has(n, j, i)))
            for i in range(n)
            for j in range(i + 1, n)
        )
    )


def _transitive(n):
    return And(
        tuple(
            implies(And((_has(n, i, j), _has(n, j, k))), _has(n, i, k))
            for i in range(n)
            for j in range(n)
            for k in range(n)
        )
    )


def builtin_graph_property(name: str, n_nodes: int) -> Predicate:
    """Standard relational property over the n_nodes adjacency-matrix domain.

    Frozen definitions (so satisfying counts are reproducible):
      reflexive       forall i: e[i][i]=1
      irreflexive     forall i: e[i][i]=0
      antisymmetric   forall i!=j: not (e[i][j] and e[j][i])
      connex          forall i!=j: e[i][j] or e[j][i]
      transitive      forall i,j,k: e[i][j] and e[j][k] => e[i][k]
      equivalence     reflexive and symmetric and transitive
      preorder        reflexive and transitive
      partialorder    reflexive and antisymmetric and transitive
      nonstrictorder  reflexive and antisymmetric and transitive
      strictorder     irreflexive and transitive
      totalorder      nonstrictorder and connex
    """
    if n_nodes < 1:
        raise ModelError("n_nodes must be >= 1")
    key = name.lower()
    n = n_nodes
    if key == "reflexive":
        return _reflexive(n)
    if key == "irreflexive":
        return _irreflexive(n)
    if key == "antisymmetric":
        return _antisymmetric(n)
    if key == "connex":
        return _connex(n)
    if key == "transitive":
        return _transitive(n)
    if key == "equivalence":
        return And((_reflexive(n), _symmetric(n), _transitive(n)))
    if key == "preorder":
        return And((_reflexive(n), _transitive(n)))
    if key in ("partialorder", "nonstrictorder"):
        return And((_reflexive(n), _antisymmetric(n), _transitive(n)))
    if key == "strictorder":
        return And((_irreflexive(n), _transitive(n)))
    if key == "totalorder":
        return And((_reflexive(n), _antisymmetric(n), _transitive(n), _connex(n)))
    raise PredicateError(f"unknown graph property {name!r}")


# ---------------------------------------------------------------------------
# Safety properties and robustness regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SafetyProperty:
    """Pre (over inputs) => the model's decision lies in `allowed`."""

    pre: Predicate
    allowed: frozenset[int]


def load_safety_property(doc, domain: InputDomain, n_labels: int) -> SafetyProperty:
    if isinstance(doc, str):
        import json

        doc = json.loads(doc)
    if not isinstance(doc, dict):
        raise ModelError("malformed property document")
    if doc.get("format_version", 1) != 1:
        raise ModelError("unsupported format_version")
    pre = parse_predicate(doc.get("pre", "true"), domain)
    if "allow" in doc:
        allowed = frozenset(doc["allow"])
    elif "deny" in doc:
        allowed = frozenset(range(n_labels)) - frozenset(doc["deny"])
    else:
        raise ModelError("property document needs 'allow' or 'deny'")
    for label in allowed:
        if isinstance(label, bool) or not isinstance(label, int) or not (0 <= label < n_labels):
            raise ModelError(f"label {label!r} out of range")
    return SafetyProperty(pre, allowed)


@dataclass(frozen=True)
class RobustnessRegion:
    """L-infinity ball of radius epsilon around `center`, clipped to the domain."""

    center: tuple[int, ...]
    epsilon: int
    intervals: tuple[tuple[int, int], ...]

    def size(self) -> int:
        n = 1
        for lo, hi in self.intervals:
            n *= hi - lo + 1
        return n

    def points(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(lo, hi + 1) for lo, hi in self.intervals))

    def contains(self, point: Sequence[int]) -> bool:
        return all(lo <= v <= hi for (lo, hi), v in zip(self.intervals, point))


def region(center: Sequence[int], epsilon: int, domain: InputDomain) -> RobustnessRegion:
    if epsilon < 0:
        raise ModelError("epsilon must be non-negative")
    domain.check_point(center)
    intervals = tuple(
        (max(f.lo, c - epsilon), min(f.hi, c + epsilon))
        for f, c in zip(domain.features, center)
    )
    return RobustnessRegion(tuple(center), epsilon, intervals)
