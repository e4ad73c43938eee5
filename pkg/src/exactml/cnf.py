"""Tseitin transformation and DIMACS interchange.

Variable numbering is stable: input bits first (feature order, low bit
first), then one fresh variable per gate reachable from the root, in
topological order. The full biconditional encoding is emitted for every
gate, never the polarity-reduced form: that is what guarantees that a total
assignment to the projection variables determines all auxiliaries by unit
propagation alone, so projected counts equal input counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .circuit import Circuit


class DimacsError(ValueError):
    """Malformed DIMACS input."""


@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    projection: frozenset[int]
    root_literal: Optional[int] = None

    def check(self) -> None:
        for clause in self.clauses:
            if not clause:
                raise DimacsError("empty clause")
            for lit in clause:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise DimacsError(f"literal {lit} out of range")


def tseitin(circuit: Circuit, root: int) -> CnfFormula:
    """CNF for `root` AND the domain-range constraint, projection = input bits."""
    n_inputs = circuit.num_input_bits
    targets = [root]
    if circuit.domain_wire != root:
        targets.append(circuit.domain_wire)

    reachable = set()
    stack = list(targets)
    while stack:
        w = stack.pop()
        if w < n_inputs or w in reachable:
            continue
        reachable.add(w)
        gate = circuit.gates[w - n_inputs]
        if gate[0] != "const":
            stack.extend(gate[1:])

    var_of = {}
    for bit in range(n_inputs):
        var_of[bit] = bit + 1
    next_var = n_inputs + 1
    for w in sorted(reachable):
        var_of[w] = next_var
        next_var += 1

    clauses: list[tuple[int, ...]] = []
    for w in sorted(reachable):
        v = var_of[w]
        gate = circuit.gates[w - n_inputs]
        op = gate[0]
        if op == "const":
            clauses.append((v,) if gate[1] else (-v,))
        elif op == "not":
            a = var_of[gate[1]]
            clauses.append((v, a))
            clauses.append((-v, -a))
        elif op == "and":
            a, b = var_of[gate[1]], var_of[gate[2]]
            clauses.append((-v, a))
            clauses.append((-v, b))
            clauses.append((v, -a, -b))
        elif op == "or":
            a, b = var_of[gate[1]], var_of[gate[2]]
            clauses.append((v, -a))
            clauses.append((v, -b))
            clauses.append((-v, a, b))
        else:  # xor
            a, b = var_of[gate[1]], var_of[gate[2]]
            clauses.append((-v, a, b))
            clauses.append((-v, -a, -b))
            clauses.append((v, a, -b))
            clauses.append((v, -a, b))

    units = {clause[0] for clause in clauses if len(clause) == 1}
    root_literal = var_of[root]
    for target in targets:
        lit = var_of[target]
        if lit not in units:
            clauses.append((lit,))
            units.add(lit)

    return CnfFormula(
        num_vars=next_var - 1,
        clauses=tuple(clauses),
        projection=frozenset(range(1, n_inputs + 1)),
        root_literal=root_literal,
    )


DIALECTS = ("ind_comment", "pshow_comment")


def emit_dimacs(cnf: CnfFormula, dialect: str = "ind_comment") -> str:
    """Byte-stable DIMACS text with projection annotations."""
    if dialect not in DIALECTS:
        raise ValueError(f"unknown dialect {dialect!r}")
    lines = [f"p cnf {cnf.num_vars} {len(cnf.clauses)}"]
    proj = sorted(cnf.projection)
    if dialect == "ind_comment":
        for i in range(0, len(proj), 10):
            chunk = " ".join(str(v) for v in proj[i : i + 10])
            lines.append(f"c ind {chunk} 0")
        if not proj:
            lines.append("c ind 0")
    else:
        chunk = " ".join(str(v) for v in proj)
        lines.append(f"c p show {chunk} 0" if proj else "c p show 0")
    for clause in cnf.clauses:
        lines.append(" ".join(str(lit) for lit in clause) + " 0")
    return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> CnfFormula:
    """Parse DIMACS with optional 'c ind'/'c p show' projection comments.

    Without projection comments the projection defaults to all variables.
    """
    num_vars = None
    declared_clauses = None
    clauses: list[tuple[int, ...]] = []
    projection: set[int] = set()
    saw_projection = False
    pending: list[int] = []

    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("c"):
            fields = stripped.split()
            if fields[:2] == ["c", "ind"]:
                body = fields[2:]
            elif fields[:3] == ["c", "p", "show"]:
                body = fields[3:]
            else:
                continue
            saw_projection = True
            for tok in body:
                try:
                    v = int(tok)
                except ValueError as exc:
                    raise DimacsError(f"line {lineno}: bad projection token {tok!r}") from exc
                if v != 0:
                    projection.add(v)
            continue
        if stripped.startswith("p"):
            fields = stripped.split()
            if len(fields) != 4 or fields[1] != "cnf":
                raise DimacsError(f"line {lineno}: malformed header {stripped!r}")
            try:
                num_vars, declared_clauses = int(fields[2]), int(fields[3])
            except ValueError as exc:
                raise DimacsError(f"line {lineno}: malformed header {stripped!r}") from exc
            continue
        if num_vars is None:
            raise DimacsError(f"line {lineno}: clause before header")
        for tok in stripped.split():
            try:
                lit = int(tok)
            except ValueError as exc:
                raise DimacsError(f"line {lineno}: bad literal {tok!r}") from exc
            if lit == 0:
                if not pending:
                    raise DimacsError(f"line {lineno}: empty clause")
                clauses.append(tuple(pending))
                pending.clear()
            else:
                if abs(lit) > num_vars:
                    raise DimacsError(f"line {lineno}: literal {lit} out of range")
                pending.append(lit)

    if pending:
        raise DimacsError("unterminated clause at end of input")
    if num_vars is None:
        raise DimacsError("missing 'p cnf' header")
    if declared_clauses != len(clauses):
        raise DimacsError(
            f"header declares {declared_clauses} clauses, found {len(clauses)}"
        )
    if saw_projection:
        for v in projection:
            if not (1 <= v <= num_vars):
                raise DimacsError(f"projection variable {v} out of range")
        proj = frozenset(projection)
    else:
        proj = frozenset(range(1, num_vars + 1))
    return CnfFormula(num_vars=num_vars, clauses=tuple(clauses), projection=proj)
