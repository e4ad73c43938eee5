"""Exact projected model counting, plus adapters for external counters.

`count_projected` is a DPLL that only ever branches on projection
variables; unit propagation (two watched literals, over all variables)
handles the auxiliaries. For the Tseitin formulas produced by this package
a total projection assignment determines every auxiliary by propagation, so
each branch contributes exactly 0 or 1; a generic satisfiability fallback
keeps foreign DIMACS inputs correct as well. Execution is deterministic:
no randomness, stable branch order, reproducible stats.

`count_enumerate` is the independent cross-check: a plain blocking-clause
loop over a separate DPLL satisfiability search.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .cnf import CnfFormula

DEFAULT_BUDGET = 10_000_000
ENUMERATE_CAP = 24


@dataclass
class CountResult:
    count: Optional[int]  # None iff exhausted
    method: str  # "dpll_projected" | "enumeration" | "external"
    stats: dict = field(default_factory=dict)
    exhausted: bool = False


class _BudgetExceeded(Exception):
    pass


def _normalize(clauses):
    """Drop tautologies and duplicate literals (possible in foreign DIMACS).

    Duplicate watches on one literal would corrupt the two-watch scheme.
    """
    out = []
    for clause in clauses:
        seen = []
        taut = False
        for lit in clause:
            if -lit in seen:
                taut = True
                break
            if lit not in seen:
                seen.append(lit)
        if not taut:
            out.append(tuple(seen))
    return out


class _Engine:
    """DPLL state shared by the projected counter and its aux-SAT fallback."""

    __slots__ = (
        "num_vars", "clauses", "assign", "watches", "occur", "satisfied",
        "sat_trail", "num_unsat", "trail", "qhead", "proj_mask",
        "proj_unassigned", "stats", "budget",
    )

    def __init__(self, num_vars, clauses, projection, stats, budget):
        self.num_vars = num_vars
        self.clauses = [list(c) for c in clauses]
        self.assign = [0] * (num_vars + 1)  # 0 free, 1 true, -1 false
        self.watches = {}  # literal -> clause indices watching it
        self.occur = {}  # literal -> clause indices containing it
        self.satisfied = [False] * len(self.clauses)
        self.sat_trail = []
        self.num_unsat = len(self.clauses)
        self.trail = []  # literals assigned true, in order
        self.qhead = 0
        self.proj_mask = [False] * (num_vars + 1)
        for v in projection:
            self.proj_mask[v] = True
        self.proj_unassigned = len(projection)
        self.stats = stats
        self.budget = budget

    def setup(self) -> bool:
        """Register watches and queue unit clauses; False on immediate conflict."""
        for ci, clause in enumerate(self.clauses):
            for lit in clause:
                self.occur.setdefault(lit, []).append(ci)
            if len(clause) >= 2:
                self.watches.setdefault(clause[0], []).append(ci)
                self.watches.setdefault(clause[1], []).append(ci)
        for ci, clause in enumerate(self.clauses):
            if len(clause) == 1:
                lit = clause[0]
                val = self.assign[abs(lit)]
                if val == 0:
                    self._enqueue(lit)
                elif (val > 0) != (lit > 0):
                    return False
        return self.propagate()

    def _enqueue(self, lit: int) -> None:
        var = abs(lit)
        self.assign[var] = 1 if lit > 0 else -1
        self.trail.append(lit)
        if self.proj_mask[var]:
            self.proj_unassigned -= 1

    def assume(self, lit: int) -> bool:
        """Assign a decision literal and propagate; False on conflict."""
        self._enqueue(lit)
        return self.propagate()

    def propagate(self) -> bool:
        assign = self.assign
        clauses = self.clauses
        watches = self.watches
        satisfied = self.satisfied
        propagations = 0
        while self.qhead < len(self.trail):
            lit = self.trail[self.qhead]
            self.qhead += 1
            for ci in self.occur.get(lit, ()):
                if not satisfied[ci]:
                    satisfied[ci] = True
                    self.sat_trail.append(ci)
                    self.num_unsat -= 1
            falsified = -lit
            watchlist = watches.get(falsified)
            if not watchlist:
                continue
            kept = []
            wi = 0
            n = len(watchlist)
            while wi < n:
                ci = watchlist[wi]
                wi += 1
                clause = clauses[ci]
                # normalize: the falsified literal sits at position 1
                if clause[0] == falsified:
                    clause[0], clause[1] = clause[1], clause[0]
                other = clause[0]
                oval = assign[abs(other)]
                if oval != 0 and (oval > 0) == (other > 0):
                    kept.append(ci)  # already satisfied via the other watch
                    continue
                moved = False
                for pos in range(2, len(clause)):
                    cand = clause[pos]
                    cval = assign[abs(cand)]
                    if cval == 0 or (cval > 0) == (cand > 0):
                        clause[1], clause[pos] = clause[pos], clause[1]
                        watches.setdefault(cand, []).append(ci)
                        moved = True
                        break
                if moved:
                    continue
                kept.append(ci)
                if oval == 0:
                    self._enqueue(other)
                    propagations += 1
                else:
                    kept.extend(watchlist[wi:])
                    del watchlist[:]
                    watchlist.extend(kept)
                    self.stats["propagations"] += propagations
                    return False
            del watchlist[:]
            watchlist.extend(kept)
        self.stats["propagations"] += propagations
        return True

    def mark(self) -> tuple[int, int]:
        return len(self.trail), len(self.sat_trail)

    def undo(self, marks: tuple[int, int]) -> None:
        tmark, smark = marks
        assign = self.assign
        for lit in self.trail[tmark:]:
            var = abs(lit)
            assign[var] = 0
            if self.proj_mask[var]:
                self.proj_unassigned += 1
        del self.trail[tmark:]
        self.qhead = tmark
        for ci in self.sat_trail[smark:]:
            self.satisfied[ci] = False
            self.num_unsat += 1
        del self.sat_trail[smark:]

    def spend_decision(self) -> None:
        self.stats["decisions"] += 1
        if self.stats["decisions"] > self.budget:
            raise _BudgetExceeded()

    def aux_satisfiable(self) -> bool:
        """Is the residual formula satisfiable? Never triggered by this
        package's own Tseitin encodings (functional extension), but needed
        for arbitrary parsed DIMACS."""
        if self.num_unsat == 0:
            return True
        branch_var = 0
        for ci, clause in enumerate(self.clauses):
            if self.satisfied[ci]:
                continue
            for lit in clause:
                if self.assign[abs(lit)] == 0:
                    branch_var = abs(lit)
                    break
            if branch_var:
                break
        if branch_var == 0:
            return False  # unsatisfied clause with every literal false
        self.spend_decision()
        for value in (branch_var, -branch_var):
            marks = self.mark()
            if self.assume(value) and self.aux_satisfiable():
                self.undo(marks)
                return True
            self.undo(marks)
        return False


def _branch_order(cnf: CnfFormula) -> list[int]:
    """Projection variables, most occurrences in shortest clauses first.

    The score is computed once on the initial formula: occurrences weighted
    by 4^(8 - clause length) so shorter clauses dominate. Ties break toward
    the lowest variable index. Deterministic by construction.
    """
    score = {v: 0 for v in cnf.projection}
    for clause in cnf.clauses:
        weight = 4 ** max(0, 8 - len(clause))
        for lit in clause:
            var = abs(lit)
            if var in score:
                score[var] += weight
    return sorted(score, key=lambda v: (-score[v], v))


def _count_engine(cnf: CnfFormula, stats: dict, budget: int) -> int:
    projection = sorted(cnf.projection)
    engine = _Engine(cnf.num_vars, _normalize(cnf.clauses), projection, stats, budget)
    if not engine.setup():
        return 0
    order = _branch_order(cnf)

    def search(pos: int) -> int:
        if engine.num_unsat == 0:
            return 1 << engine.proj_unassigned
        while pos < len(order) and engine.assign[order[pos]] != 0:
            pos += 1
        if pos == len(order):
            return 1 if engine.aux_satisfiable() else 0
        var = order[pos]
        engine.spend_decision()
        total = 0
        for lit in (var, -var):
            marks = engine.mark()
            if engine.assume(lit):
                total += search(pos + 1)
            engine.undo(marks)
        return total

    return search(0)


def _split_components(cnf: CnfFormula):
    """Connected components of the variable-incidence graph."""
    parent = list(range(cnf.num_vars + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for clause in cnf.clauses:
        root = find(abs(clause[0]))
        for lit in clause[1:]:
            parent[find(abs(lit))] = root

    groups: dict[int, list] = {}
    for ci, clause in enumerate(cnf.clauses):
        groups.setdefault(find(abs(clause[0])), []).append(clause)

    used_vars = {abs(lit) for clause in cnf.clauses for lit in clause}
    free_projection = len([v for v in cnf.projection if v not in used_vars])

    parts = []
    for root in sorted(groups):
        clauses = groups[root]
        comp_vars = sorted({abs(lit) for clause in clauses for lit in clause})
        renum = {v: i + 1 for i, v in enumerate(comp_vars)}
        new_clauses = tuple(
            tuple((1 if lit > 0 else -1) * renum[abs(lit)] for lit in clause)
            for clause in clauses
        )
        proj = frozenset(renum[v] for v in comp_vars if v in cnf.projection)
        parts.append(CnfFormula(len(comp_vars), new_clauses, proj))
    return parts, free_projection


def count_projected(
    cnf: CnfFormula, budget: int = DEFAULT_BUDGET, decompose: bool = False
) -> CountResult:
    """Exact count of projection assignments extendable to satisfying ones."""
    cnf.check()
    stats = {"decisions": 0, "propagations": 0}
    start = time.perf_counter()
    try:
        if decompose:
            parts, free = _split_components(cnf)
            count = 1 << free
            for part in parts:
                count *= _count_engine(part, stats, budget)
                if count == 0:
                    break
        else:
            count = _count_engine(cnf, stats, budget)
    except _BudgetExceeded:
        stats["wall_time"] = time.perf_counter() - start
        return CountResult(None, "dpll_projected", stats, exhausted=True)
    stats["wall_time"] = time.perf_counter() - start
    return CountResult(count, "dpll_projected", stats)


# ---------------------------------------------------------------------------
# Enumeration baseline
# ---------------------------------------------------------------------------

def sat_search(num_vars: int, clauses) -> Optional[list[int]]:
    """Plain DPLL satisfiability search, counter-based propagation.

    Returns a total assignment as a literal list, or None. Intentionally
    independent of the counting engine.
    """
    clauses = _normalize(clauses)
    n_free = [len(c) for c in clauses]
    sat_count = [0] * len(clauses)
    occur: dict[int, list[int]] = {}
    for ci, clause in enumerate(clauses):
        if not clause:
            return None
        for lit in clause:
            occur.setdefault(lit, []).append(ci)
    assign = [0] * (num_vars + 1)
    trail: list[int] = []

    def set_lit(lit: int) -> bool:
        queue = [lit]
        while queue:
            lit = queue.pop()
            var = abs(lit)
            val = 1 if lit > 0 else -1
            if assign[var] != 0:
                if assign[var] != val:
                    return False
                continue
            assign[var] = val
            trail.append(lit)
            for ci in occur.get(lit, ()):
                sat_count[ci] += 1
            # finish every counter update before reporting a conflict,
            # otherwise undo() would double-correct the skipped clauses
            conflict = False
            units = []
            for ci in occur.get(-lit, ()):
                n_free[ci] -= 1
                if sat_count[ci]:
                    continue
                if n_free[ci] == 0:
                    conflict = True
                elif n_free[ci] == 1:
                    units.append(ci)
            if conflict:
                return False
            for ci in units:
                if sat_count[ci]:
                    continue
                for cand in clauses[ci]:
                    if assign[abs(cand)] == 0:
                        queue.append(cand)
                        break
        return True

    def undo(mark: int) -> None:
        for lit in trail[mark:]:
            assign[abs(lit)] = 0
            for ci in occur.get(lit, ()):
                sat_count[ci] -= 1
            for ci in occur.get(-lit, ()):
                n_free[ci] += 1
        del trail[mark:]

    def solve() -> bool:
        var = 0
        for v in range(1, num_vars + 1):
            if assign[v] == 0:
                var = v
                break
        if var == 0:
            return True
        for lit in (var, -var):
            mark = len(trail)
            if set_lit(lit) and solve():
                return True
            undo(mark)
        return False

    for ci, clause in enumerate(clauses):
        if len(clause) == 1 and not set_lit(clause[0]):
            return None
    if not solve():
        return None
    return [v if assign[v] >= 0 else -v for v in range(1, num_vars + 1)]


def count_enumerate(
    cnf: CnfFormula,
    solve: Callable[[int, list], Optional[list[int]]] = sat_search,
    cap: int = ENUMERATE_CAP,
) -> CountResult:
    """Count by repeated solving with blocking clauses over the projection."""
    cnf.check()
    if len(cnf.projection) > cap:
        raise ValueError(
            f"projection cap exceeded: {len(cnf.projection)} > {cap}"
        )
    start = time.perf_counter()
    projection = sorted(cnf.projection)
    clauses = list(cnf.clauses)
    count = 0
    while True:
        model = solve(cnf.num_vars, clauses)
        if model is None:
            break
        count += 1
        block = tuple(-model[v - 1] for v in projection)
        if not block:
            break  # empty projection: a satisfiable formula counts once
        clauses.append(block)
    stats = {"iterations": count, "wall_time": time.perf_counter() - start}
    return CountResult(count, "enumeration", stats)


# ---------------------------------------------------------------------------
# External counter output parsing
# ---------------------------------------------------------------------------

_MC_LINE = re.compile(r"^s\s+mc\s+(\d+)\s*$", re.MULTILINE)
_UNSAT_LINE = re.compile(r"^s\s+UNSATISFIABLE\s*$", re.MULTILINE)
_MULT_FORM = re.compile(r"(\d+)\s*[x*]\s*2\s*\*\*\s*(\d+)")


def parse_external_count(text: str, tool: str = "projected_exact") -> CountResult:
    """Extract the reported projected count from a counter's stdout."""
    if tool not in ("projected_exact", "approximate"):
        raise ValueError(f"unknown tool kind {tool!r}")
    stats: dict = {"tool": tool}
    match = _MC_LINE.search(text)
    if match:
        return CountResult(int(match.group(1)), "external", stats)
    if _UNSAT_LINE.search(text):
        return CountResult(0, "external", stats)
    if tool == "approximate":
        match = _MULT_FORM.search(text)
        if match:
            base, exp = int(match.group(1)), int(match.group(2))
            stats["multiplicative_form"] = match.group(0)
            return CountResult(base * (1 << exp), "external", stats)
    raise ValueError("unrecognized counter output")


# ---------------------------------------------------------------------------
# Propagation-only probe (functional-extension checks)
# ---------------------------------------------------------------------------

def probe_functional_extension(cnf: CnfFormula, assignments) -> list[str]:
    """Unit-propagate total projection assignments with no search.

    For each assignment returns "conflict" or "complete" (all variables
    forced); "incomplete" would mean propagation stalled below the
    projection, violating the functional-extension property of the Tseitin
    output. The engine is built once and reused across assignments.
    """
    stats = {"decisions": 0, "propagations": 0}
    engine = _Engine(cnf.num_vars, _normalize(cnf.clauses), sorted(cnf.projection), stats, 0)
    base_ok = engine.setup()
    results = []
    for proj_assignment in assignments:
        if not base_ok:
            results.append("conflict")
            continue
        marks = engine.mark()
        status = "complete"
        for var in sorted(proj_assignment):
            want = 1 if proj_assignment[var] else -1
            val = engine.assign[var]
            if val != 0:
                if val != want:
                    status = "conflict"
                    break
                continue
            if not engine.assume(var if proj_assignment[var] else -var):
                status = "conflict"
                break
        if status != "conflict" and any(
            engine.assign[v] == 0 for v in range(1, cnf.num_vars + 1)
        ):
            status = "incomplete"
        engine.undo(marks)
        results.append(status)
    return results


def propagate_projection(cnf: CnfFormula, proj_assignment: dict[int, bool]) -> str:
    """Single-assignment form of `probe_functional_extension`."""
    return probe_functional_extension(cnf, [proj_assignment])[0]
