"""Brute-force enumeration oracle.

Evaluates models and predicates directly through their reference semantics,
never through circuits or CNF, so its counts are an independent ground truth
for the counting pipeline. `brute_count_root` is the one deliberate
exception: it simulates a circuit, which is exactly the differential check
the tests want.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence

from .models import InputDomain, Model, ModelError, eval_model, num_labels
from .predicates import Predicate, RobustnessRegion, validate_predicate

ENUMERATION_CAP = 1 << 24


class OracleCapError(ValueError):
    """The requested enumeration exceeds the configured cap."""


@dataclass
class OracleReport:
    domain_size: int
    counts: dict  # (label, kind) -> count
    fingerprint: str
    label_totals: dict = field(default_factory=dict)  # label -> |{x : model(x)=l}|


def enumerate_domain(domain: InputDomain) -> Iterator[tuple[int, ...]]:
    """All domain points in lexicographic feature order (last feature fastest)."""
    return itertools.product(*(range(f.lo, f.hi + 1) for f in domain.features))


def _check_cap(size: int, cap: int) -> None:
    if size > cap:
        raise OracleCapError(f"domain too large for oracle: {size} > cap {cap}")


def brute_learnability(
    model: Model,
    truth_predicates: Mapping[int, Predicate],
    domain: InputDomain,
    cap: int = ENUMERATION_CAP,
) -> OracleReport:
    """Exhaustively tally TP/FP/TN/FN per label against the ground truth."""
    _check_cap(domain.size(), cap)
    labels = sorted(truth_predicates)
    if labels != list(range(num_labels(model))):
        raise ModelError("need one truth predicate per label")
    for pred in truth_predicates.values():
        validate_predicate(pred, domain)
    counts = {(l, kind): 0 for l in labels for kind in ("tp", "fp", "tn", "fn")}
    label_totals = {l: 0 for l in labels}
    digest = hashlib.sha256()
    for point in enumerate_domain(domain):
        predicted = eval_model(model, point, domain)
        label_totals[predicted] += 1
        digest.update(f"{point}:{predicted};".encode())
        for l in labels:
            truth = truth_predicates[l].evaluate(point)
            if truth:
                counts[(l, "tp" if predicted == l else "fn")] += 1
            else:
                counts[(l, "fp" if predicted == l else "tn")] += 1
    return OracleReport(domain.size(), counts, digest.hexdigest(), label_totals)


def brute_count_predicate(
    pred: Predicate, domain: InputDomain, cap: int = ENUMERATION_CAP
) -> int:
    """|{x in domain : pred(x)}| by direct AST evaluation."""
    _check_cap(domain.size(), cap)
    validate_predicate(pred, domain)
    return sum(1 for point in enumerate_domain(domain) if pred.evaluate(point))


def brute_count_root(
    circuit,
    root: int,
    region: Optional[RobustnessRegion] = None,
    cap: int = ENUMERATION_CAP,
) -> int:
    """Count inputs (of the domain, or of a region) whose simulation sets `root`.

    Differential use only: this is the simulate-side of circuit checks.
    """
    points = region.points() if region is not None else enumerate_domain(circuit.domain)
    size = region.size() if region is not None else circuit.domain.size()
    _check_cap(size, cap)
    return sum(1 for point in points if circuit.simulate(point)[root])


def brute_robustness(
    model: Model,
    center: Sequence[int],
    reg: RobustnessRegion,
    domain: InputDomain,
    cap: int = ENUMERATION_CAP,
) -> tuple[int, int]:
    """(region size, points classified like the center) by direct evaluation."""
    _check_cap(reg.size(), cap)
    target = eval_model(model, center, domain)
    correct = sum(1 for point in reg.points() if eval_model(model, point, domain) == target)
    return reg.size(), correct
