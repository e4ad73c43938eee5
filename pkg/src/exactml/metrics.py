"""Exact learnability, safety and robustness quantification.

Each metric is a projected model count of one circuit root: confusion-cell
conjunctions of ground truth and model decision for learnability, Pre
conjoined with the (violated) post-condition for safety, and the model's
own decision wire restricted to an L-infinity region for robustness.
Derived ratios are exact rationals; a seeded Monte-Carlo baseline of the
same quantities is available for side-by-side reporting.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

from .circuit import (
    METRIC_KINDS,
    compile_model,
    compile_predicate,
    compose_metric,
    constrain_region,
)
from .cnf import CnfFormula, tseitin
from .counter import CountResult, count_projected
from .models import FeatureSpec, InputDomain, Model, ModelError, eval_model, num_labels
from .predicates import Not, Predicate, SafetyProperty, region

CountFn = Callable[[CnfFormula], CountResult]

DEFAULT_SEED = 0


@dataclass
class LabelMetrics:
    label: int
    tp: Optional[int]
    fp: Optional[int]
    tn: Optional[int]
    fn: Optional[int]
    accuracy: Optional[Fraction] = None
    precision: Optional[Fraction] = None
    recall: Optional[Fraction] = None
    f1: Optional[Fraction] = None

    def complete(self) -> bool:
        return None not in (self.tp, self.fp, self.tn, self.fn)


@dataclass
class MetricsReport:
    domain_size: int
    labels: tuple[LabelMetrics, ...]
    gaps: tuple[str, ...] = ()
    macro_f1: Optional[Fraction] = None


@dataclass
class SafetyReport:
    pre_size: Optional[int]
    sat_count: Optional[int]
    viol_count: Optional[int]
    accuracy: Optional[Fraction]
    vacuous: bool
    gaps: tuple[str, ...] = ()


@dataclass
class RobustnessReport:
    target_label: int
    region_size: int
    correct_count: Optional[int]
    robustness: Optional[Fraction]
    center: tuple[int, ...]
    epsilon: int
    gaps: tuple[str, ...] = ()


def _derive(label: int, tp, fp, tn, fn, domain_size: int) -> LabelMetrics:
    m = LabelMetrics(label, tp, fp, tn, fn)
    if not m.complete():
        return m
    m.accuracy = Fraction(tp + tn, domain_size)
    # zero denominators stay undefined (None), never coerced to 0 or 1
    if tp + fp:
        m.precision = Fraction(tp, tp + fp)
    if tp + fn:
        m.recall = Fraction(tp, tp + fn)
    if m.precision is not None and m.recall is not None and (m.precision + m.recall):
        m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall)
    return m


def binary_truth(pred: Predicate) -> dict[int, Predicate]:
    """Per-label ground truth for a binary problem: label 1 is `pred`."""
    return {1: pred, 0: Not(pred)}


def _default_count_fn(budget: Optional[int]) -> CountFn:
    if budget is None:
        return count_projected
    return lambda cnf: count_projected(cnf, budget=budget)


def learnability(
    model: Model,
    truth_predicates: Mapping[int, Predicate],
    domain: InputDomain,
    count_fn: Optional[CountFn] = None,
    budget: Optional[int] = None,
) -> MetricsReport:
    """TP/FP/TN/FN over the whole domain for every label, plus derived ratios."""
    labels = list(range(num_labels(model)))
    if sorted(truth_predicates) != labels:
        raise ModelError(
            f"need one truth predicate per label {labels}, got {sorted(truth_predicates)}"
        )
    counter = count_fn or _default_count_fn(budget)
    circuit = compile_model(model, domain)
    for l in labels:
        compile_predicate(circuit, truth_predicates[l], f"truth_{l}")

    size = domain.size()
    gaps = []
    per_label = []
    for l in labels:
        cells = {}
        for kind in METRIC_KINDS:
            result = counter(tseitin(circuit, compose_metric(circuit, l, kind)))
            if result.exhausted:
                gaps.append(f"label {l} {kind}: budget exhausted")
                cells[kind] = None
            else:
                cells[kind] = result.count
        per_label.append(_derive(l, cells["tp"], cells["fp"], cells["tn"], cells["fn"], size))

    macro = None
    f1s = [m.f1 for m in per_label]
    if all(f is not None for f in f1s):
        macro = sum(f1s, Fraction(0)) / len(f1s)
    return MetricsReport(size, tuple(per_label), tuple(gaps), macro)


def safety(
    model: Model,
    prop: SafetyProperty,
    domain: InputDomain,
    count_fn: Optional[CountFn] = None,
    budget: Optional[int] = None,
) -> SafetyReport:
    """Counts of Pre-inputs on which the decision does / does not meet Post."""
    for label in prop.allowed:
        if not (0 <= label < num_labels(model)):
            raise ModelError(f"allowed label {label} out of range")
    counter = count_fn or _default_count_fn(budget)
    circuit = compile_model(model, domain)
    pre = compile_predicate(circuit, prop.pre, "pre")
    post = circuit.or_all([circuit.output(f"model_{l}") for l in sorted(prop.allowed)])

    gaps = []

    def run(name: str, root: int) -> Optional[int]:
        result = counter(tseitin(circuit, root))
        if result.exhausted:
            gaps.append(f"{name}: budget exhausted")
            return None
        return result.count

    pre_size = run("pre", pre)
    sat = run("sat", circuit.and_(pre, post))
    viol = run("viol", circuit.and_(pre, circuit.not_(post)))
    vacuous = pre_size == 0
    accuracy = None
    if not vacuous and sat is not None and viol is not None and sat + viol:
        accuracy = Fraction(sat, sat + viol)
    return SafetyReport(pre_size, sat, viol, accuracy, vacuous, tuple(gaps))


def robustness(
    model: Model,
    center: Sequence[int],
    epsilon: int,
    domain: InputDomain,
    count_fn: Optional[CountFn] = None,
    budget: Optional[int] = None,
) -> RobustnessReport:
    """Fraction of the L-inf ball around `center` classified like the center."""
    counter = count_fn or _default_count_fn(budget)
    target = eval_model(model, center, domain)
    reg = region(center, epsilon, domain)
    circuit = compile_model(model, domain)
    root = constrain_region(circuit, circuit.output(f"model_{target}"), reg)
    result = counter(tseitin(circuit, root))
    if result.exhausted:
        return RobustnessReport(
            target, reg.size(), None, None, tuple(center), epsilon,
            ("robustness: budget exhausted",),
        )
    return RobustnessReport(
        target,
        reg.size(),
        result.count,
        Fraction(result.count, reg.size()),
        tuple(center),
        epsilon,
    )


# ---------------------------------------------------------------------------
# Statistical baseline
# ---------------------------------------------------------------------------

def _decode_point(domain: InputDomain, index: int) -> tuple[int, ...]:
    # lexicographic rank -> point (last feature varies fastest)
    values = []
    for f in reversed(domain.features):
        index, off = divmod(index, f.range_size)
        values.append(f.lo + off)
    return tuple(reversed(values))


def _sample_indices(rng: random.Random, size: int, n: int, with_replacement: bool):
    if not with_replacement and n >= size:
        return range(size)  # exhaustive
    if with_replacement:
        return [rng.randrange(size) for _ in range(n)]
    return rng.sample(range(size), n)


def statistical_baseline(
    model: Model,
    domain: InputDomain,
    kind: str,
    n_samples: int,
    seed: int = DEFAULT_SEED,
    with_replacement: bool = True,
    truth_predicates: Optional[Mapping[int, Predicate]] = None,
    prop: Optional[SafetyProperty] = None,
    center: Optional[Sequence[int]] = None,
    epsilon: Optional[int] = None,
) -> Optional[Fraction]:
    """Seeded Monte-Carlo estimate of one exact metric.

    kind: "learnability_accuracy" (overall fraction of inputs whose predicted
    label matches the ground truth), "safety_accuracy", or "robustness".
    Sampling without replacement with n_samples covering the population is an
    exhaustive pass and reproduces the exact value. Returns None when no
    sample satisfies the safety precondition.
    """
    rng = random.Random(seed)
    if kind == "learnability_accuracy":
        if truth_predicates is None:
            raise ValueError("learnability baseline needs truth_predicates")
        hits = 0
        indices = _sample_indices(rng, domain.size(), n_samples, with_replacement)
        total = 0
        for idx in indices:
            point = _decode_point(domain, idx)
            total += 1
            if truth_predicates[eval_model(model, point, domain)].evaluate(point):
                hits += 1
        return Fraction(hits, total)
    if kind == "robustness":
        if center is None or epsilon is None:
            raise ValueError("robustness baseline needs center and epsilon")
        reg = region(center, epsilon, domain)
        target = eval_model(model, center, domain)
        reg_domain = InputDomain(
            tuple(
                FeatureSpec(f.name, lo, hi)
                for f, (lo, hi) in zip(domain.features, reg.intervals)
            )
        )
        hits = 0
        indices = _sample_indices(rng, reg.size(), n_samples, with_replacement)
        total = 0
        for idx in indices:
            point = _decode_point(reg_domain, idx)
            total += 1
            if eval_model(model, point, domain) == target:
                hits += 1
        return Fraction(hits, total)
    if kind == "safety_accuracy":
        if prop is None:
            raise ValueError("safety baseline needs prop")
        sat = viol = 0
        indices = _sample_indices(rng, domain.size(), n_samples, with_replacement)
        for idx in indices:
            point = _decode_point(domain, idx)
            if not prop.pre.evaluate(point):
                continue
            if eval_model(model, point, domain) in prop.allowed:
                sat += 1
            else:
                viol += 1
        if sat + viol == 0:
            return None
        return Fraction(sat, sat + viol)
    raise ValueError(f"unknown baseline kind {kind!r}")


# ---------------------------------------------------------------------------
# Report serialization (stable field order, decimal rendering at 4 places)
# ---------------------------------------------------------------------------

def render_fraction(value: Optional[Fraction]):
    if value is None:
        return "undefined"
    with localcontext() as ctx:
        ctx.prec = 50
        dec = Decimal(value.numerator) / Decimal(value.denominator)
        text = str(dec.quantize(Decimal("0.0001"), rounding=ROUND_HALF_EVEN))
    return {"fraction": f"{value.numerator}/{value.denominator}", "decimal": text}


def metrics_to_document(report: MetricsReport) -> dict:
    return {
        "format_version": 1,
        "report": "learnability",
        "domain_size": report.domain_size,
        "labels": [
            {
                "label": m.label,
                "tp": m.tp,
                "fp": m.fp,
                "tn": m.tn,
                "fn": m.fn,
                "accuracy": render_fraction(m.accuracy),
                "precision": render_fraction(m.precision),
                "recall": render_fraction(m.recall),
                "f1": render_fraction(m.f1),
            }
            for m in report.labels
        ],
        "macro_f1": render_fraction(report.macro_f1),
        "gaps": list(report.gaps),
    }


def safety_to_document(report: SafetyReport) -> dict:
    return {
        "format_version": 1,
        "report": "safety",
        "pre_size": report.pre_size,
        "sat_count": report.sat_count,
        "viol_count": report.viol_count,
        "accuracy": render_fraction(report.accuracy),
        "vacuous": report.vacuous,
        "gaps": list(report.gaps),
    }


def robustness_to_document(report: RobustnessReport) -> dict:
    return {
        "format_version": 1,
        "report": "robustness",
        "target_label": report.target_label,
        "center": list(report.center),
        "epsilon": report.epsilon,
        "region_size": report.region_size,
        "correct_count": report.correct_count,
        "robustness": render_fraction(report.robustness),
        "gaps": list(report.gaps),
    }
