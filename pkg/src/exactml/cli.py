"""Command line front end.

One command per metric plus DIMACS export and the brute-force oracle.
Identical configuration and inputs produce byte-identical report and DIMACS
files. Exit codes: 0 success, 1 input error, 2 counter budget exhausted,
3 oracle mismatch.
"""

from __future__ import annotations

import argparse
import json
import re
import shlex
import subprocess
import sys
import tempfile
from pathlib import Path
from typing import Optional

from . import circuit as circuit_mod
from . import cnf as cnf_mod
from . import counter as counter_mod
from . import metrics as metrics_mod
from . import models, oracle, predicates

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_BUDGET = 2
EXIT_MISMATCH = 3

_GRAPH_DOMAIN_RE = re.compile(r"^graph(\d+)$")


class CliError(Exception):
    pass


def _read_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise CliError(f"no such file: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: {exc}") from exc


def _load_domain(arg: Optional[str], nodes: Optional[int]):
    if arg:
        match = _GRAPH_DOMAIN_RE.match(arg)
        if match and not Path(arg).exists():
            return predicates.graph_domain(int(match.group(1)))
        return models.load_domain(_read_json(arg))
    if nodes:
        return predicates.graph_domain(nodes)
    raise CliError("need --domain (or --nodes for a graph domain)")


def _load_model(path: str, domain):
    return models.load_model(_read_json(path), domain)


def _predicate_from_arg(arg: str, domain, nodes: Optional[int]):
    """--property value: builtin graph property name, or a predicate file."""
    if arg.lower() in predicates.GRAPH_PROPERTIES and not Path(arg).exists():
        if not nodes:
            raise CliError("builtin graph properties need --nodes")
        if len(domain.features) != nodes * nodes or any(
            (f.lo, f.hi) != (0, 1) for f in domain.features
        ):
            raise CliError(
                f"builtin graph properties with --nodes {nodes} need a domain of "
                f"{nodes * nodes} binary features (got {len(domain.features)})"
            )
        return predicates.builtin_graph_property(arg, nodes)
    p = Path(arg)
    if not p.exists():
        raise CliError(f"no such predicate file or builtin property: {arg}")
    text = "\n".join(
        line for line in p.read_text().splitlines() if not line.lstrip().startswith("#")
    )
    return predicates.parse_predicate(text, domain)


def _parse_post(arg: str, n_labels: int) -> frozenset:
    """--post "1,2" allows those labels; "!2" allows every other label."""
    arg = arg.strip()
    if arg.startswith("!"):
        denied = {int(tok) for tok in arg[1:].split(",")}
        allowed = frozenset(range(n_labels)) - denied
    else:
        allowed = frozenset(int(tok) for tok in arg.split(","))
    for label in allowed:
        if not (0 <= label < n_labels):
            raise CliError(f"post label {label} out of range")
    return allowed


def _make_count_fn(backend: str, budget: int, dialect: str):
    if backend == "builtin":
        return lambda cnf: counter_mod.count_projected(cnf, budget=budget)
    for prefix, tool in (("external:", "projected_exact"), ("external-approx:", "approximate")):
        if backend.startswith(prefix):
            template = backend[len(prefix):]
            if "{file}" not in template:
                raise CliError("external backend template needs a {file} placeholder")

            def run_external(cnf, template=template, tool=tool):
                with tempfile.NamedTemporaryFile(
                    "w", suffix=".cnf", delete=False
                ) as handle:
                    handle.write(cnf_mod.emit_dimacs(cnf, dialect))
                    path = handle.name
                try:
                    argv = shlex.split(template.replace("{file}", path))
                    proc = subprocess.run(argv, capture_output=True, text=True)
                    return counter_mod.parse_external_count(proc.stdout, tool)
                finally:
                    Path(path).unlink(missing_ok=True)

            return run_external
    raise CliError(f"unknown backend {backend!r}")


def _write_output(doc: dict, out: Optional[str]) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _truth_predicates(args, domain, n_labels):
    if not args.property:
        raise CliError("need --property (builtin name or predicate file)")
    pred = _predicate_from_arg(args.property, domain, args.nodes)
    if n_labels != 2:
        raise CliError("the CLI drives binary problems; use the API for more labels")
    return metrics_mod.binary_truth(pred)


def _maybe_baseline(args, doc, model, domain, **kwargs) -> None:
    if args.samples:
        est = metrics_mod.statistical_baseline(
            model, domain, n_samples=args.samples, seed=args.seed, **kwargs
        )
        doc["statistical_baseline"] = {
            "n_samples": args.samples,
            "seed": args.seed,
            "estimate": metrics_mod.render_fraction(est),
        }


def cmd_learnability(args) -> int:
    domain = _load_domain(args.domain, args.nodes)
    model = _load_model(args.model, domain)
    truth = _truth_predicates(args, domain, models.num_labels(model))
    count_fn = _make_count_fn(args.backend, args.budget, args.dialect)
    report = metrics_mod.learnability(model, truth, domain, count_fn=count_fn)
    doc = metrics_mod.metrics_to_document(report)
    _maybe_baseline(
        args, doc, model, domain, kind="learnability_accuracy", truth_predicates=truth
    )
    _write_output(doc, args.out)
    return EXIT_BUDGET if report.gaps else EXIT_OK


def _safety_property(args, domain, n_labels):
    if args.property and not args.pre:
        doc = _read_json(args.property)
        return predicates.load_safety_property(doc, domain, n_labels)
    if args.pre is None or args.post is None:
        raise CliError("need --pre and --post (or --property with a property file)")
    pre_arg = args.pre
    if Path(pre_arg).exists():
        pre_arg = Path(pre_arg).read_text()
    pre = predicates.parse_predicate(pre_arg, domain)
    return predicates.SafetyProperty(pre, _parse_post(args.post, n_labels))


def cmd_safety(args) -> int:
    domain = _load_domain(args.domain, args.nodes)
    model = _load_model(args.model, domain)
    prop = _safety_property(args, domain, models.num_labels(model))
    count_fn = _make_count_fn(args.backend, args.budget, args.dialect)
    report = metrics_mod.safety(model, prop, domain, count_fn=count_fn)
    doc = metrics_mod.safety_to_document(report)
    _maybe_baseline(args, doc, model, domain, kind="safety_accuracy", prop=prop)
    _write_output(doc, args.out)
    return EXIT_BUDGET if report.gaps else EXIT_OK


def _parse_center(arg: Optional[str]) -> tuple[int, ...]:
    if not arg:
        raise CliError("need --center")
    try:
        return tuple(int(tok) for tok in arg.split(","))
    except ValueError as exc:
        raise CliError(f"bad --center value {arg!r}") from exc


def cmd_robustness(args) -> int:
    domain = _load_domain(args.domain, args.nodes)
    model = _load_model(args.model, domain)
    center = _parse_center(args.center)
    count_fn = _make_count_fn(args.backend, args.budget, args.dialect)
    report = metrics_mod.robustness(model, center, args.epsilon, domain, count_fn=count_fn)
    doc = metrics_mod.robustness_to_document(report)
    _maybe_baseline(
        args, doc, model, domain, kind="robustness", center=center, epsilon=args.epsilon
    )
    _write_output(doc, args.out)
    return EXIT_BUDGET if report.gaps else EXIT_OK


_FORMULA_RE = re.compile(r"^(model|truth|tp|fp|tn|fn|pre|sat|viol|robustness)(?::(\d+))?$")


def _build_formula(args, domain, model):
    """Resolve --formula into a circuit root; see README for the syntax."""
    match = _FORMULA_RE.match(args.formula)
    if not match:
        raise CliError(f"bad --formula {args.formula!r}")
    what, label = match.group(1), match.group(2)
    label = int(label) if label is not None else None
    circ = circuit_mod.compile_model(model, domain)
    n = models.num_labels(model)

    if what in ("model",):
        if label is None:
            raise CliError("model formula needs a label, e.g. model:1")
        return circ, circ.output(f"model_{label}")
    if what in ("truth", "tp", "fp", "tn", "fn"):
        if label is None:
            raise CliError(f"{what} formula needs a label, e.g. {what}:1")
        truth = _truth_predicates(args, domain, n)
        for l in sorted(truth):
            circuit_mod.compile_predicate(circ, truth[l], f"truth_{l}")
        if what == "truth":
            return circ, circ.output(f"truth_{label}")
        return circ, circuit_mod.compose_metric(circ, label, what)
    if what in ("pre", "sat", "viol"):
        prop = _safety_property(args, domain, n)
        pre = circuit_mod.compile_predicate(circ, prop.pre, "pre")
        if what == "pre":
            return circ, pre
        post = circ.or_all([circ.output(f"model_{l}") for l in sorted(prop.allowed)])
        if what == "sat":
            return circ, circ.and_(pre, post)
        return circ, circ.and_(pre, circ.not_(post))
    # robustness
    if args.center is None:
        raise CliError("robustness formula needs --center")
    center = _parse_center(args.center)
    target = models.eval_model(model, center, domain)
    reg = predicates.region(center, args.epsilon, domain)
    return circ, circuit_mod.constrain_region(circ, circ.output(f"model_{target}"), reg)


def cmd_emit(args) -> int:
    domain = _load_domain(args.domain, args.nodes)
    model = _load_model(args.model, domain)
    circ, root = _build_formula(args, domain, model)
    formula = cnf_mod.tseitin(circ, root)
    text = cnf_mod.emit_dimacs(formula, args.dialect)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"projection variables: {len(formula.projection)}", file=sys.stderr)
    return EXIT_OK


def cmd_oracle(args) -> int:
    domain = _load_domain(args.domain, args.nodes)
    model = _load_model(args.model, domain)
    truth = _truth_predicates(args, domain, models.num_labels(model))
    try:
        report = oracle.brute_learnability(model, truth, domain, cap=args.cap)
    except oracle.OracleCapError as exc:
        raise CliError(str(exc)) from exc
    doc = {
        "format_version": 1,
        "report": "oracle",
        "domain_size": report.domain_size,
        "counts": {
            str(label): {
                kind: report.counts[(label, kind)] for kind in ("tp", "fp", "tn", "fn")
            }
            for label in sorted({l for l, _ in report.counts})
        },
        "fingerprint": report.fingerprint,
    }
    _write_output(doc, args.out)
    if args.diff:
        prior = _read_json(args.diff)
        for entry in prior.get("labels", []):
            label = entry["label"]
            for kind in ("tp", "fp", "tn", "fn"):
                want = report.counts[(label, kind)]
                got = entry.get(kind)
                if got != want:
                    print(
                        f"mismatch at label {label} {kind}: report has {got}, oracle has {want}",
                        file=sys.stderr,
                    )
                    return EXIT_MISMATCH
        if prior.get("domain_size") not in (None, report.domain_size):
            print("mismatch at domain_size", file=sys.stderr)
            return EXIT_MISMATCH
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exactml",
        description="Exact model metrics via circuit compilation and projected model counting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model_required=True):
        p.add_argument("--domain", help="domain JSON file, or graphN for an N-node graph domain")
        p.add_argument("--model", required=model_required, help="model JSON file")
        p.add_argument("--property", help="builtin graph property name or predicate/property file")
        p.add_argument("--nodes", type=int, help="graph size for builtin properties")
        p.add_argument("--pre", help="safety precondition (predicate text or file)")
        p.add_argument("--post", help="allowed labels, e.g. '1' or '0,2' or '!3'")
        p.add_argument("--center", help="comma-separated input vector")
        p.add_argument("--epsilon", type=int, default=0)
        p.add_argument("--backend", default="builtin",
                       help="builtin | external:'cmd {file}' | external-approx:'cmd {file}'")
        p.add_argument("--dialect", default="ind_comment",
                       choices=list(cnf_mod.DIALECTS))
        p.add_argument("--budget", type=int, default=counter_mod.DEFAULT_BUDGET,
                       help="decision budget for the builtin counter")
        p.add_argument("--seed", type=int, default=metrics_mod.DEFAULT_SEED)
        p.add_argument("--samples", type=int, default=0,
                       help="if > 0, add a seeded statistical baseline to the report")
        p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("learnability", help="confusion counts against a ground-truth predicate")
    common(p)
    p.set_defaults(func=cmd_learnability)

    p = sub.add_parser("safety", help="Pre => Post compliance counts")
    common(p)
    p.set_defaults(func=cmd_safety)

    p = sub.add_parser("robustness", help="region-constrained decision counts")
    common(p)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("emit", help="write a formula as projected DIMACS")
    common(p)
    p.add_argument("--formula", default="model:0",
                   help="model:L | truth:L | tp:L | fp:L | tn:L | fn:L | pre | sat | viol | robustness")
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("oracle", help="brute-force enumeration, optionally diffed against a report")
    common(p)
    p.add_argument("--diff", help="learnability report to compare against")
    p.add_argument("--cap", type=int, default=oracle.ENUMERATION_CAP)
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.budget <= 0:
        print("error: --budget must be positive", file=sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        return args.func(args)
    except (
        CliError,
        models.ModelError,
        predicates.PredicateError,
        cnf_mod.DimacsError,
        circuit_mod.WidthOverflowError,
        ValueError,
        KeyError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
