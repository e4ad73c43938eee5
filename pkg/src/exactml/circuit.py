"""Gate-level boolean circuits shared by models and predicates.

Inputs are the offset-binary bits of each feature (value - lo, low bit
first). Gates are created through hash-consing builder methods that fold
constants, so compiled circuits stay small without a separate optimization
pass. Bit patterns above a feature's range are ruled out by a domain
constraint wire that the CNF stage conjoins onto every counting root.

Arithmetic (for networks and feature-to-feature comparisons) is two's
complement with widths chosen from exact interval bounds, so overflow is
impossible by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from .models import (
    DecisionTree,
    FeatureSpec,
    InputDomain,
    Leaf,
    Model,
    ModelError,
    QuantizedNetwork,
)
from . import predicates as P
from .predicates import Predicate, RobustnessRegion

MAX_BUNDLE_WIDTH = 64

METRIC_KINDS = ("tp", "fp", "tn", "fn")


class WidthOverflowError(ValueError):
    """Interval analysis needs more bits than the configured maximum."""


@dataclass(frozen=True)
class Bundle:
    """A two's-complement wire bundle with exact value bounds [lo, hi]."""

    bits: tuple[int, ...]  # LSB first
    lo: int
    hi: int


def _signed_width(lo: int, hi: int) -> int:
    def bits_for(v: int) -> int:
        return v.bit_length() + 1 if v >= 0 else (-v - 1).bit_length() + 1

    return max(bits_for(lo), bits_for(hi), 1)


class Circuit:
    """Boolean circuit over a bounded integer domain.

    Wire ids: 0 .. num_input_bits-1 are input bits; gates follow in
    topological order. Treat instances as immutable once compiled.
    """

    def __init__(self, domain: InputDomain, max_width: int = MAX_BUNDLE_WIDTH):
        self.domain = domain
        self.max_width = max_width
        self.offsets = []
        total = 0
        for f in domain.features:
            self.offsets.append(total)
            total += f.bit_width
        self.num_input_bits = total
        self.gates: list[tuple] = []  # ("const", v) | ("not", a) | (op, a, b)
        self.outputs: dict[str, int] = {}
        self.bundles: list[Bundle] = []
        self._cache: dict[tuple, int] = {}
        self._neg: dict[int, int] = {}
        self.domain_wire = self._build_domain_constraint()

    # -- gate construction -------------------------------------------------

    def _emit(self, key: tuple) -> int:
        wire = self._cache.get(key)
        if wire is None:
            self.gates.append(key)
            wire = self.num_input_bits + len(self.gates) - 1
            self._cache[key] = wire
        return wire

    def const(self, value: bool) -> int:
        return self._emit(("const", bool(value)))

    def const_value(self, wire: int) -> Optional[bool]:
        if wire >= self.num_input_bits:
            gate = self.gates[wire - self.num_input_bits]
            if gate[0] == "const":
                return gate[1]
        return None

    def not_(self, a: int) -> int:
        av = self.const_value(a)
        if av is not None:
            return self.const(not av)
        neg = self._neg.get(a)
        if neg is not None:
            return neg
        wire = self._emit(("not", a))
        self._neg[a] = wire
        self._neg[wire] = a
        return wire

    def and_(self, a: int, b: int) -> int:
        av, bv = self.const_value(a), self.const_value(b)
        if av is not None:
            return b if av else self.const(False)
        if bv is not None:
            return a if bv else self.const(False)
        if a == b:
            return a
        if self._neg.get(a) == b:
            return self.const(False)
        if a > b:
            a, b = b, a
        return self._emit(("and", a, b))

    def or_(self, a: int, b: int) -> int:
        av, bv = self.const_value(a), self.const_value(b)
        if av is not None:
            return self.const(True) if av else b
        if bv is not None:
            return self.const(True) if bv else a
        if a == b:
            return a
        if self._neg.get(a) == b:
            return self.const(True)
        if a > b:
            a, b = b, a
        return self._emit(("or", a, b))

    def xor_(self, a: int, b: int) -> int:
        av, bv = self.const_value(a), self.const_value(b)
        if av is not None:
            return self.not_(b) if av else b
        if bv is not None:
            return self.not_(a) if bv else a
        if a == b:
            return self.const(False)
        if self._neg.get(a) == b:
            return self.const(True)
        if a > b:
            a, b = b, a
        return self._emit(("xor", a, b))

    def and_all(self, wires: Sequence[int]) -> int:
        acc = self.const(True)
        for w in wires:
            acc = self.and_(acc, w)
        return acc

    def or_all(self, wires: Sequence[int]) -> int:
        acc = self.const(False)
        for w in wires:
            acc = self.or_(acc, w)
        return acc

    # -- inputs and the domain constraint -----------------------------------

    def input_bit(self, feature: int, k: int) -> int:
        width = self.domain.features[feature].bit_width
        if not (0 <= k < width):
            raise ValueError(f"feature {feature} has no bit {k}")
        return self.offsets[feature] + k

    def feature_bits(self, feature: int) -> tuple[int, ...]:
        width = self.domain.features[feature].bit_width
        base = self.offsets[feature]
        return tuple(range(base, base + width))

    def _build_domain_constraint(self) -> int:
        acc = self.const(True)
        for i, f in enumerate(self.domain.features):
            span = f.hi - f.lo
            if f.bit_width and span != (1 << f.bit_width) - 1:
                acc = self.and_(acc, self.unsigned_le_const(self.feature_bits(i), span))
        return acc

    def set_output(self, name: str, wire: int) -> int:
        self.outputs[name] = wire
        return wire

    def output(self, name: str) -> int:
        if name not in self.outputs:
            raise KeyError(f"missing wire {name!r}")
        return self.outputs[name]

    # -- comparators ---------------------------------------------------------

    def unsigned_le_const(self, bits: Sequence[int], k: int) -> int:
        """bits (unsigned, LSB first) <= k."""
        if k < 0:
            return self.const(False)
        if k >= (1 << len(bits)) - 1:
            return self.const(True)
        acc = self.const(True)
        for i, b in enumerate(bits):
            if (k >> i) & 1:
                acc = self.or_(self.not_(b), acc)
            else:
                acc = self.and_(self.not_(b), acc)
        return acc

    def unsigned_ge_const(self, bits: Sequence[int], k: int) -> int:
        return self.not_(self.unsigned_le_const(bits, k - 1))

    def unsigned_eq_const(self, bits: Sequence[int], k: int) -> int:
        if k < 0 or k >= (1 << len(bits)):
            return self.const(False)
        acc = self.const(True)
        for i, b in enumerate(bits):
            acc = self.and_(acc, b if (k >> i) & 1 else self.not_(b))
        return acc

    def _le_bits(self, xs: Sequence[int], ys: Sequence[int]) -> int:
        acc = self.const(True)
        for x, y in zip(xs, ys):
            lt = self.and_(self.not_(x), y)
            eq = self.not_(self.xor_(x, y))
            acc = self.or_(lt, self.and_(eq, acc))
        return acc

    def signed_le(self, a: Bundle, b: Bundle) -> int:
        w = max(len(a.bits), len(b.bits))
        xs = list(self._extend(a, w))
        ys = list(self._extend(b, w))
        # flipping the sign bit maps two's complement onto an unsigned scale
        xs[-1] = self.not_(xs[-1])
        ys[-1] = self.not_(ys[-1])
        return self._le_bits(xs, ys)

    def bundles_equal(self, a: Bundle, b: Bundle) -> int:
        w = max(len(a.bits), len(b.bits))
        xs = self._extend(a, w)
        ys = self._extend(b, w)
        acc = self.const(True)
        for x, y in zip(xs, ys):
            acc = self.and_(acc, self.not_(self.xor_(x, y)))
        return acc

    # -- two's-complement arithmetic ------------------------------------------

    def _register(self, bits: Sequence[int], lo: int, hi: int) -> Bundle:
        if len(bits) > self.max_width:
            raise WidthOverflowError(
                f"width overflow: bundle needs {len(bits)} bits, maximum is {self.max_width}"
            )
        bundle = Bundle(tuple(bits), lo, hi)
        self.bundles.append(bundle)
        return bundle

    def const_bundle(self, v: int) -> Bundle:
        w = _signed_width(v, v)
        bits = [self.const((v >> i) & 1) for i in range(w)]
        return self._register(bits, v, v)

    def feature_bundle(self, feature: int) -> Bundle:
        """The feature's actual value: offset-binary bits plus the lo offset."""
        f = self.domain.features[feature]
        span = f.hi - f.lo
        enc = self._register(self.feature_bits(feature) + (self.const(False),), 0, span)
        if f.lo == 0:
            return enc
        return self.add(enc, self.const_bundle(f.lo))

    def _extend(self, b: Bundle, w: int) -> tuple[int, ...]:
        sign = b.bits[-1]
        return b.bits + (sign,) * (w - len(b.bits))

    def _ripple(self, xs, ys, carry):
        out = []
        for x, y in zip(xs, ys):
            t = self.xor_(x, y)
            out.append(self.xor_(t, carry))
            carry = self.or_(self.and_(x, y), self.and_(carry, t))
        return out

    def add(self, a: Bundle, b: Bundle) -> Bundle:
        lo, hi = a.lo + b.lo, a.hi + b.hi
        w = _signed_width(lo, hi)
        bits = self._ripple(self._extend(a, w), self._extend(b, w), self.const(False))
        return self._register(bits, lo, hi)

    def sub(self, a: Bundle, b: Bundle) -> Bundle:
        lo, hi = a.lo - b.hi, a.hi - b.lo
        w = _signed_width(lo, hi)
        ys = [self.not_(y) for y in self._extend(b, w)]
        bits = self._ripple(self._extend(a, w), ys, self.const(True))
        return self._register(bits, lo, hi)

    def shift_left(self, a: Bundle, k: int) -> Bundle:
        if k == 0:
            return a
        bits = (self.const(False),) * k + a.bits
        return self._register(bits, a.lo << k, a.hi << k)

    def shift_right(self, a: Bundle, k: int) -> Bundle:
        """Arithmetic right shift: floor division by 2**k."""
        if k == 0:
            return a
        bits = a.bits[k:] or (a.bits[-1],)
        return self._register(bits, a.lo >> k, a.hi >> k)

    def mul_const(self, a: Bundle, c: int) -> Bundle:
        """Shift-and-add multiplication by a known integer constant."""
        if c == 0:
            return self.const_bundle(0)
        acc = None
        for k in range(abs(c).bit_length()):
            if (abs(c) >> k) & 1:
                term = self.shift_left(a, k)
                acc = term if acc is None else self.add(acc, term)
        if c < 0:
            acc = self.sub(self.const_bundle(0), acc)
        return acc

    def relu(self, a: Bundle) -> Bundle:
        if a.lo >= 0:
            return a
        if a.hi <= 0:
            return self.const_bundle(0)
        keep = self.not_(a.bits[-1])
        bits = [self.and_(b, keep) for b in a.bits]
        return self._register(bits, 0, a.hi)

    # -- evaluation -----------------------------------------------------------

    def simulate(self, point: Sequence[int]) -> list[bool]:
        """Topological evaluation; returns the value of every wire."""
        self.domain.check_point(point)
        values = [False] * (self.num_input_bits + len(self.gates))
        for i, (f, v) in enumerate(zip(self.domain.features, point)):
            enc = v - f.lo
            base = self.offsets[i]
            for k in range(f.bit_width):
                values[base + k] = bool((enc >> k) & 1)
        base = self.num_input_bits
        for gi, gate in enumerate(self.gates):
            op = gate[0]
            if op == "const":
                values[base + gi] = gate[1]
            elif op == "not":
                values[base + gi] = not values[gate[1]]
            elif op == "and":
                values[base + gi] = values[gate[1]] and values[gate[2]]
            elif op == "or":
                values[base + gi] = values[gate[1]] or values[gate[2]]
            else:
                values[base + gi] = values[gate[1]] ^ values[gate[2]]
        return values

    def simulate_outputs(self, point: Sequence[int]) -> dict[str, bool]:
        values = self.simulate(point)
        return {name: values[w] for name, w in self.outputs.items()}

    def bundle_value(self, bundle: Bundle, values: Sequence[bool]) -> int:
        v = 0
        for i, b in enumerate(bundle.bits):
            if values[b]:
                v |= 1 << i
        if values[bundle.bits[-1]]:
            v -= 1 << len(bundle.bits)
        return v

    def stats(self) -> dict:
        return {
            "input_bits": self.num_input_bits,
            "gates": len(self.gates),
            "outputs": len(self.outputs),
        }

    def dump(self) -> str:
        """Debug-only textual gate listing; not a stability contract."""
        lines = [f"inputs {self.num_input_bits}"]
        base = self.num_input_bits
        for gi, gate in enumerate(self.gates):
            args = " ".join(str(a) for a in gate[1:])
            lines.append(f"{base + gi} {gate[0]} {args}")
        for name in sorted(self.outputs):
            lines.append(f"output {name} {self.outputs[name]}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Model compilation
# ---------------------------------------------------------------------------

def _compare_le_const(c: Circuit, feature: int, threshold: int) -> int:
    """value(feature) <= threshold, folded against the feature's range."""
    f = c.domain.features[feature]
    k = threshold - f.lo
    if k < 0:
        return c.const(False)
    if k >= f.hi - f.lo:
        return c.const(True)
    return c.unsigned_le_const(c.feature_bits(feature), k)


def compile_tree(tree: DecisionTree, domain: InputDomain) -> Circuit:
    """One output wire model_<l> per label: OR over that label's leaf paths."""
    c = Circuit(domain)
    by_label: dict[int, list[int]] = {l: [] for l in range(tree.num_labels)}
    stack = [(tree.root, c.const(True))]
    while stack:
        idx, guard = stack.pop()
        node = tree.nodes[idx]
        if isinstance(node, Leaf):
            by_label[node.label].append(guard)
        else:
            cond = _compare_le_const(c, node.feature, node.threshold)
            stack.append((node.right, c.and_(guard, c.not_(cond))))
            stack.append((node.left, c.and_(guard, cond)))
    for label, guards in by_label.items():
        c.set_output(f"model_{label}", c.or_all(guards))
    return c


def compile_network(
    net: QuantizedNetwork, domain: InputDomain, max_width: int = MAX_BUNDLE_WIDTH
) -> Circuit:
    """Bit-blast the affine layers and the argmax decision (ties -> lowest label)."""
    c = Circuit(domain, max_width=max_width)
    # first layer reads offset-binary encodings; feature lo offsets fold into biases
    enc_bundles = []
    offsets = []
    for i, f in enumerate(domain.features):
        span = f.hi - f.lo
        enc_bundles.append(c._register(c.feature_bits(i) + (c.const(False),), 0, span))
        offsets.append(f.lo)
    acts = enc_bundles
    for layer in net.layers:
        out = []
        for row, bias in zip(layer.weights, layer.biases):
            folded = bias + sum(w * off for w, off in zip(row, offsets))
            z = c.const_bundle(folded)
            for w, a in zip(row, acts):
                if w != 0:
                    z = c.add(z, c.mul_const(a, w))
            z = c.shift_right(z, layer.post_shift)
            if layer.activation == "relu":
                z = c.relu(z)
            out.append(z)
        acts = out
        offsets = [0] * len(out)
    logits = acts
    for l in range(len(logits)):
        conds = []
        for j in range(len(logits)):
            if j < l:
                conds.append(c.not_(c.signed_le(logits[l], logits[j])))  # logit_j < logit_l
            elif j > l:
                conds.append(c.signed_le(logits[j], logits[l]))  # logit_l >= logit_j
        c.set_output(f"model_{l}", c.and_all(conds))
    return c


def compile_model(model: Model, domain: InputDomain, max_width: int = MAX_BUNDLE_WIDTH) -> Circuit:
    if isinstance(model, DecisionTree):
        return compile_tree(model, domain)
    return compile_network(model, domain, max_width=max_width)


# ---------------------------------------------------------------------------
# Predicate compilation
# ---------------------------------------------------------------------------

def compile_predicate(circuit: Circuit, pred: Predicate, name: Optional[str] = None) -> int:
    """Compile a predicate into an existing circuit; returns its root wire."""
    P.validate_predicate(pred, circuit.domain)
    wire = _compile_pred(circuit, pred)
    if name is not None:
        circuit.set_output(name, wire)
    return wire


def _compile_cmp_const(c: Circuit, op: str, feature: int, k: int) -> int:
    f = c.domain.features[feature]
    bits = c.feature_bits(feature)
    enc_k = k - f.lo
    span = f.hi - f.lo
    if op == "<=":
        return _compare_le_const(c, feature, k)
    if op == "<":
        return _compare_le_const(c, feature, k - 1)
    if op == ">=":
        return c.not_(_compare_le_const(c, feature, k - 1))
    if op == ">":
        return c.not_(_compare_le_const(c, feature, k))
    eq = c.const(False) if not (0 <= enc_k <= span) else c.unsigned_eq_const(bits, enc_k)
    return eq if op == "=" else c.not_(eq)


def _compile_cmp_feature(c: Circuit, op: str, left: int, right: int) -> int:
    a = c.feature_bundle(left)
    b = c.feature_bundle(right)
    if op == "<=":
        return c.signed_le(a, b)
    if op == "<":
        return c.not_(c.signed_le(b, a))
    if op == ">=":
        return c.signed_le(b, a)
    if op == ">":
        return c.not_(c.signed_le(a, b))
    eq = c.bundles_equal(a, b)
    return eq if op == "=" else c.not_(eq)


def _compile_pred(c: Circuit, pred: Predicate) -> int:
    if isinstance(pred, P.Const):
        return c.const(pred.value)
    if isinstance(pred, P.CmpConst):
        return _compile_cmp_const(c, pred.op, pred.feature, pred.constant)
    if isinstance(pred, P.CmpFeature):
        return _compile_cmp_feature(c, pred.op, pred.left, pred.right)
    if isinstance(pred, P.Not):
        return c.not_(_compile_pred(c, pred.child))
    if isinstance(pred, P.And):
        return c.and_all([_compile_pred(c, child) for child in pred.children])
    if isinstance(pred, P.Or):
        return c.or_all([_compile_pred(c, child) for child in pred.children])
    raise TypeError(f"not a predicate: {pred!r}")


# ---------------------------------------------------------------------------
# Metric roots, regions, partial evaluation
# ---------------------------------------------------------------------------

def compose_metric(circuit: Circuit, label: int, kind: str) -> int:
    """Root wire for one confusion-matrix cell of one label."""
    if kind not in METRIC_KINDS:
        raise ValueError(f"unknown metric kind {kind!r}")
    model = circuit.output(f"model_{label}")
    truth = circuit.output(f"truth_{label}")
    if kind == "tp":
        return circuit.and_(truth, model)
    if kind == "fp":
        return circuit.and_(circuit.not_(truth), model)
    if kind == "tn":
        return circuit.and_(circuit.not_(truth), circuit.not_(model))
    return circuit.and_(truth, circuit.not_(model))


def constrain_region(circuit: Circuit, root: int, region: RobustnessRegion) -> int:
    """Conjoin per-feature interval comparators onto `root`."""
    if region.size() <= 0:
        raise ValueError("empty region")
    acc = root
    for i, ((rlo, rhi), f) in enumerate(zip(region.intervals, circuit.domain.features)):
        bits = circuit.feature_bits(i)
        if rlo > f.lo:
            acc = circuit.and_(acc, circuit.unsigned_ge_const(bits, rlo - f.lo))
        if rhi < f.hi:
            acc = circuit.and_(acc, circuit.unsigned_le_const(bits, rhi - f.lo))
    return acc


def partial_evaluate(circuit: Circuit, fixed: Mapping[int, int]) -> Circuit:
    """Pin features to constants and rebuild with constant propagation.

    The result lives over a narrowed domain in which every fixed feature is a
    single point (zero input bits), so counts of the new circuit project over
    the remaining inputs only. Gates not reachable from a named output are
    dropped.
    """
    for f_idx, value in fixed.items():
        spec = circuit.domain.features[f_idx]
        if not (spec.lo <= value <= spec.hi):
            raise ModelError(
                f"value {value} out of range [{spec.lo}, {spec.hi}] for {spec.name}"
            )
    new_features = tuple(
        FeatureSpec(f.name, fixed[i], fixed[i]) if i in fixed else f
        for i, f in enumerate(circuit.domain.features)
    )
    new_domain = InputDomain(new_features)
    out = Circuit(new_domain, max_width=circuit.max_width)

    reachable = set()
    stack = list(circuit.outputs.values())
    while stack:
        w = stack.pop()
        if w in reachable or w < circuit.num_input_bits:
            continue
        reachable.add(w)
        gate = circuit.gates[w - circuit.num_input_bits]
        if gate[0] != "const":
            stack.extend(gate[1:])

    wiremap: dict[int, int] = {}
    for i, f in enumerate(circuit.domain.features):
        base = circuit.offsets[i]
        if i in fixed:
            enc = fixed[i] - f.lo
            for k in range(f.bit_width):
                wiremap[base + k] = out.const(bool((enc >> k) & 1))
        else:
            for k in range(f.bit_width):
                wiremap[base + k] = out.input_bit(i, k)

    base = circuit.num_input_bits
    for gi, gate in enumerate(circuit.gates):
        wire = base + gi
        if wire not in reachable:
            continue
        op = gate[0]
        if op == "const":
            wiremap[wire] = out.const(gate[1])
        elif op == "not":
            wiremap[wire] = out.not_(wiremap[gate[1]])
        elif op == "and":
            wiremap[wire] = out.and_(wiremap[gate[1]], wiremap[gate[2]])
        elif op == "or":
            wiremap[wire] = out.or_(wiremap[gate[1]], wiremap[gate[2]])
        else:
            wiremap[wire] = out.xor_(wiremap[gate[1]], wiremap[gate[2]])

    for name, wire in circuit.outputs.items():
        out.set_output(name, wiremap[wire])
    return out
