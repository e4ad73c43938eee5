"""Shared fixtures: seeded random models, predicates and the acceptance suite."""

import random
from dataclasses import dataclass

import pytest

from exactml.models import InputDomain, load_domain, load_network, load_tree
from exactml.predicates import And, CmpConst, Not, Or, Predicate


def make_domain(ranges, prefix="f"):
    """ranges: list of (lo, hi) pairs."""
    return load_domain(
        {"features": [{"name": f"{prefix}{i}", "lo": lo, "hi": hi} for i, (lo, hi) in enumerate(ranges)]}
    )


BITS2 = [(0, 1), (0, 1)]


@pytest.fixture
def bits2_domain():
    return make_domain(BITS2)


XOR_TREE_DOC = {
    "format_version": 1,
    "kind": "decision_tree",
    "num_labels": 2,
    "root": 0,
    "nodes": [
        {"feature": 0, "threshold": 0, "left": 1, "right": 2},
        {"feature": 1, "threshold": 0, "left": 3, "right": 4},
        {"feature": 1, "threshold": 0, "left": 5, "right": 6},
        {"leaf": 0},
        {"leaf": 1},
        {"leaf": 1},
        {"leaf": 0},
    ],
}


@pytest.fixture
def xor_tree(bits2_domain):
    return load_tree(XOR_TREE_DOC, bits2_domain)


def reflexive_tree_doc(n):
    """Tree that tests the n diagonal adjacency bits; label 1 iff all set.

    Internal node k sits at index 2k, its leaf-0 child at 2k+1; index 2n is
    the final leaf 1.
    """
    nodes = []
    for k in range(n):
        nodes.append({"feature": k * n + k, "threshold": 0, "left": 2 * k + 1, "right": 2 * k + 2})
        nodes.append({"leaf": 0})
    nodes.append({"leaf": 1})
    return {"format_version": 1, "kind": "decision_tree", "num_labels": 2, "root": 0, "nodes": nodes}


def constant_tree_doc(label, num_labels=2):
    return {
        "format_version": 1,
        "kind": "decision_tree",
        "num_labels": num_labels,
        "root": 0,
        "nodes": [{"leaf": label}],
    }


# ---------------------------------------------------------------------------
# Random generators (all explicitly seeded by the caller)
# ---------------------------------------------------------------------------

def random_tree(rng, domain, num_labels=2, max_depth=6):
    nodes = []

    def build(depth):
        idx = len(nodes)
        nodes.append(None)
        if depth == 0 or (depth < max_depth - 1 and rng.random() < 0.3):
            nodes[idx] = {"leaf": rng.randrange(num_labels)}
        else:
            feat = rng.randrange(len(domain.features))
            f = domain.features[feat]
            left = build(depth - 1)
            right = build(depth - 1)
            nodes[idx] = {
                "feature": feat,
                "threshold": rng.randint(f.lo, f.hi - 1) if f.hi > f.lo else f.lo,
                "left": left,
                "right": right,
            }
        return idx

    build(max_depth)
    return load_tree({"num_labels": num_labels, "root": 0, "nodes": nodes}, domain)


def random_network(rng, domain, hidden=(2,), num_labels=2, weight_range=2):
    layers = []
    width = len(domain.features)
    for h in hidden:
        layers.append(
            {
                "weights": [
                    [rng.randint(-weight_range, weight_range) for _ in range(width)]
                    for _ in range(h)
                ],
                "biases": [rng.randint(-4, 4) for _ in range(h)],
                "activation": "relu",
                "post_shift": rng.choice([0, 1]),
            }
        )
        width = h
    layers.append(
        {
            "weights": [
                [rng.randint(-weight_range, weight_range) for _ in range(width)]
                for _ in range(num_labels)
            ],
            "biases": [rng.randint(-4, 4) for _ in range(num_labels)],
            "activation": "none",
            "post_shift": 0,
        }
    )
    return load_network({"input_width": len(domain.features), "layers": layers}, domain)


def random_predicate(rng, domain, depth=2) -> Predicate:
    if depth == 0 or rng.random() < 0.4:
        feat = rng.randrange(len(domain.features))
        f = domain.features[feat]
        op = rng.choice(["<=", "<", ">=", ">", "=", "!="])
        return CmpConst(op, feat, rng.randint(f.lo, f.hi))
    shape = rng.random()
    if shape < 0.4:
        return And(tuple(random_predicate(rng, domain, depth - 1) for _ in range(2)))
    if shape < 0.8:
        return Or(tuple(random_predicate(rng, domain, depth - 1) for _ in range(2)))
    return Not(random_predicate(rng, domain, depth - 1))


def random_point(rng, domain):
    return tuple(rng.randint(f.lo, f.hi) for f in domain.features)


def truth_family(rng, domain, num_labels):
    """One ground-truth predicate per label; for binary, label 0 complements."""
    if num_labels == 2:
        pred = random_predicate(rng, domain)
        return {1: pred, 0: Not(pred)}
    return {l: random_predicate(rng, domain) for l in range(num_labels)}


# ---------------------------------------------------------------------------
# The randomized acceptance suite (shared across acceptance criteria)
# ---------------------------------------------------------------------------

@dataclass
class SuiteInstance:
    name: str
    domain: InputDomain
    model: object
    truth: dict
    kind: str  # "tree" | "network"


TREE_DOMAIN_RANGES = [
    [(0, 1)] * 4,
    [(0, 7), (0, 7)],
    [(0, 3)] * 3,
    [(0, 1)] * 8,
    [(0, 15), (0, 15)],
    [(0, 3), (0, 3), (0, 1), (0, 1)],
    [(0, 31), (0, 7)],
    [(2, 9), (-4, 3)],
]

NET_DOMAIN_RANGES = [
    [(0, 1)] * 4,
    [(0, 7), (0, 7)],
    [(0, 3)] * 3,
    [(0, 15), (0, 15)],
    [(-2, 5), (0, 3)],
]


def build_suite():
    rng = random.Random(20240 + 817)
    instances = []
    for i in range(20):
        domain = make_domain(TREE_DOMAIN_RANGES[i % len(TREE_DOMAIN_RANGES)])
        num_labels = 2 if i % 3 else 3
        tree = random_tree(rng, domain, num_labels=num_labels, max_depth=rng.randint(3, 6))
        instances.append(
            SuiteInstance(f"tree{i:02d}", domain, tree, truth_family(rng, domain, num_labels), "tree")
        )
    for i in range(10):
        domain = make_domain(NET_DOMAIN_RANGES[i % len(NET_DOMAIN_RANGES)])
        hidden = (rng.randint(2, 3),) if i % 2 else (rng.randint(2, 3), 2)
        num_labels = 3 if i % 4 == 3 else 2
        net = random_network(rng, domain, hidden=hidden, num_labels=num_labels)
        instances.append(
            SuiteInstance(f"net{i:02d}", domain, net, truth_family(rng, domain, num_labels), "network")
        )
    return instances


@pytest.fixture(scope="session")
def model_suite():
    return build_suite()
