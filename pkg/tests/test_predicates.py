import pytest

from exactml.models import ModelError
from exactml.oracle import brute_count_predicate, enumerate_domain
from exactml.predicates import (
    GRAPH_PROPERTIES,
    And,
    CmpConst,
    PredicateError,
    builtin_graph_property,
    eval_predicate,
    graph_domain,
    load_safety_property,
    parse_predicate,
    region,
)

from conftest import make_domain

# Oracle-derived satisfying counts over all 2^(n*n) adjacency matrices.
# Cross-checked against closed forms where they exist: reflexive/irreflexive
# 2^(n^2-n); antisymmetric/connex 2^n*3^(n(n-1)/2); totalorder n!;
# equivalence = Bell(n); partialorder/strictorder = labeled posets;
# preorder = labeled topologies; transitive relations 2, 13, 171, 3994.
GRAPH_COUNTS = {
    2: {
        "antisymmetric": 12,
        "connex": 12,
        "equivalence": 2,
        "irreflexive": 4,
        "nonstrictorder": 3,
        "partialorder": 3,
        "preorder": 4,
        "reflexive": 4,
        "strictorder": 3,
        "totalorder": 2,
        "transitive": 13,
    },
    3: {
        "antisymmetric": 216,
        "connex": 216,
        "equivalence": 5,
        "irreflexive": 64,
        "nonstrictorder": 19,
        "partialorder": 19,
        "preorder": 29,
        "reflexive": 64,
        "strictorder": 19,
        "totalorder": 6,
        "transitive": 171,
    },
}

GRAPH_COUNTS_4 = {
    "reflexive": 4096,
    "irreflexive": 4096,
    "antisymmetric": 11664,
    "transitive": 3994,
}


class TestGraphProperties:
    @pytest.mark.parametrize("n", [2, 3])
    def test_small_counts_match_oracle(self, n):
        dom = graph_domain(n)
        for name in GRAPH_PROPERTIES:
            pred = builtin_graph_property(name, n)
            assert brute_count_predicate(pred, dom) == GRAPH_COUNTS[n][name], name

    @pytest.mark.parametrize("name,count", sorted(GRAPH_COUNTS_4.items()))
    def test_four_node_counts(self, name, count):
        dom = graph_domain(4)
        assert brute_count_predicate(builtin_graph_property(name, 4), dom) == count

    def test_reflexive_on_complete_and_empty_graph(self):
        dom = graph_domain(4)
        pred = builtin_graph_property("reflexive", 4)
        assert eval_predicate(pred, (1,) * 16, dom) is True
        assert eval_predicate(pred, (0,) * 16, dom) is False

    def test_transitive_missing_edge(self):
        dom = graph_domain(4)
        pred = builtin_graph_property("transitive", 4)
        g = [0] * 16
        g[0 * 4 + 1] = 1
        g[1 * 4 + 2] = 1
        assert eval_predicate(pred, tuple(g), dom) is False
        g[0 * 4 + 2] = 1
        assert eval_predicate(pred, tuple(g), dom) is True

    def test_partialorder_contained_in_preorder(self):
        # satisfying-set containment checked pointwise at n=4
        dom = graph_domain(4)
        po = builtin_graph_property("partialorder", 4)
        pre = builtin_graph_property("preorder", 4)
        for pt in enumerate_domain(dom):
            if po.evaluate(pt):
                assert pre.evaluate(pt)

    def test_unknown_name(self):
        with pytest.raises(PredicateError, match="unknown graph property"):
            builtin_graph_property("symmetric-ish", 3)

    def test_bad_node_count(self):
        with pytest.raises(ModelError):
            builtin_graph_property("reflexive", 0)


class TestParser:
    def test_conjunction(self):
        dom = make_domain([(0, 7), (0, 7)])
        pred = parse_predicate("f0 <= 3 && f1 = 0", dom)
        assert isinstance(pred, And)
        assert eval_predicate(pred, (3, 0), dom) is True
        assert eval_predicate(pred, (4, 0), dom) is False

    def test_quantifier_expansion(self):
        dom = graph_domain(2)
        pred = parse_predicate("forall i in [0,2): e[i][i] = 1", dom)
        assert pred == And((CmpConst("=", 0, 1), CmpConst("=", 3, 1)))

    def test_unknown_feature(self):
        dom = make_domain([(0, 1)] * 4)
        with pytest.raises(PredicateError, match="unknown feature"):
            parse_predicate("f9 <= 1", dom)

    def test_syntax_error_carries_position(self):
        dom = make_domain([(0, 1)])
        with pytest.raises(PredicateError, match="position"):
            parse_predicate("f0 <= ", dom)

    def test_non_constant_bound(self):
        dom = graph_domain(2)
        with pytest.raises(PredicateError, match="constant"):
            parse_predicate("forall i in [0,n): e[i][i] = 1", dom)

    def test_exists_and_implies(self):
        dom = graph_domain(2)
        pred = parse_predicate("exists i in [0,2): e[i][i] = 1", dom)
        assert eval_predicate(pred, (1, 0, 0, 0), dom) is True
        assert eval_predicate(pred, (0, 1, 1, 0), dom) is False
        imp = parse_predicate("e[0][0] = 1 => e[1][1] = 1", dom)
        assert eval_predicate(imp, (0, 0, 0, 0), dom) is True
        assert eval_predicate(imp, (1, 0, 0, 0), dom) is False

    def test_multi_binder_transitive_matches_builtin(self):
        dom = graph_domain(3)
        parsed = parse_predicate(
            "forall i, j, k in [0,3): e[i][j] = 1 && e[j][k] = 1 => e[i][k] = 1", dom
        )
        builtin = builtin_graph_property("transitive", 3)
        for pt in enumerate_domain(dom):
            assert parsed.evaluate(pt) == builtin.evaluate(pt)

    def test_feature_to_feature_comparison(self):
        dom = make_domain([(0, 5), (2, 4)])
        pred = parse_predicate("f0 < f1", dom)
        for pt in enumerate_domain(dom):
            assert eval_predicate(pred, pt, dom) == (pt[0] < pt[1])

    def test_booleans_and_parens(self):
        dom = make_domain([(0, 3)])
        pred = parse_predicate("!(f0 >= 2) || false", dom)
        assert eval_predicate(pred, (1,), dom) is True
        assert eval_predicate(pred, (2,), dom) is False

    def test_trailing_garbage(self):
        dom = make_domain([(0, 3)])
        with pytest.raises(PredicateError, match="trailing"):
            parse_predicate("f0 <= 1 f0", dom)

    def test_parenthesized_quantifier_inside_expression(self):
        dom = graph_domain(2)
        pred = parse_predicate("(forall i in [0,2): e[i][i] = 1) || e[0][1] = 1", dom)
        assert eval_predicate(pred, (1, 0, 0, 1), dom) is True
        assert eval_predicate(pred, (0, 1, 0, 0), dom) is True
        assert eval_predicate(pred, (0, 0, 1, 0), dom) is False

    def test_negative_constants(self):
        dom = make_domain([(-5, 5)])
        pred = parse_predicate("f0 <= -2 || f0 = 4", dom)
        for v in range(-5, 6):
            assert eval_predicate(pred, (v,), dom) == (v <= -2 or v == 4)


class TestRegion:
    def test_interior_point(self):
        dom = make_domain([(0, 255)] * 4)
        reg = region((10, 10, 10, 10), 1, dom)
        assert reg.size() == 81

    def test_clipped_at_boundary(self):
        dom = make_domain([(0, 255)] * 4)
        reg = region((0, 10, 10, 10), 1, dom)
        assert reg.size() == 2 * 27

    def test_epsilon_zero(self):
        dom = make_domain([(0, 255)] * 4)
        assert region((1, 2, 3, 4), 0, dom).size() == 1

    def test_size_matches_enumeration(self):
        dom = make_domain([(0, 7), (3, 5), (0, 0)])
        for center in [(0, 3, 0), (7, 5, 0), (4, 4, 0)]:
            for eps in (0, 1, 2, 9):
                reg = region(center, eps, dom)
                members = [pt for pt in enumerate_domain(dom) if reg.contains(pt)]
                assert len(members) == reg.size()
                assert sorted(members) == sorted(reg.points())

    def test_center_out_of_domain(self):
        dom = make_domain([(0, 3)])
        with pytest.raises(ModelError):
            region((4,), 1, dom)

    def test_negative_epsilon(self):
        dom = make_domain([(0, 3)])
        with pytest.raises(ModelError):
            region((1,), -1, dom)


class TestSafetyProperty:
    def test_allow_list(self):
        dom = make_domain([(0, 1)])
        prop = load_safety_property({"pre": "f0 <= 0", "allow": [1]}, dom, 2)
        assert prop.allowed == frozenset({1})

    def test_deny_list(self):
        dom = make_domain([(0, 1)])
        prop = load_safety_property({"pre": "true", "deny": [2]}, dom, 3)
        assert prop.allowed == frozenset({0, 1})

    def test_label_out_of_range(self):
        dom = make_domain([(0, 1)])
        with pytest.raises(ModelError):
            load_safety_property({"pre": "true", "allow": [5]}, dom, 2)
