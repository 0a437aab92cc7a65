import numpy as np
import pytest

from socialrisk.causal import (
    CausalGraph,
    CITestConfig,
    ci_test,
    fisher_z_test,
    lasso_linear,
    meek_closure,
    mgm_prefilter,
    orient_v_structures,
    pc_skeleton,
    pc_stable,
    select_causal_features,
)
from socialrisk.errors import SocialriskError

from oracles import cpdag_by_orientation_enumeration


def sem_data(n_nodes, edges, n_rows, seed, coef=0.8, noise=1.0):
    """Linear-Gaussian draws from a DAG given as (parent, child) index pairs."""
    rng = np.random.default_rng(seed)
    parents = {v: [] for v in range(n_nodes)}
    for a, b in edges:
        parents[b].append(a)
    order = []
    remaining = set(range(n_nodes))
    while remaining:
        ready = sorted(v for v in remaining if all(p in order for p in parents[v]))
        assert ready, "edge list must be acyclic"
        order.append(ready[0])
        remaining.discard(ready[0])
    x = np.zeros((n_rows, n_nodes))
    for v in order:
        x[:, v] = noise * rng.standard_normal(n_rows)
        for p in parents[v]:
            x[:, v] += coef * x[:, p]
    return x


def names_for(k):
    return [f"x{j}" for j in range(k)]


def lines_from_indices(directed, undirected):
    lines = [f"x{a} -> x{b}" for a, b in directed]
    lines += [f"x{a} -- x{b}" for a, b in (sorted(e) for e in undirected)]
    return sorted(lines)


class TestFisherZ:
    def test_matches_manual_partial_correlation(self):
        rng = np.random.default_rng(0)
        z = rng.standard_normal(500)
        a = 0.7 * z + rng.standard_normal(500)
        b = -0.4 * z + rng.standard_normal(500)
        data = np.column_stack([a, b, z])
        design = np.column_stack([np.ones(500), z])
        ra = a - design @ np.linalg.lstsq(design, a, rcond=None)[0]
        rb = b - design @ np.linalg.lstsq(design, b, rcond=None)[0]
        r = (ra @ rb) / np.sqrt((ra @ ra) * (rb @ rb))
        from scipy.stats import norm

        expected = 2 * norm.sf(abs(np.arctanh(r)) * np.sqrt(500 - 1 - 3))
        assert fisher_z_test(data, 0, 1, [2]) == pytest.approx(expected, rel=1e-12)

    def test_direction_of_evidence(self):
        data = sem_data(3, [(0, 1), (1, 2)], 4000, seed=5)
        assert fisher_z_test(data, 0, 2, []) < 1e-6  # marginally dependent
        assert fisher_z_test(data, 0, 2, [1]) > 0.01  # screened off by the middle node

    def test_too_small_sample_rejected(self):
        data = np.random.default_rng(1).standard_normal((5, 4))
        with pytest.raises(SocialriskError):
            fisher_z_test(data, 0, 1, [2, 3])


class TestCITest:
    def test_identical_columns_dependent(self):
        col = np.random.default_rng(2).standard_normal(200)
        data = np.column_stack([col, col])
        res = ci_test(data, 0, 1, [], CITestConfig())
        assert not res.independent
        assert res.p_value < 1e-12

    def test_independence_is_p_at_least_alpha(self):
        rng = np.random.default_rng(6)
        data = rng.standard_normal((400, 2))
        p = fisher_z_test(data, 0, 1, [])
        # alpha exactly at the p-value: the tie counts as independent
        assert ci_test(data, 0, 1, [], CITestConfig(alpha=p)).independent
        assert not ci_test(
            data, 0, 1, [], CITestConfig(alpha=np.nextafter(p, 1.0))
        ).independent

    def test_chain_screening(self):
        data = sem_data(3, [(0, 1), (1, 2)], 5000, seed=31)
        cfg = CITestConfig(alpha=0.01)
        assert not ci_test(data, 0, 2, [], cfg).independent
        assert ci_test(data, 0, 2, [1], cfg).independent

    def test_size_under_the_null(self):
        # independent columns should be called independent at least 95 times
        # out of 100 at alpha = 0.01
        cfg = CITestConfig(alpha=0.01)
        hits = 0
        for seed in range(100):
            data = np.random.default_rng(seed).standard_normal((5000, 2))
            hits += ci_test(data, 0, 1, [], cfg).independent
        assert hits >= 95

    def test_collinear_conditioning_rejected(self):
        rng = np.random.default_rng(4)
        z = rng.standard_normal(300)
        data = np.column_stack([rng.standard_normal(300), rng.standard_normal(300), z, z])
        with pytest.raises(SocialriskError, match="collinear"):
            ci_test(data, 0, 1, [2, 3], CITestConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError, match="alpha"):
            CITestConfig(alpha=0.0)
        with pytest.raises(ValueError, match="kind"):
            CITestConfig(kind="chi2")
        with pytest.raises(SocialriskError, match="cap"):
            ci_test(
                np.random.default_rng(0).standard_normal((100, 3)),
                0,
                1,
                [2],
                CITestConfig(max_cond=0),
            )


class TestLassoLinear:
    def test_zero_penalty_matches_least_squares(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((200, 4))
        y = x @ np.array([1.0, -2.0, 0.5, 0.0]) + 0.3 + 0.1 * rng.standard_normal(200)
        w, b = lasso_linear(x, y, l1=0.0)
        design = np.column_stack([np.ones(200), x])
        ref = np.linalg.lstsq(design, y, rcond=None)[0]
        assert b == pytest.approx(ref[0], abs=1e-7)
        np.testing.assert_allclose(w, ref[1:], atol=1e-7)

    def test_heavy_penalty_zeroes_everything(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((100, 3))
        y = x[:, 0] + rng.standard_normal(100)
        w, b = lasso_linear(x, y, l1=50.0)
        np.testing.assert_array_equal(w, 0.0)
        assert b == pytest.approx(y.mean())

    def test_kkt_conditions_at_solution(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((300, 5))
        y = x @ np.array([2.0, 0.0, -1.0, 0.0, 0.0]) + rng.standard_normal(300)
        l1 = 0.2
        w, b = lasso_linear(x, y, l1=l1)
        resid = y - b - x @ w
        grad = x.T @ resid / 300
        for j in range(5):
            if w[j] == 0.0:
                assert abs(grad[j]) <= l1 + 1e-8
            else:
                assert grad[j] == pytest.approx(l1 * np.sign(w[j]), abs=1e-8)


class TestPrefilter:
    def test_chain_neighbors_survive(self):
        data = sem_data(3, [(0, 1), (1, 2)], 3000, seed=7)
        edges = mgm_prefilter(data, names_for(3), penalty=0.05)
        assert frozenset(("x0", "x1")) in edges
        assert frozenset(("x1", "x2")) in edges

    def test_binary_column_goes_through_logistic_path(self):
        data = sem_data(3, [(0, 1)], 2000, seed=8)
        data[:, 2] = (data[:, 0] + 0.5 * np.random.default_rng(8).standard_normal(2000) > 0).astype(float)
        edges = mgm_prefilter(data, names_for(3), penalty=0.05)
        assert frozenset(("x0", "x2")) in edges

    def test_unrelated_column_dropped(self):
        rng = np.random.default_rng(9)
        data = np.column_stack(
            [
                rng.standard_normal(4000),
                rng.standard_normal(4000),
            ]
        )
        data = np.column_stack([data, data[:, 0] * 0.9 + 0.3 * rng.standard_normal(4000)])
        edges = mgm_prefilter(data, names_for(3), penalty=0.1)
        assert frozenset(("x0", "x2")) in edges
        assert frozenset(("x0", "x1")) not in edges

    def test_constant_column_named_in_error(self):
        data = np.random.default_rng(10).standard_normal((500, 3))
        data[:, 1] = 4.2
        with pytest.raises(ValueError, match="x1"):
            mgm_prefilter(data, names_for(3), penalty=0.1)

    def test_small_sample_warns(self):
        data = np.random.default_rng(11).standard_normal((30, 3))
        with pytest.warns(RuntimeWarning, match="10 rows per node"):
            mgm_prefilter(data, names_for(3), penalty=0.5)


class TestSkeleton:
    def test_chain_skeleton_and_sepset(self):
        data = sem_data(3, [(0, 1), (1, 2)], 6000, seed=11)
        adj, sepsets, n_tests = pc_skeleton(data, names_for(3), alpha=0.01)
        assert adj["x0"] == {"x1"}
        assert adj["x2"] == {"x1"}
        assert sepsets[("x0", "x2")] == ("x1",)
        assert n_tests > 0

    def test_candidate_edges_restrict_tests(self):
        data = sem_data(3, [(0, 1), (1, 2)], 2000, seed=12)
        allowed = {frozenset(("x0", "x1"))}
        adj, sepsets, _ = pc_skeleton(data, names_for(3), candidate_edges=allowed)
        assert adj["x1"] == {"x0"}
        assert ("x1", "x2") not in sepsets  # never tested, so never recorded


class TestOrientation:
    def test_collider_detected(self):
        data = sem_data(3, [(0, 2), (1, 2)], 6000, seed=13)
        result = pc_stable(data, names_for(3), alpha=0.01)
        assert result.graph.directed == {("x0", "x2"), ("x1", "x2")}
        assert result.graph.undirected == set()

    def test_chain_stays_undirected(self):
        data = sem_data(3, [(0, 1), (1, 2)], 6000, seed=14)
        result = pc_stable(data, names_for(3), alpha=0.01)
        assert result.graph.directed == set()
        assert result.graph.undirected == {
            frozenset(("x0", "x1")),
            frozenset(("x1", "x2")),
        }

    def test_conflicting_proposals_stay_undirected(self):
        adjacency = {
            "a": {"b", "d"},
            "b": {"a", "c"},
            "c": {"b"},
            "d": {"a"},
        }
        sepsets = {("a", "c"): (), ("b", "d"): ()}
        directed, undirected = orient_v_structures(adjacency, sepsets)
        assert ("c", "b") in directed and ("d", "a") in directed
        assert frozenset(("a", "b")) in undirected

    def test_missing_sepset_is_skipped(self):
        # Collider ground truth, but the candidate set hides the (x0, x1)
        # pair from testing, so no separating set exists and nothing orients.
        data = sem_data(3, [(0, 2), (1, 2)], 4000, seed=15)
        allowed = {frozenset(("x0", "x2")), frozenset(("x1", "x2"))}
        result = pc_stable(data, names_for(3), candidate_edges=allowed)
        assert result.graph.directed == set()
        assert len(result.graph.undirected) == 2


class TestMeekRules:
    def test_rule_one_propagates_past_collider(self):
        directed, undirected = meek_closure(
            ["a", "b", "c"], {("a", "b")}, {frozenset(("b", "c"))}
        )
        assert ("b", "c") in directed
        assert not undirected

    def test_rule_two_closes_triangle(self):
        directed, undirected = meek_closure(
            ["a", "b", "c"],
            {("a", "b"), ("b", "c")},
            {frozenset(("a", "c"))},
        )
        assert ("a", "c") in directed

    def test_rule_three_kite(self):
        directed, undirected = meek_closure(
            ["a", "b", "c", "d"],
            {("c", "b"), ("d", "b")},
            {frozenset(("a", "b")), frozenset(("a", "c")), frozenset(("a", "d"))},
        )
        assert ("a", "b") in directed
        assert frozenset(("a", "c")) in undirected
        assert frozenset(("a", "d")) in undirected

    def test_rule_four_chain_with_shield(self):
        directed, undirected = meek_closure(
            ["w", "x", "y", "z"],
            {("z", "w"), ("w", "y")},
            {frozenset(("x", "y")), frozenset(("x", "z")), frozenset(("x", "w"))},
        )
        assert ("x", "y") in directed
        assert frozenset(("x", "z")) in undirected
        assert frozenset(("x", "w")) in undirected


class TestAgainstEnumerationOracle:
    FIXTURES = [
        (3, [(0, 1), (1, 2)], 100),
        (3, [(0, 2), (1, 2)], 101),
        (4, [(0, 1), (2, 1), (1, 3)], 102),
        (4, [(0, 1), (0, 2), (1, 3), (2, 3)], 103),
        (5, [(0, 2), (1, 2), (2, 3), (3, 4)], 104),
    ]

    @pytest.mark.parametrize("n_nodes,edges,seed", FIXTURES)
    def test_recovers_equivalence_class(self, n_nodes, edges, seed):
        data = sem_data(n_nodes, edges, 20000, seed=seed)
        result = pc_stable(data, names_for(n_nodes), alpha=0.01)
        skeleton = {frozenset(e) for e in edges}
        directed, undirected = cpdag_by_orientation_enumeration(
            n_nodes, skeleton, set(edges)
        )
        assert result.graph.edge_lines() == lines_from_indices(directed, undirected)

    def test_column_order_has_no_effect(self):
        n_nodes, edges = 4, [(0, 1), (2, 1), (1, 3)]
        data = sem_data(n_nodes, edges, 15000, seed=21)
        base = pc_stable(data, names_for(n_nodes), alpha=0.01)
        perm = [2, 0, 3, 1]
        permuted = pc_stable(
            data[:, perm], [f"x{j}" for j in perm], alpha=0.01
        )
        assert permuted.graph.edge_lines() == base.graph.edge_lines()

    def test_acyclicity_assertion_fires_on_bad_graph(self):
        graph = CausalGraph(
            nodes=["a", "b", "c"],
            directed={("a", "b"), ("b", "c"), ("c", "a")},
            undirected=set(),
        )
        with pytest.raises(AssertionError, match="cycle"):
            graph.assert_acyclic()


class TestFeatureSelection:
    def test_union_order_and_ties(self):
        a = ["f1", "f2", "f3"]
        b = ["f4", "f2", "f5"]
        # min rank: f1/f4 at 0, f2 at 1 both lists, f3/f5 at 2.
        out = select_causal_features(a, b, top_k=3)
        assert out == ["f1", "f4", "f2", "f3", "f5"]

    def test_rank_sum_breaks_min_rank_ties(self):
        a = ["f1", "f2"]
        b = ["f2", "f1"]
        # both have min rank 0; f1 sum 0+1 equals f2 sum 1+0; name decides
        assert select_causal_features(a, b, top_k=2) == ["f1", "f2"]

    def test_top_k_truncation(self):
        a = [f"a{i}" for i in range(30)]
        with pytest.warns(RuntimeWarning, match="exceeds"):
            out = select_causal_features(a, [], top_k=15)
        assert len(out) == 15
        assert out[0] == "a0" and out[-1] == "a14"

    def test_dummies_collapse_to_source_feature(self):
        a = ["housing=unknown", "age", "housing=stable"]
        b = ["cci", "housing=stable"]
        source = {"housing=unknown": "housing", "housing=stable": "housing"}
        with pytest.warns(RuntimeWarning, match="exceeds"):
            out = select_causal_features(a, b, top_k=3, source_of=source)
        # housing and cci both hold a best rank of 0, but housing is ranked
        # in both lists, so the rank-sum tie-break puts it first
        assert out == ["housing", "cci", "age"]

    def test_two_top15_lists_can_yield_18(self):
        shared = [f"s{i}" for i in range(12)]
        a = shared + ["a0", "a1", "a2"]
        b = shared + ["b0", "b1", "b2"]
        assert len(select_causal_features(a, b, top_k=15)) == 18

    def test_identical_and_disjoint_lists(self):
        a = [f"f{i}" for i in range(15)]
        assert len(select_causal_features(a, a, top_k=15)) == 15
        b = [f"g{i}" for i in range(15)]
        assert len(select_causal_features(a, b, top_k=15)) == 30


class TestSinkNode:
    def test_outcome_edges_point_inward(self):
        # Markov-equivalent chain: undirected without the constraint, but the
        # designated sink pulls its one edge inward.
        data = sem_data(3, [(0, 1), (1, 2)], 6000, seed=33)
        plain = pc_stable(data, names_for(3), alpha=0.01)
        assert plain.graph.directed == set()
        pinned = pc_stable(data, names_for(3), alpha=0.01, sink_node="x2")
        assert ("x1", "x2") in pinned.graph.directed
        assert all(a != "x2" for a, _ in pinned.graph.directed)
        assert frozenset(("x0", "x1")) in pinned.graph.undirected

    def test_collider_child_unaffected(self):
        data = sem_data(3, [(0, 2), (1, 2)], 6000, seed=13)
        pinned = pc_stable(data, names_for(3), alpha=0.01, sink_node="x2")
        assert pinned.graph.directed == {("x0", "x2"), ("x1", "x2")}

    def test_unknown_sink_rejected(self):
        data = sem_data(3, [(0, 1)], 500, seed=1)
        with pytest.raises(ValueError, match="sink"):
            pc_stable(data, names_for(3), sink_node="outcome")
