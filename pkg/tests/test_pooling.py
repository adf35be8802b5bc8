import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bridges
from topopool import pooling
from topopool.autodiff import Var, grad_check
from topopool.errors import ParameterError
from topopool.filtration import MlpFiltration, init_mlp_filtration
from topopool.graph import Graph, complete, laplacian_features, random_graph, ring
from topopool.metrics import topo_loss_var
from topopool.pooling import (
    PoolingConfig,
    assignment,
    aux_losses,
    base_pool_forward,
    cluster_counts,
    coarsen,
    degree_normalize,
    init_params,
    message_pass,
    minmax_normalize,
    persistence_injection,
    resample,
    sample_binary_concrete,
    tip_forward,
)


def with_features(g, k=4):
    return g.with_features(laplacian_features(g, min(k, g.n)))


def linear_phi(weights):
    w = np.asarray(weights, dtype=float).reshape(-1, 1)
    return MlpFiltration([(w, np.zeros(1))])


def logit(p):
    return np.log(p / (1 - p))


class TestConfig:
    def test_validation(self):
        with pytest.raises(ParameterError):
            PoolingConfig(method="topk")
        with pytest.raises(ParameterError):
            PoolingConfig(pool_ratio=0.0)
        with pytest.raises(ParameterError):
            PoolingConfig(tau=0.0)

    def test_ablations(self):
        cfg = PoolingConfig().with_ablations(["NR", "no_injection", "W"])
        assert cfg.no_resample and cfg.no_injection and cfg.wasserstein_loss and not cfg.no_topo_loss
        with pytest.raises(ParameterError):
            PoolingConfig().with_ablations(["XX"])

    def test_cluster_counts(self):
        assert cluster_counts(64, PoolingConfig(pool_ratio=0.25)) == [16]
        assert cluster_counts(10, PoolingConfig(pool_ratio=0.25, num_layers=3)) == [3, 1, 1]
        assert cluster_counts(6, PoolingConfig(pool_ratio=0.25)) == [2]


class TestMessagePass:
    def test_isolated_node_identity(self):
        out = message_pass(np.zeros((1, 1)), np.array([[0.3, -2.0]]), [(np.eye(2), np.zeros(2))])
        np.testing.assert_allclose(out.value, np.tanh([[0.3, -2.0]]))

    def test_zero_weights_give_bias(self):
        X = np.random.default_rng(0).normal(size=(4, 3))
        out = message_pass(ring(4).adjacency(), X, [(np.zeros((3, 2)), np.array([0.5, -1.0]))], activation="linear")
        np.testing.assert_allclose(out.value, np.tile([0.5, -1.0], (4, 1)))

    def test_path2_mean(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        X = np.array([[1.0, 0.0], [3.0, 2.0]])
        W = np.array([[1.0, 2.0], [0.5, -1.0]])
        out = message_pass(A, X, [(W, np.zeros(2))], activation="linear")
        np.testing.assert_allclose(out.value, np.tile(X.mean(axis=0) @ W, (2, 1)))

    def test_shape_errors(self):
        with pytest.raises(ParameterError):
            message_pass(np.zeros((3, 3)), np.zeros((2, 1)), [])
        with pytest.raises(ParameterError):
            message_pass(np.zeros((2, 2)), np.zeros((2, 3)), [(np.zeros((2, 2)), np.zeros(2))])


class TestAssignmentCoarsen:
    def test_zero_logits_uniform(self):
        np.testing.assert_allclose(assignment(np.zeros((3, 4))).value, 0.25)

    def test_closed_form(self):
        S = assignment(np.array([[10.0, 0.0]])).value
        np.testing.assert_allclose(S, [[1 / (1 + np.exp(-10)), 1 / (1 + np.exp(10))]])
        assert S[0, 0] == pytest.approx(0.99995, abs=1e-5)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_rows_stochastic(self, seed):
        g = with_features(random_graph(9, 0.4, seed=seed))
        cfg = PoolingConfig(pool_ratio=0.5)
        res = tip_forward(g, init_params(4, 9, cfg, np.random.default_rng(seed)), cfg, np.random.default_rng(seed))
        S = res.output.S.value
        np.testing.assert_allclose(S.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(S > 0)

    def test_identity(self):
        A, X = ring(5).adjacency(), np.arange(10.0).reshape(5, 2)
        Ap, Xp = coarsen(A, X, np.eye(5))
        np.testing.assert_array_equal(Ap.value, A)
        np.testing.assert_array_equal(Xp.value, X)

    def test_all_ones_column(self):
        Ap, _ = coarsen(ring(4).adjacency(), np.zeros((4, 1)), np.ones((4, 1)))
        assert Ap.value.tolist() == [[8.0]]

    def test_block_sums(self):
        S = np.array([[1.0, 0], [1, 0], [0, 1], [0, 1]])
        Ap, _ = coarsen(ring(4).adjacency(), np.zeros((4, 1)), S)
        assert Ap.value.tolist() == [[2.0, 2.0], [2.0, 2.0]]

    def test_permutation_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            A = (rng.random((7, 7)) < 0.4).astype(float)
            A = np.triu(A, 1) + np.triu(A, 1).T
            X, S = rng.normal(size=(7, 3)), assignment(rng.normal(size=(7, 3))).value
            P = np.eye(7)[rng.permutation(7)]
            a1, x1 = coarsen(A, X, S)
            a2, x2 = coarsen(P @ A @ P.T, P @ X, P @ S)
            np.testing.assert_allclose(a1.value, a2.value, atol=1e-12)
            np.testing.assert_allclose(x1.value, x2.value, atol=1e-12)


class TestAuxLosses:
    def test_one_hot_entropy(self):
        S = np.eye(3)[[0, 1, 2, 1]]
        _, L_c = aux_losses("diffpool", ring(4).adjacency(), S)
        assert abs(L_c.value) < 1e-12

    def test_uniform_entropy(self):
        _, L_c = aux_losses("diffpool", ring(6).adjacency(), np.full((6, 3), 1 / 3))
        assert L_c.value == pytest.approx(np.log(3))

    def test_diffpool_link_loss(self):
        A = ring(4).adjacency()
        S = np.full((4, 2), 0.5)
        L_r, _ = aux_losses("diffpool", A, S)
        assert L_r.value == pytest.approx(np.linalg.norm(A - S @ S.T))

    def test_mincut_identity(self):
        L_r, L_c = aux_losses("mincut", ring(5).adjacency(), np.eye(5))
        assert abs(L_r.value) < 1e-12 and abs(L_c.value) < 1e-12

    def test_mincut_perfect_cut(self):
        # two disjoint triangles, S = their indicator: cut ratio -1
        A = np.zeros((6, 6))
        for a, b in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]:
            A[a, b] = A[b, a] = 1
        S = np.eye(2)[[0, 0, 0, 1, 1, 1]]
        L_r, L_c = aux_losses("mincut", A, S)
        assert L_r.value == pytest.approx(-1.0) and abs(L_c.value) < 1e-12

    def test_dmon_modularity(self):
        A = np.zeros((6, 6))
        for a, b in [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]:
            A[a, b] = A[b, a] = 1
        S = np.eye(2)[[0, 0, 0, 1, 1, 1]]
        L_r, L_c = aux_losses("dmon", A, S)
        # modularity of the two-triangle split is 1/2
        assert L_r.value == pytest.approx(-0.5)
        assert L_c.value == pytest.approx(np.sqrt(2) / 6 * np.sqrt(18) - 1.0)

    def test_unknown(self):
        with pytest.raises(ParameterError):
            aux_losses("graclus", np.eye(2), np.eye(2))

    @pytest.mark.parametrize("method", ["diffpool", "mincut", "dmon"])
    def test_gradients(self, method):
        rng = np.random.default_rng(1)
        A = random_graph(6, 0.5, seed=2).adjacency()
        rep = grad_check(lambda p: sum(aux_losses(method, A, assignment(p["z"])), Var(0.0)),
                         {"z": rng.normal(size=(6, 3))})
        assert rep.max_rel_error < 1e-5


class TestNormalizeResample:
    def test_minmax(self):
        np.testing.assert_allclose(minmax_normalize(np.array([2.0, 4.0, 3.0])).value, [0.0, 1.0, 0.5])
        assert np.all(minmax_normalize(np.full(4, 0.3)).value == 0)

    def test_degree_normalize(self):
        A = np.array([[5.0, 1.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        out = degree_normalize(A).value
        assert out[0, 0] == 0
        assert out[0, 1] == pytest.approx(1 / np.sqrt(2))

    def test_p_one_always_edge(self):
        rng = np.random.default_rng(0)
        _, hard, _ = sample_binary_concrete(np.array([1.0, 0.0]), 1.0, rng.gumbel(size=(2, 2)))
        assert hard.tolist() == [1.0, 0.0]

    def test_constant_only_self_loops(self):
        out = resample(np.full((4, 4), 0.7), 1.0, np.random.default_rng(0))
        np.testing.assert_array_equal(out.value, np.eye(4))

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
    def test_marginal(self, p):
        rng = np.random.default_rng(11)
        draws = 10_000
        _, hard, _ = sample_binary_concrete(np.full(draws, p), 0.1, rng.gumbel(size=(2, draws)))
        assert abs(hard.mean() - p) < 0.02

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.booleans())
    def test_resample_structure(self, seed, hard):
        rng = np.random.default_rng(seed)
        A = rng.random((6, 6))
        out = resample(A + A.T, 0.5, rng, hard=hard).value
        np.testing.assert_array_equal(out, out.T)
        np.testing.assert_array_equal(np.diag(out), 1.0)
        if hard:
            assert set(np.unique(out)) <= {0.0, 1.0}

    def test_seeded(self):
        A = np.random.default_rng(0).random((5, 5))
        a = resample(A, 1.0, np.random.default_rng(4)).value
        b = resample(A, 1.0, np.random.default_rng(4)).value
        np.testing.assert_array_equal(a, b)

    def test_straight_through_gradient(self):
        from topopool.autodiff import Tape

        A0 = np.random.default_rng(1).random((4, 4))
        weights = np.random.default_rng(2).normal(size=(4, 4))

        def grads(straight):
            tape = Tape()
            A = tape.param(A0, "A")
            out = resample(A, 1.0, np.random.default_rng(3), hard=True, straight=straight)
            return tape.backward((out * weights).sum())["A"]

        def soft_grads():
            tape = Tape()
            A = tape.param(A0, "A")
            out = resample(A, 1.0, np.random.default_rng(3), hard=False)
            return tape.backward((out * weights).sum())["A"]

        np.testing.assert_allclose(grads(True), soft_grads())
        assert np.all(grads(False) == 0)


class TestInjection:
    def test_tree_all_zero(self):
        g = Graph.from_edges(5, [(0, 1), (1, 2), (1, 3), (3, 4)])
        A = g.adjacency() + np.eye(5)
        out = persistence_injection(A, np.arange(5.0).reshape(5, 1), linear_phi([0.3]))
        assert np.all(out.value == 0)

    def test_triangle(self):
        A = complete(3).adjacency() + np.eye(3)
        X = logit(np.array([0.1, 0.2, 0.3])).reshape(3, 1)
        out = persistence_injection(A, X, linear_phi([1.0])).value
        expected = np.zeros((3, 3))
        expected[1, 2] = expected[2, 1] = 0.7
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_retain_self_loops(self):
        A = complete(3).adjacency() + np.eye(3)
        X = logit(np.array([0.1, 0.2, 0.3])).reshape(3, 1)
        out = persistence_injection(A, X, linear_phi([1.0]), retain_self_loops=True).value
        np.testing.assert_allclose(np.diag(out), 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_bridges_zero_and_range(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 12))
        g = random_graph(n, float(rng.uniform(0.15, 0.6)), seed=seed)
        A = g.adjacency() + np.eye(n)
        X = rng.normal(size=(n, 3))
        out = persistence_injection(A, X, init_mlp_filtration(3, rng)).value
        assert np.all(out >= 0) and np.all(out <= 1)
        assert np.all(out[A == 0] == 0)
        assert np.all(np.diag(out) == 0)
        np.testing.assert_array_equal(out, out.T)
        for u, v in bridges(n, [(a, b) for a, b, _ in g.edges]):
            assert out[u, v] == 0.0


class TestTipForward:
    def test_ring_clusters_and_stats(self):
        g = with_features(ring(64), 10)
        cfg = PoolingConfig(num_layers=2)
        res = tip_forward(g, init_params(10, 64, cfg, np.random.default_rng(0)), cfg, np.random.default_rng(1))
        assert [l.S.shape for l in res.layers] == [(64, 16), (16, 4)]
        assert res.stats0 is not None and len(res.stats) == 2
        assert all(s.shape == (38,) for s in res.stats + [res.stats0])

    def test_layer_outputs_invariants(self):
        g = with_features(random_graph(12, 0.4, seed=5))
        cfg = PoolingConfig(pool_ratio=0.5)
        out = tip_forward(g, init_params(4, 12, cfg, np.random.default_rng(0)), cfg, np.random.default_rng(0)).output
        R, J = out.A_resampled.value, out.A_injected.value
        assert set(np.unique(R)) <= {0.0, 1.0} and np.all(np.diag(R) == 1)
        assert np.all((J >= 0) & (J <= 1)) and np.all(J[R == 0] == 0)

    def test_identity_composition(self, monkeypatch):
        g = with_features(random_graph(8, 0.5, seed=1))
        monkeypatch.setattr(pooling, "assignment", lambda logits: Var(np.eye(logits.shape[0])))
        cfg = PoolingConfig(pool_ratio=1.0).with_ablations(["NR", "NP"])
        res = tip_forward(g, init_params(4, 8, cfg, np.random.default_rng(0)), cfg, np.random.default_rng(0))
        np.testing.assert_array_equal(res.output.A_out.value, g.adjacency())

    @pytest.mark.parametrize("method", ["diffpool", "mincut", "dmon"])
    def test_ablation_identity(self, method):
        g = with_features(random_graph(10, 0.4, seed=3))
        cfg = PoolingConfig(method=method, pool_ratio=0.5, num_layers=2).with_ablations(["NR", "NP", "NL"])
        params = init_params(4, 10, cfg, np.random.default_rng(2))
        tip = tip_forward(g, params, cfg, np.random.default_rng(9))
        base = base_pool_forward(g, params, cfg)
        for a, b in zip(tip.layers, base):
            for field in ("S", "A_pool", "X_pool", "A_out", "L_r", "L_c"):
                np.testing.assert_array_equal(getattr(a, field).value, getattr(b, field).value)

    def test_seeded_determinism(self):
        g = with_features(ring(12))
        cfg = PoolingConfig()
        params = init_params(4, 12, cfg, np.random.default_rng(0))
        a = tip_forward(g, params, cfg, np.random.default_rng(5)).output.A_out.value
        b = tip_forward(g, params, cfg, np.random.default_rng(5)).output.A_out.value
        np.testing.assert_array_equal(a, b)

    def test_dim0_stats_width(self):
        g = with_features(ring(12))
        cfg = PoolingConfig(use_dim0=True)
        res = tip_forward(g, init_params(4, 12, cfg, np.random.default_rng(0)), cfg, np.random.default_rng(0))
        assert res.stats0.shape == (76,)

    @pytest.mark.parametrize("method", ["diffpool", "mincut", "dmon"])
    def test_topo_loss_gradients(self, method):
        g = with_features(random_graph(8, 0.4, seed=3))
        cfg = PoolingConfig(method=method, pool_ratio=0.5, phi_hidden=4, straight_through=False)
        params = init_params(4, 8, cfg, np.random.default_rng(0))

        def fn(p):
            res = tip_forward(g, p, cfg, np.random.default_rng(7))
            return topo_loss_var(res.stats, res.stats0)

        rep = grad_check(fn, params)
        assert rep.max_rel_error < 1e-4 and rep.coverage >= 0.95
