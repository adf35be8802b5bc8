import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import wasserstein_brute
from topopool.autodiff import grad_check
from topopool.errors import ParameterError
from topopool.metrics import (
    DiagramStats,
    TransformConfig,
    diagram_stats,
    stats_vector,
    topo_loss,
    topo_loss_var,
    vectorize_points,
    wasserstein1,
    wasserstein1_var,
    wasserstein_matching,
    write_stats_csv,
)


def cfg_only(**kw):
    base = dict(triangle_samples=(), gaussian_points=(), gaussian_sigma=1.0, line_directions=(), line_biases=())
    base.update(kw)
    return TransformConfig(**base)


def diagrams(max_points=6):
    point = st.tuples(st.floats(0, 5), st.floats(0, 3)).map(lambda t: (t[0], t[0] + t[1]))
    return st.lists(point, max_size=max_points)


class TestTransforms:
    def test_triangle_tent(self):
        out = vectorize_points([0.0], [2.0], cfg_only(triangle_samples=(0.0, 1.0, 2.0)))
        np.testing.assert_allclose(out.value, [[0.0, 1.0, 0.0]])

    def test_gaussian_at_center(self):
        out = vectorize_points([0.0], [2.0], cfg_only(gaussian_points=((0.0, 2.0),), gaussian_sigma=1.0))
        assert out.value[0, 0] == pytest.approx(1.0)

    def test_gaussian_off_center(self):
        out = vectorize_points([1.0], [1.0], cfg_only(gaussian_points=((0.0, 0.0),), gaussian_sigma=2.0))
        assert out.value[0, 0] == pytest.approx(np.exp(-2.0 / 8.0))

    def test_line_projection(self):
        out = vectorize_points([0.3, 0.1], [0.9, 0.4], cfg_only(line_directions=((0.0, 1.0),), line_biases=(0.0,)))
        np.testing.assert_allclose(out.value[:, 0], [0.9, 0.4])

    def test_default_layout(self):
        cfg = TransformConfig.default(1.0)
        assert cfg.dim == 19
        assert cfg.gaussian_sigma == 0.25
        out = vectorize_points(np.zeros(4), np.ones(4), cfg)
        assert out.shape == (4, 19)

    def test_empty_grid_rejected(self):
        with pytest.raises(ParameterError):
            vectorize_points([0.0], [1.0], cfg_only())

    def test_gradients(self):
        cfg = TransformConfig.default(1.0)
        rng = np.random.default_rng(0)
        b = rng.uniform(0, 0.5, 5)
        d = b + rng.uniform(0.01, 0.5, 5)
        rep = grad_check(lambda p: (vectorize_points(p["b"], p["d"], cfg) ** 2).sum(), {"b": b, "d": d})
        assert rep.max_rel_error < 1e-6 and rep.coverage > 0.9


class TestStats:
    def test_single_vector(self):
        s = diagram_stats(np.array([[1.0, 2.0]]))
        np.testing.assert_array_equal(s.mean, [1.0, 2.0])
        np.testing.assert_array_equal(s.std, [0.0, 0.0])

    def test_population_std(self):
        s = diagram_stats(np.array([[0.0], [2.0]]))
        assert s.mean[0] == 1.0 and s.std[0] == 1.0

    def test_equal_rows_zero_std(self):
        s = diagram_stats(np.full((7, 3), 0.1))
        assert np.all(s.std == 0.0)

    def test_matches_numpy(self):
        h = np.random.default_rng(1).normal(size=(9, 4))
        s = diagram_stats(h)
        np.testing.assert_allclose(s.mean, h.mean(axis=0))
        np.testing.assert_allclose(s.std, h.std(axis=0))

    def test_unit_weights_match_unweighted(self):
        h = np.random.default_rng(2).normal(size=(6, 3))
        np.testing.assert_allclose(stats_vector(h, np.ones(6)).value, stats_vector(h).value, rtol=1e-14)

    def test_integer_weights_are_multiplicities(self):
        h = np.array([[0.0], [1.0], [5.0]])
        rep = np.array([[0.0], [0.0], [1.0], [5.0], [5.0], [5.0]])
        np.testing.assert_allclose(stats_vector(h, [2.0, 1.0, 3.0]).value, stats_vector(rep).value)

    def test_empty(self):
        with pytest.raises(ParameterError):
            stats_vector(np.zeros((0, 3)))

    def test_gradients(self):
        rng = np.random.default_rng(3)
        p = {"h": rng.normal(size=(5, 3)), "w": rng.uniform(0.5, 1.5, 5)}
        rep = grad_check(lambda q: (stats_vector(q["h"], q["w"]) ** 2).sum(), p)
        assert rep.max_rel_error < 1e-6


class TestTopoLoss:
    def test_identical(self):
        s = DiagramStats(np.array([0.1, 0.2]), np.array([0.3, 0.0]))
        assert topo_loss([s, s], s) == 0.0

    def test_constant_offset(self):
        s = DiagramStats(np.array([0.1, 0.2]), np.array([0.3, 0.0]))
        t = DiagramStats(s.mean + 0.5, s.std + 0.5)
        assert topo_loss([t], s) == pytest.approx(0.25)

    def test_averaged_over_layers(self):
        s = DiagramStats(np.zeros(2), np.zeros(2))
        t = DiagramStats(np.ones(2), np.ones(2))
        assert topo_loss([t, s], s) == pytest.approx(0.5)

    def test_symmetric(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=6), rng.normal(size=6)
        assert topo_loss_var([a], b).value == pytest.approx(topo_loss_var([b], a).value)

    def test_mismatch(self):
        with pytest.raises(ParameterError):
            topo_loss_var([np.zeros(3)], np.zeros(4))
        with pytest.raises(ParameterError):
            topo_loss_var([], np.zeros(4))


class TestWasserstein:
    def test_identical(self):
        d = [(0.0, 1.0), (0.5, 2.0)]
        assert wasserstein1(d, d) == 0.0

    def test_to_empty(self):
        assert wasserstein1([(0.0, 2.0)], np.zeros((0, 2))) == pytest.approx(1.0)

    def test_direct_match_wins(self):
        assert wasserstein1([(0.0, 2.0)], [(0.0, 4.0)]) == pytest.approx(2.0)

    def test_diagonal_beats_match(self):
        assert wasserstein1([(0.0, 0.2)], [(5.0, 5.4)]) == pytest.approx(0.1 + 0.2)

    def test_zero_persistence_ignored(self):
        assert wasserstein1([(0.3, 0.3), (0.0, 1.0)], [(0.0, 1.0), (2.0, 2.0)]) == 0.0

    def test_l2_ground(self):
        assert wasserstein1([(0.0, 2.0)], [], ground="l2") == pytest.approx(np.sqrt(2.0))
        with pytest.raises(ParameterError):
            wasserstein1([(0.0, 2.0)], [], ground="l7")

    def test_matching_indices(self):
        cost, pairs, un1, un2 = wasserstein_matching([(0.0, 1.0), (3.0, 3.0)], [(0.1, 1.1), (0.0, 0.05)])
        assert pairs == [(0, 0)] and un1 == [] and un2 == [1]
        assert cost == pytest.approx(0.1 + 0.025)

    @settings(max_examples=200, deadline=None)
    @given(diagrams(), diagrams())
    def test_matches_brute_force(self, P, Q):
        P = np.asarray(P, dtype=float).reshape(-1, 2)
        Q = np.asarray(Q, dtype=float).reshape(-1, 2)
        assert wasserstein1(P, Q) == pytest.approx(wasserstein_brute(P, Q), abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(diagrams(), diagrams(), diagrams())
    def test_metric_axioms(self, P, Q, R):
        P, Q, R = (np.asarray(x, dtype=float).reshape(-1, 2) for x in (P, Q, R))
        pq = wasserstein1(P, Q)
        assert pq == pytest.approx(wasserstein1(Q, P), abs=1e-9)
        assert pq <= wasserstein1(P, R) + wasserstein1(R, Q) + 1e-9

    def test_var_matches_value(self):
        rng = np.random.default_rng(5)
        b1, b2 = rng.uniform(0, 1, 4), rng.uniform(0, 1, 3)
        d1, d2 = b1 + rng.uniform(0, 1, 4), b2 + rng.uniform(0, 1, 3)
        v = wasserstein1_var(b1, d1, b2, d2).value
        assert v == pytest.approx(wasserstein1(np.column_stack([b1, d1]), np.column_stack([b2, d2])))

    def test_var_gradients(self):
        rng = np.random.default_rng(6)
        b1, b2 = rng.uniform(0, 1, 4), rng.uniform(0, 1, 3)
        d1, d2 = b1 + rng.uniform(0.1, 1, 4), b2 + rng.uniform(0.1, 1, 3)
        rep = grad_check(lambda p: wasserstein1_var(p["b1"], p["d1"], b2, d2), {"b1": b1, "d1": d1})
        assert rep.max_rel_error < 1e-6 and rep.checked > 0


class TestCsv:
    def test_write(self, tmp_path):
        s = DiagramStats(np.array([0.5]), np.array([0.25]))
        write_stats_csv(tmp_path / "s.csv", [s])
        assert (tmp_path / "s.csv").read_text().splitlines() == [
            "layer,kind,index,value", "0,mean,0,0.5", "0,std,0,0.25"]
