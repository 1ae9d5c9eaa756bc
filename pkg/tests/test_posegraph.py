import numpy as np
import pytest

from lieopt import Kind, LieBatch, compose, exp_map, random_group, random_tangent
from lieopt.errors import GraphError, ParseError
from lieopt.posegraph import (
    Edge,
    PGOConfig,
    PoseGraph,
    chi2,
    edge_residual,
    optimize_pgo,
    parse_g2o,
    write_g2o,
)
from lieopt.synth import make_circle_graph

VERTEX = "VERTEX_SE3:QUAT 0 1 2 3 0 0 0 1"


def two_node_graph(consistent=True):
    g = PoseGraph()
    g.nodes = {0: np.array([0, 0, 0, 0, 0, 0, 1.0]),
               1: np.array([1, 0, 0, 0, 0, 0, 1.0]) if consistent
               else np.array([0, 0, 0, 0, 0, 0, 1.0])}
    g.edges = [Edge(0, 1, np.array([1, 0, 0, 0, 0, 0, 1.0]), np.eye(6))]
    return g


class TestParse:
    def test_vertex_fields(self):
        g = parse_g2o(VERTEX)
        np.testing.assert_array_equal(g.nodes[0], [1, 2, 3, 0, 0, 0, 1])

    def test_empty_input(self):
        g = parse_g2o("")
        assert g.nodes == {} and g.edges == []

    def test_comments_and_blank_lines(self):
        g = parse_g2o("# a comment\n\n" + VERTEX + "\n")
        assert list(g.nodes) == [0]

    def test_edge_fields(self):
        info = " ".join(str(v) for v in range(1, 22))
        g = parse_g2o(VERTEX + "\nVERTEX_SE3:QUAT 1 0 0 0 0 0 0 1\n"
                      f"EDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 {info}")
        e = g.edges[0]
        assert (e.i, e.j) == (0, 1)
        # row-major upper triangle, symmetric fill
        assert e.info[0, 0] == 1 and e.info[0, 5] == 6
        assert e.info[1, 1] == 7 and e.info[5, 0] == 6
        assert np.abs(e.info - e.info.T).max() == 0

    def test_short_edge_rejected_with_line(self):
        info20 = " ".join("1" for _ in range(20))
        bad = VERTEX + "\nVERTEX_SE3:QUAT 1 0 0 0 0 0 0 1\n" \
            f"EDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 {info20}"
        with pytest.raises(ParseError) as exc:
            parse_g2o(bad)
        assert exc.value.line == 3

    def test_bad_vertex_field_count(self):
        with pytest.raises(ParseError):
            parse_g2o("VERTEX_SE3:QUAT 0 1 2 3")

    def test_non_numeric(self):
        with pytest.raises(ParseError):
            parse_g2o("VERTEX_SE3:QUAT 0 1 2 x 0 0 0 1")

    def test_duplicate_vertex(self):
        with pytest.raises(ParseError):
            parse_g2o(VERTEX + "\n" + VERTEX)

    def test_unknown_record_skipped_with_warning(self):
        with pytest.warns(UserWarning, match="unknown record"):
            g = parse_g2o("VERTEX_SE2 0 1 2 3\n" + VERTEX)
        assert list(g.nodes) == [0]

    def test_missing_vertex_reference(self):
        info = " ".join("1" for _ in range(21))
        with pytest.raises(GraphError):
            parse_g2o(VERTEX + f"\nEDGE_SE3:QUAT 0 7 1 0 0 0 0 0 1 {info}")

    def test_quaternion_renormalized_with_warning(self):
        with pytest.warns(UserWarning, match="renormalized"):
            g = parse_g2o("VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1.01")
        assert abs(np.linalg.norm(g.nodes[0][3:]) - 1.0) < 1e-15


class TestWrite:
    def test_empty_roundtrip(self):
        assert write_g2o(PoseGraph()) == ""
        assert parse_g2o(write_g2o(PoseGraph())).nodes == {}

    def test_single_node_roundtrip(self):
        g = parse_g2o(VERTEX)
        g2 = parse_g2o(write_g2o(g))
        np.testing.assert_array_equal(g.nodes[0], g2.nodes[0])

    def test_circle_roundtrip_chi2(self):
        g = make_circle_graph(40, seed=3)
        g2 = parse_g2o(write_g2o(g))
        assert abs(chi2(g2) - chi2(g)) < 1e-10
        for k in g.nodes:
            assert np.abs(g.nodes[k] - g2.nodes[k]).max() < 1e-12
        for e1, e2 in zip(g.edges, g2.edges):
            assert np.abs(e1.meas - e2.meas).max() < 1e-12
            assert np.abs(e1.info - e2.info).max() < 1e-12


class TestEdgeResidual:
    def test_zero_when_matching(self):
        x = random_group(Kind.SE3, (1,), seed=1)
        z = LieBatch._wrap(Kind.SE3, np.array([[0, 0, 0, 0, 0, 0, 1.0]]))
        r = edge_residual(x, x, z)
        assert np.abs(r).max() < 1e-15

    def test_consistent_measurement(self):
        xi = LieBatch._wrap(Kind.SE3, np.array([[0, 0, 0, 0, 0, 0, 1.0]]))
        xj = LieBatch._wrap(Kind.SE3, np.array([[1, 0, 0, 0, 0, 0, 1.0]]))
        r = edge_residual(xi, xj, xj)
        assert np.abs(r).max() < 1e-15

    def test_first_order_in_perturbation(self):
        from lieopt import inverse
        rng = np.random.default_rng(2)
        xi = random_group(Kind.SE3, (1,), seed=3)
        xj = random_group(Kind.SE3, (1,), seed=4)
        z = compose(inverse(xi), xj)
        for scale in (1e-4, 1e-6):
            delta = rng.normal(size=6) * scale
            step = exp_map(LieBatch(Kind.se3, delta.reshape(1, 6)))
            xj2 = compose(step, xj)
            r = edge_residual(xi, xj2, z)[0]
            assert abs(np.linalg.norm(r) - np.linalg.norm(delta)) < 10 * scale ** 2


class TestChi2:
    def test_consistent_graph(self):
        assert chi2(two_node_graph()) == 0.0

    def test_single_edge_value(self):
        g = two_node_graph(consistent=False)
        # residual is the 1m translation gap
        assert chi2(g) == pytest.approx(1.0, abs=1e-12)

    def test_linear_in_information(self):
        g = two_node_graph(consistent=False)
        g2 = g.copy()
        g2.edges[0].info *= 2.0
        assert chi2(g2) == pytest.approx(2.0 * chi2(g), abs=1e-12)


class TestOptimize:
    def test_consistent_graph_stays_zero(self):
        g = two_node_graph()
        out, stats = optimize_pgo(g)
        assert stats.final_chi2 == 0.0
        assert stats.initial_chi2 == 0.0
        np.testing.assert_array_equal(out.nodes[1], g.nodes[1])

    def test_two_node_converges(self):
        g = two_node_graph(consistent=False)
        out, stats = optimize_pgo(g)
        np.testing.assert_allclose(out.nodes[1][:3], [1, 0, 0], atol=1e-8)
        assert stats.final_chi2 < 1e-16

    def test_anchor_bitwise_fixed(self):
        g = make_circle_graph(30, seed=5)
        anchor = g.nodes[0].copy()
        out, _ = optimize_pgo(g)
        assert np.array_equal(out.nodes[0], anchor)

    def test_circle_converges(self):
        g = make_circle_graph(60, seed=6)
        out, stats = optimize_pgo(g)
        assert stats.final_chi2 / stats.initial_chi2 < 1e-6
        assert stats.iterations <= 50

    def test_disconnected_reported(self):
        g = two_node_graph()
        g.nodes[5] = np.array([0, 0, 0, 0, 0, 0, 1.0])
        with pytest.raises(GraphError, match="5"):
            optimize_pgo(g)

    def test_asymmetric_information_rejected(self):
        g = two_node_graph()
        g.edges[0].info[0, 1] = 0.5
        with pytest.raises(GraphError):
            optimize_pgo(g)

    def test_indefinite_information_rejected(self):
        g = two_node_graph()
        g.edges[0].info[5, 5] = -1.0
        with pytest.raises(GraphError):
            optimize_pgo(g)

    def test_gauge_invariance(self):
        # left-composing everything with a fixed transform leaves chi2 alone
        g = make_circle_graph(25, seed=7)
        t = random_group(Kind.SE3, (1,), sigma=0.8, seed=8)
        shifted = g.copy()
        for k in shifted.nodes:
            xb = LieBatch._wrap(Kind.SE3, shifted.nodes[k].reshape(1, 7))
            shifted.nodes[k] = compose(t, xb).values[0]
        assert abs(chi2(shifted) - chi2(g)) < 1e-10 * max(1.0, chi2(g))
        out1, s1 = optimize_pgo(g)
        out2, s2 = optimize_pgo(shifted)
        assert abs(s1.final_chi2 - s2.final_chi2) < 1e-8 * max(1.0, s1.initial_chi2)

    def test_sparse_pcg_path(self, monkeypatch):
        # force the block-sparse + PCG route on a small graph
        import lieopt.posegraph as pg
        monkeypatch.setattr(pg, "DENSE_LIMIT", 10)
        g = make_circle_graph(25, seed=9)
        out, stats = optimize_pgo(g, PGOConfig(pcg_tol=1e-12))
        assert stats.final_chi2 / stats.initial_chi2 < 1e-6

    def test_analytic_edge_jacobians_match_fd(self):
        # the model's analytic blocks against the generic dense differencing
        from lieopt.diff import ParamSet, jacobian_dense
        from lieopt.posegraph import _PGOModel
        g = make_circle_graph(6, seed=10)
        model = _PGOModel(g)
        blocks = model.residual_blocks(model.params)

        def stacked(params):
            return np.concatenate(
                [b.residual for b in model.residual_blocks(params, need_jacobian=False)])

        jd = jacobian_dense(stacked, model.params).dense
        for k, blk in enumerate(blocks):
            dense_rows = jd[6 * k:6 * k + 6]
            full = np.zeros((6, model.params.n))
            full[:, blk.cols] = blk.jacobian
            scale = 1.0 + np.abs(dense_rows).max()
            assert np.abs(full - dense_rows).max() / scale < 1e-5

    def test_stats_fields(self, tmp_path):
        g = make_circle_graph(20, seed=11)
        _, stats = optimize_pgo(g)
        d = stats.as_dict()
        assert set(d) == {"initial_chi2", "final_chi2", "iterations",
                          "accepted", "rejected", "wall_time_s"}
        assert d["final_chi2"] <= d["initial_chi2"]
