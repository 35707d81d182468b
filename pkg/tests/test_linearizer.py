"""Frobenius integration, flatness, flat coordinates, straightness."""
from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from weblin.expr import parse
from weblin.calculus import Rect, WebSpec
from weblin import linearizer as lin
from weblin import corpus

F = Fraction


def _web(f, *gs, **kw):
    return WebSpec(f=parse(f), gs=tuple(parse(g) for g in gs), **kw)


ZERO_GAUGE_WEB = _web("x+y", "x-y")  # H = K = mu = 0

WEB2 = corpus.linearization_web(corpus.case_by_name("two-pencils"))
WEB3 = corpus.linearization_web(corpus.case_by_name("parabola-tangents"))
WEB5 = corpus.linearization_web(corpus.case_by_name("exponential-twist"))


@pytest.fixture(scope="module")
def web2_grid():
    return lin.GridSpec(rect=WEB2.domain, nx=41, ny=41)


@pytest.fixture(scope="module")
def web2_pipeline(web2_grid):
    lam1, lam2 = lin.integrate_lambda(WEB2, grid=web2_grid)
    conn = lin.build_connection(lam1, lam2, WEB2)
    result = lin.flat_coordinates(conn)
    lin.straightness_report(result, WEB2)
    return lam1, lam2, conn, result


class TestTrivialGauge:
    def test_lambda_identically_zero(self):
        g = lin.GridSpec(rect=ZERO_GAUGE_WEB.domain, nx=21, ny=21)
        lam1, lam2 = lin.integrate_lambda(ZERO_GAUGE_WEB, grid=g)
        assert np.abs(lam1.values).max() == 0
        assert np.abs(lam2.values).max() == 0

    def test_connection_coefficients_vanish(self):
        g = lin.GridSpec(rect=ZERO_GAUGE_WEB.domain, nx=21, ny=21)
        lam1, lam2 = lin.integrate_lambda(ZERO_GAUGE_WEB, grid=g)
        conn = lin.build_connection(lam1, lam2, ZERO_GAUGE_WEB)
        for arr in conn.gamma().values():
            assert np.abs(arr).max() == 0
        assert lin.flatness_residual(conn) < 1e-14

    def test_flat_coordinates_are_translates(self):
        g = lin.GridSpec(rect=ZERO_GAUGE_WEB.domain, nx=21, ny=21)
        lam1, lam2 = lin.integrate_lambda(ZERO_GAUGE_WEB, grid=g)
        conn = lin.build_connection(lam1, lam2, ZERO_GAUGE_WEB)
        res = lin.flat_coordinates(conn)
        XX, YY = np.meshgrid(g.xs, g.ys, indexing="ij")
        assert np.abs(res.u.values - (XX - res.base[0])).max() < 1e-12
        assert np.abs(res.v.values - (YY - res.base[1])).max() < 1e-12

    def test_straightness_at_rounding_level(self):
        g = lin.GridSpec(rect=ZERO_GAUGE_WEB.domain, nx=21, ny=21)
        lam1, lam2 = lin.integrate_lambda(ZERO_GAUGE_WEB, grid=g)
        conn = lin.build_connection(lam1, lam2, ZERO_GAUGE_WEB)
        res = lin.flat_coordinates(conn)
        rep = lin.straightness_report(res, ZERO_GAUGE_WEB)
        assert max(rep.values()) < 1e-12


class TestIntegrateLambda:
    def test_refuses_nonlinearizable(self):
        g = lin.GridSpec(rect=WEB5.domain, nx=21, ny=21)
        with pytest.raises(lin.NotLinearizableError):
            lin.integrate_lambda(WEB5, grid=g)

    def test_path_independence_example_one(self):
        web = corpus.linearization_web(corpus.case_by_name(
            "pencil-with-parallels"))
        g = lin.GridSpec(rect=web.domain, nx=41, ny=41)
        assert lin.lambda_path_discrepancy(web, grid=g) < 1e-8

    def test_blowup_guard(self):
        web = corpus.linearization_web(corpus.case_by_name(
            "pencil-with-parallels"))
        g = lin.GridSpec(rect=web.domain, nx=21, ny=21)
        with pytest.raises(lin.LinearizerError, match="diverged"):
            lin.integrate_lambda(web, grid=g, lam0=(1e9, 1e9))

    def test_missing_parameter_value(self):
        web = corpus.web_for(corpus.case_by_name("power-web"))
        g = lin.GridSpec(rect=web.domain, nx=21, ny=21)
        with pytest.raises(lin.LinearizerError, match="parameter"):
            lin.integrate_lambda(web, grid=g, force=True)

    def test_singular_grid_reported(self):
        # the exponential-twist web is singular on x + y = 1
        web = _web("x/y", "(x+y)*exp(-x)",
                   domain=Rect(F(1, 4), F(3, 4), F(1, 4), F(3, 4)))
        g = lin.GridSpec(rect=web.domain, nx=21, ny=21)
        with pytest.raises(lin.LinearizerError, match="singular"):
            lin.integrate_lambda(web, grid=g, force=True)


class TestConnection:
    def test_geodesy_constraint(self, web2_pipeline):
        _, _, conn, _ = web2_pipeline
        T = conn.deformation()
        lhs = T["T11^1"] + T["T22^2"]
        rhs = 2 * (T["T12^1"] + T["T12^2"])
        assert np.abs(lhs - rhs).max() < 1e-12

    def test_deformation_enters_both_slots(self, web2_pipeline):
        # T(w1)'s off-diagonal coefficient and nabla_2 w2's w1 coefficient
        # are the same lambda
        _, _, conn, _ = web2_pipeline
        gam = conn.gamma()
        T = conn.deformation()
        assert np.array_equal(gam["1,1,2"], -T["T12^1"])
        assert np.array_equal(gam["2,2,1"], -T["T12^2"])

    def test_grid_mismatch_rejected(self, web2_grid, web2_pipeline):
        lam1, lam2, _, _ = web2_pipeline
        other = lin.GridSpec(rect=WEB2.domain, nx=21, ny=21)
        lam_other, _ = lin.integrate_lambda(WEB2, grid=other)
        with pytest.raises(lin.LinearizerError, match="share a grid"):
            lin.build_connection(lam1, lam_other, WEB2)


class TestFlatness:
    def test_example_two_residual(self, web2_pipeline):
        _, _, conn, _ = web2_pipeline
        assert lin.flatness_residual(conn) < 1e-6

    def test_example_one_residual(self):
        web = corpus.linearization_web(corpus.case_by_name(
            "pencil-with-parallels"))
        g = lin.GridSpec(rect=web.domain, nx=41, ny=41)
        lam1, lam2 = lin.integrate_lambda(web, grid=g)
        conn = lin.build_connection(lam1, lam2, web)
        assert lin.flatness_residual(conn) < 1e-6

    def test_perturbation_detected(self, web2_grid, web2_pipeline):
        lam1, lam2, _, _ = web2_pipeline
        bumped = lin.ScalarField(web2_grid, lam1.values.copy())
        bumped.values[20, 20] += 0.1
        conn = lin.build_connection(bumped, lam2, WEB2)
        assert lin.flatness_residual(conn) > 1e-3

    def test_nonflat_input_refused(self, web2_grid, web2_pipeline):
        lam1, lam2, _, _ = web2_pipeline
        bumped = lin.ScalarField(web2_grid, lam1.values.copy())
        bumped.values[20, 20] += 0.1
        conn = lin.build_connection(bumped, lam2, WEB2)
        with pytest.raises(lin.LinearizerError, match="not flat"):
            lin.flat_coordinates(conn)

    def test_integrator_is_fourth_order(self):
        # with a nonzero gauge the two-path discrepancy is a pure
        # integrator-error probe; halving the step must cut it by ~16
        # (assert >= 8 to allow constant drift while still certifying
        # order four, not two)
        discs = []
        for n in (21, 41):
            g = lin.GridSpec(rect=WEB2.domain, nx=n, ny=n)
            discs.append(lin.lambda_path_discrepancy(WEB2, grid=g,
                                                     lam0=(0.3, -0.2)))
        assert discs[0] > 1e-14  # genuinely above rounding
        assert discs[1] <= discs[0] / 8

    def test_refinement_reduces_gauge_residual(self):
        # nontrivial lambda via a nonzero gauge; halving the step must cut
        # the finite-difference flatness residual by >= 3.5 (or both are at
        # rounding level already)
        vals = []
        for n in (41, 81):
            g = lin.GridSpec(rect=WEB2.domain, nx=n, ny=n)
            lam1, lam2 = lin.integrate_lambda(WEB2, grid=g, lam0=(0.3, -0.2))
            conn = lin.build_connection(lam1, lam2, WEB2)
            vals.append(lin.flatness_residual(conn))
        coarse, fine = vals
        assert coarse < 1e-12 or fine <= coarse / 3.5


class TestFlatCoordinates:
    def test_example_two_straightness(self, web2_pipeline):
        _, _, _, result = web2_pipeline
        assert result.straightness
        assert max(result.straightness.values()) < 1e-5

    def test_example_three_straightness(self):
        g = lin.GridSpec(rect=WEB3.domain, nx=41, ny=41)
        lam1, lam2 = lin.integrate_lambda(WEB3, grid=g)
        conn = lin.build_connection(lam1, lam2, WEB3)
        res = lin.flat_coordinates(conn)
        rep = lin.straightness_report(res, WEB3)
        # the f-leaves are tangent lines of a parabola, straight already;
        # everything here measures numerical error only
        assert max(rep.values()) < 1e-6

    def test_power_web_with_concrete_exponent(self):
        web = corpus.linearization_web(corpus.case_by_name("power-web"))
        g = lin.GridSpec(rect=web.domain, nx=41, ny=41)
        params = {"n": F(2)}
        lam1, lam2 = lin.integrate_lambda(web, grid=g, params=params)
        conn = lin.build_connection(lam1, lam2, web, params=params)
        res = lin.flat_coordinates(conn)
        rep = lin.straightness_report(res, web, params=params)
        assert max(rep.values()) < 1e-5

    def test_gauge_freedom(self, web2_grid):
        # different initial deformation values give different coordinates
        # but leaves stay straight
        lam1, lam2 = lin.integrate_lambda(WEB2, grid=web2_grid,
                                          lam0=(0.3, -0.2))
        assert np.abs(lam1.values).max() > 0.01
        conn = lin.build_connection(lam1, lam2, WEB2)
        res = lin.flat_coordinates(conn)
        rep = lin.straightness_report(res, WEB2)
        assert max(rep.values()) < 1e-5

    def test_affine_invariance_of_straightness(self, web2_pipeline):
        _, _, _, result = web2_pipeline
        rng = np.random.default_rng(5)
        mat = rng.normal(size=(2, 2)) + 2 * np.eye(2)
        off = rng.normal(size=2)
        u2 = mat[0, 0] * result.u.values + mat[0, 1] * result.v.values + off[0]
        v2 = mat[1, 0] * result.u.values + mat[1, 1] * result.v.values + off[1]
        res2 = lin.LinearizationResult(
            u=lin.ScalarField(result.u.grid, u2),
            v=lin.ScalarField(result.v.grid, v2),
            flatness_residual=result.flatness_residual,
            path_independence_residual=result.path_independence_residual,
            base=result.base, lam0=result.lam0)
        rep2 = lin.straightness_report(res2, WEB2)
        for k, v in result.straightness.items():
            assert rep2[k] < 1e-5

    def test_negative_control(self):
        g = lin.GridSpec(rect=WEB5.domain, nx=41, ny=41)
        lam1, lam2 = lin.integrate_lambda(WEB5, grid=g, force=True)
        conn = lin.build_connection(lam1, lam2, WEB5)
        res = lin.flat_coordinates(conn, force=True)
        rep = lin.straightness_report(res, WEB5)
        assert max(rep.values()) > 1e-2

    def test_non_square_grid(self):
        g = lin.GridSpec(rect=WEB2.domain, nx=31, ny=21)
        lam1, lam2 = lin.integrate_lambda(WEB2, grid=g)
        conn = lin.build_connection(lam1, lam2, WEB2)
        res = lin.flat_coordinates(conn)
        rep = lin.straightness_report(res, WEB2)
        assert max(rep.values()) < 1e-5

    def test_every_linearizable_corpus_web_straightens(self):
        # end to end over the whole corpus; covers the genuinely nonlinear
        # coordinate changes (bol-four-subweb, double radicals)
        for case in corpus.CASES:
            if case.expected != "YES":
                continue
            web = corpus.linearization_web(case)
            params = {"n": F(2)} if case.name == "power-web" else None
            g = lin.GridSpec(rect=web.domain, nx=41, ny=41)
            lam1, lam2 = lin.integrate_lambda(web, grid=g, params=params)
            conn = lin.build_connection(lam1, lam2, web, params=params)
            res = lin.flat_coordinates(conn)
            rep = lin.straightness_report(res, web, params=params)
            assert max(rep.values()) < 1e-5, (case.name, rep)


class TestLeafTracing:
    def test_coordinate_foliations_are_grid_lines(self, web2_grid):
        leaves = lin.trace_leaves(WEB2, web2_grid, "x", 5)
        assert len(leaves) == 5
        for leaf in leaves:
            assert np.ptp(leaf[:, 0]) == 0
        leaves = lin.trace_leaves(WEB2, web2_grid, "y", 5)
        for leaf in leaves:
            assert np.ptp(leaf[:, 1]) == 0

    def test_level_curves_sit_on_levels(self, web2_grid):
        fn = lambda x, y: x / y
        for leaf in lin.trace_leaves(WEB2, web2_grid, "f", 4):
            vals = leaf[:, 0] / leaf[:, 1]
            assert np.ptp(vals) < 1e-9

    def test_unknown_foliation(self, web2_grid):
        with pytest.raises(lin.LinearizerError):
            lin.trace_leaves(WEB2, web2_grid, "q", 3)


class TestSvg:
    def test_svg_written(self, tmp_path, web2_pipeline):
        _, _, _, result = web2_pipeline
        out = tmp_path / "web.svg"
        lin.render_svg(result, WEB2, str(out))
        text = out.read_text()
        assert text.startswith("<svg")
        assert text.rstrip().endswith("</svg>")
        assert text.count("<polyline") >= 4 * 2  # both panels, 4 foliations
        # one stroke color per foliation
        colors = {line.split('stroke="')[1].split('"')[0]
                  for line in text.splitlines() if "<polyline" in line}
        assert len(colors) == 4

    def test_svg_deterministic(self, tmp_path, web2_pipeline):
        _, _, _, result = web2_pipeline
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        lin.render_svg(result, WEB2, str(a))
        lin.render_svg(result, WEB2, str(b))
        assert a.read_bytes() == b.read_bytes()


class TestJson:
    def test_result_json_strings(self, web2_pipeline):
        _, _, _, result = web2_pipeline
        d = result.to_json()
        assert isinstance(d["flatness_residual"], str)
        assert set(d["straightness"]) == {"x", "y", "f", "g4"}
