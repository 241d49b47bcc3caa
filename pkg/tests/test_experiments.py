import math

import numpy as np
import pytest

import singular_geodesics as sg
from singular_geodesics.experiments import (
    _aitken,
    closed_form_winding_length,
    default_delta_ladder,
    limit_geodesic_test,
    run_bounds_campaign,
    run_comparison_campaign,
    thread_count,
)


class TestLadder:
    def test_power_ladder_reaches_1e4(self, cusp_warp):
        ladder = default_delta_ladder(cusp_warp)
        assert ladder[0] == pytest.approx(0.3)
        assert ladder[-1] == pytest.approx(1e-4)
        assert np.all(np.diff(ladder) < 0)

    def test_exp_ladder_floors_higher(self):
        ladder = default_delta_ladder(sg.make_exp_warp("exp_inverse_power", 1.0))
        assert ladder[-1] == pytest.approx(1e-3)
        assert ladder[0] < 0.5  # clipped inside the smaller domain


class TestAitken:
    def test_geometric_sequence_is_exact(self):
        # v_k = L + c q^k accelerates to exactly L
        L, c, q = 2.5, 0.8, 0.3
        vals = [L + c * q**k for k in range(6)]
        assert _aitken(vals) == pytest.approx(L, abs=1e-12)

    def test_short_input_falls_back(self):
        assert _aitken([1.0, 2.0]) == 2.0

    def test_stalled_input_falls_back(self):
        assert _aitken([3.0, 3.0, 3.0]) == 3.0


class TestClosedFormLength:
    def test_flat_cone_arctan(self, cone_warp):
        for delta in (0.3, 0.1, 0.02):
            oracle = 2.0 * math.atan(math.sqrt(1.5**2 - delta**2) / delta)
            assert closed_form_winding_length(cone_warp, delta) == \
                pytest.approx(oracle, rel=1e-10)

    def test_scales_like_Cf_over_fprime(self, cusp_warp):
        cf = sg.compute_Cf(cusp_warp)
        for delta in (1e-3, 1e-4):
            length = closed_form_winding_length(cusp_warp, delta)
            assert cusp_warp.f_prime(delta) * length == pytest.approx(cf, rel=5e-3)


class TestDeltaSweep:
    def test_power2_converges(self, cusp_warp, flat_circle):
        res = sg.delta_sweep(cusp_warp, flat_circle,
                             delta_list=np.geomspace(0.3, 1e-3, 6))
        assert res.converged
        assert res.errors_rel[-1] < 1e-4
        assert res.extrapolated_limit == pytest.approx(res.reference_Cf, rel=1e-4)

    def test_rejects_bad_ladder(self, cusp_warp, flat_circle):
        with pytest.raises(ValueError):
            sg.delta_sweep(cusp_warp, flat_circle, delta_list=[0.1, 0.2])
        with pytest.raises(ValueError):
            sg.delta_sweep(cusp_warp, flat_circle, delta_list=[2.0, 0.1])

    def test_oscillating_has_no_reference(self, flat_circle):
        wf = sg.parse_warp_spec("osc:0.5:9")
        res = sg.delta_sweep(wf, flat_circle, delta_list=np.geomspace(0.3, 0.05, 4))
        assert math.isnan(res.reference_Cf)
        assert not res.converged
        assert "no reference" in res.note


class TestRadialBounds:
    def test_warped_trajectory(self, cusp_warp, flat_circle):
        traj = sg.integrate_winding(cusp_warp, flat_circle, 0.2, [0.0], [1.0])
        rep = sg.verify_radial_bounds(traj)
        assert rep.passed
        assert rep.strict_margin is not None and rep.strict_margin > 0.0

    def test_perturbed_trajectory(self):
        cs = sg.circle_section(2 * math.pi, perturbation=(0.08, None))
        traj = sg.integrate_winding(sg.make_power_warp(1.5), cs, 0.15, [0.3], [1.0])
        rep = sg.verify_radial_bounds(traj)
        assert rep.passed
        assert rep.worst_eta <= 1e-8

    def test_radial_skipped(self, cone_warp, flat_circle):
        st = sg.GeodesicState(t=0.0, r=0.4, theta=math.pi / 2,
                              y=np.array([0.0]), eta=np.array([0.0]))
        rep = sg.verify_radial_bounds(sg.integrate(cone_warp, flat_circle, st))
        assert rep.passed
        assert "skipped" in rep.note


class TestComparison:
    def test_orders_radii(self, cusp_warp, flat_circle):
        rep = sg.comparison_test(cusp_warp, flat_circle, 0.1, 0.25)
        assert rep.passed
        assert rep.min_gap > 0.0

    def test_validation(self, cusp_warp, flat_circle):
        with pytest.raises(ValueError):
            sg.comparison_test(cusp_warp, flat_circle, 0.2, 0.2)  # equal deltas
        pert = sg.circle_section(2 * math.pi, perturbation=(0.1, None))
        with pytest.raises(ValueError):
            sg.comparison_test(cusp_warp, pert, 0.1, 0.2)  # not a warped product
        with pytest.raises(ValueError):
            sg.comparison_test(sg.make_concave_sqrt_warp(), flat_circle, 0.1, 0.2)


class TestLimitGeodesic:
    def test_flat_cone_window_validation(self, cone_warp, flat_circle):
        # conical case: tau only sweeps (-pi/2, pi/2), so [-2, 2] is rejected
        with pytest.raises(ValueError, match="pi/2"):
            limit_geodesic_test(cone_warp, flat_circle, [0.3, 0.1],
                                [0.0], [1.0], tau_window=(-2.0, 2.0))
        rep = limit_geodesic_test(cone_warp, flat_circle, [0.3, 0.1, 0.03],
                                  [0.0], [1.0], tau_window=(-1.2, 1.2))
        assert rep.passed
        assert rep.sup_distances[-1] < 1e-3

    def test_cusp_circle(self, cusp_warp, flat_circle):
        rep = limit_geodesic_test(cusp_warp, flat_circle, [0.3, 0.1, 0.03],
                                  [0.0], [1.0])
        assert rep.passed
        assert rep.sup_distances[-1] < 0.05


class TestCampaigns:
    def test_small_bounds_campaign(self):
        reports = run_bounds_campaign(n_cases=12, seed=7)
        assert len(reports) == 12
        assert all(r.passed for r in reports)

    def test_small_comparison_campaign(self):
        reports = run_comparison_campaign(n_cases=8, seed=7)
        assert all(r.passed for r in reports)
        assert min(r.min_gap for r in reports) > 0.0


class TestFigureData:
    def test_cone_winding_count(self):
        data = sg.figure1_data("cone", delta=0.3)
        assert data["winding_count_measured"] == pytest.approx(
            data["winding_length"] / (2 * math.pi))
        # swept angle equals the winding length on the unit circle fiber
        assert data["swept_angle"] == pytest.approx(data["winding_length"], rel=1e-8)
        assert data["max_shell_residual"] < 1e-8
        xyz = data["embedded_xyz"]
        assert np.allclose(np.hypot(xyz[:, 0], xyz[:, 1]), data["r"], atol=1e-12)

    def test_cusp_prediction(self):
        data = sg.figure1_data("cusp", delta=0.05)
        assert data["winding_count_measured"] == pytest.approx(
            data["winding_count_predicted"], rel=0.05)
        # embedded on the surface of revolution x = z^2
        xyz = data["embedded_xyz"]
        assert np.allclose(np.hypot(xyz[:, 0], xyz[:, 1]), xyz[:, 2] ** 2, atol=1e-10)

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            sg.figure1_data("plane")


class TestThreadCount:
    def test_env_cap(self, monkeypatch):
        import os
        monkeypatch.setenv("SG_THREADS", "2")
        assert thread_count(8) == min(2, os.cpu_count() or 1)
        monkeypatch.setenv("SG_THREADS", "not-a-number")
        assert thread_count(1) == 1
        monkeypatch.setenv("SG_THREADS", "1")
        assert thread_count(64) == 1
