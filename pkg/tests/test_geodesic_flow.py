import json
import math

import numpy as np
import pytest

import singular_geodesics as sg
from singular_geodesics import IntegrationError
from singular_geodesics.experiments import closed_form_winding_length
from singular_geodesics.geodesic_flow import log_eta_rate


class TestLaunch:
    def test_unit_shell(self, cusp_warp, flat_circle):
        st = sg.launch_winding(cusp_warp, flat_circle, 0.2, [0.0], [1.0])
        assert st.theta == 0.0
        assert st.r == 0.2
        # |eta|/f(delta) = 1 at the lowest point
        norm = flat_circle.eta_norm(0.2, st.y, st.eta)
        assert norm == pytest.approx(cusp_warp.f(0.2), rel=1e-12)

    def test_rejects_bad_delta(self, cusp_warp, flat_circle):
        with pytest.raises(ValueError):
            sg.launch_winding(cusp_warp, flat_circle, 0.0, [0.0], [1.0])
        with pytest.raises(ValueError):
            sg.launch_winding(cusp_warp, flat_circle, 2.0, [0.0], [1.0])


class TestTrajectory:
    def test_time_symmetry(self, cusp_warp, flat_circle):
        traj = sg.integrate_winding(cusp_warp, flat_circle, 0.2, [0.0], [1.0])
        for t in (0.1, 0.4, 0.9):
            assert traj.r_of_t(t) == pytest.approx(traj.r_of_t(-t), rel=1e-10)

    def test_exit_events(self, cone_warp, flat_circle):
        traj = sg.integrate_winding(cone_warp, flat_circle, 0.3, [0.0], [1.0])
        ev = traj.exit_events
        t_exit = math.sqrt(1.5**2 - 0.3**2)
        assert ev["t_exit_forward"] == pytest.approx(t_exit, rel=1e-9)
        assert ev["t_exit_backward"] == pytest.approx(-t_exit, rel=1e-9)
        assert not ev["truncated_by_tau"]
        assert traj.classification == "winding"

    def test_tau_t_inverses(self, cusp_warp, flat_circle):
        traj = sg.integrate_winding(cusp_warp, flat_circle, 0.2, [0.0], [1.0])
        for t in (-0.8, -0.1, 0.0, 0.3, 1.0):
            assert traj.t_of_tau(traj.tau_of_t(t)) == pytest.approx(t, abs=1e-9)

    def test_state_at(self, cusp_warp, flat_circle):
        traj = sg.integrate_winding(cusp_warp, flat_circle, 0.2, [0.0], [1.0])
        st = traj.state_at(0.5)
        assert st.t == 0.5
        assert st.r == pytest.approx(traj.r_of_t(0.5), rel=1e-12)
        # state sits on the unit shell
        h = math.sin(st.theta) ** 2 + (
            flat_circle.eta_norm(st.r, st.y, st.eta) / cusp_warp.f(st.r)) ** 2
        assert h == pytest.approx(1.0, abs=1e-9)

    def test_csv_and_metadata(self, cone_warp, flat_circle, tmp_path):
        traj = sg.integrate_winding(cone_warp, flat_circle, 0.3, [0.0], [1.0])
        path = tmp_path / "traj.csv"
        traj.to_csv(str(path))
        header = path.read_text().splitlines()
        assert header[0].startswith("t,r,theta")
        assert len(header) == len(traj.t) + 1
        meta = traj.metadata()
        json.dumps(meta)  # must be serializable
        assert meta["delta"] == 0.3
        assert meta["shell_drift"] < 1e-8


class TestClassification:
    def test_radial(self, cone_warp, flat_circle):
        st = sg.GeodesicState(t=0.0, r=0.4, theta=math.pi / 2,
                              y=np.array([0.0]), eta=np.array([0.0]))
        traj = sg.integrate(cone_warp, flat_circle, st)
        assert traj.classification == "radial"
        assert sg.classify(traj) == "radial"
        # radial lines hit the exit at R - r0
        assert traj.exit_events["t_exit_forward"] == pytest.approx(1.1)

    def test_winding(self, cusp_warp, flat_circle):
        traj = sg.integrate_winding(cusp_warp, flat_circle, 0.1, [0.0], [1.0])
        assert sg.classify(traj) == "winding"

    def test_winding_requires_lowest_point(self, cusp_warp, flat_circle):
        st = sg.GeodesicState(t=0.0, r=0.4, theta=0.3,
                              y=np.array([0.0]), eta=np.array([0.2]))
        with pytest.raises(IntegrationError, match="lowest-point"):
            sg.integrate(cusp_warp, flat_circle, st)


class TestWindingLength:
    def test_matches_quadrature_oracle(self, flat_circle):
        for alpha, delta in [(1.0, 0.3), (2.0, 0.1), (1.5, 0.05)]:
            wf = sg.make_power_warp(alpha)
            traj = sg.integrate_winding(wf, flat_circle, delta, [0.0], [1.0])
            assert sg.winding_length(traj) == pytest.approx(
                closed_form_winding_length(wf, delta), rel=1e-8)

    def test_normalized(self, cusp_warp, flat_circle):
        traj = sg.integrate_winding(cusp_warp, flat_circle, 0.05, [0.0], [1.0])
        norm = sg.normalized_winding_length(traj)
        assert norm == pytest.approx(
            cusp_warp.f_prime(0.05) * sg.winding_length(traj), rel=1e-10)

    def test_truncated_raises(self, cusp_warp, flat_circle):
        traj = sg.integrate_winding(cusp_warp, flat_circle, 0.1, [0.0], [1.0],
                                    tau_stop=0.5)
        assert traj.exit_events["truncated_by_tau"]
        with pytest.raises(IntegrationError):
            sg.winding_length(traj)


class TestReparametrize:
    def test_window_and_normalized_eta(self, cusp_warp, flat_circle):
        traj = sg.integrate_winding(cusp_warp, flat_circle, 0.1, [0.0], [1.0])
        rp = sg.reparametrize_tau(traj, n=101, window=(-1.0, 1.0))
        assert rp.tau[0] == pytest.approx(-1.0)
        assert rp.tau[-1] == pytest.approx(1.0)
        assert len(rp.tau) == 101
        assert np.allclose(np.diff(rp.tau), rp.tau[1] - rp.tau[0])
        # eta_bar = eta / f(delta) has h-norm f(r)/f(delta) >= 1, ~1 near tau=0
        mid = len(rp.tau) // 2
        norm = flat_circle.eta_norm(rp.r[mid], rp.y[mid], rp.eta_bar[mid])
        assert norm == pytest.approx(cusp_warp.f(rp.r[mid]) / cusp_warp.f(0.1), rel=1e-8)


class TestDiagnostics:
    def test_shell_and_clairaut(self, flat_circle):
        for spec, delta in [("power:1", 0.1), ("power:2", 0.05), ("logpow:1.5", 0.05)]:
            wf = sg.parse_warp_spec(spec)
            traj = sg.integrate_winding(wf, flat_circle, delta, [0.0], [1.0],
                                        rtol=1e-12, atol=1e-14)
            assert np.nanmax(np.abs(traj.hamiltonian - 1.0)) < 1e-10
            assert np.nanmax(np.abs(traj.clairaut_rel)) < 1e-9

    def test_log_eta_rate_vanishes_for_warped(self, cusp_warp, flat_circle):
        traj = sg.integrate_winding(cusp_warp, flat_circle, 0.1, [0.0], [1.0])
        rates = [log_eta_rate(traj, i) for i in range(0, len(traj.t), 50)]
        assert max(abs(v) for v in rates) == 0.0

    def test_extreme_cusp_stays_finite_in_log_space(self, flat_circle):
        # f'(delta) underflows; the scaled clock must still be usable
        wf = sg.make_exp_warp("exp_inverse_power", 1.0)
        traj = sg.integrate_winding(wf, flat_circle, 0.001, [0.0], [1.0])
        norm = sg.normalized_winding_length(traj)
        assert np.isfinite(norm)
        assert 2.0 < norm < math.pi + 0.5


class TestVectorField:
    def test_matches_reduced_dynamics(self, cusp_warp, flat_circle):
        # the generic field must reproduce the scalar warped-product equations
        st = sg.launch_winding(cusp_warp, flat_circle, 0.2, [0.0], [1.0])
        st2 = sg.GeodesicState(t=0.0, r=0.35, theta=0.4, y=st.y, eta=st.eta)
        dr, dth, dy, deta = sg.vector_field(cusp_warp, flat_circle, st2)
        assert dr == pytest.approx(math.sin(0.4))
        fp_over_f = cusp_warp.f_prime(0.35) / cusp_warp.f(0.35)
        assert dth == pytest.approx(fp_over_f * math.cos(0.4), rel=1e-12)
        # flat circle: eta is conserved along the flow
        assert np.allclose(deta, 0.0)
