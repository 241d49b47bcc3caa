"""Integration of lifted geodesics of g = dr^2 + f(r)^2 h_r.

State variables are (r, theta, y, eta) with sin(theta) = rdot; the flow is

    rdot     = sin(theta)
    thetadot = (f'/f - d_r|eta|/|eta|) cos(theta)
    ydot     = eta^sharp / f^2
    etadot   = sharp^T (d_y h) sharp / (2 f^2)

Two execution paths share one interface: a reduced 3-state system in
(r, theta, tau) for unperturbed circle sections, evaluated in log space so
the exponential cusp families work far below double-precision range of f,
and a full phase-space system with chart switching for everything else.
Backward time is obtained from the symmetry (t, theta, eta) -> (-t, -theta, -eta).
"""
from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .cross_sections import (
    CHART_BAND_HI,
    CHART_BAND_LO,
    CircleSection,
    CrossSection,
    SphereSection,
    switch_chart,
)
from .errors import IntegrationError
from .warp_profiles import WarpingFunction

__all__ = [
    "GeodesicState",
    "Trajectory",
    "launch_winding",
    "vector_field",
    "integrate",
    "integrate_winding",
    "classify",
    "winding_length",
    "normalized_winding_length",
    "reparametrize_tau",
    "log_eta_rate",
]

RADIAL_ETA_FACTOR = 1e-14
SHELL_DRIFT_LIMIT = 1e-6


@dataclass
class GeodesicState:
    t: float
    r: float
    theta: float
    y: np.ndarray
    eta: np.ndarray
    chart: int = 0
    wind_sign: int = 1  # orientation hint, survives underflow of |eta|

    def __post_init__(self):
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        self.eta = np.atleast_1d(np.asarray(self.eta, dtype=float))


def launch_winding(
    wf: WarpingFunction, cs: CrossSection, delta: float, y0, v0
) -> GeodesicState:
    """State at the lowest point of a winding geodesic: t=0, r=delta, theta=0.

    eta is the h_delta-dual of f(delta) times the normalized direction, so
    |eta| = f(delta) and the unit-speed shell holds by construction.
    """
    if not 0.0 < delta < wf.domain_radius:
        raise ValueError(f"delta={delta:g} outside (0, R={wf.domain_radius:g})")
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    h = cs.metric(delta, y0, 0)
    norm = math.sqrt(float(v0 @ h @ v0))
    if norm == 0.0:
        raise ValueError("v0 must be nonzero")
    fd = math.exp(wf.log_f(delta)) if wf.log_f(delta) > -745 else 0.0
    eta = (fd / norm) * (h @ v0)
    sign = 1 if (v0[-1] >= 0 or cs.dim > 1) else -1
    return GeodesicState(t=0.0, r=delta, theta=0.0, y=y0, eta=eta, wind_sign=sign)


def vector_field(wf: WarpingFunction, cs: CrossSection, state: GeodesicState):
    """(dr, dtheta, dy, deta) of the lifted flow at a phase-space point."""
    r, th = state.r, state.theta
    # adaptive steppers probe trial points slightly past the exit event, so
    # tolerate a margin beyond R before declaring the state out of domain
    if not 0.0 < r <= 1.25 * wf.domain_radius:
        raise IntegrationError(f"r={r:g} outside (0, R)")
    h = cs.metric(r, state.y, state.chart)
    hinv = np.linalg.inv(h)
    sharp = hinv @ state.eta
    norm2 = float(state.eta @ sharp)
    f = wf.f(r)
    dlf = wf.d_log_f(r)
    if norm2 <= 0.0:
        pert = 0.0
    else:
        dh = cs.d_r_metric(r, state.y, state.chart)
        pert = -float(sharp @ dh @ sharp) / (2.0 * norm2)
    dr = math.sin(th)
    dth = (dlf - pert) * math.cos(th)
    dy = sharp / (f * f)
    deta = np.empty(cs.dim)
    for k in range(cs.dim):
        dhk = cs.d_y_metric(r, state.y, k, state.chart)
        deta[k] = float(sharp @ dhk @ sharp) / (2.0 * f * f)
    return dr, dth, dy, deta


# ---------------------------------------------------------------------------
# branch bookkeeping


class _Leg:
    __slots__ = ("sol", "t0", "t1", "chart")

    def __init__(self, sol, t0, t1, chart):
        self.sol, self.t0, self.t1, self.chart = sol, t0, t1, chart


class _Branch:
    """One time direction, stored as a forward run of the mirrored system."""

    def __init__(self, sign: int):
        self.sign = sign
        self.legs: List[_Leg] = []
        self.t_end = 0.0
        self.exited = False
        self.stopped_by_tau = False

    def leg_at(self, s: float) -> _Leg:
        idx = bisect.bisect_right([leg.t0 for leg in self.legs], s) - 1
        idx = max(0, min(idx, len(self.legs) - 1))
        return self.legs[idx]

    def eval(self, s: float) -> Tuple[np.ndarray, int]:
        leg = self.leg_at(min(s, self.t_end))
        return leg.sol(min(max(s, leg.t0), leg.t1)), leg.chart


# ---------------------------------------------------------------------------
# trajectory container


class Trajectory:
    """Sampled lifted geodesic with per-sample diagnostics.

    Arrays are aligned with ``t`` (sorted, containing the minimum t=0 for
    winding launches).  ``tau_scaled`` is f'(delta) * tau, which stays finite
    for warps whose absolute winding length overflows double precision.
    """

    def __init__(self, *, t, r, theta, y, eta, chart_ids, hamiltonian, clairaut,
                 clairaut_rel, eta_norm, speed_Y, tau, tau_scaled, rho, u,
                 exit_events, classification, delta, meta, ctx):
        self.t = t
        self.r = r
        self.theta = theta
        self.y = y
        self.eta = eta
        self.chart_ids = chart_ids
        self.hamiltonian = hamiltonian
        self.clairaut = clairaut
        self.clairaut_rel = clairaut_rel
        self.eta_norm = eta_norm
        self.speed_Y = speed_Y
        self.tau = tau
        self.tau_scaled = tau_scaled
        self.rho = rho
        self.u = u
        self.exit_events = exit_events
        self.classification = classification
        self.delta = delta
        self.meta = meta
        self._ctx = ctx

    # -- dense evaluation ---------------------------------------------------

    def _branch(self, t: float) -> _Branch:
        branches = self._ctx["branches"]
        for b in branches:
            if b.sign == (1 if t >= 0 else -1):
                return b
        return branches[0]

    def r_of_t(self, t: float) -> float:
        if self._ctx["kind"] == "radial":
            return self._radial_r(t)
        x, _ = self._branch(t).eval(abs(t))
        return float(x[0])

    def tau_scaled_of_t(self, t: float) -> float:
        sign = 1.0 if t >= 0 else -1.0
        if self._ctx["kind"] == "reduced":
            x, _ = self._branch(t).eval(abs(t))
            return sign * float(x[2])
        x, _ = self._branch(t).eval(abs(t))
        return sign * float(x[-1]) * self._ctx["fpd"]

    def tau_of_t(self, t: float) -> float:
        return self.tau_scaled_of_t(t) / self._ctx["fpd"]

    def t_of_tau(self, tau: float) -> float:
        """Invert the strictly increasing map t -> tau."""
        b = self._branch(tau)  # tau and t share sign
        lo, hi = 0.0, b.t_end
        target = abs(tau)
        end = abs(self.tau_of_t(b.sign * b.t_end))
        if target > end * (1.0 + 1e-12):
            raise ValueError(f"tau={tau:g} beyond available range {end:g}")
        s = brentq(
            lambda sv: abs(self.tau_of_t(b.sign * sv)) - target, lo, hi,
            xtol=1e-14, rtol=8.9e-16,
        )
        return b.sign * s

    def _radial_r(self, t: float) -> float:
        r0 = self._ctx["r0"]
        sgn = self._ctx["theta_sign"]
        return r0 + sgn * t

    def state_at(self, t: float) -> GeodesicState:
        kind = self._ctx["kind"]
        if kind == "radial":
            return GeodesicState(t, self._radial_r(t), self.theta[0],
                                 self.y[0], self.eta[0])
        sign = 1.0 if t >= 0 else -1.0
        x, chart = self._branch(t).eval(abs(t))
        if kind == "reduced":
            ctx = self._ctx
            phi = ctx["y0"][0] + ctx["dir"] * sign * x[2] / (ctx["fpd"] * ctx["scale"])
            return GeodesicState(t, float(x[0]), sign * float(x[1]),
                                 np.array([phi]), np.array([ctx["eta_comp"]]),
                                 chart=0, wind_sign=ctx["dir"])
        dim = self._ctx["dim"]
        return GeodesicState(t, float(x[0]), sign * float(x[1]),
                             x[2:2 + dim].copy(), sign * x[2 + dim:2 + 2 * dim],
                             chart=chart)

    # -- export -------------------------------------------------------------

    def to_csv(self, path: str):
        dim = self.y.shape[1]
        cols = (["t", "r", "theta"]
                + [f"y{i}" for i in range(dim)]
                + [f"eta{i}" for i in range(dim)]
                + ["hamiltonian", "clairaut", "tau", "rho", "u", "chart"])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for i in range(len(self.t)):
                writer.writerow(
                    [f"{self.t[i]:.16g}", f"{self.r[i]:.16g}", f"{self.theta[i]:.16g}"]
                    + [f"{v:.16g}" for v in self.y[i]]
                    + [f"{v:.16g}" for v in self.eta[i]]
                    + [f"{self.hamiltonian[i]:.16g}", f"{self.clairaut[i]:.16g}",
                       f"{self.tau[i]:.16g}", f"{self.rho[i]:.16g}",
                       f"{self.u[i]:.16g}", str(int(self.chart_ids[i]))]
                )

    def metadata(self) -> dict:
        return dict(self.meta)


# ---------------------------------------------------------------------------
# the integrator


def _is_reduced(cs: CrossSection) -> bool:
    return isinstance(cs, CircleSection) and cs.amplitude == 0.0


def _round_sphere(cs: CrossSection) -> bool:
    return isinstance(cs, SphereSection) and cs.amplitude == 0.0


def _first_step(wf: WarpingFunction, r0: float) -> float:
    return min(1e-3, 0.1 / max(wf.d_log_f(r0), 1.0))


def _run_reduced_branch(wf, delta, log_fd, log_fpd, rtol, atol, tau_stop):
    """Forward run of (r, theta, tau_scaled) from the lowest point."""
    R = wf.domain_radius
    L0 = log_fpd + log_fd

    def rhs(_, s):
        r, th = s[0], s[1]
        return [math.sin(th),
                wf.d_log_f(r) * math.cos(th),
                math.exp(L0 - 2.0 * wf.log_f(r))]

    def exit_event(_, s):
        return s[0] - R
    exit_event.terminal = True
    exit_event.direction = 1.0
    events = [exit_event]
    fpd = math.exp(log_fpd) if log_fpd > -745 else 0.0
    if tau_stop is not None and fpd > 0.0:
        def tau_event(_, s):
            return s[2] - tau_stop * fpd
        tau_event.terminal = True
        events.append(tau_event)
    else:
        tau_stop = None

    sol = solve_ivp(
        rhs, (0.0, 2.0 * R + 1.0), [delta, 0.0, 0.0], method="DOP853",
        rtol=rtol, atol=atol, dense_output=True, events=events,
        first_step=_first_step(wf, delta),
    )
    if not sol.success and sol.status != 1:
        raise IntegrationError(f"stepper failed: {sol.message}")
    branch = _Branch(1)
    branch.legs = [_Leg(sol.sol, 0.0, sol.t[-1], 0)]
    branch.t_end = float(sol.t[-1])
    branch.exited = len(sol.t_events[0]) > 0
    branch.stopped_by_tau = tau_stop is not None and len(sol.t_events[1]) > 0
    if not branch.exited and not branch.stopped_by_tau:
        raise IntegrationError("trajectory truncated before exit at r=R")
    return branch, sol.t


def _full_rhs_factory(wf, cs, chart):
    dim = cs.dim
    if _round_sphere(cs):
        def rhs(_, s):
            r, th, psi = s[0], s[1], s[2]
            ep, ef = s[4], s[5]
            f = wf.f(r)
            f2 = f * f
            sp = math.sin(psi)
            cp = math.cos(psi)
            inv_sp2 = 1.0 / (sp * sp)
            norm2 = ep * ep + ef * ef * inv_sp2
            return [
                math.sin(th),
                wf.d_log_f(r) * math.cos(th),
                ep / f2,
                ef * inv_sp2 / f2,
                ef * ef * cp * inv_sp2 / (sp * f2),
                0.0,
                math.sqrt(norm2) / f2,
            ]
        return rhs

    def rhs(_, s):
        state = GeodesicState(0.0, s[0], s[1], s[2:2 + dim], s[2 + dim:2 + 2 * dim],
                              chart=chart)
        dr, dth, dy, deta = vector_field(wf, cs, state)
        dtau = cs.eta_norm(s[0], state.y, state.eta, chart) / wf.f(s[0]) ** 2
        return [dr, dth, *dy, *deta, dtau]

    return rhs


def _run_full_branch(wf, cs, start: GeodesicState, rtol, atol, tau_stop):
    """Forward run of the full system, switching sphere charts as needed."""
    R = wf.domain_radius
    dim = cs.dim
    chart = start.chart
    t0 = 0.0
    state = np.concatenate([[start.r, start.theta], start.y, start.eta, [0.0]])
    branch = _Branch(1)
    band_lo, band_hi = CHART_BAND_LO, CHART_BAND_HI

    for _ in range(4096):
        def exit_event(_, s):
            return s[0] - R
        exit_event.terminal = True
        exit_event.direction = 1.0
        events = [exit_event]
        if tau_stop is not None:
            def tau_event(_, s):
                return s[-1] - tau_stop
            tau_event.terminal = True
            events.append(tau_event)
        if isinstance(cs, SphereSection):
            def band_event(_, s, lo=band_lo, hi=band_hi):
                return min(s[2] - lo, hi - s[2])
            band_event.terminal = True
            events.append(band_event)

        sol = solve_ivp(
            _full_rhs_factory(wf, cs, chart), (t0, 2.0 * R + 1.0), state,
            method="DOP853", rtol=rtol, atol=atol, dense_output=True,
            events=events, first_step=_first_step(wf, state[0]) if t0 == 0.0 else None,
        )
        if not sol.success and sol.status != 1:
            raise IntegrationError(f"stepper failed: {sol.message}")
        branch.legs.append(_Leg(sol.sol, t0, float(sol.t[-1]), chart))
        branch.t_end = float(sol.t[-1])
        if len(sol.t_events[0]) > 0:
            branch.exited = True
            return branch
        if tau_stop is not None and len(sol.t_events[1]) > 0:
            branch.stopped_by_tau = True
            return branch
        if sol.status != 1:
            raise IntegrationError("trajectory truncated before exit at r=R")

        # hit the chart band edge: move to the rotated chart when it is
        # strictly more interior, otherwise widen the working band once
        state = sol.y[:, -1]
        t0 = float(sol.t[-1])
        y_cur, eta_cur = state[2:2 + dim], state[2 + dim:2 + 2 * dim]
        other = 1 - chart
        y_new, eta_new = switch_chart(chart, y_cur, eta_cur, other)
        margin_cur = abs(math.cos(y_cur[0]))
        margin_new = abs(math.cos(y_new[0]))
        if margin_new < margin_cur - 1e-12:
            chart = other
            state = np.concatenate([state[:2], y_new, eta_new, state[-1:]])
            band_lo, band_hi = CHART_BAND_LO, CHART_BAND_HI
        else:
            if band_lo < CHART_BAND_LO - 0.05:
                raise IntegrationError("chart switching stalled near band edge")
            band_lo -= 0.1
            band_hi += 0.1
    raise IntegrationError("too many chart switches")


def integrate(
    wf: WarpingFunction,
    cs: CrossSection,
    start: GeodesicState,
    direction: str = "both",
    rtol: float = 1e-10,
    atol: float = 1e-12,
    dense_nodes: int = 2048,
    tau_stop: Optional[float] = None,
) -> Trajectory:
    """Integrate a lifted geodesic from ``start`` until it exits at r = R.

    ``direction`` is "forward", "backward" or "both"; the backward branch is
    produced by mirroring (theta, eta) -> (-theta, -eta) and running forward.
    ``tau_stop`` optionally terminates each branch once |tau| exceeds it
    (the trajectory is then marked truncated).
    """
    if direction not in ("forward", "backward", "both"):
        raise ValueError(f"unknown direction {direction!r}")
    R = wf.domain_radius
    if not 0.0 < start.r < R:
        raise IntegrationError(f"start r={start.r:g} outside (0, R)")

    log_fd_at = wf.log_f(start.r)
    eta_norm0 = cs.eta_norm(start.r, start.y, start.eta, start.chart)
    launched_winding = abs(start.theta) < 1e-12
    is_radial = (not launched_winding) and eta_norm0 < RADIAL_ETA_FACTOR * max(
        math.exp(log_fd_at), 5e-324
    )
    if is_radial and abs(abs(math.sin(start.theta)) - 1.0) > 1e-9:
        raise IntegrationError("state with eta=0 must be radial (|sin theta| = 1)")

    if is_radial:
        return _radial_trajectory(wf, cs, start, direction, dense_nodes)

    delta = start.r if launched_winding else None
    if delta is None:
        raise IntegrationError(
            "integrate expects either a radial state or a lowest-point state "
            "from launch_winding (theta = 0)"
        )
    log_fd = wf.log_f(delta)
    # f'(delta) = f(delta) * (log f)'(delta): assemble its log from pieces so
    # the exponential families survive far below double-precision range
    log_fpd = log_fd + math.log(wf.d_log_f(delta))
    fpd = math.exp(log_fpd) if log_fpd > -745 else 0.0

    reduced = _is_reduced(cs)
    if not reduced and math.exp(log_fd) == 0.0:
        raise IntegrationError(
            "f(delta) underflows double precision; only unperturbed circle "
            "sections support this regime"
        )

    branches: List[_Branch] = []
    step_times: List[np.ndarray] = []
    if reduced:
        fwd, times = _run_reduced_branch(wf, delta, log_fd, log_fpd, rtol, atol, tau_stop)
        # the reduced system is identical under time reversal, so both
        # branches share one forward run
        if direction in ("forward", "both"):
            branches.append(fwd)
            step_times.append(times)
        if direction in ("backward", "both"):
            bwd = _Branch(-1)
            bwd.legs, bwd.t_end = fwd.legs, fwd.t_end
            bwd.exited, bwd.stopped_by_tau = fwd.exited, fwd.stopped_by_tau
            branches.append(bwd)
            step_times.append(times)
    else:
        if direction in ("forward", "both"):
            b = _run_full_branch(wf, cs, start, rtol, atol, tau_stop)
            branches.append(b)
            step_times.append(_branch_times(b))
        if direction in ("backward", "both"):
            mirrored = GeodesicState(0.0, start.r, -start.theta, start.y.copy(),
                                     -start.eta, chart=start.chart)
            b = _run_full_branch(wf, cs, mirrored, rtol, atol, tau_stop)
            b.sign = -1
            branches.append(b)
            step_times.append(_branch_times(b))

    ctx = {
        "kind": "reduced" if reduced else "full",
        "branches": branches,
        "wf": wf,
        "cs": cs,
        "dim": cs.dim,
        "fpd": fpd,
        "log_fd": log_fd,
        "log_fpd": log_fpd,
        "y0": start.y.copy(),
        "dir": start.wind_sign,
        "scale": getattr(cs, "scale", 1.0),
        "eta_comp": (start.wind_sign * getattr(cs, "scale", 1.0)
                     * (math.exp(log_fd) if log_fd > -745 else 0.0)),
    }
    return _assemble(wf, cs, ctx, branches, step_times, delta, dense_nodes,
                     rtol, atol, tau_stop)


def integrate_winding(wf, cs, delta, y0, v0, **kwargs) -> Trajectory:
    return integrate(wf, cs, launch_winding(wf, cs, delta, y0, v0), **kwargs)


def _branch_times(branch: _Branch) -> np.ndarray:
    # accepted-step times are not retained by solve_ivp's dense solution
    # individually per leg, so sample each leg at its interpolant nodes
    times = []
    for leg in branch.legs:
        ts = getattr(leg.sol, "ts", None)
        if ts is not None:
            times.append(np.asarray(ts))
        else:
            times.append(np.linspace(leg.t0, leg.t1, 64))
    return np.unique(np.concatenate(times))


def _radial_trajectory(wf, cs, start, direction, dense_nodes):
    R = wf.domain_radius
    sgn = 1.0 if math.sin(start.theta) > 0 else -1.0
    r0 = start.r
    # forward/backward extents until r reaches R or 0
    t_hi = (R - r0) / sgn if sgn > 0 else r0 / 1.0
    t_lo = -(r0 if sgn > 0 else (R - r0))
    if direction == "forward":
        t_lo = 0.0
    elif direction == "backward":
        t_hi = 0.0
    t = np.linspace(t_lo, t_hi, max(dense_nodes, 2))
    r = np.clip(r0 + sgn * t, 0.0, R)
    n = len(t)
    dim = cs.dim
    zeros = np.zeros(n)
    rho = np.array([math.exp(wf.log_f(x)) if x > 0 else 0.0 for x in r])
    ctx = {"kind": "radial", "branches": [], "r0": r0, "theta_sign": sgn,
           "wf": wf, "cs": cs, "dim": dim, "fpd": 1.0}
    return Trajectory(
        t=t, r=r, theta=np.full(n, start.theta),
        y=np.tile(start.y, (n, 1)), eta=np.zeros((n, dim)),
        chart_ids=np.full(n, start.chart, dtype=int),
        hamiltonian=np.ones(n), clairaut=zeros, clairaut_rel=zeros,
        eta_norm=zeros, speed_Y=zeros, tau=zeros, tau_scaled=zeros,
        rho=rho, u=zeros,
        exit_events={"t_min": None, "t_exit_forward": t_hi if sgn > 0 else None,
                     "t_exit_backward": None},
        classification="radial", delta=None,
        meta={"warp": wf.label, "radial": True}, ctx=ctx,
    )


def _assemble(wf, cs, ctx, branches, step_times, delta, dense_nodes, rtol, atol,
              tau_stop):
    t_min = min((-b.t_end if b.sign < 0 else 0.0) for b in branches)
    t_max = max((b.t_end if b.sign > 0 else 0.0) for b in branches)
    parts = [np.linspace(t_min, t_max, dense_nodes), np.array([0.0])]
    for b, times in zip(branches, step_times):
        parts.append(b.sign * times)
    t_all = np.unique(np.concatenate(parts))
    t_all = t_all[(t_all >= t_min - 1e-15) & (t_all <= t_max + 1e-15)]

    n = len(t_all)
    dim = ctx["dim"]
    r = np.empty(n)
    theta = np.empty(n)
    y = np.empty((n, dim))
    eta = np.empty((n, dim))
    chart_ids = np.zeros(n, dtype=int)
    tau_scaled = np.empty(n)

    for b in branches:
        mask = (t_all >= 0) if b.sign > 0 else (t_all < 0)
        idxs = np.nonzero(mask)[0]
        for i in idxs:
            s = abs(t_all[i])
            x, chart = b.eval(s)
            sgn = 1.0 if t_all[i] >= 0 else -1.0
            r[i] = x[0]
            theta[i] = sgn * x[1]
            chart_ids[i] = chart
            if ctx["kind"] == "reduced":
                tau_scaled[i] = sgn * x[2]
                if ctx["fpd"] > 0.0:
                    y[i, 0] = ctx["y0"][0] + ctx["dir"] * tau_scaled[i] / (
                        ctx["fpd"] * ctx["scale"])
                else:
                    # the unwrapped angle overflows double range; only scaled
                    # quantities are meaningful here
                    y[i, 0] = math.nan
                eta[i, 0] = ctx["eta_comp"]
            else:
                y[i] = x[2:2 + dim]
                eta[i] = sgn * x[2 + dim:2 + 2 * dim]
                tau_scaled[i] = sgn * x[-1] * ctx["fpd"]

    fpd = ctx["fpd"]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        if fpd > 0.0:
            tau = tau_scaled / fpd
        else:
            tau = np.array([math.copysign(math.inf, v) if v != 0.0 else 0.0
                            for v in tau_scaled])
    log_fd = ctx["log_fd"]
    log_f_r = np.array([wf.log_f(x) for x in r])
    rho = np.where(log_f_r > -745, np.exp(np.maximum(log_f_r, -745)), 0.0)

    if ctx["kind"] == "reduced":
        with np.errstate(over="ignore"):
            log_eta = np.full(n, log_fd)
            eta_norm = np.where(log_eta > -745, np.exp(np.maximum(log_eta, -745)), 0.0)
            ratio2 = np.exp(2.0 * (log_fd - log_f_r))
            hamiltonian = np.sin(theta) ** 2 + ratio2
            # conservation holds in the product f(r)*cos(theta), so take the
            # log first: both factors can individually leave double range
            clairaut_rel = np.expm1(
                log_f_r - log_fd + np.log(np.maximum(np.cos(theta), 1e-300))
            )
            clairaut = rho * np.cos(theta)
            speed_Y = np.exp(np.minimum(log_fd - 2.0 * log_f_r, 709.0))
    else:
        eta_norm = np.empty(n)
        if _round_sphere(cs):
            sp = np.sin(y[:, 0])
            eta_norm = np.sqrt(eta[:, 0] ** 2 + (eta[:, 1] / sp) ** 2)
        else:
            for i in range(n):
                eta_norm[i] = cs.eta_norm(r[i], y[i], eta[i], int(chart_ids[i]))
        hamiltonian = np.sin(theta) ** 2 + (eta_norm / rho) ** 2
        clairaut = rho * np.cos(theta)
        clairaut_rel = clairaut / math.exp(log_fd) - 1.0
        speed_Y = eta_norm / rho**2

    shell_drift = float(np.max(np.abs(hamiltonian - 1.0)))
    if shell_drift > SHELL_DRIFT_LIMIT:
        raise IntegrationError(
            f"unit-speed shell drift {shell_drift:.3g} exceeds {SHELL_DRIFT_LIMIT:g}"
        )

    u = np.empty(n)
    for i in range(n):
        sth = math.sin(theta[i])
        la = log_f_r[i] + (math.log(abs(sth)) if abs(sth) > 0 else -math.inf)
        if la <= -745:
            u[i] = 0.0
        else:
            u[i] = math.copysign(wf.F(math.exp(la)), sth)

    fwd = next((b for b in branches if b.sign > 0), None)
    bwd = next((b for b in branches if b.sign < 0), None)
    exit_events = {
        "t_min": 0.0,
        "t_exit_forward": fwd.t_end if (fwd and fwd.exited) else None,
        "t_exit_backward": -bwd.t_end if (bwd and bwd.exited) else None,
        "truncated_by_tau": any(b.stopped_by_tau for b in branches),
    }
    meta = {
        "warp": wf.label,
        "delta": delta,
        "R": wf.domain_radius,
        "c_bound": cs.c_bound,
        "rtol": rtol,
        "atol": atol,
        "tau_stop": tau_stop,
        "shell_drift": shell_drift,
        "path": ctx["kind"],
    }
    return Trajectory(
        t=t_all, r=r, theta=theta, y=y, eta=eta, chart_ids=chart_ids,
        hamiltonian=hamiltonian, clairaut=clairaut, clairaut_rel=clairaut_rel,
        eta_norm=eta_norm, speed_Y=speed_Y, tau=tau, tau_scaled=tau_scaled,
        rho=rho, u=u, exit_events=exit_events, classification="winding",
        delta=delta, meta=meta, ctx=ctx,
    )


# ---------------------------------------------------------------------------
# classification, lengths, reparametrization


def classify(traj: Trajectory) -> str:
    """Radial iff eta vanishes (relative to f(r)) at every sample."""
    if len(traj.t) == 0:
        raise ValueError("empty trajectory")
    if traj._ctx["kind"] == "reduced" and traj._ctx["log_fd"] <= -745:
        # |eta| = f(delta) is positive but below double range; still winding
        return "winding"
    # floor applied after the multiply: the product underflows where rho = 0
    small = traj.eta_norm <= np.maximum(RADIAL_ETA_FACTOR * traj.rho, 5e-324)
    if np.all(small):
        return "radial"
    if np.any(small):
        raise IntegrationError("mixed radial/winding evidence along trajectory")
    return "winding"


def winding_length(traj: Trajectory) -> float:
    """Total angular length: final tau minus initial tau, as integrated."""
    if traj.classification != "winding":
        raise ValueError("winding_length requires a winding trajectory")
    if traj.exit_events.get("truncated_by_tau"):
        raise IntegrationError("trajectory truncated before exit; no full length")
    if traj.exit_events.get("t_exit_forward") is None or \
            traj.exit_events.get("t_exit_backward") is None:
        raise IntegrationError("trajectory does not span entry to exit")
    return float(traj.tau[-1] - traj.tau[0])


def normalized_winding_length(traj: Trajectory) -> float:
    """f'(delta) times the winding length, finite even when the length is not."""
    if traj.exit_events.get("truncated_by_tau"):
        raise IntegrationError("trajectory truncated before exit; no full length")
    return float(traj.tau_scaled[-1] - traj.tau_scaled[0])


def reparametrize_tau(traj: Trajectory, n: int = 512,
                      window: Optional[Tuple[float, float]] = None) -> Trajectory:
    """Resample a winding trajectory on a uniform tau grid.

    The result carries ``eta_bar`` = eta / f(delta) and has ``tau`` as the
    primary uniform coordinate; ``t`` holds the matching times.
    """
    if traj.classification != "winding":
        raise ValueError("reparametrize_tau requires a winding trajectory")
    lo = traj.tau[0] if window is None else window[0]
    hi = traj.tau[-1] if window is None else window[1]
    lo = max(lo, float(traj.tau[0]))
    hi = min(hi, float(traj.tau[-1]))
    taus = np.linspace(lo, hi, n)
    ts = np.array([traj.t_of_tau(tv) for tv in taus])

    dim = traj._ctx["dim"]
    r = np.empty(n)
    theta = np.empty(n)
    y = np.empty((n, dim))
    eta = np.empty((n, dim))
    chart_ids = np.zeros(n, dtype=int)
    for i, tv in enumerate(ts):
        st = traj.state_at(tv)
        r[i], theta[i], y[i], eta[i], chart_ids[i] = st.r, st.theta, st.y, st.eta, st.chart

    wf = traj._ctx["wf"]
    log_fd = traj._ctx["log_fd"]
    fd = math.exp(log_fd) if log_fd > -745 else 0.0
    if traj._ctx["kind"] == "reduced":
        cs = traj._ctx["cs"]
        eta_bar = np.full((n, 1), traj._ctx["dir"] * cs.scale)
    else:
        eta_bar = eta / fd
    log_f_r = np.array([wf.log_f(x) for x in r])
    rho = np.where(log_f_r > -745, np.exp(np.maximum(log_f_r, -745)), 0.0)

    out = Trajectory(
        t=ts, r=r, theta=theta, y=y, eta=eta, chart_ids=chart_ids,
        hamiltonian=np.sin(theta) ** 2 + np.exp(2.0 * (log_fd - log_f_r))
        if traj._ctx["kind"] == "reduced" else np.interp(ts, traj.t, traj.hamiltonian),
        clairaut=rho * np.cos(theta),
        clairaut_rel=np.exp(log_f_r - log_fd) * np.cos(theta) - 1.0
        if traj._ctx["kind"] == "reduced" else np.interp(ts, traj.t, traj.clairaut_rel),
        eta_norm=np.interp(ts, traj.t, traj.eta_norm),
        speed_Y=np.interp(ts, traj.t, traj.speed_Y),
        tau=taus, tau_scaled=taus * traj._ctx["fpd"], rho=rho,
        u=np.interp(ts, traj.t, traj.u),
        exit_events=dict(traj.exit_events),
        classification="winding", delta=traj.delta,
        meta={**traj.meta, "parametrization": "tau"}, ctx=traj._ctx,
    )
    out.eta_bar = eta_bar
    return out


def log_eta_rate(traj: Trajectory, i: int) -> float:
    """d/dt log|eta| at sample i, from the metric data (not finite differences)."""
    cs = traj._ctx["cs"]
    wf = traj._ctx["wf"]
    if traj._ctx["kind"] == "reduced":
        return 0.0
    r, yv, ev, chart = traj.r[i], traj.y[i], traj.eta[i], int(traj.chart_ids[i])
    h = cs.metric(r, yv, chart)
    hinv = np.linalg.inv(h)
    sharp = hinv @ ev
    norm2 = float(ev @ sharp)
    if norm2 == 0.0:
        return 0.0
    dh = cs.d_r_metric(r, yv, chart)
    return -math.sin(traj.theta[i]) * float(sharp @ dh @ sharp) / (2.0 * norm2)
