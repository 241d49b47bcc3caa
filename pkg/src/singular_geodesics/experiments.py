"""Verification campaigns: delta sweeps against the length constant, radial
bound checks, the comparison principle, and convergence to the reference
geodesic of the link."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .cross_sections import (
    CircleSection,
    CrossSection,
    SphereSection,
    base_geodesic,
    circle_section,
    default_circle_shape,
    sphere_section,
)
from .errors import IntegrationError, NonOscillationError, QuadratureError
from .geodesic_flow import (
    Trajectory,
    integrate_winding,
    log_eta_rate,
    normalized_winding_length,
)
from .warp_profiles import (
    WarpingFunction,
    WarpKind,
    compute_Cf,
    make_power_warp,
    profile_to_warp,
)

__all__ = [
    "SweepResult",
    "BoundsReport",
    "ComparisonReport",
    "LimitReport",
    "default_delta_ladder",
    "delta_sweep",
    "verify_radial_bounds",
    "comparison_test",
    "limit_geodesic_test",
    "figure1_data",
    "run_bounds_campaign",
    "run_comparison_campaign",
    "closed_form_winding_length",
]


def thread_count(n_tasks: int) -> int:
    cap = os.environ.get("SG_THREADS", "")
    try:
        cap_val = int(cap) if cap else 0
    except ValueError:
        cap_val = 0
    avail = os.cpu_count() or 1
    if cap_val > 0:
        avail = min(avail, cap_val)
    return max(1, min(avail, n_tasks))


# ---------------------------------------------------------------------------
# delta sweeps


@dataclass
class SweepResult:
    deltas: np.ndarray
    lengths: np.ndarray
    normalized: np.ndarray
    extrapolated_limit: float
    reference_Cf: float
    errors_rel: np.ndarray
    converged: bool
    note: str = ""
    config: dict = field(default_factory=dict)


def default_delta_ladder(wf: WarpingFunction, top: float = 0.3) -> np.ndarray:
    """Geometric ladder with ratio about 1/sqrt(10), floor 1e-4 for power-law
    warps and 1e-3 for the exponential families (f' underflows sooner)."""
    exp_like = ":" in wf.label and wf.label.split(":")[0] in ("expinv", "logpow")
    floor = 1e-3 if exp_like else 1e-4
    top = min(top, 0.6 * wf.domain_radius)
    n = max(2, int(round(2.0 * math.log10(top / floor))) + 1)
    return np.geomspace(top, floor, n)


def _aitken(values: Sequence[float]) -> float:
    """Aitken delta-squared on the last three entries; falls back to the last
    value when the increments do not support acceleration."""
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        return float(v[-1])
    d1 = v[-2] - v[-3]
    d2 = v[-1] - v[-2]
    denom = d2 - d1
    if denom == 0.0 or not np.isfinite(denom):
        return float(v[-1])
    acc = v[-1] - d2 * d2 / denom
    return float(acc) if np.isfinite(acc) else float(v[-1])


def delta_sweep(
    wf: WarpingFunction,
    cs: CrossSection,
    delta_list: Optional[Sequence[float]] = None,
    y0=0.0,
    v0=1.0,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    reference_Cf: Optional[float] = None,
) -> SweepResult:
    """Measure winding lengths over a decreasing delta ladder and compare
    f'(delta) * length against the length constant."""
    deltas = np.asarray(
        default_delta_ladder(wf) if delta_list is None else delta_list, dtype=float
    )
    if np.any(np.diff(deltas) >= 0):
        raise ValueError("delta ladder must be strictly decreasing")
    if np.any((deltas <= 0) | (deltas >= wf.domain_radius)):
        raise ValueError("deltas must lie in (0, R)")

    note = ""
    if reference_Cf is None:
        try:
            reference_Cf = compute_Cf(wf, tol=1e-9)
        except (NonOscillationError, QuadratureError) as exc:
            reference_Cf = math.nan
            note = f"no reference constant: {exc}"

    def one(delta: float) -> Tuple[float, float]:
        try:
            traj = integrate_winding(wf, cs, delta, y0, v0, rtol=rtol, atol=atol,
                                     dense_nodes=256)
        except IntegrationError as exc:
            raise IntegrationError(f"delta={delta:g}: {exc}") from exc
        norm = normalized_winding_length(traj)
        length = float(traj.tau[-1] - traj.tau[0])
        return length, norm

    workers = thread_count(len(deltas))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, deltas))
    else:
        results = [one(d) for d in deltas]
    lengths = np.array([rr[0] for rr in results])
    normalized = np.array([rr[1] for rr in results])

    extrapolated = _aitken(normalized)
    if math.isnan(reference_Cf):
        errors = np.full(len(deltas), math.nan)
        converged = False
        if not note:
            note = "no reference constant"
    else:
        errors = np.abs(normalized / reference_Cf - 1.0)
        tail = errors[-4:]
        converged = len(tail) >= 2 and bool(np.all(np.diff(tail) < 0))
        if not converged:
            note = note or "not converged: errors not decreasing over last 4 deltas"
    return SweepResult(
        deltas=deltas, lengths=lengths, normalized=normalized,
        extrapolated_limit=extrapolated, reference_Cf=float(reference_Cf),
        errors_rel=errors, converged=converged, note=note,
        config={"warp": wf.label, "R": wf.domain_radius, "rtol": rtol,
                "atol": atol, "c_bound": cs.c_bound},
    )


def closed_form_winding_length(wf: WarpingFunction, delta: float,
                               tol: float = 1e-11) -> float:
    """Independent length oracle for warped products:
    l = 2 * int_delta^R f(delta) / (f^2 sqrt(1 - (f(delta)/f)^2)) dr,
    with the integrable endpoint removed by r = delta + s^2."""
    R = wf.domain_radius
    fd = wf.f(delta)

    def integrand(s: float) -> float:
        r = delta + s * s
        fr = wf.f(r)
        q = fd / fr
        return 2.0 * s * fd / (fr * fr * math.sqrt(max(1.0 - q * q, 1e-300)))

    val, _ = quad(integrand, 0.0, math.sqrt(R - delta), epsabs=0.0, epsrel=tol,
                  limit=400)
    return 2.0 * val


# ---------------------------------------------------------------------------
# radial bounds (dichotomy side conditions)


@dataclass
class BoundsReport:
    passed: bool
    worst_lower: float
    worst_upper: float
    worst_eta: float
    strict_margin: Optional[float]
    note: str = ""


def verify_radial_bounds(
    traj: Trajectory,
    delta: Optional[float] = None,
    c_bound: Optional[float] = None,
    R: Optional[float] = None,
    slack: float = 1e-8,
) -> BoundsReport:
    """Check (1 - C*delta)|t| <= r(t) <= |t| + delta with C = c*exp(c*R),
    the two-sided exponential eta bounds, and strict r > |t| for warped data."""
    if traj.classification == "radial":
        return BoundsReport(True, 0.0, 0.0, 0.0, None,
                            note="radial trajectory: bounds degenerate, skipped")
    delta = traj.delta if delta is None else delta
    c_bound = traj.meta.get("c_bound", 0.0) if c_bound is None else c_bound
    R = traj.meta.get("R") if R is None else R
    C = c_bound * math.exp(c_bound * R)

    t = np.abs(traj.t)
    lower = (1.0 - C * delta) * t - traj.r
    upper = traj.r - (t + delta)
    worst_lower = float(np.max(lower))
    worst_upper = float(np.max(upper))
    ok = worst_lower <= slack and worst_upper <= slack

    # eta bounds, in log form: |log(|eta| / f(delta))| <= c (r - delta)
    ctx = traj._ctx
    log_fd = ctx.get("log_fd")
    if log_fd is not None and np.all(traj.eta_norm > 0):
        excess = np.abs(np.log(traj.eta_norm) - log_fd) - c_bound * (traj.r - delta)
        worst_eta = float(np.max(excess))
    else:
        worst_eta = 0.0
    ok = ok and worst_eta <= slack

    strict_margin = None
    note = ""
    if c_bound == 0.0:
        margin = traj.r - t
        strict_margin = float(np.min(margin))
        if strict_margin <= 0.0:
            ok = False
            note = "warped strict bound r > |t| violated"
    return BoundsReport(ok, worst_lower, worst_upper, worst_eta, strict_margin, note)


# ---------------------------------------------------------------------------
# comparison principle


@dataclass
class ComparisonReport:
    passed: bool
    min_gap: float
    t_worst: float
    note: str = ""


def comparison_test(
    wf: WarpingFunction,
    cs: CrossSection,
    delta: float,
    delta_bar: float,
    y0=0.0,
    v0=1.0,
    y0_bar=None,
    v0_bar=None,
    n_nodes: int = 801,
    rtol: float = 1e-10,
) -> ComparisonReport:
    """For a warped product and 0 < delta < delta_bar, the radial components
    satisfy r(t) < rbar(t) at every common time."""
    if cs.c_bound != 0.0:
        raise ValueError("comparison principle requires a warped product (c = 0)")
    if not wf.is_convex_kind:
        raise ValueError("comparison principle requires a convex warp")
    if not 0.0 < delta < delta_bar < wf.domain_radius:
        raise ValueError("need 0 < delta < delta_bar < R (equal deltas rejected)")
    y0_bar = y0 if y0_bar is None else y0_bar
    v0_bar = v0 if v0_bar is None else v0_bar

    lo = integrate_winding(wf, cs, delta, y0, v0, rtol=rtol, dense_nodes=128)
    hi = integrate_winding(wf, cs, delta_bar, y0_bar, v0_bar, rtol=rtol,
                           dense_nodes=128)
    t_span = min(-lo.t[0], lo.t[-1], -hi.t[0], hi.t[-1])
    ts = np.linspace(-t_span, t_span, n_nodes)
    gaps = np.array([hi.r_of_t(tv) - lo.r_of_t(tv) for tv in ts])
    i = int(np.argmin(gaps))
    return ComparisonReport(
        passed=bool(np.all(gaps > 0.0)),
        min_gap=float(gaps[i]),
        t_worst=float(ts[i]),
    )


# ---------------------------------------------------------------------------
# limit geodesic on the link


@dataclass
class LimitReport:
    passed: bool
    deltas: np.ndarray
    sup_distances: np.ndarray
    window: Tuple[float, float]
    note: str = ""


def limit_geodesic_test(
    wf: WarpingFunction,
    cs: CrossSection,
    delta_ladder: Sequence[float],
    y0,
    v0,
    tau_window: Tuple[float, float] = (-2.0, 2.0),
    n_nodes: int = 121,
    rtol: float = 1e-10,
    final_threshold: float = 0.05,
    monotone_slack: float = 1e-8,
) -> LimitReport:
    """After unit-speed reparametrization of the link projection, compare
    against the reference geodesic of (Y, h_0) on a fixed tau window; the
    sup distance must decrease along the ladder and end below the threshold."""
    if wf.kind is WarpKind.CONICAL:
        half = math.pi / 2.0
        if tau_window[0] <= -half or tau_window[1] >= half:
            raise ValueError(
                "conical warps only reach tau in (-pi/2, pi/2); shrink the window"
            )
    elif wf.kind is not WarpKind.CUSPIDAL:
        raise ValueError("limit geodesic test needs a convex warp")

    deltas = np.asarray(delta_ladder, dtype=float)
    note = ""
    sups = []
    tau_abs = max(abs(tau_window[0]), abs(tau_window[1]))
    for delta in deltas:
        traj = integrate_winding(wf, cs, delta, y0, v0, rtol=rtol,
                                 dense_nodes=128, tau_stop=tau_abs + 0.25)
        lo = max(tau_window[0], float(traj.tau[0]) + 1e-9)
        hi = min(tau_window[1], float(traj.tau[-1]) - 1e-9)
        if lo > tau_window[0] or hi < tau_window[1]:
            note = f"window clipped to [{lo:.3g}, {hi:.3g}] at delta={delta:g}"
        taus = np.linspace(lo, hi, n_nodes)
        worst = 0.0
        for tv in taus:
            st = traj.state_at(traj.t_of_tau(tv))
            ref = base_geodesic(cs, y0, v0, tv)
            if isinstance(cs, SphereSection):
                d = cs.h0_distance(st.y, ref, chart1=st.chart, chart2=0)
            else:
                d = cs.h0_distance(st.y, ref)
            worst = max(worst, d)
        sups.append(worst)
    sups = np.asarray(sups)
    decreasing = bool(np.all(np.diff(sups) < monotone_slack))
    passed = decreasing and sups[-1] < final_threshold
    return LimitReport(passed, deltas, sups, tau_window, note)


# ---------------------------------------------------------------------------
# randomized campaigns (drive acceptance-scale suites and the CLI verify)


def run_bounds_campaign(n_cases: int = 200, seed: int = 20240817,
                        rtol: float = 1e-9) -> List[BoundsReport]:
    rng = np.random.default_rng(seed)
    reports = []
    for _ in range(n_cases):
        alpha = float(rng.uniform(1.0, 2.5))
        delta = float(rng.uniform(0.05, 0.3))
        style = int(rng.integers(0, 3))
        wf = make_power_warp(alpha, R=1.5)
        if style == 0:
            cs = circle_section(2.0 * math.pi, domain_radius=1.5)
            y0, v0 = np.array([float(rng.uniform(0, 2 * math.pi))]), np.array([1.0])
        elif style == 1:
            amp = float(rng.uniform(0.02, 0.1))
            cs = circle_section(2.0 * math.pi, (amp, default_circle_shape), 1.5)
            y0, v0 = np.array([float(rng.uniform(0, 2 * math.pi))]), np.array([1.0])
        else:
            cs = sphere_section(domain_radius=1.5)
            y0 = np.array([math.pi / 2.0, float(rng.uniform(0, 2 * math.pi))])
            ang = float(rng.uniform(-0.6, 0.6))
            v0 = np.array([math.sin(ang), math.cos(ang)])
        traj = integrate_winding(wf, cs, delta, y0, v0, rtol=rtol, dense_nodes=256)
        reports.append(verify_radial_bounds(traj))
    return reports


def run_comparison_campaign(n_cases: int = 100, seed: int = 20240818,
                            rtol: float = 1e-10) -> List[ComparisonReport]:
    rng = np.random.default_rng(seed)
    cs = circle_section(2.0 * math.pi, domain_radius=1.5)
    reports = []
    for _ in range(n_cases):
        alpha = float(rng.uniform(1.0, 3.0))
        d1 = float(rng.uniform(0.02, 0.35))
        d2 = float(d1 + rng.uniform(0.02, 0.3))
        wf = make_power_warp(alpha, R=1.5)
        reports.append(comparison_test(wf, cs, d1, d2, rtol=rtol, n_nodes=401))
    return reports


# ---------------------------------------------------------------------------
# figure bundle: cone and cusp sample paths


def _cusp_embedding_tables(R: float):
    """z(r) for the surface obtained by rotating x = z^2, r = arc length."""

    def arclen(z: float) -> float:
        # int_0^z sqrt(1 + 4 w^2) dw, closed form
        return 0.5 * z * math.sqrt(1.0 + 4.0 * z * z) + 0.25 * math.asinh(2.0 * z)

    z_top = brentq(lambda z: arclen(z) - R, 0.0, R + 1.0, xtol=1e-14)

    def z_of_r(r: float) -> float:
        if r <= 0:
            return 0.0
        return brentq(lambda z: arclen(z) - r, 0.0, z_top * 1.0000001, xtol=1e-14)

    return z_of_r, z_top


def figure1_data(kind: str, R: float = 1.5, delta: float = 0.3) -> dict:
    """Sample paths of the flat cone (f = r) and the model cusp (f = r^2)
    through the product description and the embedded surface of revolution."""
    if kind not in ("cone", "cusp"):
        raise ValueError("kind must be 'cone' or 'cusp'")
    cs = circle_section(2.0 * math.pi, domain_radius=R)
    wf = make_power_warp(1.0 if kind == "cone" else 2.0, R=R)
    traj = integrate_winding(wf, cs, delta, 0.0, 1.0, dense_nodes=1024)
    length = float(traj.tau[-1] - traj.tau[0])
    n_windings = length / (2.0 * math.pi)
    predicted = compute_Cf(wf) / (2.0 * math.pi * wf.f_prime(delta))

    phi = traj.y[:, 0]
    if kind == "cone":
        # flat cone of total angle 2*pi: the surface is the plane itself
        xyz = np.column_stack([traj.r * np.cos(phi), traj.r * np.sin(phi),
                               np.zeros(len(phi))])
    else:
        z_of_r, _ = _cusp_embedding_tables(R)
        zs = np.array([z_of_r(rv) for rv in traj.r])
        ss = zs * zs
        xyz = np.column_stack([ss * np.cos(phi), ss * np.sin(phi), zs])
    return {
        "kind": kind,
        "t": traj.t,
        "r": traj.r,
        "phi": phi,
        "embedded_xyz": xyz,
        "winding_length": length,
        "winding_count_measured": n_windings,
        "winding_count_predicted": predicted,
        "swept_angle": float(abs(phi[-1] - phi[0])),
        "max_shell_residual": float(np.max(np.abs(traj.hamiltonian - 1.0))),
        "trajectory": traj,
    }
