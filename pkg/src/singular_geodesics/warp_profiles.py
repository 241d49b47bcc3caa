"""Warping-function families, the inverse-derivative limit functional, and the
universal length constant.

A warping function f scales the cross-section metric at distance r from an
isolated singularity: conical if f'(0) > 0, cuspidal if f'(0) = 0.  The
quantity driving the winding-length asymptotics is the limit of
F'(sigma*eps)/F'(eps) as eps -> 0, with F the inverse of f; its integral over
the angle variable gives the constant that normalizes winding lengths.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq

from .errors import NonOscillationError, QuadratureError

__all__ = [
    "WarpKind",
    "WarpingFunction",
    "FrakFEstimate",
    "MonotonicityReport",
    "make_power_warp",
    "make_exp_warp",
    "make_oscillating_F",
    "make_concave_sqrt_warp",
    "profile_to_warp",
    "estimate_frakF",
    "compute_Cf",
    "compute_Cf_detailed",
    "check_Cf_monotonicity",
    "parse_warp_spec",
    "grid_monotone_increasing",
    "grid_convex",
    "grid_concave",
]


class WarpKind(str, Enum):
    CONICAL = "conical"
    CUSPIDAL = "cuspidal"
    CONCAVE_EXPERIMENTAL = "concave_experimental"
    OSCILLATING_COUNTEREXAMPLE = "oscillating_counterexample"


@dataclass(frozen=True)
class WarpingFunction:
    """A radial scale factor f on (0, R) with inverse F and metadata.

    ``log_f`` and ``d_log_f`` (= f'/f) are kept as separate callables because
    the exponential cusp families underflow double precision long before
    their logarithms do; integrators work in log space where possible.
    """

    domain_radius: float
    f: Callable[[float], float]
    f_prime: Callable[[float], float]
    F: Callable[[float], float]
    F_prime: Callable[[float], float]
    kind: WarpKind
    label: str
    frakF_closed_form: Optional[Callable[[float], float]] = None
    log_f: Optional[Callable[[float], float]] = None
    d_log_f: Optional[Callable[[float], float]] = None

    def __post_init__(self):
        if self.domain_radius <= 0:
            raise ValueError("domain_radius must be positive")
        if self.log_f is None:
            f = self.f
            object.__setattr__(self, "log_f", lambda x: math.log(f(x)))
        if self.d_log_f is None:
            f, fp = self.f, self.f_prime
            object.__setattr__(self, "d_log_f", lambda x: fp(x) / f(x))

    @property
    def is_convex_kind(self) -> bool:
        return self.kind in (WarpKind.CONICAL, WarpKind.CUSPIDAL)

    def sample_grid(self, n: int = 512, span: float = 1e-6) -> np.ndarray:
        """Log-spaced grid inside (0, R), avoiding both endpoints."""
        R = self.domain_radius
        return np.geomspace(R * span, R * (1.0 - 1e-9), n)


@dataclass(frozen=True)
class FrakFEstimate:
    """Outcome of the geometric-ladder estimate of lim F'(sigma*eps)/F'(eps)."""

    sigma: float
    ladder_values: np.ndarray
    verdict: str  # "converged" | "oscillating" | "inconclusive"
    value: Optional[float] = None
    amplitude: Optional[float] = None
    diagnostic: str = ""


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    cf_small: float
    cf_big: float
    max_frak_excess: float
    note: str = ""


# ---------------------------------------------------------------------------
# discrete shape checks


def _second_divided_differences(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    s1 = np.diff(ys) / np.diff(xs)
    return np.diff(s1) / (xs[2:] - xs[:-2])


def grid_monotone_increasing(fn, lo: float, hi: float, n: int = 512) -> bool:
    xs = np.geomspace(lo, hi, n)
    ys = np.array([fn(x) for x in xs])
    return bool(np.all(np.diff(ys) > 0))


def grid_convex(fn, lo: float, hi: float, n: int = 512, tol: float = 1e-10) -> bool:
    xs = np.geomspace(lo, hi, n)
    ys = np.array([fn(x) for x in xs])
    return bool(np.all(_second_divided_differences(xs, ys) >= -tol))


def grid_concave(fn, lo: float, hi: float, n: int = 512, tol: float = 1e-10) -> bool:
    xs = np.geomspace(lo, hi, n)
    ys = np.array([fn(x) for x in xs])
    return bool(np.all(_second_divided_differences(xs, ys) <= tol))


# ---------------------------------------------------------------------------
# families


def make_power_warp(alpha: float, R: float = 1.5) -> WarpingFunction:
    """f(x) = x**alpha, the model conical (alpha=1) or cuspidal family."""
    if alpha < 1.0:
        raise ValueError(
            "alpha must be >= 1; use make_concave_sqrt_warp for the concave experiment"
        )
    if R <= 0:
        raise ValueError("R must be positive")
    inv = 1.0 / alpha
    return WarpingFunction(
        domain_radius=R,
        f=lambda x: x**alpha,
        f_prime=lambda x: alpha * x ** (alpha - 1.0),
        F=lambda y: y**inv,
        F_prime=lambda y: inv * y ** (inv - 1.0),
        kind=WarpKind.CONICAL if alpha == 1.0 else WarpKind.CUSPIDAL,
        label=f"power:{alpha:g}",
        frakF_closed_form=lambda sigma: sigma ** (inv - 1.0),
        log_f=lambda x: alpha * math.log(x),
        d_log_f=lambda x: alpha / x,
    )


def _logpow_max_R(mu: float) -> float:
    # convex iff mu*y^mu - y - (mu-1) >= 0 for y = log(1/x) >= log(1/R);
    # the largest zero of that expression is y = 1, so R <= 1/e.
    return math.exp(-1.0)


def _expinv_max_R(beta: float) -> float:
    return (beta / (beta + 1.0)) ** (1.0 / beta)


def make_exp_warp(family: str, param: float, R: Optional[float] = None) -> WarpingFunction:
    """Super-polynomial cusp families.

    ``log_power``: f(x) = exp(-log(1/x)**mu), mu > 1.
    ``exp_inverse_power``: f(x) = exp(-x**-beta), beta > 0.
    Both have limit functional 1/sigma, hence length constant 2.
    """
    if family == "log_power":
        mu = param
        if mu <= 1.0:
            raise ValueError("log_power requires mu > 1")
        r_max = _logpow_max_R(mu)
        if R is None:
            R = 0.9 * r_max
        if R > r_max * (1 + 1e-12):
            raise ValueError(
                f"R={R:g} too large for convexity of log_power:{mu:g}; "
                f"largest admissible R is {r_max:.6g}"
            )

        def lf(x: float) -> float:
            return -((math.log(1.0 / x)) ** mu)

        def dlf(x: float) -> float:
            return mu * (math.log(1.0 / x)) ** (mu - 1.0) / x

        def F(y: float) -> float:
            return math.exp(-((math.log(1.0 / y)) ** (1.0 / mu)))

        def F_prime(y: float) -> float:
            L = math.log(1.0 / y)
            return F(y) * (1.0 / mu) * L ** (1.0 / mu - 1.0) / y

        return WarpingFunction(
            domain_radius=R,
            f=lambda x: math.exp(lf(x)),
            f_prime=lambda x: math.exp(lf(x)) * dlf(x),
            F=F,
            F_prime=F_prime,
            kind=WarpKind.CUSPIDAL,
            label=f"logpow:{mu:g}",
            frakF_closed_form=lambda sigma: 1.0 / sigma,
            log_f=lf,
            d_log_f=dlf,
        )
    if family == "exp_inverse_power":
        beta = param
        if beta <= 0.0:
            raise ValueError("exp_inverse_power requires beta > 0")
        r_max = _expinv_max_R(beta)
        if R is None:
            R = r_max
        if R > r_max * (1 + 1e-12):
            raise ValueError(
                f"R={R:g} too large for convexity of expinv:{beta:g}; "
                f"largest admissible R is {r_max:.6g}"
            )

        def lf(x: float) -> float:
            return -(x**-beta)

        def dlf(x: float) -> float:
            return beta * x ** (-beta - 1.0)

        def F(y: float) -> float:
            return (math.log(1.0 / y)) ** (-1.0 / beta)

        def F_prime(y: float) -> float:
            L = math.log(1.0 / y)
            return (1.0 / beta) * L ** (-1.0 / beta - 1.0) / y

        return WarpingFunction(
            domain_radius=R,
            f=lambda x: math.exp(lf(x)),
            f_prime=lambda x: math.exp(lf(x)) * dlf(x),
            F=F,
            F_prime=F_prime,
            kind=WarpKind.CUSPIDAL,
            label=f"expinv:{beta:g}",
            frakF_closed_form=lambda sigma: 1.0 / sigma,
            log_f=lf,
            d_log_f=dlf,
        )
    raise ValueError(f"unknown exp warp family: {family!r}")


def oscillation_threshold(alpha: float) -> float:
    return (2.0 - alpha) / (1.0 - alpha) * (1.0 + alpha) / alpha


def make_oscillating_F(alpha: float, c: float, x_top: float = 0.5) -> WarpingFunction:
    """Warp whose inverse is F(x) = x**alpha * (c + sin(log x)).

    F is increasing and concave for c above the threshold, but the ratio
    F'(sigma*eps)/F'(eps) has no limit except when log(sigma) is a multiple
    of 2*pi.  The warp itself (the numeric inverse of F) is convex and
    perfectly integrable; only the length-constant machinery must refuse it.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    thresh = oscillation_threshold(alpha)
    if c < thresh:
        raise ValueError(
            f"c={c:g} below the monotonicity/concavity threshold {thresh:g}"
        )

    def F(x: float) -> float:
        return x**alpha * (c + math.sin(math.log(x)))

    def F_prime(x: float) -> float:
        s = math.log(x)
        return x ** (alpha - 1.0) * (alpha * c + alpha * math.sin(s) + math.cos(s))

    log_x_top = math.log(x_top)

    def _log_f(rho: float) -> float:
        # solve log F(e^s) = log rho for s; monotone in s
        target = math.log(rho)

        def g(s: float) -> float:
            return alpha * s + math.log(c + math.sin(s)) - target

        lo = min(-700.0, (target - math.log(c + 1.0)) / alpha - 2.0)
        # upper bracket past x_top: adaptive steppers probe r slightly
        # beyond R, and F stays monotone there (threshold is global)
        hi = log_x_top + 1.0
        return brentq(g, lo, hi, xtol=1e-14, rtol=8.9e-16)

    def f(rho: float) -> float:
        return math.exp(_log_f(rho))

    def f_prime(rho: float) -> float:
        return 1.0 / F_prime(f(rho))

    R = F(x_top)
    return WarpingFunction(
        domain_radius=R,
        f=f,
        f_prime=f_prime,
        F=F,
        F_prime=F_prime,
        kind=WarpKind.OSCILLATING_COUNTEREXAMPLE,
        label=f"osc:{alpha:g}:{c:g}",
        log_f=_log_f,
        d_log_f=lambda rho: 1.0 / (F_prime(f(rho)) * f(rho)),
    )


def make_concave_sqrt_warp(R: float = 1.0) -> WarpingFunction:
    """f(x) = sqrt(x): the concave borderline case with logarithmic length law."""
    if R <= 0:
        raise ValueError("R must be positive")
    return WarpingFunction(
        domain_radius=R,
        f=math.sqrt,
        f_prime=lambda x: 0.5 / math.sqrt(x),
        F=lambda y: y * y,
        F_prime=lambda y: 2.0 * y,
        kind=WarpKind.CONCAVE_EXPERIMENTAL,
        label="sqrt",
        frakF_closed_form=lambda sigma: sigma,
        log_f=lambda x: 0.5 * math.log(x),
        d_log_f=lambda x: 0.5 / x,
    )


# ---------------------------------------------------------------------------
# profile curves -> warping functions


def profile_to_warp(
    s: Callable[[float], float],
    s_prime: Callable[[float], float],
    z_max: float,
    grid: int = 4096,
    power_alpha: Optional[float] = None,
    label: str = "profile",
) -> WarpingFunction:
    """Convert an embedded profile curve into the intrinsic warping function.

    The radial coordinate is arc length along the generating curve,
    r(z) = integral of sqrt(1 + s'(w)^2); the warp is s re-expressed in r.
    ``power_alpha`` declares the s(z) = z**alpha fixture with alpha in
    (0, 2/3], whose derivative blows up at 0 but stays arc-length integrable.
    """
    if z_max <= 0:
        raise ValueError("z_max must be positive")
    # loose threshold: fractional-power profiles like z**(1/2) decay slowly
    if abs(s(z_max * 1e-13)) > 1e-4 * max(1.0, abs(s(z_max))):
        raise ValueError("profile must vanish at z=0")
    if power_alpha is not None and not 0.0 < power_alpha <= 2.0 / 3.0:
        raise ValueError("power profile with undefined slope needs alpha in (0, 2/3]")

    zs = np.concatenate([[0.0], np.geomspace(z_max * 1e-12, z_max, grid - 1)])
    svals = np.array([s(z) for z in zs[1:]])
    if np.any(svals <= 0) or np.any(np.diff(svals) <= 0):
        raise ValueError("profile must be positive and strictly increasing on (0, z_max]")

    def speed(w: float) -> float:
        return math.hypot(1.0, s_prime(w))

    # cumulative arc length on the node ladder; each cell integrated
    # adaptively (relative 1e-12 is sometimes unreachable on interpolated
    # profiles, but the absolute cell error stays negligible)
    seg = np.empty(grid - 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for i in range(grid - 1):
            seg[i], _ = quad(speed, zs[i], zs[i + 1], epsabs=0.0, epsrel=1e-12,
                             limit=100)
    r_nodes = np.concatenate([[0.0], np.cumsum(seg)])
    if np.any(np.diff(r_nodes) <= 0):
        raise RuntimeError("internal error: non-monotone arc length")  # pragma: no cover
    R = float(r_nodes[-1])

    def r_of_z(z: float) -> float:
        i = int(np.searchsorted(zs, z) - 1)
        i = max(0, min(i, grid - 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            tail, _ = quad(speed, zs[i], z, epsabs=0.0, epsrel=1e-12, limit=100)
        return float(r_nodes[i] + tail)

    def z_of_r(r: float) -> float:
        if r <= 0.0:
            return 0.0
        i = int(np.searchsorted(r_nodes, r) - 1)
        i = max(0, min(i, grid - 2))
        lo, hi = zs[i], zs[i + 1]
        if r >= r_nodes[-1]:
            return float(zs[-1])
        return brentq(lambda z: r_of_z(z) - r, lo, hi, xtol=1e-300, rtol=8.9e-16)

    def f(r: float) -> float:
        return float(s(z_of_r(r)))

    def f_prime(r: float) -> float:
        sp = s_prime(z_of_r(r))
        return float(sp / math.hypot(1.0, sp))

    s_top = float(s(z_max))

    def s_inv(rho: float) -> float:
        if rho <= 0.0:
            return 0.0
        i = int(np.searchsorted(svals, rho))
        lo = zs[i] if i > 0 else 0.0
        hi = zs[min(i + 1, grid - 1)]
        return brentq(lambda z: s(z) - rho, lo, hi, xtol=1e-300, rtol=8.9e-16)

    def F(rho: float) -> float:
        return r_of_z(s_inv(min(rho, s_top)))

    def F_prime(rho: float) -> float:
        return 1.0 / f_prime(F(rho))

    if power_alpha is not None and power_alpha < 1.0:
        kind = WarpKind.CONICAL
    else:
        sp0 = s_prime(z_max * 1e-9)
        kind = WarpKind.CUSPIDAL if abs(sp0) < 1e-6 else WarpKind.CONICAL
    return WarpingFunction(
        domain_radius=R,
        f=f,
        f_prime=f_prime,
        F=F,
        F_prime=F_prime,
        kind=kind,
        label=label,
    )


# ---------------------------------------------------------------------------
# the limit functional and the length constant


def estimate_frakF(
    wf: WarpingFunction,
    sigma: float,
    eps0: Optional[float] = None,
    ratio: float = 0.5,
    steps: int = 30,
) -> FrakFEstimate:
    """Geometric-ladder estimate of lim_{eps->0} F'(sigma*eps)/F'(eps)."""
    if sigma < 1.0:
        raise ValueError("sigma must be >= 1")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    if eps0 is None:
        eps0 = 1e-2 * wf.f(wf.domain_radius / 2.0)
    top = wf.f(wf.domain_radius * (1.0 - 1e-9))
    if sigma * eps0 > top:
        eps0 = 0.99 * top / sigma

    ladder = []
    diagnostic = ""
    for n in range(steps):
        eps = eps0 * ratio**n
        try:
            d0 = wf.F_prime(eps)
            d1 = wf.F_prime(sigma * eps)
        except (OverflowError, ValueError):
            diagnostic = f"F' evaluation failed at rung {n}"
            break
        if not (math.isfinite(d0) and math.isfinite(d1)) or d0 == 0.0:
            diagnostic = f"F' underflow at rung {n}"
            break
        ladder.append(d1 / d0)
    values = np.array(ladder)
    if len(values) < max(4, steps // 2):
        return FrakFEstimate(sigma, values, "inconclusive", diagnostic=diagnostic or "ladder too short")

    q = values[-max(len(values) // 4, 2):]
    spread = float((q.max() - q.min()) / abs(np.median(q)))
    if spread < 1e-3:
        value = float(q.mean())
        if wf.is_convex_kind:
            if not (1.0 / sigma - 1e-6 <= value <= 1.0 + 1e-6):
                return FrakFEstimate(
                    sigma, values, "inconclusive", value=value,
                    diagnostic="converged value outside [1/sigma, 1]",
                )
        return FrakFEstimate(sigma, values, "converged", value=value)
    incr = np.diff(values)
    signs = np.sign(incr[np.abs(incr) > 0])
    sign_changes = int(np.sum(signs[1:] != signs[:-1])) if len(signs) > 1 else 0
    if spread > 0.05 and sign_changes >= 2:
        return FrakFEstimate(sigma, values, "oscillating", amplitude=spread)
    return FrakFEstimate(sigma, values, "inconclusive", diagnostic=f"spread={spread:.3g}")


def _numeric_frakF(wf: WarpingFunction) -> Callable[[float], float]:
    """Ladder-based evaluation of the limit functional on a log-sigma grid,
    extended beyond sigma = 1e6 by the terminal log-log slope."""
    sigmas = np.geomspace(1.0, 1e6, 25)
    vals = []
    for sg in sigmas:
        est = estimate_frakF(wf, sg)
        if est.verdict == "oscillating":
            raise NonOscillationError("non-oscillation condition fails")
        if est.verdict != "converged":
            raise NonOscillationError(
                f"limit functional estimate inconclusive at sigma={sg:g}: {est.diagnostic}"
            )
        vals.append(est.value)
    logs = np.log(sigmas)
    logv = np.log(vals)
    tail_slope = (logv[-1] - logv[-3]) / (logs[-1] - logs[-3])

    def frak(sigma: float) -> float:
        if sigma <= 1.0:
            return 1.0
        ls = math.log(sigma)
        if ls >= logs[-1]:
            return math.exp(logv[-1] + tail_slope * (ls - logs[-1]))
        return math.exp(np.interp(ls, logs, logv))

    return frak


def compute_Cf_detailed(wf: WarpingFunction, tol: float = 1e-9) -> tuple[float, float]:
    """Adaptive quadrature of frakF(1/cos) over the angle range.

    The substitution angle = pi/2 - phi**2 removes the infinite endpoint
    derivative; the integrand itself is bounded by 1 for convex warps.
    Returns (value, error_estimate).
    """
    if wf.kind is WarpKind.OSCILLATING_COUNTEREXAMPLE:
        raise NonOscillationError("non-oscillation condition fails")
    if wf.kind is WarpKind.CONCAVE_EXPERIMENTAL:
        raise QuadratureError(
            "length-constant integral diverges for the concave experimental warp"
        )
    frak = wf.frakF_closed_form or _numeric_frakF(wf)

    def integrand(phi: float) -> float:
        srn = math.sin(phi * phi)
        sigma = 1.0 / srn if srn > 1e-280 else 1e280
        return frak(sigma) * 2.0 * phi

    val, err = quad(
        integrand, 0.0, math.sqrt(math.pi / 2.0),
        epsabs=tol / 4.0, epsrel=tol / 4.0, limit=250,
    )
    value, error = 2.0 * val, 2.0 * err
    if error > max(tol, 1e-12) * 5.0:
        raise QuadratureError(
            f"quadrature reached only {error:.3g}, requested {tol:.3g}"
        )
    check_tol = max(tol, 1e-9)
    if not (2.0 - check_tol <= value <= math.pi + check_tol):
        raise QuadratureError(
            f"length constant {value:.12g} outside [2, pi] for a convex warp"
        )
    return value, error


def compute_Cf(wf: WarpingFunction, tol: float = 1e-9) -> float:
    return compute_Cf_detailed(wf, tol)[0]


def check_Cf_monotonicity(
    wf_small: WarpingFunction, wf_big: WarpingFunction, tol: float = 1e-6
) -> MonotonicityReport:
    """Comparison: if f = O(f_tilde) near zero then both the limit functional
    and the length constant are ordered the same way."""
    R = min(wf_small.domain_radius, wf_big.domain_radius)
    xs = np.geomspace(R * 1e-8, R * 0.9, 256)
    ratio = np.array([wf_small.f(x) / wf_big.f(x) for x in xs])
    near0 = ratio[: len(ratio) // 4]
    rest = ratio[len(ratio) // 4:]
    if near0.max() > 10.0 * max(rest.max(), 1e-300):
        raise ValueError(
            "ordering hypothesis fails: f_small/f_big blows up near zero on the grid"
        )
    frak_s = wf_small.frakF_closed_form or _numeric_frakF(wf_small)
    frak_b = wf_big.frakF_closed_form or _numeric_frakF(wf_big)
    sigmas = np.geomspace(1.0, 1e6, 40)
    excess = max(frak_s(sg) - frak_b(sg) for sg in sigmas)
    cf_s = compute_Cf(wf_small)
    cf_b = compute_Cf(wf_big)
    passed = (cf_s <= cf_b + tol) and (excess <= tol)
    return MonotonicityReport(
        passed=passed, cf_small=cf_s, cf_big=cf_b, max_frak_excess=float(excess)
    )


# ---------------------------------------------------------------------------
# CLI spec strings


def parse_warp_spec(spec: str, R: Optional[float] = None) -> WarpingFunction:
    """Parse family strings like "power:2.0", "logpow:1.5", "expinv:1.0",
    "osc:0.5:9.0", "sqrt", "profile:<path>"."""
    parts = spec.split(":")
    head = parts[0]
    needed = {"power": 2, "logpow": 2, "expinv": 2, "osc": 3, "sqrt": 1}
    if head in needed and len(parts) < needed[head]:
        raise ValueError(f"warp spec {spec!r} is missing parameters")
    if head == "power":
        return make_power_warp(float(parts[1]), R if R is not None else 1.5)
    if head == "logpow":
        return make_exp_warp("log_power", float(parts[1]), R)
    if head == "expinv":
        return make_exp_warp("exp_inverse_power", float(parts[1]), R)
    if head == "osc":
        return make_oscillating_F(float(parts[1]), float(parts[2]))
    if head == "sqrt":
        return make_concave_sqrt_warp(R if R is not None else 1.0)
    if head == "profile":
        from .profile_io import load_profile_csv  # local import: avoids cycle

        return load_profile_csv(":".join(parts[1:]), z_max=None)
    raise ValueError(f"unknown warp spec: {spec!r}")
