"""Closed-form asymptotic layer: the blow-up scale factor, the Gamma-based
neck constant, the quadrature oracle that validates it, expansion
predictions, and the extrapolation fits used by the sweep harness.

Everything here is a pure function of scalars and small matrices; no PDE
state is touched.  The exponent branches split at p = (n+1)/2:

  SUPER     p > (n+1)/2   scale eps^((2p-n-1)/(2(p-1))), nonzero limiting flux
  CRITICAL  p = (n+1)/2   scale |ln eps|^(-1/(p-1))
  SUB       p < (n+1)/2   scale 1, limiting flux zero, potential gap persists
"""

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BranchError, FitError, GeometryError, QuadratureError

SUPER, CRITICAL, SUB = "SUPER", "CRITICAL", "SUB"


@dataclass(frozen=True)
class Regime:
    """Exponent/dimension pair with its branch, decided exactly."""

    p: float
    n: int = 2

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if self.n < 2:
            raise ValueError("n must be >= 2")

    @property
    def branch(self):
        cmp = 2 * Fraction(self.p) - (self.n + 1)
        if cmp > 0:
            return SUPER
        if cmp == 0:
            return CRITICAL
        return SUB

    @property
    def super_exponent(self):
        """(2p - n - 1) / (2(p - 1)), the separation power on the SUPER branch."""
        return (2 * self.p - self.n - 1) / (2 * (self.p - 1))


def blowup_scale(eps, regime: Regime):
    """Branch-exact scale factor of the potential gap (and of the neck
    gradient once divided by the local gap width)."""
    if not 0 < eps < 1:
        raise GeometryError("separation must lie in (0, 1) for the scale factor")
    b = regime.branch
    if b == SUPER:
        return eps ** regime.super_exponent
    if b == CRITICAL:
        return abs(math.log(eps)) ** (-1.0 / (regime.p - 1.0))
    return 1.0


# ---------------------------------------------------------------------------
# Gamma function (Lanczos approximation with reflection)
# ---------------------------------------------------------------------------

_LANCZOS_G = 7.0
_LANCZOS_C = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(z):
    """Gamma(z) for z > 0, relative accuracy ~1e-13 on (0, 50]."""
    z = float(z)
    if z <= 0:
        raise GeometryError("gamma_fn requires z > 0")
    if z < 0.5:
        # reflection keeps the Lanczos sum well conditioned near 0
        return math.pi / (math.sin(math.pi * z) * gamma_fn(1.0 - z))
    z -= 1.0
    x = _LANCZOS_C[0]
    for i, c in enumerate(_LANCZOS_C[1:], start=1):
        x += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2 * math.pi) * t ** (z + 0.5) * math.exp(-t) * x


# ---------------------------------------------------------------------------
# the neck constant and its quadrature oracle
# ---------------------------------------------------------------------------

def _gap_hessian_eigs(hessian_gap, n):
    H = np.atleast_2d(np.asarray(hessian_gap, dtype=float))
    if H.shape != (n - 1, n - 1):
        raise GeometryError(f"gap Hessian must be {(n-1, n-1)}, got {H.shape}")
    if not np.allclose(H, H.T):
        raise GeometryError("gap Hessian must be symmetric")
    lam = np.linalg.eigvalsh(H)
    if np.any(lam <= 0):
        raise GeometryError("gap Hessian must be positive definite")
    return lam


def gap_constant(hessian_gap, regime: Regime):
    """The constant K built from the gap Hessian determinant and Gamma
    factors; 1/K is the iterated small-separation limit of the neck integral.
    Defined on the SUPER and CRITICAL branches only."""
    n, p = regime.n, regime.p
    lam = _gap_hessian_eigs(hessian_gap, n)
    det_sqrt = math.sqrt(float(np.prod(lam)))
    b = regime.branch
    if b == SUPER:
        return det_sqrt * gamma_fn(p - 1.0) / (
            (2 * math.pi) ** ((n - 1) / 2.0) * gamma_fn(p - (n + 1) / 2.0))
    if b == CRITICAL:
        return det_sqrt * gamma_fn((n - 1) / 2.0) / (2 * math.pi) ** ((n - 1) / 2.0)
    raise BranchError("the neck constant is undefined on the SUB branch")


def neck_integral(regime: Regime, hessian_gap, radius, eps, rel_tol=1e-6):
    """Adaptive quadrature of

        int_{|y'| < radius} ( scale(eps) / (eps + y'^T H y' / 2) )^(p-1) dy'

    reduced to a radial integral times an angular average after diagonalizing
    H.  This is the independent oracle whose iterated limit (eps then radius
    to zero) equals 1 / gap_constant."""
    from scipy.integrate import quad

    if regime.branch == SUB:
        raise BranchError("the neck integral oracle applies to SUPER/CRITICAL")
    if radius <= 0 or eps <= 0:
        raise GeometryError("radius and eps must be positive")
    n, p = regime.n, regime.p
    lam = _gap_hessian_eigs(hessian_gap, n)
    theta_pow = blowup_scale(eps, regime) ** (p - 1.0)
    sq = math.sqrt(eps)

    def radial(upper):
        def f(s):
            return s ** (n - 2) * (eps + s * s) ** (1.0 - p)

        pieces = []
        if upper > sq:
            pieces = [(0.0, sq), (sq, upper)]
        else:
            pieces = [(0.0, upper)]
        total = 0.0
        for a, b in pieces:
            val, err = quad(f, a, b, epsrel=rel_tol * 1e-2, epsabs=0.0, limit=200)
            if not math.isfinite(val):
                raise QuadratureError("radial quadrature failed")
            total += val
        return total

    front = 2.0 ** ((n - 1) / 2.0) / math.sqrt(float(np.prod(lam)))
    if n == 2:
        # zero-dimensional sphere: two directions, both with phi = sqrt(2/lam)
        phi = math.sqrt(2.0 / lam[0])
        return theta_pow * front * 2.0 * radial(radius / phi)
    if n == 3:
        def f1(t1):
            phi = math.sqrt(2.0 / lam[0] * math.cos(t1) ** 2
                            + 2.0 / lam[1] * math.sin(t1) ** 2)
            return radial(radius / phi)

        val, err = quad(f1, 0.0, 2 * math.pi, epsrel=rel_tol * 1e-1, limit=100)
        return theta_pow * front * val
    if n == 4:
        def inner(t1):
            def f2(t2):
                c1, s1 = math.cos(t1), math.sin(t1)
                phi = math.sqrt(2.0 / lam[0] * c1 * c1
                                + 2.0 / lam[1] * (s1 * math.cos(t2)) ** 2
                                + 2.0 / lam[2] * (s1 * math.sin(t2)) ** 2)
                return radial(radius / phi)

            val2, _ = quad(f2, 0.0, 2 * math.pi, epsrel=rel_tol, limit=60)
            return math.sin(t1) * val2

        val, err = quad(inner, 0.0, math.pi, epsrel=rel_tol, limit=60)
        return theta_pow * front * val
    raise QuadratureError(f"neck integral implemented for n <= 4, got n={n}")


def _aitken(seq, floor=1e-12):
    """Aitken delta-squared acceleration with a near-constant guard."""
    x = list(map(float, seq))
    if len(x) < 3:
        return x[-1]
    d1 = x[-2] - x[-3]
    d2 = x[-1] - x[-2]
    denom = d2 - d1
    scale = max(abs(x[-1]), 1e-300)
    if abs(denom) <= floor * scale or abs(d2) <= floor * scale:
        return x[-1]
    return x[-1] - d2 * d2 / denom


def neck_integral_limit(regime: Regime, hessian_gap,
                        r_schedule=(0.2, 0.1, 0.05),
                        eps_schedule=(1e-4, 1e-6, 1e-8)):
    """Iterated limit of the neck integral over a fixed schedule: for each
    window radius, accelerate over decreasing eps (the inner limit), then
    accelerate over radius.  The result approximates 1 / gap_constant.

    On the CRITICAL branch the inner convergence is O(1/|ln eps|), so the
    inner limit is taken by a linear fit in 1/|ln eps| instead of Aitken."""
    inner_limits = []
    for r in r_schedule:
        vals = [neck_integral(regime, hessian_gap, r, e) for e in eps_schedule]
        if regime.branch == CRITICAL:
            x = np.array([1.0 / abs(math.log(e)) for e in eps_schedule])
            A = np.column_stack([np.ones_like(x), x])
            coef, *_ = np.linalg.lstsq(A, np.asarray(vals), rcond=None)
            inner_limits.append(float(coef[0]))
        else:
            inner_limits.append(_aitken(vals))
    return _aitken(inner_limits)


# ---------------------------------------------------------------------------
# expansion predictions
# ---------------------------------------------------------------------------

def _sgn(x):
    return (x > 0) - (x < 0)


@dataclass(frozen=True)
class AsymptoticPrediction:
    """Leading-order prediction of the vertical neck gradient.

    predicted_dn(delta) returns the predicted vertical derivative at a point
    with local gap width delta; the transverse component is zero at leading
    order.  The error envelope decays like gap^(beta/2) with an unspecified
    beta in (0,1), so no rate is attached here.
    """

    branch: str
    eps: float
    scale_factor: float            # blow-up scale at this eps (1 on SUB)
    neck_constant: float           # K (None on SUB)
    leading_coeff: float           # sgn(F)(K|F|)^(1/(p-1)), or the potential gap
    zero_leading: bool = False

    def predicted_dn(self, delta):
        if delta <= 0:
            raise GeometryError("gap width must be positive")
        return self.scale_factor * self.leading_coeff / delta


def predict_expansion(F_or_gap, regime: Regime, eps, hessian_gap=None):
    """Build the leading-order gradient prediction.

    SUPER/CRITICAL take the limiting flux; SUB takes the potential gap
    (U1 - U2).  A zero flux yields an identically zero leading order, which
    is valid and flagged."""
    b = regime.branch
    if b in (SUPER, CRITICAL):
        if hessian_gap is None:
            raise GeometryError("flux branches need the gap Hessian")
        K = gap_constant(hessian_gap, regime)
        F = float(F_or_gap)
        lead = _sgn(F) * (K * abs(F)) ** (1.0 / (regime.p - 1.0))
        return AsymptoticPrediction(branch=b, eps=float(eps),
                                    scale_factor=blowup_scale(eps, regime),
                                    neck_constant=K, leading_coeff=lead,
                                    zero_leading=(F == 0.0))
    gap = float(F_or_gap)
    return AsymptoticPrediction(branch=b, eps=float(eps), scale_factor=1.0,
                                neck_constant=None, leading_coeff=gap,
                                zero_leading=(gap == 0.0))


# ---------------------------------------------------------------------------
# extrapolation fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UGapFit:
    limit: float
    flux_implied: float
    ratios: tuple
    extrapolated: bool
    warning: str = ""


def fit_ugap_limit(rows, regime: Regime, hessian_gap):
    """Extrapolate (U1 - U2) / scale(eps) over decreasing eps and invert the
    limit into an implied flux.

    rows: sequence of (eps, potential gap) with strictly decreasing eps,
    at least three entries.  A non-monotone ratio sequence produces a
    diagnostic warning and no extrapolation (the last ratio is reported)."""
    rows = list(rows)
    if len(rows) < 3:
        raise FitError("need at least three (eps, gap) rows")
    eps = np.array([r[0] for r in rows], dtype=float)
    gaps = np.array([r[1] for r in rows], dtype=float)
    if np.any(np.diff(eps) >= 0):
        raise FitError("eps values must be strictly decreasing")
    ratios = np.array([g / blowup_scale(e, regime) for e, g in zip(eps, gaps)])

    d = np.diff(ratios)
    span = max(float(np.abs(ratios).max()), 1e-300)
    warning = ""
    if np.all(np.abs(d) <= 1e-12 * span):
        limit, extrapolated = float(ratios[-1]), True
    elif np.all(d >= -1e-12 * span) or np.all(d <= 1e-12 * span):
        limit, extrapolated = float(_aitken(ratios)), True
    else:
        warning = "non-monotone ratio sequence; reporting the last ratio"
        warnings.warn(warning)
        limit, extrapolated = float(ratios[-1]), False

    K = gap_constant(hessian_gap, regime)
    flux = _sgn(limit) * abs(limit) ** (regime.p - 1.0) / K
    return UGapFit(limit=limit, flux_implied=float(flux),
                   ratios=tuple(float(x) for x in ratios),
                   extrapolated=extrapolated, warning=warning)


@dataclass(frozen=True)
class FluxExtrapolation:
    value: float
    amplitude: float
    rate: float
    fallback: bool = False


def extrapolate_flux(rows):
    """Fit F(r) = F_inf + A exp(-B/r) over window radii and return F_inf.

    rows: sequence of (r, windowed flux); radii need not be ordered.  On fit
    failure the smallest-radius value is returned with the fallback flag."""
    rows = sorted(rows, key=lambda t: -t[0])
    r = np.array([t[0] for t in rows], dtype=float)
    f = np.array([t[1] for t in rows], dtype=float)
    if len(r) < 3 or np.any(r <= 0):
        return FluxExtrapolation(float(f[-1]), 0.0, 0.0, fallback=True)
    from scipy.optimize import curve_fit

    def model(rr, f_inf, a, b):
        return f_inf + a * np.exp(-b / rr)

    spread = float(f[0] - f[-1])
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            popt, _ = curve_fit(model, r, f,
                                p0=(f[-1], spread * math.exp(1.0 / r[0]), 1.0),
                                bounds=([-np.inf, -np.inf, 1e-6],
                                        [np.inf, np.inf, 1e3]),
                                maxfev=20000)
        resid = f - model(r, *popt)
        scale = max(float(np.abs(f).max()), 1e-300)
        if not np.all(np.isfinite(popt)) or np.abs(resid).max() > 0.2 * scale:
            return FluxExtrapolation(float(f[-1]), 0.0, 0.0, fallback=True)
        return FluxExtrapolation(float(popt[0]), float(popt[1]), float(popt[2]))
    except Exception:
        return FluxExtrapolation(float(f[-1]), 0.0, 0.0, fallback=True)


def extrapolated_window_rows(tables, regime: Regime, qualify_ratio=25.0,
                             min_pts=3):
    """Turn a window-flux table {eps: {r: flux}} into (r, flux) rows suitable
    for `extrapolate_flux`.

    A separation value qualifies for radius r only when eps <= r^2 /
    qualify_ratio (the window flux is meaningful only for eps well below the
    window scale).  On the flux-carrying branches each radius with at least
    min_pts qualifying separations is extrapolated to eps -> 0 by a power-law
    fit; radii with fewer points are dropped.  On the SUB branch the raw
    values at the smallest qualifying separation are used: the limit being
    demonstrated is zero and the slow gap convergence makes power-law
    extrapolation ill-conditioned there."""
    from scipy.optimize import curve_fit

    eps_sorted = sorted(tables.keys(), reverse=True)
    radii = sorted({r for t in tables.values() for r in t.keys()}, reverse=True)
    rows = []
    for r in radii:
        qual = [e for e in eps_sorted if e <= r * r / qualify_ratio]
        if not qual:
            continue
        vals = np.array([tables[e][r] for e in qual], dtype=float)
        if regime.branch == SUB or len(qual) < min_pts:
            if regime.branch == SUB:
                rows.append((r, float(vals[-1])))
            continue
        e = np.array(qual)

        def model(x, s0, c, q):
            return s0 + c * np.power(x, q)

        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                popt, _ = curve_fit(model, e, vals,
                                    p0=(vals[-1], (vals[0] - vals[-1]) or 0.1, 0.3),
                                    bounds=([-np.inf, -np.inf, 0.1],
                                            [np.inf, np.inf, 1.5]),
                                    maxfev=20000)
            rows.append((r, float(popt[0])))
        except Exception:
            rows.append((r, float(vals[-1])))
    return rows


def lower_bound_region(regime: Regime, eps=None, gamma=1.0, kappa1=0.1,
                       kappa2=0.1, ln_eps=None):
    """Transverse half-width of the window where the leading-order term
    dominates: shrinking logarithmically (SUPER), doubly logarithmically
    (CRITICAL), or constant (SUB).

    Separations too small for float representation can be passed through
    ln_eps (< 0) instead of eps."""
    b = regime.branch
    if b == SUB:
        return float(kappa2)
    if ln_eps is None:
        if eps is None or not 0 < eps < 1:
            raise GeometryError("eps must lie in (0, 1)")
        ln_eps = math.log(eps)
    elif ln_eps >= 0:
        raise GeometryError("ln_eps must be negative")
    if b == SUPER:
        return abs(ln_eps) ** (-gamma)
    if abs(ln_eps) <= math.e:
        raise GeometryError("critical-branch window needs eps < exp(-e)")
    return kappa1 / math.log(abs(ln_eps))
