"""Domain geometry: outer boundary, two nearly touching inclusions, and the
local gap description between them.

The computational domain is an outer convex curve minus one or two convex
inclusions.  In the two-inclusion case the inclusions touch at the origin
when the separation is zero, and near the origin their boundaries are graphs
x_n = +/- eps/2 + h_i(x') over the transverse coordinate x'.  Everything a
mesh generator or post-processor needs (gap widths, curve projection,
boundary data) lives here.  All objects are immutable after construction and
picklable, so they can be shared across worker processes.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GeometryError

# boundary component tags used throughout the package
OUTER, INC1, INC2 = 1, 2, 3
TAG_NAMES = {OUTER: "OUTER", INC1: "INC1", INC2: "INC2"}
TAG_IDS = {v: k for k, v in TAG_NAMES.items()}


# ---------------------------------------------------------------------------
# gap profiles (the functions h_1, h_2 near the neck)
# ---------------------------------------------------------------------------

class DiscProfile:
    """Height of a circle of radius R above its lowest point: R - sqrt(R^2 - x^2)."""

    def __init__(self, radius):
        self.radius = float(radius)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = self.radius
        return r - np.sqrt(r * r - x * x)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        r = self.radius
        return x / np.sqrt(r * r - x * x)

    def curvature0(self):
        return 1.0 / self.radius


class ParabolaProfile:
    """h(x) = a x^2 with a > 0."""

    def __init__(self, a):
        if a <= 0:
            raise GeometryError("parabola coefficient must be positive")
        self.a = float(a)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.a * x * x

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * self.a * x

    def curvature0(self):
        return 2.0 * self.a


class TableProfile:
    """Profile interpolated from a sampled (x, h) table with a cubic spline.

    The table must bracket the chart; h is shifted so h(0) = 0.
    """

    def __init__(self, x, h):
        from scipy.interpolate import CubicSpline

        x = np.asarray(x, dtype=float)
        h = np.asarray(h, dtype=float)
        if x.ndim != 1 or x.shape != h.shape or len(x) < 4:
            raise GeometryError("profile table needs >= 4 rows of x, h")
        order = np.argsort(x)
        x, h = x[order], h[order]
        if np.any(np.diff(x) <= 0):
            raise GeometryError("profile table has repeated x values")
        self._spline = CubicSpline(x, h)
        self._spline = CubicSpline(x, h - self._spline(0.0))
        self.x_range = (x[0], x[-1])

    @classmethod
    def from_file(cls, path):
        data = np.loadtxt(path)
        if data.ndim != 2 or data.shape[1] != 2:
            raise GeometryError(f"profile table {path!r} must have two columns")
        return cls(data[:, 0], data[:, 1])

    def __call__(self, x):
        return self._spline(np.asarray(x, dtype=float))

    def deriv(self, x):
        return self._spline(np.asarray(x, dtype=float), 1)

    def curvature0(self):
        return float(self._spline(0.0, 2))


class NegatedProfile:
    """h(x) = -base(x); keeps the mirror case exactly antisymmetric."""

    def __init__(self, base):
        self.base = base

    def __call__(self, x):
        return -self.base(x)

    def deriv(self, x):
        return -self.base.deriv(x)

    def curvature0(self):
        return -self.base.curvature0()


@dataclass(frozen=True)
class GapProfile:
    """Local graph description of the two inclusion boundaries near the neck.

    h1 bounds the upper inclusion from below, h2 the lower one from above
    (both before the +/- eps/2 translation).  c1 is the relative-convexity
    constant (c1 |x'|^2 <= h1 - h2) and c2 bounds the C^2 norms; both are
    verified by sampling in `validate`.
    """

    h1: object
    h2: object
    c1: float
    c2: float
    chart: float = 1.0

    def diff(self, xprime):
        """h1(x') - h2(x'), the zero-separation gap."""
        return self.h1(xprime) - self.h2(xprime)

    def gap_hessian0(self):
        """(h1 - h2)''(0), the 1x1 gap Hessian at the touching point."""
        if hasattr(self.h1, "curvature0") and hasattr(self.h2, "curvature0"):
            return self.h1.curvature0() - self.h2.curvature0()
        d = 1e-4 * self.chart
        return float((self.diff(d) - 2.0 * self.diff(0.0) + self.diff(-d)) / d**2)

    def validate(self, n_samples=200, tol=1e-8):
        xc = self.chart
        d = 1e-5 * xc
        for h, name in ((self.h1, "h1"), (self.h2, "h2")):
            if abs(float(h(0.0))) > tol:
                raise GeometryError(f"{name}(0) != 0")
            slope = (float(h(d)) - float(h(-d))) / (2 * d)
            if abs(slope) > 1e-4:
                raise GeometryError(f"{name} has nonzero slope at 0")
        x = np.linspace(-xc, xc, n_samples)
        x = x[np.abs(x) > 1e-12]
        gap = self.diff(x)
        if np.any(gap < self.c1 * x * x - tol):
            raise GeometryError("relative-convexity bound c1 |x'|^2 <= h1 - h2 fails")
        step = xc / n_samples
        xi = np.linspace(-xc + step, xc - step, n_samples)
        for h in (self.h1, self.h2):
            second = (np.asarray(h(xi + step)) - 2 * np.asarray(h(xi))
                      + np.asarray(h(xi - step))) / step**2
            if np.any(np.abs(second) > self.c2 * (1 + 1e-6) + tol):
                raise GeometryError("sampled curvature exceeds the C^2 bound c2")
        return True


# ---------------------------------------------------------------------------
# closed convex curves
# ---------------------------------------------------------------------------

class Circle:
    def __init__(self, center, radius):
        self.center = (float(center[0]), float(center[1]))
        self.radius = float(radius)

    def translated(self, dy):
        return Circle((self.center[0], self.center[1] + dy), self.radius)

    def mirrored(self):
        return Circle((self.center[0], -self.center[1]), self.radius)

    def arc_points(self, a0, a1, spacing_fn):
        """Points along the CCW arc from angle a0 to a1 (a1 > a0), spacing
        graded by spacing_fn; includes both endpoints."""
        cx, cy = self.center
        angles = [a0]
        t = a0
        while True:
            pt = (cx + self.radius * math.cos(t), cy + self.radius * math.sin(t))
            dt = max(1e-4, float(spacing_fn(pt)) / self.radius)
            if t + dt >= a1 - 0.3 * dt:
                break
            t += dt
            angles.append(t)
        angles.append(a1)
        a = np.asarray(angles)
        return np.column_stack([cx + self.radius * np.cos(a),
                                cy + self.radius * np.sin(a)])

    def project(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = pts - np.asarray(self.center)
        norm = np.linalg.norm(v, axis=1, keepdims=True)
        norm[norm == 0] = 1.0
        return np.asarray(self.center) + v / norm * self.radius

    def signed_distance(self, pts):
        """< 0 inside the circle."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) - self.radius

    def contains(self, pts):
        return self.signed_distance(pts) < 0

    def angle_of(self, pt):
        return math.atan2(pt[1] - self.center[1], pt[0] - self.center[0])


class CappedGraphCurve:
    """Convex inclusion bounded below by the graph y = y_off + h(x) on
    |x| <= xc and closed above by a tangent circular cap.

    Used for parabola and table profiles, where only the neck-side boundary
    is prescribed; the cap is an artifact of closing the curve and stays far
    from the neck.
    """

    def __init__(self, profile, xc, y_off=0.0):
        self.profile = profile
        self.xc = float(xc)
        self.y_off = float(y_off)
        hx = float(profile(xc))
        m = float(profile.deriv(xc))
        if m <= 1e-12:
            raise GeometryError("graph must have positive slope at the chart edge")
        yc = hx + xc / m   # tangency: (P - C) . (1, m) = 0
        self.cap_center = (0.0, y_off + yc)
        self.cap_radius = math.hypot(xc, yc - hx)
        self._theta_join = math.atan2(hx - yc, xc)  # angle of right joint, in (-pi/2, 0)

    def translated(self, dy):
        return CappedGraphCurve(self.profile, self.xc, self.y_off + dy)

    def graph_y(self, x):
        return self.y_off + self.profile(x)

    def contains(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        cx, cy = self.cap_center
        in_cap = (x - cx) ** 2 + (y - cy) ** 2 < self.cap_radius**2
        xcl = np.clip(x, -self.xc, self.xc)
        in_lens = (np.abs(x) <= self.xc) & (y > self.graph_y(xcl)) & (y <= cy)
        return in_cap | in_lens

    def signed_distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        d = np.linalg.norm(pts - self.project(pts), axis=1)
        return np.where(self.contains(pts), -d, d)

    def project(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.empty_like(pts)
        cx, cy = self.cap_center
        for k, (px, py) in enumerate(pts):
            # candidate on the cap arc
            ang = math.atan2(py - cy, px - cx)
            lo, hi = self._theta_join, math.pi - self._theta_join
            if ang < lo:
                ang += 2 * math.pi
            ang = min(max(ang, lo), hi)
            cand_arc = (cx + self.cap_radius * math.cos(ang),
                        cy + self.cap_radius * math.sin(ang))
            # candidate on the graph: minimize (x-px)^2 + (g(x)-py)^2
            xs = np.linspace(-self.xc, self.xc, 101)
            d2 = (xs - px) ** 2 + (self.graph_y(xs) - py) ** 2
            x0 = xs[int(np.argmin(d2))]
            for _ in range(30):
                g = self.graph_y(x0)
                gp = float(self.profile.deriv(x0))
                f = (x0 - px) + (g - py) * gp
                df = 1 + gp * gp  # drop g'' term; safe contraction near the curve
                step = f / df
                x0 = float(np.clip(x0 - step, -self.xc, self.xc))
                if abs(step) < 1e-14:
                    break
            cand_graph = (x0, float(self.graph_y(x0)))
            da = math.hypot(cand_arc[0] - px, cand_arc[1] - py)
            dg = math.hypot(cand_graph[0] - px, cand_graph[1] - py)
            out[k] = cand_graph if dg <= da else cand_arc
        return out

    def boundary_polyline(self, spacing_fn):
        """Closed CCW polyline: graph left-to-right, then the cap arc from the
        right joint over the top back toward the left joint."""
        xs = [-self.xc]
        x = -self.xc
        while True:
            pt = (x, float(self.graph_y(x)))
            dx = max(1e-5, float(spacing_fn(pt)))
            if x + dx >= self.xc - 0.3 * dx:
                break
            x += dx
            xs.append(x)
        xs.append(self.xc)
        xs = np.asarray(xs)
        graph = np.column_stack([xs, self.graph_y(xs)])
        cap = Circle(self.cap_center, self.cap_radius)
        arc = cap.arc_points(self._theta_join, math.pi - self._theta_join, spacing_fn)
        # arc[0] is the right joint (= graph[-1]) and arc[-1] the left joint
        return np.vstack([graph, arc[1:-1]])


class MirroredCurve:
    """Reflection of a base curve across the x_n = 0 axis."""

    def __init__(self, base):
        self.base = base

    def translated(self, dy):
        return MirroredCurve(self.base.translated(-dy))

    @staticmethod
    def _flip(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float)).copy()
        pts[:, 1] = -pts[:, 1]
        return pts

    def contains(self, pts):
        return self.base.contains(self._flip(pts))

    def signed_distance(self, pts):
        return self.base.signed_distance(self._flip(pts))

    def project(self, pts):
        return self._flip(self.base.project(self._flip(pts)))


# ---------------------------------------------------------------------------
# boundary data
# ---------------------------------------------------------------------------

class LinearPotential:
    """phi(x) = x_n."""

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        return pts[..., 1]


class ConstantPotential:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.full(pts.shape[:-1], self.value)


class PolyPotential:
    """phi(x) = sum over terms (coef, i, j) of coef * x'^i * x_n^j."""

    def __init__(self, terms):
        self.terms = [(float(c), int(i), int(j)) for c, i, j in terms]

    def __call__(self, pts):
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        out = np.zeros(pts.shape[:-1])
        for c, i, j in self.terms:
            out = out + c * x**i * y**j
        return out


# ---------------------------------------------------------------------------
# geometry container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Geometry:
    """Full problem geometry.

    `inclusion1`/`inclusion2` are the curves in touching position (before the
    +/- eps/2 translation).  `inclusion2 = None` selects single-inclusion
    (annulus-type) domains, which carry no gap profile.
    """

    outer: object
    inclusion1: object
    inclusion2: object
    eps: float
    gap: GapProfile
    phi: object
    scale: float = 1.0
    name: str = "geometry"

    @property
    def kind(self):
        return "two_inclusion" if self.inclusion2 is not None else "annulus"

    def with_eps(self, eps):
        return replace(self, eps=float(eps))

    @property
    def inclusion1_eps(self):
        return self.inclusion1.translated(+self.eps / 2.0)

    @property
    def inclusion2_eps(self):
        if self.inclusion2 is None:
            return None
        return self.inclusion2.translated(-self.eps / 2.0)

    def curve_for_tag(self, tag):
        if tag == OUTER:
            return self.outer
        if tag == INC1:
            return self.inclusion1_eps
        if tag == INC2:
            return self.inclusion2_eps
        raise GeometryError(f"unknown boundary tag {tag}")

    def upper_wall(self, xprime):
        """x_n of the upper neck boundary: eps/2 + h1(x')."""
        return self.eps / 2.0 + self.gap.h1(xprime)

    def lower_wall(self, xprime):
        return -self.eps / 2.0 + self.gap.h2(xprime)

    def phi_oscillation(self, n=720):
        a = np.linspace(0, 2 * math.pi, n, endpoint=False)
        # outer curves are circles in every built-in construction
        c, r = self.outer.center, self.outer.radius
        pts = np.column_stack([c[0] + r * np.cos(a), c[1] + r * np.sin(a)])
        vals = self.phi(pts)
        return float(vals.max() - vals.min())

    def is_mirror_symmetric(self, n=50, tol=1e-12):
        """Domain symmetry under x_n -> -x_n (not symmetry of phi)."""
        if self.kind == "annulus":
            return abs(self.outer.center[1]) < tol and abs(self.inclusion1.center[1]) < tol
        if abs(self.outer.center[1]) > tol:
            return False
        x = np.linspace(-0.9 * self.gap.chart, 0.9 * self.gap.chart, n)
        return bool(np.max(np.abs(np.asarray(self.gap.h1(x)) + np.asarray(self.gap.h2(x)))) < tol)

    def validate(self, eps_values=None):
        """Check inclusion disjointness and gap/curve consistency."""
        if self.kind == "annulus":
            return True
        self.gap.validate()
        for eps in (eps_values if eps_values is not None else [self.eps]):
            if eps < 0:
                raise GeometryError("separation must be >= 0")
            if eps == 0:
                continue
            g = self.with_eps(eps)
            x = np.linspace(-0.95 * self.gap.chart, 0.95 * self.gap.chart, 101)
            if np.any(g.upper_wall(x) - g.lower_wall(x) <= 0):
                raise GeometryError(f"inclusions overlap at eps={eps}")
            # inclusions stay away from the outer boundary
            for curve in (g.inclusion1_eps, g.inclusion2_eps):
                pts = _coarse_curve_points(curve)
                if np.any(self.outer.signed_distance(pts) > -1e-9):
                    raise GeometryError("inclusion touches the outer boundary")
        # sampled agreement of the gap profile with the inclusion curves
        x = np.linspace(-0.5 * self.gap.chart, 0.5 * self.gap.chart, 41)
        up = np.column_stack([x, self.upper_wall(x)])
        lo = np.column_stack([x, self.lower_wall(x)])
        d1 = np.linalg.norm(self.inclusion1_eps.project(up) - up, axis=1)
        d2 = np.linalg.norm(self.inclusion2_eps.project(lo) - lo, axis=1)
        if max(d1.max(), d2.max()) > 1e-9 * max(1.0, self.scale):
            raise GeometryError("gap profile inconsistent with the inclusion curves")
        return True


def _coarse_curve_points(curve, n=64):
    if isinstance(curve, Circle):
        a = np.linspace(0, 2 * math.pi, n, endpoint=False)
        return np.column_stack([curve.center[0] + curve.radius * np.cos(a),
                                curve.center[1] + curve.radius * np.sin(a)])
    if isinstance(curve, CappedGraphCurve):
        return curve.boundary_polyline(lambda p: 2 * math.pi * curve.cap_radius / n)
    if isinstance(curve, MirroredCurve):
        return MirroredCurve._flip(_coarse_curve_points(curve.base, n))
    raise GeometryError(f"unsupported curve type {type(curve)}")


@dataclass(frozen=True)
class NeckPoint:
    """A point in the neck, in (transverse, vertical) coordinates."""

    xprime: float
    xn: float = 0.0

    def as_array(self):
        return np.array([self.xprime, self.xn])


def in_gap(geom, pt, tol=0.0):
    """True when the point lies between the two translated neck boundaries."""
    return (geom.lower_wall(pt.xprime) - tol <= pt.xn
            <= geom.upper_wall(pt.xprime) + tol)


# ---------------------------------------------------------------------------
# gap widths
# ---------------------------------------------------------------------------

def _xprime_of(x):
    if isinstance(x, NeckPoint):
        return x.xprime
    return float(x)


def gap_width(geom, x):
    """Vertical neck width eps + h1(x') - h2(x') at the point's transverse
    coordinate.  Raises outside the gap-profile chart."""
    if geom.gap is None:
        raise GeometryError("geometry has no gap profile")
    xp = _xprime_of(x)
    if abs(xp) >= geom.gap.chart:
        raise GeometryError(f"|x'|={abs(xp)} outside the chart radius {geom.gap.chart}")
    return float(geom.eps + geom.gap.diff(xp))


def model_gap_width(geom, x):
    """The comparable model width eps + |x'|^2."""
    xp = _xprime_of(x)
    if geom.gap is not None and abs(xp) >= geom.gap.chart:
        raise GeometryError(f"|x'|={abs(xp)} outside the chart radius {geom.gap.chart}")
    return float(geom.eps + xp * xp)


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------

def build_symmetric_disc_example(scale=1.0, eps=0.0, phi=None):
    """Ball of radius 5*scale containing two radius 2*scale discs that touch
    at the origin when eps = 0; boundary data defaults to x_n.

    The geometry is symmetric under x_n -> -x_n and the default boundary
    data is odd, which pins U1 = -U2.
    """
    if scale <= 0:
        raise GeometryError("scale must be positive")
    if eps < 0:
        raise GeometryError("separation must be >= 0")
    r = 2.0 * scale
    chart = min(1.0, 0.9 * r)
    h1 = DiscProfile(r)
    gap = GapProfile(h1=h1, h2=NegatedProfile(h1), c1=1.0 / r,
                     c2=_c2_bound(h1, chart), chart=chart)
    geom = Geometry(
        outer=Circle((0.0, 0.0), 5.0 * scale),
        inclusion1=Circle((0.0, r), r),
        inclusion2=Circle((0.0, -r), r),
        eps=float(eps),
        gap=gap,
        phi=phi if phi is not None else LinearPotential(),
        scale=float(scale),
        name=f"disc_scale{scale:g}",
    )
    return geom


def build_parabola_example(a=0.25, eps=0.0, scale=1.0, phi=None):
    """Two parabola-nose inclusions h = +/- a x'^2 closed by tangent caps."""
    chart = 1.0
    h1 = ParabolaProfile(a)
    gap = GapProfile(h1=h1, h2=NegatedProfile(h1), c1=2 * a, c2=_c2_bound(h1, chart),
                     chart=chart)
    inc1 = CappedGraphCurve(h1, xc=0.999 * chart)
    geom = Geometry(
        outer=Circle((0.0, 0.0), 5.0 * scale),
        inclusion1=inc1,
        inclusion2=MirroredCurve(inc1),
        eps=float(eps),
        gap=gap,
        phi=phi if phi is not None else LinearPotential(),
        scale=float(scale),
        name=f"parabola_a{a:g}",
    )
    return geom


def build_table_example(table_path_or_profile, eps=0.0, scale=1.0, phi=None, chart=None):
    """Inclusions built from a sampled symmetric profile table (x', h)."""
    if isinstance(table_path_or_profile, TableProfile):
        prof = table_path_or_profile
    else:
        prof = TableProfile.from_file(table_path_or_profile)
    chart = chart if chart is not None else min(1.0, 0.98 * prof.x_range[1],
                                                0.98 * abs(prof.x_range[0]))
    x = np.linspace(0.05 * chart, chart, 64)
    ratios = prof(x) / (x * x)
    c1_half = float(ratios.min())
    if c1_half <= 0:
        raise GeometryError("table profile is not relatively convex")
    gap = GapProfile(h1=prof, h2=NegatedProfile(prof), c1=2 * 0.99 * c1_half,
                     c2=_c2_bound(prof, chart), chart=chart)
    inc1 = CappedGraphCurve(prof, xc=0.999 * chart)
    return Geometry(
        outer=Circle((0.0, 0.0), 5.0 * scale),
        inclusion1=inc1,
        inclusion2=MirroredCurve(inc1),
        eps=float(eps),
        gap=gap,
        phi=phi if phi is not None else LinearPotential(),
        scale=float(scale),
        name="table",
    )


def build_annulus(r_inner=1.0, r_outer=2.0, phi=None):
    """Single circular inclusion in a concentric disc; used for manufactured
    radial solutions."""
    if not 0 < r_inner < r_outer:
        raise GeometryError("need 0 < r_inner < r_outer")
    return Geometry(
        outer=Circle((0.0, 0.0), r_outer),
        inclusion1=Circle((0.0, 0.0), r_inner),
        inclusion2=None,
        eps=0.0,
        gap=None,
        phi=phi if phi is not None else ConstantPotential(1.0),
        scale=1.0,
        name=f"annulus_{r_inner:g}_{r_outer:g}",
    )


def _c2_bound(profile, chart, n=400):
    x = np.linspace(-chart, chart, n)
    h = np.abs(np.asarray(profile(x)))
    hp = np.abs(np.asarray(profile.deriv(x)))
    step = chart / n
    xi = x[1:-1]
    hpp = np.abs((np.asarray(profile(xi + step)) - 2 * np.asarray(profile(xi))
                  + np.asarray(profile(xi - step))) / step**2)
    return 1.05 * float(max(h.max(), hp.max(), hpp.max()))


# ---------------------------------------------------------------------------
# config files
# ---------------------------------------------------------------------------

def parse_config(path):
    """Parse a `key = value` config file; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise GeometryError(f"{path}:{ln}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key] = val
    return out


def load_geometry_config(path):
    """Build a Geometry from a key-value config file.

    Recognized keys: shape = disc|parabola|table|annulus, eps, scale,
    phi = linear_xn|custom_poly|const, phi_poly (triples coef:i:j),
    phi_value, table (path to two-column profile), parabola_a,
    r_inner/r_outer (annulus).
    """
    import os

    cfg = parse_config(path)
    shape = cfg.get("shape", "disc")
    eps = float(cfg.get("eps", "0.01"))
    scale = float(cfg.get("scale", "1"))
    phi_kind = cfg.get("phi", "linear_xn")
    if phi_kind == "linear_xn":
        phi = LinearPotential()
    elif phi_kind == "const":
        phi = ConstantPotential(float(cfg.get("phi_value", "1")))
    elif phi_kind == "custom_poly":
        terms = []
        for chunk in cfg.get("phi_poly", "1:0:1").replace(",", " ").split():
            c, i, j = chunk.split(":")
            terms.append((float(c), int(i), int(j)))
        phi = PolyPotential(terms)
    else:
        raise GeometryError(f"unknown phi kind {phi_kind!r}")

    if shape == "disc":
        return build_symmetric_disc_example(scale=scale, eps=eps, phi=phi)
    if shape == "parabola":
        return build_parabola_example(a=float(cfg.get("parabola_a", "0.25")),
                                      eps=eps, scale=scale, phi=phi)
    if shape == "table":
        table = cfg.get("table")
        if table is None:
            raise GeometryError("shape=table requires a 'table' path")
        if not os.path.isabs(table):
            table = os.path.join(os.path.dirname(os.path.abspath(path)), table)
        return build_table_example(table, eps=eps, scale=scale, phi=phi)
    if shape == "annulus":
        return build_annulus(float(cfg.get("r_inner", "1")),
                             float(cfg.get("r_outer", "2")), phi=phi)
    raise GeometryError(f"unknown shape {shape!r}")
