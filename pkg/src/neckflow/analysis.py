"""Post-processing of solved states: variationally consistent fluxes, neck
gradient probes, blow-up statistics, exponential-decay fits, and empirical
Hölder quotients.

Fluxes are evaluated in dual-weighted (residual) form: for a nodal cutoff
field chi, the current through the layer where chi drops from 1 to 0 equals
(1/p) sum_i chi_i dE/du_i.  Raw edge quadrature of piecewise-constant
gradients is noisy exactly where accuracy is needed, so it is never used.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, GeometryError
from .geometry import INC2, NeckPoint, TAG_NAMES, gap_width, model_gap_width
from .solver import ElementOps

BELOW_NECK = "BELOW_NECK"


@dataclass(frozen=True)
class FluxEstimate:
    value: float
    method: str     # KKT_CONDENSED | CUTOFF_VOLUME | CROSS_SECTION
    surface: object  # boundary tag name or window radius


@dataclass(frozen=True)
class GradientProbe:
    point: NeckPoint
    grad: tuple
    delta_at_point: float


# ---------------------------------------------------------------------------
# fluxes
# ---------------------------------------------------------------------------

def kkt_condensed_flux(sol, mesh, tag):
    """Current out of the tagged inclusion, read off the condensed-DOF
    stationarity residual (zero at convergence for floating inclusions)."""
    verts = np.flatnonzero(mesh.vertex_tag == tag)
    val = -float(sol.grad_full[verts].sum()) / sol.p
    return FluxEstimate(val, "KKT_CONDENSED", TAG_NAMES[tag])


def cutoff_volume_flux(sol, mesh, tag, band=None):
    """Current out of the tagged component via the volume form
    -int |grad u|^(p-2) grad u . grad chi over an explicit cutoff layer."""
    pts = mesh.vertices
    bverts = np.flatnonzero(mesh.vertex_tag == tag)
    if band is None:
        band = 6.0 * mesh.grading_report.h_max
    from scipy.spatial import cKDTree
    tree = cKDTree(pts[bverts])
    d, _ = tree.query(pts)
    chi = np.clip(1.0 - d / band, 0.0, 1.0)
    chi[mesh.vertex_tag == tag] = 1.0
    chi[(mesh.vertex_tag != tag) & (mesh.vertex_tag != 0)] = 0.0
    ops = ElementOps(mesh)
    gchi = ops.gradients(chi)
    g = sol.element_gradients
    w = sol.eta_final**2 + np.einsum("ti,ti->t", g, g)
    coef = np.where(w > 0, np.where(w > 0, w, 1.0) ** (sol.p / 2.0 - 1.0), 0.0)
    val = -float(np.dot(ops.area, coef * np.einsum("ti,ti->t", g, gchi)))
    return FluxEstimate(val, "CUTOFF_VOLUME", TAG_NAMES[tag])


def boundary_outward_fluxes(sol, mesh):
    """Current out of the domain through each boundary component; the values
    sum to zero up to the assembly residual."""
    out = {}
    for tag in np.unique(mesh.boundary_tags):
        verts = np.flatnonzero(mesh.vertex_tag == tag)
        out[TAG_NAMES[int(tag)]] = float(sol.grad_full[verts].sum()) / sol.p
    return out


def cross_section_flux(sol, mesh, r, side=BELOW_NECK):
    """Current flowing upward through the lower neck boundary restricted to
    |x'| < r (the window flux whose eps -> 0 limit is the touching-problem
    flux)."""
    if side != BELOW_NECK:
        raise ValueError(f"unsupported side {side!r}")
    geom = mesh.geometry
    if geom is None or geom.gap is None:
        raise GeometryError("cross-section flux needs a two-inclusion geometry")
    if not 0 < r < geom.gap.chart:
        raise GeometryError(f"window radius {r} outside (0, {geom.gap.chart})")
    verts = np.flatnonzero((mesh.vertex_tag == INC2)
                           & (np.abs(mesh.vertices[:, 0]) <= r))
    val = -float(sol.grad_full[verts].sum()) / sol.p
    return FluxEstimate(val, "CROSS_SECTION", r)


def annulus_circle_flux(sol, mesh, r, band_cells=4.0):
    """Current flowing outward through the circle |x| = r in an annulus mesh,
    in cutoff-volume form."""
    pts = mesh.vertices
    rr = np.linalg.norm(pts, axis=1)
    band = band_cells * mesh.grading_report.h_max
    chi = np.clip((r - rr) / band + 0.5, 0.0, 1.0)
    ops = ElementOps(mesh)
    gchi = ops.gradients(chi)
    g = sol.element_gradients
    w = sol.eta_final**2 + np.einsum("ti,ti->t", g, g)
    coef = np.where(w > 0, np.where(w > 0, w, 1.0) ** (sol.p / 2.0 - 1.0), 0.0)
    val = -float(np.dot(ops.area, coef * np.einsum("ti,ti->t", g, gchi)))
    return FluxEstimate(val, "CUTOFF_VOLUME", r)


# ---------------------------------------------------------------------------
# gradient extraction
# ---------------------------------------------------------------------------

def max_gradient(sol, mesh, window=None):
    """Largest element-gradient magnitude among triangles whose centroid has
    |x'| <= window (whole domain when window is None); returns (value,
    centroid location)."""
    g = sol.element_gradients
    mag = np.linalg.norm(g, axis=1)
    cent = mesh.centroids()
    if window is not None:
        sel = np.abs(cent[:, 0]) <= window
        if not np.any(sel):
            return 0.0, (math.nan, math.nan)
        mag = mag[sel]
        cent = cent[sel]
    k = int(np.argmax(mag))
    return float(mag[k]), (float(cent[k, 0]), float(cent[k, 1]))


def gradient_probe(sol, mesh, xprime, frac=0.5):
    """Element gradient of the triangle containing the neck point at height
    fraction `frac` between the two walls (no recovery smoothing)."""
    geom = mesh.geometry
    y = (1 - frac) * geom.lower_wall(xprime) + frac * geom.upper_wall(xprime)
    pt = NeckPoint(float(xprime), float(y))
    tri, _ = mesh.locate(pt.as_array()[None, :])
    if tri[0] < 0:
        raise GeometryError(f"probe point {pt} not inside the mesh")
    gx, gy = sol.element_gradients[tri[0]]
    return GradientProbe(pt, (float(gx), float(gy)),
                         gap_width(geom, pt))


def probe_value_and_gradient(sol, mesh, pts):
    """Nodal-interpolated values and element gradients at arbitrary points."""
    pts = np.atleast_2d(pts)
    tri, bary = mesh.locate(pts)
    if np.any(tri < 0):
        raise GeometryError("point outside mesh in probe")
    vals = np.einsum("pk,pk->p", sol.nodal_values[mesh.triangles[tri]], bary)
    grads = sol.element_gradients[tri]
    return vals, grads


def recovered_vertex_gradients(sol, mesh):
    """Area-weighted average of element gradients at vertices."""
    nv = mesh.n_vertices
    ops = ElementOps(mesh)
    acc = np.zeros((nv, 2))
    wts = np.zeros(nv)
    t = mesh.triangles
    for k in range(3):
        np.add.at(acc, t[:, k], sol.element_gradients * ops.area[:, None])
        np.add.at(wts, t[:, k], ops.area)
    return acc / wts[:, None]


def interpolate_recovered_gradient(mesh, vgrad, pts):
    pts = np.atleast_2d(pts)
    tri, bary = mesh.locate(pts)
    ok = tri >= 0
    out = np.full((len(pts), 2), np.nan)
    out[ok] = np.einsum("pk,pkd->pd", bary[ok], vgrad[mesh.triangles[tri[ok]]])
    return out


# ---------------------------------------------------------------------------
# exponential-decay fit
# ---------------------------------------------------------------------------

def fit_log_decay(xprimes, magnitudes, eps):
    """Linear least squares of log(magnitude) against -1/(sqrt(eps)+|x'|);
    returns (slope, r^2).  A positive slope is an exponential interior decay
    at the modeled rate."""
    x = np.asarray(xprimes, dtype=float)
    mag = np.asarray(magnitudes, dtype=float)
    if len(x) < 3 or np.ptp(x) < 1e-12:
        raise FitError("need >= 3 distinct sample stations for the decay fit")
    if np.any(mag <= 0):
        raise FitError("zero field magnitude at a sample station")
    t = -1.0 / (math.sqrt(eps) + np.abs(x))
    y = np.log(mag)
    A = np.column_stack([np.ones_like(t), t])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    if ss_tot <= 0:
        raise FitError("degenerate sample spread in decay fit")
    return float(coef[1]), float(1.0 - ss_res / ss_tot)


def decay_fit(sol_aux, mesh, samples, geom=None):
    """Least-squares fit of log(|v| + |Dv|) against -1/(sqrt(eps) + |x'|)
    for the zero-boundary auxiliary state; returns (slope estimate, r^2).

    The slope estimates the decay constant in the interior bound
    exp(-c/(sqrt(eps)+|x'|)); only its positivity and the fit quality are
    meaningful, the constant itself is geometry dependent.
    """
    geom = geom if geom is not None else mesh.geometry
    samples = np.asarray(sorted(samples), dtype=float)
    if len(samples) < 3 or np.ptp(samples) < 1e-12:
        raise FitError("need >= 3 distinct sample stations for the decay fit")
    ys = 0.5 * (np.asarray(geom.upper_wall(samples))
                + np.asarray(geom.lower_wall(samples)))
    pts = np.column_stack([samples, ys])
    vals, grads = probe_value_and_gradient(sol_aux, mesh, pts)
    mag = np.abs(vals) + np.linalg.norm(grads, axis=1)
    return fit_log_decay(samples, mag, geom.eps)


# ---------------------------------------------------------------------------
# empirical Hölder quotients
# ---------------------------------------------------------------------------

def _ball_sample_points(geom, x0, radius, n_x=9, n_t=7):
    """Sample grid inside the neck region {|x' - x0| < radius} between the
    walls (the natural neighborhood used for oscillation estimates)."""
    xs = x0 + np.linspace(-radius, radius, n_x)
    ts = np.linspace(0.08, 0.92, n_t)
    pts = []
    for x in xs:
        lo, hi = geom.lower_wall(x), geom.upper_wall(x)
        for t in ts:
            pts.append((x, (1 - t) * lo + t * hi))
    return np.asarray(pts)


def holder_quotient_scan(grad_eval, geom, beta, points, sup_grad_eval=None):
    """Empirical Hölder-quotient scan.

    grad_eval maps an (n, 2) point array to gradients.  For each neck point x
    the scan takes the max over sampled pairs y, z within the window of
    half-width sqrt(model_gap(x))/4 of |G(y)-G(z)| / |y-z|^beta, normalized by
    model_gap(x)^(-beta/2) times the sup of |G| over the twice-wider window.
    Returns (max normalized quotient, per-point list); points whose window
    leaves the chart are skipped with a warning entry (value None).
    """
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    sup_eval = sup_grad_eval if sup_grad_eval is not None else grad_eval
    results = []
    for pt in points:
        x0 = pt.xprime if isinstance(pt, NeckPoint) else float(pt)
        dbar = model_gap_width(geom, x0)
        r_small = math.sqrt(dbar) / 4.0
        r_big = math.sqrt(dbar) / 2.0
        if abs(x0) + r_big >= geom.gap.chart:
            results.append((x0, None))
            continue
        sample = _ball_sample_points(geom, x0, r_small)
        G = np.asarray(grad_eval(sample))
        diffs = G[:, None, :] - G[None, :, :]
        dist = np.linalg.norm(sample[:, None, :] - sample[None, :, :], axis=2)
        iu = np.triu_indices(len(sample), k=1)
        quot = np.linalg.norm(diffs[iu], axis=1) / dist[iu] ** beta
        raw = float(np.max(quot))
        sup_pts = _ball_sample_points(geom, x0, r_big, n_x=13, n_t=9)
        sup_grad = float(np.max(np.linalg.norm(np.asarray(sup_eval(sup_pts)), axis=1)))
        if sup_grad <= 0:
            results.append((x0, 0.0))
            continue
        norm = raw / (dbar ** (-beta / 2.0) * sup_grad)
        results.append((x0, norm))
    vals = [v for _, v in results if v is not None]
    return (max(vals) if vals else math.nan), results


def holder_scan_from_solution(sol, mesh, beta, points):
    """Hölder scan over a solved state using recovery-averaged gradients."""
    vgrad = recovered_vertex_gradients(sol, mesh)

    def grad_eval(pts):
        return interpolate_recovered_gradient(mesh, vgrad, pts)

    return holder_quotient_scan(grad_eval, mesh.geometry, beta, points)


# ---------------------------------------------------------------------------
# probe CSV
# ---------------------------------------------------------------------------

PROBE_CSV_HEADER = "eps,p,xprime,xn,delta,grad_x,grad_n,predicted_grad_n"


def write_probe_csv(path, rows):
    """One row per probe: eps,p,xprime,xn,delta,grad_x,grad_n,predicted_grad_n."""
    with open(path, "w") as fh:
        fh.write(PROBE_CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[k]) for k in PROBE_CSV_HEADER.split(",")) + "\n")


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)
