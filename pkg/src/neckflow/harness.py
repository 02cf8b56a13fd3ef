"""Sweep orchestration: run solver + analysis over a (p, eps) matrix, fit
the separation asymptotics, compare measured neck gradients against the
closed-form predictions, and persist deterministic CSV/JSON reports.

Outputs in the chosen directory:

  rows.csv            frozen column order (see CSV_BASE_COLUMNS + one
                      `winflux_r<r>` column per flux window), one row per
                      (p, eps) case, byte-stable for a fixed config and seed
  probes.csv          one row per gradient probe (analysis CSV schema)
  report.json         everything, including fits and per-case runtimes
  solution_<p>_<eps>.txt / .json   nodal values + scalar summary per case

Mesh reuse: set NECKFLOW_CACHE (or SweepSpec.cache_dir) to a directory and
meshes are stored there in the plain-text mesh format, keyed by geometry,
separation, and grading parameters.
"""

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import analysis as fa
from . import asymptotics as asy
from .errors import NeckflowError
from .geometry import INC1, INC2, load_geometry_config
from .meshing import generate, load_mesh, refine_uniform, save_mesh
from .solver import SolveConfig, solve

CSV_BASE_COLUMNS = (
    "p", "eps", "U1", "U2", "ugap", "ugap_over_scale", "maxgrad",
    "maxgrad_x", "maxgrad_y", "energy", "kkt_residual", "flux1", "flux2",
    "eta_sensitivity", "u_min", "u_max", "nv", "nt", "min_angle_deg",
    "neck_layers",
)

DEFAULT_FLUX_WINDOWS = (0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.07, 0.05)


@dataclass
class SweepSpec:
    geometry: object                  # Geometry or config-file path
    p_list: tuple = (1.3, 2.0, 3.0)
    eps_list: tuple = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
    target_h: float = 0.1
    neck_layers: int = 6
    refine: int = 0
    probes: tuple = (0.0, 0.05)
    flux_windows: tuple = DEFAULT_FLUX_WINDOWS
    out_dir: str = None
    workers: int = 1
    seed: int = 0
    newton_tol: float = 1e-10
    maxgrad_window: float = 0.25
    cache_dir: str = None
    mesh_vertex_cap: int = 2_000_000

    def resolved_geometry(self):
        if isinstance(self.geometry, (str, os.PathLike)):
            return load_geometry_config(self.geometry)
        return self.geometry

    def validate(self):
        if any(p <= 1 for p in self.p_list):
            raise NeckflowError("all exponents must exceed 1")
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise NeckflowError("eps_list must be strictly decreasing")
        if self.out_dir is not None:
            os.makedirs(self.out_dir, exist_ok=True)
            probe = os.path.join(self.out_dir, ".write_probe")
            with open(probe, "w") as fh:
                fh.write("ok")
            os.remove(probe)

    def meta(self):
        d = asdict(self)
        d["geometry"] = getattr(self.resolved_geometry(), "name", str(self.geometry))
        return d


@dataclass
class SweepReport:
    spec: dict
    rows: list
    fits: dict
    predictions: list
    failures: list = field(default_factory=list)
    runtime_s: float = 0.0

    @property
    def ok(self):
        return not self.failures

    def row(self, p, eps):
        for r in self.rows:
            if r["p"] == p and r["eps"] == eps:
                return r
        raise KeyError((p, eps))


# ---------------------------------------------------------------------------
# mesh cache
# ---------------------------------------------------------------------------

def _cache_dir(spec):
    return spec.cache_dir or os.environ.get("NECKFLOW_CACHE")


def _mesh_key(geom, spec, eps):
    raw = (getattr(geom, "name", "geom"), float(geom.scale), float(eps),
           float(spec.target_h), int(spec.neck_layers), int(spec.refine),
           int(spec.seed))
    import hashlib
    return hashlib.md5(repr(raw).encode()).hexdigest()[:16]


def case_mesh(geom, spec, eps):
    g = geom.with_eps(eps)
    cdir = _cache_dir(spec)
    if cdir:
        os.makedirs(cdir, exist_ok=True)
        path = os.path.join(cdir, f"mesh_{_mesh_key(geom, spec, eps)}.txt")
        if os.path.exists(path):
            return load_mesh(path, geometry=g)
    mesh = generate(g, spec.target_h, spec.neck_layers, seed=spec.seed,
                    vertex_cap=spec.mesh_vertex_cap)
    for _ in range(spec.refine):
        mesh = refine_uniform(mesh)
    if cdir:
        tmp = path + f".tmp{os.getpid()}"
        save_mesh(mesh, tmp)
        os.replace(tmp, path)
    return mesh


# ---------------------------------------------------------------------------
# single case
# ---------------------------------------------------------------------------

def run_case(geom, p, eps, spec, mesh=None):
    """Solve one (p, eps) case and collect the row dictionary."""
    t0 = time.time()
    g = geom.with_eps(eps)
    if mesh is None:
        mesh = case_mesh(geom, spec, eps)
    sol = solve(mesh, g, SolveConfig(p=p, newton_tol=spec.newton_tol))
    mg, loc = fa.max_gradient(sol, mesh, window=spec.maxgrad_window)
    regime = asy.Regime(p, 2)
    row = {
        "p": p, "eps": eps,
        "U1": sol.U1, "U2": sol.U2, "ugap": sol.ugap,
        "ugap_over_scale": sol.ugap / asy.blowup_scale(eps, regime),
        "maxgrad": mg, "maxgrad_x": loc[0], "maxgrad_y": loc[1],
        "energy": sol.energy, "kkt_residual": sol.kkt_residual,
        "flux1": sol.flux1, "flux2": sol.flux2,
        "eta_sensitivity": (math.nan if sol.eta_sensitivity is None
                            else sol.eta_sensitivity),
        "u_min": float(sol.nodal_values.min()),
        "u_max": float(sol.nodal_values.max()),
        "nv": mesh.n_vertices, "nt": mesh.n_triangles,
        "min_angle_deg": mesh.grading_report.min_angle_deg,
        "neck_layers": mesh.grading_report.neck_layers,
        "winflux": {float(r): fa.cross_section_flux(sol, mesh, r).value
                    for r in spec.flux_windows},
        "probes": [],
        "history": [(e, en, res) for (e, en, res) in sol.energy_history],
    }
    for xp in spec.probes:
        pr = fa.gradient_probe(sol, mesh, xp)
        row["probes"].append({"xprime": float(xp), "xn": pr.point.xn,
                              "grad_x": pr.grad[0], "grad_n": pr.grad[1],
                              "delta": pr.delta_at_point})
    row["runtime_s"] = time.time() - t0
    if spec.out_dir:
        _persist_solution(sol, mesh, row, spec.out_dir)
    return row


def _case_name(p, eps):
    return f"solution_{p:g}_{eps:g}"


def _persist_solution(sol, mesh, row, out_dir):
    base = os.path.join(out_dir, _case_name(row["p"], row["eps"]))
    with open(base + ".txt", "w") as fh:
        for i, v in enumerate(sol.nodal_values):
            fh.write(f"{i} {float(v)!r}\n")
    summary = {
        "p": row["p"], "eps": row["eps"], "U1": row["U1"], "U2": row["U2"],
        "energy": row["energy"], "flux1": row["flux1"], "flux2": row["flux2"],
        "kkt_residual": row["kkt_residual"],
        "mesh_stats": {"nv": row["nv"], "nt": row["nt"],
                       "min_angle_deg": row["min_angle_deg"],
                       "neck_layers": row["neck_layers"]},
    }
    with open(base + ".json", "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)


def _case_task(args):
    geom, p, eps, spec = args
    try:
        return ("ok", p, eps, run_case(geom, p, eps, spec))
    except NeckflowError as exc:
        return ("failed", p, eps, f"{type(exc).__name__}: {exc}")


# ---------------------------------------------------------------------------
# fits over the sweep
# ---------------------------------------------------------------------------

def slope_fit(rows):
    """Log-log slope of max gradient against separation."""
    pts = [(r["eps"], r["maxgrad"]) for r in rows if r["maxgrad"] > 0]
    if len(pts) < 2:
        return {"slope": math.nan, "status": "insufficient points"}
    x = np.log([a for a, _ in pts])
    y = np.log([b for _, b in pts])
    return {"slope": float(np.polyfit(x, y, 1)[0]), "status": "ok",
            "points": len(pts)}


def fit_case_family(rows, p, gap_hessian):
    """Slope, potential-gap limit, and flux extrapolation for one exponent."""
    regime = asy.Regime(p, 2)
    out = {"p": p, "branch": regime.branch, "slope_fit": slope_fit(rows)}
    gap_rows = [(r["eps"], r["ugap"]) for r in rows]
    if len(gap_rows) >= 3 and regime.branch != asy.SUB:
        fit = asy.fit_ugap_limit(gap_rows, regime, gap_hessian)
        out["ugap_fit"] = {"limit": fit.limit, "flux_implied": fit.flux_implied,
                           "ratios": list(fit.ratios),
                           "extrapolated": fit.extrapolated,
                           "warning": fit.warning}
    elif len(gap_rows) >= 3:
        ratios = [g for _, g in gap_rows]
        out["ugap_fit"] = {"limit": float(asy._aitken(ratios)),
                           "flux_implied": math.nan, "ratios": ratios,
                           "extrapolated": True, "warning": ""}
    tables = {r["eps"]: r["winflux"] for r in rows}
    wrows = asy.extrapolated_window_rows(tables, regime)
    if wrows:
        fx = asy.extrapolate_flux(wrows)
        out["flux_extrapolation"] = {"value": fx.value,
                                     "amplitude": fx.amplitude,
                                     "rate": fx.rate, "fallback": fx.fallback,
                                     "rows": [[r, v] for r, v in wrows]}
    return out


def compare_prediction(rows, gap_hessian, fits):
    """Per-probe relative error of the measured vertical neck gradient
    against the leading-order prediction.

    Flux-carrying branches use the flux implied by the potential-gap
    extrapolation (the sharpest desk-scale estimate of the limiting flux);
    the SUB branch prediction is the same-separation potential gap divided
    by the local gap width.  Probes outside the branch's validity window are
    flagged EXCLUDED; a zero prediction switches to absolute error."""
    table = []
    for row in rows:
        p, eps = row["p"], row["eps"]
        regime = asy.Regime(p, 2)
        fit = fits.get(p, {})
        for probe in row["probes"]:
            entry = {"p": p, "eps": eps, "xprime": probe["xprime"],
                     "xn": probe["xn"], "delta": probe["delta"],
                     "grad_x": probe["grad_x"], "grad_n": probe["grad_n"]}
            try:
                region = asy.lower_bound_region(regime, eps)
            except NeckflowError:
                region = 0.0
            if abs(probe["xprime"]) > region:
                entry.update(status="EXCLUDED", predicted_grad_n=math.nan,
                             rel_error=math.nan)
                table.append(entry)
                continue
            if regime.branch == asy.SUB:
                pred = asy.predict_expansion(row["ugap"], regime, eps)
            else:
                F = fit.get("ugap_fit", {}).get("flux_implied", math.nan)
                if not math.isfinite(F):
                    entry.update(status="NO_FIT", predicted_grad_n=math.nan,
                                 rel_error=math.nan)
                    table.append(entry)
                    continue
                pred = asy.predict_expansion(F, regime, eps, gap_hessian)
            pval = pred.predicted_dn(probe["delta"])
            entry["predicted_grad_n"] = pval
            if pval == 0.0 or pred.zero_leading:
                entry.update(status="ABS", rel_error=abs(probe["grad_n"]))
            else:
                entry.update(status="OK",
                             rel_error=abs(probe["grad_n"] - pval) / abs(pval))
            table.append(entry)
    return table


# ---------------------------------------------------------------------------
# sweep driver
# ---------------------------------------------------------------------------

def run_sweep(spec: SweepSpec) -> SweepReport:
    spec.validate()
    t0 = time.time()
    geom = spec.resolved_geometry()
    if geom.kind != "two_inclusion":
        raise NeckflowError("sweeps require a two-inclusion geometry")
    geom.validate(eps_values=spec.eps_list)
    results = []
    if spec.workers > 1:
        if not _cache_dir(spec):
            spec.cache_dir = os.path.join(spec.out_dir or ".", "mesh_cache")
        for eps in spec.eps_list:   # prewarm the mesh cache serially
            case_mesh(geom, spec, eps)
        cases = [(geom, p, eps, spec) for p in spec.p_list
                 for eps in spec.eps_list]
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_case_task, cases))
    else:
        meshes = {}
        for p in spec.p_list:
            for eps in spec.eps_list:
                if eps not in meshes:
                    try:
                        meshes[eps] = case_mesh(geom, spec, eps)
                    except NeckflowError as exc:
                        meshes[eps] = exc
                try:
                    if isinstance(meshes[eps], NeckflowError):
                        raise meshes[eps]
                    results.append(("ok", p, eps,
                                    run_case(geom, p, eps, spec,
                                             mesh=meshes[eps])))
                except NeckflowError as exc:
                    results.append(("failed", p, eps,
                                    f"{type(exc).__name__}: {exc}"))

    rows, failures = [], []
    for status, p, eps, payload in results:
        if status == "ok":
            rows.append(payload)
        else:
            failures.append({"p": p, "eps": eps, "error": payload})
    rows.sort(key=lambda r: (r["p"], -r["eps"]))

    hess = [[geom.gap.gap_hessian0()]]
    fits = {}
    for p in spec.p_list:
        fam = [r for r in rows if r["p"] == p]
        if fam:
            fits[p] = fit_case_family(fam, p, hess)
    predictions = compare_prediction(rows, hess, fits)

    report = SweepReport(spec=spec.meta(), rows=rows, fits=fits,
                         predictions=predictions, failures=failures,
                         runtime_s=time.time() - t0)
    if spec.out_dir:
        write_report(report, spec)
    return report


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _g(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return f"{x:.12g}"
    return str(x)


def write_report(report: SweepReport, spec: SweepSpec):
    out = spec.out_dir
    win_cols = [f"winflux_r{r:g}" for r in spec.flux_windows]
    with open(os.path.join(out, "rows.csv"), "w") as fh:
        fh.write(f"# generated {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        fh.write(",".join(list(CSV_BASE_COLUMNS) + win_cols) + "\n")
        for r in report.rows:
            vals = [_g(r[c]) for c in CSV_BASE_COLUMNS]
            vals += [_g(r["winflux"][float(w)]) for w in spec.flux_windows]
            fh.write(",".join(vals) + "\n")
    probe_rows = []
    for entry in report.predictions:
        probe_rows.append({"eps": entry["eps"], "p": entry["p"],
                           "xprime": entry["xprime"], "xn": entry["xn"],
                           "delta": entry["delta"], "grad_x": entry["grad_x"],
                           "grad_n": entry["grad_n"],
                           "predicted_grad_n": entry["predicted_grad_n"]})
    fa.write_probe_csv(os.path.join(out, "probes.csv"), probe_rows)
    payload = {"spec": report.spec, "rows": report.rows,
               "fits": {str(k): v for k, v in report.fits.items()},
               "predictions": report.predictions,
               "failures": report.failures,
               "runtime_s": report.runtime_s}
    with open(os.path.join(out, "report.json"), "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_json_default)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x)}")


# ---------------------------------------------------------------------------
# auxiliary decay fixture
# ---------------------------------------------------------------------------

def solve_decay_fixture(geom=None, eps=1e-3, p=2.0, target_h=0.05, layers=8,
                        samples=None):
    """Solve the zero-boundary narrow-strip problem (homogeneous data on the
    two graph walls, unit data on the side walls) and fit the interior decay.
    Returns (slope estimate, r^2, solution, mesh)."""
    from .geometry import ConstantPotential, build_symmetric_disc_example
    from .meshing import generate_neck_strip

    if geom is None:
        geom = build_symmetric_disc_example(eps=eps,
                                            phi=ConstantPotential(1.0))
    else:
        geom = geom.with_eps(eps)
    mesh = generate_neck_strip(geom, target_h, layers)
    sol = solve(mesh, geom, SolveConfig(p=p, inclusion_values={INC1: 0.0,
                                                               INC2: 0.0}))
    if samples is None:
        samples = np.linspace(0.25, 0.85, 25)
    c2, r2 = fa.decay_fit(sol, mesh, samples, geom)
    return c2, r2, sol, mesh
