"""Command-line entry points.

  neckflow solve  --config geom.cfg --p 2 --eps 1e-3 [--out DIR]
  neckflow sweep  --config geom.cfg [--p 1.3,2,3] [--eps 1e-2,...] --out DIR
  neckflow oracle [--out DIR]       closed-form self checks, no PDE
  neckflow accept [--out DIR]       full acceptance matrix; exit 0 iff green

The mesh cache directory is taken from NECKFLOW_CACHE when set.
"""

import argparse
import json
import math
import os
import sys

import numpy as np


def _parse_list(text, cast=float):
    return tuple(cast(tok) for tok in text.replace(",", " ").split())


def _geometry(args):
    from .geometry import build_symmetric_disc_example, load_geometry_config
    if args.config:
        return load_geometry_config(args.config)
    return build_symmetric_disc_example(scale=1.0)


def cmd_solve(args):
    from .harness import SweepSpec, run_case
    geom = _geometry(args)
    p = args.p[0] if args.p else 2.0
    eps = args.eps[0] if args.eps else 1e-3
    spec = SweepSpec(geometry=geom, p_list=(p,), eps_list=(eps,),
                     target_h=args.target_h, neck_layers=args.layers,
                     out_dir=args.out, seed=args.seed)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    row = run_case(geom, p, eps, spec)
    summary = {k: row[k] for k in ("p", "eps", "U1", "U2", "ugap", "energy",
                                   "flux1", "flux2", "kkt_residual", "maxgrad",
                                   "nv", "nt")}
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def cmd_sweep(args):
    from .harness import SweepSpec, run_sweep
    geom = _geometry(args)
    kwargs = {}
    if args.p:
        kwargs["p_list"] = args.p
    if args.eps:
        kwargs["eps_list"] = args.eps
    spec = SweepSpec(geometry=geom, out_dir=args.out, workers=args.workers,
                     seed=args.seed, target_h=args.target_h,
                     neck_layers=args.layers, **kwargs)
    report = run_sweep(spec)
    for p, fit in sorted(report.fits.items()):
        sf = fit["slope_fit"]
        slope = "insufficient points" if sf["status"] != "ok" \
            else f"{sf['slope']:.4f}"
        print(f"p={p:g}: blow-up slope {slope}")
        if "flux_extrapolation" in fit:
            print(f"   extrapolated flux {fit['flux_extrapolation']['value']:.4f}")
        if "ugap_fit" in fit and not math.isnan(fit["ugap_fit"].get("flux_implied", math.nan)):
            print(f"   gap-implied flux  {fit['ugap_fit']['flux_implied']:.4f}")
    for f in report.failures:
        print(f"FAILED case p={f['p']} eps={f['eps']}: {f['error']}")
    if args.out:
        print(f"report written to {args.out}")
    return 0 if report.ok else 1


def cmd_oracle(args):
    from . import asymptotics as asy
    ok = True
    print("gamma-function spot checks:")
    exact = {1.0: 1.0, 0.5: math.sqrt(math.pi), 2.0: 1.0, 5.0: 24.0,
             1.5: math.sqrt(math.pi) / 2, 10.0: 362880.0}
    for z, val in sorted(exact.items()):
        rel = abs(asy.gamma_fn(z) - val) / val
        ok &= rel < 1e-12
        print(f"  gamma({z:g}) rel err {rel:.2e}")
    print("neck-integral iterated limits vs 1/K:")
    for n, p in ((2, 2.0), (2, 3.0), (3, 2.0), (4, 2.5)):
        reg = asy.Regime(p, n)
        H = 2.0 * np.eye(n - 1)
        lim = asy.neck_integral_limit(reg, H)
        rel = abs(lim * asy.gap_constant(H, reg) - 1.0)
        ok &= rel <= 1e-2
        print(f"  (n={n}, p={p:g}, {reg.branch}): limit {lim:.8f}, "
              f"rel dev {rel:.2e}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "oracle.txt"), "w") as fh:
            fh.write("ok\n" if ok else "failed\n")
    print("oracle:", "ok" if ok else "FAILED")
    return 0 if ok else 1


def cmd_accept(args):
    from .acceptance import run_acceptance
    out = args.out or "acceptance_out"
    results = run_acceptance(out, workers=args.workers, seed=args.seed)
    return 0 if all(r.passed for r in results) else 1


def main(argv=None):
    ap = argparse.ArgumentParser(prog="neckflow",
                                 description="two-inclusion nonlinear "
                                 "conductivity solver and verification harness")
    sub = ap.add_subparsers(dest="cmd", required=True)
    common = dict(config=lambda sp: sp.add_argument("--config", default=None),
                  out=lambda sp: sp.add_argument("--out", default=None),
                  seed=lambda sp: sp.add_argument("--seed", type=int, default=0),
                  workers=lambda sp: sp.add_argument("--workers", type=int,
                                                     default=1))
    for name, fn in (("solve", cmd_solve), ("sweep", cmd_sweep),
                     ("oracle", cmd_oracle), ("accept", cmd_accept)):
        sp = sub.add_parser(name)
        sp.set_defaults(fn=fn)
        for add in common.values():
            add(sp)
        if name in ("solve", "sweep"):
            sp.add_argument("--p", type=lambda s: _parse_list(s), default=None)
            sp.add_argument("--eps", type=lambda s: _parse_list(s), default=None)
            sp.add_argument("--target-h", dest="target_h", type=float,
                            default=0.1)
            sp.add_argument("--layers", type=int, default=6)
    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
