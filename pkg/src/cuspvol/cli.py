"""Command-line front end.

Every subcommand reads a JSON spec (model-check needs none), runs one
pipeline and writes CSV series, a JSON summary and, where there is a curve
to draw, a plot-data CSV into --out. Exit codes: 0 success, 1 a numerical
check failed, 2 usage or parse error.

Outputs depend only on the input file and the options: no timestamps, fixed seeds,
and floats written with repr, so a repeat run is byte-identical.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__

log = logging.getLogger("cuspvol")

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    spec_path: str | None
    spec: dict
    out: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        tol = self.options.get("tol")
        if tol is not None and not tol > 0:
            raise UsageError("--tol must be positive")

    @property
    def digest(self):
        """sha256 over subcommand, spec contents and effective options (not the paths)."""
        blob = json.dumps({"subcommand": self.subcommand, "spec": self.spec, "options": self.options},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- output ---------------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


class Writer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        os.makedirs(cfg.out, exist_ok=True)
        self.files = []

    def header(self, quantities):
        lines = [f"# cuspvol {__version__}", f"# subcommand {self.cfg.subcommand}",
                 f"# config sha256:{self.cfg.digest}"]
        lines += [f"# {name}: {desc}" for name, desc in quantities.items()]
        return lines

    def csv(self, name, quantities, rows):
        """quantities: ordered {column: description}; rows: iterables in that order."""
        path = os.path.join(self.cfg.out, name)
        cols = list(quantities)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.header(quantities):
                fh.write(line + "\n")
            fh.write(",".join(cols) + "\n")
            for r in rows:
                fh.write(",".join(_fmt(x) for x in r) + "\n")
        self.files.append(path)
        return path

    def json(self, name, payload, quantities=None):
        path = os.path.join(self.cfg.out, name)
        meta = dict(version=__version__, subcommand=self.cfg.subcommand, config_sha256=self.cfg.digest,
                    options=self.cfg.options, spec=self.cfg.spec)
        if quantities:
            meta["quantities"] = quantities
        doc = _clean(dict(meta=meta, **payload))
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n")
        self.files.append(path)
        return path


# --- spec and grid helpers ------------------------------------------------------------------

def _load_json(path):
    from .schottky import SpecError
    if path is None:
        return {}
    if not os.path.isfile(path):
        raise UsageError(f"spec file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise SpecError(f"{path}: top level must be an object")
    return data


def _num(spec, key, default=None, kind=float):
    from .schottky import SpecError
    if key not in spec:
        if default is None:
            raise SpecError(f"missing field {key!r}")
        return default
    try:
        return kind(spec[key])
    except (TypeError, ValueError):
        raise SpecError(f"field {key!r} must be a number, got {spec[key]!r}") from None


def resolve_grid(args, eps0, n, ratio, min_points):
    """eps grid from --grid (count or comma list), --eps0 and --eps-min.

    With a count, the grid is geometric from eps0 with the given ratio, or
    from eps0 down to --eps-min when that is set.
    """
    from .schottky import SpecError
    g = args.grid
    if g is not None and "," in g:
        try:
            grid = [float(x) for x in g.split(",") if x.strip()]
        except ValueError:
            raise SpecError(f"bad --grid list {g!r}") from None
    else:
        if g is not None:
            try:
                n = int(g)
            except ValueError:
                raise SpecError(f"--grid must be a count or a comma-separated list, got {g!r}") from None
        eps0 = args.eps0 if args.eps0 is not None else eps0
        if args.eps_min is not None:
            if n < 2:
                raise SpecError("need at least two grid points")
            grid = list(np.geomspace(eps0, args.eps_min, n))
        else:
            grid = [eps0 * ratio ** k for k in range(n)]
    if len(grid) < min_points:
        raise SpecError(f"eps grid needs at least {min_points} points, got {len(grid)}")
    if any(not e > 0 for e in grid) or any(a <= b for a, b in zip(grid, grid[1:])):
        raise SpecError("eps grid must be positive and strictly decreasing")
    return [float(e) for e in grid]


def _cusp_params(spec, args):
    from .cusp_model import CuspParams
    from .schottky import SpecError
    delta = args.delta if args.delta is not None else _num(spec, "delta", 0.9)
    try:
        return CuspParams(_num(spec, "ell"), _num(spec, "nu", 0.0), delta=delta)
    except ValueError as exc:
        raise SpecError(str(exc)) from None


def _boundary_data(spec, key, L, seed):
    """A data field: an expression in v, w, {"random": seed}, or absent (hyperbolic factor)."""
    from .hamilton_jacobi import BoundaryData, random_compliant_data
    from .renvol import hyperbolic_factor
    from .schottky import SpecError
    d = spec.get(key)
    if d is None:
        return BoundaryData.constant(hyperbolic_factor(L))
    if isinstance(d, dict) and "random" in d:
        return random_compliant_data(seed if seed is not None else int(d["random"]))
    if isinstance(d, (int, float)):
        return BoundaryData.constant(float(d))
    try:
        return BoundaryData.from_expr(str(d))
    except Exception as exc:  # sympy raises a variety of types
        raise SpecError(f"cannot parse {key!r} expression {d!r}: {exc}") from None


def _fit_rows(fp):
    return [(e, v) for e, v in fp.samples]


FIT_QUANTITIES = {"a2": "coefficient of eps^-2", "a1": "coefficient of log eps",
                  "a0": "finite part (renormalized volume)", "uncertainty": "a0 spread under thinned refits",
                  "residual": "relative rms residual of the fit", "cond": "condition number of the design"}


# --- subcommands ---------------------------------------------------------------------------

def cmd_group_validate(cfg: RunConfig, args, out: Writer):
    from .schottky import (FamilyNotAdmissible, SchottkyError, parse_spec, pairwise_gaps, validate_family_at,
                           validate_group)
    parsed = parse_spec(json.dumps(cfg.spec))
    if parsed[0] == "group":
        _, gens, circles = parsed
        try:
            G = validate_group(gens, circles)
        except SchottkyError as exc:
            print(str(exc))
            return EXIT_CHECK
        gaps = pairwise_gaps(G.circles)
        out.csv("gaps.csv", {"i": "first circle index", "k": "second circle index",
                             "gap": "Euclidean gap between the closed disks"},
                [(i, k, g) for (i, k), g in sorted(gaps.items())])
        out.json("group.json", dict(valid=True, genus=G.genus, min_gap=G.min_gap,
                                    max_pairing_deviation=G.max_pairing_dev))
        print(f"valid: genus {G.genus}, min gap {G.min_gap:.6g}, pairing deviation {G.max_pairing_dev:.3g}")
        return EXIT_OK
    fam = parsed[1]
    rows, bad = [], []
    for e in fam.eps_grid:
        try:
            G = validate_family_at(fam, e)
            rows.append((e, True, G.min_gap, G.max_pairing_dev, ""))
        except FamilyNotAdmissible as exc:
            rows.append((e, False, math.nan, math.nan, str(exc).replace(",", ";")))
            bad.append(e)
    out.csv("family.csv", {"eps": "family parameter", "valid": "circles disjoint and paired",
                           "min_gap": "smallest gap between disks", "pairing": "max pairing deviation",
                           "error": "validation message"}, rows)
    out.json("family.json", dict(valid=not bad, genus=fam.genus, failures=bad))
    for e in bad:
        print(f"eps={e!r}: not admissible")
    print(f"family genus {fam.genus}: {len(rows) - len(bad)}/{len(rows)} grid points valid")
    return EXIT_CHECK if bad else EXIT_OK


def cmd_volr(cfg: RunConfig, args, out: Writer):
    from .renvol import RadialCutoff, cusp_regularized_volume, slab_finite_part
    from .schottky import SpecError
    spec = cfg.spec
    kind = spec.get("kind", "cusp")
    tol = args.tol if args.tol is not None else 1e-8
    if kind == "slab":
        import sympy as sp
        x = sp.Symbol("x")
        try:
            warp = sp.lambdify(x, sp.sympify(str(spec.get("warp", "1")), locals={"x": x}), "numpy")
        except (sp.SympifyError, SyntaxError, TypeError) as exc:
            raise SpecError(f"cannot parse warp: {exc}") from None
        eps = resolve_grid(args, 0.1, 10, 0.6, 6)
        fp = slab_finite_part(lambda t: np.broadcast_to(warp(t), np.shape(t)) + 0.0, np.array(eps),
                              top=_num(spec, "top", 1.0))
    elif kind == "cusp":
        L = _cusp_params(spec, args)
        data = _boundary_data(spec, "data", L, args.seed)
        cut = RadialCutoff(_num(spec, "cutoff", 0.2))
        if cut.support >= L.delta:
            raise SpecError("cutoff support must lie inside the chart (2 cutoff < delta)")
        eps = resolve_grid(args, 0.016, 8, 0.5, 6)
        fp, _ = cusp_regularized_volume(L, data, cut, eps=np.array(eps))
    else:
        raise SpecError(f"unknown volr kind {kind!r} (slab or cusp)")
    out.csv("volr_series.csv", {"eps": "level of the boundary defining function",
                                "volume": "volume of {rho >= eps} (per unit area for slabs)"}, _fit_rows(fp))
    res = fp.as_dict()
    res["powers"] = sorted(fp.extra)
    ok = fp.residual <= tol
    out.json("volr_summary.json", dict(fit=res, residual_ok=ok, tol=tol), FIT_QUANTITIES)
    print(f"a0 = {fp.a0!r} +- {fp.uncertainty:.3g}  (a2 = {fp.a2:.10g}, a1 = {fp.a1:.3g}, "
          f"residual {fp.residual:.2e})")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_variation(cfg: RunConfig, args, out: Writer):
    from .cusp_model import CuspParams
    from .renvol import conformal_variation_direct, random_compliant_psi
    from .schottky import SpecError
    spec = cfg.spec
    tol = args.tol if args.tol is not None else 1e-3
    seeds = spec.get("seeds", [spec.get("seed", 0)])
    if args.seed is not None:
        seeds = [args.seed]
    band = tuple(spec.get("band", (0.1, 0.2, 0.35, 0.5)))
    if len(band) != 4 or not 0 < band[0] < band[1] <= band[2] < band[3]:
        raise SpecError("band must be four increasing positive numbers")
    delta = args.delta if args.delta is not None else _num(spec, "delta", 0.9)
    try:
        L = CuspParams(_num(spec, "ell"), _num(spec, "nu", 0.0), delta=delta)
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    rows = []
    for s in seeds:
        r = conformal_variation_direct(L, random_compliant_psi(int(s), band), (band[0], band[3]))
        rows.append((int(s), r.direct.a0, r.direct.uncertainty, r.formula, r.rel_error))
        print(f"seed {s}: direct {r.direct.a0:.10g}  formula {r.formula:.10g}  rel {r.rel_error:.2e}")
    q = {"seed": "seed of the random compliant psi", "direct": "FP difference of the two volumes",
         "uncertainty": "fit uncertainty of the difference", "formula": "-1/4 int (|d psi|^2 - 2 psi) dA",
         "rel_error": "|direct - formula| / |formula|"}
    out.csv("variation.csv", q, rows)
    worst = max(r[-1] for r in rows)
    out.json("variation.json", dict(max_rel_error=worst, tol=tol, ok=worst < tol), q)
    return EXIT_OK if worst < tol else EXIT_CHECK


def cmd_sweep(cfg: RunConfig, args, out: Writer):
    from .degeneration import CuspFamily, run_sweep
    spec = dict(cfg.spec)
    fam = CuspFamily.from_dict(spec)
    if any(x is not None for x in (args.grid, args.eps0, args.eps_min)):
        r = fam.grid[1] / fam.grid[0] if len(fam.grid) > 1 else 0.4
        grid = resolve_grid(args, fam.grid[0], len(fam.grid), r, 4)
    else:
        grid = list(fam.grid)
    if args.delta is not None:
        from dataclasses import replace
        fam = replace(fam, delta=args.delta)
        if fam.outer < 2 * fam.delta:
            from .schottky import SpecError
            raise SpecError("outer must be at least 2 delta")
    gap_tol = args.tol if args.tol is not None else 1e-2
    regions = bool(spec.get("regions", True))
    run = run_sweep(fam, grid, gap_tol=gap_tol, regions=regions,
                    progress=lambda rec: log.info("eps=%g volR=%.10g", rec.eps, rec.volR))
    rows = [r.row() for r in run.records + [run.limit]]
    cols = ["eps", "ell", "nu", "volR", "near", "far", "uncertainty", "additivity", "region_mismatch",
            "hj_gap"] + (["R1", "R2", "R3"] if regions else []) + ["error"]
    desc = {"eps": "family parameter (0 is the limit)", "ell": "translation length", "nu": "twist",
            "volR": "renormalized volume of the cutoff cusp piece", "near": "inner cutoff piece",
            "far": "annular cutoff piece", "uncertainty": "fit uncertainty of volR",
            "additivity": "|near + far - volR|", "region_mismatch": "relative region-sum vs direct mismatch",
            "hj_gap": "sup distance of the HJ field to the limit on a fixed compact set",
            "R1": "region u >= ell, u >= |v|", "R2": "region u < ell, |v| < ell",
            "R3": "region |v| >= ell, u < |v|", "error": "per-eps failure message"}
    out.csv("sweep.csv", {c: desc[c] for c in cols}, [[row.get(c, "") for c in cols] for row in rows])
    lim = run.limit.volR
    out.csv("sweep_plot.csv", {"eps": "family parameter", "volR": "renormalized volume",
                               "gap": "|volR(eps) - volR(0)|"},
            [(r.eps, r.volR, abs(r.volR - lim)) for r in run.records])
    ch = run.checks
    out.json("sweep_summary.json", dict(family=fam.name, grid=grid, limit=lim, checks=ch), desc)
    for e in ch["failures"]:
        print(f"eps={e!r}: failed")
    ok = ch["converged"] and ch.get("regions_ok", True) and ch["additivity_ok"]
    print(f"{fam.name}: final gap {ch.get('final_gap', math.nan):.4g} "
          f"(threshold {ch.get('threshold', math.nan):.4g}), trend {ch['trend']}, "
          f"{'converged' if ok else 'NOT converged'}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_uniformize(cfg: RunConfig, args, out: Writer):
    from .schottky import SpecError
    from .uniformize import End, LiouvilleError, collar_surface, max_principle_bounds, solve_liouville
    spec = cfg.spec
    L = _cusp_params(spec, args)
    psi = None
    if spec.get("psi") is not None:
        psi = _boundary_data(spec, "psi", L, args.seed)
    ends = spec.get("ends", [0.0, 0.0])
    if len(ends) != 2:
        raise SpecError("ends must hold two Dirichlet values")
    n_xi = _num(spec, "n_xi", 257, int)
    n_w = _num(spec, "n_w", 16, int)
    if args.grid is not None:
        try:
            n_xi = int(args.grid)
        except ValueError:
            raise SpecError("--grid must be the number of xi nodes") from None
    tol = args.tol if args.tol is not None else 1e-9
    S = collar_surface(L, psi, A=_num(spec, "A", 1.0), ends=tuple(End.dirichlet(float(e)) for e in ends),
                       v_min=_num(spec, "v_min", 1e-3))
    try:
        cf = solve_liouville(S, n_xi=n_xi, n_w=n_w, tol=tol)
    except LiouvilleError as exc:
        print(str(exc))
        return EXIT_CHECK
    cfs = cf if isinstance(cf, list) else [cf]
    rows, charts = [], []
    for k, c in enumerate(cfs):
        V = np.broadcast_to(c.v[:, None], c.phi.shape)
        W = np.broadcast_to(c.w[None, :], c.phi.shape)
        rows += [(k, v, w, p) for v, w, p in zip(V.ravel(), W.ravel(), c.phi.ravel())]
        lo, hi = max_principle_bounds(c)
        charts.append(dict(chart=k, residual=c.residual, newton=len(c.history) - 1, phi_min=c.phi.min(),
                           phi_max=c.phi.max(), bound_lo=lo, bound_hi=hi, cusp_constants=c.cusp_constants()))
    q = {"chart": "chart index", "v": "collar coordinate", "w": "angular coordinate (period 1/2)",
         "phi": "conformal factor to the hyperbolic metric"}
    out.csv("phi.csv", q, rows)
    res = max(c["residual"] for c in charts)
    out.json("uniformize.json", dict(charts=charts, max_residual=res, grid=[n_xi, n_w]), q)
    print(f"{len(cfs)} chart(s), residual {res:.2e}, phi in [{min(c['phi_min'] for c in charts):.6g}, "
          f"{max(c['phi_max'] for c in charts):.6g}]")
    return EXIT_OK


def cmd_hj_solve(cfg: RunConfig, args, out: Writer):
    from .hamilton_jacobi import a2_closed_form, expansion_coeffs, hj_cusp_solve
    from .schottky import SpecError
    spec = cfg.spec
    L = _cusp_params(spec, args)
    data = _boundary_data(spec, "data", L, args.seed)
    vs = spec.get("v", {"min": -0.6, "max": 0.6, "n": 9})
    try:
        v = np.linspace(float(vs["min"]), float(vs["max"]), int(vs["n"])) if isinstance(vs, dict) \
            else np.asarray(vs, float)
    except (KeyError, TypeError, ValueError):
        raise SpecError("v must be a list or {min, max, n}") from None
    n_w = _num(spec, "n_w", 6, int)
    if args.grid is not None:
        try:
            n_w = int(args.grid)
        except ValueError:
            raise SpecError("--grid must be the number of w nodes") from None
    w = np.arange(n_w) * (0.5 / n_w)
    tol = args.tol if args.tol is not None else 1e-7
    f = hj_cusp_solve(L, data, v, w, U_max=_num(spec, "U_max", 0.03), n_levels=_num(spec, "levels", 8, int),
                      res_tol=tol)
    a0, a1, a2 = expansion_coeffs(f)
    V, W = np.meshgrid(v, w, indexing="ij")
    a2c = a2_closed_form(L, data, V, W)
    res = np.abs(f.residual).max(axis=0)
    q = {"v": "boundary coordinate", "w": "angular coordinate", "a0": "omega at U = 0",
         "a1": "U^1 coefficient of omega (0 in theory)", "a2": "fitted U^2 coefficient",
         "a2_closed": "closed-form U^2 coefficient", "residual": "max eikonal residual over the column",
         "valid": "all levels passed the inversion and residual checks"}
    out.csv("hj_nodes.csv", q, zip(V.ravel(), W.ravel(), a0.ravel(), a1.ravel(), a2.ravel(), a2c.ravel(),
                                    res.ravel(), f.valid.all(axis=0).ravel()))
    summary = dict(max_residual=f.max_residual(), max_a1=np.abs(a1).max(), max_a2_error=np.abs(a2 - a2c).max(),
                   all_valid=bool(f.valid.all()), C=f.meta["C"], K=f.meta["K"], data=data.label)
    ok = summary["all_valid"] and summary["max_residual"] < tol
    out.json("hj_summary.json", dict(summary=summary, tol=tol, ok=ok), q)
    print(f"residual {summary['max_residual']:.2e}, |a1| {summary['max_a1']:.2e}, "
          f"a2 error {summary['max_a2_error']:.2e}, valid {summary['all_valid']}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_model_check(cfg: RunConfig, args, out: Writer):
    from .cusp_model import model_checks
    tol = args.tol if args.tol is not None else 1e-6
    seed = args.seed if args.seed is not None else int(cfg.spec.get("seed", 0))
    res = model_checks(seed=seed)
    limits = {"hL_curvature": tol, "gL_sectional": tol, "isometry_chain": min(tol, 1e-7)}
    q = {"check": "model property", "error": "sup error over the random samples", "limit": "tolerance",
         "ok": "error below limit"}
    rows = [(k, res[k], limits[k], res[k] < limits[k]) for k in sorted(res)]
    out.csv("model_checks.csv", q, rows)
    ok = all(r[-1] for r in rows)
    out.json("model_checks.json", dict(results=res, limits=limits, seed=seed, ok=ok), q)
    for r in rows:
        print(f"{r[0]}: {r[1]:.3e} ({'ok' if r[3] else 'FAIL'})")
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {
    "group-validate": (cmd_group_validate, "validate a Schottky group or family spec", True),
    "volr": (cmd_volr, "finite-part fit of a regularized volume (slab or cusp chart)", True),
    "variation": (cmd_variation, "direct FP difference against the conformal variation formula", True),
    "sweep": (cmd_sweep, "Vol_R along a degenerating cusp family and at the limit", True),
    "uniformize": (cmd_uniformize, "solve the Liouville equation on a collar", True),
    "hj-solve": (cmd_hj_solve, "geodesic boundary defining function in the cusp chart", True),
    "model-check": (cmd_model_check, "curvature and isometry checks of the cusp model", False),
}


def build_parser():
    p = argparse.ArgumentParser(prog="cuspvol", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cuspvol {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name, (_, help_, needs_spec) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        if needs_spec:
            s.add_argument("spec", help="JSON spec file")
        else:
            s.add_argument("spec", nargs="?", default=None, help="optional JSON spec file")
        s.add_argument("--grid", default=None, help="grid size, or a comma-separated eps list")
        s.add_argument("--tol", type=float, default=None, help="tolerance of the numerical check")
        s.add_argument("--out", default="cuspvol-out", help="output directory")
        s.add_argument("--seed", type=int, default=None, help="seed for randomized inputs")
        s.add_argument("--eps-min", dest="eps_min", type=float, default=None)
        s.add_argument("--eps0", type=float, default=None)
        s.add_argument("--delta", type=float, default=None, help="chart or cutoff size override")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    from .schottky import SpecError
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    fn = COMMANDS[args.subcommand][0]
    opts = {k: getattr(args, k) for k in ("grid", "tol", "seed", "eps_min", "eps0", "delta")}
    try:
        spec = _load_json(args.spec)
        cfg = RunConfig(args.subcommand, args.spec, spec, args.out, opts)
        code = fn(cfg, args, Writer(cfg))
    except (UsageError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:           # solver and quadrature failures
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except ValueError as exc:             # inputs rejected by the library
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


if __name__ == "__main__":
    sys.exit(main())
