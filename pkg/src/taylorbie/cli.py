"""Batch driver: ``taylor <config> [--out DIR] [--n N] [--lambda X]``.

The config file is flat ``key = value`` text with one ``mode`` key; blank
lines and ``#`` comments are ignored.  Modes:

    solve1   genus-one solve, writes report.json, solution.npz, optional field.csv
    solve2   genus-two solve, same outputs
    verify1  analytic-oracle convergence table for a torus (convergence.csv)
    verify2  the same for the shell between two level sets of the oracle
    eigscan  resonances of mode ell on a Miller torus (eigenvalues.csv)
    slice    field on an (r, z) grid from a saved solution (slice.csv)

Exit codes: 0 success, 1 internal error, 2 configuration or I/O, 3 geometry,
4 resonance, 5 accuracy.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
import warnings
from collections import OrderedDict

import numpy as np

from . import __version__
from . import analytic_reference as ar
from . import beltrami_solver as bs
from . import field_eval as fe
from .errors import ConfigError, TaylorError
from .geometry import discretize_arclength, load_points_file, make_miller_curve
from .quadrature import available_orders

__all__ = ["main", "run", "parse_config", "RunConfig", "emit_report", "load_solution"]

log = logging.getLogger(__name__)

MODES = ("solve1", "solve2", "verify1", "verify2", "eigscan", "slice")
GEOMETRIES = ("miller", "points", "analytic")

# key -> (type, default); None defaults mean "no value"
_KEYS = OrderedDict([
    ("mode", (str, None)),
    ("geometry", (str, None)),
    ("R0", (float, 1.0)),
    ("eps", (float, 0.95)),
    ("kappa", (float, 2.0)),
    ("delta", (float, 0.3)),
    ("points_file", (str, None)),
    ("inner_points_file", (str, None)),
    ("level_outer", (float, 0.0)),
    ("level_inner", (float, 0.5)),
    ("lam", (float, None)),
    ("flux_tor", (float, None)),
    ("flux_pol", (float, None)),
    ("n", (int, 100)),
    ("n_inner", (int, None)),
    ("n_list", ("ints", None)),
    ("order", (int, None)),
    ("upsample", (int, None)),
    ("ell", (int, 1)),
    ("lam_min", (float, 1.0)),
    ("lam_max", (float, 8.0)),
    ("resolution", (float, 0.02)),
    ("targets", ("points", None)),
    ("solution_file", (str, None)),
    ("r_min", (float, None)),
    ("r_max", (float, None)),
    ("z_min", (float, None)),
    ("z_max", (float, None)),
    ("nr", (int, 21)),
    ("nz", (int, 21)),
    ("phi", (float, 0.0)),
])

_DEFAULT_TARGET = {"verify1": [(1.2, 0.0, 0.25)], "verify2": [(0.5, 0.0, -1.5)]}


class RunConfig(OrderedDict):
    """Validated configuration; keys in the fixed order of the schema."""


def _convert(key, kind, text):
    try:
        if kind is str:
            return text
        if kind is int:
            v = float(text)
            if v != int(v):
                raise ValueError("not an integer")
            return int(v)
        if kind is float:
            v = float(text)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if kind == "ints":
            return [_convert(key, int, t.strip()) for t in text.split(",") if t.strip()]
        if kind == "points":
            pts = []
            for chunk in text.split(";"):
                if chunk.strip():
                    xyz = [float(t) for t in chunk.split(",")]
                    if len(xyz) != 3:
                        raise ValueError("each point needs r,phi,z")
                    pts.append(tuple(xyz))
            return pts
    except (ValueError, ConfigError) as exc:
        raise ConfigError(f"{key}: cannot parse {text!r} ({exc})") from exc
    raise AssertionError(kind)


def parse_config(text, overrides=None):
    """Parse and validate config text; ``overrides`` (key -> value) win over the file."""
    raw = OrderedDict()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{key}: unknown configuration key (line {lineno})")
        if key in raw:
            raise ConfigError(f"{key}: given twice (line {lineno})")
        raw[key] = _convert(key, _KEYS[key][0], val)
    for key, val in (overrides or {}).items():
        if val is not None:
            raw[key] = val
    cfg = RunConfig()
    for key, (_, default) in _KEYS.items():
        cfg[key] = raw.get(key, default)
    _validate(cfg)
    return cfg


def _require(cfg, *keys):
    for k in keys:
        if cfg[k] is None:
            raise ConfigError(f"{k}: required for mode {cfg['mode']}")


def _validate(cfg):
    mode = cfg["mode"]
    if mode is None:
        raise ConfigError("mode: missing")
    if mode not in MODES:
        raise ConfigError(f"mode: must be one of {', '.join(MODES)}, got {mode!r}")
    if cfg["geometry"] is None:
        cfg["geometry"] = "analytic" if mode.startswith("verify") else "miller"
    if cfg["geometry"] not in GEOMETRIES:
        raise ConfigError(f"geometry: must be one of {', '.join(GEOMETRIES)}")
    if mode.startswith("verify") and cfg["geometry"] != "analytic":
        raise ConfigError("geometry: verify modes need the analytic geometry")
    for k in ("n", "n_inner"):
        if cfg[k] is not None and cfg[k] < 8:
            raise ConfigError(f"{k}: need at least 8 nodes, got {cfg[k]}")
    if cfg["n_list"] is not None:
        if not cfg["n_list"] or min(cfg["n_list"]) < 8:
            raise ConfigError("n_list: need a non-empty list of node counts >= 8")
    if cfg["order"] is not None and cfg["order"] not in available_orders():
        raise ConfigError(f"order: available quadrature orders are {available_orders()}")
    if cfg["upsample"] is not None and not 1 <= cfg["upsample"] <= 16:
        raise ConfigError("upsample: must be between 1 and 16")
    if cfg["lam"] is not None and cfg["lam"] <= 0 and mode != "slice":
        raise ConfigError(f"lam: must be positive, got {cfg['lam']}")
    if cfg["geometry"] == "points":
        _require(cfg, "points_file")
        if mode == "solve2":
            _require(cfg, "inner_points_file")
    if mode in ("solve1", "solve2") and cfg["geometry"] != "analytic":
        _require(cfg, "lam", "flux_tor")
        if mode == "solve2":
            _require(cfg, "flux_pol")
    if mode == "solve2" and cfg["geometry"] == "miller":
        raise ConfigError("geometry: solve2 needs two curves (points or analytic)")
    if mode == "eigscan":
        if cfg["geometry"] == "analytic":
            raise ConfigError("geometry: eigscan takes a miller or points curve")
        if cfg["ell"] < 1:
            raise ConfigError(f"ell: resonance scans need ell >= 1, got {cfg['ell']}")
        if not 0 < cfg["lam_min"] < cfg["lam_max"]:
            raise ConfigError("lam_min, lam_max: need 0 < lam_min < lam_max")
        if cfg["resolution"] <= 0:
            raise ConfigError("resolution: must be positive")
    if mode == "slice":
        _require(cfg, "solution_file", "r_min", "r_max", "z_min", "z_max")
        if not os.path.isfile(cfg["solution_file"]):
            raise ConfigError(f"solution_file: no such file {cfg['solution_file']!r}")
        if cfg["nr"] < 1 or cfg["nz"] < 1:
            raise ConfigError("nr, nz: must be positive")


# ---------------------------------------------------------------------------
# geometry


def _analytic_state(cfg):
    return ar.fit_shape_constraints(cfg["eps"], cfg["kappa"], cfg["delta"], cfg["R0"])


def _build_grids(cfg, genus, n=None, state=None):
    n = cfg["n"] if n is None else n
    n_in = cfg["n_inner"] or n
    geo = cfg["geometry"]
    if geo == "analytic":
        state = state or _analytic_state(cfg)
        grids = [ar.trace_level_set(state, cfg["level_outer"], n=n)]
        if genus == 2:
            grids.append(ar.trace_level_set(state, cfg["level_inner"], n=n_in))
        return tuple(grids)
    if geo == "miller":
        return (discretize_arclength(make_miller_curve(cfg["R0"], cfg["eps"], cfg["kappa"], cfg["delta"]), n),)
    grids = [discretize_arclength(load_points_file(cfg["points_file"]), n)]
    if genus == 2:
        grids.append(discretize_arclength(load_points_file(cfg["inner_points_file"]), n_in))
    return tuple(grids)


def _analytic_fluxes(state, grids, cfg):
    """Toroidal flux of the oracle field and, for a shell, 2 pi (psi_out - psi_in)."""
    tor = ar.toroidal_flux(state, grids)
    pol = 2.0 * np.pi * (cfg["level_outer"] - cfg["level_inner"]) if len(grids) == 2 else None
    return tor, pol


# ---------------------------------------------------------------------------
# solution files


def save_solution(path, sol, cfg):
    arrays = {"lam": sol.lam, "ell": sol.ell, "kinds": np.array(sol.kinds),
              "ns": np.array([g.n for g in sol.grids]),
              "coeffs": np.array(sol.coeffs, dtype=complex),
              "flux_tor": sol.flux_tor,
              "flux_pol": np.nan if sol.flux_pol is None else sol.flux_pol,
              "config": json.dumps(cfg)}
    for k, (s, m) in enumerate(zip(sol.sigma, sol.mtau)):
        arrays[f"sigma{k}"] = s
        arrays[f"mtau{k}"] = m
    try:
        np.savez(path, **arrays)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def load_solution(path):
    """Rebuild a DebyeSolution saved by a solve run (geometry regenerated from its config)."""
    try:
        with np.load(path, allow_pickle=False) as d:
            data = {k: d[k] for k in d.files}
    except (OSError, ValueError) as exc:
        raise ConfigError(f"solution_file: cannot read {path}: {exc}") from exc
    need = ("lam", "ell", "kinds", "ns", "coeffs", "flux_tor", "flux_pol", "config", "sigma0", "mtau0")
    missing = [k for k in need if k not in data]
    if missing:
        raise ConfigError(f"solution_file: {path} is not a solution file (missing {', '.join(missing)})")
    cfg = RunConfig(json.loads(str(data["config"])))
    ns = [int(x) for x in data["ns"]]
    grids = _build_grids(cfg, len(ns), n=ns[0])
    if [g.n for g in grids] != ns:
        raise ConfigError("solution_file: stored node counts do not match the regenerated geometry")
    k = len(ns)
    fp = float(data["flux_pol"])
    return bs.DebyeSolution(float(data["lam"]), int(data["ell"]), grids,
                            tuple(str(x) for x in data["kinds"]),
                            tuple(data[f"sigma{i}"] for i in range(k)),
                            tuple(data[f"mtau{i}"] for i in range(k)),
                            tuple(complex(c) for c in data["coeffs"]),
                            float(data["flux_tor"]), None if math.isnan(fp) else fp)


# ---------------------------------------------------------------------------
# report


def _jsonable(x):
    if isinstance(x, dict):
        return OrderedDict((k, _jsonable(v)) for k, v in x.items())
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _num(x.real), "im": _num(x.imag)}
    if isinstance(x, (float, np.floating)):
        return _num(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def _num(v):
    v = float(v)
    if math.isfinite(v):
        return float(format(v, ".17g"))
    return str(v)


def emit_report(path, cfg, results, timings):
    """Write the JSON report: version, config, results, then timings (the only non-deterministic block)."""
    rep = OrderedDict()
    rep["version"] = __version__
    rep["config"] = _jsonable(dict(cfg))
    rep["results"] = _jsonable(results)
    rep["timings"] = _jsonable(timings)
    text = json.dumps(rep, indent=2) + "\n"
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write report {path}: {exc}") from exc
    return rep


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def _fmt(x):
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# modes


def _solve(cfg, grids, lam, tor, pol):
    kw = {"order": cfg["order"], "upsample": cfg["upsample"] or bs.DEFAULT_UPSAMPLE}
    if len(grids) == 1:
        return bs.solve_genus1(grids[0], lam, tor, **kw)
    return bs.solve_genus2(grids[0], grids[1], lam, tor, pol, **kw)


def _solution_summary(sol):
    out = OrderedDict()
    out["n"] = [g.n for g in sol.grids]
    out["lam"] = sol.lam
    out["condition_estimate"] = sol.cond
    out["backward_error"] = sol.residual
    out["bc_residual"] = sol.diagnostics.get("bc_residual")
    out["flux_tor_prescribed"] = sol.flux_tor
    out["flux_tor_achieved"] = sol.diagnostics.get("flux_tor_achieved")
    if sol.flux_pol is not None:
        out["flux_pol_prescribed"] = sol.flux_pol
        out["flux_pol_achieved"] = sol.diagnostics.get("flux_pol_achieved")
    out["harmonic_coefficients"] = list(sol.coeffs)
    for k in range(len(sol.grids)):
        out[f"sigma_mean_{k}"] = sol.diagnostics.get(f"sigma_mean_{k}")
    return out


def _anomalies(B):
    """Count of components whose imaginary part exceeds 1e-8 of the real part."""
    return int(np.sum(np.abs(B.imag) > 1e-8 * np.abs(B.real)))


def _samples_csv(targets, B):
    samples = [fe.FieldSample(float(t[0]), float(t[1]), float(t[2]), complex(b[0]), complex(b[1]),
                              complex(b[2])) for t, b in zip(targets, B)]
    return fe.write_csv(samples)


def _mode_solve(cfg, out, timings):
    genus = 1 if cfg["mode"] == "solve1" else 2
    t0 = time.perf_counter()
    state = _analytic_state(cfg) if cfg["geometry"] == "analytic" else None
    grids = _build_grids(cfg, genus, state=state)
    lam, tor, pol = cfg["lam"], cfg["flux_tor"], cfg["flux_pol"]
    if state is not None:
        atr, apol = _analytic_fluxes(state, grids, cfg)
        lam = state.lam if lam is None else lam
        tor = atr if tor is None else tor
        pol = apol if pol is None else pol
    timings["geometry"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    sol = _solve(cfg, grids, lam, tor, pol)
    timings["solve"] = time.perf_counter() - t0
    res = _solution_summary(sol)
    t0 = time.perf_counter()
    tor_r, pol_r, scale, _ = fe.recompute_fluxes(sol)
    res["flux_tor_recomputed"] = tor_r
    res["flux_tor_residual"] = abs(tor_r - tor) / max(abs(tor), 1e-300)
    if pol is not None:
        res["flux_pol_recomputed"] = pol_r
        res["flux_pol_residual"] = abs(pol_r - pol) / max(abs(pol), 1e-300)
    timings["flux_check"] = time.perf_counter() - t0
    save_solution(os.path.join(out, "solution.npz"), sol, cfg)
    if cfg["targets"]:
        t0 = time.perf_counter()
        tg = np.array(cfg["targets"], dtype=float)
        B = fe.eval_B_array(sol, tg)
        _write_text(os.path.join(out, "field.csv"), _samples_csv(tg, B))
        res["field_points"] = len(tg)
        res["imaginary_anomalies"] = _anomalies(B)
        timings["field"] = time.perf_counter() - t0
    return res


def _mode_verify(cfg, out, timings):
    genus = 1 if cfg["mode"] == "verify1" else 2
    t0 = time.perf_counter()
    state = _analytic_state(cfg)
    timings["fit"] = time.perf_counter() - t0
    targets = np.array(cfg["targets"] or _DEFAULT_TARGET[cfg["mode"]], dtype=float)
    exact = np.stack(ar.exact_B(state, targets[:, 0], targets[:, 2]), axis=1)
    ns = cfg["n_list"] or [25, 50, 100, 200]
    res = OrderedDict()
    res["analytic_c"] = list(state.c)
    res["analytic_lam"] = state.lam
    res["constraint_residual"] = state.residual
    res["exact_B"] = [list(b) for b in exact]
    rows = []
    lines = ["n,error,condition,flux_tor_residual,seconds"]
    for n in ns:
        t0 = time.perf_counter()
        grids = _build_grids(cfg, genus, n=n, state=state)
        tor, pol = _analytic_fluxes(state, grids, cfg)
        if cfg["flux_pol"] is not None and genus == 2:
            pol = cfg["flux_pol"]
        sol = _solve(cfg, grids, state.lam, tor, pol)
        B = fe.eval_B_array(sol, targets)
        err = float(np.max(np.linalg.norm(B - exact, axis=1) / np.linalg.norm(exact, axis=1)))
        tor_r = fe.recompute_fluxes(sol)[0]
        ftr = abs(tor_r - tor) / abs(tor)
        dt = time.perf_counter() - t0
        timings[f"n={n}"] = dt
        row = OrderedDict([("n", n), ("error", err), ("condition_estimate", sol.cond),
                           ("flux_tor_residual", ftr), ("B", [list(b) for b in B]),
                           ("imaginary_anomalies", _anomalies(B))])
        if genus == 2:
            row["flux_pol"] = pol
        rows.append(row)
        lines.append(f"{n},{_fmt(err)},{_fmt(sol.cond)},{_fmt(ftr)},{dt:.3f}")
    _write_text(os.path.join(out, "convergence.csv"), "\n".join(lines) + "\n")
    res["convergence"] = rows
    return res


def _mode_eigscan(cfg, out, timings):
    t0 = time.perf_counter()
    grid = _build_grids(cfg, 1)[0]
    timings["geometry"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    roots = bs.eigen_scan(grid, cfg["ell"], (cfg["lam_min"], cfg["lam_max"]), cfg["resolution"],
                          order=cfg["order"], upsample=cfg["upsample"] or 1)
    timings["scan"] = time.perf_counter() - t0
    lines = ["lam,error"] + [f"{_fmt(l)},{_fmt(e)}" for l, e in roots]
    _write_text(os.path.join(out, "eigenvalues.csv"), "\n".join(lines) + "\n")
    res = OrderedDict()
    res["n"] = grid.n
    res["count"] = len(roots)
    res["eigenvalues"] = [[l, e] for l, e in roots]
    return res


def _mode_slice(cfg, out, timings):
    t0 = time.perf_counter()
    sol = load_solution(cfg["solution_file"])
    if cfg["lam"] is not None and cfg["lam"] != sol.lam:
        raise ConfigError(f"lam: the saved solution has lam = {sol.lam}, not {cfg['lam']}")
    rr = np.linspace(cfg["r_min"], cfg["r_max"], cfg["nr"])
    zz = np.linspace(cfg["z_min"], cfg["z_max"], cfg["nz"])
    R, Z = np.meshgrid(rr, zz, indexing="ij")
    pts = np.stack([R.ravel(), np.full(R.size, cfg["phi"]), Z.ravel()], axis=1)
    pts = pts[pts[:, 0] > 0.0]
    mask = fe.admissible_mask(sol, pts) if len(pts) else np.zeros(0, bool)
    tg = pts[mask]
    timings["setup"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    B = fe.eval_B_array(sol, tg, check=False) if len(tg) else np.zeros((0, 3), complex)
    # the full field carries the azimuthal factor exp(i l phi)
    B = B * np.exp(1j * sol.ell * tg[:, 1])[:, None] if len(tg) else B
    timings["field"] = time.perf_counter() - t0
    _write_text(os.path.join(out, "slice.csv"), _samples_csv(tg, B))
    res = OrderedDict()
    res["points_requested"] = int(R.size)
    res["points_evaluated"] = int(len(tg))
    res["points_skipped"] = int(R.size - len(tg))
    if sol.ell == 0:
        res["imaginary_anomalies"] = _anomalies(B)
    return res


_RUNNERS = {"solve1": _mode_solve, "solve2": _mode_solve, "verify1": _mode_verify,
            "verify2": _mode_verify, "eigscan": _mode_eigscan, "slice": _mode_slice}


def run(cfg, out="."):
    """Execute a validated config, writing artifacts to ``out``; returns the report dict."""
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"out: cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"out: output directory {out} is not writable")
    timings = OrderedDict()
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", bs.ResonanceWarning)
        results = _RUNNERS[cfg["mode"]](cfg, out, timings)
    results["warnings"] = sorted({str(w.message) for w in caught if issubclass(w.category, bs.ResonanceWarning)})
    timings["total"] = time.perf_counter() - t0
    return emit_report(os.path.join(out, "report.json"), cfg, results, timings)


def _parser():
    p = argparse.ArgumentParser(prog="taylor", description="Boundary-integral Taylor-state solver.")
    p.add_argument("config", help="flat key = value configuration file")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--n", type=int, default=None, help="nodes per curve (overrides config)")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="Beltrami parameter (overrides config)")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"config: cannot read {args.config}: {exc}") from exc
        overrides = {"n": args.n, "lam": args.lam}
        if args.n is not None:
            overrides["n_list"] = [args.n]
        cfg = parse_config(text, overrides)
        rep = run(cfg, args.out)
    except TaylorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - every failure gets an exit code
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(rep["results"], indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
