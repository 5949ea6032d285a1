"""Scenario runner: `hdbvp solve | sweep | audit | export`.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 failed mandatory audit (or an expected divergence that did not happen).
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import bvp, coefficients as co, io, perturbation as pt, verify as vf
from .calculus import SpectrumError
from .grid import GridError, make_grid, nodes_for

log = logging.getLogger("hdbvp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_AUDIT = 0, 2, 3, 4

DEFAULT_TOL = {"poisson": 1e-6, "variational_factor": 5.0, "weak_residual": 1e-5,
               "bc_residual": 1e-6, "roundtrip": 1e-6, "sigma_min": bvp.SIGMA_MIN,
               "stability": vf.STABILITY}


class ConfigError(ValueError):
    pass


# --- configuration ----------------------------------------------------------------

def _schema():
    with resources.files("hdbvp").joinpath("schema/scenario.schema.json").open() as fh:
        return json.load(fh)


def bundled_scenarios() -> list:
    d = resources.files("hdbvp").joinpath("scenarios")
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def load_config(source) -> dict:
    """A dict, a path to a JSON file, or the name of a bundled scenario."""
    if isinstance(source, dict):
        cfg = copy.deepcopy(source)
    else:
        p = Path(source)
        if not p.exists() and str(source) in bundled_scenarios():
            p = resources.files("hdbvp").joinpath(f"scenarios/{source}.json")
        try:
            with p.open() as fh:
                cfg = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config not found: {source}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {source}: {exc}") from exc
    validate(cfg)
    return cfg


def validate(cfg: dict):
    errors = sorted(Draft202012Validator(_schema()).iter_errors(cfg), key=lambda e: list(e.path))
    if errors:
        lines = ["/" + "/".join(str(p) for p in e.path) + f": {e.message}" for e in errors]
        raise ConfigError("schema violation\n  " + "\n  ".join(lines))


def override_seeds(cfg: dict, seed: int) -> dict:
    """Replace the top-level seed and every generator seed, deterministically."""
    cfg = copy.deepcopy(cfg)
    cfg["seed"] = seed

    def walk(node, depth=0):
        if isinstance(node, dict):
            for k, v in node.items():
                if k == "seed" and depth > 0:
                    node[k] = seed + depth
                else:
                    walk(v, depth + 1)
        elif isinstance(node, list):
            for v in node:
                walk(v, depth + 1)
    walk(cfg)
    return cfg


def set_path(cfg: dict, path: str, value) -> dict:
    cfg = copy.deepcopy(cfg)
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"parameter path {path!r} does not address a scalar")
        node = node[k]
    if keys[-1] not in node or isinstance(node[keys[-1]], (dict, list)):
        raise ConfigError(f"parameter path {path!r} does not address a scalar")
    node[keys[-1]] = value
    return cfg


# --- scenario construction -----------------------------------------------------------

def build_grid(gc: dict):
    L = gc.get("L", 2 * math.pi)
    K = gc.get("K") or nodes_for(gc["t_min"], gc["t_max"], gc["per_decade"])
    return make_grid(gc["n"], gc["m"], gc["N"], L, gc["t_min"], gc["t_max"], K,
                     gc.get("c0", 2.0), gc.get("c1", 1.0))


def build_base(grid, b: dict):
    gen = b["generator"]
    amp = b.get("amplitude", 0.5)
    kmax = b.get("kmax", 2)
    if gen == "identity":
        return co.identity(grid)
    if gen == "constant":
        return co.constant(grid, np.asarray(b["matrix"], float))
    if gen == "hermitean":
        return co.hermitean_random(grid, b["seed"], amp, kmax, b.get("real", False))
    if gen == "accretive":
        return co.random_accretive(grid, b["seed"], amp, kmax)
    return co.block(grid, b["seed"], amp, kmax)


def graph_function(grid, amplitude: float, k: int = 1):
    return amplitude * np.sin(k * 2 * np.pi * grid.coords[:, 0] / grid.L)


def build_coefficients(grid, cc: dict):
    A = build_base(grid, cc["base"])
    if "pullback" in cc:
        pb = cc["pullback"]
        A = co.pullback_coefficients(A, graph_function(grid, pb["amplitude"], pb.get("k", 1)), grid)
    if "perturbation" in cc:
        p = cc["perturbation"]
        kw = {k: p[k] for k in ("t0", "t1") if k in p}
        A = co.perturb(A, p["profile"], eps=p["eps"], seed=p.get("seed"), **kw)
    return A


def _scalar_potential(grid, dc: dict, width: int):
    """(P, width) lattice function from a datum spec."""
    kind = dc["type"]
    out = np.zeros((grid.P, width), dtype=complex)
    if kind == "zero":
        return out
    x = grid.coords * (2 * np.pi / grid.L)
    if kind == "modes":
        for md in dc["modes"]:
            k = np.zeros(grid.n)
            k[:len(md["k"])] = md["k"][:grid.n]
            c = md.get("re", 1.0) + 1j * md.get("im", 0.0)
            comp = md.get("component", 0)
            if comp >= width:
                raise ConfigError(f"datum component {comp} out of range (width {width})")
            out[:, comp] += c * np.exp(1j * (x @ k))
        return out
    if kind == "gaussian":
        c = np.asarray(dc.get("center", [grid.L / 2] * grid.n), float)
        w = dc.get("width", grid.L / 8)
        diff = grid.coords - c[None, :grid.n]
        diff = (diff + grid.L / 2) % grid.L - grid.L / 2
        out[:, :] = (dc.get("amplitude", 1.0) * np.exp(-np.sum(diff ** 2, axis=1) / (2 * w * w)))[:, None]
        return out
    rng = np.random.default_rng(dc["seed"])
    u = rng.standard_normal((grid.P, width)) + 1j * rng.standard_normal((grid.P, width))
    band = dc.get("band", 4)
    kk = grid.xi * grid.L / (2 * np.pi)
    uh = grid.fft(u)
    uh[np.max(np.abs(kk), axis=1) > band] = 0
    return grid.ifft(uh)


def build_datum(grid, kind: str, dc: dict):
    m = grid.m
    u = _scalar_potential(grid, dc, m)
    if kind == "regularity":
        uh = grid.fft(u)
        phi = np.empty((grid.P, grid.n * m), dtype=complex)
        for i in range(grid.n):
            phi[:, i * m:(i + 1) * m] = grid.ifft(1j * grid.xi[:, i, None] * uh)
        return phi
    if kind == "neumann":
        u = u - u.mean(axis=0, keepdims=True)
    return u


# --- running ----------------------------------------------------------------

class _Rows:
    def __init__(self):
        self.rows = []

    def add(self, section, key, value, provenance):
        self.rows.append(dict(section=section, key=key, value=_jsonable(value), provenance=provenance))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.complexfloating, complex)):
        return [_jsonable(v.real), _jsonable(v.imag)]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _tol(cfg):
    t = dict(DEFAULT_TOL)
    t.update(cfg.get("tolerances", {}))
    return t


def _is_identity(cfg):
    cc = cfg["coefficients"]
    return cc["base"]["generator"] == "identity" and "perturbation" not in cc and "pullback" not in cc


def _refined(cfg):
    c = copy.deepcopy(cfg)
    g = c["grid"]
    g["N"] = g["N"] * 2
    if "K" in g:
        g["K"] = 2 * g["K"] - 1
    else:
        g["per_decade"] = 2 * g["per_decade"]
    return c


def _solve(cfg):
    grid = build_grid(cfg["grid"])
    A = build_coefficients(grid, cfg["coefficients"])
    kind = cfg["problem"]["kind"]
    phi = build_datum(grid, kind, cfg["problem"]["datum"])
    sc = cfg.get("solver", {})
    setup = bvp.prepare(A, method=sc.get("decomposition", "auto"))
    prob = bvp.BvpProblem(kind, A, phi)
    sol = bvp.solve(prob, setup, threshold=_tol(cfg)["sigma_min"], solver=sc.get("fixed_point", "auto"))
    return grid, A, phi, setup, sol


def _run_audits(cfg, grid, A, phi, setup, sol, rows: _Rows, refine: bool):
    tol = _tol(cfg)
    results = {}
    for name in cfg.get("audits", []):
        ok, detail = True, {}
        if name == "poisson":
            if sol.kind != "dirichlet" or not _is_identity(cfg):
                ok, detail = True, {"skipped": "needs A = I and a Dirichlet problem"}
            else:
                err = vf.poisson_compare(sol.u, phi, grid)
                ok = err["error"] <= tol["poisson"]
                detail = err
                rows.add("audit", "poisson_error", err["error"], "verify.poisson_oracle")
        elif name == "variational":
            if sol.kind != "dirichlet":
                detail = {"skipped": "Dirichlet only"}
            else:
                cmp = vf.variational_compare(sol.u, grid, A, phi)
                ok = cmp["error"] <= tol["variational_factor"] * cmp["estimate"]
                detail = cmp
                rows.add("audit", "variational_error", cmp["error"], "verify.variational_oracle")
                rows.add("audit", "variational_estimate", cmp["estimate"], "verify.variational_oracle")
        elif name == "weak_residual":
            wr = vf.weak_residual(grid, sol.g, A)
            ok = float(wr) <= tol["weak_residual"]
            detail = {"divergence": wr.divergence, "curl": wr.curl}
            rows.add("audit", "weak_residual", float(wr), "verify.weak_residual")
        elif name == "apriori":
            sols = [sol]
            if refine:
                sols.append(_solve(_refined(cfg))[-1])
            reps = vf.audit_apriori(sols, tol=tol["stability"])
            ok = all(r.passed for r in reps.values())
            detail = {k: r.as_dict() for k, r in reps.items()}
            for k, r in reps.items():
                if r.constants:
                    rows.add("audit", f"apriori_{k}", r.constants, "verify.audit_apriori")
        elif name == "regularity":
            sols, As = [sol], [A]
            if refine:
                g2, A2, _, _, s2 = _solve(_refined(cfg))
                sols.append(s2)
                As.append(A2)
            reps = vf.regularity_audit(sols, As, tol=tol["stability"])
            ok = reps["forward"].passed
            detail = {k: r.as_dict() for k, r in reps.items()}
            rows.add("audit", "regularity_constants", reps["forward"].constants, "verify.regularity_audit")
        elif name == "margin":
            kinds = ("dirichlet",) if sol.kind == "dirichlet" else ("neumann", "regularity")
            mg = bvp.wellposedness_margin(setup, kinds)
            detail = mg.as_dict()
            for k, v in mg.sigma_min.items():
                rows.add("margin", f"sigma_min_{k}", v, "bvp.wellposedness_margin")
            rows.add("margin", "op_norm_X", mg.op_norm_X, "perturbation.operator_norm_estimate")
            rows.add("margin", "op_norm_Y", mg.op_norm_Y, "perturbation.operator_norm_estimate")
            rows.add("margin", "star", mg.star, "norms.star_norm_bounds")
        elif name == "roundtrip":
            rt = roundtrip_defect(setup, sol, phi)
            ok = rt <= tol["roundtrip"]
            detail = {"defect": rt}
            rows.add("audit", "roundtrip_defect", rt, "perturbation.trace_neumann_repr")
        results[name] = {"passed": bool(ok), "mandatory": name in cfg.get("mandatory_audits", []),
                         "details": _jsonable(detail)}
    return results


def roundtrip_defect(setup, sol, phi) -> float:
    """Re-extract the boundary datum from the bulk solution alone."""
    g = sol.grid
    nphi = np.linalg.norm(phi)
    if nphi == 0:
        return 0.0
    if sol.kind == "dirichlet":
        return float(np.linalg.norm(sol.traces["u0"] - phi) / nphi)
    tr = pt.trace_neumann_repr(sol.f, setup.dec, setup.E)
    g0 = co.conormal_to_gradient(setup.B0.slice0, tr.f0, g.m)
    if sol.kind == "neumann":
        bc = np.einsum("pij,pj->pi", setup.A0.slice0, g0)[:, :g.m]
    else:
        bc = g0[:, g.m:]
    return float(np.linalg.norm(bc - phi) / nphi)


def _run_divergence(cfg, rows: _Rows):
    grid = build_grid(cfg["grid"])
    A = build_coefficients(grid, cfg["coefficients"])
    setup = bvp.prepare(A, check_accretive=False)
    adv_cfg = cfg.get("adversarial", {})
    adv = pt.adversarial(setup.dec, setup.E, adv_cfg.get("target", 2.0), seed=adv_cfg.get("seed", 0))
    _, d1 = pt.picard_solve(setup.dec, adv.E, adv.free)
    _, d2 = pt.picard_solve(setup.dec, adv.E.scaled(0.1), adv.free)
    rows.add("divergence", "rho_unit", adv.rho_unit, "perturbation.adversarial")
    rows.add("divergence", "amplitude", adv.amplitude, "perturbation.adversarial")
    rows.add("divergence", "converged", d1.converged, "perturbation.picard_solve")
    rows.add("divergence", "iterations", d1.iterations, "perturbation.picard_solve")
    rows.add("divergence", "tenth_converged", d2.converged, "perturbation.picard_solve")
    rows.add("divergence", "tenth_rate", d2.contraction_rate, "perturbation.picard_solve")
    return d1, d2


def run_scenario(cfg, out=None, seed_override=None, refine: bool = False) -> tuple:
    """Solve, audit and write artifacts.  Returns (exit_code, manifest)."""
    started = time.time()
    try:
        cfg = load_config(cfg)
        if seed_override is not None:
            cfg = override_seeds(cfg, seed_override)
            validate(cfg)
    except ConfigError as exc:
        return EXIT_CONFIG, {"status": "config-error", "error": str(exc)}
    out = Path(out or cfg.get("output", {}).get("dir", f"out/{cfg['name']}"))
    out.mkdir(parents=True, exist_ok=True)
    rows = _Rows()
    manifest = {"name": cfg["name"], "config": cfg, "status": "ok", "exit_code": EXIT_OK,
                "results": None, "audits": {}}
    picard_rows = []
    code = EXIT_OK
    try:
        if cfg.get("expect_divergence"):
            d1, d2 = _run_divergence(cfg, rows)
            picard_rows = d1.as_rows()
            manifest["picard"] = d1.as_dict()
            if d1.converged or not d2.converged:
                code = EXIT_AUDIT
                manifest["status"] = "expected divergence not observed"
        else:
            grid, A, phi, setup, sol = _solve(cfg)
            for k, v in sol.reports.items():
                if k != "picard":
                    rows.add("solve", k, v, f"bvp.solve_{sol.kind}")
            pic = sol.reports.get("picard", {})
            picard_rows = list(enumerate(pic.get("residual_history", []), start=1))
            manifest["picard"] = _jsonable(pic)
            if sol.reports.get("bc_residual", 0.0) > _tol(cfg)["bc_residual"]:
                code = EXIT_NUMERIC
                manifest["status"] = "boundary condition residual above tolerance"
            manifest["audits"] = _run_audits(cfg, grid, A, phi, setup, sol, rows, refine)
            failed = [k for k, v in manifest["audits"].items() if v["mandatory"] and not v["passed"]]
            if failed and code == EXIT_OK:
                code = EXIT_AUDIT
                manifest["status"] = "mandatory audit failed: " + ", ".join(failed)
            if cfg.get("output", {}).get("dumps", True):
                io.write_dump(out / "f.bin", grid, sol.f)
                io.write_dump(out / "g.bin", grid, sol.g)
                if sol.u is not None:
                    io.write_dump(out / "u.bin", grid, sol.u)
    except (SpectrumError, bvp.NotWellPosed, pt.PicardDivergence, pt.TraceError,
            co.CoefficientError, np.linalg.LinAlgError) as exc:
        code = EXIT_NUMERIC
        manifest["status"] = f"numerical failure: {type(exc).__name__}: {exc}"
    except (GridError, bvp.BvpError, ConfigError) as exc:
        code = EXIT_CONFIG
        manifest["status"] = f"config error: {exc}"
    manifest["exit_code"] = code
    manifest["results"] = rows.rows
    # the only non-deterministic entries live here
    manifest["timestamps"] = {"started": started, "elapsed": time.time() - started}
    manifest = _jsonable(manifest)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["section", "key", "value", "provenance"])
        for r in rows.rows:
            w.writerow([r["section"], r["key"], json.dumps(r["value"]), r["provenance"]])
        for it, res in picard_rows:
            w.writerow(["picard", it, repr(float(res)), "perturbation.picard_solve"])
    return code, manifest


def _sweep_one(args):
    cfg, path, value, out, seed_override = args
    c = set_path(cfg, path, value)
    code, man = run_scenario(c, out, seed_override)
    res = {r["key"]: r["value"] for r in (man.get("results") or [])}
    pic = man.get("picard", {}) or {}
    consts = {r["key"]: r["value"] for r in (man.get("results") or []) if r["section"] == "audit"}
    return dict(value=value, exit_code=code, sigma_min=res.get("sigma_min"),
                contraction_rate=pic.get("contraction_rate"), iterations=pic.get("iterations"),
                bc_residual=res.get("bc_residual"),
                audits=json.dumps({k: v.get("passed") for k, v in (man.get("audits") or {}).items()},
                                  sort_keys=True),
                constants=json.dumps(consts, sort_keys=True))


def sweep(cfg, path: str, values, out, workers: int = 1, seed_override=None) -> list:
    cfg = load_config(cfg)
    set_path(cfg, path, 0)          # fail early on a bad path
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, path, v, out / f"{path.replace('.', '_')}={v}", seed_override) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            table = list(ex.map(_sweep_one, jobs))
    else:
        table = [_sweep_one(j) for j in jobs]
    cols = ["value", "exit_code", "sigma_min", "contraction_rate", "iterations", "bc_residual", "audits", "constants"]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in table:
            w.writerow(row)
    return table


def export(path, fmt: str = "csv", out=None, t=None) -> Path:
    """Convert a dump between the binary and CSV formats, optionally one slice."""
    path = Path(path)
    if fmt not in ("csv", "bin"):
        raise ValueError(f"unknown export format {fmt!r}")
    grid, vals = io.read_csv(path) if path.suffix == ".csv" else io.read_dump(path)
    if t is not None:
        k = io.nearest_slice(grid, t)
        tk = float(grid.t_nodes[k])
        # one-node grid whose header records the chosen height
        grid = make_grid(grid.n, grid.m, grid.N, grid.L, tk / 2, tk * 2, 1, grid.c0, grid.c1)
        vals = vals[k:k + 1]
    if out is None:
        out = path.with_suffix(".csv" if fmt == "csv" else ".bin")
        if out == path:
            out = path.with_name(path.stem + "_export" + path.suffix)
    out = Path(out)
    return io.write_csv(out, grid, vals) if fmt == "csv" else io.write_dump(out, grid, vals)


# --- command line -------------------------------------------------------------------

def _parse_values(s: str):
    if not s:
        return []
    out = []
    for tok in s.split(","):
        tok = tok.strip()
        if not tok:
            continue
        try:
            v = int(tok)
        except ValueError:
            v = float(tok)
        out.append(v)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hdbvp", description="First-order BVP solver on the half-space")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True,
                           help="JSON scenario file or bundled name (" + ", ".join(bundled_scenarios()) + ")")
        p.add_argument("--out", default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed-override", type=int, default=None)

    common(sub.add_parser("solve", help="solve one scenario"))
    ps = sub.add_parser("sweep", help="vary one scalar config entry")
    common(ps)
    ps.add_argument("--param", required=True, help="dotted path, e.g. coefficients.perturbation.eps")
    ps.add_argument("--values", default="", help="comma-separated values")
    common(sub.add_parser("audit", help="solve and run the audits at two resolutions"))
    pe = sub.add_parser("export", help="convert a field dump")
    pe.add_argument("path")
    pe.add_argument("--format", default="csv")
    pe.add_argument("--slice", type=float, default=None, help="keep the t-node nearest to this height")
    common(pe, config=False)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    if args.verb in ("solve", "audit"):
        code, man = run_scenario(args.config, args.out, args.seed_override, refine=args.verb == "audit")
        if code == EXIT_CONFIG:
            print(man.get("error") or man.get("status"), file=sys.stderr)
        else:
            print(f"{man['name']}: {man['status']} (exit {code})")
        return code
    if args.verb == "sweep":
        try:
            table = sweep(args.config, args.param, _parse_values(args.values), args.out or "out/sweep",
                          args.workers, args.seed_override)
        except ConfigError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_CONFIG
        for row in table:
            print(row["value"], row["exit_code"], row["contraction_rate"])
        return EXIT_OK
    try:
        p = export(args.path, args.format, args.out, args.slice)
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, io.DumpError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
