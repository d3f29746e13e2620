"""Command-line front end.

    iukit <solve|classify|envelope|simulate|sweep|report> --config FILE [--out DIR] ...

Every artifact embeds the hash of the effective config (file plus scalar
overrides).  Wall-clock timestamps go to ``<artifact>.meta.json`` sidecars
so that the artifacts themselves are byte-identical across reruns.
Exit codes: 0 ok, 2 configuration error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import criteria as cr
from . import montecarlo as mc
from . import spectral as sp
from .config import build_kernel, build_region, config_hash, parse_config, read_config
from .errors import ConfigError, DomainError, IUKitError, NumericError
from .geometry import Ball, Box, Horn, Ring

TASKS = ("solve", "classify", "envelope", "simulate", "sweep", "report")
_FAMILY_OF = {"log_power": "log_power_horn", "poly_power": "poly_power_horn", "exp": "exp_horn"}


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return obj


class Artifacts:
    """Writes artifacts under ``out`` and a timestamp sidecar for each."""

    def __init__(self, out: Path, chash: str):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.chash = chash
        self.written = []

    def _sidecar(self, name: str):
        meta = {"artifact": name, "config_hash": self.chash, "version": __version__,
                "timestamp": datetime.now(timezone.utc).isoformat()}
        (self.out / f"{name}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def json(self, name: str, payload: dict):
        body = {"config_hash": self.chash, "version": __version__, **payload}
        (self.out / name).write_text(json.dumps(_clean(body), indent=2, sort_keys=True) + "\n")
        self._sidecar(name)
        self.written.append(name)

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        buf.write(f"# config_hash: {self.chash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        (self.out / name).write_text(buf.getvalue())
        self._sidecar(name)
        self.written.append(name)

    def raw(self, name: str, writer):
        writer(self.out / name)
        self._sidecar(name)
        self.written.append(name)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def _objects(doc: dict):
    kernel = build_kernel(doc["kernel"])
    region = build_region(doc["region"], kernel.phi)
    return kernel, region


def _setup(doc: dict, kernel, region) -> cr.ProblemSetup:
    fam = doc.get("family")
    if fam is None:
        if isinstance(region, Horn):
            fam = _FAMILY_OF.get(getattr(region.f, "kind", None), "generic")
        elif isinstance(region, Ring) and getattr(region.h, "kind", None) in ("log_power", "poly_power"):
            fam = "ring"
        else:
            fam = "generic"
    return cr.ProblemSetup(kernel, region, fam, threshold=doc.get("threshold", 5.0))


def _grid(doc: dict, region):
    g = doc["grid"]
    return sp.build_grid(region, g["h"], g.get("box"))


def _operator(doc: dict, kernel, region, grid):
    g = doc["grid"]
    return sp.assemble_generator(kernel, region, grid, jump_cutoff=g.get("jump_cutoff"),
                                 trunc_extent=g.get("trunc_extent"))


def _scheme(doc: dict, kernel) -> tuple[mc.SimScheme, dict]:
    m = doc.get("mc", {})
    base = mc.SimScheme.default_for(kernel)
    scheme = mc.SimScheme(eps=m.get("eps", base.eps), small_jump_mode=m.get("scheme", base.small_jump_mode),
                          dt_max=m.get("dt_max", base.dt_max), rng_seed=m.get("seed", 0))
    return scheme, m


def boundary_polyline(region, n: int = 400, x1_max: float = 30.0) -> np.ndarray:
    """Boundary of a planar region as an ordered (n, 2) polyline."""
    if region.dim != 2:
        raise ConfigError("boundary polylines are available in d = 2 only", path=("region", "dim"))
    if isinstance(region, Ball):
        t = np.linspace(0, 2 * math.pi, n)
        return region.center + region.radius * np.column_stack([np.cos(t), np.sin(t)])
    if isinstance(region, Box):
        (a, c), (b, d) = region.lo, region.hi
        return np.array([[a, c], [b, c], [b, d], [a, d], [a, c]])
    if isinstance(region, Horn):
        s = np.linspace(0, x1_max, n)
        f = region.f(s)
        return np.vstack([np.column_stack([s[::-1], -f[::-1]]), np.column_stack([s, f])])
    raise ConfigError("no boundary polyline for this region kind", path=("region", "kind"))


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------
def task_solve(doc, art: Artifacts, threads: int = 1):
    kernel, region = _objects(doc)
    grid = _grid(doc, region)
    op = _operator(doc, kernel, region, grid)
    res = sp.ground_state(op)
    art.raw("ground_state.csv", lambda p: sp.dump_ground_state(p, op, res, art.chash))
    out = {"lambda1": res.lambda1, "residual": res.residual, "iterations": res.iterations, "n": grid.n,
           "h": grid.h, "box": grid.box, "kernel_hash": op.kernel_hash, "refined": res.refined}
    t = doc["grid"].get("t")
    if t is not None:
        r = sp.iu_ratio(op, t, res)
        out["iu_ratio"] = {"t": t, "max": r.max, "min": r.min, "excluded": r.excluded}
    if doc["grid"].get("dump_operator"):
        def write(p):
            with open(p, "wb") as fh:
                np.savez(fh, nodes=grid.nodes, rows=op.weights.tocoo().row, cols=op.weights.tocoo().col,
                         weights=op.weights.tocoo().data, kill=op.kill)
        art.raw("operator.npz", write)
    if region.dim == 2 and isinstance(region, (Ball, Box, Horn)):
        pts = boundary_polyline(region, x1_max=float(grid.box[0, 1]))
        art.csv("boundary.csv", ["x1", "x2"], pts.tolist())
    art.json("solve.json", out)
    return out


def task_classify(doc, art: Artifacts, threads: int = 1):
    kernel, region = _objects(doc)
    setup = _setup(doc, kernel, region)
    verdict = cr.classify(setup)
    out = {**verdict.to_dict(), "family": setup.family}
    if setup.family != "generic" and setup.theta is not None:
        nec = cr.necessary_condition_check(setup)
        out["necessary_condition"] = {"verdict": nec.verdict, "slope": nec.slope, "c": nec.c}
    try:
        beta = cr.beta_rate(setup)
        s = np.geomspace(1e-6, 1.0, 25)
        art.csv("beta.csv", ["s", "log_beta"], zip(s, beta.log_at(np.log(s))))
    except IUKitError:
        pass
    art.json("classify.json", out)
    return out


def task_envelope(doc, art: Artifacts, threads: int = 1):
    kernel, region = _objects(doc)
    setup = _setup(doc, kernel, region)
    if not isinstance(region, Horn):
        raise ConfigError("envelope runs on horn regions", path=("region", "kind"))
    grid = _grid(doc, region)
    op = _operator(doc, kernel, region, grid)
    res = sp.ground_state(op)
    env = doc.get("envelope", {})
    hi_box = float(grid.box[0, 1])
    lo = env.get("x1_min", setup.threshold)
    hi = env.get("x1_max", hi_box - 5.0)
    X = grid.nodes
    axis = np.all(np.abs(X[:, 1:]) < 1e-12, axis=1) & (X[:, 0] >= lo) & (X[:, 0] <= hi)
    if axis.sum() < 3:
        raise ConfigError("fewer than 3 axis nodes in the envelope window", path=("envelope",))
    xa = X[axis]
    order = np.argsort(xa[:, 0])
    xa = xa[order]
    lphi = np.log(res.phi1_continuum[axis][order])
    calib = xa[:, 0] <= env.get("calib_max", 0.5 * (lo + hi))
    cols, fits = {}, {}
    for side in ("lower", "upper"):
        le = cr.log_ground_state_envelope(setup, xa, side)
        fit = cr.fit_envelope(lphi, le, calib)
        cols[side] = le
        cols[f"log_ratio_{side}"] = lphi - le - fit.log_constant
        fits[side] = {"slope": fit.slope, "spread": fit.spread, "log_constant": fit.log_constant,
                      "shape_spread": fit.shape_spread}
    rows = zip(xa[:, 0], np.exp(lphi), np.exp(cols["lower"]), np.exp(cols["upper"]), cols["log_ratio_lower"],
               cols["log_ratio_upper"])
    art.csv("envelope.csv", ["x1", "phi1", "lower_env", "upper_env", "log_ratio_lower", "log_ratio_upper"], rows)
    out = {"lambda1": res.lambda1, "n": grid.n, "window": [lo, hi], "fits": fits}
    art.json("envelope.json", out)
    return out


def task_simulate(doc, art: Artifacts, threads: int = 1):
    kernel, region = _objects(doc)
    scheme, m = _scheme(doc, kernel)
    x0 = m.get("x0")
    if x0 is None:
        x0 = region.center if isinstance(region, Ball) else None
    if x0 is None:
        raise ConfigError("mc.x0 is required for this region", path=("mc", "x0"))
    n = m.get("paths", 10_000)
    est = mc.mean_exit_time(kernel, region, x0, n, scheme, t_max=m.get("tmax", 1e3), threads=threads)
    out = {"mean_exit_time": est.to_dict()}
    if "t" in m:
        surv = mc.survival_probability(kernel, region, x0, m["t"], n, scheme, threads=threads)
        out["survival"] = {"t": m["t"], **surv.to_dict()}
    art.json("simulate.json", out)
    return out


def task_sweep(doc, art: Artifacts, threads: int = 1):
    sw = doc["sweep"]
    gammas = [math.inf if g == "inf" else float(g) for g in sw["gammas"]]
    rows = []
    for g in gammas:
        for th in sw["thetas"]:
            v = cr.classify(cr.ProblemSetup.family_setup(sw["family"], g, th, sw.get("dim", 2)))
            rows.append((g, th, v.compact, v.iu))
    art.csv("sweep.csv", ["gamma", "theta", "compact", "iu"],
            [("inf" if math.isinf(g) else g, th, c, i) for g, th, c, i in rows])
    out = {"family": sw["family"], "table": [{"gamma": g, "theta": th, "compact": c, "iu": i} for g, th, c, i in rows]}
    art.json("sweep.json", out)
    return out


def task_report(doc, art: Artifacts, threads: int = 1):
    inputs = doc.get("report", {}).get("inputs")
    if inputs is None:
        paths = sorted(p for p in art.out.glob("*.json") if not p.name.endswith(".meta.json")
                       and p.name != "report.json")
    else:
        paths = [Path(p) for p in inputs]
    if not paths:
        raise ConfigError("nothing to report", path=("report", "inputs"))
    results, hashes = {}, set()
    for p in paths:
        try:
            body = json.loads(Path(p).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read report input {p}: {exc}", path=("report", "inputs"))
        hashes.add(body.get("config_hash"))
        results[Path(p).name] = body
    if len(hashes) != 1:
        raise ConfigError(f"report inputs carry different config hashes: {sorted(map(str, hashes))}",
                          path=("report", "inputs"))
    bundle_hash = hashes.pop()
    art.chash = bundle_hash
    out = {"results": results, "inputs": [Path(p).name for p in paths]}
    art.json("report.json", out)
    return out


RUNNERS = {"solve": task_solve, "classify": task_classify, "envelope": task_envelope, "simulate": task_simulate,
           "sweep": task_sweep, "report": task_report}


def run(doc: dict, out: Path | str | None = None, threads: int = 1) -> dict:
    """Validate ``doc`` and run its task; returns the task's JSON payload."""
    doc = parse_config(doc)
    out = Path(out if out is not None else doc.get("out", "iukit_out"))
    art = Artifacts(out, config_hash(doc))
    return RUNNERS[doc["task"]](doc, art, threads)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iukit", description=__doc__.splitlines()[0])
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", required=True, help="YAML or JSON experiment config")
    ap.add_argument("--out", help="output directory (default: config 'out' or ./iukit_out)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--paths", type=int)
    ap.add_argument("--eps", type=float)
    ap.add_argument("--tmax", type=float)
    ap.add_argument("--scheme", choices=("drop", "gauss"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = read_config(args.config)
        if not isinstance(doc, dict) or not doc:
            raise ConfigError("config is empty or not a mapping")
        doc["task"] = args.task
        overrides = {"seed": args.seed, "paths": args.paths, "eps": args.eps, "tmax": args.tmax,
                     "scheme": args.scheme}
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if overrides:
            doc.setdefault("mc", {}).update(overrides)
        payload = run(doc, args.out, max(1, args.threads))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, DomainError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(_clean({k: v for k, v in payload.items() if k != "results"}), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
