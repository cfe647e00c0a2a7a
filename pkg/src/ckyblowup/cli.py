"""Command-line entry point: ckyblowup {series,shoot,certify,profile,simulate,report}.

Each run resolves its configuration (built-in defaults, then an optional
JSON config file, then command-line flags), writes its outputs into
``<root>/<command>-<hash>/`` and pairs them with a manifest.json that holds
the resolved config and its SHA-256. The output root is ``--out``, else
$CKYBLOWUP_OUTPUT, else ./runs. Outputs contain no timestamps, so
re-running a manifest reproduces the files byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__

log = logging.getLogger("ckyblowup")

OUTPUT_ENV = "CKYBLOWUP_OUTPUT"
MANIFEST = "manifest.json"

DEFAULTS: dict[str, dict[str, Any]] = {
    "series": {"s": 2, "c_l": 3.0, "K": 50, "theta_s": 1.0},
    "shoot": {"s": 2, "c_lo": 3.0, "c_hi": 8.0, "tol": 1e-5, "K": 50, "n_near": 10_000,
              "n_far": 1_000_000, "eta_max": 1e5, "parallel": False},
    "certify": {"s": 2, "c_l": 3.0, "eta_target": 3.0, "h": 2.9e-6, "m": 20, "eta_s": None,
                "width_cap": 1e-2, "checkpoint_every": 100_000},
    "profile": {"s": 2, "c_l": None, "xi_max": 10.0, "h": 9e-4, "n_grid": 1001, "K": 50},
    "simulate": {"s": 2, "w_init": "cos4pi", "preset": "full", "w_max_limit": 1e5, "t_max": None,
                 "thresholds": [1e3, 1e4, 1e5], "window": None, "holder_time": None,
                 "holder_window": [1e-10, 1e-9], "auto_w_hi": 1e4, "n_grid": 1001},
    "report": {"runs": []},
}


class CliError(Exception):
    """A user-facing failure; printed without a traceback."""


# -- config and manifests -------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def config_hash(command: str, config: dict) -> str:
    blob = json.dumps({"command": command, "config": _jsonable(config)}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config file {args.config}: {exc}") from None
        # accept either a flat mapping or one keyed by subcommand
        if command in loaded and isinstance(loaded[command], dict):
            loaded = loaded[command]
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise CliError(f"unknown {command} config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def output_root(args) -> Path:
    return Path(getattr(args, "out", None) or os.environ.get(OUTPUT_ENV) or "runs")


class RunDir:
    """Output directory of one run; tracks written files for the manifest."""

    def __init__(self, root: Path, command: str, config: dict):
        self.command = command
        self.config = config
        self.hash = config_hash(command, config)
        self.path = root / f"{command}-{self.hash[:12]}"
        self.path.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, str] = {}

    def _record(self, name: str):
        self.files[name] = hashlib.sha256((self.path / name).read_bytes()).hexdigest()

    def write_json(self, name: str, payload):
        with open(self.path / name, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._record(name)

    def write_csv(self, name: str, header, rows):
        with open(self.path / name, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for row in rows:
                wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        self._record(name)

    def finish(self, summary: dict | None = None) -> Path:
        from ._backend import BACKEND

        manifest = {
            "schema": 1,
            "command": self.command,
            "config": self.config,
            "config_hash": self.hash,
            "version": __version__,
            "backend": BACKEND,
            "outputs": dict(sorted(self.files.items())),
            "summary": summary or {},
        }
        with open(self.path / MANIFEST, "w", encoding="utf-8") as fh:
            json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return self.path


# -- subcommands ----------------------------------------------------------------

def cmd_series(cfg: dict, root: Path) -> Path:
    from .series import ScalingParams, build_coefficients, residual_ulps, rigorous_bounds

    params = ScalingParams(cfg["s"], cfg["c_l"], cfg["theta_s"])
    co = build_coefficients(params, cfg["K"])
    u0, th0, r = rigorous_bounds(params)
    res = residual_ulps(co)
    run = RunDir(root, "series", cfg)
    W = np.append(co.W, 0.0)
    run.write_csv("coefficients.csv", ["k", "U", "W", "Theta"],
                  ((k, float(co.U[k]), float(W[k]), float(co.Theta[k])) for k in range(co.K + 1)))
    out = {"params": params.to_json(), "K": co.K, "radius_estimate": co.radius_estimate,
           "bounds": {"u0": u0, "theta0": th0, "r": r},
           "max_residual_ulps": float(res.max()) if res.size else 0.0}
    run.write_json("series.json", out)
    return run.finish({"radius_estimate": co.radius_estimate})


def _gconfig(cfg):
    from .odes import GConfig

    return GConfig(K=cfg["K"], n_near=cfg["n_near"], n_far=cfg["n_far"], eta_max=cfg["eta_max"])


def cmd_shoot(cfg: dict, root: Path) -> Path:
    from .odes import ShootingError, find_root_cl

    try:
        res = find_root_cl(cfg["s"], cfg["c_lo"], cfg["c_hi"], cfg["tol"], _gconfig(cfg),
                           parallel=cfg["parallel"])
    except ShootingError as exc:
        raise CliError(str(exc)) from None
    run = RunDir(root, "shoot", cfg)
    run.write_json("shooting.json", res.to_json())
    run.write_csv("g_samples.csv", ["c_l", "G"], sorted(res.samples))
    return run.finish({"c_l_root": res.c_l_root})


def cmd_certify(cfg: dict, root: Path) -> Path:
    from .certify import certify_sign

    cert = certify_sign(cfg["s"], cfg["c_l"], cfg["eta_target"], cfg["h"], cfg["m"], cfg["eta_s"],
                        cfg["width_cap"], cfg["checkpoint_every"])
    # wall-clock time is logged, not written, to keep outputs reproducible
    log.info("certify: %.1f s", cert.diagnostics.pop("seconds", math.nan))
    run = RunDir(root, "certify", cfg)
    body = cert.to_json()
    cps = body.pop("checkpoints")
    run.write_json("certificate.json", body)
    run.write_csv("checkpoints.csv", ["eta", "U_lo", "U_hi", "W_lo", "W_hi", "Theta_lo", "Theta_hi"],
                  ((c["eta"], *c["U_hat"], *c["W_hat"], *c["Theta_hat"]) for c in cps))
    return run.finish({"verdict": cert.verdict, "U_hat": body["final_state"]["U_hat"]})


def cmd_profile(cfg: dict, root: Path) -> Path:
    from .odes import compute_profile, find_root_cl

    c_l = cfg["c_l"]
    if c_l is None:
        c_l = find_root_cl(cfg["s"]).c_l_root
        log.info("profile: using shooting root c_l = %.8f", c_l)
    prof = compute_profile(cfg["s"], c_l, cfg["xi_max"], cfg["h"], n_grid=cfg["n_grid"], K=cfg["K"])
    run = RunDir(root, "profile", cfg)
    run.write_csv("profile.csv", ["chart", "position", "U", "W", "Theta"], prof.rows())
    run.write_csv("rescaled.csv", ["xi", "W_s"], zip(prof.grid, prof.W_s))
    run.write_json("profile.json", {"s": prof.s, "c_l": c_l, "W_max": prof.W_max, "xi0": prof.xi0})
    return run.finish({"c_l": c_l, "xi0": prof.xi0})


def _label(x: float) -> str:
    return f"{x:.0e}".replace("+", "")


def cmd_simulate(cfg: dict, root: Path) -> Path:
    from . import analysis as an
    from .simulate import init_particles, run_until

    s = cfg["s"]
    reference_ic = cfg["w_init"] == "cos4pi" and s in an.REFERENCE_WINDOWS
    holder_t = cfg["holder_time"]
    if holder_t is None and reference_ic:
        holder_t = an.REFERENCE_HOLDER_TIMES[s]
    sys0 = init_particles(s, cfg["w_init"], cfg["preset"])
    t0 = time.perf_counter()
    trace = run_until(sys0, cfg["w_max_limit"], cfg["t_max"], cfg["thresholds"],
                      times=() if holder_t is None else (holder_t,))
    log.info("simulate: %d steps in %.1f s (%s)", len(trace.t), time.perf_counter() - t0, trace.stop_reason)
    run = RunDir(root, "simulate", cfg)
    run.write_csv("trace.csv", ["t", "w_max", "q_max", "dt"], trace.rows())

    fits: dict[str, Any] = {"stop_reason": trace.stop_reason}
    window = cfg["window"]
    if window is None:
        if reference_ic:
            window, fits["window_rule"] = an.REFERENCE_WINDOWS[s], "reference"
        else:
            window, fits["window_rule"] = an.auto_window(trace, cfg["auto_w_hi"]), f"auto w_hi={cfg['auto_w_hi']:g}"
    for fld, key in (("w_max", "c_w"), ("q_max", "c_l")):
        try:
            fits[key] = an.fit_exponent(trace, fld, tuple(window)).to_json()
        except an.FitError as exc:
            fits[key] = {"error": str(exc)}

    grid = an.default_grid(cfg["n_grid"])
    for snap in trace.snapshots:
        timed = not math.isnan(snap.at_time)
        name = f"t{snap.at_time!r}" if timed else f"w{_label(snap.threshold)}"
        run.write_csv(f"snapshot_{name}.csv", ["q", "theta", "w", "u"], snap.rows())
        run.write_json(f"snapshot_{name}.json", {"t": snap.t, "w_max": snap.w_max, "q_max": snap.q_max,
                                                 "threshold": None if timed else snap.threshold,
                                                 "at_time": snap.at_time if timed else None,
                                                 "config_hash": run.hash})
        if timed:
            try:
                fits["holder"] = an.fit_holder(snap, tuple(cfg["holder_window"])).to_json()
                fits["holder"]["t"] = snap.t
            except an.FitError as exc:
                fits["holder"] = {"error": str(exc)}
        else:
            try:
                prof = an.rescale_snapshot(snap, grid)
                run.write_csv(f"rescaled_{name}.csv", ["xi", "W_s"], prof.rows())
            except an.FitError as exc:
                fits[f"rescale_{name}"] = {"error": str(exc)}
    if "holder" not in fits and trace.snapshots:
        last = [sn for sn in trace.snapshots if math.isnan(sn.at_time)]
        if last:
            try:
                fits["holder"] = an.fit_holder(last[-1], tuple(cfg["holder_window"])).to_json()
                fits["holder"]["t"] = last[-1].t
            except an.FitError as exc:
                fits["holder"] = {"error": str(exc)}
    run.write_json("fits.json", fits)
    return run.finish({"stop_reason": trace.stop_reason, "steps": len(trace.t)})


def _read_rescaled(path: Path):
    from .analysis import RescaledProfile, Source

    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    src = Source.SELF_SIMILAR if path.name == "rescaled.csv" else Source.SIMULATION
    return RescaledProfile(data[:, 0], data[:, 1], src, {"file": str(path)})


def find_runs(paths) -> list[Path]:
    found = []
    for p in map(Path, paths):
        if (p / MANIFEST).is_file():
            found.append(p)
        elif p.is_dir():
            found.extend(sorted(d for d in p.iterdir() if (d / MANIFEST).is_file()))
    return [d for d in found if json.loads((d / MANIFEST).read_text())["command"] != "report"]


def build_report(run_dirs: list[Path]) -> dict:
    from .analysis import compare_profiles

    rows = {"shoot": [], "simulate": [], "certify": [], "profile": [], "series": []}
    profiles, sims = {}, []
    for d in run_dirs:
        man = json.loads((d / MANIFEST).read_text())
        cmd, cfg = man["command"], man["config"]
        if cmd == "shoot":
            res = json.loads((d / "shooting.json").read_text())
            rows["shoot"].append({"run": d.name, "s": res["s"], "c_l": res["c_l_root"]})
        elif cmd == "certify":
            cert = json.loads((d / "certificate.json").read_text())
            rows["certify"].append({"run": d.name, "s": cfg["s"], "c_l": cfg["c_l"],
                                    "verdict": cert["verdict"], "U_hat": cert["final_state"]["U_hat"]})
        elif cmd == "profile":
            meta = json.loads((d / "profile.json").read_text())
            rows["profile"].append({"run": d.name, "s": meta["s"], "c_l": meta["c_l"]})
            profiles[meta["s"]] = _read_rescaled(d / "rescaled.csv")
        elif cmd == "series":
            rows["series"].append({"run": d.name, **json.loads((d / "series.json").read_text())["params"]})
        elif cmd == "simulate":
            fits = json.loads((d / "fits.json").read_text())
            c_l = fits.get("c_l", {}).get("exponent")
            hol = fits.get("holder", {}).get("alpha")
            rows["simulate"].append({
                "run": d.name, "s": cfg["s"], "w_init": cfg["w_init"], "preset": cfg["preset"],
                "c_w": fits.get("c_w", {}).get("exponent"), "c_l": c_l,
                "T": fits.get("c_w", {}).get("T_estimate"), "holder_alpha": hol,
                "holder_prediction": None if c_l is None else 1.0 - 1.0 / c_l,
            })
            sims.append((d, cfg["s"]))
    comparisons = []
    for d, s in sims:
        snaps = {p.name: _read_rescaled(p) for p in sorted(d.glob("rescaled_*.csv"))}
        names = sorted(snaps)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                sup, rms = compare_profiles(snaps[a], snaps[b])
                comparisons.append({"run": d.name, "a": a, "b": b, "sup": sup, "rms": rms})
            if s in profiles:
                sup, rms = compare_profiles(snaps[a], profiles[s])
                comparisons.append({"run": d.name, "a": a, "b": "self-similar", "sup": sup, "rms": rms})
    return {"runs": [d.name for d in run_dirs], "tables": rows, "profile_comparisons": comparisons}


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def report_markdown(rep: dict) -> str:
    out = []
    for name, rows in rep["tables"].items():
        if not rows:
            continue
        cols = list(rows[0])
        out.append(f"## {name}\n")
        out.append("| " + " | ".join(cols) + " |")
        out.append("|" + "---|" * len(cols))
        for r in rows:
            out.append("| " + " | ".join(_fmt(r.get(c)) for c in cols) + " |")
        out.append("")
    if rep["profile_comparisons"]:
        out.append("## profile comparisons\n")
        out.append("| run | a | b | sup | rms |")
        out.append("|---|---|---|---|---|")
        for c in rep["profile_comparisons"]:
            out.append(f"| {c['run']} | {c['a']} | {c['b']} | {c['sup']:.3e} | {c['rms']:.3e} |")
        out.append("")
    return "\n".join(out)


def cmd_report(cfg: dict, root: Path) -> Path:
    paths = cfg["runs"] or [root]
    dirs = find_runs(paths)
    if not dirs:
        raise CliError(f"no runs found in {', '.join(map(str, paths))}")
    rep = build_report(dirs)
    cfg = dict(cfg, runs=[str(p) for p in paths],
               run_hashes=[json.loads((d / MANIFEST).read_text())["config_hash"] for d in dirs])
    run = RunDir(root, "report", cfg)
    run.write_json("report.json", rep)
    md = report_markdown(rep)
    (run.path / "report.md").write_text(md)
    run._record("report.md")
    print(md)
    return run.finish({"n_runs": len(dirs)})


COMMANDS = {
    "series": cmd_series,
    "shoot": cmd_shoot,
    "certify": cmd_certify,
    "profile": cmd_profile,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def _floats(raw: str) -> list[float]:
    return [float(x) for x in raw.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ckyblowup",
                                description="Self-similar blow-up profiles of the 1D model: series, "
                                            "shooting, validated sign certificates and particle simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="JSON", help="JSON config file (flat or keyed by subcommand)")
        sp.add_argument("--out", metavar="DIR", help=f"output root (default ${OUTPUT_ENV} or ./runs)")
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    sp = sub.add_parser("series", help="power-series coefficients, bounds and radius")
    common(sp)
    sp.add_argument("--s", type=int)
    sp.add_argument("--c-l", dest="c_l", type=float)
    sp.add_argument("--K", type=int)
    sp.add_argument("--theta-s", dest="theta_s", type=float)

    sp = sub.add_parser("shoot", help="bisection for the root of G")
    common(sp)
    sp.add_argument("--s", type=int)
    sp.add_argument("--c-lo", dest="c_lo", type=float)
    sp.add_argument("--c-hi", dest="c_hi", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--K", type=int)
    sp.add_argument("--n-near", dest="n_near", type=int)
    sp.add_argument("--n-far", dest="n_far", type=int)
    sp.add_argument("--eta-max", dest="eta_max", type=float)
    sp.add_argument("--parallel", action="store_true", default=None,
                    help="evaluate the two bracket ends in separate processes")

    sp = sub.add_parser("certify", help="validated far-field run and sign certificate")
    common(sp)
    sp.add_argument("--s", type=int)
    sp.add_argument("--c-l", dest="c_l", type=float)
    sp.add_argument("--eta-target", dest="eta_target", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--m", type=int, help="series truncation order for the initial enclosure")
    sp.add_argument("--eta-s", dest="eta_s", type=float)
    sp.add_argument("--width-cap", dest="width_cap", type=float)
    sp.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)

    sp = sub.add_parser("profile", help="dense self-similar profile and rescaled W_s")
    common(sp)
    sp.add_argument("--s", type=int)
    sp.add_argument("--c-l", dest="c_l", type=float, help="default: shooting root for s")
    sp.add_argument("--xi-max", dest="xi_max", type=float)
    sp.add_argument("--h", type=float)
    sp.add_argument("--n-grid", dest="n_grid", type=int)
    sp.add_argument("--K", type=int)

    sp = sub.add_parser("simulate", help="particle simulation to blow-up")
    common(sp)
    sp.add_argument("--s", type=int)
    sp.add_argument("--w-init", dest="w_init", choices=["cos4pi", "quadratic"])
    sp.add_argument("--preset", choices=["full", "desk"])
    sp.add_argument("--w-max-limit", dest="w_max_limit", type=float)
    sp.add_argument("--t-max", dest="t_max", type=float)
    sp.add_argument("--thresholds", type=_floats, help="comma-separated w_max snapshot thresholds")
    sp.add_argument("--window", type=_floats, help="fit window t_lo,t_hi")
    sp.add_argument("--holder-time", dest="holder_time", type=float)
    sp.add_argument("--holder-window", dest="holder_window", type=_floats)
    sp.add_argument("--auto-w-hi", dest="auto_w_hi", type=float)
    sp.add_argument("--n-grid", dest="n_grid", type=int)

    sp = sub.add_parser("report", help="tables and profile comparisons from earlier runs")
    common(sp)
    sp.add_argument("runs", nargs="*", help="run directories or roots (default: the output root)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "report" and not args.runs:
        args.runs = None
    try:
        cfg = resolve_config(args.command, args)
        path = COMMANDS[args.command](cfg, output_root(args))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
