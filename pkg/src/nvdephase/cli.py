"""
Command-line interface.

    nvdephase simulate   synthetic FID or joint-model records
    nvdephase fit-fid    Bayesian fit of an FID record
    nvdephase fit-nm     joint fit of coherence records and N' points
    nvdephase measure    non-Markovianity of records or of model parameters
    nvdephase predict    posterior predictive N'(phi) over an angle grid
    nvdephase report     summary table and figures from earlier runs

Exit codes: 0 success, 1 validation failure, 2 sampling failure, 3 I/O
failure. Errors are reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import copy
import glob
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, defaults
from . import io as nvio
from .errors import NvDephaseError, SamplingError, ValidationError
from .nonmarkov import (
    Trajectory,
    default_eps,
    measure_exact,
    measure_modified,
    measure_modified_from_data,
)
from .oracle import simulate_ramsey
from .spin_model import (
    ContrastModel,
    DephasingEnvelope,
    FidModelParams,
    HyperfineCoupling,
    NmModelParams,
    PopulationModel,
)

OUT_ENV = "NVDEPHASE_OUT"
DEFAULT_OUT = "nvdephase_out"
TABLE_DRAWS = 4000


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _common_flags(default=None):
    # subcommand copies use SUPPRESS so they never overwrite a flag given before the command
    p = argparse.ArgumentParser(add_help=False, argument_default=default)
    p.add_argument("--config", metavar="PATH", help="JSON run configuration")
    p.add_argument("--seed", type=int, metavar="U64", help="RNG seed (recorded in every output)")
    p.add_argument("--out", metavar="DIR",
                   help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
    p.add_argument("--chains", type=int, metavar="N", help="number of MCMC chains")
    p.add_argument("--iters", type=int, metavar="N", help="MCMC iterations per chain")
    p.add_argument("--format", choices=("csv", "json"), help="tabular output format (default csv)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags(argparse.SUPPRESS)
    parser = _Parser(prog="nvdephase", description=__doc__.split("\n\n")[0].strip(),
                     epilog=f"Environment: {OUT_ENV} sets the default output directory. "
                            "Exit codes: 0 ok, 1 validation, 2 sampling, 3 I/O.",
                     parents=[_common_flags()])
    parser.add_argument("--version", action="version", version=f"nvdephase {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="write synthetic records")
    p.add_argument("--model", choices=("fid", "nm"), help="FID record or joint-model set")
    p.add_argument("--readout", choices=("magnitude", "quadrature"),
                   help="noise on the magnitude (default) or on x/y")

    p = sub.add_parser("fit-fid", parents=[common], help="fit an FID record")
    p.add_argument("--data", metavar="PATH", help="trace file (default OUT/fid_trace.csv)")
    p.add_argument("--sampler", choices=("mh", "hmc"))
    p.add_argument("--force", action="store_true", help="summarize even if rhat > 1.1")

    p = sub.add_parser("fit-nm", parents=[common], help="joint coherence / N' fit")
    p.add_argument("--traces", nargs="+", metavar="PATH",
                   help="coherence records with phi_rad headers (default OUT/nm_traces/*)")
    p.add_argument("--points", metavar="PATH", help="N' points CSV (default OUT/nm_points.csv)")
    p.add_argument("--sampler", choices=("mh", "hmc"))
    p.add_argument("--force", action="store_true", help="summarize even if rhat > 1.1")

    p = sub.add_parser("measure", parents=[common], help="non-Markovianity measures")
    p.add_argument("--data", nargs="+", metavar="PATH", help="trace files to measure")
    p.add_argument("--eps", type=float,
                   help="rise threshold for data (default: twice the estimated noise)")
    p.add_argument("--model", choices=("fid", "nm"),
                   help="measure model parameters from the config instead of data")

    p = sub.add_parser("predict", parents=[common], help="posterior predictive N'(phi)")
    p.add_argument("--draws", metavar="PATH",
                   help="draws CSV from fit-nm, or 'reference-table' for the reference posterior")
    p.add_argument("--n-phi", type=int, help="grid size over [0, 2 pi] (default 100)")
    p.add_argument("--noise", action="store_true", help="include sigma_nm observation noise")

    p = sub.add_parser("report", parents=[common], help="summary table and figures")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    return parser


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def resolve_config(args) -> dict:
    """Merge config file, environment and flags; the result is echoed in outputs."""
    cfg = nvio.load_config(args.config) if args.config else {}
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ValidationError(f"seed must be a non-negative integer, got {cfg['seed']!r}")
    if args.out:
        cfg["out"] = args.out
    cfg.setdefault("out", os.environ.get(OUT_ENV) or DEFAULT_OUT)
    if args.format:
        cfg["format"] = args.format
    cfg.setdefault("format", "csv")
    fit = cfg.setdefault("fit", {})
    if args.chains is not None:
        fit["chains"] = args.chains
    if args.iters is not None:
        fit["iters"] = args.iters
    for key in ("sampler", "force"):
        val = getattr(args, key, None)
        if val:
            fit[key] = val
    fit["seed"] = cfg["seed"]
    return cfg


def _out(cfg) -> Path:
    return Path(cfg["out"])


def _ext(cfg) -> str:
    return ".json" if cfg["format"] == "json" else ".csv"


def _check_exists(path, what):
    if not Path(path).exists():
        raise ValidationError(f"{what} not found: {path}")
    return str(path)


def _fid_params(block: dict) -> FidModelParams:
    base = {"t2_star": defaults.FID_T2_STAR, "p": defaults.FID_P, "phi": defaults.FID_PHI,
            "a_par_mhz": defaults.FID_A_PAR_MHZ, "d": 0.0, "sigma": defaults.FID_SIGMA}
    unknown = set(block) - set(base) - {"coeffs"}
    if unknown:
        raise ValidationError(f"unknown FID parameter(s): {sorted(unknown)}")
    base.update(block)
    env = (DephasingEnvelope.polynomial(block["coeffs"]) if "coeffs" in block
           else DephasingEnvelope.gaussian(base["t2_star"]))
    return FidModelParams(env, base["p"], base["phi"], HyperfineCoupling.from_mhz(base["a_par_mhz"]),
                          bias_d=base["d"], sigma=base["sigma"])


def _nm_params(block: dict) -> NmModelParams:
    base = {k: v[0] for k, v in defaults.NM_TABLE.items()}
    base["sigma_coh"] = defaults.NM_SIGMA_COH
    unknown = set(block) - set(base)
    if unknown:
        raise ValidationError(f"unknown joint-model parameter(s): {sorted(unknown)}")
    base.update(block)
    return NmModelParams(ContrastModel(base["C_a"], base["C_nu"], base["C_b"]),
                         PopulationModel(base["p_a"], base["p_nu"], base["p_b"], base["p_phi"]),
                         HyperfineCoupling(base["A_par"]), sigma_coh=base["sigma_coh"],
                         sigma_nm=base["sigma_nm"])


def _grid(block, key, default):
    spec = block.get(key)
    if spec is None:
        return default
    if isinstance(spec, dict):
        return np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["n"]))
    return np.asarray(spec, dtype=float)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args, cfg):
    block = cfg.setdefault("simulate", {})
    if getattr(args, "model", None):
        block["model"] = args.model
    if getattr(args, "readout", None):
        block["readout"] = args.readout
    model = block.setdefault("model", "fid")
    readout = block.setdefault("readout", "magnitude")
    out, ext, seed = _out(cfg), _ext(cfg), cfg["seed"]
    written = []
    if model == "fid":
        params = _fid_params(block.get("params", {}))
        times = _grid(block, "times", defaults.fid_times())
        trace = simulate_ramsey(params, times, seed=seed, readout=readout)
        written.append(nvio.save_trace(trace, out / f"fid_trace{ext}"))
    elif model == "nm":
        params = _nm_params(block.get("params", {}))
        times = _grid(block, "times", defaults.nm_times())
        angles = _grid(block, "angles", defaults.nm_angles())
        horizon = float(block.get("horizon", defaults.NM_HORIZON))
        seeds = np.random.SeedSequence(seed).generate_state(len(angles) + 1, dtype=np.uint32)
        rows = []
        for k, phi in enumerate(angles):
            tr = simulate_ramsey(params, times, seed=int(seeds[k]), phi=float(phi), readout=readout)
            written.append(nvio.save_trace(tr, out / "nm_traces" / f"phi_{k:02d}{ext}"))
            rows.append(float(phi))
        rng = np.random.Generator(np.random.Philox(int(seeds[-1])))
        points = [(phi, measure_modified(params, phi, horizon).value
                   + rng.normal(0.0, params.sigma_nm)) for phi in rows]
        written.append(write_points(points, out / f"nm_points{ext}", horizon))
    else:
        raise ValidationError(f"simulate model must be 'fid' or 'nm', got {model!r}")
    nvio.write_json(out / "simulate_config.json", cfg)
    return {"written": [str(p) for p in written]}


def write_points(points, path, horizon=None):
    path = Path(path)
    if path.suffix == ".json":
        return nvio.write_json(path, {"horizon_us": horizon, "units": {"phi_rad": "rad",
                                      "value": "1"},
                                      "points": [{"phi_rad": p, "value": v} for p, v in points]})
    lines = []
    if horizon is not None:
        lines.append(f"# horizon_us={horizon!r}")
    lines += ["# units: phi_rad=rad, value=1", "phi_rad,value"]
    lines += [f"{float(p)!r},{float(v)!r}" for p, v in points]
    return nvio.atomic_write_text(path, "\n".join(lines) + "\n")


def read_points(path):
    """(points, horizon) from a points CSV or JSON file."""
    path = Path(path)
    if path.suffix == ".json":
        d = nvio.read_json(path)
        try:
            return [(float(e["phi_rad"]), float(e["value"])) for e in d["points"]], d.get("horizon_us")
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed points file: {exc}") from None
    horizon, points, header = None, [], None
    for lineno, line in enumerate(nvio._read_text(path).splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "horizon_us=" in line:
                horizon = float(line.split("=", 1)[1])
            continue
        if header is None:
            header = [c.strip() for c in line.split(",")]
            if header != ["phi_rad", "value"]:
                raise ValidationError(f"{path}: line {lineno}: expected header phi_rad,value")
            continue
        try:
            a, b = (float(c) for c in line.split(","))
        except ValueError:
            raise ValidationError(f"{path}: line {lineno}: malformed row {line!r}") from None
        points.append((a, b))
    return points, horizon


def _file_fingerprint(paths, cfg):
    blobs = []
    for p in paths:
        try:
            blobs.append(Path(p).read_bytes())
        except OSError as exc:
            raise nvio.DataIOError(f"cannot read {p}: {exc}") from exc
    echo = {k: v for k, v in cfg.items() if k != "out"}
    return nvio.fingerprint(*blobs, echo)


def _summaries_with_units(summaries):
    from .inference.models import UNITS
    return {k: dict(v, units=UNITS.get(k, "1")) for k, v in summaries.items()}


def _fit_extra(result):
    s = result.samples
    return {"map_estimate": result.map_estimate, "converged": result.converged,
            "sampler": s.sampler, "warmup": s.warmup, "chains": s.num_chains,
            "draws_per_chain": s.num_draws, "acceptance": s.acceptance.tolist(),
            "chain_seeds": s.seeds, "sampler_diagnostics": s.diagnostics}


def _write_curve(path, pred: dict, input_name, input_unit):
    path = Path(path)
    if path.suffix == ".json":
        return nvio.write_json(path, pred)
    cols = [input_name, "mean", "std", "band_lo", "band_hi"]
    lines = [f"# units: {input_name}={input_unit}, mean=1, std=1, band_lo=1, band_hi=1",
             f"# draws_used={pred['draws_used']}", f"# includes_noise={pred['includes_noise']}",
             ",".join(cols)]
    for row in zip(pred["inputs"], pred["mean"], pred["std"], pred["band_lo"], pred["band_hi"]):
        lines.append(",".join(repr(float(v)) for v in row))
    return nvio.atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_fit_fid(args, cfg):
    from .inference import fit_fid
    from .inference.models import UNITS

    out, ext = _out(cfg), _ext(cfg)
    block = cfg.setdefault("fit_fid", {})
    if getattr(args, "data", None):
        block["data"] = args.data
    data_path = _check_exists(block.setdefault("data", str(out / f"fid_trace{ext}")), "FID data")
    trace = nvio.load_trace(data_path, time_unit=block.get("time_unit"),
                            calibration=block.get("calibration"))
    result = fit_fid(trace, priors=cfg.get("priors", {}).get("fid"), config=cfg["fit"])
    bundle = nvio.ResultsBundle(
        kind="fit-fid", config=cfg, seed=cfg["seed"],
        fingerprint=_file_fingerprint([data_path], cfg),
        summaries=_summaries_with_units(result.summaries), predictive=result.predictive,
        extra=dict(_fit_extra(result), draws_file="fid_draws.csv", data_file=data_path))
    written = [bundle.save(out / "fid_results.json"),
               nvio.write_draws(result.samples, out / "fid_draws.csv", UNITS),
               _write_curve(out / f"fid_predictive{ext}", result.predictive["fid_curve"],
                            "t_us", "us")]
    return {"written": [str(p) for p in written],
            "T2_star_us": result.summaries["T2_star"]["median"],
            "T2_star_hpd_us": result.summaries["T2_star"]["hpd"]}


def _load_nm_inputs(args, cfg):
    out, ext = _out(cfg), _ext(cfg)
    block = cfg.setdefault("fit_nm", {})
    if getattr(args, "traces", None):
        block["traces"] = list(args.traces)
    if getattr(args, "points", None):
        block["points"] = args.points
    if "traces" not in block:
        found = sorted(glob.glob(str(out / "nm_traces" / f"*{ext}")))
        if not found:
            raise ValidationError(f"no coherence records found in {out / 'nm_traces'}")
        block["traces"] = found
    coh = []
    for path in block["traces"]:
        tr = nvio.load_trace(_check_exists(path, "trace"), time_unit=block.get("time_unit"),
                             calibration=block.get("calibration"))
        if tr.phi is None:
            raise ValidationError(f"{path}: record lacks a phi_rad header")
        coh.append((tr.phi, tr))
    points, horizon = [], None
    pts_path = block.setdefault("points", str(out / f"nm_points{ext}"))
    if pts_path:
        points, horizon = read_points(_check_exists(pts_path, "N' points"))
    horizon = block.get("horizon", horizon)
    return coh, points, horizon, list(block["traces"]) + ([pts_path] if pts_path else [])


def cmd_fit_nm(args, cfg):
    from .inference import fit_nm
    from .inference.models import UNITS

    out, ext = _out(cfg), _ext(cfg)
    coh, points, horizon, files = _load_nm_inputs(args, cfg)
    result = fit_nm(coh, points, priors=cfg.get("priors", {}).get("nm"), config=cfg["fit"],
                    horizon=horizon)
    bundle = nvio.ResultsBundle(
        kind="fit-nm", config=cfg, seed=cfg["seed"], fingerprint=_file_fingerprint(files, cfg),
        summaries=_summaries_with_units(result.summaries), predictive=result.predictive,
        extra=dict(_fit_extra(result), draws_file="nm_draws.csv",
                   observed_points=[[p, v] for p, v in points]))
    written = [bundle.save(out / "nm_results.json"),
               nvio.write_draws(result.samples, out / "nm_draws.csv", UNITS),
               _write_curve(out / f"nm_predictive{ext}", result.predictive["nm_curve"],
                            "phi_rad", "rad")]
    return {"written": [str(p) for p in written],
            "p_at_0": result.summaries["p_at_0"]["median"]}


def cmd_measure(args, cfg):
    out, ext = _out(cfg), _ext(cfg)
    block = cfg.setdefault("measure", {})
    if getattr(args, "data", None):
        block["data"] = list(args.data)
    if getattr(args, "eps", None) is not None:
        block["eps"] = args.eps
    if getattr(args, "model", None):
        block["model"] = args.model
    reports = []
    if block.get("model"):
        horizon = float(block.get("horizon", defaults.NM_HORIZON))
        grid_step = block.get("grid_step")
        if block["model"] == "fid":
            prm = _fid_params(block.get("params", {}))
            traj = Trajectory.analytic(prm.p, prm.phi, prm.coupling, prm.envelope, horizon)
            rep = measure_exact(traj, grid_step=grid_step)
            reports.append(dict(rep.to_dict(), source="model:fid", horizon_us=horizon))
        else:
            prm = _nm_params(block.get("params", {}))
            for phi in _grid(block, "angles", defaults.nm_angles()):
                rep = measure_modified(prm, float(phi), horizon)
                reports.append(dict(rep.to_dict(), source="model:nm", phi_rad=float(phi),
                                    horizon_us=horizon))
    for path in block.get("data", []):
        tr = nvio.load_trace(_check_exists(path, "trace"), time_unit=block.get("time_unit"),
                             calibration=block.get("calibration"))
        eps = block.get("eps")
        eps = default_eps(tr) if eps is None else float(eps)
        traj = Trajectory.from_trace(tr)
        exact = measure_exact(traj, eps=eps)
        modified = measure_modified_from_data(tr, float(block.get("contrast", 1.0)))
        reports.append(dict(exact.to_dict(), source=str(path), eps=eps, phi_rad=tr.phi))
        reports.append(dict(modified.to_dict(), source=str(path), phi_rad=tr.phi))
    if not reports:
        raise ValidationError("measure needs --data files or --model")
    path = out / f"measure{ext}"
    if ext == ".json":
        nvio.write_json(path, {"config": cfg, "seed": cfg["seed"], "nm_reports": reports})
    else:
        lines = ["# units: value=1, start_us=us, end_us=us, eps=1, phi_rad=rad",
                 f"# seed={cfg['seed']}", "source,kind,phi_rad,value,n_intervals,eps"]
        for r in reports:
            phi = "" if r.get("phi_rad") is None else repr(float(r["phi_rad"]))
            eps = "" if r.get("eps") is None else repr(float(r["eps"]))
            lines.append(f"{r['source']},{r['kind']},{phi},{r['value']!r},{len(r['intervals'])},{eps}")
        nvio.atomic_write_text(path, "\n".join(lines) + "\n")
    return {"written": [str(path)], "values": [r["value"] for r in reports]}


def reference_table_samples(seed=0, n=TABLE_DRAWS):
    """Reference posterior: independent normals from the tabulated medians and HPD widths."""
    from .inference.models import NM_NAMES, nm_admissible
    from .inference.samplers import PosteriorSamples

    rng = np.random.Generator(np.random.Philox(seed))
    table = dict(defaults.NM_TABLE)
    table["sigma_coh"] = (defaults.NM_SIGMA_COH, (defaults.NM_SIGMA_COH,) * 2)
    draws = np.empty((n, len(NM_NAMES)))
    k = 0
    while k < n:
        row = []
        for name in NM_NAMES:
            med, (lo, hi) = table[name]
            row.append(med + (hi - lo) / (2 * 1.959964) * rng.standard_normal())
        row = np.array(row)
        if nm_admissible(row) and row[8] > 0 and row[9] > 0:
            draws[k] = row
            k += 1
    return PosteriorSamples(names=list(NM_NAMES), chains=draws[None], seeds=[seed],
                            acceptance=np.array([np.nan]), warmup=0, sampler="table",
                            diagnostics={"seed": seed})


def cmd_predict(args, cfg):
    from .inference import posterior_predictive
    from .inference.models import nm_modified_measure

    out, ext = _out(cfg), _ext(cfg)
    block = cfg.setdefault("predict", {})
    if getattr(args, "draws", None):
        block["draws"] = args.draws
    if getattr(args, "n_phi", None):
        block["n_phi"] = args.n_phi
    if getattr(args, "noise", False):
        block["noise"] = True
    source = block.setdefault("draws", str(out / "nm_draws.csv")
                              if (out / "nm_draws.csv").exists() else "reference-table")
    horizon = float(block.setdefault("horizon", defaults.NM_HORIZON))
    n_phi = int(block.setdefault("n_phi", 100))
    if n_phi < 2:
        raise ValidationError("n_phi must be >= 2")
    if source == "reference-table":
        samples = reference_table_samples(cfg["seed"])
    else:
        samples = nvio.read_draws(_check_exists(source, "draws"))
    phi = np.linspace(0.0, 2 * math.pi, n_phi)
    pred = posterior_predictive(samples, lambda th, x: nm_modified_measure(th, x, horizon), phi,
                                max_draws=int(block.get("max_draws", 1000)),
                                noise="sigma_nm" if block.get("noise") else None, seed=cfg["seed"])
    d = pred.to_dict()
    i_min = int(np.argmin(pred.mean))
    d.update(source=source, horizon_us=horizon, seed=cfg["seed"],
             argmin_phi_rad=float(phi[i_min]), min_mean=float(pred.mean[i_min]))
    path = _write_curve(out / f"predict{ext}", d, "phi_rad", "rad")
    nvio.write_json(out / "predict_meta.json", {"config": cfg, **{k: d[k] for k in (
        "source", "horizon_us", "seed", "argmin_phi_rad", "min_mean", "draws_used")}})
    return {"written": [str(path)], "argmin_phi_rad": d["argmin_phi_rad"]}


REPORT_ORDER = {
    "fit-fid": ["T2_star", "p", "phi", "A_par", "d", "sigma", "a0", "a1", "a2", "a3", "a4", "a5"],
    "fit-nm": ["C_a", "C_nu", "C_b", "p_a", "p_nu", "p_b", "p_phi", "A_par", "sigma_coh",
               "sigma_nm", "p_at_0"],
}


def _table_rows(bundle):
    rows = []
    for name in REPORT_ORDER.get(bundle.kind, list(bundle.summaries)):
        s = bundle.summaries.get(name)
        if s is None:
            continue
        rows.append({"parameter": name, "units": s.get("units", "1"), "median": s["median"],
                     "hpd_lo": s["hpd"][0], "hpd_hi": s["hpd"][1], "rhat": s["rhat"],
                     "ess": s["ess"]})
    return rows


def _format_table(title, rows):
    head = f"{'parameter':<10} {'units':<8} {'median':>12} {'HPD 95% lo':>12} {'HPD 95% hi':>12} " \
           f"{'rhat':>7} {'ess':>8}"
    lines = [title, head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['parameter']:<10} {r['units']:<8} {r['median']:>12.6g} "
                     f"{r['hpd_lo']:>12.6g} {r['hpd_hi']:>12.6g} {r['rhat']:>7.4f} {r['ess']:>8.0f}")
    return "\n".join(lines)


def cmd_report(args, cfg):
    out = _out(cfg)
    sections, text, figures = {}, [], []
    for kind, fname in (("fit-fid", "fid_results.json"), ("fit-nm", "nm_results.json")):
        path = out / fname
        if not path.exists():
            continue
        bundle = nvio.ResultsBundle.load(path)
        rows = _table_rows(bundle)
        sections[kind] = {"results": str(path), "seed": bundle.seed,
                          "input_fingerprint": bundle.fingerprint, "table": rows}
        text.append(_format_table(f"{kind}  (seed {bundle.seed}, {path.name})", rows))
        if not (args and getattr(args, "no_figures", False)):
            figures += _render_figures(kind, bundle, out)
    if not sections:
        raise ValidationError(f"no fid_results.json or nm_results.json in {out}")
    report = {"sections": sections, "figures": [str(f) for f in figures]}
    nvio.write_json(out / "report.json", report)
    nvio.atomic_write_text(out / "report.txt", "\n\n".join(text) + "\n")
    return {"written": [str(out / "report.json"), str(out / "report.txt")] + report["figures"]}


def _render_figures(kind, bundle, out):
    from . import plotting

    figs = []
    draws_path = out / bundle.extra.get("draws_file", "")
    samples = nvio.read_draws(draws_path) if draws_path.is_file() else None
    if kind == "fit-fid":
        data = bundle.config.get("fit_fid", {}).get("data")
        if data and Path(data).exists() and "fid_curve" in bundle.predictive:
            trace = nvio.load_trace(data)
            figs.append(plotting.plot_fid_fit(trace, bundle.predictive["fid_curve"],
                                              out / "fid_fit.png"))
        if samples is not None:
            names = ["p", "phi", "A_par", "d", "sigma", "a2"]
            figs.append(plotting.plot_marginals(samples, bundle.summaries, out / "fid_marginals.png",
                                                names))
            figs.append(plotting.plot_chains(samples, out / "fid_chains.png", names))
    else:
        if "nm_curve" in bundle.predictive:
            obs = bundle.extra.get("observed_points") or None
            figs.append(plotting.plot_nm_predictive(bundle.predictive["nm_curve"],
                                                    out / "nm_predictive.png", observed=obs,
                                                    expectation=bundle.predictive.get(
                                                        "nm_expectation")))
        if samples is not None:
            figs.append(plotting.plot_marginals(samples, bundle.summaries,
                                                out / "nm_marginals.png"))
            figs.append(plotting.plot_chains(samples, out / "nm_chains.png"))
        traces = bundle.config.get("fit_nm", {}).get("traces", [])
        loaded = [nvio.load_trace(p) for p in traces if Path(p).exists()]
        if loaded:
            figs.append(plotting.plot_traces(loaded, out / "nm_traces.png"))
    return figs


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-fid": cmd_fit_fid,
    "fit-nm": cmd_fit_nm,
    "measure": cmd_measure,
    "predict": cmd_predict,
    "report": cmd_report,
}


def _error_json(exc) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc),
               "exit_code": getattr(exc, "exit_code", 1)}
    if isinstance(exc, SamplingError) and exc.diagnostics:
        payload["diagnostics"] = exc.diagnostics
    return nvio.dumps_json(payload)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        summary = COMMANDS[args.command](args, cfg)
    except NvDephaseError as exc:
        sys.stderr.write(_error_json(exc))
        return exc.exit_code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    sys.stdout.write(json.dumps(nvio._clean(summary), default=nvio._json_default) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
