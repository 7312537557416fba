"""Command-line entry point: `python -m pronylab <command> ...`.

Each run reads one JSON config and writes CSV/JSON files that carry the
precision, seed and a hash of the config.  Exit code 2 means the config or
an input path was rejected before any computation started.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis, condnum, inverse, pde, prony
from .mpnum import digits_for, to_decimal, to_mpfr, workprec
from .potential import Potential
from .spectral import MeasurementTrace


class ConfigError(ValueError):
    pass


_NUM = {"type": ["number", "string"]}

SWEEP_SCHEMA = {
    "type": "object",
    "properties": {
        "regime": {"enum": ["R1", "R2", "R3"]},
        "grid": {"type": "array", "items": {"type": "number"}, "minItems": 4},
        "eta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "epsilon": _NUM, "prec_bits": {"type": "integer", "minimum": 64},
        "delta": _NUM, "n1": {"type": "integer", "minimum": 1}, "horizon": _NUM,
        "power_c": _NUM, "power_p": _NUM, "amplitude": _NUM,
        "n2": {"type": "integer", "minimum": 1},
        "solver": {"enum": ["classical", "filtered"]},
        "empirical": {"type": "boolean"}, "auto_precision": {"type": "boolean"},
        "power_p_list": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "rng_seed": {"type": "integer"},
    },
    "required": ["regime"],
    "additionalProperties": False,
}

_POTENTIAL = {
    "type": "object",
    "properties": {
        "fourier": {"type": "array", "items": _NUM},
        "triangle": {"type": "boolean"},
        "random_fourier": {
            "type": "object",
            "properties": {"M": {"type": "integer", "minimum": 1}, "a0": _NUM,
                           "low": _NUM, "high": _NUM},
            "required": ["M"],
        },
        "tabulated": {"type": "array"},
    },
    "minProperties": 1, "maxProperties": 1,
}

PDE_SCHEMA = {
    "type": "object",
    "properties": {
        "potential": _POTENTIAL,
        "kernel": {
            "type": "object",
            "properties": {"sine": {"type": "array", "items": _NUM},
                           "random_sine": {"type": "object",
                                           "properties": {"M": {"type": "integer", "minimum": 1}},
                                           "required": ["M"]}},
            "minProperties": 1, "maxProperties": 1,
        },
        "x0": _NUM,
        "initial": {"type": "object"},
        "delta": _NUM, "t_final": _NUM,
        "n_x": {"type": "integer", "minimum": 4}, "n_t": {"type": "integer", "minimum": 2},
        "prec_bits": {"type": "integer", "minimum": 64},
        "rng_seed": {"type": "integer"},
        "n_eigs": {"type": "integer", "minimum": 1},
    },
    "required": ["potential", "delta", "t_final", "n_x"],
    "oneOf": [{"required": ["kernel"]}, {"required": ["x0"]}],
    "additionalProperties": False,
}

RECOVER_SCHEMA = {
    "type": "object",
    "properties": {
        "trace": {"type": "string"}, "meta": {"type": "string"},
        "n_prony": {"type": "integer", "minimum": 1}, "M": {"type": "integer", "minimum": 1},
        "amp_threshold": _NUM,
        "optimizer": {"type": "object"},
        "sweep_m": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "sweep_M": {"enum": ["m", "fixed"]},
        "rng_seed": {"type": "integer"},
    },
    "required": ["trace", "n_prony", "M"],
    "additionalProperties": False,
}


# ---------------------------------------------------------------- plumbing

def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def load_config(path: str, schema: dict) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"schema error in {path}: {exc.message}") from exc
    return cfg


def _fmt(x, digits: int) -> str:
    return to_decimal(x, digits)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _stamp(cfg: dict, prec: int, seed) -> dict:
    return {"prec_bits": prec, "seed": seed, "config_hash": config_hash(cfg)}


def _digits(prec: int, full: bool) -> int:
    return digits_for(prec) if full else min(50, digits_for(prec))


# ---------------------------------------------------------------- sweep

# SweepConfig keeps these as decimal strings so they enter mpfr exactly
_DECIMAL_FIELDS = {"epsilon", "delta", "horizon", "power_c", "power_p", "amplitude"}


def _sweep_configs(cfg: dict):
    base = condnum.SweepConfig.defaults(cfg["regime"])
    for f in fields(condnum.SweepConfig):
        if f.name in cfg:
            value = cfg[f.name]
            setattr(base, f.name, str(value) if f.name in _DECIMAL_FIELDS else value)
    if "power_p_list" not in cfg:
        return [(None, base)]
    return [(p, replace(base, power_p=str(p))) for p in cfg["power_p_list"]]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, SWEEP_SCHEMA)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.get("rng_seed", 0)
    written = []
    for p, sc in _sweep_configs(cfg):
        result = condnum.regime_sweep(sc, progress=_progress(args))
        tag = sc.regime if p is None else f"{sc.regime}_p{p:g}"
        stamp = _stamp(cfg, sc.prec_bits, seed)
        rows = []
        for pt in result.points:
            for kind in condnum.KINDS:
                for metric in condnum.METRICS:
                    if (kind, metric) not in pt.kappa:
                        continue
                    rows.append([sc.regime, repr(pt.axis), pt.n_max, kind, metric,
                                 _fmt(pt.kappa[(kind, metric)], _digits(pt.prec, args.full_precision)),
                                 str(pt.excluded[(kind, metric)]).lower(), pt.prec,
                                 stamp["seed"], stamp["config_hash"]])
        csv_path, json_path = out / f"sweep_{tag}.csv", out / f"slopes_{tag}.json"
        _write_csv(csv_path, ["regime", "axis", "n_max", "kind", "metric", "kappa_decimal",
                              "excluded", "prec_bits", "seed", "config_hash"], rows)
        _write_json(json_path, {**stamp, "regime": sc.regime, "power_p": sc.power_p,
                                "slopes": result.slopes,
                                "errors": {repr(pt.axis): pt.error for pt in result.points
                                           if pt.error}})
        written += [csv_path, json_path]
    for path in written:
        print(path)
    return 0


def _progress(args):
    if not getattr(args, "verbose", False):
        return None

    def report(pt):
        print(f"  axis={pt.axis:g} prec={pt.prec}", file=sys.stderr, flush=True)
    return report


# ---------------------------------------------------------------- pde-gen

def _build_potential(desc: dict, rng) -> Potential:
    if "random_fourier" in desc:
        r = desc["random_fourier"]
        a0 = float(r.get("a0", 0.0))
        rest = rng.uniform(float(r.get("low", 1.0)), float(r.get("high", 2.0)), r["M"] - 1)
        return Potential.fourier([a0] + [float(v) for v in rest])
    return Potential.from_json(desc)


def _build_kernel(desc: dict, rng) -> pde.MeasurementKernel:
    if "random_sine" in desc:
        return pde.MeasurementKernel.random(desc["random_sine"]["M"], rng)
    return pde.MeasurementKernel(tuple(desc["sine"]))


def cmd_pde_gen(args) -> int:
    cfg = load_config(args.config, PDE_SCHEMA)
    if float(cfg["t_final"]) <= 0 or float(cfg["delta"]) <= 0:
        raise ConfigError("t_final and delta must be positive")
    prec = cfg.get("prec_bits", pde.PDE_PREC)
    seed = cfg.get("rng_seed", 0)
    rng = np.random.default_rng(seed)
    q = _build_potential(cfg["potential"], rng)
    kernel = _build_kernel(cfg["kernel"], rng) if "kernel" in cfg else None
    f = (pde.SineSeries.from_json(cfg["initial"]) if "initial" in cfg
         else pde.default_initial_condition())
    n_samples = pde.samples_per_trace(cfg["t_final"], cfg["delta"])
    if n_samples < 2:
        raise ConfigError("t_final is shorter than two sampling steps")
    if "n_t" in cfg:  # stored time levels, samples in between interpolated linearly
        sol = pde.forward_solve(q, f, str(cfg["t_final"]), cfg["n_x"], cfg["n_t"], prec)
    else:
        sol = pde.sample_grid_solve(q, f, str(cfg["delta"]), n_samples, cfg["n_x"], prec)
    times = pde.sample_times(str(cfg["delta"]), n_samples, prec)
    if kernel is not None:
        trace = pde.integral_trace(sol, kernel, times, delta=str(cfg["delta"]))
    else:
        trace = pde.point_trace(sol, str(cfg["x0"]), times, delta=str(cfg["delta"]))
    eigs = pde.discrete_eigenvalues(q, cfg["n_x"], cfg.get("n_eigs", 30), prec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digits = _digits(prec, args.full_precision)
    stamp = _stamp(cfg, prec, seed)
    _write_csv(out / "trace.csv", ["t", "y", "prec_bits", "seed", "config_hash"],
               [[t, y, prec, seed, stamp["config_hash"]] for t, y in trace.to_csv_rows(digits)])
    meta = {**stamp, "source": trace.source, "delta": str(cfg["delta"]),
            "n_samples": n_samples, "n_x": cfg["n_x"], "potential": q.to_json(),
            "kernel": kernel.to_json() if kernel else None,
            "x0": str(cfg["x0"]) if "x0" in cfg else None,
            "true_lambdas": [_fmt(v, digits) for v in eigs]}
    _write_json(out / "meta.json", meta)
    print(out / "trace.csv")
    return 0


# ---------------------------------------------------------------- recover / fit

def read_trace(path: str, prec: int | None = None) -> MeasurementTrace:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"trace not found: {path}")
    with p.open(encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) < 2:
        raise ConfigError(f"trace {path} holds fewer than two samples")
    prec = prec or int(rows[0].get("prec_bits") or pde.PDE_PREC)
    ts = [to_mpfr(r["t"], prec) for r in rows]
    ys = tuple(to_mpfr(r["y"], prec) for r in rows)
    if len(ys) % 2:
        ys = ys[:-1]
    source = "pde-integral"
    meta = p.with_name("meta.json")
    if meta.is_file():
        source = json.loads(meta.read_text(encoding="utf-8")).get("source", source)
    with workprec(prec):
        delta = ts[1] - ts[0]
    return MeasurementTrace(delta, ys, source)


def _truth(meta_path: str | None, trace_path: str):
    path = Path(meta_path) if meta_path else Path(trace_path).with_name("meta.json")
    if not path.is_file():
        return None, None
    meta = json.loads(path.read_text(encoding="utf-8"))
    prec = meta.get("prec_bits", pde.PDE_PREC)
    lams = [to_mpfr(v, prec) for v in meta.get("true_lambdas", [])] or None
    q = Potential.from_json(meta["potential"]) if meta.get("potential") else None
    return lams, q


def _optimizer(cfg: dict) -> inverse.OptimizerConfig:
    opts = dict(cfg.get("optimizer", {}))
    opts.setdefault("seed", cfg.get("rng_seed", 0))
    try:
        return inverse.OptimizerConfig(**opts)
    except TypeError as exc:
        raise ConfigError(f"bad optimizer options: {exc}") from exc


def convergence_study(trace: MeasurementTrace, ms, M, amp_threshold, opt, true_lambdas, q_true):
    """One recovery per m, using the first 2m samples and n_prony = m.

    M="m" fits as many coefficients as modes recovered; an int caps it.
    """
    rows = []
    for m in ms:
        if 2 * m > len(trace.samples):
            raise ConfigError(f"m={m} needs {2 * m} samples")
        sub = trace.head(2 * m)
        rep = inverse.end_to_end_recover(sub, m, m if M == "m" else M, amp_threshold, opt,
                                         true_lambdas, q_true)
        rows.append((m, rep))
    return rows


def cmd_recover(args) -> int:
    cfg = load_config(args.config, RECOVER_SCHEMA)
    trace = read_trace(cfg["trace"])
    if len(trace.samples) < 2 * cfg["n_prony"]:
        raise ConfigError(f"trace holds {len(trace.samples)} samples, n_prony needs "
                          f"{2 * cfg['n_prony']}")
    opt = _optimizer(cfg)
    true_lambdas, q_true = _truth(cfg.get("meta"), cfg["trace"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _stamp(cfg, trace.prec, opt.seed)
    written = []
    try:
        ms = args.sweep_m or cfg.get("sweep_m")
        if ms:
            M = cfg["M"] if cfg.get("sweep_M") == "fixed" else "m"
            rows = convergence_study(trace, ms, M, str(cfg.get("amp_threshold", "1e-6")), opt,
                                     true_lambdas, q_true)
            path = out / "convergence.csv"
            written.append(path)
            _write_csv(path, ["m", "n_recovered", "n_opt", "eig_rel_err", "coeff_abs_err",
                              "potential_l2_err", "prec_bits", "seed", "config_hash"],
                       [[m, r.metrics.get("n_recovered"), r.n_opt,
                         repr(r.metrics.get("eig_rel_err_max")),
                         repr(r.metrics.get("coeff_abs_err_max")),
                         repr(r.metrics.get("potential_l2_err")),
                         stamp["prec_bits"], stamp["seed"], stamp["config_hash"]]
                        for m, r in rows])
        else:
            rep = inverse.end_to_end_recover(trace, cfg["n_prony"], cfg["M"],
                                             str(cfg.get("amp_threshold", "1e-6")), opt,
                                             true_lambdas, q_true)
            path = out / "report.json"
            written.append(path)
            _write_json(path, {**stamp, **rep.to_json()})
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    for path in written:
        print(path)
    return 0


def cmd_fit(args) -> int:
    trace = read_trace(args.trace)
    n = args.n_prony
    if len(trace.samples) < 2 * n:
        raise ConfigError(f"trace holds {len(trace.samples)} samples, need {2 * n}")
    if args.solver == "classical":
        res = prony.classical_prony(trace.samples[:2 * n], n, trace.delta, trace.prec)
    else:
        res = prony.filtered_prony(trace.samples, n, trace.delta, amp_threshold=args.threshold,
                                   prec=trace.prec)
    digits = _digits(trace.prec, args.full_precision)
    obj = {"prec_bits": trace.prec, "seed": None,
           "config_hash": config_hash({"trace": args.trace, "n_prony": n,
                                       "solver": args.solver, "threshold": args.threshold}),
           **res.to_json(digits)}
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_analysis_selftest(args) -> int:
    checks = analysis_selftest()
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return 0 if all(ok for _, ok in checks) else 1


def analysis_selftest():
    """Quick oracle checks of the analysis module; returns [(name, passed)]."""
    from fractions import Fraction

    import gmpy2

    from .spectral import SpectralModel

    out = []
    ctx = analysis.AnalysisContext.build([n * n for n in range(1, 12)], "0.1", 10)
    with workprec(256):
        gaps = []
        for n in range(1, 11):
            r = analysis.lsquared_identity(ctx, n)
            gaps.append(abs(r["direct"] / r["formula"] - 1))
        out.append(("squared Lagrange identity", max(gaps) < gmpy2.mpfr(10) ** -60))
    ok = True
    for n in range(1, 11):
        th, bd = analysis.theta_sums(ctx, n), analysis.theta_bounds(ctx, n)
        for key in ("theta1", "theta2", "theta3"):
            if bd[key] is not None:
                lo, hi = bd[key]
                ok &= lo <= getattr(th, key) <= hi
    out.append(("theta sandwich", bool(ok)))
    m = SpectralModel.build([1, 4, 9], [1, 1, 1], 2, 1, "1e-3", 1, 512)
    r = analysis.discrepancy_formula(m, "0.2")
    with workprec(512):
        out.append(("discrepancy expansion", abs(r["formula"] / r["oracle"] - 1) < gmpy2.mpfr(10) ** -60))
    chis = [Fraction(1, 3), Fraction(2, 7), Fraction(5, 4), Fraction(-3, 2)]
    out.append(("column-deleted Vandermonde", all(
        analysis.vandermonde_column_deleted(chis, k) == analysis.vandermonde_symmetric_form(chis, k)
        for k in range(5))))
    out.append(("MacLaurin chain", analysis.maclaurin_check([1, 2, 3, 0.5, 7])))
    onset = [analysis.psi_cubic_onset(e) for e in (0.3, 0.5, 0.7)]
    out.append(("Psi cubic lower bound", all(o is not None for o in onset)))
    return out


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pronylab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("config", help="JSON config file")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--full-precision", action="store_true",
                       help="write every digit instead of at most 50")
        p.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("sweep", help="condition-number regime sweep"), "out/sweep")
    common(sub.add_parser("pde-gen", help="solve the PDE and write a measurement trace"), "out/pde")
    p = sub.add_parser("recover", help="Prony + potential recovery on a trace")
    common(p, "out/recover")
    p.add_argument("--sweep-m", type=lambda s: [int(v) for v in s.split(",")],
                   help="comma-separated m grid for the convergence study")
    p = sub.add_parser("fit", help="one-shot Prony fit of a trace file")
    p.add_argument("trace")
    p.add_argument("--n-prony", type=int, required=True)
    p.add_argument("--solver", choices=["classical", "filtered"], default="filtered")
    p.add_argument("--threshold", default="1e-6")
    p.add_argument("--out")
    p.add_argument("--full-precision", action="store_true")
    sub.add_parser("analysis-selftest", help="run the analysis oracle checks")
    return ap


COMMANDS = {"sweep": cmd_sweep, "pde-gen": cmd_pde_gen, "recover": cmd_recover,
            "fit": cmd_fit, "analysis-selftest": cmd_analysis_selftest}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
