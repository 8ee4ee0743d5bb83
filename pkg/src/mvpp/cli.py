"""Experiment runner: config parsing, dispatch, trace/summary emission.

Experiments are driven by a single JSON config document (the file is the
reproducibility record); the only flags are --config, --seed, --paranoid
and --out. Subcommands: run, sweep, accept, qsd-oracle.

Exit codes: 0 success, 2 model/config error, 3 tolerance failure in
accept (or sweep-with-tolerance) mode, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import engine, models, qsd
from .diagnostics import seed_sweep, tv_distance, wasserstein1_1d
from .errors import InvalidParams, MvppError, ParseError, UnknownModel
from .measure import EUCLIDEAN, WeightedMeasure

EXIT_OK = 0
EXIT_MODEL = 2
EXIT_TOLERANCE = 3
EXIT_IO = 4


@dataclass
class ExperimentConfig:
    model: str
    params: dict = field(default_factory=dict)
    n_steps: int = 0
    seed: int = 0
    observe_stride: int = 1
    reference: Optional[str] = None
    reference_params: dict = field(default_factory=dict)
    output_dir: str = "."
    mode: str = "run"
    metric: str = "tv"
    statistic: Optional[str] = None  # abs-error statistics, see _statistic_value
    target: Optional[float] = None
    tolerance: Optional[float] = None
    seeds: list = field(default_factory=list)
    paranoid: bool = False
    matrix_csv: Optional[str] = None
    tol: float = 1e-12


_ALLOWED_MODES = ("run", "sweep", "accept", "qsd-oracle")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"config is not valid JSON: line {e.lineno}: {e.msg}") from e
    if not isinstance(obj, dict):
        raise ParseError("config must be a JSON object")
    mode = obj.get("mode", "run")
    if mode not in _ALLOWED_MODES:
        raise ParseError(f"field 'mode' must be one of {_ALLOWED_MODES}")
    if mode == "qsd-oracle":
        if "matrix_csv" not in obj:
            raise ParseError("missing required field: matrix_csv")
        return ExperimentConfig(
            model="qsd-oracle",
            mode=mode,
            matrix_csv=str(obj["matrix_csv"]),
            tol=float(obj.get("tol", 1e-12)),
            output_dir=str(obj.get("output_dir", ".")),
        )
    for fld in ("model", "n_steps"):
        if fld not in obj:
            raise ParseError(f"missing required field: {fld}")
    model = str(obj["model"])
    if model not in models.MODEL_NAMES:
        raise UnknownModel(f"unknown model {model!r}")
    n_steps = int(obj["n_steps"])
    if n_steps < 0:
        raise ParseError("field 'n_steps' must be >= 0")
    stride = int(obj.get("observe_stride", max(1, n_steps // 1000)))
    if stride < 1:
        raise ParseError("field 'observe_stride' must be >= 1")
    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise ParseError("field 'params' must be an object")
    cfg = ExperimentConfig(
        model=model,
        params=params,
        n_steps=n_steps,
        seed=int(obj.get("seed", 0)),
        observe_stride=stride,
        reference=obj.get("reference"),
        reference_params=obj.get("reference_params", {}),
        output_dir=str(obj.get("output_dir", ".")),
        mode=mode,
        metric=str(obj.get("metric", "tv")),
        statistic=obj.get("statistic"),
        target=obj.get("target"),
        tolerance=obj.get("tolerance"),
        seeds=[int(s) for s in obj.get("seeds", [])],
        paranoid=bool(obj.get("paranoid", False)),
    )
    if cfg.metric not in ("tv", "w1", "abs_err"):
        raise ParseError("field 'metric' must be tv, w1 or abs_err")
    if cfg.metric == "abs_err" and (cfg.statistic is None or cfg.target is None):
        raise ParseError("metric abs_err needs 'statistic' and 'target'")
    return cfg


def _resolve_reference(cfg: ExperimentConfig, spec: models.ModelSpec):
    key = cfg.reference
    if key is None or key == "model" or key == spec.reference_key:
        return spec.reference
    ref_params = dict(cfg.reference_params)
    if key == "poisson" and "rate" not in ref_params and "lambda" in cfg.params:
        ref_params["rate"] = float(cfg.params["lambda"]) / float(cfg.params["mu"])
    if key == "poisson_rate_weighted" and "lambda" not in ref_params:
        ref_params.update(
            {"lambda": float(cfg.params["lambda"]), "mu": float(cfg.params["mu"])}
        )
    return qsd.analytic_reference(key, ref_params)


def _statistic_value(stat: str, state_or_measure, reference) -> float:
    """Scalar statistics for abs_err metrics, computed on m-tilde."""
    m = state_or_measure
    if stat == "pmf0":
        return m.weight_of(0) / m.total_mass
    if stat == "protected_all_nodes":
        internal = m.total_mass
        leaves = m.integrate(lambda x: float(x))
        return m.weight_of(0) / (internal + leaves)
    raise InvalidParams(f"unknown statistic {stat!r}")


def _distance(metric: str, m_tilde, reference) -> float:
    if metric == "tv":
        return tv_distance(m_tilde, reference)
    if metric == "w1":
        return wasserstein1_1d(m_tilde, reference)
    raise InvalidParams(f"metric {metric!r} has no distance")


def run_replica(cfg: ExperimentConfig, seed: int) -> dict:
    """One full simulation at a given seed; returns summary numbers.

    Used by both the run subcommand and seed sweeps (workers rebuild the
    model from the config, so only plain data crosses process lines).
    """
    try:
        spec = models.build_model(cfg.model, cfg.params)
        reference = _resolve_reference(cfg, spec)
        if spec.driver == "occupation":
            return _run_occupation(cfg, spec, reference, seed)
        state = engine.init(
            spec.m0,
            spec.replacement,
            spec.weight,
            seed=seed,
            composed=spec.composed() if spec.replacement.has_mean else None,
            paranoid_every=10_000 if cfg.paranoid else None,
        )
        # column order pinned: step, drawn_color, delta_mass, m_mass, mP_mass, ...
        observers = [
            engine.Observer("record", cfg.observe_stride, engine.record_observer()),
            engine.Observer("mass", cfg.observe_stride, engine.mass_observer()),
        ]
        if reference is not None and cfg.metric in ("tv", "w1"):
            metric = cfg.metric

            def dist_fn(st, rec):
                return {"distance": _distance(metric, st.m.normalize(), reference)}

            observers.append(engine.Observer("distance", cfg.observe_stride, dist_fn))
        t0 = time.perf_counter()
        rows = engine.run(state, cfg.n_steps, observers)
        elapsed = time.perf_counter() - t0
        m_tilde = state.m.normalize()
        out = {
            "seed": seed,
            "rows": rows,
            "elapsed_s": elapsed,
            "final_mass": state.m.total_mass,
            "final_mass_rate": state.m.total_mass / max(1, state.step_count),
            "state_steps": state.step_count,
            "final_measure": state.m,
            "error": None,
        }
        if cfg.metric == "abs_err":
            value = _statistic_value(cfg.statistic, m_tilde, reference)
            out["statistic"] = value
            out["final_distance"] = abs(value - float(cfg.target))
        elif reference is not None:
            out["final_distance"] = _distance(cfg.metric, m_tilde, reference)
        else:
            out["final_distance"] = math.nan
        return out
    except MvppError as e:
        return {"seed": seed, "error": f"{type(e).__name__}: {e}", "final_distance": math.nan}


def replica_for_sweep(cfg: ExperimentConfig, seed: int) -> dict:
    """run_replica without the final measure: sweep workers ship only scalars.

    Occupation runs would otherwise pickle tens of millions of atoms back
    to the coordinator.
    """
    out = run_replica(cfg, seed)
    out.pop("final_measure", None)
    return out


def _run_occupation(cfg: ExperimentConfig, spec, reference, seed: int) -> dict:
    from .diagnostics import wasserstein1_atoms_vs_cdf

    dspec = spec.extra["diffusion"]
    t_max = cfg.n_steps * dspec.dt
    rng = engine.make_rng(seed)
    t0 = time.perf_counter()
    occ, rows = models.self_interacting_qsd(dspec, t_max, rng, reference=reference)
    elapsed = time.perf_counter() - t0
    final = math.nan
    if reference is not None:
        # atoms carry equal weights; the plain empirical-cdf quadrature applies
        mu, sd = reference.mean(), reference.std()
        final = wasserstein1_atoms_vs_cdf(
            occ.points()[:, 0], reference.cdf, mu - 8.0 * sd, mu + 8.0 * sd
        )
    return {
        "seed": seed,
        "rows": rows,
        "elapsed_s": elapsed,
        "final_mass": occ.total_mass,
        "final_mass_rate": 1.0,
        "state_steps": cfg.n_steps,
        "final_measure": occ,
        "final_distance": final,
        "error": None,
    }


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    if isinstance(x, np.ndarray):  # euclidean colors: ';'-joined coordinates
        return ";".join(f"{v:.17g}" for v in np.atleast_1d(x))
    if isinstance(x, (np.floating,)):
        return f"{float(x):.17g}"
    return str(x)


def _write_trace_csv(path: Path, rows: list) -> None:
    cols = ["step"]
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for r in rows:
            writer.writerow([_fmt(r.get(c, "")) for c in cols])


MAX_JSON_ATOMS = 1 << 20


def _measure_json_obj(m: WeightedMeasure) -> dict:
    if m.space == EUCLIDEAN and m.n_atoms > MAX_JSON_ATOMS:
        stride = int(math.ceil(m.n_atoms / MAX_JSON_ATOMS))
        pts = m.points()[::stride]
        w = m.weights()[::stride]
        obj = {
            "space": m.space,
            "dim": m.dim,
            "atoms": [
                [p.tolist() if m.dim > 1 else float(p[0]), float(x) * stride]
                for p, x in zip(pts, w)
            ],
            "mass": float(w.sum() * stride),
            "atoms_subsampled_from": m.n_atoms,
        }
        return obj
    return m.to_json_obj()


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> int:
    """Run one experiment and write trace.csv/final_measure.json/summary.json."""
    res = run_replica(cfg, cfg.seed)
    if res.get("error"):
        print(f"error: {res['error']}", file=sys.stderr)
        return EXIT_MODEL
    outp = Path(out_dir or cfg.output_dir)
    try:
        outp.mkdir(parents=True, exist_ok=True)
        _write_trace_csv(outp / "trace.csv", res["rows"])
        (outp / "final_measure.json").write_text(
            json.dumps(_measure_json_obj(res["final_measure"])), encoding="utf-8"
        )
        summary = {
            "model": cfg.model,
            "params": cfg.params,
            "n_steps": cfg.n_steps,
            "seed": cfg.seed,
            "metric": cfg.metric,
            "reference": cfg.reference or "model",
            "distance": res["final_distance"],
            "mass_rate": res["final_mass_rate"],
            "elapsed_s": res["elapsed_s"],
        }
        if cfg.statistic:
            summary["statistic"] = cfg.statistic
            summary["statistic_value"] = res.get("statistic")
            summary["target"] = cfg.target
        if cfg.tolerance is not None:
            summary["tolerance"] = cfg.tolerance
            summary["pass"] = bool(res["final_distance"] < cfg.tolerance)
        (outp / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    if cfg.tolerance is not None and not (res["final_distance"] < cfg.tolerance):
        return EXIT_TOLERANCE
    return EXIT_OK


def run_sweep(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> int:
    seeds = cfg.seeds or [cfg.seed]
    try:
        summary = seed_sweep(cfg, seeds)
    except MvppError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MODEL
    obj = summary.to_json_obj(model=cfg.model, tolerance=cfg.tolerance)
    outp = Path(out_dir or cfg.output_dir)
    try:
        outp.mkdir(parents=True, exist_ok=True)
        (outp / "sweep_summary.json").write_text(json.dumps(obj, indent=2), encoding="utf-8")
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(obj, indent=2))
    if cfg.tolerance is not None and not obj.get("pass", True):
        return EXIT_TOLERANCE
    return EXIT_OK


def default_suite_path() -> Path:
    return Path(str(resources.files("mvpp").joinpath("data/acceptance.json")))


def accept_suite(suite_path, out_dir: Optional[str] = None, seed_override=None) -> int:
    """Run a named suite of tolerance experiments; exit 0 iff all pass."""
    try:
        suite = json.loads(Path(suite_path).read_text(encoding="utf-8"))
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as e:
        print(f"suite parse error: {e}", file=sys.stderr)
        return EXIT_MODEL
    experiments = suite.get("experiments", [])
    results = []
    for exp in experiments:
        name = exp.get("name", "unnamed")
        try:
            cfg = parse_config(json.dumps(exp["config"]))
            cfg = replace(
                cfg,
                seeds=[int(s) for s in exp.get("seeds", [cfg.seed])],
                tolerance=exp.get("tolerance", cfg.tolerance),
            )
            t0 = time.perf_counter()
            sw = seed_sweep(cfg, cfg.seeds)
            elapsed = time.perf_counter() - t0
            ok = cfg.tolerance is None or sw.max < cfg.tolerance
            results.append(
                {
                    "name": name,
                    "max": sw.max,
                    "mean": sw.mean,
                    "tolerance": cfg.tolerance,
                    "pass": bool(ok),
                    "elapsed_s": elapsed,
                    "error": None,
                }
            )
        except Exception as e:  # keep going; the suite reports per-experiment
            results.append(
                {
                    "name": name,
                    "max": math.nan,
                    "mean": math.nan,
                    "tolerance": exp.get("tolerance"),
                    "pass": False,
                    "elapsed_s": 0.0,
                    "error": f"{type(e).__name__}: {e}",
                }
            )
    width = max([len(r["name"]) for r in results], default=4)
    print(f"{'experiment':<{width}}  {'max':>12}  {'tol':>10}  {'time':>8}  result")
    for r in results:
        status = "PASS" if r["pass"] else "FAIL"
        err = f"  ({r['error']})" if r["error"] else ""
        tol = "-" if r["tolerance"] is None else f"{r['tolerance']:g}"
        print(
            f"{r['name']:<{width}}  {r['max']:>12.6g}  {tol:>10}  {r['elapsed_s']:>7.1f}s  {status}{err}"
        )
    if out_dir:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / "accept_report.json").write_text(
                json.dumps(results, indent=2), encoding="utf-8"
            )
        except OSError as e:
            print(f"i/o error: {e}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK if (results and all(r["pass"] for r in results)) or not results else EXIT_TOLERANCE


def run_qsd_oracle(cfg: ExperimentConfig) -> int:
    try:
        G = np.loadtxt(cfg.matrix_csv, delimiter=",", ndmin=2)
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        ref = qsd.power_iteration_qsd(G, tol=cfg.tol)
    except MvppError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MODEL
    print(
        json.dumps(
            {
                "nu": [float(p) for p in ref.probs],
                "theta0": ref.eigenvalue,
                "states": [int(x) for x in ref.support],
            }
        )
    )
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mvpp", description="measure-valued Polya process experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "accept", "qsd-oracle"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "accept"), help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--paranoid", action="store_true", help="periodic mP recomputation checks")
        p.add_argument("--out", default=None, help="output directory")
        if name == "accept":
            p.add_argument("--suite", default=None, help="suite file (default: shipped suite)")
    args = parser.parse_args(argv)

    if args.command == "accept":
        suite = args.suite or (args.config if args.config else default_suite_path())
        return accept_suite(suite, out_dir=args.out)

    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
    except MvppError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_MODEL
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.paranoid:
        cfg = replace(cfg, paranoid=True)

    if args.command == "qsd-oracle" or cfg.mode == "qsd-oracle":
        return run_qsd_oracle(cfg)
    if args.command == "sweep" or cfg.mode == "sweep":
        return run_sweep(cfg, out_dir=args.out)
    return run_experiment(cfg, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
