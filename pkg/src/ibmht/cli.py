"""Command-line front end.

Exit codes: 0 success, 2 configuration or schema problem, 3 numerical
failure, 4 the certified selection abstained.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import formats
from .errors import ConfigError, IBMHTError, NonFinite
from .harness import (
    METHODS,
    ExperimentConfig,
    build_source,
    run_experiment,
    summarize,
)
from .prob import (
    derive_seed,
    exact_entropy,
    exact_mi,
    histogram,
    sample_pairs,
)
from .selection import ib_mht, select_conventional
from .solvers import SolverConfig, parse_grid, train_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ABSTAIN = 0, 2, 3, 4


def _section(doc: dict, name: str) -> dict:
    sec = doc.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section '{name}' must be a mapping")
    return sec


def _pick(flag, doc_value, default=None):
    return flag if flag is not None else (doc_value if doc_value is not None else default)


def _load(args) -> dict:
    return formats.load_config_doc(args.config) if getattr(args, "config", None) else {}


def _master_seed(args, doc: dict) -> int:
    seed = _pick(args.seed, _section(doc, "seeds").get("master"))
    if seed is None:
        raise ConfigError("a master seed is required: pass --seed or set seeds.master")
    return int(seed)


def _unit(args, doc: dict) -> str:
    unit = _pick(args.unit, doc.get("unit"), "nats")
    if unit not in ("nats", "bits"):
        raise ConfigError(f"unit must be 'nats' or 'bits', got {unit!r}")
    return unit


# ----------------------------------------------------------------------------
# gen-source
# ----------------------------------------------------------------------------


def cmd_gen_source(args) -> int:
    doc = _load(args)
    desc = dict(_section(doc, "source"))
    if args.kind:
        desc = {"kind": args.kind}
    kind = desc.get("kind")
    if kind is None:
        raise ConfigError("source kind is required (--kind dsbs|dirichlet|matrix)")
    if kind == "dsbs":
        p = _pick(args.p, desc.get("p"))
        if p is None:
            raise ConfigError("dsbs source needs 'p'")
        desc["p"] = float(p)
    elif kind == "dirichlet":
        sizes = _pick(args.sizes, desc.get("sizes"))
        seed = _pick(args.seed, desc.get("seed"))
        if sizes is None:
            raise ConfigError("dirichlet source needs 'sizes'")
        if seed is None:
            raise ConfigError("dirichlet source needs 'seed'")
        if isinstance(sizes, str):
            sizes = [int(s) for s in sizes.split(",")]
        desc.update(sizes=list(sizes), seed=int(seed),
                    concentration=float(_pick(args.concentration, desc.get("concentration"), 1.0)))
    elif kind == "matrix":
        if args.matrix:
            return _emit_source(args, formats.read_pmf_csv(args.matrix), {"kind": "matrix", "file": args.matrix}, doc)
        if "mass" not in desc:
            raise ConfigError("matrix source needs 'mass' or --matrix FILE")
    else:
        raise ConfigError(f"unknown source kind {kind!r}")
    return _emit_source(args, build_source(desc), desc, doc)


def _emit_source(args, joint, desc: dict, doc: dict) -> int:
    unit = _unit(args, doc)
    out = args.out or _section(doc, "output").get("source") or "source.csv"
    seeds = {"source": desc.get("seed")}
    formats.write_pmf_csv(out, joint, formats.make_header("source-pmf", desc, seeds, unit))
    print(f"wrote {out} ({joint.sizes[0]}x{joint.sizes[1]})")
    print(f"I(X;Y) = {exact_mi(joint, unit):.6f} {unit}")
    print(f"H(X)   = {exact_entropy(joint.pu, unit):.6f} {unit}")
    print(f"H(Y)   = {exact_entropy(joint.pv, unit):.6f} {unit}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# train-grid
# ----------------------------------------------------------------------------


def cmd_train_grid(args) -> int:
    doc = _load(args)
    solver = _section(doc, "solver")
    source_path = _pick(args.source, _section(doc, "source").get("file"))
    if source_path is None:
        raise ConfigError("--source is required")
    if not Path(source_path).exists():
        raise ConfigError(f"source file {source_path} does not exist")
    source = formats.read_source(source_path)
    variant = _pick(args.variant, solver.get("variant"), "classical")
    spec = _pick(args.grid, doc.get("grid"))
    if spec is None:
        raise ConfigError("--grid is required")
    seed = _master_seed(args, doc)
    grid = parse_grid(spec, variant)
    cfg = SolverConfig(
        t_size=int(_pick(args.t_size, solver.get("t_size"), 4)),
        max_iters=int(_pick(args.max_iters, solver.get("max_iters"), 2000)),
        conv_tol=float(_pick(args.conv_tol, solver.get("conv_tol"), 1e-8)),
        restarts=int(_pick(args.restarts, solver.get("restarts"), 5)),
        init_concentration=float(_pick(args.init_concentration, solver.get("init_concentration"), 1.0)),
        seed=derive_seed(seed, "solver"),
    )
    train_src = source
    if args.train_samples:
        train_src = histogram(formats.read_samples_csv(args.train_samples, sizes=source.sizes))
    encoders = train_grid(train_src, grid, cfg)
    out = args.out or _section(doc, "output").get("grid") or "grid.json"
    effective = {"source": source_path, "variant": variant, "grid": spec, "solver": asdict(cfg),
                 "train_samples": args.train_samples}
    unit = _unit(args, doc)
    formats.write_encoder_grid(out, encoders, formats.make_header("encoder-grid", effective, {"master": seed}, unit))
    unconverged = sum(not e.diagnostics.converged for e in encoders)
    print(f"wrote {out}: {len(encoders)} encoders, |T|={cfg.t_size}, {unconverged} hit max_iters")
    return EXIT_OK


# ----------------------------------------------------------------------------
# calibrate
# ----------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    doc = _load(args)
    mht = _section(doc, "mht")
    cal = _section(doc, "calibration")
    unit = _unit(args, doc)
    seed = _master_seed(args, doc)
    grid_path = _pick(args.grid_file, _section(doc, "output").get("grid"))
    if grid_path is None or not Path(grid_path).exists():
        raise ConfigError(f"encoder grid file {grid_path} does not exist (--grid-file)")
    encoders = formats.read_encoder_grid(grid_path)
    x_size = encoders[0].x_size

    source = None
    if args.source:
        source = formats.read_source(args.source)

    def load(path):
        if not Path(path).exists():
            raise ConfigError(f"samples file {path} does not exist")
        s = formats.read_samples_csv(path, sizes=None if source is None else source.sizes)
        if s.sizes[0] != x_size:
            raise ConfigError(f"{path}: |X|={s.sizes[0]} but encoders expect {x_size}")
        return s

    if args.opt_samples and args.mht_samples:
        d_opt, d_mht = load(args.opt_samples), load(args.mht_samples)
        full = None
    else:
        path = _pick(args.samples, cal.get("samples"))
        if path is None:
            raise ConfigError("pass --samples, or both --opt-samples and --mht-samples")
        full = load(path)
        frac = float(_pick(args.split, cal.get("split_opt"), 0.5))
        if not 0.0 < frac < 1.0:
            raise ConfigError("--split must lie in (0, 1)")
        perm = np.random.default_rng(derive_seed(seed, "split", 0)).permutation(full.n)
        n_opt = int(round(full.n * frac))
        if n_opt < 1 or n_opt >= full.n:
            raise ConfigError("split leaves one side empty")
        d_opt, d_mht = full.take(perm[:n_opt]), full.take(perm[n_opt:])

    alpha = _pick(args.alpha, mht.get("alpha"))
    delta = _pick(args.delta, mht.get("delta"), 0.1)
    if alpha is None:
        raise ConfigError("--alpha is required")
    alpha, delta = float(alpha), float(delta)

    outcome = ib_mht(encoders, d_opt, d_mht, alpha, delta, derive_seed(seed, "ib_mht", 0), unit, source)

    conventional = None
    if args.baseline == "conventional":
        pool = full if full is not None else d_opt
        idx = select_conventional(encoders, pool, alpha, derive_seed(seed, "conventional", 0), unit)
        conventional = {"abstained": idx is None,
                        "chosen": None if idx is None else {"index": idx, "hp": formats._hp_dict(encoders[idx].hp)}}

    effective = {"grid": grid_path, "samples": args.samples, "opt": args.opt_samples, "mht": args.mht_samples,
                 "alpha": alpha, "delta": delta, "baseline": args.baseline}
    header = formats.make_header("selection-outcome", effective, {"master": seed}, unit)
    out = args.out or _section(doc, "output").get("outcome") or "outcome.json"
    formats.write_json(out, formats.outcome_doc(outcome, header, conventional))
    csv_out = args.csv or str(Path(out).with_suffix(".csv"))
    formats.write_candidates_csv(csv_out, outcome, header)

    print(f"front: {len(outcome.ordered_front)} candidates, certified prefix: {len(outcome.rejected)}")
    if conventional is not None:
        c = conventional["chosen"]
        print("conventional: " + ("abstain" if c is None else encoders[c["index"]].hp.label()))
    if outcome.abstained:
        print("lambda* = ∅ (no candidate certified at this alpha/delta)")
        return EXIT_ABSTAIN
    print(f"lambda* = {outcome.chosen.hp.label()} (p = {outcome.chosen.p_value:.3g})")
    return EXIT_OK


# ----------------------------------------------------------------------------
# simulate / report
# ----------------------------------------------------------------------------


def experiment_config(args, doc: dict) -> ExperimentConfig:
    src = dict(_section(doc, "source"))
    if args.source:
        src = dict(formats.load_config_doc(args.source).get("source", formats.load_config_doc(args.source)))
    if not src:
        raise ConfigError("a source descriptor is required (config 'source' section or --source)")
    solver = dict(_section(doc, "solver"))
    cal = _section(doc, "calibration")
    mht = _section(doc, "mht")
    exp = _section(doc, "experiment")
    variant = solver.pop("variant", "classical")
    t_size = int(solver.pop("t_size", 4))
    mode = _pick(args.mode, exp.get("mode"), "redraw")
    mode = {"resplit-fixed-calibration": "resplit", "redraw-calibration": "redraw"}.get(mode, mode)
    alpha = _pick(args.alpha, mht.get("alpha"), "mid")
    if alpha != "mid":
        alpha = float(alpha)
    n_train = cal.get("n_train")
    return ExperimentConfig(
        source=src,
        variant=variant,
        grid=str(_pick(args.grid, doc.get("grid"), "log:1e-3:10^1.5:30")),
        t_size=t_size,
        n_train=None if n_train is None else int(n_train),
        n_cal=int(_pick(args.n_cal, cal.get("n_cal"), 20_000)),
        split=tuple(cal.get("split", (0.5, 0.5))),
        alpha=alpha,
        delta=float(_pick(args.delta, mht.get("delta"), 0.1)),
        trials=int(_pick(args.trials, exp.get("trials"), 200)),
        mode=mode,
        master_seed=_master_seed(args, doc),
        unit=_unit(args, doc),
        solver=solver,
    )


def _fmt_rate(x: float) -> str:
    return "n/a" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.3f}"


def _print_summary(summary) -> None:
    print(f"alpha = {summary.alpha:.6g}, delta = {summary.delta:g}")
    print(f"{'method':<14}{'outputs':>8}{'outage':>9}{'abstain':>9}{'mean I(T;Y)':>13}{'std':>9}"
          f"{'mean I(X;T)':>13}{'std':>9}")
    for m in summary.methods:
        print(f"{m.method:<14}{m.outputs:>8}{_fmt_rate(m.outage_rate):>9}{_fmt_rate(m.abstention_rate):>9}"
              f"{_fmt_rate(m.mean_i_ty):>13}{_fmt_rate(m.std_i_ty):>9}"
              f"{_fmt_rate(m.mean_i_xt):>13}{_fmt_rate(m.std_i_xt):>9}")


def cmd_simulate(args) -> int:
    doc = _load(args)
    config = experiment_config(args, doc)
    workers = args.workers if args.workers is not None else (os.cpu_count() or 1)
    out_dir = Path(args.out_dir or _section(doc, "output").get("dir") or "results")
    out_dir.mkdir(parents=True, exist_ok=True)
    records, summary, setup = run_experiment(config, workers=workers)
    header = formats.make_header(
        "trials", asdict(config), {"master": config.master_seed}, config.unit,
        alpha=repr(setup.alpha), delta=repr(config.delta), mode=config.mode, trials=config.trials,
    )
    formats.write_trials_csv(out_dir / "trials.csv", records, header)
    formats.write_json(out_dir / "summary.json", formats.summary_doc(summary, {**header, "kind": "summary"}))
    formats.write_scatter_csv(out_dir / "scatter.csv", records, {**header, "kind": "scatter"})
    _print_summary(summary)
    print(f"wrote {out_dir}/trials.csv, summary.json, scatter.csv")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.trials)
    if not path.exists():
        raise ConfigError(f"{path} does not exist")
    header, records = formats.read_trials_csv(path)
    try:
        alpha, delta = float(header["alpha"]), float(header["delta"])
    except (KeyError, ValueError) as exc:
        raise formats.SchemaError(f"{path}: header lacks alpha/delta") from exc
    summary = summarize(records, alpha, delta)
    _print_summary(summary)
    stored_path = Path(args.summary) if args.summary else path.with_name("summary.json")
    if stored_path.exists():
        stored = formats.read_json(stored_path).get("methods", {})
        bad = []
        for m in summary.methods:
            ref = stored.get(m.method)
            if ref is None:
                bad.append(f"{m.method}: missing from stored summary")
                continue
            for k in ("trials", "outputs", "violations", "outage_rate", "abstention_rate",
                      "mean_i_ty", "std_i_ty", "mean_i_xt", "std_i_xt"):
                a, b = getattr(m, k), ref.get(k)
                a_nan = isinstance(a, float) and math.isnan(a)
                if b is None and a_nan:
                    continue
                if b is None or a_nan or abs(a - b) > 1e-9:
                    bad.append(f"{m.method}.{k}: recomputed {a!r} vs stored {b!r}")
        if bad:
            for line in bad:
                print("MISMATCH " + line)
            return EXIT_CONFIG
        print(f"matches stored summary {stored_path}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ibmht", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML/JSON run configuration")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--unit", choices=("nats", "bits"))

    g = sub.add_parser("gen-source", help="write a source PMF and print its information measures")
    common(g)
    g.add_argument("--kind", choices=("dsbs", "dirichlet", "matrix"))
    g.add_argument("--p", type=float, help="dsbs crossover probability")
    g.add_argument("--sizes", help="dirichlet sizes, e.g. 8,4")
    g.add_argument("--concentration", type=float)
    g.add_argument("--matrix", help="CSV matrix to validate and re-emit")
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_source)

    t = sub.add_parser("train-grid", help="solve the IB objective at every grid point")
    common(t)
    t.add_argument("--source", help="PMF CSV or source descriptor")
    t.add_argument("--variant", choices=("classical", "deterministic", "ibkd"))
    t.add_argument("--grid", help="e.g. 'log:1e-4:1:100' or 'log:1e-3:1:10 x log:1e-4:1:10'")
    t.add_argument("--t-size", type=int)
    t.add_argument("--max-iters", type=int)
    t.add_argument("--conv-tol", type=float)
    t.add_argument("--restarts", type=int)
    t.add_argument("--init-concentration", type=float)
    t.add_argument("--train-samples", help="train on the histogram of this samples CSV instead of the PMF")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train_grid)

    c = sub.add_parser("calibrate", help="run the certified selection once")
    common(c)
    c.add_argument("--grid-file")
    c.add_argument("--samples", help="calibration samples CSV (split into OPT/MHT)")
    c.add_argument("--opt-samples")
    c.add_argument("--mht-samples")
    c.add_argument("--split", type=float, help="fraction of --samples used for the Pareto step")
    c.add_argument("--source", help="optional true source, for exact MI columns")
    c.add_argument("--alpha", type=float)
    c.add_argument("--delta", type=float)
    c.add_argument("--baseline", choices=("conventional",))
    c.add_argument("--out")
    c.add_argument("--csv")
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", help="Monte Carlo comparison of certified vs conventional selection")
    common(s)
    s.add_argument("--source", help="source descriptor file")
    s.add_argument("--grid")
    s.add_argument("--trials", type=int)
    s.add_argument("--mode", choices=("redraw", "resplit"))
    s.add_argument("--n-cal", type=int)
    s.add_argument("--alpha")
    s.add_argument("--delta", type=float)
    s.add_argument("--workers", type=int)
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="recompute the summary from a trials CSV")
    r.add_argument("trials")
    r.add_argument("--summary", help="stored summary to compare against (default: summary.json beside the CSV)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NonFinite as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IBMHTError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
