"""Monte Carlo runner for the selection guarantee.

Encoders are trained once per experiment; each trial then draws (``redraw``)
or re-partitions (``resplit``) a calibration set, runs the certified
selection next to the conventional rule, and scores both choices by their
exact mutual informations under the true source.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .bounds import BoundParams, delta_i_envelope, p_value, plugin_mi, theta
from .errors import NotANull, OutOfRange
from .prob import (
    Encoder,
    JointPMF,
    derive_seed,
    dsbs,
    exact_pair,
    histogram,
    joint_from_matrix,
    random_joint,
    rollout,
    sample_pairs,
)
from .selection import ib_mht, select_conventional
from .solvers import CandidateGrid, HyperparameterPoint, SolverConfig, parse_grid, train_grid

METHODS = ("ib_mht", "conventional")
MODES = ("redraw", "resplit")


@dataclass(frozen=True)
class ExperimentConfig:
    source: dict
    variant: str = "classical"
    grid: str = "log:1e-3:10^1.5:30"
    t_size: int = 4
    n_train: Optional[int] = None  # None: solvers see the exact source PMF
    n_cal: int = 20_000
    split: tuple[float, float] = (0.5, 0.5)
    alpha: Union[float, str] = "mid"  # "mid": midpoint of the trained family's exact I(T;Y) range
    delta: float = 0.1
    trials: int = 200
    mode: str = "redraw"
    master_seed: int = 0
    unit: str = "nats"
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise OutOfRange("trials must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise OutOfRange("delta must lie in (0, 1)")
        if self.mode not in MODES:
            raise OutOfRange(f"mode must be one of {MODES}")
        split = tuple(float(f) for f in self.split)
        if len(split) != 2 or abs(sum(split) - 1.0) > 1e-12 or min(split) <= 0:
            raise OutOfRange("split fractions must be two positive numbers summing to 1")
        if self.n_cal * min(split) < 1:
            raise OutOfRange("each calibration split needs at least one sample")
        if isinstance(self.alpha, str) and self.alpha != "mid":
            raise OutOfRange("alpha must be a number or 'mid'")
        if not isinstance(self.alpha, str) and self.alpha < 0:
            raise OutOfRange("alpha must be >= 0")
        object.__setattr__(self, "split", split)


# Desk-scale reference: 8x4 Dirichlet(1) source, |T|=4, 30 classical lambdas.
REFERENCE = ExperimentConfig(
    source={"kind": "dirichlet", "sizes": [8, 4], "concentration": 1.0, "seed": 7},
    variant="classical",
    grid="log:1e-3:10^1.5:30",
    t_size=4,
    n_cal=20_000,
    alpha="mid",
    delta=0.1,
    trials=200,
    mode="redraw",
    master_seed=2024,
)

# Same experiment with enough calibration data for the bound to certify anything.
INFORMATIVE = ExperimentConfig(**{**asdict(REFERENCE), "n_cal": 1_000_000})


def build_source(desc: dict) -> JointPMF:
    kind = desc.get("kind")
    if kind == "dsbs":
        return dsbs(float(desc["p"]))
    if kind == "dirichlet":
        if "seed" not in desc:
            raise OutOfRange("dirichlet source needs a 'seed'")
        sizes = tuple(int(s) for s in desc["sizes"])
        return random_joint(sizes, float(desc.get("concentration", 1.0)), int(desc["seed"]))
    if kind == "matrix":
        return joint_from_matrix(desc["mass"])
    raise OutOfRange(f"unknown source kind {kind!r}")


@dataclass(frozen=True)
class Setup:
    source: JointPMF
    grid: CandidateGrid
    encoders: tuple[Encoder, ...]
    exact: tuple[tuple[float, float], ...]  # exact (I(T;Y), I(X;T)) per encoder
    alpha: float


def prepare(config: ExperimentConfig, source: Optional[JointPMF] = None) -> Setup:
    """Build the source, train the grid once and fix ``alpha``."""
    source = build_source(config.source) if source is None else source
    grid = parse_grid(config.grid, config.variant)
    if config.n_train is None:
        train_src = source
    else:
        train_src = histogram(sample_pairs(source, config.n_train, derive_seed(config.master_seed, "train")))
    solver_cfg = SolverConfig(t_size=config.t_size, seed=derive_seed(config.master_seed, "solver"), **config.solver)
    encoders = tuple(train_grid(train_src, grid, solver_cfg))
    exact = tuple(exact_pair(source, e, config.unit) for e in encoders)
    if config.alpha == "mid":
        ty = [p[0] for p in exact]
        alpha = 0.5 * (min(ty) + max(ty))
    else:
        alpha = float(config.alpha)
    return Setup(source, grid, encoders, exact, alpha)


@dataclass(frozen=True)
class MethodResult:
    method: str
    chosen_index: Optional[int]
    hp: Optional[HyperparameterPoint]
    exact_i_ty: Optional[float]
    exact_i_xt: Optional[float]
    violated: Optional[bool]

    @property
    def abstained(self) -> bool:
        return self.chosen_index is None


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    results: tuple[MethodResult, ...]
    seeds: dict

    def result(self, method: str) -> MethodResult:
        return next(r for r in self.results if r.method == method)


def _score(method: str, idx: Optional[int], setup: Setup) -> MethodResult:
    if idx is None:
        return MethodResult(method, None, None, None, None, None)
    ty, xt = setup.exact[idx]
    return MethodResult(method, idx, setup.encoders[idx].hp, ty, xt, bool(ty < setup.alpha))


def calibration_split(config: ExperimentConfig, setup: Setup, trial_index: int):
    """Calibration draw for a trial and its (D_OPT, D_MHT) partition."""
    draw = trial_index if config.mode == "redraw" else 0
    cal_seed = derive_seed(config.master_seed, "cal", draw)
    split_seed = derive_seed(config.master_seed, "split", trial_index)
    cal = sample_pairs(setup.source, config.n_cal, cal_seed)
    perm = np.random.default_rng(split_seed).permutation(config.n_cal)
    n_opt = int(round(config.n_cal * config.split[0]))
    return cal, cal.take(perm[:n_opt]), cal.take(perm[n_opt:]), {"cal": cal_seed, "split": split_seed}


def run_trial(config: ExperimentConfig, setup: Setup, trial_index: int) -> TrialRecord:
    cal, d_opt, d_mht, seeds = calibration_split(config, setup, trial_index)
    seeds["ib_mht"] = derive_seed(config.master_seed, "ib_mht", trial_index)
    seeds["conventional"] = derive_seed(config.master_seed, "conventional", trial_index)
    outcome = ib_mht(setup.encoders, d_opt, d_mht, setup.alpha, config.delta, seeds["ib_mht"], config.unit)
    mht_idx = None if outcome.abstained else outcome.chosen.index
    conv_idx = select_conventional(setup.encoders, cal, setup.alpha, seeds["conventional"], config.unit)
    return TrialRecord(
        trial_index,
        (_score("ib_mht", mht_idx, setup), _score("conventional", conv_idx, setup)),
        seeds,
    )


# ----------------------------------------------------------------------------
# Aggregation
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class MethodSummary:
    method: str
    trials: int
    outputs: int
    violations: int
    outage_rate: float  # over non-abstaining trials; nan when there are none
    abstention_rate: float
    mean_i_ty: float
    std_i_ty: float
    mean_i_xt: float
    std_i_xt: float


@dataclass(frozen=True)
class SummaryStats:
    methods: tuple[MethodSummary, ...]
    alpha: float
    delta: float

    def __getitem__(self, method: str) -> MethodSummary:
        return next(m for m in self.methods if m.method == method)


class _Running:
    """Welford accumulator for one method."""

    def __init__(self, method: str):
        self.method = method
        self.trials = self.outputs = self.violations = 0
        self.mean = [0.0, 0.0]
        self.m2 = [0.0, 0.0]

    def push(self, r: MethodResult):
        self.trials += 1
        if r.abstained:
            return
        self.outputs += 1
        self.violations += int(r.violated)
        for k, x in enumerate((r.exact_i_ty, r.exact_i_xt)):
            d = x - self.mean[k]
            self.mean[k] += d / self.outputs
            self.m2[k] += d * (x - self.mean[k])

    def summary(self) -> MethodSummary:
        n = self.outputs
        nan = float("nan")
        std = [math.sqrt(max(m, 0.0) / n) if n else nan for m in self.m2]
        return MethodSummary(
            self.method,
            self.trials,
            n,
            self.violations,
            self.violations / n if n else nan,
            (self.trials - n) / self.trials if self.trials else nan,
            self.mean[0] if n else nan,
            std[0],
            self.mean[1] if n else nan,
            std[1],
        )


def summarize(records: Sequence[TrialRecord], alpha: float, delta: float) -> SummaryStats:
    """Batch recomputation of the summary from trial records."""
    out = []
    for method in METHODS:
        rs = [rec.result(method) for rec in records]
        got = [r for r in rs if not r.abstained]
        ty = np.array([r.exact_i_ty for r in got], dtype=float)
        xt = np.array([r.exact_i_xt for r in got], dtype=float)
        n = len(got)
        nan = float("nan")
        v = sum(int(r.violated) for r in got)
        out.append(
            MethodSummary(
                method,
                len(rs),
                n,
                v,
                v / n if n else nan,
                (len(rs) - n) / len(rs) if rs else nan,
                float(ty.mean()) if n else nan,
                float(ty.std()) if n else nan,
                float(xt.mean()) if n else nan,
                float(xt.std()) if n else nan,
            )
        )
    return SummaryStats(tuple(out), alpha, delta)


def run_experiment(
    config: ExperimentConfig, workers: int = 1, setup: Optional[Setup] = None
) -> tuple[list[TrialRecord], SummaryStats, Setup]:
    """Train once, run ``config.trials`` trials, fold results in trial order.

    Each trial derives its own seeds, so the output does not depend on
    ``workers``.
    """
    setup = prepare(config) if setup is None else setup
    job = partial(run_trial, config, setup)
    indices = range(config.trials)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(job, indices, chunksize=max(1, config.trials // (4 * workers))))
    else:
        records = [job(i) for i in indices]
    records.sort(key=lambda r: r.trial)
    acc = {m: _Running(m) for m in METHODS}
    for rec in records:
        for r in rec.results:
            acc[r.method].push(r)
    summary = SummaryStats(tuple(acc[m].summary() for m in METHODS), setup.alpha, config.delta)
    return records, summary, setup


# ----------------------------------------------------------------------------
# Validity checks for the bound and the p-value
# ----------------------------------------------------------------------------


def coverage_check(
    source: JointPMF, encoder: Encoder, epsilon: float, n: int, R: int, seed: int = 0, unit: str = "nats"
) -> float:
    """Fraction of ``R`` datasets where the plug-in ``I(T;Y)`` overshoots by more than the bound."""
    if R < 100:
        raise OutOfRange("coverage_check needs R >= 100")
    true_ty, _ = exact_pair(source, encoder, unit)
    params = BoundParams(n, (encoder.t_size, source.sizes[1]), unit)
    slack = delta_i_envelope(theta(epsilon, params), params)
    bad = 0
    for r in range(R):
        data = sample_pairs(source, n, derive_seed(seed, "coverage-data", r))
        ty, _ = rollout(data, encoder, derive_seed(seed, "coverage-rollout", r))
        bad += plugin_mi(histogram(ty), unit) - true_ty > slack
    return bad / R


def pvalue_validity_check(
    source: JointPMF,
    encoder: Encoder,
    alpha: float,
    n: int,
    R: int,
    levels: Sequence[float] = (0.05, 0.1, 0.2),
    seed: int = 0,
    unit: str = "nats",
) -> dict[float, float]:
    """Empirical ``Pr[p <= u]`` for each level ``u`` under a true null."""
    true_ty, _ = exact_pair(source, encoder, unit)
    if true_ty >= alpha:
        raise NotANull(f"exact I(T;Y) = {true_ty!r} is not below alpha = {alpha!r}")
    params = BoundParams(n, (encoder.t_size, source.sizes[1]), unit)
    ps = np.empty(R)
    for r in range(R):
        data = sample_pairs(source, n, derive_seed(seed, "pvalue-data", r))
        ty, _ = rollout(data, encoder, derive_seed(seed, "pvalue-rollout", r))
        ps[r] = p_value(plugin_mi(histogram(ty), unit), alpha, params)
    return {u: float(np.mean(ps <= u)) for u in levels}


def boundary_null_encoder(source: JointPMF, base: Encoder, target: float, unit: str = "nats") -> Encoder:
    """Mix ``base`` toward the uniform constant encoder until exact ``I(T;Y) == target``."""
    uniform = np.full_like(base.rows, 1.0 / base.t_size)

    def mixed(s: float) -> Encoder:
        return Encoder((1.0 - s) * base.rows + s * uniform, base.hp)

    top, _ = exact_pair(source, base, unit)
    if not 0.0 < target < top:
        raise OutOfRange(f"target must lie in (0, {top!r})")
    s = brentq(lambda s: exact_pair(source, mixed(s), unit)[0] - target, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
    return mixed(s)
