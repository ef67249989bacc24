"""Hyperparameter selection with a finite-sample guarantee on ``I(T;Y) >= alpha``.

``ib_mht`` estimates ``(I(T;Y), I(X;T))`` for every candidate on one half of
the calibration data, keeps the non-dominated candidates ordered by decreasing
estimated ``I(T;Y)``, then tests them in that fixed order on the other half.
Testing stops at the first p-value above ``delta``; the candidates rejected
before that point form the certified set and the one with the smallest
``I(X;T)`` estimate is returned. ``select_conventional`` is the usual
plug-in rule with no certificate, kept as a baseline.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .bounds import BoundParams, p_value
from .errors import DimensionMismatch, EmptyInput, MissingPValue, OutOfRange
from .prob import Encoder, JointPMF, SampleSet, derive_seed, draw_features, exact_pair, mi_nats, to_unit
from .solvers import HyperparameterPoint


@dataclass(frozen=True)
class CandidateEvaluation:
    index: int
    hp: Optional[HyperparameterPoint]
    i_ty_opt: float
    i_xt_opt: float
    i_ty_mht: Optional[float] = None
    i_xt_mht: Optional[float] = None
    p_value: Optional[float] = None
    i_ty_true: Optional[float] = None
    i_xt_true: Optional[float] = None


@dataclass(frozen=True)
class SelectionOutcome:
    ordered_front: tuple[CandidateEvaluation, ...]
    rejected: tuple[CandidateEvaluation, ...]
    chosen: Optional[CandidateEvaluation]
    audit: dict = field(default_factory=dict)

    @property
    def abstained(self) -> bool:
        return self.chosen is None

    @property
    def chosen_hp(self) -> Optional[HyperparameterPoint]:
        return None if self.chosen is None else self.chosen.hp


def estimate_pair(encoder: Encoder, samples: SampleSet, seed: int, unit: str = "nats") -> tuple[float, float]:
    """Plug-in ``(I(T;Y), I(X;T))`` from one rollout of ``samples``.

    Equivalent to ``rollout`` followed by ``plugin_mi`` on both outputs; the
    (x, t, y) counts are gathered in one pass.
    """
    nx, ny = samples.sizes
    if encoder.x_size != nx:
        raise DimensionMismatch(f"encoder has {encoder.x_size} rows, samples have |X|={nx}")
    nt = encoder.t_size
    t = draw_features(samples.u, encoder, seed)
    cube = np.bincount((samples.u * nt + t) * ny + samples.v, minlength=nx * nt * ny)
    cube = cube.reshape(nx, nt, ny) / samples.n
    return to_unit(mi_nats(cube.sum(axis=0)), unit), to_unit(mi_nats(cube.sum(axis=2)), unit)


def pareto_front(evals: Sequence[CandidateEvaluation]) -> list[CandidateEvaluation]:
    """Candidates not dominated in (max ``i_ty_opt``, min ``i_xt_opt``).

    Identical pairs do not dominate each other, so duplicates are all kept.
    Returned in input order.
    """
    if not evals:
        raise EmptyInput("no candidates")
    order = sorted(range(len(evals)), key=lambda i: (-evals[i].i_ty_opt, evals[i].i_xt_opt))
    keep = []
    best_xt = np.inf  # smallest i_xt among strictly higher i_ty
    pos = 0
    while pos < len(order):
        ty = evals[order[pos]].i_ty_opt
        end = pos
        while end < len(order) and evals[order[end]].i_ty_opt == ty:
            end += 1
        group = order[pos:end]
        group_min = evals[group[0]].i_xt_opt
        if group_min < best_xt:
            keep.extend(i for i in group if evals[i].i_xt_opt == group_min)
        best_xt = min(best_xt, group_min)
        pos = end
    return [evals[i] for i in sorted(keep)]


def order_candidates(front: Sequence[CandidateEvaluation]) -> list[CandidateEvaluation]:
    """Decreasing ``i_ty_opt``; ties by increasing ``i_xt_opt`` then grid index."""
    return sorted(front, key=lambda e: (-e.i_ty_opt, e.i_xt_opt, e.index))


def fixed_sequence_test(ordered: Sequence[CandidateEvaluation], delta: float) -> list[CandidateEvaluation]:
    """Longest prefix whose p-values are all ``<= delta``."""
    if not 0.0 < delta < 1.0:
        raise OutOfRange("delta must lie in (0, 1)")
    prefix = []
    for e in ordered:
        if e.p_value is None:
            raise MissingPValue(f"candidate {e.index} has no p-value")
        if e.p_value > delta:
            break
        prefix.append(e)
    return prefix


def _choose(rejected: Sequence[CandidateEvaluation]) -> Optional[CandidateEvaluation]:
    if not rejected:
        return None
    best = min(range(len(rejected)), key=lambda k: (rejected[k].i_xt_mht, rejected[k].p_value, k))
    return rejected[best]


def ib_mht(
    encoders: Sequence[Encoder],
    d_opt: SampleSet,
    d_mht: SampleSet,
    alpha: float,
    delta: float,
    seed: int,
    unit: str = "nats",
    source: Optional[JointPMF] = None,
) -> SelectionOutcome:
    """Certified selection; ``outcome.chosen`` is ``None`` on abstention.

    ``source``, when given, only fills the exact ``i_*_true`` fields.
    """
    if not encoders:
        raise EmptyInput("no encoders")
    if alpha < 0:
        raise OutOfRange("alpha must be >= 0")
    if not 0.0 < delta < 1.0:
        raise OutOfRange("delta must lie in (0, 1)")

    evals = []
    for i, enc in enumerate(encoders):
        ty, xt = estimate_pair(enc, d_opt, derive_seed(seed, "opt", i), unit)
        truth = exact_pair(source, enc, unit) if source is not None else (None, None)
        evals.append(CandidateEvaluation(i, enc.hp, ty, xt, i_ty_true=truth[0], i_xt_true=truth[1]))

    ordered = order_candidates(pareto_front(evals))

    tested = []
    for e in ordered:
        enc = encoders[e.index]
        ty, xt = estimate_pair(enc, d_mht, derive_seed(seed, "mht", e.index), unit)
        params = BoundParams(d_mht.n, (enc.t_size, d_mht.sizes[1]), unit)
        tested.append(replace(e, i_ty_mht=ty, i_xt_mht=xt, p_value=p_value(ty, alpha, params)))

    rejected = fixed_sequence_test(tested, delta)
    audit = {
        "alpha": alpha,
        "delta": delta,
        "n_opt": d_opt.n,
        "n_mht": d_mht.n,
        "seed": seed,
        "unit": unit,
        "n_candidates": len(encoders),
    }
    return SelectionOutcome(tuple(tested), tuple(rejected), _choose(rejected), audit)


def select_conventional(
    encoders: Sequence[Encoder], d: SampleSet, alpha: float, seed: int, unit: str = "nats"
) -> Optional[int]:
    """Index of the smallest-``I(X;T)`` candidate whose estimated ``I(T;Y) >= alpha``.

    Returns ``None`` when no candidate meets the estimated constraint.
    """
    if not encoders:
        raise EmptyInput("no encoders")
    best = None
    for i, enc in enumerate(encoders):
        ty, xt = estimate_pair(enc, d, derive_seed(seed, "conventional", i), unit)
        if ty >= alpha and (best is None or xt < best[0]):
            best = (xt, i)
    return None if best is None else best[1]
