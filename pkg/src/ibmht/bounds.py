"""Plug-in mutual information and its finite-sample lower confidence bound.

The deviation bound holds for the plug-in estimator on ``n`` i.i.d. draws
over a ``|U| x |V|`` alphabet: with probability at least ``1 - eps``,

    I_hat - I <= dI(theta(eps, n)),
    theta(eps, n) = sqrt((2/n) * ln((2**(|U||V|) - 2) / eps)).

``delta_i`` is the raw piecewise expression. It is not monotone in theta, so
confidence bounds and p-values go through ``delta_i_envelope`` (running max,
capped at ``log min(|U|, |V|)``), which dominates it and stays valid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyHistogram, OutOfRange
from .prob import Histogram2D, check_unit, mi_nats, to_unit

EPS_FLOOR = 1e-300
BISECTION_TOL = 1e-9
BISECTION_MAX_ITER = 200


@dataclass(frozen=True)
class BoundParams:
    n: int
    sizes: tuple[int, int]
    unit: str = "nats"

    def __post_init__(self):
        if self.n < 1:
            raise OutOfRange("n must be >= 1")
        if min(self.sizes) < 2:
            raise OutOfRange("alphabet sizes must be >= 2")
        check_unit(self.unit)
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))


def plugin_mi(hist: Histogram2D, unit: str = "nats") -> float:
    """Plug-in estimate from the empirical joint and its marginals."""
    n = hist.n
    if n < 1:
        raise EmptyHistogram("histogram has no samples")
    return to_unit(mi_nats(hist.counts / n), unit)


def _h_nats(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log(x) - (1.0 - x) * math.log1p(-x)


def binary_entropy(x: float, unit: str = "nats") -> float:
    if not 0.0 <= x <= 1.0:
        raise OutOfRange(f"binary entropy needs 0 <= x <= 1, got {x}")
    return to_unit(_h_nats(x), unit)


def _log_cells_minus_two(k: int) -> float:
    # ln(2**k - 2) without forming 2**k
    return k * math.log(2.0) + math.log1p(-(2.0 ** (1 - k)))


def theta(epsilon: float, params: BoundParams) -> float:
    if not 0.0 < epsilon < 1.0:
        raise OutOfRange(f"epsilon must lie in (0, 1), got {epsilon}")
    return _theta(epsilon, params)


def _theta(epsilon: float, params: BoundParams) -> float:
    # also accepts epsilon == 1 for endpoint evaluation
    k = params.sizes[0] * params.sizes[1]
    return math.sqrt(2.0 / params.n * (_log_cells_minus_two(k) - math.log(epsilon)))


def _first_branch_nats(th: float, su: int, sv: int) -> float:
    c = math.log((su * sv - 1) * (su - 1) * (sv - 1))
    return 0.5 * th * c + 3.0 * _h_nats(0.5 * th)


def _delta_i_nats(th: float, su: int, sv: int) -> float:
    if th <= 2.0 - 2.0 / su:
        return _first_branch_nats(th, su, sv)
    return math.log(su)


def delta_i(th: float, params: BoundParams) -> float:
    """Raw piecewise deviation bound at ``th``."""
    if th < 0:
        raise OutOfRange("theta must be >= 0")
    su, sv = params.sizes
    return to_unit(_delta_i_nats(th, su, sv), params.unit)


def _peak_theta(su: int, sv: int) -> float:
    # first branch is concave; its derivative vanishes where h'(th/2) = -c/3
    c = math.log((su * sv - 1) * (su - 1) * (sv - 1))
    return 2.0 / (1.0 + math.exp(-c / 3.0))


def _envelope_nats(th: float, su: int, sv: int) -> float:
    cap = math.log(min(su, sv))
    branch_end = 2.0 - 2.0 / su
    peak = _peak_theta(su, sv)
    if th <= branch_end:
        val = _first_branch_nats(min(th, peak), su, sv)
    else:
        val = max(_first_branch_nats(min(branch_end, peak), su, sv), math.log(su))
    return min(val, cap)


def delta_i_envelope(th: float, params: BoundParams) -> float:
    """Nondecreasing repair of :func:`delta_i`: ``min(sup_{t<=th} delta_i(t), log min(|U|,|V|))``."""
    if th < 0:
        raise OutOfRange("theta must be >= 0")
    su, sv = params.sizes
    return to_unit(_envelope_nats(th, su, sv), params.unit)


def lower_conf_bound(estimate: float, epsilon: float, params: BoundParams) -> float:
    """One-sided bound: ``I >= estimate - envelope(theta(eps, n))`` w.p. >= 1 - eps."""
    return estimate - delta_i_envelope(theta(epsilon, params), params)


def _rejects(estimate: float, alpha: float, epsilon: float, params: BoundParams) -> bool:
    return estimate - delta_i_envelope(_theta(epsilon, params), params) > alpha


def p_value(estimate: float, alpha: float, params: BoundParams) -> float:
    """Smallest ``eps`` at which the lower confidence bound clears ``alpha``.

    The rejection predicate is monotone in ``eps``; the infimum is found by
    bisection and the upper end of the final bracket is returned, so the
    reported value never undercuts the exact one. Returns 1 when even
    ``eps = 1`` does not clear ``alpha``.
    """
    if alpha < 0:
        raise OutOfRange("alpha must be >= 0")
    if not np.isfinite(estimate):
        raise OutOfRange("estimate must be finite")
    if not _rejects(estimate, alpha, 1.0, params):
        return 1.0
    if _rejects(estimate, alpha, EPS_FLOOR, params):
        return EPS_FLOOR
    lo, hi = EPS_FLOOR, 1.0
    for _ in range(BISECTION_MAX_ITER):
        if hi - lo <= BISECTION_TOL:
            break
        mid = 0.5 * (lo + hi)
        if _rejects(estimate, alpha, mid, params):
            hi = mid
        else:
            lo = mid
    return hi
