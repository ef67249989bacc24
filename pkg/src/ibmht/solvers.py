"""Self-consistent discrete IB solvers over a hyperparameter grid.

One alternating update serves all three objectives:

    q(t)     = sum_x p(x) q(t|x)
    q(y|t)   = sum_x p(x, y) q(t|x) / q(t)
    q(t|x)  ~= exp((log q(t) - beta * KL(p(y|x) || q(y|t))) / gamma)

``gamma = 1`` is the classical Lagrangian ``I(X;T) - beta I(T;Y)``; smaller
``gamma`` sharpens toward the deterministic limit of
``H(T) - gamma H(T|X) - beta I(T;Y)``. The IBKD form ``-I(T;Y) + lam I(X;T)``
has the same minimizers as the classical one with ``beta = 1/lam``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, EmptyInput, NonFinite, OutOfRange
from .prob import (
    Diagnostics,
    Encoder,
    Histogram2D,
    JointPMF,
    compose,
    derive_seed,
    entropy_nats,
    mi_nats,
    to_unit,
)

VARIANTS = ("classical", "deterministic", "ibkd")
EMPTY_CLUSTER = 1e-12


@dataclass(frozen=True)
class HyperparameterPoint:
    """``classical(lam)``, ``deterministic(gamma, beta)`` or ``ibkd(lam)``."""

    variant: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise OutOfRange(f"unknown variant {self.variant!r}")
        vals = tuple(float(v) for v in self.values)
        expected = 2 if self.variant == "deterministic" else 1
        if len(vals) != expected:
            raise OutOfRange(f"{self.variant} takes {expected} value(s), got {len(vals)}")
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise OutOfRange("hyperparameters must be positive and finite")
        if self.variant == "deterministic" and vals[0] > 1:
            raise OutOfRange("gamma must lie in (0, 1]")
        object.__setattr__(self, "values", vals)

    @classmethod
    def classical(cls, lam: float) -> "HyperparameterPoint":
        return cls("classical", (lam,))

    @classmethod
    def deterministic(cls, gamma: float, beta: float) -> "HyperparameterPoint":
        return cls("deterministic", (gamma, beta))

    @classmethod
    def ibkd(cls, lam: float) -> "HyperparameterPoint":
        return cls("ibkd", (lam,))

    def label(self) -> str:
        return f"{self.variant}(" + ", ".join(repr(v) for v in self.values) + ")"


@dataclass(frozen=True)
class CandidateGrid:
    points: tuple[HyperparameterPoint, ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = tuple(self.points)
        if not pts:
            raise EmptyInput("candidate grid is empty")
        if len(set(pts)) != len(pts):
            raise OutOfRange("candidate grid has duplicate points")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


@dataclass(frozen=True)
class SolverConfig:
    t_size: int
    max_iters: int = 2000
    conv_tol: float = 1e-8
    restarts: int = 5
    init_concentration: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.t_size < 2:
            raise OutOfRange("|T| must be >= 2")
        if self.max_iters < 1 or self.restarts < 1:
            raise OutOfRange("max_iters and restarts must be >= 1")
        if not self.conv_tol > 0 or not self.init_concentration > 0:
            raise OutOfRange("conv_tol and init_concentration must be positive")


# ----------------------------------------------------------------------------
# Grids
# ----------------------------------------------------------------------------


def log_spaced(lo: float, hi: float, count: int) -> np.ndarray:
    if not (0 < lo <= hi) or count < 1:
        raise OutOfRange("need 0 < lo <= hi and count >= 1")
    return np.logspace(math.log10(lo), math.log10(hi), count)


def _number(text: str) -> float:
    text = text.strip()
    if text.startswith("10^"):
        return 10.0 ** float(text[3:])
    return float(text)


def _axis(spec: str) -> np.ndarray:
    m = re.fullmatch(r"\s*(log|lin):([^:]+):([^:]+):(\d+)\s*", spec)
    if not m:
        raise OutOfRange(f"bad grid axis {spec!r}; expected 'log:LO:HI:COUNT' or 'lin:LO:HI:COUNT'")
    try:
        lo, hi = _number(m.group(2)), _number(m.group(3))
    except ValueError as exc:
        raise OutOfRange(f"bad number in grid axis {spec!r}") from exc
    kind, count = m.group(1), int(m.group(4))
    if kind == "log":
        return log_spaced(lo, hi, count)
    if not (0 < lo <= hi) or count < 1:
        raise OutOfRange("need 0 < lo <= hi and count >= 1")
    return np.linspace(lo, hi, count)


def parse_grid(spec: str, variant: str) -> CandidateGrid:
    """Build a grid from ``"log:1e-4:1:100"`` or, for the deterministic
    variant, a product ``"log:1e-3:1:10 x log:1e-4:1:10"`` (gamma x beta)."""
    axes = [_axis(a) for a in re.split(r"\s*[x×]\s*(?=(?:log|lin):)", spec.strip())]
    if variant == "deterministic":
        if len(axes) != 2:
            raise OutOfRange("deterministic grids need two axes: gamma x beta")
        pts = [HyperparameterPoint.deterministic(g, b) for g in axes[0] for b in axes[1]]
    else:
        if len(axes) != 1:
            raise OutOfRange(f"{variant} grids take a single axis")
        pts = [HyperparameterPoint(variant, (v,)) for v in axes[0]]
    return CandidateGrid(tuple(pts), {"spec": spec, "variant": variant})


# ----------------------------------------------------------------------------
# Objectives
# ----------------------------------------------------------------------------


def _as_mass(source: Union[JointPMF, Histogram2D]) -> np.ndarray:
    if isinstance(source, Histogram2D):
        return source.counts / source.n
    return source.mass


def _terms_nats(p_xy: np.ndarray, q: np.ndarray) -> tuple[float, float, float]:
    """``H(T)``, ``H(T|X)`` and ``I(T;Y)`` in nats."""
    px = p_xy.sum(axis=1)
    h_t = entropy_nats(px @ q)
    h_t_x = sum(w * entropy_nats(row) for w, row in zip(px, q) if w > 0)
    i_ty = mi_nats(q.T @ p_xy)
    return h_t, h_t_x, i_ty


def _objective_nats(p_xy: np.ndarray, q: np.ndarray, hp: HyperparameterPoint) -> float:
    h_t, h_t_x, i_ty = _terms_nats(p_xy, q)
    if hp.variant == "classical":
        return h_t - h_t_x - hp.values[0] * i_ty
    if hp.variant == "deterministic":
        gamma, beta = hp.values
        return h_t - gamma * h_t_x - beta * i_ty
    return -i_ty + hp.values[0] * (h_t - h_t_x)


def objective_value(
    source: Union[JointPMF, Histogram2D], encoder: Encoder, hp: HyperparameterPoint, unit: str = "nats"
) -> float:
    """Exact objective of ``hp``'s variant under ``source x encoder``."""
    p_xy = _as_mass(source)
    if encoder.x_size != p_xy.shape[0]:
        raise DimensionMismatch("encoder rows do not match the source X alphabet")
    return to_unit(_objective_nats(p_xy, encoder.rows, hp), unit)


# ----------------------------------------------------------------------------
# Iterations
# ----------------------------------------------------------------------------


class _Problem:
    """Quantities of the source that stay fixed across iterations."""

    def __init__(self, p_xy: np.ndarray):
        self.p_xy = p_xy
        self.px = p_xy.sum(axis=1)
        ny = p_xy.shape[1]
        with np.errstate(invalid="ignore", divide="ignore"):
            p_y_x = p_xy / self.px[:, None]
        p_y_x[self.px <= 0] = 1.0 / ny
        self.p_y_x = p_y_x
        self.support = p_y_x > 0
        self.neg_entropy = np.array([-entropy_nats(r) for r in p_y_x])

    def kl(self, q_y_t: np.ndarray) -> np.ndarray:
        """``KL(p(y|x) || q(y|t))`` for every (x, t); +inf on support mismatch."""
        pos = q_y_t > 0
        with np.errstate(divide="ignore"):
            log_q = np.where(pos, np.log(np.where(pos, q_y_t, 1.0)), 0.0)
        cross = self.p_y_x @ log_q.T
        out = self.neg_entropy[:, None] - cross
        hit = (self.support.astype(float) @ (~pos).astype(float).T) > 0
        out[hit] = np.inf
        return out


def _step(prob: _Problem, q: np.ndarray, gamma: float, beta: float) -> np.ndarray:
    qt = prob.px @ q
    joint_ty = q.T @ prob.p_xy
    q_y_t = np.empty_like(joint_ty)
    live = qt >= EMPTY_CLUSTER
    q_y_t[live] = joint_ty[live] / qt[live, None]
    q_y_t[~live] = 1.0 / joint_ty.shape[1]
    with np.errstate(divide="ignore"):
        log_qt = np.where(qt > 0, np.log(np.where(qt > 0, qt, 1.0)), -np.inf)
    with np.errstate(invalid="ignore"):
        logits = (log_qt[None, :] - beta * prob.kl(q_y_t)) / gamma
    dead = ~np.isfinite(logits).any(axis=1)
    if dead.any():
        # every cluster infinitely far: fall back to the prior weights
        logits[dead] = log_qt[None, :] / gamma
    new = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    if not np.all(np.isfinite(new)):
        raise NonFinite("encoder update produced non-finite entries")
    return new


def ib_iterations(
    p_xy: np.ndarray,
    q0: np.ndarray,
    gamma: float,
    beta: float,
    max_iters: int,
    conv_tol: float,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> tuple[np.ndarray, int, bool]:
    """Run the alternating updates from ``q0``.

    ``callback(i, q)`` sees the encoder after every update. Returns the final
    encoder, the iteration count and whether ``conv_tol`` was reached.
    """
    prob = _Problem(np.asarray(p_xy, dtype=float))
    q = np.asarray(q0, dtype=float)
    if q.shape[0] != prob.p_xy.shape[0]:
        raise DimensionMismatch("initial encoder rows do not match |X|")
    for i in range(1, max_iters + 1):
        new = _step(prob, q, gamma, beta)
        change = float(np.max(np.abs(new - q)))
        q = new
        if callback is not None:
            callback(i, q)
        if change < conv_tol:
            return q, i, True
    return q, max_iters, False


def initial_encoder(x_size: int, config: SolverConfig, restart: int) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(config.seed, "init", restart))
    return rng.dirichlet(np.full(config.t_size, config.init_concentration), size=x_size)


def _solve(
    source, gamma: float, beta: float, hp: HyperparameterPoint, config: SolverConfig
) -> Encoder:
    p_xy = _as_mass(source)
    best = None
    for r in range(config.restarts):
        q0 = initial_encoder(p_xy.shape[0], config, r)
        q, iters, converged = ib_iterations(p_xy, q0, gamma, beta, config.max_iters, config.conv_tol)
        obj = _objective_nats(p_xy, q, hp)
        if not math.isfinite(obj):
            raise NonFinite(f"objective is {obj} for {hp.label()}")
        if best is None or obj < best[0]:
            best = (obj, q, Diagnostics(iters, obj, r, converged))
    _, q, diag = best
    return Encoder(q, hp, diag)


def solve_classical(source, lam: float, config: SolverConfig) -> Encoder:
    """Minimize ``I(X;T) - lam I(T;Y)``; best of ``config.restarts`` starts."""
    if not lam > 0:
        raise OutOfRange("lambda must be positive")
    return _solve(source, 1.0, lam, HyperparameterPoint.classical(lam), config)


def solve_deterministic(source, gamma: float, beta: float, config: SolverConfig) -> Encoder:
    """Minimize ``H(T) - gamma H(T|X) - beta I(T;Y)``."""
    hp = HyperparameterPoint.deterministic(gamma, beta)
    return _solve(source, gamma, beta, hp, config)


def solve_ibkd(source, lam: float, config: SolverConfig) -> Encoder:
    """Minimize ``-I(T;Y) + lam I(X;T)`` via the classical solver at ``1/lam``."""
    if not lam > 0:
        raise OutOfRange("lambda must be positive")
    enc = solve_classical(source, 1.0 / lam, config)
    hp = HyperparameterPoint.ibkd(lam)
    obj = _objective_nats(_as_mass(source), enc.rows, hp)
    return Encoder(enc.rows, hp, replace(enc.diagnostics, final_objective=obj))


def solve_point(source, hp: HyperparameterPoint, config: SolverConfig) -> Encoder:
    if hp.variant == "classical":
        return solve_classical(source, hp.values[0], config)
    if hp.variant == "deterministic":
        return solve_deterministic(source, *hp.values, config)
    return solve_ibkd(source, hp.values[0], config)


def train_grid(source, grid: CandidateGrid, config: SolverConfig) -> list[Encoder]:
    """Solve every grid point independently with a per-point derived seed."""
    if len(grid) == 0:
        raise EmptyInput("grid is empty")
    out = []
    for i, hp in enumerate(grid.points):
        cfg = replace(config, seed=derive_seed(config.seed, "grid", i))
        out.append(solve_point(source, hp, cfg))
    return out


def exact_range(source: JointPMF, encoders: Sequence[Encoder]) -> tuple[float, float]:
    """Min and max exact ``I(T;Y)`` (nats) over a trained family."""
    vals = [mi_nats(compose(source, e)[0].mass) for e in encoders]
    return min(vals), max(vals)
