"""Discrete probability foundation.

Exact joint distributions over finite alphabets, i.i.d. sampling, histograms,
exact information measures and the composition of a source with an encoder.

All information quantities are computed in nats and converted on the way out
when ``unit="bits"``. Everything random takes an explicit integer seed; use
:func:`derive_seed` to obtain independent streams from a master seed.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateAlphabet,
    DimensionMismatch,
    NegativeMass,
    NotNormalized,
    OutOfRange,
)

UNITS = ("nats", "bits")

# Input matrices may drift from 1 by text round-trips; beyond this they are rejected.
NORMALIZATION_TOL = 1e-9
# Below this the matrix is left untouched, so write/read round-trips are lossless.
_RENORMALIZE_ABOVE = 1e-14
ROW_TOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def check_unit(unit: str) -> str:
    if unit not in UNITS:
        raise OutOfRange(f"unit must be one of {UNITS}, got {unit!r}")
    return unit


def to_unit(value_nats: float, unit: str = "nats") -> float:
    """Convert a value expressed in nats to ``unit``."""
    check_unit(unit)
    return value_nats / math.log(2.0) if unit == "bits" else value_nats


def log_unit(x: float, unit: str = "nats") -> float:
    """Logarithm in the base matching ``unit``."""
    return to_unit(math.log(x), unit)


def derive_seed(master: int, tag: str, index: int = 0) -> int:
    """Derive an independent 64-bit seed from ``(master, tag, index)``.

    Streams derived with different tags or indices are statistically
    independent, and the result does not depend on call order.
    """
    if master < 0 or index < 0:
        raise OutOfRange("seeds and indices must be nonnegative")
    ss = np.random.SeedSequence([int(master), zlib.crc32(tag.encode("utf-8")), int(index)])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


# ----------------------------------------------------------------------------
# Types
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class JointPMF:
    """Exact joint distribution over ``|U| x |V|`` cells.

    Build through :func:`joint_from_matrix` unless ``mass`` is already known
    to be valid; the constructor only checks the invariants.
    """

    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if m.ndim != 2:
            raise DimensionMismatch(f"mass must be a matrix, got shape {m.shape}")
        if min(m.shape) < 2:
            raise DegenerateAlphabet(f"both alphabet sizes must be >= 2, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise OutOfRange("mass contains non-finite entries")
        if np.any(m < 0):
            raise NegativeMass("mass has negative entries")
        if abs(m.sum() - 1.0) > 1e-12:
            raise NotNormalized(f"mass sums to {m.sum()!r}")
        object.__setattr__(self, "mass", _frozen(m))

    @property
    def sizes(self) -> tuple[int, int]:
        return self.mass.shape

    @property
    def pu(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    @property
    def pv(self) -> np.ndarray:
        return self.mass.sum(axis=0)


@dataclass(frozen=True)
class SampleSet:
    """Integer-coded i.i.d. pairs ``(u_i, v_i)``."""

    u: np.ndarray
    v: np.ndarray
    sizes: tuple[int, int]
    seed: Optional[int] = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.int64).ravel()
        v = np.asarray(self.v, dtype=np.int64).ravel()
        if u.shape != v.shape:
            raise DimensionMismatch("u and v must have the same length")
        if u.size < 1:
            raise OutOfRange("a SampleSet needs at least one pair")
        su, sv = (int(s) for s in self.sizes)
        if su < 2 or sv < 2:
            raise DegenerateAlphabet(f"alphabet sizes must be >= 2, got {self.sizes}")
        if u.min() < 0 or u.max() >= su or v.min() < 0 or v.max() >= sv:
            raise OutOfRange("symbol index outside its declared alphabet")
        object.__setattr__(self, "u", _frozen(u))
        object.__setattr__(self, "v", _frozen(v))
        object.__setattr__(self, "sizes", (su, sv))

    def __len__(self) -> int:
        return int(self.u.size)

    @property
    def n(self) -> int:
        return len(self)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.u.tolist(), self.v.tolist()))

    def take(self, idx: np.ndarray) -> "SampleSet":
        return SampleSet(self.u[idx], self.v[idx], self.sizes, self.seed)


@dataclass(frozen=True)
class Histogram2D:
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2:
            raise DimensionMismatch("counts must be a matrix")
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise OutOfRange("counts must be nonnegative integers")
        object.__setattr__(self, "counts", _frozen(c.astype(np.int64)))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def sizes(self) -> tuple[int, int]:
        return self.counts.shape

    def normalized(self) -> JointPMF:
        return JointPMF(self.counts / self.n)


@dataclass(frozen=True)
class Diagnostics:
    iterations: int = 0
    final_objective: float = float("nan")
    restart_index: int = 0
    converged: bool = True


@dataclass(frozen=True)
class Encoder:
    """Row-stochastic conditional ``P(t|x)`` of shape ``|X| x |T|``."""

    rows: np.ndarray
    hp: Any = None  # HyperparameterPoint; kept untyped to avoid a cycle with solvers
    diagnostics: Diagnostics = field(default_factory=Diagnostics)

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=float)
        if r.ndim != 2:
            raise DimensionMismatch("encoder rows must form a matrix")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise OutOfRange("encoder entries must be finite and nonnegative")
        if np.any(np.abs(r.sum(axis=1) - 1.0) > ROW_TOL):
            raise NotNormalized("encoder rows must sum to 1")
        object.__setattr__(self, "rows", _frozen(r))

    @property
    def x_size(self) -> int:
        return self.rows.shape[0]

    @property
    def t_size(self) -> int:
        return self.rows.shape[1]


def identity_encoder(size: int) -> Encoder:
    return Encoder(np.eye(size))


def constant_encoder(x_size: int, row: Sequence[float]) -> Encoder:
    return Encoder(np.tile(np.asarray(row, dtype=float), (x_size, 1)))


# ----------------------------------------------------------------------------
# Constructors
# ----------------------------------------------------------------------------


def joint_from_matrix(mass) -> JointPMF:
    """Validate a probability matrix, renormalizing drift up to 1e-9."""
    m = np.array(mass, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a rectangular matrix, got shape {m.shape}")
    if min(m.shape) < 2:
        raise DegenerateAlphabet(f"both alphabet sizes must be >= 2, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise OutOfRange("matrix has non-finite entries")
    if np.any(m < 0):
        raise NegativeMass("matrix has negative entries")
    total = m.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"total mass {total!r} differs from 1 by more than {NORMALIZATION_TOL}")
    if abs(total - 1.0) > _RENORMALIZE_ABOVE:
        m = m / total
    return JointPMF(m)


def dsbs(p: float) -> JointPMF:
    """Doubly symmetric binary source with crossover probability ``p``."""
    if not 0.0 < p < 0.5:
        raise OutOfRange(f"crossover must lie in (0, 0.5), got {p}")
    return JointPMF(np.array([[(1 - p) / 2, p / 2], [p / 2, (1 - p) / 2]]))


def random_joint(sizes: tuple[int, int], concentration: float, seed: int) -> JointPMF:
    """Draw a PMF from a symmetric Dirichlet over all ``|U|*|V|`` cells."""
    su, sv = sizes
    if su < 2 or sv < 2:
        raise OutOfRange(f"sizes must be >= 2, got {sizes}")
    if not concentration > 0:
        raise OutOfRange("concentration must be positive")
    rng = np.random.default_rng(seed)
    flat = rng.dirichlet(np.full(su * sv, float(concentration)))
    return joint_from_matrix(flat.reshape(su, sv))


def joint_from_histogram(hist: Histogram2D) -> JointPMF:
    return hist.normalized()


# ----------------------------------------------------------------------------
# Sampling and counting
# ----------------------------------------------------------------------------


def sample_pairs(joint: JointPMF, n: int, seed: int) -> SampleSet:
    """Draw ``n`` i.i.d. pairs by inverse CDF over the flattened cells."""
    if n < 1:
        raise OutOfRange("n must be >= 1")
    flat = joint.mass.ravel()
    cdf = np.cumsum(flat)
    rng = np.random.default_rng(seed)
    cell = np.searchsorted(cdf, rng.random(n), side="right")
    # rounding can leave cdf[-1] slightly below 1
    cell = np.minimum(cell, np.flatnonzero(flat)[-1])
    su, sv = joint.sizes
    return SampleSet(cell // sv, cell % sv, (su, sv), seed)


def histogram(samples: SampleSet) -> Histogram2D:
    su, sv = samples.sizes
    counts = np.bincount(samples.u * sv + samples.v, minlength=su * sv)
    return Histogram2D(counts.reshape(su, sv))


def draw_features(x: np.ndarray, encoder: Encoder, seed: int) -> np.ndarray:
    """Draw one ``t_i ~ P(.|x_i)`` per entry of ``x``."""
    rows = encoder.rows
    cdf = np.cumsum(rows, axis=1)
    last = np.array([np.flatnonzero(r)[-1] for r in rows])
    rng = np.random.default_rng(seed)
    u = rng.random(x.size)
    # t = #{j : cdf[x, j] <= u}; one column at a time avoids an n x |T| temporary
    t = np.zeros(x.size, dtype=np.int64)
    for j in range(rows.shape[1] - 1):
        t += u >= cdf[:, j][x]
    return np.minimum(t, last[x])


def rollout(samples: SampleSet, encoder: Encoder, seed: int) -> tuple[SampleSet, SampleSet]:
    """Push each ``x_i`` through the encoder once.

    The same ``t_i`` is used in both returned sets, ``(t_i, y_i)`` and
    ``(x_i, t_i)``, so each is an i.i.d. sample from its joint law.
    """
    if encoder.x_size != samples.sizes[0]:
        raise DimensionMismatch(
            f"encoder has {encoder.x_size} rows but the X alphabet has {samples.sizes[0]} symbols"
        )
    t = draw_features(samples.u, encoder, seed)
    ty = SampleSet(t, samples.v, (encoder.t_size, samples.sizes[1]), seed)
    xt = SampleSet(samples.u, t, (samples.sizes[0], encoder.t_size), seed)
    return ty, xt


# ----------------------------------------------------------------------------
# Exact information measures
# ----------------------------------------------------------------------------


def mi_nats(mass: np.ndarray) -> float:
    """Mutual information of a normalized nonnegative matrix, in nats.

    Zero cells contribute nothing. Shared by the exact and plug-in paths.
    """
    pu = mass.sum(axis=1)
    pv = mass.sum(axis=0)
    nz = mass > 0
    outer = np.outer(pu, pv)
    val = float(np.sum(mass[nz] * (np.log(mass[nz]) - np.log(outer[nz]))))
    return max(val, 0.0)


def entropy_nats(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).ravel()
    nz = p > 0
    return float(-np.sum(p[nz] * np.log(p[nz]))) + 0.0


def exact_mi(joint: JointPMF, unit: str = "nats") -> float:
    return to_unit(mi_nats(joint.mass), unit)


def exact_entropy(pmf, unit: str = "nats") -> float:
    p = np.asarray(pmf, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized("not a probability vector")
    return to_unit(entropy_nats(p), unit)


def exact_joint_entropy(joint: JointPMF, unit: str = "nats") -> float:
    return to_unit(entropy_nats(joint.mass), unit)


def exact_cond_entropy(joint: JointPMF, direction: str = "U|V", unit: str = "nats") -> float:
    """``H(U|V)`` (default) or ``H(V|U)`` computed per conditioning symbol."""
    if direction == "U|V":
        m = joint.mass.T
    elif direction == "V|U":
        m = joint.mass
    else:
        raise OutOfRange("direction must be 'U|V' or 'V|U'")
    total = 0.0
    for row in m:
        w = row.sum()
        if w > 0:
            total += w * entropy_nats(row / w)
    return to_unit(total, unit)


def compose(source: JointPMF, encoder: Encoder) -> tuple[JointPMF, JointPMF]:
    """Return ``(P_TY, P_XT)`` for the source pushed through the encoder."""
    if encoder.x_size != source.sizes[0]:
        raise DimensionMismatch(
            f"encoder has {encoder.x_size} rows but the source X alphabet has {source.sizes[0]}"
        )
    q = encoder.rows
    p_ty = q.T @ source.mass
    p_xt = source.pu[:, None] * q
    return JointPMF(p_ty), JointPMF(p_xt)


def exact_pair(source: JointPMF, encoder: Encoder, unit: str = "nats") -> tuple[float, float]:
    """Exact ``(I(T;Y), I(X;T))`` under the source/encoder product law."""
    p_ty, p_xt = compose(source, encoder)
    return exact_mi(p_ty, unit), exact_mi(p_xt, unit)
