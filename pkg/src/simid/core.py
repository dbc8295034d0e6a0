"""Probability-simplex types, entropies/divergences, and the lower convex
envelope primitive shared by every rate computation.

All rates are in bits (base-2 logs). Probabilities below ZERO_TOL are treated
as exact zeros inside log terms so that 0*log(0) = 0 without -inf surprises.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AbsoluteContinuityViolation,
    DimensionMismatch,
    InvalidDistribution,
    TooFewPoints,
)

ZERO_TOL = 1e-15
PMF_SUM_TOL = 1e-12
LOG2E = float(np.log2(np.e))


def _as_float_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidDistribution(f"expected a 1-D vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Pmf:
    """Probability vector over a finite alphabet."""

    probs: np.ndarray

    def __init__(self, probs):
        arr = _as_float_vector(probs).copy()
        if arr.size < 1:
            raise InvalidDistribution("empty probability vector")
        if not np.all(np.isfinite(arr)):
            raise InvalidDistribution("non-finite probability entries")
        if np.any(arr < 0):
            raise InvalidDistribution(f"negative probability entry in {arr}")
        total = float(arr.sum())
        if abs(total - 1.0) > PMF_SUM_TOL:
            raise InvalidDistribution(f"probabilities sum to {total!r}, not 1")
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    @property
    def alphabet_size(self) -> int:
        return int(self.probs.size)

    def __len__(self) -> int:
        return self.alphabet_size

    def support(self) -> np.ndarray:
        """Indices with mass above ZERO_TOL."""
        return np.flatnonzero(self.probs > ZERO_TOL)


@dataclass(frozen=True)
class DistortionMatrix:
    """Per-letter distortion rho(x, y) >= 0 with cached structural flags."""

    rho: np.ndarray
    rho_max: float = field(init=False)
    is_hamming: bool = field(init=False)
    is_symmetric: bool = field(init=False)
    satisfies_triangle: bool = field(init=False)

    def __init__(self, rho):
        arr = np.asarray(rho, dtype=np.float64).copy()
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionMismatch(f"distortion matrix must be 2-D, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidDistribution("non-finite distortion entries")
        if np.any(arr < 0):
            raise InvalidDistribution("negative distortion entries")
        arr.flags.writeable = False
        object.__setattr__(self, "rho", arr)
        object.__setattr__(self, "rho_max", float(arr.max()))
        square = arr.shape[0] == arr.shape[1]
        hamming = False
        symmetric = False
        triangle = False
        if square:
            eye = np.eye(arr.shape[0])
            hamming = bool(np.array_equal(arr, 1.0 - eye))
            symmetric = bool(np.allclose(arr, arr.T, atol=1e-12, rtol=0.0))
            # rho(x,z) <= min_y rho(x,y) + rho(y,z), checked over all triples
            through = arr[:, :, None] + arr[None, :, :]
            triangle = bool(np.all(arr <= through.min(axis=1) + 1e-12))
        object.__setattr__(self, "is_hamming", hamming)
        object.__setattr__(self, "is_symmetric", symmetric)
        object.__setattr__(self, "satisfies_triangle", triangle)

    @classmethod
    def hamming(cls, size: int) -> "DistortionMatrix":
        return cls(1.0 - np.eye(size))

    @property
    def shape(self) -> tuple:
        return self.rho.shape

    def transpose(self) -> "DistortionMatrix":
        return DistortionMatrix(self.rho.T)


@dataclass(frozen=True)
class Channel:
    """Conditional distribution: one pmf over the output per input letter."""

    cond: np.ndarray

    def __init__(self, cond):
        arr = np.asarray(cond, dtype=np.float64).copy()
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionMismatch(f"channel must be a 2-D matrix, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidDistribution("non-finite channel entries")
        if np.any(arr < 0):
            raise InvalidDistribution("negative channel entries")
        row_sums = arr.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > PMF_SUM_TOL):
            bad = int(np.argmax(np.abs(row_sums - 1.0)))
            raise InvalidDistribution(f"channel row {bad} sums to {row_sums[bad]!r}")
        arr.flags.writeable = False
        object.__setattr__(self, "cond", arr)

    @property
    def input_size(self) -> int:
        return int(self.cond.shape[0])

    @property
    def output_size(self) -> int:
        return int(self.cond.shape[1])

    @classmethod
    def identity(cls, size: int) -> "Channel":
        return cls(np.eye(size))

    @classmethod
    def constant(cls, input_size: int, output_size: int, u: int) -> "Channel":
        cond = np.zeros((input_size, output_size))
        cond[:, u] = 1.0
        return cls(cond)

    def output_marginal(self, px: Pmf) -> Pmf:
        if px.alphabet_size != self.input_size:
            raise DimensionMismatch("source size does not match channel input")
        q = px.probs @ self.cond
        return Pmf(q / q.sum())


@dataclass(frozen=True)
class RateCurve:
    """Sampled (D, R) points, D strictly increasing, with provenance meta."""

    d: np.ndarray
    r: np.ndarray
    label: str = ""
    meta: tuple = ()

    def __init__(self, d, r, label: str = "", meta: tuple = ()):
        d_arr = _as_float_vector(d).copy()
        r_arr = _as_float_vector(r).copy()
        if d_arr.size != r_arr.size:
            raise DimensionMismatch("D and R grids differ in length")
        if d_arr.size >= 2 and np.any(np.diff(d_arr) <= 0):
            raise InvalidDistribution("D grid must be strictly increasing")
        if np.any(r_arr < -1e-9) or not np.all(np.isfinite(r_arr)):
            raise InvalidDistribution("rates must be finite and nonnegative")
        d_arr.flags.writeable = False
        r_arr.flags.writeable = False
        object.__setattr__(self, "d", d_arr)
        object.__setattr__(self, "r", r_arr)
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "meta", tuple(meta))

    @property
    def points(self) -> list:
        return list(zip(self.d.tolist(), self.r.tolist()))

    def __len__(self) -> int:
        return int(self.d.size)


def entropy(p: Pmf) -> float:
    """H(p) in bits, with 0*log0 = 0."""
    probs = p.probs
    mask = probs > ZERO_TOL
    vals = probs[mask]
    h = float(-(vals * np.log2(vals)).sum())
    return max(h, 0.0)


def mutual_information(px: Pmf, ch: Channel) -> float:
    """I(X;U) in bits for source px through channel ch."""
    if px.alphabet_size != ch.input_size:
        raise DimensionMismatch("source size does not match channel input")
    return mutual_information_raw(px.probs, ch.cond)


def mutual_information_raw(px: np.ndarray, cond: np.ndarray) -> float:
    """I(X;U) from raw arrays (no construction overhead); same zero rules."""
    q = px @ cond
    joint_w = px[:, None] * cond
    mask = joint_w > ZERO_TOL
    safe_cond = np.where(mask, cond, 1.0)
    safe_q = np.maximum(q, ZERO_TOL * ZERO_TOL)[None, :]
    terms = joint_w * (np.log2(safe_cond) - np.log2(safe_q))
    return max(float(terms[mask].sum()), 0.0)


def kl_divergence(p: Pmf, q: Pmf) -> float:
    """D(p||q) in bits; raises if p has mass where q has (exact) zero."""
    if p.alphabet_size != q.alphabet_size:
        raise DimensionMismatch("KL operands differ in size")
    pv, qv = p.probs, q.probs
    mask = pv > ZERO_TOL
    if np.any(qv[mask] <= ZERO_TOL):
        bad = int(np.flatnonzero(mask & (qv <= ZERO_TOL))[0])
        raise AbsoluteContinuityViolation(
            f"p({bad}) = {pv[bad]!r} > 0 but q({bad}) = {qv[bad]!r}"
        )
    vals = pv[mask] * (np.log2(pv[mask]) - np.log2(qv[mask]))
    return max(float(vals.sum()), 0.0)


def envelope_values(d: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Lower convex envelope of the points (d_i, r_i), re-sampled on d.

    Builds the lower convex hull with a monotone chain, then interpolates
    the hull chords back onto the original grid.
    """
    n = d.size
    if n < 2:
        raise TooFewPoints("envelope needs at least two points")
    hull_d = [float(d[0])]
    hull_r = [float(r[0])]
    for i in range(1, n):
        di, ri = float(d[i]), float(r[i])
        while len(hull_d) > 1:
            cross = (hull_d[-1] - hull_d[-2]) * (ri - hull_r[-2]) - (
                di - hull_d[-2]
            ) * (hull_r[-1] - hull_r[-2])
            if cross <= 0.0:
                hull_d.pop()
                hull_r.pop()
            else:
                break
        hull_d.append(di)
        hull_r.append(ri)
    out = np.interp(d, hull_d, hull_r)
    return np.minimum(out, r)


def lower_convex_envelope(curve: RateCurve) -> RateCurve:
    """Greatest convex minorant of the curve, on the same D grid."""
    env = envelope_values(curve.d, curve.r)
    return RateCurve(curve.d, env, label=curve.label, meta=curve.meta)
