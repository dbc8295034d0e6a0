"""Identification-rate quantities over finite alphabets.

The central object is the identification rate: the least compression rate
at which a query can be answered "no" with certainty whenever the source
and query sequences are farther than D apart. It is computed by
decomposing the nonconvex constraint into finitely many linear pieces
(sign patterns for Hamming distortion, transportation dual vertices in
general) and taking the minimum of the resulting convex programs. The
triangle-inequality compression schemes give two computable upper-bound
curves, plus closed forms and a divergence lower bound for special cases.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    Channel,
    DistortionMatrix,
    LOG2E,
    Pmf,
    RateCurve,
    entropy,
    kl_divergence,
    lower_convex_envelope,
)
from .errors import (
    AbsoluteContinuityViolation,
    BudgetExceeded,
    DimensionMismatch,
    InvalidDistribution,
    TriangleViolation,
)
from .solver import (
    LinearScore,
    SolverReport,
    Status,
    max_score_at_rate,
    min_mi_linear_constraint,
)
from .transport import DualVertex, dual_vertices, rho_bar, rho_bar_hamming

PATTERN_BUDGET = 5_000_000
ASSIGNMENT_BUDGET = 200_000
LC_TIEBREAK_WEIGHT = 1e-4


@dataclass(frozen=True)
class SignPattern:
    """Binary table f(x,u) with no constant and no duplicate columns."""

    table: np.ndarray

    def __init__(self, table):
        arr = np.asarray(table)
        if arr.ndim != 2:
            raise DimensionMismatch(f"pattern must be 2-D, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise InvalidDistribution("pattern entries must be 0 or 1")
        arr = arr.astype(np.int8)
        m = arr.shape[0]
        cols = arr.T
        for u, col in enumerate(cols):
            s = int(col.sum())
            if s == 0 or s == m:
                raise InvalidDistribution(f"column {u} is constant")
        masks = [int(np.packbits(col, bitorder="little").view(np.uint8)[0])
                 if m <= 8 else tuple(col) for col in cols]
        if len(set(masks)) != len(masks):
            raise InvalidDistribution("duplicate pattern columns")
        arr.flags.writeable = False
        object.__setattr__(self, "table", arr)

    @classmethod
    def _trusted(cls, table: np.ndarray) -> "SignPattern":
        # Fast path for the canonical enumerator, whose columns are
        # distinct non-constant bitmasks by construction.
        self = object.__new__(cls)
        table.flags.writeable = False
        object.__setattr__(self, "table", table)
        return self

    @property
    def shape(self):
        return self.table.shape


@dataclass(frozen=True)
class IdRateResult:
    rate: float
    achieving_channel: Channel | None
    winning_pattern: object | None
    per_pattern_values: tuple
    u_cardinality_used: int
    winning_index: int


def enumerate_sign_patterns(x_size: int, u_size: int):
    """Stream the canonical sign patterns: u distinct non-constant columns.

    Columns are indexed by their row bitmask (bit x of the mask is f(x,u))
    and emitted in ascending-mask combinations, so the stream order is
    deterministic and reproducible.
    """
    if x_size < 2:
        raise DimensionMismatch(f"x_size must be >= 2, got {x_size}")
    if u_size < 1:
        raise DimensionMismatch(f"u_size must be >= 1, got {u_size}")
    n_masks = (1 << x_size) - 2
    count = math.comb(n_masks, u_size) if u_size <= n_masks else 0
    if count > PATTERN_BUDGET:
        raise BudgetExceeded(
            f"{count} sign patterns for x_size={x_size}, u_size={u_size} "
            f"exceeds budget {PATTERN_BUDGET}"
        )
    # columns[b-1] is the column for mask b: bit x of b is f(x, u)
    columns = (
        (np.arange(1, n_masks + 1)[:, None] >> np.arange(x_size)[None, :]) & 1
    ).astype(np.int8)
    for masks in itertools.combinations(range(n_masks), u_size):
        yield SignPattern._trusted(np.ascontiguousarray(columns[list(masks)].T))


def linear_score_of_pattern(f: SignPattern, px: Pmf, py: Pmf) -> LinearScore:
    """Per-(x,u) score of a sign pattern, threshold left at zero.

    c(x,u) = (-1)^{f(x,u)} - sum_x' (-1)^{f(x',u)} py(x'). The induced
    channel functional sum px(x) P(u|x) c(x,u) absorbs the marginal term
    P_U(u) of the two-part expression through P_U(u) = sum_x px(x) P(u|x).
    Callers set the threshold (2d for the identification constraint).
    """
    m, _ = f.shape
    if px.alphabet_size != m or py.alphabet_size != m:
        raise DimensionMismatch(
            f"pattern has {m} rows, sources have {px.alphabet_size} and "
            f"{py.alphabet_size}"
        )
    signs = 1.0 - 2.0 * f.table.astype(np.float64)
    c = signs - (py.probs @ signs)[None, :]
    return LinearScore(c, 0.0)


def _solve_scores(px, scores, u_size, tol, threads):
    if threads > 1 and len(scores) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(
                pool.map(
                    lambda s: min_mi_linear_constraint(px, s, u_size, tol), scores
                )
            )
    return [min_mi_linear_constraint(px, s, u_size, tol) for s in scores]


def _reduce_min(reports, patterns, u_eff):
    values = tuple(r.optimal_rate for r in reports)
    finite = [i for i, v in enumerate(values) if math.isfinite(v)]
    if not finite:
        return IdRateResult(
            rate=math.inf,
            achieving_channel=None,
            winning_pattern=None,
            per_pattern_values=values,
            u_cardinality_used=u_eff,
            winning_index=-1,
        )
    win = min(finite, key=lambda i: (values[i], i))
    return IdRateResult(
        rate=values[win],
        achieving_channel=reports[win].channel,
        winning_pattern=patterns[win],
        per_pattern_values=values,
        u_cardinality_used=u_eff,
        winning_index=win,
    )


def r_id_hamming(
    px: Pmf, py: Pmf, d: float, u_size: int, tol: float, threads: int = 1
) -> IdRateResult:
    """Identification rate under Hamming distortion.

    Minimum over canonical sign patterns of the linearly constrained
    minimal mutual information, with constraint threshold 2d. A pattern
    whose subproblem is infeasible contributes +inf; if every pattern is
    infeasible the rate itself is +inf (infimum over an empty set).
    """
    m = px.alphabet_size
    if py.alphabet_size != m:
        raise DimensionMismatch(
            f"px has {m} letters, py has {py.alphabet_size}"
        )
    if not (-1e-12 <= d <= 1.0 + 1e-12):
        raise InvalidDistribution(f"Hamming distortion level {d!r} outside [0, 1]")
    if u_size not in (m, m + 1):
        raise DimensionMismatch(
            f"u_size must be |X|={m} or |X|+1={m + 1}, got {u_size}"
        )
    # More than 2^|X|-2 columns cannot all be distinct and non-constant;
    # extra symbols merge into existing ones without changing the optimum.
    u_eff = min(u_size, (1 << m) - 2)
    patterns = list(enumerate_sign_patterns(m, u_eff))
    scores = [
        LinearScore(linear_score_of_pattern(f, px, py).c, 2.0 * d)
        for f in patterns
    ]
    reports = _solve_scores(px, scores, u_eff, tol, threads)
    return _reduce_min(reports, patterns, u_eff)


def r_id_general(
    px: Pmf,
    py: Pmf,
    rho: DistortionMatrix,
    d: float,
    u_size: int,
    tol: float,
    threads: int = 1,
    full_enumeration: bool = False,
) -> IdRateResult:
    """Identification rate for an arbitrary finite distortion measure.

    The distortion ball constraint rho_bar(P_{X|U=u}, py) >= d is linear
    in the channel once a maximizing dual vertex is fixed per u-symbol, so
    the rate is the minimum over vertex assignments of the constrained
    program with threshold d. Assignments are deduplicated (combinations
    without repetition); full_enumeration solves every function from
    u-symbols to vertices instead, as a cross-check on the deduplication.
    """
    m = px.alphabet_size
    if rho.shape[0] != m or py.alphabet_size != rho.shape[1]:
        raise DimensionMismatch(
            f"rho is {rho.shape}, px has {m} letters, py has "
            f"{py.alphabet_size}"
        )
    if u_size < 1:
        raise DimensionMismatch(f"u_size must be >= 1, got {u_size}")
    if not (-1e-12 <= d <= rho.rho_max + 1e-12):
        raise InvalidDistribution(
            f"distortion level {d!r} outside [0, rho_max={rho.rho_max}]"
        )
    verts = dual_vertices(rho, py)
    nv = len(verts)
    if full_enumeration:
        u_eff = u_size
        n_assign = nv**u_size
        if n_assign > ASSIGNMENT_BUDGET:
            raise BudgetExceeded(
                f"{n_assign} vertex functions exceeds budget {ASSIGNMENT_BUDGET}"
            )
        assignments = list(itertools.product(range(nv), repeat=u_size))
    else:
        u_eff = min(u_size, nv)
        n_assign = math.comb(nv, u_eff)
        if n_assign > ASSIGNMENT_BUDGET:
            raise BudgetExceeded(
                f"{n_assign} vertex assignments exceeds budget "
                f"{ASSIGNMENT_BUDGET}"
            )
        assignments = list(itertools.combinations(range(nv), u_eff))
    pieces = np.stack([v.alpha + v.offset_on_py for v in verts])
    scores = [
        LinearScore(pieces[list(a)].T.copy(), d) for a in assignments
    ]
    reports = _solve_scores(px, scores, u_eff, tol, threads)
    chosen = [tuple(verts[i] for i in a) for a in assignments]
    return _reduce_min(reports, chosen, u_eff)


def r_id_curve(
    px: Pmf,
    py: Pmf,
    rho: DistortionMatrix,
    d_grid,
    tol: float,
    threads: int = 1,
) -> RateCurve:
    """Identification-rate curve on a distortion grid.

    Solves at u-cardinality |X| per grid point, then takes the lower
    convex envelope (extra u-symbols only ever convexify the curve). The
    returned curve's meta carries the pre-envelope values and a
    spot-check column computed at cardinality |X|+1.
    """
    d_grid = np.asarray(d_grid, dtype=np.float64)
    m = px.alphabet_size

    def solve(d, u):
        if rho.is_hamming:
            return r_id_hamming(px, py, float(d), u, tol, threads=threads)
        return r_id_general(px, py, rho, float(d), u, tol, threads=threads)

    r_pre = []
    r_spot = []
    for d in d_grid:
        res = solve(d, m)
        if not math.isfinite(res.rate):
            raise InvalidDistribution(
                f"distortion level {float(d)!r} exceeds the maximal "
                f"identifiable distortion for these sources"
            )
        r_pre.append(res.rate)
        r_spot.append(solve(d, m + 1).rate)
    base = RateCurve(
        d_grid,
        np.asarray(r_pre),
        label="r_id",
        meta=(
            ("pre_envelope_r", tuple(r_pre)),
            ("spot_check_u", m + 1),
            ("spot_check_r", tuple(r_spot)),
        ),
    )
    env = lower_convex_envelope(base)
    return RateCurve(env.d, env.r, label="r_id", meta=base.meta)


def _check_triangle(rho: DistortionMatrix) -> None:
    if rho.shape[0] != rho.shape[1]:
        raise DimensionMismatch(f"distortion matrix {rho.shape} is not square")
    if not rho.satisfies_triangle:
        raise TriangleViolation(
            "triangle-scheme rates need rho(a,c) <= rho(a,b) + rho(b,c)"
        )


def _query_side_distortion(py: Pmf, rho: DistortionMatrix) -> np.ndarray:
    """g(xhat) = E_y rho(xhat, y): mean distortion of a reconstruction to Y."""
    return rho.rho @ py.probs


def r_id_tc(
    px: Pmf, py: Pmf, rho: DistortionMatrix, d: float, tol: float
) -> SolverReport:
    """Rate of the type-covering triangle scheme at distortion level d.

    min I(X;Xhat) subject to E[rho(Xhat,Y)] - E[rho(X,Xhat)] >= d; one
    linearly constrained program, no pattern minimum.
    """
    _check_triangle(rho)
    m = px.alphabet_size
    if rho.shape[0] != m or py.alphabet_size != m:
        raise DimensionMismatch("alphabet sizes do not match rho")
    g = _query_side_distortion(py, rho)
    score = LinearScore(g[None, :] - rho.rho, d)
    return min_mi_linear_constraint(px, score, rho.shape[1], tol)


def d_id_tc(px: Pmf, py: Pmf, rho: DistortionMatrix, r: float, tol: float) -> float:
    """Largest distortion level the type-covering scheme handles at rate r."""
    _check_triangle(rho)
    m = px.alphabet_size
    if rho.shape[0] != m or py.alphabet_size != m:
        raise DimensionMismatch("alphabet sizes do not match rho")
    if not (-1e-12 <= r <= math.log2(m) + 1e-9):
        raise InvalidDistribution(f"rate {r!r} outside [0, log2 |X|]")
    g = _query_side_distortion(py, rho)
    theta, _ = max_score_at_rate(px, g[None, :] - rho.rho, r, tol)
    return theta


def d_id_lc(px: Pmf, py: Pmf, rho: DistortionMatrix, r: float, tol: float) -> float:
    """Largest distortion level the lossy-compression scheme handles at rate r.

    E[rho(Xhat,Y)] - D(r), where Xhat is the reconstruction of a D(r)
    achiever; among achievers, one maximizing E[rho(Xhat,Y)] is selected
    (approximately, by a small secondary weight on that objective).
    Compression of X uses the transposed distortion rho'(x,xhat) =
    rho(xhat,x), which matters only for asymmetric rho.
    """
    _check_triangle(rho)
    m = px.alphabet_size
    if rho.shape[0] != m or py.alphabet_size != m:
        raise DimensionMismatch("alphabet sizes do not match rho")
    if not (-1e-12 <= r <= math.log2(m) + 1e-9):
        raise InvalidDistribution(f"rate {r!r} outside [0, log2 |X|]")
    rho_prime = rho.rho.T
    g = _query_side_distortion(py, rho)

    # Unperturbed distortion-rate value.
    theta, _ = max_score_at_rate(px, -rho_prime, r, tol)
    d_of_r = -theta
    # Tie-broken achiever: nudge the objective toward large E[rho(Xhat,Y)].
    c2 = -rho_prime + LC_TIEBREAK_WEIGHT * g[None, :]
    _, report = max_score_at_rate(px, c2, r, tol)
    marginal = px.probs @ report.channel.cond
    return float(marginal @ g) - d_of_r


def r_id_lc(px: Pmf, py: Pmf, rho: DistortionMatrix, d: float, tol: float) -> float:
    """Rate of the lossy-compression scheme: least r with d_id_lc(r) >= d."""
    _check_triangle(rho)
    m = px.alphabet_size
    hi = math.log2(m)
    if d_id_lc(px, py, rho, 0.0, tol) >= d:
        return 0.0
    if d_id_lc(px, py, rho, hi, tol) < d - 1e-12:
        return math.inf
    lo = 0.0
    while hi - lo > max(tol * 0.25, 1e-12):
        mid = 0.5 * (lo + hi)
        if d_id_lc(px, py, rho, mid, tol) >= d:
            hi = mid
        else:
            lo = mid
    return hi


def hamming_lower_bound(px: Pmf, py: Pmf, d: float) -> float:
    """Divergence lower bound on the Hamming identification rate.

    max(0, 2 d^2 log2(e) - KL(px || py)) in bits. When px is not
    absolutely continuous w.r.t. py the divergence is infinite, so the
    bound is vacuous; that case returns 0 and warns.
    """
    if px.alphabet_size != py.alphabet_size:
        raise DimensionMismatch(
            f"px has {px.alphabet_size} letters, py has {py.alphabet_size}"
        )
    if not (-1e-12 <= d <= 1.0 + 1e-12):
        raise InvalidDistribution(f"Hamming distortion level {d!r} outside [0, 1]")
    try:
        kl = kl_divergence(px, py)
    except AbsoluteContinuityViolation:
        warnings.warn(
            "px not absolutely continuous w.r.t. py; divergence bound is "
            "vacuous, reporting 0",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.0
    return max(0.0, 2.0 * d * d * LOG2E - kl)


def closed_form_binary_symmetric(p: float, d: float) -> float:
    """Identification rate for X ~ Ber(p), Y ~ Ber(1/2), Hamming distortion.

    Equals the binary rate-distortion function evaluated at 1/2 - d:
    h2(p) - h2(1/2 - d) when 1/2 - d < min(p, 1-p), else 0.
    """
    if not (0.0 <= p <= 1.0):
        raise InvalidDistribution(f"Bernoulli parameter {p!r} outside [0, 1]")
    if not (0.0 <= d <= 1.0):
        raise InvalidDistribution(f"distortion level {d!r} outside [0, 1]")

    def h2(t):
        if t <= 0.0 or t >= 1.0:
            return 0.0
        return -t * math.log2(t) - (1.0 - t) * math.log2(1.0 - t)

    delta = 0.5 - d
    hp = h2(p)
    if delta <= 0.0:
        return hp
    if delta >= min(p, 1.0 - p):
        return 0.0
    return min(max(hp - h2(delta), 0.0), hp)
