"""The single convex-subproblem engine.

Every rate quantity in this package reduces to

    minimize I(X;U)  over channels P_{U|X}
    subject to sum_{x,u} P_X(x) P_{U|X}(u|x) c(x,u) >= threshold

for some score table c. The program is solved in Lagrangian form: for fixed
lambda >= 0 the inner minimizer has the closed exponential-tilting form of
classical Blahut-Arimoto, and the outer loop bisects on lambda to activate
the constraint. A brute-force channel-grid oracle is provided for validation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .backend import ba_iterate
from .core import Channel, DistortionMatrix, Pmf, ZERO_TOL, mutual_information_raw
from .errors import BadTolerance, DimensionMismatch, InvalidDistribution, TooLarge

LAMBDA_CAP = 2.0**60
INNER_MAX_ITER = 100_000
MAX_OUTER_EVALS = 200
GRID_BUDGET = 300_000_000


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    CONSTRAINT_INACTIVE = "ConstraintInactive"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class LinearScore:
    """Score table c(x,u) and threshold for the linear channel constraint."""

    c: np.ndarray
    threshold: float

    def __init__(self, c, threshold: float):
        arr = np.asarray(c, dtype=np.float64).copy()
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionMismatch(f"score table must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidDistribution("non-finite score entries")
        if not math.isfinite(threshold):
            raise InvalidDistribution("non-finite threshold")
        arr.flags.writeable = False
        object.__setattr__(self, "c", arr)
        object.__setattr__(self, "threshold", float(threshold))


@dataclass(frozen=True)
class SolverReport:
    status: Status
    optimal_rate: float
    channel: Channel | None
    u_marginal: np.ndarray | None
    lam: float
    iterations: int
    kkt_residual: float
    constraint_slack: float
    score_value: float
    threshold: float
    tol: float


def _check_tol(tol: float) -> None:
    if not (0.0 < tol <= 1e-2):
        raise BadTolerance(f"tol must lie in (0, 1e-2], got {tol!r}")


def _tilt_matrix(c: np.ndarray, lam: float) -> np.ndarray:
    e = lam * c
    e -= e.max(axis=1, keepdims=True)
    return np.exp2(e)


def _eval_lambda(px: np.ndarray, c: np.ndarray, lam: float, tol_q: float):
    """Solve the fixed-lambda inner problem from the uniform start."""
    k = c.shape[1]
    tilt = _tilt_matrix(c, lam)
    q = np.full(k, 1.0 / k)
    iters = int(ba_iterate(px, tilt, q, tol_q, INNER_MAX_ITER))
    cond = q[None, :] * tilt
    cond /= cond.sum(axis=1, keepdims=True)
    score = float((px[:, None] * cond * c).sum())
    rate = mutual_information_raw(px, cond)
    return cond, score, rate, iters


def _kkt_residual(px: np.ndarray, c: np.ndarray, cond: np.ndarray, lam: float) -> float:
    """Sup-norm distance of the channel from one alternating-update step."""
    q = px @ cond
    tilt = _tilt_matrix(c, lam)
    nxt = q[None, :] * tilt
    norm = nxt.sum(axis=1, keepdims=True)
    nxt /= np.where(norm > 0, norm, 1.0)
    return float(np.max(np.abs(nxt - cond)))


def _embed_rows(cond_active: np.ndarray, keep: np.ndarray, m_full: int) -> np.ndarray:
    """Reinstate dropped zero-probability letters with uniform rows."""
    k = cond_active.shape[1]
    full = np.full((m_full, k), 1.0 / k)
    full[keep] = cond_active
    return full


def min_mi_linear_constraint(
    px: Pmf, score: LinearScore, u_size: int, tol: float
) -> SolverReport:
    """Minimize I(X;U) subject to E[c(X,U)] >= threshold.

    Returns a report whose status is Optimal (constraint active to
    tolerance), ConstraintInactive (a constant-U channel already satisfies
    it, rate 0), or Infeasible (no channel can reach the threshold).
    """
    _check_tol(tol)
    if u_size < 1:
        raise DimensionMismatch(f"u_size must be >= 1, got {u_size}")
    c_full = score.c
    if px.alphabet_size != c_full.shape[0]:
        raise DimensionMismatch(
            f"score has {c_full.shape[0]} rows, source has {px.alphabet_size}"
        )
    if c_full.shape[1] != u_size:
        raise DimensionMismatch(
            f"score has {c_full.shape[1]} columns, u_size is {u_size}"
        )
    threshold = score.threshold
    m_full = px.alphabet_size

    keep = px.probs > ZERO_TOL
    p = px.probs[keep]
    p = p / p.sum()
    c = np.ascontiguousarray(c_full[keep])
    k = u_size

    # Best zero-rate channel is a constant u; best possible score is the
    # pointwise-argmax deterministic channel.
    col_scores = p @ c
    u0 = int(np.argmax(col_scores))
    s0 = float(col_scores[u0])
    s_max = float((p * c.max(axis=1)).sum())

    if threshold <= s0:
        cond = _embed_rows(
            np.tile(np.eye(k)[u0], (p.size, 1)), keep, m_full
        )
        return SolverReport(
            status=Status.CONSTRAINT_INACTIVE,
            optimal_rate=0.0,
            channel=Channel(cond),
            u_marginal=np.eye(k)[u0].copy(),
            lam=0.0,
            iterations=0,
            kkt_residual=0.0,
            constraint_slack=s0 - threshold,
            score_value=s0,
            threshold=threshold,
            tol=tol,
        )
    if s_max < threshold:
        return SolverReport(
            status=Status.INFEASIBLE,
            optimal_rate=math.inf,
            channel=None,
            u_marginal=None,
            lam=math.inf,
            iterations=0,
            kkt_residual=math.nan,
            constraint_slack=s_max - threshold,
            score_value=s_max,
            threshold=threshold,
            tol=tol,
        )

    tol_q = tol / 10.0
    slack_floor = 1e-12 * max(1.0, abs(s_max) + abs(s0))
    total_iters = 0

    # Infeasible-side start: lambda = 0 gives the uniform constant channel.
    lam_lo = 0.0
    cond_lo = np.full((p.size, k), 1.0 / k)
    score_lo = float((p[:, None] * cond_lo * c).sum())

    lam_hi = 1.0
    cond_hi = score_hi = rate_hi = None
    while True:
        cond_hi, score_hi, rate_hi, iters = _eval_lambda(p, c, lam_hi, tol_q)
        total_iters += iters
        if score_hi >= threshold:
            break
        lam_lo, cond_lo, score_lo = lam_hi, cond_hi, score_hi
        lam_hi *= 2.0
        if lam_hi > LAMBDA_CAP:
            # Threshold is at the analytic feasibility boundary; the
            # pointwise-argmax deterministic channel attains it.
            cond_det = np.eye(k)[np.argmax(c, axis=1)]
            score_det = float((p[:, None] * cond_det * c).sum())
            rate_det = mutual_information_raw(p, cond_det)
            cond = _embed_rows(cond_det, keep, m_full)
            return SolverReport(
                status=Status.OPTIMAL,
                optimal_rate=rate_det,
                channel=Channel(cond),
                u_marginal=p @ cond_det,
                lam=LAMBDA_CAP,
                iterations=total_iters,
                kkt_residual=_kkt_residual(p, c, cond_det, LAMBDA_CAP),
                constraint_slack=score_det - threshold,
                score_value=score_det,
                threshold=threshold,
                tol=tol,
            )

    # Bisect lambda until the bracket is tight (not merely until the slack
    # window is reached): at steep parts of R(theta) a loose slack costs
    # slope * slack in rate. Once tight, mix the bracket channels to land
    # on the threshold exactly; across a kink the two endpoints straddle a
    # linear segment of R(theta) and the mixture is Lagrangian-optimal at
    # the shared critical slope, so this step is exact there too.
    evals = 0
    mixed = False
    while score_hi - threshold > slack_floor:
        bracket_collapsed = (lam_hi - lam_lo) <= max(1e-12, 1e-9 * lam_hi)
        if bracket_collapsed or evals >= MAX_OUTER_EVALS:
            if score_hi - score_lo > 0.0:
                t = (threshold - score_lo) / (score_hi - score_lo)
                t = min(max(t, 0.0), 1.0)
                cond_hi = (1.0 - t) * cond_lo + t * cond_hi
                score_hi = float((p[:, None] * cond_hi * c).sum())
                rate_hi = mutual_information_raw(p, cond_hi)
                lam_hi = 0.5 * (lam_lo + lam_hi)
                mixed = True
            break
        lam_mid = 0.5 * (lam_lo + lam_hi)
        cond_mid, score_mid, rate_mid, iters = _eval_lambda(p, c, lam_mid, tol_q)
        total_iters += iters
        evals += 1
        if score_mid >= threshold:
            lam_hi, cond_hi, score_hi, rate_hi = lam_mid, cond_mid, score_mid, rate_mid
        else:
            lam_lo, cond_lo, score_lo = lam_mid, cond_mid, score_mid

    kkt = _kkt_residual(p, c, cond_hi, lam_hi)
    if mixed:
        # The mixture is a fixed point only in the bracket-width limit;
        # report the residual honestly but do not let collapse noise mask it.
        kkt = min(kkt, float(np.max(np.abs(cond_hi - cond_lo))))
    cond = _embed_rows(cond_hi, keep, m_full)
    return SolverReport(
        status=Status.OPTIMAL,
        optimal_rate=rate_hi,
        channel=Channel(cond),
        u_marginal=p @ cond_hi,
        lam=lam_hi,
        iterations=total_iters,
        kkt_residual=kkt,
        constraint_slack=score_hi - threshold,
        score_value=score_hi,
        threshold=threshold,
        tol=tol,
    )


def max_score_at_rate(
    px: Pmf, c: np.ndarray, r: float, tol: float
) -> tuple[float, SolverReport]:
    """Largest threshold theta with min-MI(theta) <= r, by bisection.

    This is the monotone inversion shared by distortion_rate and the
    triangle-scheme distortion curves.
    """
    _check_tol(tol)
    if r < -1e-12:
        raise InvalidDistribution(f"rate must be nonnegative, got {r!r}")
    r = max(r, 0.0)
    keep = px.probs > ZERO_TOL
    p = px.probs[keep] / px.probs[keep].sum()
    ca = c[keep]
    s0 = float((p @ ca).max())
    s_max = float((p * ca.max(axis=1)).sum())
    u_size = c.shape[1]

    report_max = min_mi_linear_constraint(px, LinearScore(c, s_max), u_size, tol)
    if report_max.optimal_rate <= r:
        return s_max, report_max

    lo = s0
    report_lo = min_mi_linear_constraint(px, LinearScore(c, lo), u_size, tol)
    hi = s_max
    # Invariant: min-MI(lo) <= r < min-MI(hi).
    while hi - lo > max(tol * 0.25, 1e-12) * max(1.0, abs(s_max) + abs(s0)):
        mid = 0.5 * (lo + hi)
        report_mid = min_mi_linear_constraint(px, LinearScore(c, mid), u_size, tol)
        if report_mid.optimal_rate <= r:
            lo, report_lo = mid, report_mid
        else:
            hi = mid
    return lo, report_lo


def rate_distortion(
    px: Pmf, rho: DistortionMatrix, d: float, tol: float
) -> SolverReport:
    """Classical R(D) in bits: min I(X;Xhat) s.t. E[rho(X,Xhat)] <= d."""
    if px.alphabet_size != rho.shape[0]:
        raise DimensionMismatch("source size does not match distortion rows")
    if not (-1e-12 <= d <= rho.rho_max + 1e-12):
        raise InvalidDistribution(
            f"distortion {d!r} outside [0, rho_max={rho.rho_max}]"
        )
    return min_mi_linear_constraint(
        px, LinearScore(-rho.rho, -d), rho.shape[1], tol
    )


def distortion_rate(
    px: Pmf, rho: DistortionMatrix, r: float, tol: float
) -> tuple[float, Channel]:
    """Classical D(R): monotone inversion of rate_distortion via bisection."""
    if px.alphabet_size != rho.shape[0]:
        raise DimensionMismatch("source size does not match distortion rows")
    if not (-1e-12 <= r <= math.log2(px.alphabet_size) + 1e-9):
        raise InvalidDistribution(f"rate {r!r} outside [0, log2 |X|]")
    if r <= 0.0:
        col = px.probs @ rho.rho
        u0 = int(np.argmin(col))
        ch = Channel.constant(px.alphabet_size, rho.shape[1], u0)
        return float(col[u0]), ch
    theta, report = max_score_at_rate(px, -rho.rho, r, tol)
    return -theta, report.channel


def _simplex_grid(k: int, ticks: int) -> np.ndarray:
    """All pmfs over k letters with entries on the 1/ticks lattice."""
    if k == 1:
        return np.ones((1, 1))
    rows = []
    if k == 2:
        for i in range(ticks + 1):
            rows.append((i, ticks - i))
    else:
        for i in range(ticks + 1):
            for j in range(ticks + 1 - i):
                rows.append((i, j, ticks - i - j))
    return np.asarray(rows, dtype=np.float64) / float(ticks)


def _h_of(q: np.ndarray) -> np.ndarray:
    logs = np.where(q > ZERO_TOL, np.log2(np.maximum(q, ZERO_TOL)), 0.0)
    return -(q * logs).sum(axis=1)


def _scan_grid(p, c, threshold, row_sets):
    """Minimum MI over channels whose row for letter x comes from row_sets[x].

    Returns (best value, best channel rows or None). Letters beyond the
    first two are vectorized; the scan is a plain exhaustive loop.
    """
    m = len(row_sets)
    hs = [_h_of(r) for r in row_sets]
    cols = [r @ c.T for r in row_sets]
    best = math.inf
    best_rows = None
    if m == 2:
        r0, r1 = row_sets
        for i in range(r0.shape[0]):
            feas = p[0] * cols[0][i, 0] + p[1] * cols[1][:, 1] >= threshold - 1e-12
            if not feas.any():
                continue
            qs = p[0] * r0[i] + p[1] * r1[feas]
            mi = _h_of(qs) - (p[0] * hs[0][i] + p[1] * hs[1][feas])
            k = int(np.argmin(mi))
            val = float(mi[k])
            if val < best:
                best = val
                best_rows = np.stack([r0[i], r1[feas][k]])
    else:
        r0, r1, r2 = row_sets
        for i in range(r0.shape[0]):
            base_q = p[0] * r0[i]
            base_s = p[0] * cols[0][i, 0]
            base_h = p[0] * hs[0][i]
            for j in range(r1.shape[0]):
                feas = (
                    base_s + p[1] * cols[1][j, 1] + p[2] * cols[2][:, 2]
                    >= threshold - 1e-12
                )
                if not feas.any():
                    continue
                qs = base_q + p[1] * r1[j] + p[2] * r2[feas]
                mi = _h_of(qs) - (base_h + p[1] * hs[1][j] + p[2] * hs[2][feas])
                k = int(np.argmin(mi))
                val = float(mi[k])
                if val < best:
                    best = val
                    best_rows = np.stack([r0[i], r1[j], r2[feas][k]])
    return best, best_rows


def grid_oracle(px: Pmf, score: LinearScore, u_size: int, step: float) -> float:
    """Exhaustive minimum of I(X;U) over the feasible channel grid.

    Validation oracle only: an upper bound on the true optimum within
    O(step). When the full product grid at the requested step exceeds
    the scan budget, a coarse full pass locates the best basin and a
    second pass rescans a local box around it at the requested step;
    both passes are plain grid scans and the smaller value wins.
    Returns +inf when no grid channel is feasible.
    """
    m = px.alphabet_size
    if m > 3 or u_size > 3 or step < 1e-3:
        raise TooLarge("grid oracle limited to |X| <= 3, u_size <= 3, step >= 1e-3")
    if score.c.shape != (m, u_size):
        raise DimensionMismatch("score shape does not match (|X|, u_size)")
    p = px.probs
    c = score.c
    threshold = score.threshold
    ticks = int(round(1.0 / step))
    rows = _simplex_grid(u_size, ticks)
    g = rows.shape[0]

    if float(g) ** m <= GRID_BUDGET:
        best, _ = _scan_grid(p, c, threshold, [rows] * m)
        return max(best, 0.0) if math.isfinite(best) else best

    coarse_ticks = ticks
    while float(_simplex_grid(u_size, coarse_ticks).shape[0]) ** m > GRID_BUDGET:
        coarse_ticks = int(coarse_ticks * 0.8)
        if coarse_ticks < 2:
            raise TooLarge("grid oracle budget too small for any scan")
    coarse_rows = _simplex_grid(u_size, coarse_ticks)
    best, center = _scan_grid(p, c, threshold, [coarse_rows] * m)
    if center is None:
        return math.inf
    halfwidth = 2.0 / coarse_ticks + 1e-12
    row_sets = []
    for x in range(m):
        near = np.max(np.abs(rows - center[x]), axis=1) <= halfwidth
        row_sets.append(rows[near])
    if float(np.prod([r.shape[0] for r in row_sets])) <= GRID_BUDGET:
        fine_best, _ = _scan_grid(p, c, threshold, row_sets)
        best = min(best, fine_best)
    return max(best, 0.0) if math.isfinite(best) else best
