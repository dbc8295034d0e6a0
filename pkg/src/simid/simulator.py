"""Finite-blocklength triangle identification schemes.

A codebook is built by greedy set cover: a sequence is covered by a
codeword when their joint type is within a tolerance of type(x) times the
target channel (hard channel zeros are respected exactly). Signatures
store the exact distortion to the chosen codeword, and the decision rule
answers "no" only when d(xhat, y) exceeds stored + D, so the triangle
inequality makes false negatives impossible regardless of coverage
quality; budget exhaustion just degrades the maybe probability.

Sequences over an alphabet of size two are packed into integers and all
distortion work runs on popcounts; other alphabets use dense index
arrays, which caps the exhaustive universe at a few thousand sequences.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .core import Channel, DistortionMatrix, Pmf
from .errors import BudgetExceeded, DimensionMismatch, InvalidDistribution
from .rates import _check_triangle

UNIVERSE_BUDGET = 1 << 20
PAIR_BUDGET = 1 << 20
STREAM_SIZE = 4096
DECISION_NO = "no"
DECISION_MAYBE = "maybe"


@dataclass(frozen=True)
class Codebook:
    n: int
    codewords: tuple
    rate: float
    covering_radius_report: tuple
    alphabet: int
    rho: DistortionMatrix
    target_channel: Channel
    cover_tol: float
    typical_gamma: float | None
    uncovered_count: int
    budget_rate: float


@dataclass(frozen=True)
class Signature:
    index: int | None
    stored_distortion: float
    stored_total: float
    n: int

    @property
    def is_erasure(self) -> bool:
        return self.index is None


@dataclass(frozen=True)
class SimulationResult:
    p_maybe_estimate: float
    confidence_halfwidth: float
    trials: int
    seed: int
    false_negative_count: int


def _seq_array(x, n: int, alphabet: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.int64)
    if arr.ndim != 1 or arr.size != n:
        raise DimensionMismatch(f"sequence length {arr.size} != blocklength {n}")
    if arr.min(initial=0) < 0 or arr.max(initial=0) >= alphabet:
        raise InvalidDistribution("sequence letter outside the alphabet")
    return arr


def _pack_bits(arr: np.ndarray) -> int:
    return int((arr.astype(np.uint64) << np.arange(arr.size, dtype=np.uint64)).sum())


def _unpack_bits(value: int, n: int) -> tuple:
    return tuple(int((value >> i) & 1) for i in range(n))


def _type_counts(arr: np.ndarray, alphabet: int) -> tuple:
    return tuple(int((arr == a).sum()) for a in range(alphabet))


def _pack_bool(mask: np.ndarray) -> np.ndarray:
    packed = np.packbits(mask)
    pad = (-packed.size) % 8
    if pad:
        packed = np.concatenate([packed, np.zeros(pad, dtype=np.uint8)])
    return packed.view(np.uint64)


def _unpack_bool(packed: np.ndarray, size: int) -> np.ndarray:
    return np.unpackbits(packed.view(np.uint8), count=size).astype(bool)


def _binary_valid_table(n: int, v: np.ndarray, tol: float) -> np.ndarray:
    """valid[k, l, m11]: is the joint type of (x, c) within tol of the target.

    k is the weight of x, l the weight of c, m11 the overlap; the four
    joint counts follow from those. Entries where a hard channel zero
    would receive mass are invalid regardless of tol.
    """
    k = np.arange(n + 1)[:, None, None].astype(np.float64)
    m11 = np.arange(n + 1)[None, None, :].astype(np.float64)
    l = np.arange(n + 1)[None, :, None].astype(np.float64)
    j11 = m11
    j10 = k - m11
    j01 = l - m11
    j00 = n - k - l + m11
    ok = (j10 >= 0) & (j01 >= 0) & (j00 >= 0) & (m11 <= np.minimum(k, l))
    targets = (
        ((n - k) * v[0, 0], j00),
        ((n - k) * v[0, 1], j01),
        (k * v[1, 0], j10),
        (k * v[1, 1], j11),
    )
    for t, j in targets:
        ok &= np.abs(j - t) <= tol * n + 1e-9
    for (a, b), j in (((0, 0), j00), ((0, 1), j01), ((1, 0), j10), ((1, 1), j11)):
        if v[a, b] == 0.0:
            ok &= j == 0
    return ok


def _binary_pair_distortion(n, k, l, m11, rho: np.ndarray):
    """Total distortion between sequences with weights k, l and overlap m11."""
    return (
        rho[0, 0] * (n - k - l + m11)
        + rho[0, 1] * (l - m11)
        + rho[1, 0] * (k - m11)
        + rho[1, 1] * m11
    )


class _BinarySpace:
    """All length-n binary sequences as packed integers with popcount ops."""

    def __init__(self, n: int, rho: np.ndarray):
        self.n = n
        self.rho = rho
        self.seqs = np.arange(1 << n, dtype=np.uint32)
        self.weights = np.bitwise_count(self.seqs).astype(np.int64)

    def distortion_to(self, c: int, queries: np.ndarray, qw: np.ndarray):
        m11 = np.bitwise_count(queries & np.uint32(c)).astype(np.int64)
        l = int(np.bitwise_count(np.uint32(c)))
        return _binary_pair_distortion(self.n, qw, l, m11, self.rho)


def _interval_tables(valid: np.ndarray):
    """Per (k, l), the valid overlaps form an interval [lo, hi] in m11.

    Each joint-type constraint is a box constraint, linear in m11 with
    unit slope, so their intersection is contiguous. Empty sets get the
    inverted sentinel (1, 0).
    """
    n1 = valid.shape[0]
    lo = np.ones((n1, n1), dtype=np.uint8)
    hi = np.zeros((n1, n1), dtype=np.uint8)
    for k in range(n1):
        for l in range(n1):
            idx = np.nonzero(valid[k, l])[0]
            if idx.size:
                assert idx.size == idx[-1] - idx[0] + 1
                lo[k, l] = idx[0]
                hi[k, l] = idx[-1]
    return lo, hi


def _general_universe(n: int, alphabet: int) -> np.ndarray:
    total = alphabet**n
    grid = np.indices((alphabet,) * n).reshape(n, total).T
    return grid.astype(np.int8)


def _general_cover_vector(
    xs: np.ndarray, c: np.ndarray, v: np.ndarray, n: int, tol: float
) -> np.ndarray:
    m, k = v.shape
    ok = np.ones(xs.shape[0], dtype=bool)
    for a in range(m):
        xa = xs == a
        na = xa.sum(axis=1)
        for b in range(k):
            j = (xa & (c[None, :] == b)).sum(axis=1)
            target = na * v[a, b]
            ok &= np.abs(j - target) <= tol * n + 1e-9
            if v[a, b] == 0.0:
                ok &= j == 0
    return ok


def build_codebook(
    n: int,
    px: Pmf,
    target_channel: Channel,
    budget_rate: float,
    rho: DistortionMatrix | None = None,
    cover_tol: float | None = None,
    typical_gamma: float | None = None,
) -> Codebook:
    """Greedy covering codebook of at most 2^(n * budget_rate) codewords.

    Covers every length-n sequence (or only the gamma-typical ones) whose
    joint type with some codeword is within cover_tol of type(x) times
    target_channel. Stops early when the budget runs out; the residual is
    reported, not raised, since the decision rule stays admissible with
    partial coverage.
    """
    m = px.alphabet_size
    if target_channel.input_size != m:
        raise DimensionMismatch("target channel input does not match source")
    if target_channel.output_size != m:
        raise DimensionMismatch(
            "scheme construction needs reconstruction alphabet == source alphabet"
        )
    if budget_rate < 0:
        raise InvalidDistribution(f"budget_rate must be >= 0, got {budget_rate!r}")
    if n < 1:
        raise DimensionMismatch(f"blocklength must be >= 1, got {n}")
    if rho is None:
        rho = DistortionMatrix.hamming(m)
    _check_triangle(rho)
    if rho.shape != (m, m):
        raise DimensionMismatch("rho shape does not match the alphabet")
    if m**n > UNIVERSE_BUDGET:
        raise BudgetExceeded(
            f"{m}^{n} sequences exceeds the exhaustive-coverage budget"
        )
    if cover_tol is None:
        cover_tol = 1.0 / n
    v = target_channel.cond
    max_count = max(int(math.floor(2.0 ** (n * budget_rate) + 1e-9)), 1)

    if m == 2:
        space = _BinarySpace(n, rho.rho)
        universe_mask = np.ones(space.seqs.size, dtype=bool)
        if typical_gamma is not None:
            types = space.weights / n
            universe_mask = np.abs(types - px.probs[1]) <= typical_gamma + 1e-12
        valid = _binary_valid_table(n, v, cover_tol)
        any_valid = valid.any(axis=2)  # (k, l)
        lo_tab, hi_tab = _interval_tables(valid)
        lo_rows = np.ascontiguousarray(lo_tab[space.weights, :].T)  # (l, x)
        hi_rows = np.ascontiguousarray(hi_tab[space.weights, :].T)
        cand_l = space.weights

        uncovered = universe_mask.copy()
        unc_packed = _pack_bool(uncovered)
        cover_cache: dict[int, np.ndarray] = {}

        def cover_packed(i):
            got = cover_cache.get(i)
            if got is None:
                m11 = np.bitwise_count(space.seqs & space.seqs[i])
                l = int(cand_l[i])
                got = _pack_bool((m11 >= lo_rows[l]) & (m11 <= hi_rows[l]))
                if len(cover_cache) < 30_000:
                    cover_cache[i] = got
            return got

        def class_bounds():
            # Upper bound per candidate weight l: a codeword of weight l can
            # only cover uncovered x whose weight class admits some valid
            # overlap at all.
            return np.bincount(space.weights[uncovered], minlength=n + 1) @ any_valid

        bounds_l = class_bounds()
        heap = [(-float(bounds_l[cand_l[i]]), i) for i in range(space.seqs.size)]
        heapq.heapify(heap)
        chosen = []
        while heap and len(chosen) < max_count and unc_packed.any():
            neg, i = heapq.heappop(heap)
            b = min(-neg, float(bounds_l[cand_l[i]]))
            if b <= 0:
                continue
            if heap and b < -heap[0][0]:
                heapq.heappush(heap, (-b, i))
                continue
            cp = cover_packed(i)
            g = float(np.bitwise_count(cp & unc_packed).sum())
            if g <= 0:
                continue
            if (not heap) or g >= -heap[0][0]:
                chosen.append(i)
                unc_packed &= ~cp
                uncovered = _unpack_bool(unc_packed, uncovered.size)
                bounds_l = class_bounds()
            else:
                heapq.heappush(heap, (-g, i))

        cw_ints = [int(space.seqs[i]) for i in chosen]
        codewords = tuple(_unpack_bits(c, n) for c in cw_ints)
        # Nearest-codeword distortion over the universe, for the radius report.
        report = []
        if cw_ints:
            idx = np.nonzero(universe_mask)[0]
            best = np.full(idx.size, np.inf)
            qw = space.weights[idx]
            for c in cw_ints:
                best = np.minimum(
                    best, space.distortion_to(c, space.seqs[idx], qw)
                )
            for k in range(n + 1):
                sel = qw == k
                if sel.any():
                    report.append(((n - k, k), float(best[sel].max()) / n))
        uncovered_count = int(uncovered.sum())
    else:
        xs = _general_universe(n, m)
        universe_mask = np.ones(xs.shape[0], dtype=bool)
        if typical_gamma is not None:
            types = np.stack([(xs == a).sum(axis=1) for a in range(m)], axis=1) / n
            universe_mask = (
                np.abs(types - px.probs[None, :]).max(axis=1) <= typical_gamma + 1e-12
            )
        uncovered = universe_mask.copy()
        covers = {}

        def cover_vec(i):
            if i not in covers:
                covers[i] = _general_cover_vector(xs, xs[i], v, n, cover_tol)
            return covers[i]

        heap = [(-float(xs.shape[0]), i) for i in range(xs.shape[0])]
        chosen = []
        while heap and len(chosen) < max_count and uncovered.any():
            neg, i = heapq.heappop(heap)
            if -neg <= 0:
                break
            g = int((cover_vec(i) & uncovered).sum())
            if g <= 0:
                continue
            if (not heap) or g >= -heap[0][0]:
                chosen.append(i)
                uncovered &= ~cover_vec(i)
            else:
                heapq.heappush(heap, (-float(g), i))

        codewords = tuple(tuple(int(t) for t in xs[i]) for i in chosen)
        report = []
        if chosen:
            idx = np.nonzero(universe_mask)[0]
            best = np.full(idx.size, np.inf)
            for i in chosen:
                d = rho.rho[xs[idx], xs[i][None, :]].sum(axis=1)
                best = np.minimum(best, d)
            seen = {}
            for row, b in zip(xs[idx], best):
                key = _type_counts(row, m)
                seen[key] = max(seen.get(key, 0.0), float(b) / n)
            report = sorted(seen.items())
        uncovered_count = int(uncovered.sum())

    if not codewords:
        # No candidate covers anything at this tolerance; fall back to the
        # constant sequence at the letter of least expected distortion so
        # the scheme still has a reconstruction to store distortions to.
        best_letter = int(np.argmin(px.probs @ rho.rho))
        codewords = ((best_letter,) * n,)

    count = max(len(codewords), 1)
    rate = math.log2(count + 1) / n if typical_gamma is not None else math.log2(count) / n
    return Codebook(
        n=n,
        codewords=codewords,
        rate=rate,
        covering_radius_report=tuple(report),
        alphabet=m,
        rho=rho,
        target_channel=target_channel,
        cover_tol=cover_tol,
        typical_gamma=typical_gamma,
        uncovered_count=uncovered_count,
        budget_rate=budget_rate,
    )


def assign_signature(x, cb: Codebook) -> Signature:
    """Index of a distortion-minimizing codeword plus the exact distortion.

    Lowest index wins ties. In typical-only mode a sequence outside the
    covered type classes gets an Erasure signature instead.
    """
    arr = _seq_array(x, cb.n, cb.alphabet)
    if cb.typical_gamma is not None:
        covered_types = {t for t, _ in cb.covering_radius_report}
        if _type_counts(arr, cb.alphabet) not in covered_types:
            return Signature(
                index=None,
                stored_distortion=float(cb.rho.rho_max),
                stored_total=float(cb.rho.rho_max) * cb.n,
                n=cb.n,
            )
    if not cb.codewords:
        raise InvalidDistribution("empty codebook")
    best_i = 0
    best_total = math.inf
    rho = cb.rho.rho
    for i, cw in enumerate(cb.codewords):
        total = float(rho[arr, np.asarray(cw, dtype=np.int64)].sum())
        if total < best_total:
            best_total = total
            best_i = i
    return Signature(
        index=best_i,
        stored_distortion=best_total / cb.n,
        stored_total=best_total,
        n=cb.n,
    )


def decide_triangle(sig: Signature, cb: Codebook, y, d_threshold: float) -> str:
    """Triangle rule: "no" iff d(xhat, y) > stored + D, strictly.

    Boundary equality answers "maybe"; an Erasure signature always
    answers "maybe". Comparisons use unnormalized totals so that Hamming
    decisions are exact integer arithmetic.
    """
    arr = _seq_array(y, cb.n, cb.alphabet)
    if sig.n != cb.n:
        raise DimensionMismatch("signature blocklength does not match codebook")
    if d_threshold < 0:
        raise InvalidDistribution(f"d_threshold must be >= 0, got {d_threshold!r}")
    if sig.is_erasure:
        return DECISION_MAYBE
    cw = np.asarray(cb.codewords[sig.index], dtype=np.int64)
    total = float(cb.rho.rho[cw, arr].sum())
    if total > sig.stored_total + cb.n * d_threshold:
        return DECISION_NO
    return DECISION_MAYBE


def _all_signatures_binary(cb: Codebook, space: _BinarySpace):
    cw_ints = np.asarray([_pack_bits(np.asarray(c)) for c in cb.codewords], np.uint32)
    best = np.full(space.seqs.size, np.inf)
    best_idx = np.zeros(space.seqs.size, dtype=np.int64)
    for i, c in enumerate(cw_ints):
        d = space.distortion_to(int(c), space.seqs, space.weights)
        upd = d < best
        best[upd] = d[upd]
        best_idx[upd] = i
    return best_idx, best, cw_ints


def exhaustive_admissibility_check(
    cb: Codebook,
    d_threshold: float,
    n: int,
    samples: int = 100_000,
    seed: int = 0,
    stored_total_offset: float = 0.0,
):
    """Scan similar pairs for a forbidden "no"; "pass" or a witness pair.

    All alphabet^(2n) pairs are scanned when that fits the budget,
    otherwise `samples` random similar pairs (seeded). A negative
    stored_total_offset emulates a corrupted encoder for fault-injection
    tests; the shipped encoder uses offset 0.
    """
    if n != cb.n:
        raise DimensionMismatch(f"n={n} does not match codebook blocklength {cb.n}")
    if cb.typical_gamma is not None and cb.uncovered_count:
        pass  # erasures answer maybe, so partial coverage cannot fail
    m = cb.alphabet
    exhaustive = m ** (2 * n) <= PAIR_BUDGET

    if m == 2 and exhaustive:
        space = _BinarySpace(n, cb.rho.rho)
        idx, totals, cw_ints = _all_signatures_binary(cb, space)
        if cb.typical_gamma is not None:
            covered_types = {t[1] for t, _ in cb.covering_radius_report}
            erased = ~np.isin(space.weights, sorted(covered_types))
        else:
            erased = np.zeros(space.seqs.size, dtype=bool)
        stored = totals + stored_total_offset
        limit = n * d_threshold
        for xi in range(space.seqs.size):
            d_xy = space.distortion_to(int(space.seqs[xi]), space.seqs, space.weights)
            similar = d_xy <= limit + 1e-12
            if erased[xi]:
                continue
            c = int(cw_ints[idx[xi]])
            d_cy = space.distortion_to(c, space.seqs, space.weights)
            bad = similar & (d_cy > stored[xi] + limit)
            if bad.any():
                yi = int(np.nonzero(bad)[0][0])
                return (_unpack_bits(int(space.seqs[xi]), n), _unpack_bits(yi, n))
        return "pass"

    if exhaustive:
        xs = _general_universe(n, m)
        sigs = [assign_signature(row, cb) for row in xs]
        limit = n * d_threshold
        rho = cb.rho.rho
        for xi, row in enumerate(xs):
            sig = sigs[xi]
            if sig.is_erasure:
                continue
            cw = np.asarray(cb.codewords[sig.index], dtype=np.int64)
            d_xy = rho[row[None, :], xs].sum(axis=1)
            d_cy = rho[cw[None, :], xs].sum(axis=1)
            bad = (d_xy <= limit + 1e-12) & (
                d_cy > sig.stored_total + stored_total_offset + limit
            )
            if bad.any():
                yi = int(np.nonzero(bad)[0][0])
                return (tuple(int(t) for t in row), tuple(int(t) for t in xs[yi]))
        return "pass"

    # Sampled mode: random x, then y perturbed within the similarity ball.
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0], np.uint64)))
    limit = n * d_threshold
    rho = cb.rho.rho
    max_flips = int(limit / max(cb.rho.rho[cb.rho.rho > 0].min(), 1e-12)) if (cb.rho.rho > 0).any() else n
    for _ in range(samples):
        x = rng.integers(0, m, size=n)
        y = x.copy()
        flips = int(rng.integers(0, min(max_flips, n) + 1))
        pos = rng.choice(n, size=flips, replace=False)
        y[pos] = rng.integers(0, m, size=flips)
        if float(rho[x, y].sum()) > limit + 1e-12:
            continue
        sig = assign_signature(x, cb)
        stored = Signature(
            sig.index,
            sig.stored_distortion,
            sig.stored_total + stored_total_offset,
            sig.n,
        )
        if decide_triangle(stored, cb, y, d_threshold) == DECISION_NO:
            return (tuple(int(t) for t in x), tuple(int(t) for t in y))
    return "pass"


def _sample_letters(rng, probs: np.ndarray, shape) -> np.ndarray:
    cdf = np.cumsum(probs)
    u = rng.random(shape)
    return np.minimum(
        np.searchsorted(cdf, u, side="right"), probs.size - 1
    ).astype(np.int64)


def estimate_maybe_probability(
    cb: Codebook, px: Pmf, py: Pmf, d_threshold: float, trials: int, seed: int
) -> SimulationResult:
    """Monte Carlo estimate of Pr{decision == maybe} for X ~ px, Y ~ py.

    Trials are split into fixed-size streams, stream i drawn from a
    counter RNG keyed by (seed, i), and counts merged by exact integer
    sums, so any parallel split reproduces the serial result bit for bit.
    The similar subsample is checked for false negatives; the count is
    reported and is zero for an uncorrupted scheme.
    """
    if trials < 1:
        raise InvalidDistribution(f"trials must be >= 1, got {trials}")
    if px.alphabet_size != cb.alphabet or py.alphabet_size != cb.alphabet:
        raise DimensionMismatch("source/query alphabet does not match codebook")
    if d_threshold < 0:
        raise InvalidDistribution(f"d_threshold must be >= 0, got {d_threshold!r}")
    n = cb.n
    m = cb.alphabet
    rho = cb.rho.rho
    limit = n * d_threshold
    cw_arr = np.asarray(cb.codewords, dtype=np.int64)
    maybe_count = 0
    fn_count = 0
    done = 0
    stream = 0
    binary = m == 2
    if binary:
        cw_ints = np.asarray(
            [_pack_bits(np.asarray(c)) for c in cb.codewords], np.uint32
        )
        powers = (np.uint32(1) << np.arange(n, dtype=np.uint32))
    if cb.typical_gamma is not None:
        covered_types = {t for t, _ in cb.covering_radius_report}

    while done < trials:
        take = min(STREAM_SIZE, trials - done)
        rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, stream], dtype=np.uint64))
        )
        xs = _sample_letters(rng, px.probs, (take, n))
        ys = _sample_letters(rng, py.probs, (take, n))
        if binary:
            xi = (xs.astype(np.uint32) * powers[None, :]).sum(axis=1, dtype=np.uint32)
            yi = (ys.astype(np.uint32) * powers[None, :]).sum(axis=1, dtype=np.uint32)
            xw = np.bitwise_count(xi).astype(np.int64)
            yw = np.bitwise_count(yi).astype(np.int64)
            best = np.full(take, np.inf)
            best_idx = np.zeros(take, dtype=np.int64)
            for i, c in enumerate(cw_ints):
                l = int(np.bitwise_count(c))
                m11 = np.bitwise_count(xi & c).astype(np.int64)
                d = _binary_pair_distortion(n, xw, l, m11, rho)
                upd = d < best
                best[upd] = d[upd]
                best_idx[upd] = i
            sel = cw_ints[best_idx]
            lsel = np.bitwise_count(sel).astype(np.int64)
            m11y = np.bitwise_count(sel & yi).astype(np.int64)
            d_cy = _binary_pair_distortion(n, yw, lsel, m11y, rho)
            m11xy = np.bitwise_count(xi & yi).astype(np.int64)
            d_xy = _binary_pair_distortion(n, xw, yw, m11xy, rho)
            no = d_cy > best + limit
            if cb.typical_gamma is not None:
                covered_w = np.asarray(sorted(t[1] for t in covered_types))
                no &= np.isin(xw, covered_w)
        else:
            best = np.full(take, np.inf)
            best_idx = np.zeros(take, dtype=np.int64)
            for i in range(cw_arr.shape[0]):
                d = rho[xs, cw_arr[i][None, :]].sum(axis=1)
                upd = d < best
                best[upd] = d[upd]
                best_idx[upd] = i
            sel = cw_arr[best_idx]
            d_cy = rho[sel, ys].sum(axis=1)
            d_xy = rho[xs, ys].sum(axis=1)
            no = d_cy > best + limit
            if cb.typical_gamma is not None:
                for t in range(take):
                    if _type_counts(xs[t], m) not in covered_types:
                        no[t] = False
        similar = d_xy <= limit + 1e-12
        fn_count += int((no & similar).sum())
        maybe_count += int(take - no.sum())
        done += take
        stream += 1

    p = maybe_count / trials
    half = 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / trials)
    return SimulationResult(
        p_maybe_estimate=p,
        confidence_halfwidth=half,
        trials=trials,
        seed=seed,
        false_negative_count=fn_count,
    )
