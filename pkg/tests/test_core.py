import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simid.core import (
    Channel,
    DistortionMatrix,
    Pmf,
    RateCurve,
    entropy,
    kl_divergence,
    lower_convex_envelope,
    mutual_information,
)
from simid.errors import (
    DimensionMismatch,
    InvalidDistribution,
    TooFewPoints,
    TriangleViolation,
)

# frozen via tests/oracles.py (mpmath dps=50)
H_811 = 0.92192809488736235
H2_04 = 0.97095059445466864
KL_73_46 = 0.26514844544032288


def pmfs(max_len=5):
    return st.lists(
        st.floats(min_value=0.01, max_value=1.0), min_size=2, max_size=max_len
    ).map(lambda v: Pmf(np.array(v) / np.sum(v)))


class TestPmf:
    def test_valid(self):
        p = Pmf([0.2, 0.8])
        assert p.alphabet_size == 2
        assert np.allclose(p.probs, [0.2, 0.8])

    def test_negative_rejected(self):
        with pytest.raises(InvalidDistribution):
            Pmf([1.2, -0.2])

    def test_sum_off_rejected(self):
        with pytest.raises(InvalidDistribution):
            Pmf([0.5, 0.4])

    def test_empty_rejected(self):
        with pytest.raises(InvalidDistribution):
            Pmf([])

    def test_support(self):
        p = Pmf([0.5, 0.0, 0.5])
        assert list(p.support()) == [0, 2]


class TestDistortionMatrix:
    def test_hamming_factory(self):
        rho = DistortionMatrix.hamming(3)
        assert rho.is_hamming
        assert rho.satisfies_triangle
        assert rho.rho_max == 1.0
        assert rho.rho[0, 0] == 0.0 and rho.rho[0, 1] == 1.0

    def test_non_hamming_detected(self):
        rho = DistortionMatrix([[0.0, 2.0], [1.0, 0.0]])
        assert not rho.is_hamming

    def test_triangle_violation_detected(self):
        rho = DistortionMatrix([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]])
        assert not rho.satisfies_triangle

    def test_negative_rejected(self):
        with pytest.raises(InvalidDistribution):
            DistortionMatrix([[0.0, -1.0], [1.0, 0.0]])

    def test_transpose(self):
        rho = DistortionMatrix([[0.0, 2.0], [1.0, 0.0]])
        assert rho.transpose().rho[1, 0] == 2.0


class TestChannel:
    def test_row_stochastic_required(self):
        with pytest.raises(InvalidDistribution):
            Channel([[0.5, 0.6], [0.5, 0.5]])

    def test_identity_and_constant(self):
        assert np.allclose(Channel.identity(3).cond, np.eye(3))
        ch = Channel.constant(2, 3, 1)
        assert np.allclose(ch.cond, [[0, 1, 0], [0, 1, 0]])

    def test_output_marginal(self):
        ch = Channel([[1.0, 0.0], [0.0, 1.0]])
        out = ch.output_marginal(Pmf([0.3, 0.7]))
        assert np.allclose(out.probs, [0.3, 0.7])


class TestRateCurve:
    def test_requires_increasing_d(self):
        with pytest.raises(InvalidDistribution):
            RateCurve([0.2, 0.1], [1.0, 2.0])

    def test_requires_finite_rates(self):
        with pytest.raises(InvalidDistribution):
            RateCurve([0.1, 0.2], [1.0, math.inf])

    def test_envelope_needs_two_points(self):
        with pytest.raises(TooFewPoints):
            lower_convex_envelope(RateCurve([0.1], [1.0]))

    def test_round_trip(self):
        c = RateCurve([0.1, 0.2], [2.0, 1.0], label="x", meta=(("k", 1),))
        assert c.label == "x"
        assert dict(c.meta)["k"] == 1
        assert len(c) == 2


class TestInformationMeasures:
    def test_entropy_frozen(self):
        assert entropy(Pmf([0.8, 0.1, 0.1])) == pytest.approx(H_811, abs=1e-14)
        assert entropy(Pmf([0.4, 0.6])) == pytest.approx(H2_04, abs=1e-14)

    def test_kl_frozen(self):
        assert kl_divergence(Pmf([0.7, 0.3]), Pmf([0.4, 0.6])) == pytest.approx(
            KL_73_46, abs=1e-14
        )

    def test_kl_off_support_raises(self):
        from simid.errors import AbsoluteContinuityViolation

        with pytest.raises(AbsoluteContinuityViolation):
            kl_divergence(Pmf([0.5, 0.5]), Pmf([1.0, 0.0]))

    @given(pmfs())
    @settings(max_examples=50, deadline=None)
    def test_entropy_bounds(self, p):
        h = entropy(p)
        assert -1e-12 <= h <= math.log2(p.alphabet_size) + 1e-12

    @given(pmfs(3), pmfs(3))
    @settings(max_examples=50, deadline=None)
    def test_kl_nonnegative(self, p, q):
        if p.alphabet_size != q.alphabet_size:
            return
        assert kl_divergence(p, q) >= -1e-12

    def test_mi_of_identity_is_entropy(self):
        p = Pmf([0.8, 0.1, 0.1])
        assert mutual_information(p, Channel.identity(3)) == pytest.approx(
            entropy(p), abs=1e-12
        )

    def test_mi_of_constant_is_zero(self):
        p = Pmf([0.8, 0.1, 0.1])
        assert mutual_information(p, Channel.constant(3, 2, 0)) == pytest.approx(
            0.0, abs=1e-12
        )


class TestEnvelope:
    def test_convex_input_unchanged(self):
        d = [0.0, 1.0, 2.0, 3.0]
        r = [9.0, 4.0, 1.0, 0.0]
        env = lower_convex_envelope(RateCurve(d, r))
        assert np.allclose(env.r, r)

    def test_nonconvex_point_dropped_to_chord(self):
        d = [0.0, 1.0, 2.0]
        r = [2.0, 1.9, 0.0]
        env = lower_convex_envelope(RateCurve(d, r))
        assert env.r[1] == pytest.approx(1.0, abs=1e-12)

    def test_envelope_below_and_convex(self):
        rng = np.random.default_rng(5)
        d = np.sort(rng.uniform(0, 1, 12))
        d += np.arange(12) * 1e-6
        r = rng.uniform(0, 2, 12)
        env = lower_convex_envelope(RateCurve(d, r))
        assert np.all(env.r <= r + 1e-12)
        slopes = np.diff(env.r) / np.diff(env.d)
        assert np.all(np.diff(slopes) >= -1e-9)
