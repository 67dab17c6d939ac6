import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from lharq_aoei.channel import (
    CodeParams,
    InterfererSpec,
    LinkBudget,
    SHADOWING_PRESETS,
    ShadowedRicianParams,
    adapt_rate,
    backtrack_error_prob,
    confluent_1f1,
    feedforward_error_prob,
    sample_channel_gain,
    shadowed_rician_pdf,
    sinr,
    sinr_bank,
    threshold_error_prob,
)
from lharq_aoei.errors import (
    ConditionalUndefinedError,
    InvalidParameterError,
    NumericalFailureError,
)

AVERAGE = SHADOWING_PRESETS["average"]


def _mp_q(x):
    return mp.erfc(x / mp.sqrt(2)) / 2


def _mp_normal_approx(gamma, rate, blocklength):
    mp.mp.dps = 50
    g = mp.mpf(gamma)
    c = mp.log(1 + g) / mp.log(2) - rate
    v = (1 - (1 + g) ** -2) * (1 / mp.log(2)) ** 2
    return _mp_q(c / mp.sqrt(v / blocklength))


# ---------------------------------------------------------------------------
# Confluent hypergeometric function
# ---------------------------------------------------------------------------

class TestConfluent1F1:
    def test_zero_argument_is_one(self):
        for a, b in [(0.3, 1.0), (2.0, 1.0), (10.1, 3.5), (-1.5, 2.0)]:
            assert confluent_1f1(a, b, 0.0) == 1.0

    def test_exponential_identity(self):
        assert confluent_1f1(1.0, 1.0, 1.0) == pytest.approx(math.e, rel=1e-12)

    def test_against_extended_precision_series(self):
        # 200-term brute-force summation at 50 digits as the oracle.
        mp.mp.dps = 50
        term, total = mp.mpf(1), mp.mpf(1)
        a, b, x = mp.mpf(2), mp.mpf(1), mp.mpf("0.5")
        for k in range(200):
            term *= (a + k) * x / ((b + k) * (k + 1))
            total += term
        assert confluent_1f1(2.0, 1.0, 0.5) == pytest.approx(float(total), rel=1e-12)

    def test_noninteger_parameters_match_mpmath(self):
        mp.mp.dps = 40
        for a, x in [(10.1, 3.0), (0.739, 8.0), (19.4, 0.25)]:
            assert confluent_1f1(a, 1.0, x) == pytest.approx(
                float(mp.hyp1f1(a, 1, x)), rel=1e-10
            )

    def test_nonpositive_integer_b_rejected(self):
        with pytest.raises(InvalidParameterError):
            confluent_1f1(1.0, 0.0, 1.0)
        with pytest.raises(InvalidParameterError):
            confluent_1f1(1.0, -2.0, 1.0)

    def test_series_budget_exhaustion(self):
        with pytest.raises(NumericalFailureError):
            confluent_1f1(0.5, 1.0, 50_000.0)

    @given(
        a=st.floats(-5, 20, allow_nan=False),
        b=st.floats(0.5, 10, allow_nan=False),
    )
    @settings(max_examples=50, deadline=None)
    def test_unit_value_at_origin(self, a, b):
        assert confluent_1f1(a, b, 0.0) == 1.0


# ---------------------------------------------------------------------------
# Shadowed-Rician PDF and sampler
# ---------------------------------------------------------------------------

class TestPdf:
    def test_value_at_origin_is_alpha(self):
        for params in SHADOWING_PRESETS.values():
            alpha, _, _ = params.coefficients()
            assert shadowed_rician_pdf(0.0, params) == pytest.approx(alpha, rel=1e-12)

    def test_normalization_by_quadrature(self):
        val, _ = integrate.quad(
            lambda x: shadowed_rician_pdf(x, AVERAGE), 0.0, np.inf, limit=200
        )
        assert abs(val - 1.0) <= 1e-6

    @pytest.mark.parametrize("name", sorted(SHADOWING_PRESETS))
    def test_mean_power_identity(self, name):
        params = SHADOWING_PRESETS[name]
        val, _ = integrate.quad(
            lambda x: x * shadowed_rician_pdf(x, params), 0.0, np.inf, limit=200
        )
        assert abs(val - params.mean_power) <= 1e-5

    def test_invalid_parameters(self):
        with pytest.raises(InvalidParameterError):
            ShadowedRicianParams(b=0.0, m=1.0, omega=0.5)
        with pytest.raises(InvalidParameterError):
            ShadowedRicianParams(b=0.1, m=-1.0, omega=0.5)
        with pytest.raises(InvalidParameterError):
            ShadowedRicianParams(b=0.1, m=1.0, omega=-0.5)
        # m == 0 with LoS power present makes delta == beta: degenerate.
        with pytest.raises(InvalidParameterError):
            ShadowedRicianParams(b=0.1, m=0.0, omega=0.5)

    @given(
        b=st.floats(0.01, 5.0, allow_nan=False),
        m=st.floats(0.1, 50.0, allow_nan=False),
        omega=st.floats(0.0, 10.0, allow_nan=False),
    )
    @settings(max_examples=100, deadline=None)
    def test_coefficient_invariants(self, b, m, omega):
        alpha, beta, delta = ShadowedRicianParams(b, m, omega).coefficients()
        assert alpha > 0 and beta > 0 and 0.0 <= delta < beta

    def test_pdf_negative_argument_rejected(self):
        with pytest.raises(InvalidParameterError):
            shadowed_rician_pdf(-0.1, AVERAGE)


class TestSampler:
    def test_rayleigh_special_case_ks(self):
        # omega = 0 removes the LoS part: the gain is exponential, mean 2b.
        params = ShadowedRicianParams(b=0.2, m=5.0, omega=0.0)
        rng = np.random.default_rng(7)
        draws = sample_channel_gain(params, rng, 100_000)
        stat = stats.kstest(draws, stats.expon(scale=0.4).cdf)
        assert stat.pvalue > 0.01

    def test_sample_mean_within_three_standard_errors(self):
        rng = np.random.default_rng(11)
        n = 1_000_000
        draws = sample_channel_gain(AVERAGE, rng, n)
        se = draws.std(ddof=1) / math.sqrt(n)
        assert abs(draws.mean() - AVERAGE.mean_power) <= 3 * se

    def test_histogram_matches_pdf(self):
        from lharq_aoei.validate import sampler_chi_square_p

        assert sampler_chi_square_p(AVERAGE, samples=200_000, seed=3) > 0.01

    def test_scalar_draw(self):
        rng = np.random.default_rng(0)
        gain = sample_channel_gain(AVERAGE, rng)
        assert isinstance(gain, float) and gain >= 0


# ---------------------------------------------------------------------------
# SINR
# ---------------------------------------------------------------------------

def _link_with_snr(snr, interferers=()):
    # Solve the transmit power so the interference-free SNR at unit gain is snr.
    base = LinkBudget(
        distance_m=600e3,
        freq_hz=2e9,
        tx_gain=100.0,
        rx_gain=10.0,
        tx_power_w=1.0,
        noise_w=1e-12,
        interferers=tuple(interferers),
    )
    power = snr * base.noise_w / base.path_gain
    return LinkBudget(
        distance_m=base.distance_m,
        freq_hz=base.freq_hz,
        tx_gain=base.tx_gain,
        rx_gain=base.rx_gain,
        tx_power_w=power,
        noise_w=base.noise_w,
        interferers=tuple(interferers),
    )


class TestSinr:
    def test_interference_free_reduction(self):
        link = _link_with_snr(10.0)
        assert sinr(link, 1.0) == pytest.approx(10.0, rel=1e-12)

    def test_matched_interferer_halves_snr(self):
        # One interferer whose received power equals the noise floor.
        noise = 1e-12
        it = InterfererSpec(distance_m=1000.0, power_w=noise / (10.0 ** -3))
        assert it.attenuation * it.power_w * it.gain == pytest.approx(noise, rel=1e-12)
        link = _link_with_snr(10.0, [it])
        assert sinr(link, 1.0, [1.0]) == pytest.approx(5.0, rel=1e-12)

    def test_monotone_in_pathloss_exponent(self):
        # Interferers beyond the reference distance fade faster as the
        # exponent grows, so the SINR rises.
        prev = -np.inf
        for alpha in np.linspace(2.0, 4.0, 9):
            it = InterfererSpec(
                distance_m=1500.0, power_w=1e-9, pathloss_exp=float(alpha)
            )
            val = sinr(_link_with_snr(10.0, [it]), 1.0, [1.0])
            assert val > prev
            prev = val

    def test_gain_count_mismatch_rejected(self):
        it = InterfererSpec(distance_m=1000.0, power_w=1e-9)
        link = _link_with_snr(10.0, [it])
        with pytest.raises(InvalidParameterError):
            sinr(link, 1.0, [1.0, 2.0])
        with pytest.raises(InvalidParameterError):
            sinr(_link_with_snr(10.0), 1.0, [1.0])

    def test_negative_gain_rejected(self):
        with pytest.raises(InvalidParameterError):
            sinr(_link_with_snr(10.0), -1.0)

    def test_vectorized_bank(self):
        it = InterfererSpec(distance_m=1000.0, power_w=1e-9)
        link = _link_with_snr(10.0, [it])
        bank = sinr_bank(AVERAGE, link, 1000, np.random.default_rng(5))
        assert bank.shape == (1000,) and np.all(bank >= 0)
        assert not bank.flags.writeable

    def test_interferer_validation(self):
        with pytest.raises(InvalidParameterError):
            InterfererSpec(distance_m=0.0, power_w=1.0)
        with pytest.raises(InvalidParameterError):
            InterfererSpec(distance_m=10.0, power_w=1.0, pathloss_exp=7.0)
        with pytest.raises(InvalidParameterError):
            LinkBudget(
                distance_m=1.0,
                freq_hz=1.0,
                tx_gain=1.0,
                rx_gain=1.0,
                tx_power_w=0.0,
                noise_w=1.0,
            )


# ---------------------------------------------------------------------------
# Decoding error probabilities
# ---------------------------------------------------------------------------

class TestFeedforwardErrorProb:
    def test_capacity_equals_rate_gives_half(self):
        # capacity(3) = 2 bits per use exactly.
        code = CodeParams(blocklength=200, rate=2.0)
        assert feedforward_error_prob(3.0, code) == pytest.approx(0.5, abs=1e-12)

    def test_deep_tail(self):
        code = CodeParams(blocklength=500, rate=0.5)
        assert feedforward_error_prob(3.0, code) < 1e-6

    def test_scalar_against_extended_precision(self):
        code = CodeParams(blocklength=200, rate=1.0)
        oracle = float(_mp_normal_approx(3.0, 1, 200))
        assert feedforward_error_prob(3.0, code) == pytest.approx(oracle, rel=1e-10)

    def test_zero_snr_fails_surely(self):
        code = CodeParams(blocklength=100, rate=1.0)
        assert feedforward_error_prob(0.0, code) == 1.0

    def test_bank_average_matches_manual_mean(self):
        rng = np.random.default_rng(2)
        bank = rng.gamma(2.0, 2.0, 4000)
        code = CodeParams(blocklength=150, rate=1.5)
        manual = np.mean([feedforward_error_prob(float(g), code) for g in bank[:500]])
        assert feedforward_error_prob(bank, code, mc_draws=500) == pytest.approx(
            float(manual), rel=1e-12
        )

    def test_mc_draws_validation(self):
        code = CodeParams(blocklength=100, rate=1.0)
        with pytest.raises(InvalidParameterError):
            feedforward_error_prob(np.ones(10), code, mc_draws=0)
        with pytest.raises(InvalidParameterError):
            feedforward_error_prob(np.ones(10), code, mc_draws=11)

    def test_monotone_in_mean_snr_and_rate(self):
        rng = np.random.default_rng(9)
        base = sinr_bank(AVERAGE, _link_with_snr(6.0), 50_000, rng)
        code = CodeParams(blocklength=200, rate=1.5)
        eps = [
            feedforward_error_prob(base * scale, code) for scale in (0.5, 1.0, 2.0, 4.0)
        ]
        assert eps == sorted(eps, reverse=True)
        by_rate = [
            feedforward_error_prob(base, CodeParams(200, r)) for r in (0.5, 1.0, 2.0, 4.0)
        ]
        assert by_rate == sorted(by_rate)


class TestThresholdErrorProb:
    def test_zero_threshold(self):
        bank = np.abs(np.random.default_rng(1).normal(size=1000))
        assert threshold_error_prob(bank, 0.0) == 0.0

    def test_huge_threshold(self):
        bank = np.random.default_rng(1).exponential(size=1000)
        assert threshold_error_prob(bank, 1e9) == 1.0

    def test_median_threshold_by_bisection(self):
        rng = np.random.default_rng(4)
        bank = sinr_bank(AVERAGE, _link_with_snr(8.0), 200_001, rng)
        lo, hi = 0.0, float(bank.max())
        for _ in range(60):  # bisection on the empirical CDF
            mid = 0.5 * (lo + hi)
            if np.mean(bank < mid) < 0.5:
                lo = mid
            else:
                hi = mid
        assert threshold_error_prob(bank, hi) == pytest.approx(0.5, abs=0.01)

    def test_monotone_in_threshold(self):
        bank = np.random.default_rng(6).exponential(size=20_000)
        vals = [threshold_error_prob(bank, t) for t in (0.1, 0.5, 1.0, 2.0, 5.0)]
        assert vals == sorted(vals)

    def test_negative_threshold_rejected(self):
        with pytest.raises(InvalidParameterError):
            threshold_error_prob(np.ones(5), -1.0)


class TestBacktrackErrorProb:
    def test_full_mixing_ratio_is_one(self):
        code = CodeParams(blocklength=100, rate=1.0)
        bank = np.random.default_rng(3).exponential(0.8, 5000)
        assert backtrack_error_prob(bank, code, rho=1.0) == pytest.approx(1.0, abs=1e-12)

    def test_scalar_error_regime_against_oracle(self):
        # capacity(0.5) < 1: both attempts sit in the error regime, no clamp.
        code = CodeParams(blocklength=100, rate=1.0)
        num = float(_mp_normal_approx(0.5, 1, 30))
        den = float(_mp_normal_approx(0.5, 1, 100))
        assert backtrack_error_prob(0.5, code, rho=0.3) == pytest.approx(
            num / den, rel=1e-10
        )

    def test_scalar_success_regime_clamps(self):
        # capacity(2) > 1: the raw ratio exceeds one and must clamp.
        code = CodeParams(blocklength=100, rate=1.0)
        num = float(_mp_normal_approx(2.0, 1, 30))
        den = float(_mp_normal_approx(2.0, 1, 100))
        assert num / den > 1.0
        assert backtrack_error_prob(2.0, code, rho=0.3) == min(1.0, num / den) == 1.0

    def test_nonincreasing_in_rho_on_fixed_bank(self):
        rng = np.random.default_rng(12)
        bank = sinr_bank(AVERAGE, _link_with_snr(9.0), 100_000, rng)
        code = CodeParams(blocklength=200, rate=2.0)
        vals = [backtrack_error_prob(bank, code, rho=r) for r in (0.1, 0.3, 0.5, 0.8, 1.0)]
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
        assert all(0.0 <= v <= 1.0 for v in vals)

    def test_rho_validation(self):
        code = CodeParams(blocklength=100, rate=1.0)
        with pytest.raises(InvalidParameterError):
            backtrack_error_prob(1.0, code, rho=0.0)
        with pytest.raises(InvalidParameterError):
            backtrack_error_prob(1.0, code, rho=1.5)

    def test_undefined_when_feedforward_never_fails(self):
        code = CodeParams(blocklength=500, rate=0.25)
        with pytest.raises(ConditionalUndefinedError):
            backtrack_error_prob(50.0, code, rho=0.5)


class TestRateAdaptation:
    def test_singleton(self):
        code = CodeParams(blocklength=200, rate=1.0)
        assert adapt_rate(2.0, [1.5], code) == 1.5

    def test_perfect_channel_picks_max_rate(self):
        code = CodeParams(blocklength=400, rate=1.0)
        assert adapt_rate(1e6, [0.5, 1.0, 2.0, 4.0], code) == 4.0

    def test_matches_exhaustive_evaluation(self):
        rng = np.random.default_rng(8)
        bank = sinr_bank(AVERAGE, _link_with_snr(8.0), 20_000, rng)
        code = CodeParams(blocklength=200, rate=1.0)
        rates = [0.5, 1.5, 3.0]
        # independent exhaustive scoring with scipy's normal tail
        scores = {}
        for r in rates:
            c = np.log2(1.0 + bank) - r
            v = (1.0 - (1.0 + bank) ** -2.0) * np.log2(np.e) ** 2
            eps = float(np.mean(stats.norm.sf(c / np.sqrt(v / 200))))
            scores[r] = r * (1.0 - eps)
        best = max(sorted(rates), key=lambda r: scores[r])
        assert adapt_rate(bank, rates, code) == best

    def test_empty_rate_set_rejected(self):
        with pytest.raises(InvalidParameterError):
            adapt_rate(1.0, [], CodeParams(100, 1.0))

    def test_tie_breaks_toward_smaller_rate(self):
        # A dead channel scores every rate at zero throughput.
        code = CodeParams(blocklength=100, rate=1.0)
        assert adapt_rate(0.0, [2.0, 1.0, 3.0], code) == 1.0
