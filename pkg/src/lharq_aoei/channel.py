"""Shadowed-Rician fading, interference-aware SINR, and short-packet decoding
error probabilities.

The land-mobile-satellite link gain |h|^2 follows the shadowed-Rician law

    f(x) = alpha * exp(-beta * x) * 1F1(m, 1, delta * x),    x >= 0,

with

    alpha = (2bm / (2bm + Omega))^m / (2b),
    beta  = 1 / (2b),
    delta = Omega / (2b * (2bm + Omega)),

where 2b is the mean multipath power, Omega the mean line-of-sight power and
m the Nakagami shadowing severity.  Decoding error probabilities use the
short-packet normal approximation with the AWGN capacity C(g) = log2(1 + g)
and dispersion V(g) = (1 - (1 + g)^-2) * log2(e)^2; the source analysis
leaves C and V unspecified, so the standard AWGN forms are adopted here.

All powers and gains are linear; dB conversion happens at the config layer.
Every sampling routine takes an explicit numpy Generator, so operations are
pure and sample banks can be shared across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy import special as sp_special

from .errors import (
    ConditionalUndefinedError,
    InvalidParameterError,
    NumericalFailureError,
)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
LOG2_E = math.log2(math.e)

_SERIES_RTOL = 1e-12
_SERIES_MAX_TERMS = 10_000
# Beyond this argument the forward series needs log-domain handling; the
# large-argument expansion is accurate to ~1e-5 relative there, far below the
# exp(-beta*x) attenuation that accompanies such arguments in the PDF.
_SERIES_ARG_LIMIT = 600.0


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


def dbm_to_watts(value_dbm: float) -> float:
    return 1e-3 * 10.0 ** (value_dbm / 10.0)


# ---------------------------------------------------------------------------
# Confluent hypergeometric function 1F1 (Kummer's function)
# ---------------------------------------------------------------------------

def confluent_1f1(a: float, b: float, x: float) -> float:
    """Kummer's function 1F1(a; b; x) by forward power series.

    Terms are accumulated until the running term drops below 1e-12 of the
    partial sum.  For positive-integer ``a`` with ``b == 1`` the series is a
    finite polynomial times exp(x) and is evaluated exactly.
    """
    if b <= 0 and float(b).is_integer():
        raise InvalidParameterError(f"1F1 undefined for nonpositive integer b={b}")
    if x == 0.0:
        return 1.0
    if b == 1.0 and a > 0 and x > 0 and float(a).is_integer():
        return math.exp(_log_1f1_integer_a(int(a), x))
    term = 1.0
    total = 1.0
    for k in range(_SERIES_MAX_TERMS):
        term *= (a + k) * x / ((b + k) * (k + 1))
        total += term
        if not math.isfinite(total):
            break
        if abs(term) <= _SERIES_RTOL * abs(total):
            return total
    raise NumericalFailureError(
        f"1F1 series did not converge within {_SERIES_MAX_TERMS} terms "
        f"(a={a}, b={b}, x={x})"
    )


def _log_1f1_integer_a(a: int, x: float) -> float:
    # 1F1(a; 1; x) = exp(x) * sum_{k=0}^{a-1} C(a-1, k) x^k / k!  (finite sum)
    log_ax = math.log(abs(x)) if x != 0.0 else -math.inf
    logs = []
    for k in range(a):
        lg = math.lgamma(a) - math.lgamma(a - k) - 2.0 * math.lgamma(k + 1)
        logs.append(lg if k == 0 else lg + k * log_ax)
    if x >= 0:
        return x + float(sp_special.logsumexp(logs))
    # Alternating signs for x < 0; the sum stays O(1) there, sum directly.
    total = sum((-1.0) ** k * math.exp(lg) for k, lg in enumerate(logs))
    return x + math.log(abs(total))


def _log_1f1_m_1(m: float, s: float) -> float:
    """log 1F1(m; 1; s) for s >= 0, stable for large s."""
    if m == 0.0 or s == 0.0:
        return 0.0
    if m > 0 and float(m).is_integer():
        return _log_1f1_integer_a(int(m), s)
    if s <= _SERIES_ARG_LIMIT:
        return math.log(confluent_1f1(m, 1.0, s))
    # Large-argument expansion: 1F1(a;b;s) ~ G(b)/G(a) e^s s^(a-b) [1 + (1-a)(b-a)/s]
    corr = 1.0 + (1.0 - m) * (1.0 - m) / s
    return s + (m - 1.0) * math.log(s) - math.lgamma(m) + math.log(max(corr, 1e-300))


# ---------------------------------------------------------------------------
# Fading model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShadowedRicianParams:
    """Fading triple (b, m, Omega) of the shadowed-Rician power law."""

    b: float
    m: float
    omega: float

    def __post_init__(self):
        if not (self.b > 0 and math.isfinite(self.b)):
            raise InvalidParameterError(f"multipath parameter b must be positive, got {self.b}")
        if not (self.m >= 0 and math.isfinite(self.m)):
            raise InvalidParameterError(f"shadowing severity m must be >= 0, got {self.m}")
        if not (self.omega >= 0 and math.isfinite(self.omega)):
            raise InvalidParameterError(f"LoS power omega must be >= 0, got {self.omega}")
        a, be, de = self.coefficients()
        if not (math.isfinite(a) and a > 0 and be > 0 and 0 <= de < be):
            raise InvalidParameterError(
                f"degenerate shadowed-Rician coefficients alpha={a}, beta={be}, delta={de}"
            )

    def coefficients(self) -> tuple[float, float, float]:
        """(alpha, beta, delta) of the PDF."""
        two_b = 2.0 * self.b
        denom = two_b * self.m + self.omega
        if denom == 0.0:
            # m == 0 and omega == 0: pure Rayleigh power, no LoS at all.
            return 1.0 / two_b, 1.0 / two_b, 0.0
        alpha = math.exp(self.m * (math.log(two_b * self.m) - math.log(denom))) / two_b \
            if self.m > 0 else 1.0 / two_b
        beta = 1.0 / two_b
        delta = self.omega / (two_b * denom)
        return alpha, beta, delta

    @property
    def mean_power(self) -> float:
        return 2.0 * self.b + self.omega


#: Library-default parameter presets for heavy / average / light shadowing.
#: These are commonly used land-mobile-satellite fits chosen as package
#: defaults; they are not tied to any particular measurement campaign.
SHADOWING_PRESETS: dict[str, ShadowedRicianParams] = {
    "heavy": ShadowedRicianParams(b=0.063, m=0.739, omega=8.97e-4),
    "average": ShadowedRicianParams(b=0.126, m=10.1, omega=0.835),
    "light": ShadowedRicianParams(b=0.158, m=19.4, omega=1.29),
}


def shadowed_rician_pdf(x, params: ShadowedRicianParams):
    """Density of the channel power gain |h|^2 at ``x`` (scalar or array)."""
    alpha, beta, delta = params.coefficients()
    log_alpha = math.log(alpha)

    def _one(xv: float) -> float:
        if xv < 0:
            raise InvalidParameterError(f"gain must be nonnegative, got {xv}")
        return math.exp(log_alpha - beta * xv + _log_1f1_m_1(params.m, delta * xv))

    if np.ndim(x) == 0:
        return _one(float(x))
    return np.array([_one(float(v)) for v in np.asarray(x).ravel()]).reshape(np.shape(x))


def pdf_normalization(params: ShadowedRicianParams) -> float:
    """Integral of the PDF over [0, inf) by adaptive quadrature."""
    val, _ = integrate.quad(lambda x: shadowed_rician_pdf(x, params), 0.0, np.inf, limit=200)
    return val


def pdf_mean_power(params: ShadowedRicianParams) -> float:
    """First moment of the PDF by adaptive quadrature (should equal 2b + omega)."""
    val, _ = integrate.quad(
        lambda x: x * shadowed_rician_pdf(x, params), 0.0, np.inf, limit=200
    )
    return val


def sample_channel_gain(
    params: ShadowedRicianParams,
    rng: np.random.Generator,
    size: int | None = None,
):
    """Draw |h|^2 where h = scatter + LoS.

    The scatter part is a circular complex Gaussian with per-component
    variance ``b``; the LoS amplitude is Nakagami-m with spread ``omega``
    (amplitude^2 ~ Gamma(m, omega/m)).  The resulting power gain follows
    :func:`shadowed_rician_pdf`.
    """
    n = 1 if size is None else int(size)
    re = rng.normal(0.0, math.sqrt(params.b), n)
    im = rng.normal(0.0, math.sqrt(params.b), n)
    if params.m > 0 and params.omega > 0:
        los = np.sqrt(rng.gamma(params.m, params.omega / params.m, n))
    else:
        los = np.zeros(n)
    gain = (re + los) ** 2 + im**2
    return float(gain[0]) if size is None else gain


# ---------------------------------------------------------------------------
# Link budget and SINR
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterfererSpec:
    """One terrestrial interferer seen at the destination.

    The attenuation factor is (distance / ref_distance)^(-pathloss_exp);
    ``gain`` scales the effective transmit power.
    """

    distance_m: float
    power_w: float
    gain: float = 1.0
    pathloss_exp: float = 3.0
    ref_distance_m: float = 100.0

    def __post_init__(self):
        if self.distance_m <= 0:
            raise InvalidParameterError("interferer distance must be positive")
        if self.power_w < 0:
            raise InvalidParameterError("interferer power must be nonnegative")
        if not (2.0 <= self.pathloss_exp <= 6.0):
            raise InvalidParameterError(
                f"path-loss exponent must lie in [2, 6], got {self.pathloss_exp}"
            )
        if self.ref_distance_m <= 0:
            raise InvalidParameterError("reference distance must be positive")

    @property
    def attenuation(self) -> float:
        return (self.distance_m / self.ref_distance_m) ** (-self.pathloss_exp)


@dataclass(frozen=True)
class LinkBudget:
    """Geometry, gains and powers of the satellite-to-destination link."""

    distance_m: float
    freq_hz: float
    tx_gain: float
    rx_gain: float
    tx_power_w: float
    noise_w: float
    interferers: tuple[InterfererSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("distance_m", "freq_hz", "tx_gain", "rx_gain", "tx_power_w", "noise_w"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be strictly positive")
        object.__setattr__(self, "interferers", tuple(self.interferers))

    @property
    def path_gain(self) -> float:
        """Free-space factor times antenna gains: (c / 4 pi f d)^2 * Gt * Gr."""
        fs = (SPEED_OF_LIGHT / (4.0 * math.pi * self.freq_hz * self.distance_m)) ** 2
        return fs * self.tx_gain * self.rx_gain

    @property
    def mean_tx_snr(self) -> float:
        """Interference-free SNR at unit channel gain."""
        return self.path_gain * self.tx_power_w / self.noise_w


def sinr(link: LinkBudget, h2, g2=None):
    """SINR for satellite gain ``h2`` and per-interferer gains ``g2``.

    gamma = path_gain * P_tx * h2 / (sum_j att_j * P_j * g2_j + noise).
    With no interferers this reduces to the interference-free SNR form.
    ``h2`` may be a scalar or a 1-D array; ``g2`` must then have shape
    (len(interferers),) or (len(h2), len(interferers)).
    """
    h2 = np.asarray(h2, dtype=float)
    if np.any(h2 < 0):
        raise InvalidParameterError("channel gain h2 must be nonnegative")
    m = len(link.interferers)
    denom = link.noise_w
    if m:
        g2 = np.asarray(g2, dtype=float)
        if g2.shape[-1] != m:
            raise InvalidParameterError(
                f"g2 must supply one gain per interferer ({m}), got shape {g2.shape}"
            )
        weights = np.array(
            [it.attenuation * it.power_w * it.gain for it in link.interferers]
        )
        denom = denom + g2 @ weights
    elif g2 is not None and np.size(g2):
        raise InvalidParameterError("g2 given but the link has no interferers")
    out = link.path_gain * link.tx_power_w * h2 / denom
    return float(out) if out.ndim == 0 else out


def sinr_bank(
    params: ShadowedRicianParams,
    link: LinkBudget,
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Seed-fixed bank of SINR samples; immutable and shareable once built.

    Interferer fading is Rayleigh, i.e. unit-mean exponential power gains.
    """
    h2 = sample_channel_gain(params, rng, size)
    g2 = rng.exponential(1.0, (size, len(link.interferers))) if link.interferers else None
    bank = sinr(link, h2, g2)
    bank.setflags(write=False)
    return bank


# ---------------------------------------------------------------------------
# Short-packet decoding error probabilities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CodeParams:
    """Finite-blocklength code: n channel uses at ``rate`` bits per use,
    carrying subpackets of ``packet_bits`` bits."""

    blocklength: int
    rate: float
    packet_bits: int = 100

    def __post_init__(self):
        if self.blocklength < 1:
            raise InvalidParameterError("blocklength must be >= 1")
        if self.rate <= 0:
            raise InvalidParameterError("rate must be positive")
        if self.packet_bits < 1:
            raise InvalidParameterError("packet_bits must be >= 1")


def capacity(snr):
    return np.log2(1.0 + np.asarray(snr, dtype=float))


def dispersion(snr):
    g = np.asarray(snr, dtype=float)
    return (1.0 - (1.0 + g) ** -2.0) * LOG2_E**2


def qfunc(x):
    """Gaussian tail probability Q(x)."""
    return 0.5 * sp_special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def _normal_approx_error(snr, rate: float, blocklength: float):
    g = np.asarray(snr, dtype=float)
    c = capacity(g) - rate
    v = dispersion(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.where(v > 0, c / np.sqrt(v / blocklength), np.where(c >= 0, np.inf, -np.inf))
    return qfunc(arg)


def _resolve_bank(snr, mc_draws):
    bank = np.asarray(snr, dtype=float).ravel()
    if mc_draws is not None:
        if mc_draws < 1:
            raise InvalidParameterError("mc_draws must be >= 1")
        if mc_draws > bank.size:
            raise InvalidParameterError(
                f"mc_draws={mc_draws} exceeds bank size {bank.size}"
            )
        bank = bank[:mc_draws]
    return bank


def feedforward_error_prob(snr, code: CodeParams, mc_draws: int | None = None) -> float:
    """Mean decoding error probability of one feedforward attempt.

    For a scalar ``snr`` the normal approximation is evaluated exactly; for a
    sample bank the expectation is a Monte Carlo average over the first
    ``mc_draws`` entries (all entries when ``mc_draws`` is None).
    """
    if np.ndim(snr) == 0:
        if mc_draws is not None and mc_draws < 1:
            raise InvalidParameterError("mc_draws must be >= 1")
        eps = float(_normal_approx_error(float(snr), code.rate, code.blocklength))
    else:
        eps = float(np.mean(_normal_approx_error(_resolve_bank(snr, mc_draws), code.rate, code.blocklength)))
    return min(1.0, max(0.0, eps))


def threshold_error_prob(snr, gamma_th: float, mc_draws: int | None = None) -> float:
    """Pr{SINR < gamma_th} estimated on the sample bank."""
    if gamma_th < 0:
        raise InvalidParameterError("gamma_th must be nonnegative")
    bank = _resolve_bank(snr, mc_draws)
    return float(np.mean(bank < gamma_th))


def backtrack_error_prob(
    snr, code: CodeParams, rho: float, mc_draws: int | None = None
) -> float:
    """Conditional probability that the reverse recovery of an earlier packet
    fails given its feedforward attempt failed.

    The numerator reuses the normal approximation with the blocklength scaled
    to the prior-information share ``rho * n``; the denominator is the
    feedforward error probability on the identical sample set, so the ratio
    uses consistent draws.  The result is clamped to [0, 1].
    """
    if not (0.0 < rho <= 1.0):
        raise InvalidParameterError(f"mixing rate rho must lie in (0, 1], got {rho}")
    if np.ndim(snr) == 0:
        num = float(_normal_approx_error(float(snr), code.rate, rho * code.blocklength))
        den = float(_normal_approx_error(float(snr), code.rate, code.blocklength))
    else:
        bank = _resolve_bank(snr, mc_draws)
        num = float(np.mean(_normal_approx_error(bank, code.rate, rho * code.blocklength)))
        den = float(np.mean(_normal_approx_error(bank, code.rate, code.blocklength)))
    if den < 1e-12:
        raise ConditionalUndefinedError(
            "feedforward decoding never fails on this sample set; "
            "the conditional backtracking error probability is undefined"
        )
    return min(1.0, max(0.0, num / den))


def adapt_rate(snr, rate_set, code: CodeParams, mc_draws: int | None = None) -> float:
    """Throughput-maximizing rate: argmax of R * (1 - eps(R)) over the set.

    Ties break toward the smaller rate.
    """
    rates = sorted(float(r) for r in rate_set)
    if not rates:
        raise InvalidParameterError("rate_set must be nonempty")
    best_rate, best_score = rates[0], -1.0
    for r in rates:
        trial = CodeParams(code.blocklength, r, code.packet_bits)
        score = r * (1.0 - feedforward_error_prob(snr, trial, mc_draws))
        if score > best_score:
            best_rate, best_score = r, score
    return best_rate
