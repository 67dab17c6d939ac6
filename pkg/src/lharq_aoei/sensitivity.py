"""Parameter-relationship layer: how the selection weight and decay factor
steer the decoding error rate, and through it the average age.

The modeling identity

    eps = (index - ln(weight) / decay) / sent_total

links one packet's selection weight to the per-slot decoding error rate.
It is an identity, not a guarded formula: for parameter combinations that
push eps outside [0, 1] the functions below emit an out-of-model warning and
return the value anyway, because the identity's domain is not delimited in
the underlying analysis.

Differentiating the identity gives

    d(eps)/d(weight) = -1 / (sent_total * decay * weight)   (always negative),
    d(eps)/d(decay)  = ln(weight) / (sent_total * decay^2),

so the chain-rule age sensitivities are those factors times d(age)/d(eps),
which is evaluated by central finite differences of the closed-form age,
applying eps to both the feedforward and the recovery-step error probability
(the identity ties the recovery failure rate to the same per-slot error
rate).  A published statement of the weight sensitivity drops the minus sign
carried by d(eps)/d(weight); the finite-difference cross-check pins the
negative form used here.  Weight > 1 makes the age grow with the decay
factor, weight < 1 makes it shrink, and weight = 1 zeroes the decay
sensitivity exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

from .analytics import IidErrorModel, Mode, average_aoei
from .errors import (
    DegenerateTargetError,
    InvalidParameterError,
    NumericalFailureError,
    OutOfModelWarning,
)


@dataclass(frozen=True)
class WeightContext:
    """One packet's selection weight inside the identity.

    ``index``: position of the packet in the ascending generation order
    (1 = oldest).  ``sent_total``: cumulative packets sent so far.
    """

    weight: float
    decay: float
    index: int
    sent_total: float

    def __post_init__(self):
        if self.weight <= 0:
            raise InvalidParameterError(f"weight must be positive, got {self.weight}")
        if self.decay <= 0:
            raise InvalidParameterError(f"decay must be positive, got {self.decay}")
        if self.index < 1:
            raise InvalidParameterError(f"index must be >= 1, got {self.index}")
        if self.sent_total <= 0:
            raise InvalidParameterError("sent_total must be positive")
        if self.implied_unacked < 0:
            warnings.warn(
                f"implied outstanding count {self.implied_unacked:.4g} is negative; "
                "the identity is being used outside its model region",
                OutOfModelWarning,
                stacklevel=2,
            )

    @property
    def implied_unacked(self) -> float:
        return self.index - math.log(self.weight) / self.decay


def error_prob_from_weight(ctx: WeightContext) -> float:
    """eps = (index - ln(weight)/decay) / sent_total, unclamped.

    At weight 1 this reduces to index / sent_total.  Values outside [0, 1]
    are returned with an out-of-model warning; callers treating the result
    as a probability must check the range.
    """
    eps = ctx.implied_unacked / ctx.sent_total
    if not (0.0 <= eps <= 1.0):
        warnings.warn(
            f"implied error probability {eps:.4g} lies outside [0, 1]",
            OutOfModelWarning,
            stacklevel=2,
        )
    return eps


def age_eps_sensitivity(
    eps: float,
    max_rounds: int,
    mode: Mode = "corrected",
    rel_step: float = 1e-3,
    check: bool = False,
) -> float:
    """d(age)/d(eps) by central finite differences of the closed-form age.

    ``eps`` enters both the feedforward and the recovery-step probability.
    Step h = max(1e-6, rel_step * eps).  With ``check`` enabled the halved
    step must agree within 1e-3 relative or the derivative is rejected.
    """
    h = max(1e-6, rel_step * eps)
    if eps - h < 0.0 or eps + h >= 1.0:
        raise InvalidParameterError(
            f"eps={eps} with step {h} leaves the valid probability range"
        )

    def _diff(step: float) -> float:
        hi = average_aoei(IidErrorModel(eps + step, eps + step, max_rounds), mode).aoei
        lo = average_aoei(IidErrorModel(eps - step, eps - step, max_rounds), mode).aoei
        return (hi - lo) / (2.0 * step)

    d1 = _diff(h)
    if check:
        d2 = _diff(h / 2.0)
        scale = max(abs(d1), abs(d2), 1e-12)
        if abs(d1 - d2) / scale > 1e-3:
            raise NumericalFailureError(
                f"finite-difference derivative inconsistent between steps "
                f"({d1} vs {d2} at eps={eps})"
            )
    return d1


def aoei_partials(ctx: WeightContext, d_age_d_eps: float) -> tuple[float, float]:
    """Chain-rule age sensitivities (d/d weight, d/d decay).

    The weight factor is -1/(sent_total * decay * weight): raising the weight
    lowers eps, so the age moves against d(age)/d(eps) there.
    """
    if not math.isfinite(d_age_d_eps):
        raise InvalidParameterError("d_age_d_eps must be finite")
    factor_w = -1.0 / (ctx.sent_total * ctx.decay * ctx.weight)
    factor_b = math.log(ctx.weight) / (ctx.sent_total * ctx.decay**2)
    return factor_w * d_age_d_eps, factor_b * d_age_d_eps


def optimal_decay(
    weight: float, index: int, sent_total: float, eps_target: float
) -> float:
    """Decay factor hitting a target error rate: ln(weight) / (index - S*eps).

    Despite its billing as an age minimizer, this is the algebraic inversion
    of the weight identity at the target rate; the round trip with
    :func:`error_prob_from_weight` is exact.  Nonpositive results are
    out-of-model (the decay factor must be positive) and warned about.
    """
    if weight <= 0:
        raise InvalidParameterError("weight must be positive")
    if sent_total <= 0:
        raise InvalidParameterError("sent_total must be positive")
    if not (0.0 < eps_target < 1.0):
        raise InvalidParameterError("eps_target must lie in (0, 1)")
    denom = index - sent_total * eps_target
    if abs(denom) < 1e-12:
        raise DegenerateTargetError(
            "target error rate makes the inversion denominator vanish"
        )
    beta_star = math.log(weight) / denom
    if beta_star <= 0:
        warnings.warn(
            f"optimal decay {beta_star:.4g} is nonpositive; the target is "
            "unreachable with a positive decay factor",
            OutOfModelWarning,
            stacklevel=2,
        )
    return beta_star


class Regime(Enum):
    """Operating regime by selection weight."""

    FRESHNESS_PRIORITY = "freshness-priority"
    EFFICIENCY_PRIORITY = "efficiency-priority"
    NEUTRAL = "neutral"


def regime_classify(weight: float) -> Regime:
    """weight > 1: raising the decay raises eps and the age (freshness pays
    for efficiency); weight < 1: the opposite; weight = 1: decay-neutral."""
    if weight <= 0:
        raise InvalidParameterError("weight must be positive")
    if weight > 1.0:
        return Regime.FRESHNESS_PRIORITY
    if weight < 1.0:
        return Regime.EFFICIENCY_PRIORITY
    return Regime.NEUTRAL


def write_sensitivity_csv(rows: list[dict], path) -> None:
    """Emit grid rows as CSV: weight, decay, eps, d_weight, d_decay, regime,
    note.  Floats format via repr so reruns stay byte-identical."""
    import csv

    columns = ("weight", "decay", "eps", "d_weight", "d_decay", "regime", "note")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns]
            )


def sensitivity_grid(
    weights,
    decays,
    index: int,
    sent_total: float,
    max_rounds: int,
    mode: Mode = "corrected",
) -> list[dict]:
    """Rows (weight, decay, eps, d_weight, d_decay, regime, note) over a grid.

    Out-of-model grid points keep their eps but carry NaN sensitivities.
    The unit-weight row keeps the nonzero chain-rule weight sensitivity and
    is annotated, since published summaries list it as zero.
    """
    rows = []
    for w in weights:
        for d in decays:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", OutOfModelWarning)
                ctx = WeightContext(weight=w, decay=d, index=index, sent_total=sent_total)
                eps = error_prob_from_weight(ctx)
            note = ""
            if 0.0 < eps < 1.0:
                try:
                    slope = age_eps_sensitivity(eps, max_rounds, mode)
                    d_w, d_b = aoei_partials(ctx, slope)
                except (InvalidParameterError, NumericalFailureError):
                    d_w, d_b = math.nan, math.nan
                    note = "out-of-model"
            else:
                d_w, d_b = math.nan, math.nan
                note = "out-of-model"
            if w == 1.0 and note == "":
                note = "weight-sensitivity nonzero at unit weight"
            rows.append(
                {
                    "weight": w,
                    "decay": d,
                    "eps": eps,
                    "d_weight": d_w,
                    "d_decay": d_b,
                    "regime": regime_classify(w).value,
                    "note": note,
                }
            )
    return rows
