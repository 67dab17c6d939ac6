"""Slot-level state machine of the truncated layered-HARQ protocol.

One transmission attempt occupies exactly one slot.  A circle starts with a
pure fresh update; every following round mixes a ``mixing_rate`` share of the
previous round's bits into the new packet.  A feedforward success ends the
circle with a departure and triggers the reverse recovery walk; hitting the
round limit discards the circle's packets and starts a new circle, with the
burnt slots still counted inside the interdeparture time.

The recovery walk steps backwards from the round before the success, each
step failing independently with the per-step probability supplied by the
error model.  The walk's depth is the number of recovered packets when a
step fails inside the circle.  A walk that never fails inside the circle has
no failed packet to anchor the age timeline on; one final draw decides
whether the chain terminates at the circle boundary (depth = rounds - 1) or
escapes it, in which case the departure contributes depth 0.  This makes the
realized depth distribution exactly the geometric mass (1-p)^b p restricted
to b < rounds, which is what the closed-form analysis sums.

Decoding outcomes are realized as Bernoulli draws against the analytic error
probability of the configured model: a constant pair (the i.i.d. regime the
closed forms cover) or per-round fading redraws in threshold / short-packet
mode.  Draw order per circle, shared with the brute-force oracle: one
uniform per round, then the recovery-walk uniforms, then the boundary draw
when every step succeeded; nothing is drawn when the success came in round 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .channel import (
    CodeParams,
    LinkBudget,
    ShadowedRicianParams,
    backtrack_error_prob,
    feedforward_error_prob,
    sample_channel_gain,
    sinr,
)
from .errors import (
    ConditionalUndefinedError,
    ConstraintViolationError,
    InvalidParameterError,
    ProtocolStateError,
)

TraceSink = Callable[[dict], None]


@dataclass(frozen=True)
class HarqConfig:
    """Protocol knobs: round limit, packet mixing share, code and threshold."""

    max_rounds: int
    mixing_rate: float
    code: CodeParams
    snr_threshold: float = 1.0

    def __post_init__(self):
        if self.max_rounds < 1:
            raise InvalidParameterError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if not (0.0 < self.mixing_rate < 1.0):
            raise InvalidParameterError(
                f"mixing_rate must lie in (0, 1), got {self.mixing_rate}"
            )
        if self.mixing_rate >= self.code.rate:
            raise ConstraintViolationError(
                f"mixing_rate ({self.mixing_rate}) must stay below every coding "
                f"rate in use ({self.code.rate}); the prior share may not crowd "
                "out the fresh payload"
            )
        if self.snr_threshold < 0:
            raise InvalidParameterError("snr_threshold must be nonnegative")


@dataclass(frozen=True)
class MixedPacket:
    """Bit budget of one transmitted packet: fresh payload plus the embedded
    share of the previous round's undecoded packet."""

    new_bits: int
    prior_bits: int
    gen_slot: int
    prior_gen_slot: Optional[int] = None

    def __post_init__(self):
        if self.new_bits < 0 or self.prior_bits < 0:
            raise InvalidParameterError("bit counts must be nonnegative")


def mix_packet(
    prev: Optional[int], fresh: int, cfg: HarqConfig, rate: float
) -> MixedPacket:
    """Compose the packet for one round.

    The first round of a circle carries no prior bits; later rounds embed
    round(mixing_rate * packet_bits) bits of the previous round's packet and
    fill the remaining rate * packet_bits budget with the fresh update.
    """
    total_bits = round(rate * cfg.code.packet_bits)
    if prev is None:
        return MixedPacket(new_bits=total_bits, prior_bits=0, gen_slot=fresh)
    if cfg.mixing_rate >= rate:
        raise ConstraintViolationError(
            f"mixing_rate ({cfg.mixing_rate}) must be smaller than the round's "
            f"coding rate ({rate})"
        )
    prior_bits = round(cfg.mixing_rate * cfg.code.packet_bits)
    return MixedPacket(
        new_bits=total_bits - prior_bits,
        prior_bits=prior_bits,
        gen_slot=fresh,
        prior_gen_slot=prev,
    )


@dataclass(frozen=True)
class CycleRecord:
    """Outcome of one transmission circle."""

    rounds_used: int
    ff_success: bool
    backtrack_depth: int
    departure_slot: int
    generation_slots: tuple[int, ...]

    def __post_init__(self):
        if self.backtrack_depth > self.rounds_used - 1 or self.backtrack_depth < 0:
            raise InvalidParameterError(
                f"depth {self.backtrack_depth} impossible with "
                f"{self.rounds_used} rounds"
            )
        if not self.ff_success and self.backtrack_depth != 0:
            raise InvalidParameterError("a discarded circle recovers nothing")


# ---------------------------------------------------------------------------
# Error models
# ---------------------------------------------------------------------------

class BernoulliErrorModel:
    """Constant per-round probabilities: the regime the closed forms cover."""

    def __init__(self, p_ff: float, p_bt: float):
        if not (0.0 <= p_ff <= 1.0 and 0.0 <= p_bt <= 1.0):
            raise InvalidParameterError("probabilities must lie in [0, 1]")
        self.p_ff = p_ff
        self.p_bt = p_bt

    def round_error(self, rng):
        return self.p_ff, None

    def backtrack_error(self, ctx) -> float:
        return self.p_bt


class ChannelErrorModel:
    """Per-round fading redraw (the rounds see i.i.d. channel states).

    ``decode_mode='threshold'`` declares a round failed exactly when its SINR
    draw is below the configured threshold; ``'fbl'`` draws the outcome
    against the short-packet error probability at the SINR draw.  Recovery
    steps use either a fixed per-step probability or the conditional ratio
    evaluated at the stored SINR of the round being recovered.
    """

    def __init__(
        self,
        fading: ShadowedRicianParams,
        link: LinkBudget,
        cfg: HarqConfig,
        decode_mode: str = "threshold",
        fixed_p_bt: Optional[float] = None,
    ):
        if decode_mode not in ("threshold", "fbl"):
            raise InvalidParameterError(f"unknown decode_mode {decode_mode!r}")
        if fixed_p_bt is not None and not (0.0 <= fixed_p_bt <= 1.0):
            raise InvalidParameterError("fixed_p_bt must lie in [0, 1]")
        self.fading = fading
        self.link = link
        self.cfg = cfg
        self.decode_mode = decode_mode
        self.fixed_p_bt = fixed_p_bt

    def _draw_sinr(self, rng) -> float:
        h2 = sample_channel_gain(self.fading, rng)
        g2 = (
            rng.exponential(1.0, len(self.link.interferers))
            if self.link.interferers
            else None
        )
        return float(sinr(self.link, h2, g2))

    def round_error(self, rng):
        gamma = self._draw_sinr(rng)
        if self.decode_mode == "threshold":
            eps = 1.0 if gamma < self.cfg.snr_threshold else 0.0
        else:
            eps = feedforward_error_prob(gamma, self.cfg.code)
        return eps, gamma

    def backtrack_error(self, ctx) -> float:
        if self.fixed_p_bt is not None:
            return self.fixed_p_bt
        try:
            return backtrack_error_prob(ctx, self.cfg.code, self.cfg.mixing_rate)
        except ConditionalUndefinedError:
            # The stored draw makes a feedforward failure numerically
            # impossible, yet one happened; the clamped ratio tends to 1
            # there, so the recovery step is treated as surely failing.
            return 1.0


# ---------------------------------------------------------------------------
# Slot-level engine
# ---------------------------------------------------------------------------

@dataclass
class CircleState:
    """Mutable per-circle bookkeeping while the rounds run."""

    cfg: HarqConfig
    start_slot: int = 0
    circle_id: int = 0
    rounds_used: int = 0
    ff_success: bool = False
    contexts: list = field(default_factory=list)

    @property
    def current_slot(self) -> int:
        return self.start_slot + self.rounds_used

    @property
    def exhausted(self) -> bool:
        return self.ff_success or self.rounds_used >= self.cfg.max_rounds


def attempt_round(state: CircleState, model, rng, trace: TraceSink | None = None) -> bool:
    """Run one feedforward attempt; returns True on decoding success."""
    if state.exhausted:
        raise ProtocolStateError("circle has no remaining rounds")
    eps, ctx = model.round_error(rng)
    state.rounds_used += 1
    state.contexts.append(ctx)
    success = rng.random() >= eps
    state.ff_success = success
    if trace is not None:
        trace(
            {
                "slot": state.current_slot,
                "event": "round",
                "circle": state.circle_id,
                "round": state.rounds_used,
                "outcome": "success" if success else "failure",
            }
        )
    return success


def backtrack(state: CircleState, model, rng, trace: TraceSink | None = None) -> int:
    """Reverse recovery walk after a feedforward success.

    Walks back from the round before the success; each step fails
    independently with the model's per-step probability for the round being
    recovered.  A walk that clears every prior round takes one more draw at
    the circle boundary: failing there anchors the chain at depth
    rounds - 1, clearing it leaves the chain unanchored and yields depth 0.
    """
    if not state.ff_success:
        raise ProtocolStateError("backtracking requires a successful circle")
    n = state.rounds_used
    depth = 0
    if n > 1:
        while depth < n - 1:
            p_step = model.backtrack_error(state.contexts[n - 2 - depth])
            if rng.random() < p_step:
                break
            depth += 1
        else:
            p_anchor = model.backtrack_error(state.contexts[0])
            if rng.random() >= p_anchor:
                depth = 0
    if trace is not None:
        trace(
            {
                "slot": state.current_slot,
                "event": "backtrack",
                "circle": state.circle_id,
                "round": n,
                "depth": depth,
            }
        )
    return depth


def run_circle(
    cfg: HarqConfig,
    model,
    rng,
    start_slot: int = 0,
    circle_id: int = 0,
    trace: TraceSink | None = None,
) -> CycleRecord:
    """Run one circle to completion: departure or truncation."""
    state = CircleState(cfg, start_slot, circle_id)
    while not state.exhausted:
        attempt_round(state, model, rng, trace)
    gen_slots = tuple(range(start_slot + 1, start_slot + state.rounds_used + 1))
    if state.ff_success:
        depth = backtrack(state, model, rng, trace)
        if trace is not None:
            trace(
                {
                    "slot": state.current_slot,
                    "event": "departure",
                    "circle": circle_id,
                    "round": state.rounds_used,
                    "depth": depth,
                }
            )
        return CycleRecord(state.rounds_used, True, depth, state.current_slot, gen_slots)
    if trace is not None:
        trace(
            {
                "slot": state.current_slot,
                "event": "truncate",
                "circle": circle_id,
                "round": state.rounds_used,
                "depth": 0,
            }
        )
    return CycleRecord(state.rounds_used, False, 0, state.current_slot, gen_slots)


@dataclass
class DepartureSequence:
    """Departure-indexed view of a run: gaps, depths and the record stream."""

    interdepartures: np.ndarray
    depths: np.ndarray
    records: list[CycleRecord]

    @property
    def total_slots(self) -> int:
        return int(self.interdepartures.sum())


def run_departure_sequence(
    cfg: HarqConfig,
    model,
    num_departures: int,
    rng,
    collect_records: bool = True,
    trace: TraceSink | None = None,
) -> DepartureSequence:
    """Chain circles until ``num_departures`` feedforward successes.

    Interdeparture times include the slots burnt by truncated circles: the
    failed circle's rounds stay inside the running gap, only a success
    closes it.
    """
    if num_departures < 1:
        raise InvalidParameterError("num_departures must be >= 1")
    y = np.empty(num_departures, dtype=np.int64)
    b = np.empty(num_departures, dtype=np.int64)
    records: list[CycleRecord] = []
    slot = 0
    gap = 0
    done = 0
    circle_id = 0
    while done < num_departures:
        rec = run_circle(cfg, model, rng, start_slot=slot, circle_id=circle_id, trace=trace)
        circle_id += 1
        slot = rec.departure_slot
        gap += rec.rounds_used
        if collect_records:
            records.append(rec)
        if rec.ff_success:
            y[done] = gap
            b[done] = rec.backtrack_depth
            gap = 0
            done += 1
    return DepartureSequence(y, b, records)


def run_circles(cfg: HarqConfig, model, num_circles: int, rng):
    """Per-circle outcome arrays (rounds_used, ff_success, depth) for
    distribution-level checks."""
    if num_circles < 1:
        raise InvalidParameterError("num_circles must be >= 1")
    rounds = np.empty(num_circles, dtype=np.int64)
    success = np.empty(num_circles, dtype=bool)
    depth = np.empty(num_circles, dtype=np.int64)
    for i in range(num_circles):
        rec = run_circle(cfg, model, rng, start_slot=0, circle_id=i)
        rounds[i] = rec.rounds_used
        success[i] = rec.ff_success
        depth[i] = rec.backtrack_depth
    return rounds, success, depth


# ---------------------------------------------------------------------------
# Vectorized i.i.d. fast path
# ---------------------------------------------------------------------------

def sample_departures(
    p_ff: float,
    p_bt: float,
    max_rounds: int,
    size: int,
    rng: np.random.Generator | None = None,
    uniforms: tuple[np.ndarray, np.ndarray] | None = None,
):
    """Draw ``size`` departures of the i.i.d. regime in one shot.

    Because rounds are i.i.d. across circle boundaries, the interdeparture
    time is the plain geometric round index of the first success, and the
    recovery chain length is geometric with the escape-to-zero rule at the
    circle boundary.  Supplying ``uniforms`` (two arrays in [0, 1)) couples
    runs across parameter values for common-random-number sweeps.

    Returns (y, n, b): interdeparture slots, success round within its circle,
    and recovery depth, all integer arrays of length ``size``.
    """
    if not (0.0 <= p_ff < 1.0):
        raise InvalidParameterError("p_ff must lie in [0, 1)")
    if not (0.0 <= p_bt <= 1.0):
        raise InvalidParameterError("p_bt must lie in [0, 1]")
    if max_rounds < 1:
        raise InvalidParameterError("max_rounds must be >= 1")
    if uniforms is None:
        if rng is None:
            raise InvalidParameterError("provide either rng or uniforms")
        u_round = rng.random(size)
        u_walk = rng.random(size)
    else:
        u_round, u_walk = (np.asarray(u, dtype=float) for u in uniforms)
        if u_round.shape != (size,) or u_walk.shape != (size,):
            raise InvalidParameterError("uniform arrays must have shape (size,)")

    if p_ff == 0.0:
        y = np.ones(size, dtype=np.int64)
    else:
        y = 1 + np.floor(np.log1p(-u_round) / math.log(p_ff)).astype(np.int64)
    n = (y - 1) % max_rounds + 1

    if p_bt == 1.0:
        chain = np.zeros(size, dtype=np.int64)
    elif p_bt == 0.0:
        chain = np.full(size, np.iinfo(np.int64).max, dtype=np.int64)
    else:
        chain = np.floor(np.log1p(-u_walk) / math.log1p(-p_bt)).astype(np.int64)
    b = np.where(chain <= n - 1, chain, 0)
    return y, n, b


def jsonl_trace_writer(fileobj) -> TraceSink:
    """Trace sink that writes one JSON object per line to ``fileobj``."""

    def sink(event: dict) -> None:
        fileobj.write(json.dumps(event, sort_keys=True))
        fileobj.write("\n")

    return sink
