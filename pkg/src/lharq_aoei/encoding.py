"""Adaptive encoded-retransmission policy at packet-counting granularity.

Each slot the sender does exactly one of three things: transmit a freshly
arrived update immediately (zero wait), transmit a coded copy of one
still-unacknowledged packet, or stay silent.  Coded transmissions are gated
by the probability that the packet will still be useful when it lands: with
``n_unacked`` outstanding packets, ``acked_encoded`` coded packets already
confirmed at the receiver and ``in_flight`` coded packets of unknown fate,
the usefulness probability is the binomial tail

    P_d = sum_{i=0}^{n_unacked - acked} C(in_flight, i) (1/R)^i (1 - 1/R)^(in_flight - i)

when the deficit can be covered in flight, and 1 otherwise.  The packet to
encode is drawn with weights exp(-(N - i) * decay) over the ascending
generation order, so larger decay concentrates on the freshest outstanding
packet and decay 0 is uniform random linear coding.

Coded packets are modeled at the counting level: a transmission lands intact
with probability 1 - erase_prob and, if intact, resolves its target with
probability 1/R (the rate-R decodability model).  No Galois-field arithmetic
is performed.  The receiver's decoded count D_z = d_z + Binomial(d_z, 1/R)
appears in the source analysis but has no downstream use; it is intentionally
not tracked.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParameterError, InvalidStateError


@dataclass(frozen=True)
class EncodingPolicy:
    """Decision threshold, selection decay and feedback delay (slots)."""

    decision_threshold: float
    decay: float
    feedback_delay: int = 0

    def __post_init__(self):
        if not (0.0 <= self.decision_threshold <= 1.0):
            raise InvalidParameterError(
                f"decision_threshold must lie in [0, 1], got {self.decision_threshold}"
            )
        if self.decay < 0:
            raise InvalidParameterError(f"decay must be >= 0, got {self.decay}")
        if self.feedback_delay < 0:
            raise InvalidParameterError("feedback_delay must be >= 0")


@dataclass(frozen=True)
class SenderState:
    """Sender-known snapshot at the top of a slot.

    ``unacked``: generation slots of packets known undecodable, ascending.
    ``acked_encoded``: coded packets confirmed received whose targets are
    still outstanding.  ``in_flight``: coded packets with pending feedback.
    """

    unacked: tuple[int, ...]
    acked_encoded: int
    in_flight: int
    sent_total: int
    delivered_total: int

    def __post_init__(self):
        if min(self.acked_encoded, self.in_flight, self.sent_total, self.delivered_total) < 0:
            raise InvalidStateError("state counts must be nonnegative")
        if self.acked_encoded > len(self.unacked):
            raise InvalidStateError(
                "acked_encoded cannot exceed the number of outstanding packets"
            )
        if self.delivered_total > self.sent_total:
            raise InvalidStateError("delivered_total cannot exceed sent_total")


class ActionKind(Enum):
    TRANSMIT_NEW = "transmit_new"
    TRANSMIT_ENCODED = "transmit_encoded"
    SILENT = "silent"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    packet_index: Optional[int] = None
    usefulness: Optional[float] = None


def decoding_probability(state: SenderState, rate: float) -> float:
    """Probability that one more coded packet is non-redundant.

    A variant of this expression circulates with the acknowledged count in
    the binomial exponent; that variant does not sum to a valid mass, so the
    in-flight count is used throughout.
    """
    if rate < 1.0:
        raise InvalidParameterError(f"rate must be >= 1, got {rate}")
    n_unacked = len(state.unacked)
    deficit = n_unacked - state.acked_encoded
    if deficit < 0:
        raise InvalidStateError("acked_encoded exceeds outstanding packets")
    if n_unacked > state.acked_encoded + state.in_flight:
        return 1.0
    p = 1.0 / rate
    total = math.fsum(
        math.comb(state.in_flight, i) * p**i * (1.0 - p) ** (state.in_flight - i)
        for i in range(0, deficit + 1)
    )
    return min(1.0, max(0.0, total))


def select_packet(unacked: Sequence[int], decay: float, rng: np.random.Generator) -> int:
    """Pick the position (0 = oldest) of the packet to encode.

    Weights exp(-(N - 1 - position) * decay) over the ascending generation
    order are normalized into a distribution before sampling; decay 0 makes
    the choice uniform, large decay near-deterministically newest.
    """
    n = len(unacked)
    if n == 0:
        raise InvalidStateError("cannot select from an empty outstanding set")
    if decay < 0:
        raise InvalidParameterError("decay must be >= 0")
    if n == 1:
        return 0
    weights = np.exp(-decay * np.arange(n - 1, -1, -1, dtype=float))
    cdf = np.cumsum(weights)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, n - 1)


def decide_action(
    state: SenderState,
    new_arrival: bool,
    policy: EncodingPolicy,
    rate: float,
    rng: np.random.Generator,
) -> Action:
    """One-slot decision: fresh update first, gated coded copy otherwise."""
    if new_arrival:
        return Action(ActionKind.TRANSMIT_NEW)
    usefulness = decoding_probability(state, rate)
    if usefulness > policy.decision_threshold and state.unacked:
        return Action(
            ActionKind.TRANSMIT_ENCODED,
            packet_index=select_packet(state.unacked, policy.decay, rng),
            usefulness=usefulness,
        )
    return Action(ActionKind.SILENT, usefulness=usefulness)


def transmission_efficiency(sent: int, useful: int) -> float:
    """Share of transmitted packets that delivered new information."""
    if not (sent >= useful >= 0):
        raise InvalidStateError(f"need sent >= useful >= 0, got {sent}, {useful}")
    return useful / sent if sent else 0.0


# ---------------------------------------------------------------------------
# Slot-level policy simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicySimConfig:
    """Closed-loop run: arrivals, channel erasures and the policy itself.

    ``strategy='baseline'`` disables the gate and the weighting and always
    retransmits the newest outstanding packet on idle slots (the plain
    retransmit-on-NACK comparison arm).
    """

    slots: int
    policy: EncodingPolicy
    rate: float = 2.0
    arrival_prob: float = 0.25
    erase_prob: float = 0.0
    strategy: str = "adaptive"

    def __post_init__(self):
        if self.slots < 1:
            raise InvalidParameterError("slots must be >= 1")
        if self.rate < 1.0:
            raise InvalidParameterError("rate must be >= 1")
        if not (0.0 < self.arrival_prob <= 1.0):
            raise InvalidParameterError("arrival_prob must lie in (0, 1]")
        if not (0.0 <= self.erase_prob < 1.0):
            raise InvalidParameterError("erase_prob must lie in [0, 1)")
        if self.strategy not in ("adaptive", "baseline"):
            raise InvalidParameterError(f"unknown strategy {self.strategy!r}")


@dataclass
class PolicyTrace:
    """Counting-level outcome of one policy run."""

    slots: int
    generated: int = 0
    sent: int = 0
    delivered: int = 0
    age_sum: float = 0.0
    encoded_sent: int = 0
    silent_slots: int = 0
    unacked_final: int = 0

    def efficiency(self) -> float:
        return transmission_efficiency(self.sent, self.delivered)

    def delivery_ratio(self) -> float:
        return self.delivered / self.generated if self.generated else 0.0

    def mean_age(self) -> float:
        return self.age_sum / self.slots


def packet_delivery_ratio(trace: PolicyTrace) -> float:
    """Independent packets delivered over packets generated.

    The literal published expression for this metric mixes a per-departure
    gap with a long-run count and is dimensionally inconsistent; the prose
    definition (delivered independent / generated) is implemented instead.
    """
    if trace.slots < 1:
        raise InvalidParameterError("trace must cover at least one slot")
    return trace.delivery_ratio()


LogSink = Callable[[dict], None]


def run_policy(
    cfg: PolicySimConfig, rng: np.random.Generator, log: LogSink | None = None
) -> PolicyTrace:
    """Closed-loop simulation of the per-slot policy.

    Outcomes resolve at the receiver in the transmission slot; the sender
    learns them ``feedback_delay + 1`` slots later, so the outstanding set at
    slot z reflects transmissions up to z - feedback_delay - 1 only.
    """
    policy = cfg.policy
    lag = policy.feedback_delay + 1
    decode_p = 1.0 / cfg.rate
    trace = PolicyTrace(slots=cfg.slots)

    unacked: dict[int, int] = {}  # packet id -> generation slot (sender view)
    credited: set[int] = set()  # unacked targets with a confirmed coded copy
    in_flight: deque = deque()  # (feedback_slot, kind, pkt, intact, decoded)
    delivered: set[int] = set()
    newest_gen = -1

    for z in range(cfg.slots):
        while in_flight and in_flight[0][0] <= z:
            _, kind, pkt, intact, decoded = in_flight.popleft()
            if decoded:
                unacked.pop(pkt, None)
                credited.discard(pkt)
            elif kind == "new":
                unacked[pkt] = pkt
            elif intact and pkt in unacked:
                credited.add(pkt)

        arrival = rng.random() < cfg.arrival_prob
        ordered = tuple(sorted(unacked))
        coded_pending = sum(1 for ev in in_flight if ev[1] == "coded")
        state = SenderState(
            unacked=ordered,
            acked_encoded=len(credited),
            in_flight=coded_pending,
            sent_total=trace.sent,
            delivered_total=trace.delivered,
        )
        if cfg.strategy == "baseline" and not arrival:
            action = (
                Action(ActionKind.TRANSMIT_ENCODED, packet_index=len(ordered) - 1)
                if ordered
                else Action(ActionKind.SILENT)
            )
        else:
            action = decide_action(state, arrival, policy, cfg.rate, rng)

        if action.kind is ActionKind.TRANSMIT_NEW:
            pkt = z
            trace.generated += 1
            trace.sent += 1
            intact = rng.random() >= cfg.erase_prob
            decoded = intact and rng.random() < decode_p
            if decoded:
                delivered.add(pkt)
                trace.delivered += 1
                newest_gen = max(newest_gen, pkt)
            in_flight.append((z + lag, "new", pkt, intact, decoded))
        elif action.kind is ActionKind.TRANSMIT_ENCODED:
            target = ordered[action.packet_index]
            trace.sent += 1
            trace.encoded_sent += 1
            intact = rng.random() >= cfg.erase_prob
            decoded = False
            if intact and target not in delivered and rng.random() < decode_p:
                decoded = True
                delivered.add(target)
                trace.delivered += 1
                newest_gen = max(newest_gen, target)
            in_flight.append((z + lag, "coded", target, intact, decoded))
        else:
            trace.silent_slots += 1

        trace.age_sum += z - newest_gen
        if log is not None:
            log(
                {
                    "slot": z,
                    "action": action.kind.value,
                    "packet": (
                        z
                        if action.kind is ActionKind.TRANSMIT_NEW
                        else (ordered[action.packet_index] if action.packet_index is not None else None)
                    ),
                    "usefulness": action.usefulness,
                }
            )

    trace.unacked_final = len(unacked)
    return trace
