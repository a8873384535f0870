"""STA side: Poisson traffic, deadline expiry and RU selection."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .core import ContractViolation, Outcome, Packet, RuObservation, SlotSchedule, Transmission, sample_distinct


def poisson_times(rate: float, rng) -> Iterator[float]:
    """Arrival instants of a Poisson process, one exponential gap per arrival."""
    if rate <= 0.0:
        return
    scale = 1.0 / rate
    t = 0.0
    while True:
        t += rng.exponential(scale)
        yield t


@dataclass
class StationState:
    id: int
    delay_budget: float
    arrivals: Iterator[float]
    queue: deque = field(default_factory=deque)
    next_arrival: float = math.inf

    def __post_init__(self):
        self.arrivals = iter(self.arrivals)
        self.next_arrival = next(self.arrivals, math.inf)

    @classmethod
    def poisson(cls, sta: int, rate: float, delay_budget: float, rng) -> "StationState":
        return cls(sta, delay_budget, poisson_times(rate, rng))

    @property
    def head(self) -> Optional[Packet]:
        return self.queue[0] if self.queue else None


def generate_arrivals(state: StationState, upto: float, ids: Iterator[int]) -> list[Packet]:
    """Enqueue every packet arriving at or before ``upto``."""
    new = []
    while state.next_arrival <= upto:
        t = state.next_arrival
        pkt = Packet(state.id, t, t + state.delay_budget, next(ids))
        state.queue.append(pkt)
        new.append(pkt)
        state.next_arrival = next(state.arrivals, math.inf)
    return new


def expire_deadlines(state: StationState, slot_end: float) -> list[Packet]:
    """Drop packets that can no longer be delivered by the end of this slot."""
    dropped = []
    queue = state.queue
    while queue and queue[0].deadline < slot_end:
        dropped.append(queue.popleft())
    return dropped


def select_transmissions(state: StationState, schedule: SlotSchedule, copies: int, rng) -> list[Transmission]:
    """Pick the RUs carrying copies of the head-of-line packet this slot.

    Deterministically assigned RUs take precedence (first ``copies`` by
    index). Otherwise the STA contends on ``min(copies, |RA|)`` distinct RA
    RUs; with OCW = 0 it never defers.
    """
    pkt = state.head
    if pkt is None:
        return []
    mine = schedule.rus_of(state.id)
    if mine:
        rus = mine[:copies]
    elif schedule.ra_rus:
        rus = sorted(sample_distinct(rng, sorted(schedule.ra_rus), copies))
    else:
        return []
    return [Transmission(state.id, pkt.id, ru) for ru in rus]


def on_observations(state: StationState, observations: list[RuObservation], slot_end: float) -> Optional[Packet]:
    """Dequeue the head packet if any of its copies got through."""
    hits = [o for o in observations if o.outcome is Outcome.SUCCESS and o.sta == state.id]
    if not hits:
        return None
    pkt = state.head
    if pkt is None or any(o.packet_id != pkt.id for o in hits):
        raise ContractViolation(f"STA {state.id}: success reported for a packet it does not hold")
    state.queue.popleft()
    pkt.delivery_time = slot_end
    return pkt
