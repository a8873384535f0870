"""Per-RU collision and noise resolution for one slot."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .core import ContractViolation, Outcome, RuObservation, SlotSchedule, Transmission


@dataclass(frozen=True)
class ChannelModel:
    noise_prob: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.noise_prob <= 1.0:
            raise ValueError(f"noise_prob must lie in [0, 1], got {self.noise_prob}")

    def resolve_slot(self, transmissions, schedule: SlotSchedule, rng) -> list[RuObservation]:
        return resolve_slot(transmissions, schedule, rng, self.noise_prob)


def resolve_slot(
    transmissions: list[Transmission],
    schedule: SlotSchedule,
    rng,
    noise_prob: float,
) -> list[RuObservation]:
    """Map a slot's transmissions to one observation per allocated RU.

    Only RUs holding exactly one transmission draw from ``rng`` (one uniform
    each, in RU order). Collided and idle RUs consume no randomness.
    """
    allocated = schedule.allocated
    allowed = set(allocated)
    by_ru = defaultdict(list)
    for tx in transmissions:
        if tx.ru not in allowed:
            raise ContractViolation(
                f"slot {schedule.slot_index}: STA {tx.sta} transmitted on unallocated RU {tx.ru}"
            )
        by_ru[tx.ru].append(tx)

    observations = []
    for ru in allocated:
        txs = by_ru.get(ru, ())
        if not txs:
            observations.append(RuObservation(ru, Outcome.IDLE))
        elif len(txs) > 1:
            observations.append(RuObservation(ru, Outcome.FAILURE))
        elif rng.random() < noise_prob:
            observations.append(RuObservation(ru, Outcome.FAILURE))
        else:
            tx = txs[0]
            observations.append(RuObservation(ru, Outcome.SUCCESS, tx.sta, tx.packet_id))
    return observations
