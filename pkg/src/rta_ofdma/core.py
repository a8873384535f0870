"""Shared domain types: configuration, packets, slot schedules and RU observations."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np


class ContractViolation(RuntimeError):
    """Raised when a module receives input that breaks its contract.

    Signals a bug in a scheduler or station implementation rather than a
    user error.
    """


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


class Algorithm(str, enum.Enum):
    NUORA = "nuora"
    NGRA = "ngra"
    NCRA = "ncra"

    @classmethod
    def parse(cls, value: "str | Algorithm") -> "Algorithm":
        if isinstance(value, Algorithm):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown algorithm {value!r}; expected one of nuora, ngra, ncra") from None


class Outcome(str, enum.Enum):
    IDLE = "idle"
    SUCCESS = "success"
    FAILURE = "failure"


DEFAULT_SLOT = 270e-6


@dataclass(frozen=True)
class SimConfig:
    """Scenario and run parameters.

    Defaults reproduce the evaluation scenario: 18 STAs on a 40 MHz channel
    (18 RUs, at most 9 for RTA), 270 us slots and a 5-slot delay budget.
    """

    n_stas: int = 18
    total_rus: int = 18
    max_rta_rus: int = 9
    slot_duration: float = DEFAULT_SLOT
    delay_budget: float = 5 * DEFAULT_SLOT
    arrival_rate: float = 1.0
    noise_prob: float = 0.0
    copies: int = 1
    algorithm: Algorithm = Algorithm.NUORA
    seed: int = 0
    horizon: int = 1_000_000
    horizon_unit: str = "packets"

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))

    @property
    def ngra_capacity(self) -> int:
        """Max number of STAs sharing one RU under NGRA: ceil(f*N/k)."""
        return -(-self.copies * self.n_stas // self.max_rta_rus)

    def with_(self, **changes) -> "SimConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["algorithm"] = self.algorithm.value
        return out


def validate_config(cfg: SimConfig) -> list[str]:
    """Return every violated invariant of ``cfg``; an empty list means ok."""
    errors = []
    if cfg.n_stas < 1:
        errors.append("n_stas: n_stas >= 1")
    if cfg.copies < 1:
        errors.append("copies: copies >= 1")
    if cfg.copies > cfg.max_rta_rus:
        errors.append("copies: copies <= max_rta_rus")
    if cfg.max_rta_rus < 1:
        errors.append("max_rta_rus: max_rta_rus >= 1")
    if cfg.max_rta_rus > cfg.total_rus:
        errors.append("max_rta_rus: max_rta_rus <= total_rus")
    if not 0.0 <= cfg.noise_prob <= 1.0:
        errors.append("noise_prob: 0 <= noise_prob <= 1")
    if not cfg.arrival_rate >= 0.0 or math.isinf(cfg.arrival_rate):
        errors.append("arrival_rate: arrival_rate >= 0 and finite")
    if not cfg.delay_budget > 0.0:
        errors.append("delay_budget: delay_budget > 0")
    if not cfg.slot_duration > 0.0 or math.isinf(cfg.slot_duration):
        errors.append("slot_duration: slot_duration > 0")
    if cfg.horizon_unit not in ("packets", "slots"):
        errors.append("horizon_unit: horizon_unit in {packets, slots}")
    if cfg.horizon < 1:
        errors.append("horizon: horizon >= 1")
    if cfg.horizon_unit == "packets" and cfg.arrival_rate == 0.0:
        errors.append("horizon: a packet horizon needs arrival_rate > 0")
    if not 0 <= cfg.seed < 2**64:
        errors.append("seed: 0 <= seed < 2**64")
    return errors


def check_config(cfg: SimConfig) -> SimConfig:
    errors = validate_config(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


@dataclass
class Packet:
    owner: int
    arrival_time: float
    deadline: float
    id: int
    delivery_time: Optional[float] = None


@dataclass(frozen=True)
class SlotSchedule:
    """RU allocation announced by one trigger frame.

    ``da_map`` keys are allocated deterministic RUs; a key may map to an
    empty set (allocated but unused).
    """

    slot_index: int
    ra_rus: frozenset = frozenset()
    da_map: dict = field(default_factory=dict)

    @property
    def rta_ru_count(self) -> int:
        return len(self.ra_rus) + len(self.da_map)

    @property
    def allocated(self) -> list[int]:
        return sorted(set(self.ra_rus) | set(self.da_map))

    def rus_of(self, sta: int) -> list[int]:
        return sorted(ru for ru, stas in self.da_map.items() if sta in stas)

    def violations(self, max_rta_rus: int, per_ru_cap: Optional[int] = None) -> list[str]:
        out = []
        if set(self.ra_rus) & set(self.da_map):
            out.append("RA and DA RUs overlap")
        if self.rta_ru_count > max_rta_rus:
            out.append(f"{self.rta_ru_count} RTA RUs exceed k={max_rta_rus}")
        if any(not 0 <= ru < max_rta_rus for ru in self.allocated):
            out.append("RU index outside [0, k)")
        if per_ru_cap is not None:
            for ru, stas in self.da_map.items():
                if len(stas) > per_ru_cap:
                    out.append(f"RU {ru} hosts {len(stas)} STAs > {per_ru_cap}")
        return out


@dataclass(frozen=True)
class Transmission:
    sta: int
    packet_id: int
    ru: int


@dataclass(frozen=True)
class RuObservation:
    ru: int
    outcome: Outcome
    sta: Optional[int] = None
    packet_id: Optional[int] = None


def draw_index(rng, n: int) -> int:
    """Uniform index in [0, n); no randomness is consumed when n == 1."""
    if n == 1:
        return 0
    return int(rng.integers(0, n))


def sample_distinct(rng, pool: list, count: int) -> list:
    """Draw ``count`` distinct items from ``pool`` uniformly, one at a time.

    Each draw picks a position in the remaining (order-preserving) pool, so
    a scripted rng can force any particular selection.
    """
    remaining = list(pool)
    picked = []
    for _ in range(min(count, len(remaining))):
        picked.append(remaining.pop(draw_index(rng, len(remaining))))
    return picked


STREAM_CHANNEL = 0
STREAM_CHOICES = 1
STREAM_SCHEDULER = 2
_FIRST_ARRIVAL_STREAM = 3


@dataclass
class RngStreams:
    """Independent named random streams derived from one master seed.

    Arrival streams are per STA and never shared with algorithm randomness,
    so different algorithms see identical traffic for equal seeds.
    """

    channel: np.random.Generator
    choices: np.random.Generator
    scheduler: np.random.Generator
    arrivals: tuple

    @classmethod
    def from_seed(cls, seed: int, n_stas: int) -> "RngStreams":
        children = np.random.SeedSequence(seed).spawn(_FIRST_ARRIVAL_STREAM + n_stas)
        gens = [np.random.default_rng(c) for c in children]
        return cls(
            channel=gens[STREAM_CHANNEL],
            choices=gens[STREAM_CHOICES],
            scheduler=gens[STREAM_SCHEDULER],
            arrivals=tuple(gens[_FIRST_ARRIVAL_STREAM:]),
        )


def slot_start(slot: int, cfg: SimConfig) -> float:
    return slot * cfg.slot_duration


def slot_end(slot: int, cfg: SimConfig) -> float:
    return (slot + 1) * cfg.slot_duration


def first_eligible_slot(arrival_time: float, slot_duration: float) -> int:
    """Smallest slot m with m*T >= arrival_time, evaluated with the same
    float products the slot loop uses."""
    m = max(0, math.ceil(arrival_time / slot_duration))
    while m * slot_duration < arrival_time:
        m += 1
    while m > 0 and (m - 1) * slot_duration >= arrival_time:
        m -= 1
    return m
