"""AP-side RU allocation state machines.

All three schedulers share the waiting mode (one RA RU) and switch to
collision resolution when that RU fails. They only ever see per-RU
observations, never the STA queues.
"""

from __future__ import annotations

import copy
import enum

from .core import Algorithm, Outcome, RuObservation, SimConfig, SlotSchedule, sample_distinct


class Mode(str, enum.Enum):
    WAITING = "waiting"
    RESOLUTION = "resolution"


RA_RU = 0


def waiting_schedule(slot_index: int) -> SlotSchedule:
    return SlotSchedule(slot_index, frozenset({RA_RU}), {})


def nuora_schedule(slot_index: int, max_rta_rus: int) -> SlotSchedule:
    return SlotSchedule(slot_index, frozenset(range(max_rta_rus)), {})


def _outcomes(observations: list[RuObservation]) -> dict:
    return {o.ru: o.outcome for o in observations}


class Scheduler:
    algorithm: Algorithm

    def __init__(self, n_stas: int, max_rta_rus: int, copies: int):
        self.n_stas = n_stas
        self.k = max_rta_rus
        self.f = copies
        self.mode = Mode.WAITING

    @classmethod
    def from_config(cls, cfg: SimConfig) -> "Scheduler":
        return cls(cfg.n_stas, cfg.max_rta_rus, cfg.copies)

    def next_schedule(self, slot_index: int, rng) -> SlotSchedule:
        if self.mode is Mode.WAITING:
            return waiting_schedule(slot_index)
        return self._resolution_schedule(slot_index, rng)

    def update(self, schedule: SlotSchedule, observations: list[RuObservation]) -> Mode:
        """Feed back the observations of the slot produced by ``schedule``."""
        outcome = _outcomes(observations)
        if self.mode is Mode.WAITING:
            if outcome.get(RA_RU) is Outcome.FAILURE:
                self.mode = Mode.RESOLUTION
                self._enter_resolution()
        else:
            self._resolution_update(schedule, outcome, observations)
        return self.mode

    @property
    def per_ru_cap(self) -> int:
        """Upper bound on STAs per deterministic RU."""
        return 1

    def state_key(self) -> tuple:
        """Hashable summary of everything that affects future behaviour."""
        return (self.mode,)

    def clone(self) -> "Scheduler":
        return copy.deepcopy(self)

    def _enter_resolution(self) -> None:
        pass

    def _resolution_schedule(self, slot_index: int, rng) -> SlotSchedule:
        raise NotImplementedError

    def _resolution_update(self, schedule: SlotSchedule, outcome: dict, observations) -> None:
        raise NotImplementedError


class NuoraScheduler(Scheduler):
    """k RA RUs for as long as any RU fails."""

    algorithm = Algorithm.NUORA

    def _resolution_schedule(self, slot_index, rng):
        return nuora_schedule(slot_index, self.k)

    def _resolution_update(self, schedule, outcome, observations):
        if Outcome.FAILURE not in outcome.values():
            self.mode = Mode.WAITING


class NgraScheduler(Scheduler):
    """Group allocation: each marked STA gets ``f`` random RUs, each RU
    shared by at most ceil(f*N/k) STAs.

    The first resolution slot spends all k RUs on deterministic access;
    later slots keep RU 0 for random access.
    """

    algorithm = Algorithm.NGRA

    def __init__(self, n_stas, max_rta_rus, copies):
        super().__init__(n_stas, max_rta_rus, copies)
        self.capacity = -(-copies * n_stas // max_rta_rus)
        self.marked: set[int] = set()
        self.assignment: dict[int, tuple] = {}
        self.fresh = False

    @property
    def per_ru_cap(self):
        return self.capacity

    def state_key(self):
        return (self.mode, frozenset(self.marked), self.fresh)

    def _enter_resolution(self):
        self.marked = set(range(self.n_stas))
        self.fresh = True

    def _resolution_schedule(self, slot_index, rng):
        # with a single RTA RU there is no room for RA next to DA
        if self.fresh or self.k == 1:
            ra, pool = frozenset(), list(range(self.k))
        else:
            ra, pool = frozenset({RA_RU}), list(range(1, self.k))
        hosts = {ru: set() for ru in pool}
        assignment = {}
        for sta in sample_distinct(rng, sorted(self.marked), len(self.marked)):
            eligible = [ru for ru in pool if len(hosts[ru]) < self.capacity]
            rus = sorted(sample_distinct(rng, eligible, self.f))
            for ru in rus:
                hosts[ru].add(sta)
            assignment[sta] = tuple(rus)
        self.fresh = False
        self.assignment = assignment
        return SlotSchedule(slot_index, ra, {ru: frozenset(h) for ru, h in hosts.items()})

    def unmark(self, schedule: SlotSchedule, outcome: dict) -> set[int]:
        # a STA whose RU saw no failure either got a copy through or had
        # nothing to send
        self.marked = {
            sta for sta in self.marked
            if not any(outcome[ru] is not Outcome.FAILURE for ru in self.assignment.get(sta, ()))
        }
        if any(outcome[ru] is Outcome.FAILURE for ru in schedule.ra_rus):
            self.marked = set(range(self.n_stas))
        return self.marked

    def _resolution_update(self, schedule, outcome, observations):
        if not self.unmark(schedule, outcome):
            self.mode = Mode.WAITING
            self.assignment = {}


class NcraScheduler(Scheduler):
    """Cyclic allocation: RU 0 for RA, then blocks of ``f`` consecutive RUs
    handed to one STA each, retries first, then the cycle in StaId order.

    A round of the cycle is complete once every STA has either used a DA
    block without losing all copies or been seen succeeding on the RA RU.
    Resolution ends when the round is complete, nobody awaits a retry and
    the RA RU did not fail; an RA failure after a complete round starts a
    new one.
    """

    algorithm = Algorithm.NCRA

    def __init__(self, n_stas, max_rta_rus, copies):
        super().__init__(n_stas, max_rta_rus, copies)
        self.cursor = 0
        self.pending: list[int] = []
        self.covered: set[int] = set()
        self.assignment: dict[int, tuple] = {}
        self._leftover: list[int] = []

    @property
    def blocks(self) -> int:
        return (self.k - 1) // self.f

    def state_key(self):
        return (self.mode, self.cursor, tuple(self.pending), frozenset(self.covered))

    def _enter_resolution(self):
        self.cursor = 0
        self.pending = []
        self.covered = set()

    def _resolution_schedule(self, slot_index, rng):
        chosen = []
        for sta in self.pending:
            if len(chosen) < self.blocks and sta not in chosen:
                chosen.append(sta)
        self._leftover = [sta for sta in self.pending if sta not in chosen]
        sta, visited = self.cursor, 0
        while len(chosen) < self.blocks and visited < self.n_stas:
            if sta not in chosen:
                chosen.append(sta)
            sta = (sta + 1) % self.n_stas
            visited += 1
        self.cursor = sta
        self.assignment = {}
        da_map = {}
        for i, s in enumerate(chosen):
            rus = tuple(range(1 + i * self.f, 1 + (i + 1) * self.f))
            self.assignment[s] = rus
            for ru in rus:
                da_map[ru] = frozenset({s})
        return SlotSchedule(slot_index, frozenset({RA_RU}), da_map)

    def _resolution_update(self, schedule, outcome, observations):
        failed = []
        for sta, rus in self.assignment.items():
            if all(outcome[ru] is Outcome.FAILURE for ru in rus):
                failed.append(sta)
            else:
                self.covered.add(sta)
        self.covered.update(o.sta for o in observations if o.outcome is Outcome.SUCCESS)
        self.pending = self._leftover + failed
        ra_failed = outcome.get(RA_RU) is Outcome.FAILURE
        if len(self.covered) == self.n_stas:
            if not ra_failed and not self.pending:
                self.mode = Mode.WAITING
            elif ra_failed:
                self.covered = set()


SCHEDULERS = {cls.algorithm: cls for cls in (NuoraScheduler, NgraScheduler, NcraScheduler)}


def make_scheduler(cfg: SimConfig) -> Scheduler:
    return SCHEDULERS[cfg.algorithm].from_config(cfg)
