"""Slot loop, metrics and replication management.

Two interchangeable backends execute the same per-slot sequence:

* ``reference`` drives the object-level modules (``stations``, ``channel``,
  ``schedulers``) and can emit a per-slot trace;
* ``fast`` is a numba kernel over flat arrays (see ``_kernel``).

Both consume the named random streams in the same order, so for equal
configs they produce bit-identical counts.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional

from .channel import resolve_slot
from .core import (
    ContractViolation,
    RngStreams,
    SimConfig,
    check_config,
    first_eligible_slot,
)
from .schedulers import Mode, Scheduler, make_scheduler
from .stations import StationState, expire_deadlines, generate_arrivals, on_observations, select_transmissions
from .stats import ratio_interval, wilson_interval

N_BATCHES = 32


@dataclass
class MetricsAccumulator:
    generated: int = 0
    delivered: int = 0
    dropped: int = 0
    slot_count: int = 0
    rta_ru_slot_sum: int = 0
    batch_slots: list = field(default_factory=list)
    batch_rta: list = field(default_factory=list)
    _open_slots: int = 0
    _open_rta: int = 0

    @property
    def in_flight(self) -> int:
        return self.generated - self.delivered - self.dropped

    def add_slots(self, n: int, rta_rus: int) -> None:
        self.slot_count += n
        self.rta_ru_slot_sum += n * rta_rus
        self._open_slots += n
        self._open_rta += n * rta_rus

    def close_batch(self) -> None:
        self.batch_slots.append(self._open_slots)
        self.batch_rta.append(self._open_rta)
        self._open_slots = self._open_rta = 0


def nonrta_share(acc: MetricsAccumulator, total_rus: int) -> float:
    """Fraction of the F-RU channel left to non-RTA traffic, averaged over slots."""
    if acc.slot_count <= 0:
        raise ValueError("no slots simulated")
    return 1.0 - acc.rta_ru_slot_sum / (acc.slot_count * total_rus)


@dataclass
class RunResult:
    plr: float
    plr_ci95: tuple
    nonrta_share: float
    nonrta_ci95: tuple
    generated: int
    delivered: int
    dropped: int
    in_flight: int
    slots: int
    rta_ru_slot_sum: int
    seed: int
    config: dict
    batch_slots: list = field(default_factory=list, repr=False)
    batch_rta: list = field(default_factory=list, repr=False)

    @property
    def resolved(self) -> int:
        return self.delivered + self.dropped

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("batch_slots")
        out.pop("batch_rta")
        return out


def _finish(acc: MetricsAccumulator, cfg: SimConfig, seed: int) -> RunResult:
    resolved = acc.delivered + acc.dropped
    plr = acc.dropped / resolved if resolved else 0.0
    share, lo, hi = _share_interval(acc.batch_rta, acc.batch_slots, cfg.total_rus)
    return RunResult(
        plr=plr,
        plr_ci95=wilson_interval(acc.dropped, resolved),
        nonrta_share=share,
        nonrta_ci95=(lo, hi),
        generated=acc.generated,
        delivered=acc.delivered,
        dropped=acc.dropped,
        in_flight=acc.in_flight,
        slots=acc.slot_count,
        rta_ru_slot_sum=acc.rta_ru_slot_sum,
        seed=seed,
        config=cfg.as_dict(),
        batch_slots=list(acc.batch_slots),
        batch_rta=list(acc.batch_rta),
    )


def _share_interval(batch_rta, batch_slots, total_rus):
    r, lo, hi = ratio_interval(batch_rta, batch_slots)
    return 1.0 - r / total_rus, 1.0 - hi / total_rus, 1.0 - lo / total_rus


class Simulation:
    """Reference slot loop over the object-level modules.

    ``arrivals`` optionally replaces the Poisson sources with fixed arrival
    instants per STA (a mapping StaId -> iterable of times). ``rngs``
    overrides the seeded streams, e.g. with scripted generators in tests.
    """

    def __init__(
        self,
        cfg: SimConfig,
        arrivals: Optional[dict] = None,
        rngs: Optional[RngStreams] = None,
        scheduler: Optional[Scheduler] = None,
        trace: Optional[Callable[[dict], None]] = None,
        check_invariants: bool = True,
    ):
        self.cfg = check_config(cfg)
        self.rngs = rngs or RngStreams.from_seed(cfg.seed, cfg.n_stas)
        if arrivals is None:
            self.stations = [
                StationState.poisson(s, cfg.arrival_rate, cfg.delay_budget, self.rngs.arrivals[s])
                for s in range(cfg.n_stas)
            ]
        else:
            self.stations = [
                StationState(s, cfg.delay_budget, sorted(arrivals.get(s, ()))) for s in range(cfg.n_stas)
            ]
        self.scheduler = scheduler or make_scheduler(cfg)
        self.acc = MetricsAccumulator()
        self.slot = 0
        self.trace = trace
        self.check_invariants = check_invariants
        self._ids = itertools.count()

    def idle(self) -> bool:
        return self.scheduler.mode is Mode.WAITING and not any(st.queue for st in self.stations)

    def skip_idle(self, limit: Optional[int] = None) -> bool:
        """Fast-forward over waiting-mode slots in which no STA has data.

        Such slots carry one idle RA RU, consume no randomness and leave
        every state unchanged, so skipping them is exact. Returns False
        when no packet will ever arrive and there is no slot ``limit``.
        """
        if self.trace is not None or not self.idle():
            return True
        nxt = min(st.next_arrival for st in self.stations)
        if math.isinf(nxt):
            if limit is None:
                return False
            target = limit
        else:
            target = first_eligible_slot(nxt, self.cfg.slot_duration)
            if limit is not None:
                target = min(target, limit)
        if target > self.slot:
            self.acc.add_slots(target - self.slot, 1)
            self.slot = target
        return True

    def step(self) -> None:
        try:
            self._step()
        except ContractViolation as exc:
            raise ContractViolation(f"slot {self.slot}: {exc}") from exc

    def _step(self) -> None:
        cfg, acc, m = self.cfg, self.acc, self.slot
        mode = self.scheduler.mode
        schedule = self.scheduler.next_schedule(m, self.rngs.scheduler)
        if self.check_invariants:
            bad = schedule.violations(cfg.max_rta_rus, self.scheduler.per_ru_cap)
            if bad:
                raise ContractViolation("; ".join(bad))
        start = m * cfg.slot_duration
        end = (m + 1) * cfg.slot_duration

        for st in self.stations:
            acc.generated += len(generate_arrivals(st, start, self._ids))
        dropped = []
        for st in self.stations:
            dropped += expire_deadlines(st, end)
        acc.dropped += len(dropped)

        transmissions = []
        for st in self.stations:
            transmissions += select_transmissions(st, schedule, cfg.copies, self.rngs.choices)
        observations = resolve_slot(transmissions, schedule, self.rngs.channel, cfg.noise_prob)
        delivered = []
        for st in self.stations:
            pkt = on_observations(st, observations, end)
            if pkt is not None:
                delivered.append(pkt)
        acc.delivered += len(delivered)

        next_mode = self.scheduler.update(schedule, observations)
        acc.add_slots(1, schedule.rta_ru_count)
        if self.trace is not None:
            self.trace(slot_record(schedule, mode, transmissions, observations, delivered, dropped, next_mode))
        self.slot += 1

    def run(self) -> RunResult:
        cfg, acc = self.cfg, self.acc
        by_packets = cfg.horizon_unit == "packets"
        limit = None if by_packets else cfg.horizon
        boundaries = _batch_boundaries(cfg.horizon)
        b = 0
        while True:
            progress = acc.generated if by_packets else self.slot
            if progress >= cfg.horizon:
                break
            if b < len(boundaries) - 1 and progress >= boundaries[b]:
                acc.close_batch()
                b += 1
            if not self.skip_idle(limit):
                break
            if not by_packets and self.slot >= cfg.horizon:
                break
            self.step()
        acc.close_batch()
        return _finish(acc, cfg, cfg.seed)


def _batch_boundaries(horizon: int) -> list[int]:
    return [-(-(i + 1) * horizon // N_BATCHES) for i in range(N_BATCHES)]


def slot_record(schedule, mode, transmissions, observations, delivered, dropped, next_mode) -> dict:
    """One line of the per-slot trace."""
    tx = {}
    for t in transmissions:
        tx.setdefault(t.ru, []).append(t.sta)
    rus = []
    for o in observations:
        rus.append(
            {
                "ru": o.ru,
                "kind": "RA" if o.ru in schedule.ra_rus else "DA",
                "assigned": sorted(schedule.da_map.get(o.ru, ())),
                "tx": sorted(tx.get(o.ru, [])),
                "outcome": o.outcome.value,
                "sta": o.sta,
            }
        )
    return {
        "slot": schedule.slot_index,
        "mode": mode.value,
        "rta_rus": schedule.rta_ru_count,
        "rus": rus,
        "delivered": [p.id for p in delivered],
        "dropped": [p.id for p in dropped],
        "next_mode": next_mode.value,
    }


def trace_run(
    cfg: SimConfig,
    n_slots: int,
    arrivals: Optional[dict] = None,
    rngs: Optional[RngStreams] = None,
) -> list[dict]:
    """Simulate ``n_slots`` slots with tracing on and return the records."""
    records: list[dict] = []
    sim = Simulation(cfg, arrivals=arrivals, rngs=rngs, trace=records.append)
    for _ in range(n_slots):
        sim.step()
    return records


def write_trace(records: Iterable[dict], fh) -> None:
    for rec in records:
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def run(cfg: SimConfig, backend: str = "fast") -> RunResult:
    """Simulate one replication of ``cfg``.

    ``backend`` is ``"fast"`` (numba kernel) or ``"reference"``; both give
    identical results for the same config.
    """
    check_config(cfg)
    if backend == "reference":
        return Simulation(cfg).run()
    if backend != "fast":
        raise ValueError(f"unknown backend {backend!r}")
    from ._kernel import run_fast

    acc = run_fast(cfg)
    return _finish(acc, cfg, cfg.seed)


def _run_one(args):
    cfg, backend = args
    return run(cfg, backend)


def combine(results: list[RunResult], cfg: SimConfig, seed: int) -> RunResult:
    """Pool replications: counts add, the PLR interval comes from pooled
    Bernoulli counts and the share interval from all batches together."""
    acc = MetricsAccumulator()
    for r in results:
        acc.generated += r.generated
        acc.delivered += r.delivered
        acc.dropped += r.dropped
        acc.slot_count += r.slots
        acc.rta_ru_slot_sum += r.rta_ru_slot_sum
        acc.batch_slots += r.batch_slots
        acc.batch_rta += r.batch_rta
    return _finish(acc, cfg, seed)


def run_replications(
    cfg: SimConfig,
    n_reps: int,
    base_seed: Optional[int] = None,
    backend: str = "fast",
    workers: int = 1,
) -> RunResult:
    """Run ``n_reps`` replications with seeds ``base_seed + i`` and pool them.

    The pooled result does not depend on ``workers``.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    base = cfg.seed if base_seed is None else base_seed
    jobs = [(cfg.with_(seed=base + i), backend) for i in range(n_reps)]
    if workers > 1 and n_reps > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    return combine(results, cfg.with_(seed=base), base)
