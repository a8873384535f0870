"""Independent validators for small instances.

``solo_sta_plr`` is the closed form for a STA that never meets another
transmitter. ``exhaustive_small_instance`` walks the full probability tree
of a tiny network with exact rational arithmetic. It reuses the scheduler
classes but has its own station bookkeeping, its own deadline arithmetic
and its own channel: RA choices are enumerated as RU subsets and noise as
explicit success/failure branches, so a bug in the sampling path of the
simulator cannot hide in both.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from fractions import Fraction
from typing import Optional

from .core import Outcome, RuObservation, SimConfig, check_config
from .schedulers import Scheduler, make_scheduler

MAX_NODES = 10**7


class OracleBlowup(RuntimeError):
    """The enumeration tree outgrew the node budget."""


def solo_sta_plr(p: float, f: int, attempts: int) -> float:
    """Probability that a lone STA loses every copy in every usable slot."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if f < 1 or attempts < 0:
        raise ValueError("need f >= 1 and attempts >= 0")
    return (p**f) ** attempts


def solo_waiting_first_plr(p: float, f: int, attempts: int) -> float:
    """Lone STA whose first attempt happens in waiting mode.

    The single RA RU of waiting mode carries one copy, each later attempt
    carries ``f``.
    """
    if attempts == 0:
        return 1.0
    return solo_sta_plr(p, 1, 1) * solo_sta_plr(p, f, attempts - 1)


class _Branch(Exception):
    def __init__(self, arity: int):
        self.arity = arity


class _BranchRng:
    """Stand-in generator that replays a fixed prefix of choices and
    signals the arity of the first choice beyond it."""

    def __init__(self, prefix):
        self.prefix = prefix
        self.pos = 0

    def integers(self, low, high=None):
        if high is None:
            low, high = 0, low
        if self.pos >= len(self.prefix):
            raise _Branch(high - low)
        v = self.prefix[self.pos]
        self.pos += 1
        return low + v


def _scheduler_branches(sched: Scheduler, slot: int, counter):
    """All (probability, scheduler after emitting, schedule) outcomes."""
    out = []
    stack = [((), Fraction(1))]
    while stack:
        prefix, prob = stack.pop()
        counter[0] += 1
        s = sched.clone()
        try:
            schedule = s.next_schedule(slot, _BranchRng(prefix))
        except _Branch as b:
            for i in range(b.arity):
                stack.append((prefix + (i,), prob / b.arity))
            continue
        out.append((prob, s, schedule))
    return out


def _station_options(queue, sta, schedule, f):
    """Equiprobable RU sets a backlogged STA may use this slot."""
    if not queue:
        return [()]
    mine = sorted(ru for ru, stas in schedule.da_map.items() if sta in stas)
    if mine:
        return [tuple(mine[:f])]
    ra = sorted(schedule.ra_rus)
    if not ra:
        return [()]
    return list(itertools.combinations(ra, min(f, len(ra))))


def _channel_branches(tx_by_ru, allocated, p: Fraction):
    """Yield (probability, {ru: (outcome, sta)}) over all noise patterns."""
    solo = [ru for ru in allocated if len(tx_by_ru.get(ru, ())) == 1]
    fixed = {}
    for ru in allocated:
        n = len(tx_by_ru.get(ru, ()))
        if n == 0:
            fixed[ru] = (Outcome.IDLE, None)
        elif n > 1:
            fixed[ru] = (Outcome.FAILURE, None)
    for bits in itertools.product((False, True), repeat=len(solo)):
        prob = Fraction(1)
        res = dict(fixed)
        for ru, noisy in zip(solo, bits):
            prob *= p if noisy else 1 - p
            res[ru] = (Outcome.FAILURE, None) if noisy else (Outcome.SUCCESS, tx_by_ru[ru][0])
        if prob:
            yield prob, res


def exhaustive_small_instance(
    cfg: SimConfig,
    arrivals: dict,
    depth: int,
    max_nodes: int = MAX_NODES,
    scheduler: Optional[Scheduler] = None,
) -> dict:
    """Exact distribution of (delivered, dropped) after ``depth`` slots.

    ``arrivals`` maps StaId to arrival instants in units of the slot
    duration. Packets still queued after the last slot are censored, as in
    the simulator.
    """
    check_config(cfg)
    if cfg.n_stas > 3 or cfg.max_rta_rus > 3 or cfg.copies > 2 or depth > 6:
        raise ValueError("oracle instances need N <= 3, k <= 3, f <= 2 and depth <= 6")
    p = Fraction(str(cfg.noise_prob))
    budget = Fraction(cfg.delay_budget / cfg.slot_duration).limit_denominator(10**6)
    N, f = cfg.n_stas, cfg.copies

    # packet = (arrival in slot units, id); per-STA pending arrivals sorted
    future = []
    pid = 0
    for s in range(N):
        pk = []
        for a in sorted(Fraction(str(x)) for x in arrivals.get(s, ())):
            pk.append((a, pid))
            pid += 1
        future.append(tuple(pk))

    sched0 = scheduler.clone() if scheduler is not None else make_scheduler(cfg)
    # state key -> [probability, scheduler, queues, future, delivered, dropped]
    states = {None: [Fraction(1), sched0, tuple(() for _ in range(N)), tuple(future), 0, 0]}
    counter = [0]

    for m in range(depth):
        nxt = {}
        for prob, sched, queues, fut, dlv, drp in states.values():
            # arrivals: eligible once a <= m
            queues = list(queues)
            fut = list(fut)
            for s in range(N):
                ready = [pk for pk in fut[s] if pk[0] <= m]
                if ready:
                    queues[s] = queues[s] + tuple(ready)
                    fut[s] = tuple(pk for pk in fut[s] if pk[0] > m)
            # drop packets whose deadline falls before this slot ends
            for s in range(N):
                keep = tuple(pk for pk in queues[s] if pk[0] + budget >= m + 1)
                drp += len(queues[s]) - len(keep)
                queues[s] = keep

            for sp, sch, schedule in _scheduler_branches(sched, m, counter):
                allocated = sorted(set(schedule.ra_rus) | set(schedule.da_map))
                options = [_station_options(queues[s], s, schedule, f) for s in range(N)]
                n_combos = 1
                for o in options:
                    n_combos *= len(o)
                for choice in itertools.product(*options):
                    tx_by_ru = defaultdict(list)
                    for s, rus in enumerate(choice):
                        for ru in rus:
                            tx_by_ru[ru].append(s)
                    for cp, res in _channel_branches(tx_by_ru, allocated, p):
                        counter[0] += 1
                        if counter[0] > max_nodes:
                            raise OracleBlowup(f"more than {max_nodes} tree nodes")
                        winners = {sta for oc, sta in res.values() if oc is Outcome.SUCCESS}
                        q2 = tuple(q[1:] if s in winners else q for s, q in enumerate(queues))
                        obs = [
                            RuObservation(
                                ru, oc, sta,
                                queues[sta][0][1] if sta is not None else None,
                            )
                            for ru, (oc, sta) in sorted(res.items())
                        ]
                        s2 = sch.clone()
                        s2.update(schedule, obs)
                        d2 = dlv + len(winners)
                        key = (s2.state_key(), q2, tuple(fut), d2, drp)
                        w = prob * sp * cp / n_combos
                        if key in nxt:
                            nxt[key][0] += w
                        else:
                            nxt[key] = [w, s2, q2, tuple(fut), d2, drp]
        states = nxt

    dist: dict = defaultdict(Fraction)
    for prob, _s, _q, _f, dlv, drp in states.values():
        dist[(dlv, drp)] += prob
    return dict(dist)
