"""Acceptance suite: one pass/fail line per criterion.

The scenario-grid checks (criteria 4 and 5) need 1.2e7 packets per cell.
Their results are written through ``run_sweep`` to CSV files under
``$RTA_ACCEPTANCE_DIR`` (default ``.acceptance/`` in the repo root); a
file left by an earlier run is resumed cell by cell, and since results are
deterministic a resumed cell equals a recomputed one. Delete the directory
to recompute from scratch.
"""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from rta_ofdma import SimConfig, run
from rta_ofdma.cli import grid_cells, read_sweep, run_sweep
from rta_ofdma.core import DEFAULT_SLOT
from rta_ofdma.engine import trace_run
from rta_ofdma.oracle import exhaustive_small_instance, solo_sta_plr, solo_waiting_first_plr

from conftest import record_acceptance
from walkthroughs import compact, nuora_walkthrough, ngra_walkthrough, ncra_walkthrough

T = DEFAULT_SLOT
CACHE = Path(os.environ.get("RTA_ACCEPTANCE_DIR", Path(__file__).resolve().parents[1] / ".acceptance"))

GRID_SEED = 2024
GRID_PACKETS = 12_000_000
GRID_AXES = {
    "algorithm": ["nuora", "ngra", "ncra"],
    "copies": [1, 2, 3],
    "noise_prob": [0.0, 0.1, 0.2],
    "arrival_rate": [2.0, 6.0, 20.0, 50.0],
}
LOW_TO_MODERATE = (2.0, 6.0, 20.0)
# extra NCRA points around its 1e-5 crossing without noise
NCRA_AXES = {"algorithm": ["ncra"], "copies": [1], "noise_prob": [0.0], "arrival_rate": [10.0, 14.0, 28.0, 40.0]}


# ------------------------------------------------------------ 1. traces

def _walkthrough_check(build, label):
    cfg, arrivals, rngs, expected = build()
    t0 = time.perf_counter()
    got = compact(trace_run(cfg, len(expected), {s: [t * T for t in v] for s, v in arrivals.items()}, rngs))
    elapsed = time.perf_counter() - t0
    bad = [i + 1 for i, (g, e) in enumerate(zip(got, expected)) if g != e]
    ok = not bad and elapsed < 1.0
    detail = f"{elapsed * 1e3:.0f} ms" + (f", mismatching slots {bad}" if bad else "")
    record_acceptance(f"1 trace regression {label}", ok, detail)
    return got, expected


def test_c1_nuora_walkthrough():
    got, expected = _walkthrough_check(nuora_walkthrough, "NUORA k=4 f=2")
    assert got == expected


def test_c1_ngra_walkthrough():
    got, expected = _walkthrough_check(ngra_walkthrough, "NGRA N=4 k=4 f=2")
    assert got == expected


def test_c1_ncra_walkthrough():
    got, expected = _walkthrough_check(ncra_walkthrough, "NCRA N=5 k=5 f=2")
    assert got == expected


# ------------------------------------------------------------ 2. oracle

ORACLE_CASES = [
    # (N, k, f, p, arrivals in slot units)
    (1, 1, 1, 0.5, {0: [0.3, 0.6]}),
    (2, 2, 1, 0.0, {0: [0.0], 1: [0.0]}),
    (2, 2, 1, 0.5, {0: [0.25], 1: [0.5, 2.5]}),
    (2, 3, 2, 0.5, {0: [0.25, 1.25], 1: [0.5]}),
    (3, 3, 1, 0.0, {0: [0.1], 1: [0.2], 2: [0.3, 1.4]}),
    (3, 3, 2, 0.0, {0: [0.1, 0.9], 1: [0.2], 2: [0.3]}),
    (3, 3, 2, 0.5, {0: [0.25, 1.5], 1: [0.3], 2: [0.4, 2.1]}),
    (3, 2, 1, 0.5, {0: [0.2], 1: [0.4], 2: [0.6]}),
]
ORACLE_RUNS = 1_000_000
ORACLE_DEPTH = 6


@pytest.mark.slow
@pytest.mark.parametrize("alg", ["nuora", "ngra", "ncra"])
def test_c2_oracle_equivalence(alg):
    from rta_ofdma._kernel import sample_episodes

    worst, failures = 0.0, []
    for i, (n, k, f, p, arrivals) in enumerate(ORACLE_CASES):
        cfg = SimConfig(
            n_stas=n, total_rus=k, max_rta_rus=k, copies=f, noise_prob=p, algorithm=alg, seed=1000 + i,
        )
        exact = exhaustive_small_instance(cfg, arrivals, ORACLE_DEPTH)
        hist = sample_episodes(cfg, {s: [t * T for t in v] for s, v in arrivals.items()}, ORACLE_DEPTH, ORACLE_RUNS)
        seen = {(a, b): int(hist[a, b]) for a, b in zip(*np.nonzero(hist))}
        for key in set(seen) - set(exact):
            failures.append(f"case {i}: impossible outcome {key} seen {seen[key]} times")
        for key, prob in exact.items():
            prob = float(prob)
            if prob < 1e-4:
                continue
            sd = math.sqrt(ORACLE_RUNS * prob * (1 - prob))
            z = abs(seen.get(key, 0) - ORACLE_RUNS * prob) / sd if sd > 0 else float(seen.get(key, 0) != ORACLE_RUNS)
            worst = max(worst, z)
            if z > 4:
                failures.append(f"case {i}: outcome {key} z={z:.2f}")
    record_acceptance(
        f"2 oracle equivalence {alg.upper()} ({len(ORACLE_CASES)} instances x {ORACLE_RUNS:.0e} runs)",
        not failures,
        f"worst |z| = {worst:.2f}" + (f"; {failures[:3]}" if failures else ""),
    )
    assert not failures


# ------------------------------------------------------------ 3. solo STA

SOLO_RATE = 0.05  # lambda*T = 1.35e-5; same-slot pairs add ~1% at p=0.1 f=2
SOLO_PACKETS = 40_000_000
ATTEMPTS = 4  # usable slots for a 5-slot budget


@pytest.mark.slow
@pytest.mark.parametrize("p", [0.1, 0.2])
@pytest.mark.parametrize("f", [1, 2, 3])
def test_c3_solo_sta_closed_form(p, f):
    cfg = SimConfig(
        n_stas=1, copies=f, noise_prob=p, algorithm="nuora", arrival_rate=SOLO_RATE,
        horizon=SOLO_PACKETS, seed=300 + 10 * f + int(p * 10),
    )
    assert SOLO_RATE * cfg.slot_duration < 0.01
    r = run(cfg)
    # the first attempt falls in waiting mode, where the single RA RU carries one copy
    expected = solo_waiting_first_plr(p, f, ATTEMPTS)
    lo, hi = r.plr_ci95
    ok = lo <= expected <= hi
    record_acceptance(
        f"3 solo STA p={p} f={f}",
        ok,
        f"measured {r.plr:.3g} CI [{lo:.3g}, {hi:.3g}], closed form p*(p^f)^{ATTEMPTS - 1} = {expected:.3g}; "
        f"(p^f)^{ATTEMPTS} = {solo_sta_plr(p, f, ATTEMPTS):.3g} {'inside' if lo <= solo_sta_plr(p, f, ATTEMPTS) <= hi else 'outside'} CI",
    )
    assert ok


# ------------------------------------------------------------ 4, 5. scenario grid

def _sweep(name, axes):
    base = SimConfig(horizon=GRID_PACKETS, seed=GRID_SEED)
    cells = grid_cells(base, {k: list(v) for k, v in axes.items()})
    path = CACHE / name
    run_sweep(cells, 1, GRID_SEED, path)
    rows = read_sweep(path)
    assert len(rows) == len(cells)
    assert all(r["generated"] >= GRID_PACKETS for r in rows)
    return {(r["algorithm"], r["f"], r["p"], r["lambda"]): r for r in rows}


@pytest.fixture(scope="module")
def grid():
    return _sweep("grid.csv", GRID_AXES)


@pytest.fixture(scope="module")
def ncra_extra():
    return _sweep("ncra_p0.csv", NCRA_AXES)


def _above(a, b, lo="plr_ci_low", hi="plr_ci_high"):
    """a is above b with disjoint intervals."""
    return a[lo] > b[hi]


def _points():
    for f in GRID_AXES["copies"]:
        for p in GRID_AXES["noise_prob"]:
            for lam in GRID_AXES["arrival_rate"]:
                yield f, p, lam


@pytest.mark.slow
def test_c4a_ngra_not_worse_than_nuora(grid):
    bad = []
    for f, p, lam in _points():
        ngra, nuora = grid[("ngra", f, p, lam)], grid[("nuora", f, p, lam)]
        if _above(ngra, nuora):
            bad.append(f"f={f} p={p} lam={lam}: {ngra['plr']:.3g} > {nuora['plr']:.3g}")
    record_acceptance("4a NGRA PLR <= NUORA PLR at equal f", not bad, "; ".join(bad[:4]) or "36 points")
    assert not bad


@pytest.mark.slow
def test_c4b_ncra_lowest_plr_at_low_to_moderate_load(grid):
    bad = []
    for f, p, lam in _points():
        if lam not in LOW_TO_MODERATE:
            continue
        ncra = grid[("ncra", f, p, lam)]
        for other in ("nuora", "ngra"):
            o = grid[(other, f, p, lam)]
            if _above(ncra, o):
                bad.append(f"f={f} p={p} lam={lam}: NCRA {ncra['plr']:.3g} > {other.upper()} {o['plr']:.3g}")
    record_acceptance(
        "4b NCRA lowest PLR at low-to-moderate load", not bad,
        f"{len(bad)} violations, e.g. " + "; ".join(bad[:3]) if bad else "27 points",
    )
    assert not bad


@pytest.mark.slow
def test_c4c_ncra_share_lowest(grid):
    bad = []
    for f, p, lam in _points():
        ncra = grid[("ncra", f, p, lam)]
        for other in ("nuora", "ngra"):
            o = grid[(other, f, p, lam)]
            if _above(ncra, o, "share_ci_low", "share_ci_high"):
                bad.append(f"f={f} p={p} lam={lam}: NCRA {ncra['nonrta_share']:.4f} > {other.upper()} {o['nonrta_share']:.4f}")
    record_acceptance(
        "4c NCRA non-RTA share below NGRA and NUORA", not bad,
        f"{len(bad)} violations, e.g. " + "; ".join(bad[:3]) if bad else "36 points",
    )
    assert not bad


@pytest.mark.slow
def test_c4d_f3_meets_1e5_under_noise(grid):
    bad, seen = [], []
    for alg in ("nuora", "ngra"):
        for lam in (2.0, 6.0):
            r = grid[(alg, 3, 0.2, lam)]
            seen.append(f"{alg.upper()} lam={lam}: {r['plr']:.3g} (CI high {r['plr_ci_high']:.3g})")
            if not r["plr_ci_high"] < 1e-5:
                bad.append(seen[-1])
    record_acceptance("4d p=0.2 f=3 NUORA/NGRA PLR < 1e-5 for lam <= 6", not bad, "; ".join(bad or seen))
    assert not bad


@pytest.mark.slow
def test_c5_ncra_share_near_half_at_1e5(grid, ncra_extra):
    cells = [r for k, r in grid.items() if k[0] == "ncra" and k[2] == 0.0] + list(ncra_extra.values())
    cells = [r for r in cells if r["plr"] > 0]
    near = min(cells, key=lambda r: abs(math.log10(r["plr"]) + 5))
    ok = abs(near["nonrta_share"] - 0.5) <= 0.05
    record_acceptance(
        "5 NCRA share ~0.5 where its PLR ~1e-5 (p=0)", ok,
        f"closest cell f={near['f']} lam={near['lambda']}: PLR {near['plr']:.3g}, share {near['nonrta_share']:.4f}",
    )
    assert ok


# ------------------------------------------------------------ 6. properties

def test_c6_property_suite():
    t0 = time.perf_counter()
    problems = []
    rng = np.random.default_rng(6)
    for trial in range(60):
        alg = ("nuora", "ngra", "ncra")[trial % 3]
        k = int(rng.integers(1, 10))
        cfg = SimConfig(
            n_stas=int(rng.integers(1, 19)), max_rta_rus=k, copies=int(rng.integers(1, k + 1)),
            noise_prob=float(rng.choice([0.0, 0.1, 1.0])), arrival_rate=float(rng.choice([100.0, 800.0])),
            algorithm=alg, seed=trial,
        )
        cap = cfg.ngra_capacity
        for rec in trace_run(cfg, 200):
            da = [r for r in rec["rus"] if r["kind"] == "DA"]
            ra = [r for r in rec["rus"] if r["kind"] == "RA"]
            if rec["rta_rus"] > k or {r["ru"] for r in da} & {r["ru"] for r in ra}:
                problems.append(f"{alg} slot {rec['slot']}: RA/DA overlap or k exceeded")
            if alg == "ngra" and any(len(r["assigned"]) > cap for r in da):
                problems.append(f"ngra slot {rec['slot']}: RU above capacity {cap}")
            if alg == "ncra" and any(len(r["assigned"]) != 1 or len(r["tx"]) > 1 for r in da):
                problems.append(f"ncra slot {rec['slot']}: shared or collided DA RU")
            for r in rec["rus"]:
                if cfg.noise_prob == 1.0 and r["outcome"] == "success":
                    problems.append("success at p=1")
                if cfg.noise_prob == 0.0 and len(r["tx"]) == 1 and r["outcome"] != "success":
                    problems.append("lone transmission failed at p=0")
        res = run(cfg.with_(horizon=3000))
        if res.generated != res.delivered + res.dropped + res.in_flight:
            problems.append(f"{alg}: packets not conserved")
        if res.summary() != run(cfg.with_(horizon=3000)).summary():
            problems.append(f"{alg}: nondeterministic")
    for alg in ("ngra", "ncra"):
        from rta_ofdma.schedulers import make_scheduler

        s = make_scheduler(SimConfig(copies=1, algorithm=alg))
        if alg == "ngra" and s.capacity != math.ceil(18 / 9):
            problems.append("ngra f=1 capacity")
        if alg == "ncra" and s.blocks != 8:
            problems.append("ncra f=1 blocks")
    elapsed = time.perf_counter() - t0
    ok = not problems and elapsed < 60
    record_acceptance("6 property suite", ok, f"{elapsed:.1f} s" + (f"; {problems[:3]}" if problems else ""))
    assert ok
