"""numba implementation of the slot loop.

Mirrors ``engine.Simulation`` operation for operation, including the order
in which each named random stream is consumed, so both backends return
identical counts. Any behavioural change has to land in both places;
``tests/test_backends.py`` checks the equivalence.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .core import Algorithm, RngStreams, SimConfig

NUORA, NGRA, NCRA = 0, 1, 2
ALGO_CODES = {Algorithm.NUORA: NUORA, Algorithm.NGRA: NGRA, Algorithm.NCRA: NCRA}

WAITING, RESOLUTION = 0, 1
IDLE, SUCCESS, FAILURE = 0, 1, 2

# scheduler scalars
S_MODE, S_FRESH, S_NMARKED, S_CURSOR, S_NPEND, S_NCHOSEN, S_NLEFT, S_NCOV = range(8)
# counters
C_GEN, C_DELIV, C_DROP, C_SLOTS, C_RTA, C_OPEN_SLOTS, C_OPEN_RTA, C_QUEUED = range(8)

OVERFLOW = -1
OK = 0


@njit(cache=True)
def _draw_index(rng, n):
    if n == 1:
        return 0
    return rng.integers(0, n)


@njit(cache=True)
def _first_eligible_slot(t, T):
    m = max(0, math.ceil(t / T))
    while m * T < t:
        m += 1
    while m > 0 and (m - 1) * T >= t:
        m -= 1
    return m


@njit(cache=True)
def _next_arrival(s, prev, arr_rngs, scale, use_forced, forced, fptr, fend):
    if use_forced:
        if fptr[s] < fend[s]:
            t = forced[fptr[s]]
            fptr[s] += 1
            return t
        return np.inf
    if scale <= 0.0:
        return np.inf
    return prev + arr_rngs[s].exponential(scale)


@njit(cache=True)
def _schedule(alg, N, k, f, cap, st, marked, assign, n_assign, ra, alloc, hosts_n,
              chosen, pending, leftover, covered, tmp_a, tmp_b, rng_sched):
    """Fill ra/alloc/assign for the coming slot; return the RTA RU count."""
    for ru in range(k):
        ra[ru] = False
        alloc[ru] = False
        hosts_n[ru] = 0
    for s in range(N):
        n_assign[s] = 0
    if st[S_MODE] == WAITING:
        ra[0] = True
        alloc[0] = True
        return 1
    if alg == NUORA:
        for ru in range(k):
            ra[ru] = True
            alloc[ru] = True
        return k
    if alg == NGRA:
        if st[S_FRESH] == 1 or k == 1:
            lo = 0
        else:
            lo = 1
            ra[0] = True
            alloc[0] = True
        for ru in range(lo, k):
            alloc[ru] = True
        # random STA order over the sorted marked list, drawn before any RU
        n_rem = 0
        for s in range(N):
            if marked[s]:
                tmp_a[n_rem] = s
                n_rem += 1
        n_order = 0
        while n_rem > 0:
            i = _draw_index(rng_sched, n_rem)
            chosen[n_order] = tmp_a[i]
            n_order += 1
            for j in range(i, n_rem - 1):
                tmp_a[j] = tmp_a[j + 1]
            n_rem -= 1
        for o in range(n_order):
            sta = chosen[o]
            n_el = 0
            for ru in range(lo, k):
                if hosts_n[ru] < cap:
                    tmp_b[n_el] = ru
                    n_el += 1
            take = min(f, n_el)
            for c in range(take):
                i2 = _draw_index(rng_sched, n_el)
                ru = tmp_b[i2]
                for j in range(i2, n_el - 1):
                    tmp_b[j] = tmp_b[j + 1]
                n_el -= 1
                assign[sta, c] = ru
                hosts_n[ru] += 1
            n_assign[sta] = take
            # keep each STA's RUs ascending
            for a in range(1, take):
                v = assign[sta, a]
                b = a - 1
                while b >= 0 and assign[sta, b] > v:
                    assign[sta, b + 1] = assign[sta, b]
                    b -= 1
                assign[sta, b + 1] = v
        st[S_FRESH] = 0
        return k
    # NCRA
    ra[0] = True
    alloc[0] = True
    blocks = (k - 1) // f
    n_ch = 0
    n_left = 0
    for i in range(st[S_NPEND]):
        sta = pending[i]
        dup = False
        for j in range(n_ch):
            if chosen[j] == sta:
                dup = True
        if n_ch < blocks and not dup:
            chosen[n_ch] = sta
            n_ch += 1
        elif not dup:
            leftover[n_left] = sta
            n_left += 1
    sta = st[S_CURSOR]
    visited = 0
    while n_ch < blocks and visited < N:
        dup = False
        for j in range(n_ch):
            if chosen[j] == sta:
                dup = True
        if not dup:
            chosen[n_ch] = sta
            n_ch += 1
        sta = (sta + 1) % N
        visited += 1
    st[S_CURSOR] = sta
    st[S_NCHOSEN] = n_ch
    st[S_NLEFT] = n_left
    for i in range(n_ch):
        s = chosen[i]
        for c in range(f):
            ru = 1 + i * f + c
            assign[s, c] = ru
            alloc[ru] = True
        n_assign[s] = f
    return 1 + n_ch * f


@njit(cache=True)
def _update(alg, N, k, f, st, marked, assign, n_assign, ra, alloc, obs, tx_sta,
            chosen, pending, leftover, covered):
    if st[S_MODE] == WAITING:
        if obs[0] == FAILURE:
            st[S_MODE] = RESOLUTION
            if alg == NGRA:
                for s in range(N):
                    marked[s] = True
                st[S_NMARKED] = N
                st[S_FRESH] = 1
            elif alg == NCRA:
                st[S_CURSOR] = 0
                st[S_NPEND] = 0
                for s in range(N):
                    covered[s] = False
                st[S_NCOV] = 0
        return
    if alg == NUORA:
        for ru in range(k):
            if alloc[ru] and obs[ru] == FAILURE:
                return
        st[S_MODE] = WAITING
        return
    if alg == NGRA:
        n_marked = 0
        for s in range(N):
            if marked[s]:
                keep = True
                for c in range(n_assign[s]):
                    if obs[assign[s, c]] != FAILURE:
                        keep = False
                        break
                marked[s] = keep
                if keep:
                    n_marked += 1
        ra_fail = False
        for ru in range(k):
            if ra[ru] and obs[ru] == FAILURE:
                ra_fail = True
        if ra_fail:
            for s in range(N):
                marked[s] = True
            n_marked = N
        st[S_NMARKED] = n_marked
        if n_marked == 0:
            st[S_MODE] = WAITING
        return
    # NCRA
    n_p = 0
    for i in range(st[S_NLEFT]):
        pending[n_p] = leftover[i]
        n_p += 1
    for i in range(st[S_NCHOSEN]):
        s = chosen[i]
        all_fail = True
        for c in range(n_assign[s]):
            if obs[assign[s, c]] != FAILURE:
                all_fail = False
                break
        if all_fail:
            pending[n_p] = s
            n_p += 1
        elif not covered[s]:
            covered[s] = True
            st[S_NCOV] += 1
    for ru in range(k):
        if alloc[ru] and obs[ru] == SUCCESS and not covered[tx_sta[ru]]:
            covered[tx_sta[ru]] = True
            st[S_NCOV] += 1
    st[S_NPEND] = n_p
    if st[S_NCOV] == N:
        if obs[0] != FAILURE and n_p == 0:
            st[S_MODE] = WAITING
        elif obs[0] == FAILURE:
            for s in range(N):
                covered[s] = False
            st[S_NCOV] = 0


@njit(cache=True)
def _step(slot, alg, N, k, f, T, D, p, cap, st, cnt, marked, assign, n_assign, ra, alloc,
          hosts_n, chosen, pending, leftover, covered, tmp_a, tmp_b, next_arr, q_dl, q_head,
          q_len, tx_n, tx_sta, obs, got, arr_rngs, scale, use_forced, forced, fptr, fend,
          rng_sched, rng_choice, rng_chan):
    qcap = q_dl.shape[1]
    rta = _schedule(alg, N, k, f, cap, st, marked, assign, n_assign, ra, alloc, hosts_n,
                    chosen, pending, leftover, covered, tmp_a, tmp_b, rng_sched)
    start = slot * T
    end = (slot + 1) * T
    for s in range(N):
        while next_arr[s] <= start:
            if q_len[s] == qcap:
                return OVERFLOW
            t = next_arr[s]
            q_dl[s, (q_head[s] + q_len[s]) % qcap] = t + D
            q_len[s] += 1
            cnt[C_GEN] += 1
            cnt[C_QUEUED] += 1
            next_arr[s] = _next_arrival(s, t, arr_rngs, scale, use_forced, forced, fptr, fend)
    for s in range(N):
        while q_len[s] > 0 and q_dl[s, q_head[s]] < end:
            q_head[s] = (q_head[s] + 1) % qcap
            q_len[s] -= 1
            cnt[C_DROP] += 1
            cnt[C_QUEUED] -= 1

    for ru in range(k):
        tx_n[ru] = 0
        tx_sta[ru] = -1
    n_ra = 0
    for ru in range(k):
        if ra[ru]:
            tmp_a[n_ra] = ru
            n_ra += 1
    for s in range(N):
        got[s] = False
        if q_len[s] == 0:
            continue
        if n_assign[s] > 0:
            for c in range(min(f, n_assign[s])):
                ru = assign[s, c]
                tx_n[ru] += 1
                tx_sta[ru] = s
        elif n_ra > 0:
            n_el = n_ra
            for i in range(n_ra):
                tmp_b[i] = tmp_a[i]
            for c in range(min(f, n_ra)):
                i2 = _draw_index(rng_choice, n_el)
                ru = tmp_b[i2]
                for j in range(i2, n_el - 1):
                    tmp_b[j] = tmp_b[j + 1]
                n_el -= 1
                tx_n[ru] += 1
                tx_sta[ru] = s

    for ru in range(k):
        if not alloc[ru]:
            obs[ru] = IDLE
            continue
        n = tx_n[ru]
        if n == 0:
            obs[ru] = IDLE
        elif n > 1:
            obs[ru] = FAILURE
        elif rng_chan.random() < p:
            obs[ru] = FAILURE
        else:
            obs[ru] = SUCCESS
            got[tx_sta[ru]] = True
    for s in range(N):
        if got[s]:
            q_head[s] = (q_head[s] + 1) % qcap
            q_len[s] -= 1
            cnt[C_DELIV] += 1
            cnt[C_QUEUED] -= 1

    _update(alg, N, k, f, st, marked, assign, n_assign, ra, alloc, obs, tx_sta,
            chosen, pending, leftover, covered)
    cnt[C_SLOTS] += 1
    cnt[C_RTA] += rta
    cnt[C_OPEN_SLOTS] += 1
    cnt[C_OPEN_RTA] += rta
    return OK


def _alloc_state(N, k, f, qcap):
    return dict(
        st=np.zeros(8, np.int64),
        cnt=np.zeros(8, np.int64),
        marked=np.zeros(N, np.bool_),
        assign=np.zeros((N, max(f, 1)), np.int64),
        n_assign=np.zeros(N, np.int64),
        ra=np.zeros(k, np.bool_),
        alloc=np.zeros(k, np.bool_),
        hosts_n=np.zeros(k, np.int64),
        chosen=np.zeros(N, np.int64),
        pending=np.zeros(2 * N, np.int64),
        leftover=np.zeros(2 * N, np.int64),
        covered=np.zeros(N, np.bool_),
        tmp_a=np.zeros(max(N, k), np.int64),
        tmp_b=np.zeros(max(N, k), np.int64),
        next_arr=np.zeros(N, np.float64),
        q_dl=np.zeros((N, qcap), np.float64),
        q_head=np.zeros(N, np.int64),
        q_len=np.zeros(N, np.int64),
        tx_n=np.zeros(k, np.int64),
        tx_sta=np.zeros(k, np.int64),
        obs=np.zeros(k, np.int64),
        got=np.zeros(N, np.bool_),
    )


@njit(cache=True)
def _run(alg, N, k, f, T, D, p, cap, horizon, by_packets, boundaries,
         st, cnt, marked, assign, n_assign, ra, alloc, hosts_n, chosen, pending, leftover, covered,
         tmp_a, tmp_b, next_arr, q_dl, q_head, q_len, tx_n, tx_sta, obs, got,
         arr_rngs, scale, rng_sched, rng_choice, rng_chan, batch_slots, batch_rta):
    forced = np.zeros(1, np.float64)
    fptr = np.zeros(N, np.int64)
    fend = np.zeros(N, np.int64)
    for s in range(N):
        next_arr[s] = _next_arrival(s, 0.0, arr_rngs, scale, False, forced, fptr, fend)
    slot = 0
    b = 0
    nb = 0
    n_bound = boundaries.shape[0]
    while True:
        progress = cnt[C_GEN] if by_packets else slot
        if progress >= horizon:
            break
        if b < n_bound - 1 and progress >= boundaries[b]:
            batch_slots[nb] = cnt[C_OPEN_SLOTS]
            batch_rta[nb] = cnt[C_OPEN_RTA]
            nb += 1
            cnt[C_OPEN_SLOTS] = 0
            cnt[C_OPEN_RTA] = 0
            b += 1
        if st[S_MODE] == WAITING and cnt[C_QUEUED] == 0:
            nxt = np.inf
            for s in range(N):
                if next_arr[s] < nxt:
                    nxt = next_arr[s]
            if np.isinf(nxt):
                if by_packets:
                    break
                target = horizon
            else:
                target = _first_eligible_slot(nxt, T)
                if not by_packets and target > horizon:
                    target = horizon
            if target > slot:
                n = target - slot
                cnt[C_SLOTS] += n
                cnt[C_RTA] += n
                cnt[C_OPEN_SLOTS] += n
                cnt[C_OPEN_RTA] += n
                slot = target
            if not by_packets and slot >= horizon:
                break
        status = _step(slot, alg, N, k, f, T, D, p, cap, st, cnt, marked, assign, n_assign,
                       ra, alloc, hosts_n, chosen, pending, leftover, covered, tmp_a, tmp_b, next_arr,
                       q_dl, q_head, q_len, tx_n, tx_sta, obs, got, arr_rngs, scale, False,
                       forced, fptr, fend, rng_sched, rng_choice, rng_chan)
        if status != OK:
            return status, nb
        slot += 1
    batch_slots[nb] = cnt[C_OPEN_SLOTS]
    batch_rta[nb] = cnt[C_OPEN_RTA]
    nb += 1
    return OK, nb


def run_fast(cfg: SimConfig, qcap: int = 64):
    """Run one replication through the kernel; returns a MetricsAccumulator."""
    from .engine import N_BATCHES, MetricsAccumulator, _batch_boundaries

    while True:
        rngs = RngStreams.from_seed(cfg.seed, cfg.n_stas)
        s = _alloc_state(cfg.n_stas, cfg.max_rta_rus, cfg.copies, qcap)
        batch_slots = np.zeros(N_BATCHES + 1, np.int64)
        batch_rta = np.zeros(N_BATCHES + 1, np.int64)
        scale = 1.0 / cfg.arrival_rate if cfg.arrival_rate > 0 else 0.0
        status, nb = _run(
            ALGO_CODES[cfg.algorithm], cfg.n_stas, cfg.max_rta_rus, cfg.copies,
            cfg.slot_duration, cfg.delay_budget, cfg.noise_prob, cfg.ngra_capacity,
            cfg.horizon, cfg.horizon_unit == "packets",
            np.asarray(_batch_boundaries(cfg.horizon), np.int64),
            s["st"], s["cnt"], s["marked"], s["assign"], s["n_assign"], s["ra"], s["alloc"],
            s["hosts_n"], s["chosen"], s["pending"], s["leftover"], s["covered"], s["tmp_a"], s["tmp_b"],
            s["next_arr"], s["q_dl"], s["q_head"], s["q_len"], s["tx_n"], s["tx_sta"],
            s["obs"], s["got"], rngs.arrivals, scale, rngs.scheduler, rngs.choices,
            rngs.channel, batch_slots, batch_rta,
        )
        if status == OVERFLOW:
            qcap *= 4
            continue
        cnt = s["cnt"]
        acc = MetricsAccumulator(
            generated=int(cnt[C_GEN]),
            delivered=int(cnt[C_DELIV]),
            dropped=int(cnt[C_DROP]),
            slot_count=int(cnt[C_SLOTS]),
            rta_ru_slot_sum=int(cnt[C_RTA]),
            batch_slots=[int(x) for x in batch_slots[:nb]],
            batch_rta=[int(x) for x in batch_rta[:nb]],
        )
        return acc


@njit(cache=True)
def _episodes(n_runs, depth, alg, N, k, f, T, D, p, cap, forced, fstart, fend_init,
              st, cnt, marked, assign, n_assign, ra, alloc, hosts_n, chosen, pending, leftover, covered,
              tmp_a, tmp_b, next_arr, q_dl, q_head, q_len, tx_n, tx_sta, obs, got,
              arr_rngs, rng_sched, rng_choice, rng_chan, hist):
    fptr = np.zeros(N, np.int64)
    fend = fend_init.copy()
    for r in range(n_runs):
        st[:] = 0
        cnt[:] = 0
        marked[:] = False
        covered[:] = False
        q_head[:] = 0
        q_len[:] = 0
        for s in range(N):
            fptr[s] = fstart[s]
            next_arr[s] = _next_arrival(s, 0.0, arr_rngs, 0.0, True, forced, fptr, fend)
        for slot in range(depth):
            status = _step(slot, alg, N, k, f, T, D, p, cap, st, cnt, marked, assign, n_assign,
                           ra, alloc, hosts_n, chosen, pending, leftover, covered, tmp_a, tmp_b, next_arr,
                           q_dl, q_head, q_len, tx_n, tx_sta, obs, got, arr_rngs, 0.0, True,
                           forced, fptr, fend, rng_sched, rng_choice, rng_chan)
            if status != OK:
                return status
        hist[cnt[C_DELIV], cnt[C_DROP]] += 1
    return OK


def sample_episodes(cfg: SimConfig, arrivals: dict, depth: int, n_runs: int) -> np.ndarray:
    """Run ``n_runs`` independent ``depth``-slot episodes with fixed arrivals.

    Streams continue across episodes (one seed for the whole batch).
    Returns a histogram ``hist[delivered, dropped]``.
    """
    N = cfg.n_stas
    times, fstart, fend = [], [], []
    for s in range(N):
        ts = sorted(arrivals.get(s, ()))
        fstart.append(len(times))
        times.extend(ts)
        fend.append(len(times))
    total = len(times)
    forced = np.asarray(times if times else [np.inf], np.float64)
    rngs = RngStreams.from_seed(cfg.seed, N)
    s = _alloc_state(N, cfg.max_rta_rus, cfg.copies, max(total, 1))
    hist = np.zeros((total + 1, total + 1), np.int64)
    status = _episodes(
        n_runs, depth, ALGO_CODES[cfg.algorithm], N, cfg.max_rta_rus, cfg.copies,
        cfg.slot_duration, cfg.delay_budget, cfg.noise_prob, cfg.ngra_capacity,
        forced, np.asarray(fstart, np.int64), np.asarray(fend, np.int64),
        s["st"], s["cnt"], s["marked"], s["assign"], s["n_assign"], s["ra"], s["alloc"],
        s["hosts_n"], s["chosen"], s["pending"], s["leftover"], s["covered"], s["tmp_a"], s["tmp_b"],
        s["next_arr"], s["q_dl"], s["q_head"], s["q_len"], s["tx_n"], s["tx_sta"],
        s["obs"], s["got"], rngs.arrivals, rngs.scheduler, rngs.choices, rngs.channel, hist,
    )
    if status != OK:
        raise RuntimeError("episode queue overflow")
    return hist
