import numpy as np
import pytest

from rta_ofdma.channel import ChannelModel, resolve_slot
from rta_ofdma.core import ContractViolation, Outcome, SlotSchedule, Transmission


def sched(ra=(), da=None):
    return SlotSchedule(0, frozenset(ra), da or {})


class CountingRng:
    def __init__(self, value=0.5):
        self.value = value
        self.calls = 0

    def random(self):
        self.calls += 1
        return self.value


def test_outcomes_per_ru():
    s = sched(ra=(0, 1, 2))
    tx = [Transmission(0, 10, 0), Transmission(1, 11, 0), Transmission(2, 12, 1)]
    obs = resolve_slot(tx, s, CountingRng(), 0.0)
    assert [o.ru for o in obs] == [0, 1, 2]
    assert [o.outcome for o in obs] == [Outcome.FAILURE, Outcome.SUCCESS, Outcome.IDLE]
    assert (obs[1].sta, obs[1].packet_id) == (2, 12)
    assert obs[0].sta is None  # failures are anonymous


def test_only_single_occupancy_rus_draw_noise():
    s = sched(ra=(0, 1, 2, 3))
    tx = [Transmission(0, 1, 0), Transmission(1, 2, 0), Transmission(2, 3, 2)]
    rng = CountingRng()
    resolve_slot(tx, s, rng, 0.3)
    assert rng.calls == 1


def test_idle_slot_consumes_no_randomness():
    rng = CountingRng()
    resolve_slot([], sched(ra=(0,)), rng, 0.5)
    assert rng.calls == 0


def test_unallocated_ru_is_a_contract_violation():
    with pytest.raises(ContractViolation):
        resolve_slot([Transmission(0, 1, 3)], sched(ra=(0,)), CountingRng(), 0.0)


@pytest.mark.parametrize("p, outcome", [(0.0, Outcome.SUCCESS), (1.0, Outcome.FAILURE)])
def test_noise_boundaries(p, outcome):
    rng = np.random.default_rng(1)
    s = sched(ra=(0,), da={1: frozenset({1})})
    for _ in range(1000):
        obs = resolve_slot([Transmission(0, 1, 0), Transmission(1, 2, 1)], s, rng, p)
        assert all(o.outcome is outcome for o in obs)


def test_noise_success_frequency():
    # 1e6 single-STA transmissions at p = 0.2
    rng = np.random.default_rng(2024)
    ch = ChannelModel(0.2)
    s = sched(ra=tuple(range(10)))
    tx = [Transmission(i, i, i) for i in range(10)]
    ok = 0
    for _ in range(100_000):
        ok += sum(o.outcome is Outcome.SUCCESS for o in ch.resolve_slot(tx, s, rng))
    assert abs(ok / 1e6 - 0.8) < 0.002


def test_same_seed_same_observations():
    s = sched(ra=(0, 1, 2))
    tx = [Transmission(0, 1, 0), Transmission(1, 2, 2)]
    a = [resolve_slot(tx, s, r, 0.5) for r in [np.random.default_rng(3)] * 50]
    b = [resolve_slot(tx, s, r, 0.5) for r in [np.random.default_rng(3)] * 50]
    assert a == b


def test_channel_model_rejects_bad_probability():
    with pytest.raises(ValueError):
        ChannelModel(1.2)
