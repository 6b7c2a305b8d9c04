import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from loiu.metrics import (AoIAccumulator, EpisodeTrace, LinkEvent, LinkMetricBank, MetricKind, PairRequirement,
                          ReliabilityCounter, SlotRecord, content_utility_loss, expected_loiu, loiu,
                          make_accumulator, run_trace, task_reliability, time_utility_loss,
                          transmission_reliability, write_metric_csv)
from traces import KINDS, TRACES, accumulator_kwargs


def test_loiu_worked_examples():
    assert time_utility_loss(0.004, 0.008) == 0.5
    assert content_utility_loss([1.0, 0.0], [2.0, 1.0]) == pytest.approx(0.125)
    assert loiu(0.004, 0.008, [1.0, 0.0], [2.0, 1.0]) == pytest.approx(0.0625)
    assert expected_loiu(0.5, 1.0, [0], [3], [2.0], [2.0]) == pytest.approx(0.75)


def test_loiu_zero_when_all_received():
    assert expected_loiu(0.003, 0.01, [1, 1], [0, 0], [1.0, 2.0], [1.0, 1.0]) == 0.0


def test_loiu_rejects_bad_inputs():
    with pytest.raises(ValueError):
        time_utility_loss(0.1, 0.0)
    with pytest.raises(ValueError):
        time_utility_loss(-0.1, 1.0)
    with pytest.raises(ValueError):
        content_utility_loss([1.0], [0.0])
    with pytest.raises(ValueError):
        PairRequirement(err_max=0.0, deadline=0.01)


@given(d=st.floats(0, 1), deadline=st.floats(1e-3, 1), errs=st.lists(st.floats(-10, 10), min_size=1, max_size=6),
       scale=st.floats(0.1, 10))
def test_loiu_nonnegative_and_scale_invariant(d, deadline, errs, scale):
    emax = [1.5] * len(errs)
    v = loiu(d, deadline, errs, emax)
    assert v >= 0
    # rescaling errors and bounds together leaves the content term unchanged
    assert loiu(d, deadline, [e * scale for e in errs], [e * scale for e in emax]) == pytest.approx(v, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("trace", sorted(TRACES))
@pytest.mark.parametrize("kind", KINDS)
def test_hand_traces(trace, kind):
    t = TRACES[trace]
    got = run_trace(make_accumulator(kind, **accumulator_kwargs(kind)), t["events"])
    assert got == [float(v) for v in t[kind]]


def test_out_of_order_rejected():
    acc = AoIAccumulator()
    acc.update(LinkEvent(slot=3))
    with pytest.raises(ValueError):
        acc.update(LinkEvent(slot=2))


def test_delivery_before_generation_rejected():
    with pytest.raises(ValueError):
        AoIAccumulator().update(LinkEvent(slot=2, delivered=True, gen_slot=5))


@given(st.lists(st.booleans(), min_size=1, max_size=40))
def test_aoi_resets_and_grows(delivered):
    acc = AoIAccumulator()
    prev = 0
    for t, d in enumerate(delivered, start=1):
        v = acc.update(LinkEvent(slot=t, delivered=d))
        assert v == (0 if d else prev + 1)
        prev = v


@given(st.lists(st.booleans(), min_size=1, max_size=40), st.integers(0, 2**31))
def test_bank_matches_accumulators_on_fresh_deliveries(delivered, seed):
    # the vectorised bank and the event-driven accumulators agree on a 1x1 link
    rng = np.random.default_rng(seed)
    bank = LinkMetricBank(np.zeros(1), np.full((1, 1), 2.0))
    accs = {k: make_accumulator(k, **accumulator_kwargs(k)) for k in KINDS}
    x, x_hat = 0.0, 0.0
    for t, d in enumerate(delivered, start=1):
        x += float(rng.standard_normal())
        if d:
            x_hat = x
        err = x - x_hat
        bank.update(t, np.array([[d]]), np.array([x]), np.array([[err]]))
        ev = LinkEvent(slot=t, delivered=d, x=x, x_hat=x_hat)
        for k, acc in accs.items():
            assert bank.values(k)[0, 0] == pytest.approx(acc.update(ev)), k


def test_bank_refuses_loiu():
    bank = LinkMetricBank(np.zeros(2), np.ones((2, 2)))
    with pytest.raises(ValueError):
        bank.values(MetricKind.LOIU)


def test_metric_kind_parse():
    assert MetricKind.parse("loiu") is MetricKind.LOIU
    assert MetricKind.parse("AoCI") is MetricKind.AOCI
    with pytest.raises(ValueError):
        MetricKind.parse("PoI")


def _trace():
    nu = np.array([[0, 1], [1, 0]], dtype=bool)
    tr = EpisodeTrace(nu=nu, err_max=np.full((2, 2), 1.0), deadline=np.array([0.01, 0.01]), sinr_threshold=1.0)
    # slot 1: 0->1 delivered on time; 1->0 scheduled but fails, error 2 > E
    tr.slots.append(SlotRecord(received=np.array([[0, 1], [0, 0]]), scheduled=np.array([[0, 1], [1, 0]], bool),
                               pair_delay=np.array([[np.inf, 0.002], [0.004, np.inf]]),
                               update_delay=np.array([0.004, 0.002]),
                               errors=np.array([[0, 0], [2.0, 0]]), sinr=np.array([[np.nan, 5.0], [0.5, np.nan]])))
    # slot 2: nothing scheduled, errors 0.5 (within E) and 3 (outside)
    tr.slots.append(SlotRecord(received=np.zeros((2, 2)), scheduled=np.zeros((2, 2), bool),
                               pair_delay=np.full((2, 2), np.inf), update_delay=np.array([0.01, 0.01]),
                               errors=np.array([[0, 3.0], [0.5, 0]]), sinr=np.full((2, 2), np.nan)))
    return tr


def test_reliability_hand_trace():
    tr = _trace()
    # task: slot1 -> (0,1) ok, (1,0) not; slot2 -> (1,0) ok, (0,1) not => 2/4
    assert task_reliability(tr) == 0.5
    # transmission: two scheduled, only 0->1 meets SINR and deadline
    assert transmission_reliability(tr) == 0.5


def test_transmission_reliability_none_without_schedule():
    tr = _trace()
    tr.slots = tr.slots[1:]
    assert transmission_reliability(tr) is None
    assert ReliabilityCounter().transmission_reliability is None


def test_empty_trace_rejected():
    tr = _trace()
    tr.slots = []
    with pytest.raises(ValueError):
        task_reliability(tr)


def test_metric_csv_header(tmp_path):
    path = tmp_path / "m.csv"
    write_metric_csv(path, [(1, 0, 2, "AoI", 3)])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["slot", "receiver", "collaborator", "metric_kind", "value"]
    assert rows[1] == ["1", "0", "2", "AoI", "3.0"]
