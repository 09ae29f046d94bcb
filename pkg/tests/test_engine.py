import pytest

from wavesim.engine import (Engine, RngRegistry, RngStream, SimulationError,
                            US_PER_SECOND)


def test_events_delivered_in_time_order():
    engine = Engine()
    fired = []
    engine.schedule_at(30, lambda: fired.append(30))
    engine.schedule_at(10, lambda: fired.append(10))
    engine.schedule_at(20, lambda: fired.append(20))
    engine.run_until(100)
    assert fired == [10, 20, 30]


def test_equal_time_events_fifo():
    engine = Engine()
    fired = []
    engine.schedule_at(100, lambda: fired.append("A"))
    engine.schedule_at(100, lambda: fired.append("B"))
    engine.run_until(100)
    assert fired == ["A", "B"]


def test_event_at_current_time_before_later_events():
    engine = Engine()
    fired = []
    engine.schedule_at(1, lambda: fired.append("later"))
    engine.schedule_at(0, lambda: fired.append("now"))
    engine.run_until(5)
    assert fired == ["now", "later"]


def test_cancelled_event_never_delivered():
    engine = Engine()
    fired = []
    handle = engine.schedule_at(100, lambda: fired.append("x"))
    handle.cancel()
    engine.run_until(1000)
    assert fired == []
    assert handle.cancelled


def test_scheduling_in_the_past_rejected():
    engine = Engine()
    engine.schedule_at(50, lambda: None)
    engine.run_until(50)
    with pytest.raises(SimulationError):
        engine.schedule_at(10, lambda: None)


def test_run_until_empty_queue_advances_clock():
    engine = Engine()
    summary = engine.run_until(US_PER_SECOND)
    assert summary.events_processed == 0
    assert summary.clock_us == US_PER_SECOND
    assert engine.now == US_PER_SECOND


def test_run_until_stops_at_horizon():
    engine = Engine()
    fired = []
    for t in (10, 20, 30):
        engine.schedule_at(t, lambda t=t: fired.append(t))
    summary = engine.run_until(25)
    assert summary.events_processed == 2
    assert fired == [10, 20]
    engine.run_until(35)
    assert fired == [10, 20, 30]


def test_handler_failure_names_the_event():
    engine = Engine()

    def boom():
        raise RuntimeError("broken handler")

    engine.schedule_at(42, boom, target="node3", kind="mac.slot")
    with pytest.raises(SimulationError) as err:
        engine.run_until(100)
    message = str(err.value)
    assert "mac.slot" in message and "node3" in message and "42" in message


def test_no_event_delivered_twice():
    engine = Engine()
    fired = []
    engine.schedule_at(10, lambda: fired.append(1))
    engine.run_until(100)
    engine.run_until(200)
    assert fired == [1]


# -- RNG streams -------------------------------------------------------------

def test_degenerate_range():
    stream = RngStream(1, "s")
    assert stream.uniform_int(7, 7) == 7


def test_lo_above_hi_rejected():
    with pytest.raises(ValueError):
        RngStream(1, "s").uniform_int(3, 2)


def test_same_seed_same_sequence():
    a = RngStream(99, "backoff/node1")
    b = RngStream(99, "backoff/node1")
    assert [a.uniform_int(0, 1023) for _ in range(50)] == \
           [b.uniform_int(0, 1023) for _ in range(50)]


def test_stream_independence_under_interleaving():
    solo = RngStream(5, "a")
    solo_seq = [solo.uniform_int(0, 100) for _ in range(20)]

    reg = RngRegistry(5)
    a, b = reg.stream("a"), reg.stream("b")
    interleaved = []
    for _ in range(20):
        interleaved.append(a.uniform_int(0, 100))
        b.uniform_int(0, 100)
    assert interleaved == solo_seq


def test_distinct_streams_differ():
    reg = RngRegistry(5)
    seq_a = [reg.stream("a").uniform_int(0, 1 << 32) for _ in range(8)]
    seq_b = [reg.stream("b").uniform_int(0, 1 << 32) for _ in range(8)]
    assert seq_a != seq_b


def test_uniformity_chi_square_five_sigma():
    stream = RngStream(12345, "uniformity")
    n, bins = 100_000, 16
    counts = [0] * bins
    for _ in range(n):
        counts[stream.uniform_int(0, bins - 1)] += 1
    p = 1 / bins
    expected = n * p
    sigma = (n * p * (1 - p)) ** 0.5
    for count in counts:
        assert abs(count - expected) < 5 * sigma
