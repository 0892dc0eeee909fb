import json
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sunlease.errors import DataFormatError, DomainError, LifecycleError, UnknownMessageType
from sunlease.protocol import (
    TYPE_NAMES,
    Bus,
    Endpoint,
    LeaseGrant,
    PoolOffer,
    SleepCommand,
    StatusReport,
    TcpBusClient,
    TcpBusServer,
    TelemetryReport,
    UsageReport,
    WakeCommand,
    decode,
    encode,
    frame,
    topic_matches,
    unframe,
)

UTC = timezone.utc
T0 = datetime(2016, 7, 1, 12, tzinfo=UTC)

ids = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789-", min_size=1, max_size=8)
seqs = st.integers(0, 2**40)
times = st.integers(0, 10**9).map(lambda s: datetime(2000, 1, 1, tzinfo=UTC) + timedelta(seconds=s))
energy = st.floats(0, 1e6, allow_nan=False, allow_infinity=False)
counts = st.integers(0, 10**6)
states = st.lists(st.tuples(st.integers(0, 5000), st.sampled_from(["booting", "idle", "computing"])), max_size=6).map(tuple)

messages = st.one_of(
    st.builds(TelemetryReport, seqs, times, ids, times, energy, energy, states),
    st.builds(StatusReport, seqs, times, ids, states),
    st.builds(WakeCommand, seqs, times, ids, counts),
    st.builds(SleepCommand, seqs, times, ids, st.lists(st.integers(0, 5000), max_size=6).map(tuple)),
    st.builds(PoolOffer, seqs, times, ids, ids, counts, times),
    st.builds(LeaseGrant, seqs, times, ids, ids, counts, energy, energy),
    st.builds(UsageReport, seqs, times, ids, times, energy),
)


@given(messages)
def test_round_trip(msg):
    line = encode(msg)
    assert line.endswith(b"\n") and line.count(b"\n") == 1
    assert decode(line) == msg


@given(messages)
def test_field_order(msg):
    obj = json.loads(encode(msg))
    keys = list(obj)
    assert keys[:3] == ["type", "seq", "ts"]
    assert obj["type"] == TYPE_NAMES[type(msg)]


def test_wake_bytes():
    line = encode(WakeCommand(seq=7, ts=T0, lu_id="lu-1", node_count=3))
    assert line == b'{"type":"wake","seq":7,"ts":"2016-07-01T12:00:00Z","lu_id":"lu-1","node_count":3}\n'


def test_telemetry_bytes():
    msg = TelemetryReport(1, T0, "lu-1", T0, 0.5, 0.0, ((0, "computing"), (3, "idle")))
    assert encode(msg) == (
        b'{"type":"telemetry","seq":1,"ts":"2016-07-01T12:00:00Z","lu_id":"lu-1",'
        b'"slot_start":"2016-07-01T12:00:00Z","production_kwh":0.5,"local_consumption_kwh":0.0,'
        b'"node_states":[[0,"computing"],[3,"idle"]]}\n'
    )


def test_decode_errors():
    with pytest.raises(UnknownMessageType):
        decode('{"type":"unknown"}')
    with pytest.raises(DataFormatError):
        decode("not json")
    with pytest.raises(DataFormatError):
        decode('{"seq":1}')
    with pytest.raises(DataFormatError):
        decode('{"type":"wake","seq":1,"ts":"2016-07-01T12:00:00Z","lu_id":"a"}')


def test_negative_fields_rejected():
    with pytest.raises(DomainError):
        WakeCommand(seq=1, ts=T0, lu_id="a", node_count=-1)
    with pytest.raises(DomainError):
        TelemetryReport(1, T0, "a", T0, -0.1, 0.0)
    with pytest.raises(DomainError):
        WakeCommand(seq=-1, ts=T0, lu_id="a", node_count=1)


# --- topics and bus ---------------------------------------------------------


@pytest.mark.parametrize(
    "pattern,topic,ok",
    [
        ("lu/+/telemetry", "lu/a/telemetry", True),
        ("lu/+/telemetry", "lu/a/b/telemetry", False),
        ("lu/+/telemetry", "lu/a/cmd", False),
        ("pool/offers", "pool/offers", True),
        ("+/+", "a/b", True),
        ("+", "a/b", False),
    ],
)
def test_topic_matches(pattern, topic, ok):
    assert topic_matches(pattern, topic) is ok


def test_bad_topics():
    bus = Bus()
    with pytest.raises(DomainError):
        bus.subscribe("lu//x")
    with pytest.raises(DomainError):
        bus.subscribe("lu/a+/x")
    with pytest.raises(DomainError):
        bus.publish("lu/+/x", WakeCommand(1, T0, "a", 1))


def test_delivery_to_matching():
    bus = Bus()
    sub = bus.subscribe("lu/+/telemetry")
    other = bus.subscribe("lu/b/telemetry")
    msg = TelemetryReport(1, T0, "a", T0, 1.0, 0.0)
    assert bus.publish("lu/a/telemetry", msg) == 1
    assert sub.drain() == [("lu/a/telemetry", msg)]
    assert other.drain() == []


def test_no_subscribers_is_fine():
    assert Bus().publish("eb/forecast", WakeCommand(1, T0, "a", 1)) == 0


def test_two_subscribers_two_deliveries():
    bus = Bus()
    seen = []
    bus.subscribe("pool/offers", lambda t, m: seen.append(1))
    bus.subscribe("pool/+", lambda t, m: seen.append(2))
    assert bus.publish("pool/offers", PoolOffer(1, T0, "a", "x", 3, T0)) == 2
    assert seen == [1, 2]


def test_no_retained_messages():
    bus = Bus()
    bus.publish("pool/offers", PoolOffer(1, T0, "a", "x", 3, T0))
    late = bus.subscribe("pool/offers")
    assert late.drain() == []


def test_stale_sequence_dropped():
    bus = Bus()
    sub = bus.subscribe("lu/+/telemetry")
    for seq in (1, 2, 2, 1, 5, 3, 6):
        bus.publish("lu/a/telemetry", TelemetryReport(seq, T0, "a", T0, 0.0, 0.0))
    assert [m.seq for _, m in sub.drain()] == [1, 2, 5, 6]
    assert bus.dropped == 3
    # sequences are tracked per sender
    bus.publish("lu/b/telemetry", TelemetryReport(1, T0, "b", T0, 0.0, 0.0))
    assert len(sub.drain()) == 1


@given(st.lists(st.tuples(st.sampled_from("abc"), st.integers(0, 20)), max_size=40))
def test_observed_sequences_strictly_increase(events):
    bus = Bus()
    sub = bus.subscribe("lu/+/telemetry")
    for lu, seq in events:
        bus.publish(f"lu/{lu}/telemetry", TelemetryReport(seq, T0, lu, T0, 0.0, 0.0))
    seen = {}
    for _, m in sub.drain():
        assert m.seq > seen.get(m.lu_id, -1)
        seen[m.lu_id] = m.seq


def test_endpoint_stamps_sequence():
    bus = Bus()
    sub = bus.subscribe("lu/a/cmd")
    ep = Endpoint(bus)
    for _ in range(3):
        ep.send("lu/a/cmd", WakeCommand(0, T0, "a", 1))
    assert [m.seq for _, m in sub.drain()] == [1, 2, 3]


def test_unsubscribe_and_close():
    bus = Bus()
    sub = bus.subscribe("a/b")
    bus.unsubscribe(sub)
    assert bus.publish("a/b", WakeCommand(1, T0, "a", 1)) == 0
    bus.close()
    with pytest.raises(LifecycleError):
        bus.publish("a/b", WakeCommand(2, T0, "a", 1))
    with pytest.raises(LifecycleError):
        bus.subscribe("a/b")


# --- TCP --------------------------------------------------------------------


def test_frame_round_trip():
    msg = UsageReport(3, T0, "lu-1", T0, 4.0)
    assert unframe(frame("pool/usage", msg)) == ("pool/usage", msg)
    with pytest.raises(DataFormatError):
        unframe(b"nospace")


def test_tcp_bus():
    bus = Bus()
    sub = bus.subscribe("lu/+/telemetry")
    server = TcpBusServer(bus).start()
    try:
        client = TcpBusClient(server.server_address)
        try:
            msg = TelemetryReport(1, T0, "lu-9", T0, 0.75, 0.1, ((2, "idle"),))
            assert client.publish("lu/lu-9/telemetry", msg) == "OK 1"
            assert client.publish("lu/lu-9/telemetry", msg) == "OK 0"
            client.sock.sendall(b"lu/x/telemetry {broken\n")
            assert client.rfile.readline().startswith(b"ERR")
        finally:
            client.close()
    finally:
        server.stop()
    assert sub.drain() == [("lu/lu-9/telemetry", msg)]
