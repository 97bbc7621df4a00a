"""Broker behaviour: wildcard matching, fan-out, ordering, sessions, wire framing."""

from __future__ import annotations

import itertools
import random
import socket
import threading
import time

import pytest

from gridtwin.databus import (
    Broker,
    BusError,
    LocalBusClient,
    MqttClient,
    filter_is_valid,
    topic_matches,
)
from gridtwin.databus import packets


# ----------------------------------------------------------------------
# Topic matching
# ----------------------------------------------------------------------


def brute_force_match(filt: str, topic: str) -> bool:
    """Reference matcher: expand the filter recursively segment by segment."""
    fsegs = filt.split("/")
    tsegs = topic.split("/")

    def rec(fi: int, ti: int) -> bool:
        if fi == len(fsegs):
            return ti == len(tsegs)
        if fsegs[fi] == "#":
            return True  # matches the remainder, including the empty remainder
        if ti == len(tsegs):
            return False
        if fsegs[fi] == "+" or fsegs[fi] == tsegs[ti]:
            return rec(fi + 1, ti + 1)
        return False

    return rec(0, 0)


def test_topic_match_examples():
    assert topic_matches("epic/smarthome/+/status", "epic/smarthome/Q4_1/status")
    assert topic_matches("epic/#", "epic/smarthome/Q4_1/status")
    assert topic_matches("epic/#", "epic/x")
    assert not topic_matches("epic/smarthome/+/status", "epic/smarthome/Q4_1/extra/status")
    assert not topic_matches("epic/+", "epic/a/b")
    assert topic_matches("a/b", "a/b")
    assert not topic_matches("a/b", "a/c")


def test_filter_validation():
    assert filter_is_valid("epic/smarthome/+/status")
    assert filter_is_valid("epic/#")
    assert filter_is_valid("+/+")
    assert not filter_is_valid("a//b")
    assert not filter_is_valid("")
    assert not filter_is_valid("a/#/b")
    assert not filter_is_valid("a/b#")
    assert not filter_is_valid("a/+b")


def test_topic_match_exhaustive_small_alphabet():
    """Compare against the brute-force matcher over all small paths."""
    seg_choices_topic = ["a", "b"]
    seg_choices_filter = ["a", "b", "+", "#"]
    topics = [
        "/".join(c)
        for n in (1, 2, 3)
        for c in itertools.product(seg_choices_topic, repeat=n)
    ]
    filters = [
        "/".join(c)
        for n in (1, 2, 3)
        for c in itertools.product(seg_choices_filter, repeat=n)
        if filter_is_valid("/".join(c))
    ]
    for filt in filters:
        for topic in topics:
            assert topic_matches(filt, topic) == brute_force_match(filt, topic), (filt, topic)


# ----------------------------------------------------------------------
# Broker core (in-process, no engine: synchronous delivery)
# ----------------------------------------------------------------------


class Collector:
    def __init__(self):
        self.messages: list[tuple[str, bytes]] = []

    def __call__(self, topic: str, payload: bytes) -> None:
        self.messages.append((topic, payload))


def test_publish_fanout_identical_bytes():
    broker = Broker()
    subs = [Collector() for _ in range(3)]
    clients = [LocalBusClient(broker, f"IED{i}", s) for i, s in enumerate(subs)]
    for c in clients:
        assert c.subscribe("epic/generation/+/v")
    pub = LocalBusClient(broker, "sim")
    pub.publish("epic/generation/GBUS/v", b"230.94")
    for s in subs:
        assert s.messages == [("epic/generation/GBUS/v", b"230.94")]


def test_publish_no_subscribers_is_ok():
    broker = Broker()
    pub = LocalBusClient(broker, "sim")
    pub.publish("epic/x/y/z", b"1")
    assert broker.stats().messages_in == 1
    assert broker.stats().messages_out == 0


def test_fanout_arithmetic():
    broker = Broker()
    for i in range(4):
        c = LocalBusClient(broker, f"s{i}", Collector())
        c.subscribe("t/#")
    pub = LocalBusClient(broker, "p")
    for _ in range(25):
        pub.publish("t/x", b"v")
    st = broker.stats()
    assert st.messages_in == 25
    assert st.messages_out == 100


def test_ordering_per_publisher_topic():
    broker = Broker()
    got = Collector()
    sub = LocalBusClient(broker, "sub", got)
    sub.subscribe("seq/data")
    pub = LocalBusClient(broker, "pub")
    for i in range(1000):
        pub.publish("seq/data", str(i).encode())
    received = [int(p) for _, p in got.messages]
    assert received == list(range(1000))


def test_at_most_once_no_duplicates():
    broker = Broker()
    got = Collector()
    sub = LocalBusClient(broker, "sub", got)
    # Overlapping filters must still deliver a publish only once per match walk;
    # two distinct filters both matching yields one delivery per filter set walk.
    sub.subscribe("a/+")
    pub = LocalBusClient(broker, "pub")
    rnd = random.Random(7)
    sent = []
    for i in range(500):
        payload = f"{i}:{rnd.random()}".encode()
        sent.append(payload)
        pub.publish("a/b", payload)
    assert [p for _, p in got.messages] == sent


def test_duplicate_client_id_evicts_older():
    broker = Broker()
    first = Collector()
    second = Collector()
    c1 = LocalBusClient(broker, "GIED1", first)
    c1.subscribe("x/#")
    c2 = LocalBusClient(broker, "GIED1", second)
    c2.subscribe("x/#")
    pub = LocalBusClient(broker, "pub")
    pub.publish("x/1", b"after")
    assert first.messages == []
    assert second.messages == [("x/1", b"after")]
    assert broker.stats().sessions == 2  # the replaced GIED1 slot collapsed, plus pub


def test_invalid_filter_negative_grant_session_survives():
    broker = Broker()
    got = Collector()
    c = LocalBusClient(broker, "c", got)
    assert not c.subscribe("a//b")
    assert c.subscribe("a/b")
    LocalBusClient(broker, "p").publish("a/b", b"1")
    assert got.messages == [("a/b", b"1")]


def test_wildcard_publish_rejected():
    broker = Broker()
    pub = LocalBusClient(broker, "p")
    with pytest.raises(Exception):
        pub.publish("a/+/b", b"1")


def test_oversize_payload_dropped_for_local():
    broker = Broker()
    got = Collector()
    sub = LocalBusClient(broker, "s", got)
    sub.subscribe("big/#")
    pub = LocalBusClient(broker, "p")
    with pytest.raises(BusError):
        pub.publish("big/x", b"z" * (64 * 1024 + 1))
    assert got.messages == []


def test_crashing_subscriber_does_not_block_others():
    broker = Broker()

    def boom(topic, payload):
        raise RuntimeError("subscriber crash")

    ok = Collector()
    c_bad = LocalBusClient(broker, "bad", boom)
    c_ok = LocalBusClient(broker, "ok", ok)
    c_bad.subscribe("t/#")
    c_ok.subscribe("t/#")
    LocalBusClient(broker, "p").publish("t/1", b"v")
    assert ok.messages == [("t/1", b"v")]


def test_fresh_broker_stats_zero():
    st = Broker().stats()
    assert st.sessions == 0 and st.messages_in == 0 and st.messages_out == 0
    assert st.max_delivery_latency_ms == 0.0


# ----------------------------------------------------------------------
# Wire framing against hand-built MQTT 3.1.1 byte vectors
# ----------------------------------------------------------------------


def test_connect_packet_bytes():
    frame = packets.encode_connect("GIED1", keepalive_s=60)
    expected = bytes(
        [0x10, 17]  # CONNECT, remaining length
        + [0x00, 0x04] + list(b"MQTT")
        + [0x04, 0x02]  # level, clean session
        + [0x00, 0x3C]  # keepalive 60
        + [0x00, 0x05] + list(b"GIED1")
    )
    assert frame == expected


def test_publish_packet_roundtrip_and_bytes():
    frame = packets.encode_publish("a/b", b"42")
    assert frame == bytes([0x30, 7, 0x00, 0x03]) + b"a/b" + b"42"
    ptype = frame[0] >> 4
    assert ptype == packets.PUBLISH
    topic, payload = packets.decode_publish(frame[0] & 0x0F, frame[2:])
    assert (topic, payload) == ("a/b", b"42")


def test_remaining_length_varint():
    assert packets.encode_remaining_length(0) == b"\x00"
    assert packets.encode_remaining_length(127) == b"\x7f"
    assert packets.encode_remaining_length(128) == b"\x80\x01"
    assert packets.encode_remaining_length(321) == b"\xc1\x02"
    assert packets.encode_remaining_length(16383) == b"\xff\x7f"


def test_decode_connect_rejects_bad_magic():
    body = packets.encode_connect("x")[2:]
    bad = body.replace(b"MQTT", b"MQXX")
    with pytest.raises(packets.MalformedPacket):
        packets.decode_connect(bad)


# ----------------------------------------------------------------------
# TCP listener
# ----------------------------------------------------------------------


def test_tcp_roundtrip_and_eviction():
    broker = Broker()
    port = broker.serve(port=0)
    try:
        got = []
        done = threading.Event()

        def on_msg(topic, payload):
            got.append((topic, payload))
            done.set()

        sub = MqttClient("127.0.0.1", port, "tcp-sub", on_msg)
        assert sub.subscribe("epic/#")
        pub = MqttClient("127.0.0.1", port, "tcp-pub")
        pub.publish("epic/smarthome/Q4_1/status", b"1")
        assert done.wait(5.0)
        assert got == [("epic/smarthome/Q4_1/status", b"1")]
        assert not sub.subscribe("a//b")
        pub.close()
        sub.close()
    finally:
        broker.stop_server()


def test_tcp_bad_magic_closes_transport():
    broker = Broker()
    port = broker.serve(port=0)
    try:
        sock = socket.create_connection(("127.0.0.1", port), timeout=5.0)
        frame = packets.encode_connect("x").replace(b"MQTT", b"JUNK")
        sock.sendall(frame)
        sock.settimeout(5.0)
        assert sock.recv(1) == b""  # closed without CONNACK
        assert broker.stats().sessions == 0
        sock.close()
    finally:
        broker.stop_server()


def test_tcp_sequential_ordering():
    broker = Broker()
    port = broker.serve(port=0)
    try:
        got = []
        count = 200
        done = threading.Event()

        def on_msg(topic, payload):
            got.append(int(payload))
            if len(got) == count:
                done.set()

        sub = MqttClient("127.0.0.1", port, "sub", on_msg)
        sub.subscribe("seq/#")
        pub = MqttClient("127.0.0.1", port, "pub")
        for i in range(count):
            pub.publish("seq/n", str(i).encode())
        assert done.wait(10.0)
        assert got == list(range(count))
        pub.close()
        sub.close()
    finally:
        broker.stop_server()


def test_slow_consumer_disconnected_others_unaffected():
    broker = Broker(queue_limit=8)
    port = broker.serve(port=0)
    try:
        # A subscriber that never reads its socket: clamp its receive buffer
        # so kernel buffering cannot absorb the flood, then let the broker's
        # writer thread block and its 8-slot queue spill.
        raw = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        raw.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, 4096)
        raw.connect(("127.0.0.1", port))
        raw.sendall(packets.encode_connect("stuck"))
        time.sleep(0.2)
        raw.sendall(packets.encode_subscribe(1, ["flood/#"]))
        time.sleep(0.2)

        healthy = Collector()
        sub = LocalBusClient(broker, "healthy", healthy)
        sub.subscribe("flood/#")
        pub = LocalBusClient(broker, "pub")
        blob = b"z" * (48 * 1024)
        for _ in range(200):  # ~9.6 MB, several times any kernel buffer
            pub.publish("flood/x", blob)
        # The flood never blocked: every local delivery completed in line.
        assert len(healthy.messages) == 200
        # The stuck session is torn down and reaped.
        deadline = time.monotonic() + 5.0
        while broker.stats().sessions != 2 and time.monotonic() < deadline:
            time.sleep(0.02)
        assert broker.stats().sessions == 2  # healthy + pub remain
        raw.close()
    finally:
        broker.stop_server()
