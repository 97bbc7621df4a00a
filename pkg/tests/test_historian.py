"""Historian: gapless append, aggregates, durability, transfer protocol."""

import json
import socket

import pytest

from gridtwin.historian import (
    HistorianClient,
    HistorianError,
    HistorianServer,
    HistorianStore,
    TagSample,
)


def sample(tag, seq, value, ts, quality="good"):
    return TagSample(tag=tag, seq=seq, value=value, quality=quality, scada_ts=ts)


class TestAppend:
    def test_append_acks_highest_seq_per_tag(self):
        store = HistorianStore()
        acks = store.append([
            sample("a", 1, 1.0, 10.0),
            sample("a", 2, 2.0, 11.0),
            sample("b", 1, True, 10.0),
        ])
        assert acks == {"a": 2, "b": 1}
        assert store.count() == 3

    def test_duplicate_replay_is_idempotent(self):
        store = HistorianStore()
        batch = [sample("a", 1, 1.5, 10.0), sample("a", 2, 2.5, 11.0)]
        first = store.append(batch)
        again = store.append(batch)
        assert first == again == {"a": 2}
        assert store.count("a") == 2

    def test_empty_batch_is_a_noop(self):
        store = HistorianStore()
        assert store.append([]) == {}
        assert store.count() == 0

    def test_seq_gap_rejected_naming_tag(self):
        store = HistorianStore()
        store.append([sample("pump", 1, 1.0, 10.0)])
        with pytest.raises(HistorianError, match="pump.*have 1.*starts at 3"):
            store.append([sample("pump", 3, 3.0, 12.0)])
        assert store.count("pump") == 1  # nothing from the bad batch landed

    def test_unordered_batch_rejected(self):
        store = HistorianStore()
        with pytest.raises(HistorianError, match="not in seq order for tag 'x'"):
            store.append([sample("x", 2, 2.0, 11.0), sample("x", 1, 1.0, 10.0)])

    def test_internal_gap_rejected(self):
        store = HistorianStore()
        with pytest.raises(HistorianError, match="x.*1 -> 3"):
            store.append([sample("x", 1, 1.0, 10.0), sample("x", 3, 3.0, 12.0)])

    def test_bad_batch_rejected_atomically(self):
        store = HistorianStore()
        store.append([sample("ok", 1, 1.0, 10.0)])
        with pytest.raises(HistorianError):
            store.append([sample("ok", 2, 2.0, 11.0),   # valid half
                          sample("bad", 5, 5.0, 11.0)])  # gap from 0
        assert store.count("ok") == 1
        assert "bad" not in store.acks()

    def test_gaplessness_invariant(self):
        store = HistorianStore()
        for seq in range(1, 51):
            store.append([sample("t", seq, float(seq), float(seq))])
        persisted = [s.seq for s in store.query("t", 0.0, 1e9)]
        assert persisted == list(range(1, 51))


class TestQuery:
    def build(self):
        store = HistorianStore()
        store.append([
            sample("meas", 1, 1.0, 100.0),
            sample("meas", 2, 3.0, 200.0),
            sample("meas", 3, 5.0, 300.0),
            sample("state", 1, True, 100.0),
            sample("state", 2, False, 250.0),
        ])
        return store

    def test_raw_window_boundaries_inclusive(self):
        store = self.build()
        assert [s.seq for s in store.query("meas", 100.0, 300.0)] == [1, 2, 3]
        assert [s.seq for s in store.query("meas", 100.0, 299.9)] == [1, 2]
        assert [s.seq for s in store.query("meas", 100.1, 300.0)] == [2, 3]
        assert store.query("meas", 400.0, 500.0) == []

    def test_values_round_trip_exactly(self):
        store = HistorianStore()
        store.append([sample("f", 1, 394.3081322847645, 1.0),
                      sample("f", 2, -1e-9, 2.0),
                      sample("i", 1, -42, 1.0),
                      sample("s", 1, "héllo", 1.0),
                      sample("b", 1, False, 1.0)])
        assert store.query("f", 0, 10)[0].value == 394.3081322847645
        assert store.query("f", 0, 10)[1].value == -1e-9
        assert store.query("i", 0, 10)[0].value == -42
        assert store.query("s", 0, 10)[0].value == "héllo"
        assert store.query("b", 0, 10)[0].value is False

    def test_aggregates_hand_computed(self):
        store = self.build()
        assert store.query("meas", 100.0, 300.0, "min") == 1.0
        assert store.query("meas", 100.0, 300.0, "max") == 5.0
        assert store.query("meas", 100.0, 300.0, "mean") == 3.0
        assert store.query("meas", 150.0, 300.0, "mean") == 4.0

    def test_mean_over_constant_series_is_the_constant(self):
        store = HistorianStore()
        store.append([sample("c", i, 7.25, float(i)) for i in range(1, 6)])
        assert store.query("c", 1.0, 5.0, "mean") == 7.25

    def test_last_returns_latest_sample_in_window(self):
        store = self.build()
        last = store.query("state", 0.0, 1e9, "last")
        assert (last.seq, last.value) == (2, False)
        assert store.query("state", 0.0, 150.0, "last").value is True

    def test_aggregate_over_empty_window_is_none(self):
        store = self.build()
        assert store.query("meas", 400.0, 500.0, "mean") is None
        assert store.query("meas", 400.0, 500.0, "last") is None

    def test_unknown_tag_not_found(self):
        store = self.build()
        with pytest.raises(KeyError, match="ghost"):
            store.query("ghost", 0.0, 1.0)

    def test_invalid_interval_and_aggregate(self):
        store = self.build()
        with pytest.raises(HistorianError, match="t0"):
            store.query("meas", 2.0, 1.0)
        with pytest.raises(HistorianError, match="median"):
            store.query("meas", 0.0, 1.0, "median")


class TestDurability:
    def test_samples_survive_reopen(self, tmp_path):
        db = tmp_path / "hist.db"
        store = HistorianStore(db)
        store.append([sample("a", 1, 1.5, 10.0), sample("a", 2, 2.5, 20.0)])
        store.close()

        reopened = HistorianStore(db)
        assert reopened.acks() == {"a": 2}
        assert [s.value for s in reopened.query("a", 0, 100)] == [1.5, 2.5]
        # appends continue the chain seamlessly
        reopened.append([sample("a", 3, 3.5, 30.0)])
        assert [s.seq for s in reopened.query("a", 0, 100)] == [1, 2, 3]

    def test_export_csv_exact_layout(self, tmp_path):
        store = HistorianStore()
        store.append([
            sample("b/stVal", 1, True, 100.0),
            sample("a/TotW", 1, 40.5, 100.0),
            sample("a/TotW", 2, 20.25, 200.0, quality="stale"),
        ])
        out = tmp_path / "dump.csv"
        assert store.export_csv(out) == 3
        assert out.read_bytes() == (
            b"tag,seq,scada_ts,value,quality\r\n"
            b"a/TotW,1,100.0,40.5,good\r\n"
            b"a/TotW,2,200.0,20.25,stale\r\n"
            b"b/stVal,1,100.0,1,good\r\n"
        )


class TestProtocol:
    def test_append_query_over_tcp(self, tmp_path):
        store = HistorianStore(tmp_path / "h.db")
        server = HistorianServer(store, port=0)
        client = HistorianClient(port=server.start())
        try:
            acks = client.append([sample("a", 1, 40.5, 100.0),
                                  sample("a", 2, 41.5, 200.0)])
            assert acks == {"a": 2}
            assert client.acks() == {"a": 2}
            got = client.query("a", 0.0, 1e9)
            assert [(s.seq, s.value) for s in got] == [(1, 40.5), (2, 41.5)]
            assert client.query("a", 0.0, 1e9, "mean") == 41.0
            assert client.query("a", 0.0, 1e9, "last").value == 41.5
        finally:
            client.close()
            server.stop()

    def test_float_values_exact_across_json(self, tmp_path):
        store = HistorianStore()
        server = HistorianServer(store, port=0)
        client = HistorianClient(port=server.start())
        try:
            values = [394.3081322847645, 0.1, 1e-9, 65.88949094960631]
            client.append([sample("f", i + 1, v, float(i))
                           for i, v in enumerate(values)])
            got = [s.value for s in client.query("f", 0.0, 1e9)]
            assert got == values  # zero tolerance
        finally:
            client.close()
            server.stop()

    def test_errors_propagate_not_crash(self):
        store = HistorianStore()
        server = HistorianServer(store, port=0)
        client = HistorianClient(port=server.start())
        try:
            client.append([sample("a", 1, 1.0, 1.0)])
            with pytest.raises(HistorianError, match="seq gap"):
                client.append([sample("a", 5, 5.0, 5.0)])
            with pytest.raises(HistorianError, match="not found"):
                client.query("ghost", 0, 1)
            # session survives errors
            assert client.acks() == {"a": 1}
        finally:
            client.close()
            server.stop()

    def test_kill_and_restart_resumes_gapless(self, tmp_path):
        db = tmp_path / "h.db"
        store = HistorianStore(db)
        server = HistorianServer(store, port=0)
        port = server.start()
        client = HistorianClient(port=port)
        client.append([sample("t", 1, 1.0, 1.0)])

        server.stop()
        store.close()
        with pytest.raises(ConnectionError):
            client.append([sample("t", 2, 2.0, 2.0)])

        # restart on the same port against the same file
        store2 = HistorianStore(db)
        server2 = HistorianServer(store2, port=port)
        server2.start()
        try:
            assert client.acks() == {"t": 1}       # client reconnects
            client.append([sample("t", 2, 2.0, 2.0)])
            assert [s.seq for s in client.query("t", 0, 10)] == [1, 2]
        finally:
            client.close()
            server2.stop()

    def test_malformed_request_line(self):
        store = HistorianStore()
        server = HistorianServer(store, port=0)
        port = server.start()
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=5) as sock:
                fh = sock.makefile("rwb")
                fh.write(b"{oops\n")
                fh.flush()
                assert json.loads(fh.readline())["ok"] is False
                fh.write(json.dumps({"op": "tags"}).encode() + b"\n")
                fh.flush()
                assert json.loads(fh.readline()) == {"ok": True, "tags": []}
        finally:
            server.stop()
