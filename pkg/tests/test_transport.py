"""Tests for the in-process transport backends."""

import multiprocessing as mp
import random
import time

import numpy as np
import pytest

from dcnn.errors import ProtocolError, ValidationError
from dcnn.transport import ProcessLinks, ThreadGroup, TransportStats


class TestStats:
    def test_recording(self):
        stats = TransportStats()
        stats.record(np.zeros(10, dtype=np.float32))
        stats.record(np.zeros(3, dtype=np.float64))
        assert stats.messages == 2
        assert stats.bytes == 40 + 24
        assert stats.max_message_elements == 10

    def test_merge(self):
        a = TransportStats(messages=2, bytes=100, max_message_elements=5)
        b = TransportStats(messages=3, bytes=50, max_message_elements=9)
        a.merge(b)
        assert (a.messages, a.bytes, a.max_message_elements) == (5, 150, 9)


class TestThreadGroup:
    def test_basic_exchange(self):
        group = ThreadGroup(2)
        a, b = group.endpoint(0), group.endpoint(1)

        def rank0():
            a.send(1, np.array([1.0, 2.0]))
            return a.recv(1)

        def rank1():
            got = b.recv(0)
            b.send(0, got * 10)
            return got

        r0, r1 = group.run([rank0, rank1])
        assert np.array_equal(r0, [10.0, 20.0])
        assert np.array_equal(r1, [1.0, 2.0])
        assert group.stats.messages == 2

    def test_send_copies_payload(self):
        group = ThreadGroup(2)
        a, b = group.endpoint(0), group.endpoint(1)
        buf = np.array([1.0, 2.0])
        a.send(1, buf)
        buf[:] = -1
        assert np.array_equal(b.recv(0), [1.0, 2.0])

    def test_fifo_per_link_with_randomized_scheduling(self):
        n, per_pair = 3, 30
        group = ThreadGroup(n)
        sched = random.Random(1234)
        delays = {r: [sched.random() * 1e-4 for _ in range(per_pair * n)] for r in range(n)}

        def worker(rank):
            ep = group.endpoint(rank)
            def body():
                i = 0
                for k in range(per_pair):
                    for dst in range(n):
                        if dst == rank:
                            continue
                        time.sleep(delays[rank][i])
                        i += 1
                        ep.send(dst, np.array([rank, k]))
                seen = {src: -1 for src in range(n) if src != rank}
                for _ in range(per_pair * (n - 1)):
                    src = min(seen, key=lambda s: seen[s])
                    msg = ep.recv(src)
                    assert msg[0] == src
                    assert msg[1] == seen[src] + 1, "per-link FIFO violated"
                    seen[src] = msg[1]
                return seen
            return body

        results = group.run([worker(r) for r in range(n)])
        for seen in results:
            assert all(v == per_pair - 1 for v in seen.values())

    def test_recv_timeout_is_protocol_error(self):
        group = ThreadGroup(2, timeout=0.05)
        with pytest.raises(ProtocolError, match="timed out"):
            group.endpoint(0).recv(1)

    def test_peer_validation(self):
        group = ThreadGroup(2)
        ep = group.endpoint(0)
        with pytest.raises(ValidationError, match="cannot message itself"):
            ep.send(0, np.zeros(1))
        with pytest.raises(ValidationError, match="outside"):
            ep.send(5, np.zeros(1))
        with pytest.raises(ValidationError, match="outside"):
            group.endpoint(9)

    def test_run_propagates_worker_failure(self):
        group = ThreadGroup(2)

        def ok():
            return 1

        def bad():
            raise RuntimeError("worker exploded")

        with pytest.raises(RuntimeError, match="exploded"):
            group.run([ok, bad])

    def test_run_arity_check(self):
        group = ThreadGroup(2)
        with pytest.raises(ValidationError, match="2 callables"):
            group.run([lambda: None])


def _process_child(links, rank, out_queue):
    ep = links.endpoint(rank)
    peer = 1 - rank
    ep.send(peer, np.full(4, float(rank + 1)))
    got = ep.recv(peer)
    out_queue.put((rank, got.tolist(), ep.stats.messages, ep.stats.bytes))


class TestProcessLinks:
    def test_cross_process_exchange(self):
        ctx = mp.get_context("fork")
        links = ProcessLinks(2, timeout=30.0)
        out = ctx.Queue()
        procs = [
            ctx.Process(target=_process_child, args=(links, rank, out))
            for rank in range(2)
        ]
        for p in procs:
            p.start()
        results = {}
        for _ in range(2):
            rank, payload, messages, nbytes = out.get(timeout=30)
            results[rank] = (payload, messages, nbytes)
        for p in procs:
            p.join(timeout=30)
            assert p.exitcode == 0
        assert results[0][0] == [2.0, 2.0, 2.0, 2.0]
        assert results[1][0] == [1.0, 1.0, 1.0, 1.0]
        # each endpoint counted exactly its own single send
        assert results[0][1] == results[1][1] == 1
        assert results[0][2] == results[1][2] == 4 * 8

    def test_endpoint_validation(self):
        links = ProcessLinks(2)
        with pytest.raises(ValidationError, match="outside"):
            links.endpoint(2)
        links.close()
