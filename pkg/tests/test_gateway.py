import http.client
import json
import threading
import time

import pytest

from throttlekit.gateway import GatewayConfig, GatewayCore, GatewayServer


def make_core(capacity=100.0, rate_per_min=80.0, initial=None, **kw):
    core = GatewayCore(GatewayConfig(capacity=capacity, rate_per_min=rate_per_min,
                                     initial_tokens=initial, **kw))
    core.reset(0.0)
    return core


class TestCore:
    def test_multiply_success(self):
        core = make_core()
        status, body = core.handle_multiply(b'{"a": 6, "b": 7}', 0.0)
        assert status == 200
        assert json.loads(body) == {"result": 42}

    def test_429_when_no_tokens(self):
        core = make_core(capacity=1, initial=0.0)
        status, body = core.handle_multiply(b'{"a": 1, "b": 1}', 0.0)
        assert status == 429
        assert body == b""

    def test_malformed_bodies_bypass_bucket(self):
        core = make_core(capacity=1, initial=1.0)
        for bad in (b"", b"not json", b'{"a": 1}', b'{"a": 1.5, "b": 2}',
                    b'{"a": true, "b": 2}', b'{"a": "1", "b": "2"}'):
            status, _ = core.handle_multiply(bad, 0.0)
            assert status == 400
        assert core.stats.malformed == 6
        assert core.stats.rejected == 0
        assert core.bucket.tokens == 1.0  # untouched

    def test_budget_exact_500_of_800_offered(self):
        core = make_core()  # B=100, 80/min
        admitted = 0
        for i in range(800):
            now = 300.0 * i / 799
            status, _ = core.handle_multiply(b'{"a":2,"b":3}', now)
            admitted += status == 200
        assert admitted <= 500
        assert core.stats.admitted + core.stats.rejected == 800

    def test_conservation_check(self):
        core = make_core(capacity=5, rate_per_min=60.0)
        for i in range(50):
            core.admit(i * 0.1)
        assert core.conservation_holds(4.9)

    def test_reset_restores_initial_tokens(self):
        core = make_core(capacity=10, initial=4.0)
        core.admit(0.0)
        core.reset(100.0)
        assert core.bucket.tokens == 4.0
        assert core.stats.admitted == 0


@pytest.fixture()
def server():
    srv = GatewayServer(GatewayConfig(capacity=100, rate_per_min=80, listen=("127.0.0.1", 0))).start()
    yield srv
    srv.stop()


def post_multiply(addr, a=6, b=7):
    conn = http.client.HTTPConnection(*addr, timeout=5)
    try:
        conn.request("POST", "/multiply", json.dumps({"a": a, "b": b}).encode(),
                     {"Content-Type": "application/json"})
        resp = conn.getresponse()
        return resp.status, resp.read(), dict(resp.getheaders())
    finally:
        conn.close()


class TestHttpServer:
    def test_multiply_over_the_wire(self, server):
        status, body, _ = post_multiply(server.address, 6, 7)
        assert status == 200
        assert json.loads(body) == {"result": 42}

    def test_429_carries_no_helper_headers(self):
        srv = GatewayServer(GatewayConfig(capacity=1, rate_per_min=0.01,
                                          initial_tokens=0.0, listen=("127.0.0.1", 0))).start()
        try:
            status, body, headers = post_multiply(srv.address)
            assert status == 429
            assert body == b""
            banned = [h for h in headers if h.lower() == "retry-after"
                      or h.lower().startswith("ratelimit")
                      or h.lower().startswith("x-ratelimit")]
            assert banned == []
        finally:
            srv.stop()

    def test_keepalive_connection_reuse(self, server):
        conn = http.client.HTTPConnection(*server.address, timeout=5)
        try:
            for _ in range(3):
                conn.request("POST", "/multiply", b'{"a":2,"b":2}')
                resp = conn.getresponse()
                assert resp.status == 200
                resp.read()
        finally:
            conn.close()

    def test_stats_endpoint_reconciles(self, server):
        for _ in range(5):
            post_multiply(server.address)
        conn = http.client.HTTPConnection(*server.address, timeout=5)
        conn.request("GET", "/stats")
        stats = json.loads(conn.getresponse().read())
        conn.close()
        assert stats["admitted"] == 5
        assert stats["admitted"] + stats["rejected"] == len(stats["log"])

    def test_reset_endpoint(self, server):
        post_multiply(server.address)
        conn = http.client.HTTPConnection(*server.address, timeout=5)
        conn.request("POST", "/reset", b"")
        resp = conn.getresponse()
        assert resp.status == 200
        resp.read()
        conn.request("GET", "/stats")
        stats = json.loads(conn.getresponse().read())
        conn.close()
        assert stats["admitted"] == 0

    def test_admin_endpoints_can_be_disabled(self):
        srv = GatewayServer(GatewayConfig(listen=("127.0.0.1", 0), admin_endpoints=False)).start()
        try:
            conn = http.client.HTTPConnection(*srv.address, timeout=5)
            conn.request("GET", "/stats")
            assert conn.getresponse().status == 404
            conn.close()
        finally:
            srv.stop()

    def test_unknown_path_is_404(self, server):
        conn = http.client.HTTPConnection(*server.address, timeout=5)
        conn.request("POST", "/nope", b"{}")
        assert conn.getresponse().status == 404
        conn.close()

    def test_two_simultaneous_requests_one_token(self):
        # linearizable admission: exactly one 200 and one 429, many times over
        for _ in range(20):
            srv = GatewayServer(GatewayConfig(capacity=1, rate_per_min=0.01,
                                              initial_tokens=1.0, listen=("127.0.0.1", 0))).start()
            try:
                results: list[int] = []
                barrier = threading.Barrier(2)

                def fire() -> None:
                    barrier.wait()
                    status, _, _ = post_multiply(srv.address)
                    results.append(status)

                threads = [threading.Thread(target=fire) for _ in range(2)]
                for t in threads:
                    t.start()
                for t in threads:
                    t.join()
                assert sorted(results) == [200, 429]
            finally:
                srv.stop()

    def test_concurrent_admissions_never_exceed_budget(self):
        srv = GatewayServer(GatewayConfig(capacity=10, rate_per_min=0.01,
                                          initial_tokens=10.0, listen=("127.0.0.1", 0))).start()
        try:
            statuses: list[int] = []
            lock = threading.Lock()

            def fire() -> None:
                status, _, _ = post_multiply(srv.address)
                with lock:
                    statuses.append(status)

            threads = [threading.Thread(target=fire) for _ in range(40)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert statuses.count(200) == 10
            assert statuses.count(429) == 30
            assert srv.core.bucket.tokens >= 0
        finally:
            srv.stop()

    def test_loopback_overhead_under_five_ms(self, server):
        conn = http.client.HTTPConnection(*server.address, timeout=5)
        try:
            samples = []
            for _ in range(30):
                start = time.perf_counter()
                conn.request("POST", "/multiply", b'{"a":3,"b":9}')
                resp = conn.getresponse()
                resp.read()
                samples.append(time.perf_counter() - start)
            samples.sort()
            assert samples[len(samples) // 2] < 0.005  # median
        finally:
            conn.close()
