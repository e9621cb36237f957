"""The real wire: HTTP gateway and UDP telemetry on loopback.

Starts both servers on ephemeral ports, exercises the exact production
surfaces (POST /multiply, GET /stats, telemetry datagrams), and shows the
minimal-feedback contract: a 429 is an empty body with no helper headers.
"""

import http.client
import json
import time

from throttlekit import GatewayConfig, GatewayServer, TelemetryReport, TelemetryServer, UdpChannel

gateway = GatewayServer(GatewayConfig(capacity=3, rate_per_min=30,
                                      listen=("127.0.0.1", 0))).start()
telemetry = TelemetryServer(listen=("127.0.0.1", 0)).start()
telemetry.aggregator.limiter_rate_pm = 30.0
host, port = gateway.address
print(f"gateway on {host}:{port}, telemetry on {telemetry.address[0]}:{telemetry.address[1]}\n")

conn = http.client.HTTPConnection(host, port, timeout=5)
try:
    print("burst of five against a three-token bucket:")
    for i in range(5):
        conn.request("POST", "/multiply", json.dumps({"a": 6, "b": 7}).encode())
        resp = conn.getresponse()
        body = resp.read()
        helper = [h for h, _ in resp.getheaders()
                  if h.lower() == "retry-after" or "ratelimit" in h.lower()]
        print(f"  request {i + 1}: {resp.status} body={body!r} helper_headers={helper}")

    conn.request("GET", "/stats")
    stats = json.loads(conn.getresponse().read())
    print(f"\ngateway ledger: admitted={stats['admitted']} rejected={stats['rejected']}")

    print("\ntelemetry round trip (reports one client that saw two 429s):")
    channel = UdpChannel(telemetry.address, timeout=1.0)
    snapshot = channel.exchange(
        TelemetryReport(client_id="demo", window_requests=5, got_429=2,
                        sent_at=time.monotonic()))
    print(f"  snapshot: active={snapshot.active_clients} total={snapshot.total_requests} "
          f"congested={snapshot.reported_429} limiter={snapshot.limiter_rate}/min")
    channel.close()

    conn.request("GET", "/stats")
    after = json.loads(conn.getresponse().read())
    print(f"\ntelemetry cost zero gateway tokens: admitted still {after['admitted']}, "
          f"rejected still {after['rejected']}")
finally:
    conn.close()
    telemetry.stop()
    gateway.stop()
