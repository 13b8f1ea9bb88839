import json
import socket
import threading

import numpy as np
import pytest

import ssrd
from ssrd.bridge import PROTOCOL_VERSION, BridgeSession, serve_tcp

from conftest import make_regions


@pytest.fixture(scope="module")
def registry():
    regions = make_regions([(10, 500), (20, 300), (5, 900), (15, 400)])
    scen = ssrd.build_scenario(regions, horizon=5, k=2, n_paths=40, seed=11,
                               demand_scale=0.01, name="tiny4")
    return {"tiny4": scen}


def session_run(registry, messages):
    session = BridgeSession(registry)
    return [json.loads(session.handle_line(json.dumps(m) if isinstance(m, dict) else m))
            for m in messages]


def test_hello_echoes_version(registry):
    (resp,) = session_run(registry, [{"verb": "hello", "id": 1,
                                      "version": PROTOCOL_VERSION}])
    assert resp["ok"] and resp["version"] == PROTOCOL_VERSION
    assert resp["id"] == 1
    assert "tiny4" in resp["scenarios"]


def test_version_mismatch_rejected(registry):
    (resp,) = session_run(registry, [{"verb": "hello", "id": 1, "version": "ssrd/999"}])
    assert not resp["ok"]
    assert resp["error"]["code"] == "bad_version"


def test_unknown_verb_and_scenario(registry):
    responses = session_run(registry, [
        {"verb": "hello", "id": 1},
        {"verb": "frobnicate", "id": 2},
        {"verb": "init", "id": 3, "scenario": "nope"},
    ])
    assert responses[1]["error"]["code"] == "unknown_verb"
    assert responses[2]["error"]["code"] == "unknown_scenario"


def test_episode_telescopes_to_eval(registry):
    script = [
        {"verb": "hello", "id": 0},
        {"verb": "init", "id": 1, "scenario": "tiny4"},
        {"verb": "reset", "id": 2, "episode_seed": 21},
        {"verb": "step", "id": 3, "action": [0, 1, 0, 0]},
        {"verb": "step", "id": 4, "action": [1, 0, 0, 1]},
        {"verb": "step", "id": 5, "action": [0, 0, 1, 0]},
        {"verb": "eval", "id": 6, "sequence": [[1], [0, 3], [2]], "seed": 21},
    ]
    responses = session_run(registry, script)
    steps = responses[3:6]
    assert steps[-1]["done"] is True
    cumulative = sum(s["reward"] for s in steps)
    assert cumulative == pytest.approx(responses[6]["option_value"], abs=1e-9)


def test_invalid_action_leaves_session_usable(registry):
    script = [
        {"verb": "hello", "id": 0},
        {"verb": "init", "id": 1, "scenario": "tiny4"},
        {"verb": "reset", "id": 2, "episode_seed": 5},
        {"verb": "step", "id": 3, "action": [1, 0, 0, 0]},
        {"verb": "mask", "id": 4},
        {"verb": "step", "id": 5, "action": [1, 0, 0, 0]},  # invested again
        {"verb": "mask", "id": 6},
        {"verb": "step", "id": 7, "action": [0, 1, 1, 0]},
    ]
    responses = session_run(registry, script)
    assert responses[5]["error"]["code"] == "invalid_action"
    assert responses[6]["state"] == responses[4]["state"]  # unchanged
    assert responses[7]["ok"]


def test_malformed_line_keeps_session(registry):
    session = BridgeSession(registry)
    good = json.dumps({"verb": "hello", "id": 1})
    bad = "}{ not json"
    r1 = json.loads(session.handle_line(good))
    r2 = json.loads(session.handle_line(bad))
    r3 = json.loads(session.handle_line(json.dumps({"verb": "init", "id": 2,
                                                    "scenario": "tiny4"})))
    assert r1["ok"]
    assert not r2["ok"] and r2["error"]["code"] == "bad_message"
    assert r3["ok"]


def test_state_machine_order_enforced(registry):
    responses = session_run(registry, [
        {"verb": "init", "id": 1, "scenario": "tiny4"},   # before hello
        {"verb": "hello", "id": 2},
        {"verb": "step", "id": 3, "action": [1, 0, 0, 0]},  # before init
        {"verb": "init", "id": 4, "scenario": "tiny4"},
        {"verb": "step", "id": 5, "action": [1, 0, 0, 0]},  # before reset
    ])
    assert responses[0]["error"]["code"] == "bad_state"
    assert responses[2]["error"]["code"] == "bad_state"
    assert responses[3]["ok"]
    assert responses[4]["error"]["code"] == "internal" or not responses[4]["ok"]


def test_transcript_byte_determinism(registry):
    script = [
        {"verb": "hello", "id": 0},
        {"verb": "init", "id": 1, "scenario": "tiny4"},
        {"verb": "reset", "id": 2, "episode_seed": 77},
        {"verb": "step", "id": 3, "action": [0, 0, 1, 1]},
        {"verb": "step", "id": 4, "action": [1, 1, 0, 0]},
        {"verb": "eval", "id": 5, "sequence": [[2, 3], [0, 1]], "seed": 77},
    ]
    lines = [json.dumps(m) for m in script]
    a_session, b_session = BridgeSession(registry), BridgeSession(registry)
    a = [a_session.handle_line(line) for line in lines]
    b = [b_session.handle_line(line) for line in lines]
    assert a == b


def test_inline_scenario_text(registry):
    text = """
[scenario]
name = inline2
horizon = 3
k = 1
n_paths = 20
seed = 1
demand_scale = 0.01
[regions]
id,name,area_km2,density_per_km2
0,a,10,500
1,b,20,300
"""
    responses = session_run(registry, [
        {"verb": "hello", "id": 0},
        {"verb": "init", "id": 1, "scenario_text": text},
        {"verb": "reset", "id": 2, "episode_seed": 1},
    ])
    assert responses[1]["ok"]
    assert responses[1]["n_regions"] == 2
    assert responses[2]["ok"]


def test_tcp_round_trip(registry):
    server = serve_tcp("127.0.0.1", 0, registry)
    host, port = server.server_address
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        with socket.create_connection((host, port), timeout=10) as sock:
            fh = sock.makefile("rw", encoding="utf-8", newline="\n")
            def rpc(msg):
                fh.write(json.dumps(msg) + "\n")
                fh.flush()
                return json.loads(fh.readline())
            hello = rpc({"verb": "hello", "id": 1})
            assert hello["ok"]
            init = rpc({"verb": "init", "id": 2, "scenario": "tiny4"})
            assert init["n_regions"] == 4
            reset = rpc({"verb": "reset", "id": 3, "episode_seed": 9})
            assert reset["ok"] and reset["state"]["n"] == 0
            bye = rpc({"verb": "close", "id": 4})
            assert bye["ok"]
    finally:
        server.shutdown()
        server.server_close()


def test_concurrent_sessions_isolated(registry):
    server = serve_tcp("127.0.0.1", 0, registry)
    host, port = server.server_address
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        socks = []
        for seed in (1, 2):
            sock = socket.create_connection((host, port), timeout=10)
            fh = sock.makefile("rw", encoding="utf-8", newline="\n")
            for msg in ({"verb": "hello", "id": 0},
                        {"verb": "init", "id": 1, "scenario": "tiny4"},
                        {"verb": "reset", "id": 2, "episode_seed": seed}):
                fh.write(json.dumps(msg) + "\n")
                fh.flush()
                fh.readline()
            socks.append((sock, fh))
        # interleave: step session 0 then check session 1 state unaffected
        fh0 = socks[0][1]
        fh0.write(json.dumps({"verb": "step", "id": 3, "action": [1, 0, 0, 0]}) + "\n")
        fh0.flush()
        json.loads(fh0.readline())
        fh1 = socks[1][1]
        fh1.write(json.dumps({"verb": "mask", "id": 3}) + "\n")
        fh1.flush()
        other = json.loads(fh1.readline())
        assert other["state"]["n"] == 0
        assert other["state"]["invested"] == [0, 0, 0, 0]
        for sock, _ in socks:
            sock.close()
    finally:
        server.shutdown()
        server.server_close()
