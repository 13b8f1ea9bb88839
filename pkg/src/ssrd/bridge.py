"""Line-delimited JSON protocol serving the MDP environment and the sequence
valuer to external processes (protocol version "ssrd/1").

One session per connection; requests are processed strictly in order and
every request gets exactly one response carrying the same id.  Malformed
input produces an error response, never a crash.  Sessions share nothing
mutable, so concurrent connections are safe.

Verbs: hello, init, reset, mask, step, eval, close.
"""

from __future__ import annotations

import json
import socketserver
import sys

import numpy as np

from .errors import DataError, InvalidActionError
from .mdp_env import SequencingEnv
from .scenario import Scenario, parse_scenario
from .sequences import validate_for_valuation
from .valuation import RoaEvaluator

PROTOCOL_VERSION = "ssrd/1"


class BridgeSession:
    """Per-connection state machine: hello -> init -> {reset -> (mask|step)*}*
    with eval available any time after init."""

    def __init__(self, scenarios: dict[str, Scenario]):
        self.scenarios = scenarios
        self.env: SequencingEnv | None = None
        self.evaluator: RoaEvaluator | None = None
        self.said_hello = False
        self.closed = False

    def handle_line(self, line: str) -> str:
        """Process one request line, always returning one response line."""
        req_id = None
        try:
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BridgeError("bad_message", f"not valid JSON: {exc}") from exc
            if not isinstance(msg, dict):
                raise BridgeError("bad_message", "message must be a JSON object")
            req_id = msg.get("id")
            verb = msg.get("verb")
            handler = getattr(self, f"_verb_{verb}", None)
            if verb is None or handler is None:
                raise BridgeError("unknown_verb", f"unknown verb {verb!r}")
            payload = handler(msg)
            return self._dump({"id": req_id, "ok": True, "verb": verb, **payload})
        except BridgeError as exc:
            return self._dump({"id": req_id, "ok": False,
                               "error": {"code": exc.code, "message": exc.message}})
        except (DataError, InvalidActionError) as exc:
            code = "invalid_action" if isinstance(exc, InvalidActionError) else "data_error"
            return self._dump({"id": req_id, "ok": False,
                               "error": {"code": code, "message": str(exc)}})
        except Exception as exc:  # defensive: protocol must never crash the session
            return self._dump({"id": req_id, "ok": False,
                               "error": {"code": "internal", "message": str(exc)}})

    @staticmethod
    def _dump(obj) -> str:
        return json.dumps(obj, separators=(",", ":"), sort_keys=True)

    # -- verbs ---------------------------------------------------------------

    def _verb_hello(self, msg):
        version = msg.get("version", PROTOCOL_VERSION)
        if version != PROTOCOL_VERSION:
            raise BridgeError("bad_version",
                              f"server speaks {PROTOCOL_VERSION}, client sent {version!r}")
        self.said_hello = True
        return {"version": PROTOCOL_VERSION,
                "scenarios": sorted(self.scenarios.keys())}

    def _require_init(self):
        if self.env is None:
            raise BridgeError("bad_state", "send init before this verb")

    def _verb_init(self, msg):
        if not self.said_hello:
            raise BridgeError("bad_state", "send hello first")
        if "scenario" in msg:
            name = msg["scenario"]
            scenario = self.scenarios.get(name)
            if scenario is None:
                raise BridgeError("unknown_scenario", f"no scenario named {name!r}")
        elif "scenario_text" in msg:
            scenario = parse_scenario(msg["scenario_text"])
        else:
            raise BridgeError("bad_message", "init needs 'scenario' or 'scenario_text'")
        n_paths = msg.get("n_paths")
        self.env = SequencingEnv(scenario, n_paths=n_paths)
        self.evaluator = RoaEvaluator(scenario, n_paths=n_paths)
        return {
            "scenario": scenario.name,
            "n_regions": scenario.n_regions,
            "k": scenario.k,
            "horizon": scenario.horizon,
            "node_feature_shape": [scenario.n_regions, 4],
            "global_feature_shape": [3],
        }

    def _state_payload(self):
        state = self.env.state
        mask = self.env.action_mask()
        return {
            "state": {
                "invested": state.invested.tolist(),
                "sequence": [list(p) for p in state.partial_sequence],
                "n": state.step_index,
                "x": [float(v) for v in state.node_features.ravel()],
                "x_shape": list(state.node_features.shape),
                "g": [float(v) for v in state.global_features],
                "g_shape": [len(state.global_features)],
            },
            "mask": mask.selectable.astype(int).tolist(),
            "min_size": mask.min_size,
            "max_size": mask.max_size,
        }

    def _verb_reset(self, msg):
        self._require_init()
        seed = msg.get("episode_seed")
        if not isinstance(seed, int):
            raise BridgeError("bad_message", "reset needs integer 'episode_seed'")
        self.env.reset(seed)
        return self._state_payload()

    def _verb_mask(self, msg):
        self._require_init()
        self.env.state  # raises if reset not called
        return self._state_payload()

    def _verb_step(self, msg):
        self._require_init()
        action = msg.get("action")
        if not isinstance(action, list):
            raise BridgeError("bad_message", "step needs 'action' as a 0/1 list")
        outcome = self.env.step(np.asarray(action, dtype=np.int64))
        payload = self._state_payload()
        payload["reward"] = outcome.reward
        payload["done"] = outcome.done
        return payload

    def _verb_eval(self, msg):
        self._require_init()
        seq = msg.get("sequence")
        if not isinstance(seq, list):
            raise BridgeError("bad_message", "eval needs 'sequence' as a list of lists")
        scenario = self.evaluator.scenario
        sequence = validate_for_valuation(
            tuple(tuple(p) for p in seq), scenario.n_regions, scenario.k,
            scenario.horizon)
        seed = msg.get("seed", scenario.seed)
        result = self.evaluator.evaluate(sequence, seed=seed)
        return {
            "option_value": result.option_value,
            "mean_stop_times": [float(v) for v in result.mean_stop_times],
            "seed": result.seed,
            "n_paths": result.n_paths,
        }

    def _verb_close(self, msg):
        self.closed = True
        return {"bye": True}


class BridgeError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def serve_stdio(scenarios: dict[str, Scenario], stdin=None, stdout=None) -> None:
    """Serve one session over stdio until EOF or close."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    session = BridgeSession(scenarios)
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(session.handle_line(line) + "\n")
        stdout.flush()
        if session.closed:
            break


class _BridgeHandler(socketserver.StreamRequestHandler):
    def handle(self):
        session = BridgeSession(self.server.scenarios)
        for raw in self.rfile:
            line = raw.decode("utf-8", errors="replace")
            if not line.strip():
                continue
            self.wfile.write((session.handle_line(line) + "\n").encode("utf-8"))
            self.wfile.flush()
            if session.closed:
                break


class BridgeServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], scenarios: dict[str, Scenario]):
        super().__init__(address, _BridgeHandler)
        self.scenarios = scenarios


def serve_tcp(host: str, port: int, scenarios: dict[str, Scenario]) -> BridgeServer:
    """Create (but do not start) a threaded TCP server; callers run
    serve_forever() or use it as a context manager."""
    if not scenarios:
        raise DataError("bridge needs at least one registered scenario")
    return BridgeServer((host, port), scenarios)
