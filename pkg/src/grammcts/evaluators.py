"""Reward sources for complete pipeline configurations.

An evaluator is any object with ``evaluate(config) -> float`` returning a
reward in [0, 1] and a boolean ``deterministic`` attribute. Evaluators that
swallow a failure (a timed-out fit, a worker-reported error) return 0.0 and
leave the reason in ``last_failure``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import queue
import shlex
import subprocess
import threading
import time
from pathlib import Path

from .grammar import Grammar, PipelineConfig, applicable_alternatives, apply_rule, start_state, to_config

log = logging.getLogger(__name__)


class EvaluatorError(RuntimeError):
    pass


class ProtocolError(EvaluatorError):
    """The worker answered with something that is not a valid response line."""


class WorkerAborted(EvaluatorError):
    """The worker kept crashing; the run cannot continue."""


def _check_reward(r, where: str) -> float:
    if isinstance(r, bool) or not isinstance(r, (int, float)):
        raise ProtocolError(f"{where}: reward {r!r} is not a number")
    r = float(r)
    if not 0.0 <= r <= 1.0:
        raise ProtocolError(f"{where}: reward {r} outside [0, 1]")
    return r


class TabularOracle:
    deterministic = True

    def __init__(self, table: dict[str, float], default: float | None = None):
        self.table = {k: _check_reward(v, f"table[{k!r}]") for k, v in table.items()}
        self.default = default
        self.last_failure = None

    def evaluate(self, config: PipelineConfig) -> float:
        key = config.canonical_key
        if key in self.table:
            return self.table[key]
        if self.default is None:
            raise KeyError(f"no reward for {key!r}")
        return self.default

    @classmethod
    def from_csv(cls, path, default: float | None = None) -> TabularOracle:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["key", "reward"]:
                raise ValueError(f"{path}: expected header 'key,reward', got {reader.fieldnames}")
            return cls({row["key"]: float(row["reward"]) for row in reader}, default)

    def to_csv(self, path) -> None:
        write_table(path, self.table)


def write_table(path, table: dict[str, float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("key,reward\n")
        writer = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        for key, reward in table.items():
            writer.writerow([key, float(reward)])


def tabular_evaluate(o: TabularOracle, c: PipelineConfig) -> float:
    return o.evaluate(c)


def stable_unit(seed: int, key: str) -> float:
    digest = hashlib.blake2b(f"{seed}\x00{key}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2**64


def random_production(g: Grammar, seed: int) -> PipelineConfig:
    import random

    rng = random.Random(f"planted-{seed}")
    state = start_state(g)
    while (n := applicable_alternatives(state, g)) > 0:
        state = apply_rule(state, rng.randrange(n), g)
    return to_config(state)


class SyntheticEvaluator:
    """Hash-based reward landscape, optionally with a planted optimum of 1.0."""

    deterministic = True

    def __init__(self, seed: int, planted_key: str | None = None):
        self.seed = seed
        self.planted_key = planted_key
        self.last_failure = None

    def evaluate(self, config: PipelineConfig) -> float:
        return self.reward(config.canonical_key)

    def reward(self, key: str) -> float:
        if key == self.planted_key:
            return 1.0
        return stable_unit(self.seed, key)


def synthetic_evaluate(seed: int, c: PipelineConfig, planted_key: str | None = None) -> float:
    return SyntheticEvaluator(seed, planted_key).evaluate(c)


class ExternalEvaluator:
    """Evaluate configurations in a child process speaking line-delimited JSON.

    Request:  ``{"id": n, "config": {...}, "key": "...", "timeout_s": t}``
    Response: ``{"id": n, "reward": r}`` or ``{"id": n, "error": "..."}``
    """

    deterministic = False

    def __init__(self, command, timeout: float = 300.0, max_failures: int = 3, cwd=None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.max_failures = max_failures
        self.cwd = cwd
        self.last_failure: str | None = None
        self.failures: list[tuple[str, str]] = []
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue | None = None
        self._next_id = 0
        self._crashes = 0

    def _spawn(self) -> None:
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
            cwd=self.cwd,
        )
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()

    @staticmethod
    def _pump(stream, out: queue.Queue) -> None:
        for line in stream:
            out.put(line)
        out.put(None)

    def close(self) -> None:
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=1)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def _kill(self) -> None:
        proc, self._proc = self._proc, None
        if proc is not None:
            proc.kill()
            proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _fail(self, key: str, reason: str) -> float:
        log.warning("evaluation of %r failed: %s", key, reason)
        self.last_failure = reason
        self.failures.append((key, reason))
        return 0.0

    def _crashed(self, reason: str) -> None:
        self._kill()
        self._crashes += 1
        if self._crashes > self.max_failures:
            raise WorkerAborted(f"worker failed {self._crashes} times in a row: {reason}")

    def evaluate(self, config: PipelineConfig) -> float:
        self.last_failure = None
        key = config.canonical_key
        if self._proc is None:
            self._spawn()
        self._next_id += 1
        rid = self._next_id
        request = {"id": rid, "config": config.as_dict(), "key": key, "timeout_s": self.timeout}
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._crashed(f"write failed: {exc}")
            return self._fail(key, f"worker unavailable: {exc}")

        deadline = time.monotonic() + self.timeout
        try:
            line = self._lines.get(timeout=max(deadline - time.monotonic(), 0.0))
        except queue.Empty:
            # the worker is still busy with this request; start fresh next time
            self._kill()
            return self._fail(key, f"timeout after {self.timeout}s")
        if line is None:
            self._crashed("worker exited")
            return self._fail(key, "worker exited")

        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            self._kill()
            raise ProtocolError(f"malformed response line {line.strip()!r}: {exc}") from None
        if not isinstance(msg, dict) or msg.get("id") != rid:
            self._kill()
            raise ProtocolError(f"response id mismatch: expected {rid}, got {line.strip()!r}")
        self._crashes = 0
        if "error" in msg:
            return self._fail(key, str(msg["error"]))
        if "reward" not in msg:
            raise ProtocolError(f"response without reward or error: {line.strip()!r}")
        return _check_reward(msg["reward"], "worker")


def external_evaluate(e: ExternalEvaluator, c: PipelineConfig) -> float:
    return e.evaluate(c)


class CachedEvaluator:
    """Memoise a deterministic evaluator by canonical key."""

    deterministic = True

    def __init__(self, inner):
        if not getattr(inner, "deterministic", False):
            raise ValueError("only deterministic evaluators can be cached")
        self.inner = inner
        self.cache: dict[str, float] = {}
        self.last_failure = None

    def evaluate(self, config: PipelineConfig) -> float:
        key = config.canonical_key
        if key not in self.cache:
            self.cache[key] = self.inner.evaluate(config)
        return self.cache[key]

    def close(self) -> None:
        close = getattr(self.inner, "close", None)
        if close:
            close()


def cached(inner) -> CachedEvaluator:
    return CachedEvaluator(inner)


def from_spec(spec: str, grammar: Grammar | None = None, timeout: float = 300.0, base: Path | None = None):
    """Build an evaluator from ``tabular:<path>``, ``synthetic:<seed>[,planted]`` or ``cmd:<command>``."""
    kind, sep, arg = spec.partition(":")
    if not sep or not arg:
        raise ValueError(f"bad evaluator spec {spec!r}")
    if kind == "tabular":
        path = Path(arg)
        if base is not None and not path.is_absolute():
            path = base / path
        return CachedEvaluator(TabularOracle.from_csv(path))
    if kind == "synthetic":
        parts = [p.strip() for p in arg.split(",")]
        seed = int(parts[0])
        planted = None
        if parts[1:] == ["planted"]:
            if grammar is None:
                raise ValueError("a planted optimum needs the grammar")
            planted = random_production(grammar, seed).canonical_key
        elif len(parts) > 1:
            raise ValueError(f"bad synthetic spec {spec!r}")
        return SyntheticEvaluator(seed, planted)
    if kind == "cmd":
        return ExternalEvaluator(arg, timeout=timeout)
    raise ValueError(f"unknown evaluator kind {kind!r}")
