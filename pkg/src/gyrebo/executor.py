"""Asynchronous manager/worker driver for the hyperparameter search.

A single manager owns the ask/tell optimizer and a JSONL results log; a
pool of workers evaluates proposed configurations. Two backends share the
same manager loop: "thread" (in-process, used by tests and small runs) and
"process" (forked children talking to the manager over socketpairs with
4-byte little-endian length-prefixed JSON frames).

The log starts with a header line carrying the run seed and a hash of the
search space; every finished trial appends one line. A run can be resumed
from its log: previously recorded trials are replayed into the optimizer
verbatim and the search continues until the trial budget is met, with
per-trial seeds derived only from (run_seed, trial_id) so re-issued work
is reproducible.
"""
from __future__ import annotations

import hashlib
import json
import os
import selectors
import socket
import struct
import threading
import time
import queue
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .search import (Optimizer, OptimizerSettings, ObjectiveVector,
                     TrialRecord)
from .space import SearchSpace

Evaluate = Callable[[dict, int], dict]

_HEADER_FORMAT = "gyrebo-search-log-v1"


class ExecutorError(RuntimeError):
    pass


def space_hash(space: SearchSpace) -> str:
    return hashlib.sha256(space.dumps().encode()).hexdigest()


def trial_seed(run_seed: int, trial_id: int) -> int:
    """Stable 32-bit seed from the run seed and trial id."""
    digest = hashlib.sha256(f"{run_seed}:{trial_id}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class SearchRun:
    space: SearchSpace
    run_seed: int
    budget: int
    trials: list[TrialRecord] = field(default_factory=list)
    resumed_from: int = 0  # number of trials replayed from an existing log

    @property
    def completed(self) -> int:
        return len(self.trials)


# ---------------------------------------------------------------------------
# wire protocol (process backend)

def send_msg(sock: socket.socket, obj: dict) -> None:
    payload = json.dumps(obj).encode()
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def recv_msg(sock: socket.socket) -> Optional[dict]:
    """Read one frame; None on clean or dirty EOF."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack("<I", header)
    payload = _recv_exact(sock, length)
    if payload is None:
        return None
    return json.loads(payload.decode())


def _recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = b""
    while len(chunks) < n:
        try:
            part = sock.recv(n - len(chunks))
        except ConnectionError:
            return None
        if not part:
            return None
        chunks += part
    return chunks


def _worker_main(sock: socket.socket, evaluate: Evaluate) -> None:
    while True:
        msg = recv_msg(sock)
        if msg is None or msg.get("type") == "stop":
            return
        if msg.get("type") != "task":
            continue
        trial_id = msg["trial_id"]
        try:
            result = evaluate(msg["config"], msg["seed"])
        except Exception as exc:  # worker must always answer
            result = {"objectives": None, "failure": repr(exc),
                      "stopper": "none", "epochs_run": 0, "wall_seconds": 0.0}
        result["type"] = "result"
        result["trial_id"] = trial_id
        send_msg(sock, result)


# ---------------------------------------------------------------------------
# backends

class _ProcessBackend:
    """Forked workers; surviving state is only the socket per child."""

    def __init__(self, n_workers: int, evaluate: Evaluate):
        self.evaluate = evaluate
        self.sel = selectors.DefaultSelector()
        self.socks: dict[int, socket.socket] = {}
        self.pids: dict[int, int] = {}
        self.tasks: dict[int, dict] = {}  # worker -> in-flight task message
        for w in range(n_workers):
            self._spawn(w)

    def _spawn(self, w: int) -> None:
        parent, child = socket.socketpair()
        pid = os.fork()
        if pid == 0:
            parent.close()
            try:
                _worker_main(child, self.evaluate)
            finally:
                child.close()
                os._exit(0)
        child.close()
        self.socks[w] = parent
        self.pids[w] = pid
        self.sel.register(parent, selectors.EVENT_READ, data=w)

    def submit(self, worker: int, task: dict) -> None:
        self.tasks[worker] = task
        send_msg(self.socks[worker], task)

    def next_result(self) -> tuple[int, dict]:
        """Block for one finished (worker, result). Crashes are synthesized
        as failed results and the worker is respawned."""
        while True:
            for key, _ in self.sel.select():
                w = key.data
                msg = recv_msg(self.socks[w])
                if msg is None:
                    task = self.tasks.pop(w, None)
                    self._reap(w)
                    self._spawn(w)
                    if task is None:
                        continue
                    return w, {"type": "result", "trial_id": task["trial_id"],
                               "objectives": None,
                               "failure": "worker process died",
                               "stopper": "none", "epochs_run": 0,
                               "wall_seconds": 0.0}
                if msg.get("type") == "result":
                    self.tasks.pop(w, None)
                    return w, msg

    def _reap(self, w: int) -> None:
        self.sel.unregister(self.socks[w])
        self.socks[w].close()
        try:
            os.waitpid(self.pids[w], 0)
        except ChildProcessError:
            pass

    def close(self) -> None:
        for w, sock in self.socks.items():
            try:
                send_msg(sock, {"type": "stop"})
            except OSError:
                pass
        for w in list(self.socks):
            self._reap(w)
        self.sel.close()


class _ThreadBackend:
    def __init__(self, n_workers: int, evaluate: Evaluate):
        self.evaluate = evaluate
        self.results: queue.Queue = queue.Queue()
        self.inboxes = [queue.Queue() for _ in range(n_workers)]
        self.threads = []
        for w in range(n_workers):
            t = threading.Thread(target=self._loop, args=(w,), daemon=True)
            t.start()
            self.threads.append(t)

    def _loop(self, w: int) -> None:
        while True:
            task = self.inboxes[w].get()
            if task is None:
                return
            try:
                result = self.evaluate(task["config"], task["seed"])
            except Exception as exc:
                result = {"objectives": None, "failure": repr(exc),
                          "stopper": "none", "epochs_run": 0,
                          "wall_seconds": 0.0}
            result = dict(result, type="result", trial_id=task["trial_id"])
            self.results.put((w, result))

    def submit(self, worker: int, task: dict) -> None:
        self.inboxes[worker].put(task)

    def next_result(self) -> tuple[int, dict]:
        return self.results.get()

    def close(self) -> None:
        for box in self.inboxes:
            box.put(None)
        for t in self.threads:
            t.join(timeout=5)


# ---------------------------------------------------------------------------
# manager loop

def _record_from_result(msg: dict, config: dict, seed: int, submitted: float,
                        started: float) -> TrialRecord:
    obj = msg.get("objectives")
    objectives = None if obj is None else ObjectiveVector(float(obj[0]),
                                                         float(obj[1]))
    failure = msg.get("failure")
    stopper = msg.get("stopper") or "none"
    if objectives is None and not failure and stopper == "none":
        failure = "worker returned no objectives"
    return TrialRecord(trial_id=msg["trial_id"], config=config,
                       objectives=objectives, failure=failure,
                       epochs_run=int(msg.get("epochs_run", 0)),
                       stopper=stopper,
                       wall_seconds=float(msg.get("wall_seconds", 0.0)),
                       seed=seed, submitted=submitted, started=started,
                       finished=time.time())


def read_log(log_path: str | Path) -> tuple[dict, list[TrialRecord]]:
    lines = Path(log_path).read_text().splitlines()
    if not lines:
        raise ExecutorError(f"empty search log {log_path}")
    header = json.loads(lines[0])
    if header.get("format") != _HEADER_FORMAT:
        raise ExecutorError("unrecognized search log header")
    trials = [TrialRecord.from_json_obj(json.loads(line))
              for line in lines[1:] if line.strip()]
    return header, trials


def run_search(space: SearchSpace, evaluate: Evaluate, budget: int,
               workers: int = 2, run_seed: int = 0,
               settings: OptimizerSettings | None = None,
               log_path: str | Path | None = None,
               backend: str = "thread", resume: bool = False) -> SearchRun:
    """Drive the optimizer until exactly `budget` trials have been told."""
    if budget < 1:
        raise ExecutorError("budget must be >= 1")
    if workers < 1:
        raise ExecutorError("workers must be >= 1")
    if backend not in ("thread", "process"):
        raise ExecutorError(f"unknown backend {backend!r}")
    if settings is None:
        settings = OptimizerSettings(n_initial=max(2 * workers, 10))

    optimizer = Optimizer(space, settings, seed=run_seed)
    run = SearchRun(space=space, run_seed=run_seed, budget=budget)

    log_file = None
    if log_path is not None:
        log_path = Path(log_path)
        if resume and log_path.exists():
            header, replayed = read_log(log_path)
            if header.get("space_sha256") != space_hash(space):
                raise ExecutorError("resume refused: search space differs "
                                    "from the one in the log")
            if header.get("run_seed") != run_seed:
                raise ExecutorError("resume refused: run seed differs from "
                                    "the one in the log")
            for rec in replayed:
                # burn the ask draws so the generator sits where it was
                # when the original run proposed the next trial
                optimizer.ask(1)
                optimizer.tell(rec)
                run.trials.append(rec)
            run.resumed_from = len(replayed)
            log_file = log_path.open("a")
        else:
            log_file = log_path.open("w")
            log_file.write(json.dumps({
                "format": _HEADER_FORMAT, "run_seed": run_seed,
                "budget": budget, "space_sha256": space_hash(space),
            }) + "\n")
            log_file.flush()

    if run.completed >= budget:
        if log_file:
            log_file.close()
        return run

    next_id = run.completed
    backend_obj = (_ProcessBackend(workers, evaluate) if backend == "process"
                   else _ThreadBackend(workers, evaluate))
    meta: dict[int, tuple[dict, int, float]] = {}  # id -> (config, seed, t)

    def issue(worker: int, config: dict) -> None:
        nonlocal next_id
        tid = next_id
        next_id += 1
        seed = trial_seed(run_seed, tid)
        meta[tid] = (config, seed, time.time())
        backend_obj.submit(worker, {"type": "task", "trial_id": tid,
                                    "config": config, "seed": seed})

    try:
        n_issue = min(workers, budget - run.completed)
        for worker, config in enumerate(optimizer.ask(n_issue)):
            issue(worker, config)
        in_flight = n_issue
        while run.completed < budget:
            worker, msg = backend_obj.next_result()
            in_flight -= 1
            config, seed, submitted = meta.pop(msg["trial_id"])
            rec = _record_from_result(msg, config, seed, submitted, submitted)
            optimizer.tell(rec)
            run.trials.append(rec)
            if log_file:
                log_file.write(json.dumps(rec.to_json_obj()) + "\n")
                log_file.flush()
            remaining = budget - run.completed - in_flight
            if remaining > 0:
                issue(worker, optimizer.ask(1)[0])
                in_flight += 1
    finally:
        backend_obj.close()
        if log_file:
            log_file.close()
    return run


# ---------------------------------------------------------------------------
# default evaluator: train a surrogate on a prepared dataset

def make_training_evaluate(dataset, epochs: int = 100,
                           stoppers=None, acc_form: str = "standard"
                           ) -> Evaluate:
    from .training import StopperConfig, TrainJob, train

    stoppers = stoppers or StopperConfig()

    def evaluate(config: dict, seed: int) -> dict:
        t0 = time.monotonic()
        res = train(TrainJob(hyperparams=config, dataset=dataset,
                             epochs=epochs, seed=seed, stoppers=stoppers,
                             acc_form=acc_form))
        stopper = {"baseline": "constant_predictor",
                   "epoch_time": "epoch_time"}.get(res.stopper or "", "none")
        return {
            "objectives": None if res.objectives is None else list(res.objectives),
            "failure": res.failure,
            "stopper": stopper,
            "epochs_run": res.epochs_run,
            "wall_seconds": time.monotonic() - t0,
        }

    return evaluate
