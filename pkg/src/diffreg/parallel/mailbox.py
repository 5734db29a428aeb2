"""In-process message passing between worker threads.

One FIFO queue per ordered worker pair models a point-to-point link; the
collective all-to-all is built from those links. Byte and message counters
model bandwidth accounting. Disabling the mailbox makes every send and
receive raise, which proves that no data crosses slabs any other way.
"""
from __future__ import annotations

import queue
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..errors import CommunicationError

ALLTOALL_THRESHOLD = 512 * 1024  # bytes per message; above it the exchange is scheduled pairwise
STRATEGIES = ("auto", "alltoall", "p2p")


def payload_bytes(obj) -> int:
    if isinstance(obj, np.ndarray):
        return int(obj.nbytes)
    if isinstance(obj, (list, tuple)):
        return sum(payload_bytes(o) for o in obj)
    return 0


class Mailbox:
    def __init__(self, p: int, timeout: float = 120.0, strategy: str = "auto", jitter=None):
        if strategy not in STRATEGIES:
            raise CommunicationError(f"unknown exchange strategy {strategy!r}")
        self.p = p
        self.timeout = timeout
        self.strategy = strategy
        self.enabled = True
        self.jitter = jitter  # optional callable run before every send/recv (adversarial scheduling tests)
        self.stats: Counter = Counter()
        self._lock = threading.Lock()
        self._queues = {(s, d): queue.Queue() for s in range(p) for d in range(p) if s != d}
        self._abort = threading.Event()

    def reset(self) -> None:
        """Drop undelivered messages and clear an abort (between collective runs)."""
        for q in self._queues.values():
            while True:
                try:
                    q.get_nowait()
                except queue.Empty:
                    break
        self._abort.clear()

    def abort(self) -> None:
        self._abort.set()

    def _check(self):
        if self.jitter is not None:
            self.jitter()
        if not self.enabled:
            raise CommunicationError("mailbox disabled")
        if self._abort.is_set():
            raise CommunicationError("run aborted by another worker")

    def count(self, category: str, nbytes: int, messages: int = 1) -> None:
        with self._lock:
            self.stats[f"{category}_bytes"] += nbytes
            self.stats[f"{category}_messages"] += messages

    def send(self, src: int, dst: int, payload, tag: str = "", category: str = "misc") -> None:
        self._check()
        if src == dst:
            raise CommunicationError("self-sends are local copies, not messages")
        self.count(category, payload_bytes(payload))
        self._queues[(src, dst)].put((tag, payload))

    def recv(self, dst: int, src: int, tag: str = ""):
        self._check()
        q = self._queues[(src, dst)]
        t0 = time.monotonic()
        while True:
            try:
                got_tag, payload = q.get(timeout=0.05)
                break
            except queue.Empty:
                self._check()
                if time.monotonic() - t0 > self.timeout:
                    raise CommunicationError(f"worker {dst} timed out waiting for {src} ({tag})")
        if got_tag != tag:
            raise CommunicationError(f"worker {dst} expected {tag!r} from {src}, got {got_tag!r}")
        return payload

    def schedule(self, rank: int, nbytes: int) -> list[int]:
        """Peer order for an exchange: rank order (all-to-all) or a rank-shifted ring (pairwise)."""
        mode = self.strategy
        if mode == "auto":
            mode = "p2p" if nbytes > ALLTOALL_THRESHOLD else "alltoall"
        with self._lock:
            self.stats[f"exchange_{mode}"] += 1
        if mode == "alltoall":
            return [d for d in range(self.p) if d != rank]
        return [(rank + k) % self.p for k in range(1, self.p)]

    def alltoall(self, rank: int, payloads: list, tag: str = "", category: str = "alltoall") -> list:
        """Send ``payloads[d]`` to every worker d; return what each worker sent here."""
        largest = max((payload_bytes(pl) for d, pl in enumerate(payloads) if d != rank), default=0)
        order = self.schedule(rank, largest)
        for d in order:
            self.send(rank, d, payloads[d], tag, category)
        out = [None] * self.p
        out[rank] = payloads[rank]
        for s in sorted(order, key=lambda s: (rank - s) % self.p):
            out[s] = self.recv(rank, s, tag)
        return out


class Runtime:
    """``p`` worker threads running the same function on their own slab."""

    def __init__(self, p: int, mailbox: Mailbox | None = None):
        self.p = p
        self.mailbox = mailbox if mailbox is not None else Mailbox(p)
        self._pool = ThreadPoolExecutor(max_workers=p, thread_name_prefix="slab") if p > 1 else None

    def run(self, fn, *per_rank_args) -> list:
        """Call ``fn(rank, *args_for_rank)`` on every worker; exceptions abort all workers."""
        args = [tuple(a[r] for a in per_rank_args) for r in range(self.p)]
        if self._pool is None:
            return [fn(0, *args[0])]
        self.mailbox.reset()

        def wrapped(r):
            try:
                return fn(r, *args[r])
            except BaseException:
                self.mailbox.abort()
                raise

        futures = [self._pool.submit(wrapped, r) for r in range(self.p)]
        results, errors = [], []
        for f in futures:
            try:
                results.append(f.result())
            except BaseException as exc:  # noqa: BLE001 - re-raised below
                errors.append(exc)
        if errors:
            primary = next((e for e in errors if "aborted" not in str(e)), errors[0])
            raise primary
        return results

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
