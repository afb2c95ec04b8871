"""Source, detector and collector processes.

Topology (arrows are TCP connections, opened by the tail end):

    source --> detector A --> collector
           --> detector B -->

The source only knows the sampler and seed. Each detector knows its own
setting and nothing about the other wing. Only the collector sees both
settings, and only attached to outcomes.
"""

from __future__ import annotations

import logging
import selectors
import socket
import time
from dataclasses import asdict, dataclass, field
from typing import BinaryIO, Callable, Optional

import numpy as np

from ..correlations import CoincidenceTable
from ..ensemble import CounterRng, Estimate, Sampler, Stream, empirical_table, local_outcomes, source_draws
from ..qlinalg import Direction
from . import protocol
from .protocol import FrameBuffer, FrameReader, ProtocolError

log = logging.getLogger(__name__)

Address = tuple[str, int]
WING_STREAM = {"A": Stream.WING_A, "B": Stream.WING_B}


def parse_address(text: str) -> Address:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


def format_address(addr: Address) -> str:
    return f"{addr[0]}:{addr[1]}"


def connect_with_retry(addr: Address, attempts: int = 8, backoff: float = 0.05, max_delay: float = 1.0) -> socket.socket:
    delay = backoff
    for attempt in range(1, attempts + 1):
        try:
            sock = socket.create_connection(addr)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            return sock
        except OSError as exc:
            if attempt == attempts:
                raise ConnectionError(f"could not reach {format_address(addr)} after {attempts} attempts: {exc}") from exc
            log.info("connect to %s failed (%s), retrying in %.2fs", format_address(addr), exc, delay)
            time.sleep(delay)
            delay = min(max_delay, delay * 2)
    raise AssertionError("unreachable")


def listen_on(addr: Address) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind(addr)
    srv.listen()
    return srv


# -- source --------------------------------------------------------------------

class SourceError(RuntimeError):
    def __init__(self, message: str, sent: dict):
        super().__init__(f"{message} (sent A={sent['A']}, B={sent['B']})")
        self.sent = sent


@dataclass
class SourceReport:
    n_pairs: int
    sent: dict


def run_source(
    n_pairs: int,
    sampler: Sampler,
    seed: int,
    endpoints: dict[str, Address],
    chunk: int = 4096,
    attempts: int = 8,
    backoff: float = 0.05,
) -> SourceReport:
    """Emit one particle frame per wing for every pair id in [0, n_pairs).

    Wing A carries the sign of spin 1, wing B the opposite sign.
    """
    sent = {"A": 0, "B": 0}
    try:
        socks = {w: connect_with_retry(endpoints[w], attempts, backoff) for w in ("A", "B")}
    except ConnectionError as exc:
        raise SourceError(str(exc), sent) from exc
    rng = CounterRng(seed)
    try:
        for start in range(0, n_pairs, chunk):
            ids = np.arange(start, min(n_pairs, start + chunk), dtype=np.uint64)
            axis, branch = source_draws(sampler, rng, ids)
            for wing, sign in (("A", branch), ("B", -branch)):
                socks[wing].sendall(protocol.encode_batch(ids, axis, sign, wing))
                sent[wing] += len(ids)
    except OSError as exc:
        raise SourceError(f"stream aborted: {exc}", sent) from exc
    finally:
        for s in socks.values():
            try:
                s.shutdown(socket.SHUT_WR)
            except OSError:
                pass
            s.close()
    return SourceReport(n_pairs, sent)


# -- detector ------------------------------------------------------------------

@dataclass
class DetectorReport:
    wing: str
    received: int = 0
    measured: int = 0
    malformed: int = 0


def measure_batch(wing: str, setting: Direction, seed: int, pair_ids: np.ndarray,
                  axes: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """Local outcomes; depends on (seed, pair_id, wing, axis, sign, setting) only."""
    u = CounterRng(seed).uniforms(pair_ids.astype(np.uint64), WING_STREAM[wing])
    return local_outcomes(axes, signs, setting, u)


def run_detector(
    wing: str,
    setting: Direction,
    listen: Address,
    collector: Address,
    seed: int,
    capture: Optional[BinaryIO] = None,
    ready: Optional[Callable[[Address], None]] = None,
    batch: int = 4096,
) -> DetectorReport:
    protocol.wing_byte(wing)
    report = DetectorReport(wing)
    srv = listen_on(listen)
    if ready is not None:
        ready(srv.getsockname()[:2])
    out = connect_with_retry(collector)
    conn, _ = srv.accept()
    srv.close()
    setting_vec = setting.as_array()
    ids, axes, signs = [], [], []

    def flush() -> None:
        if not ids:
            return
        pid = np.array(ids, dtype=np.uint64)
        outcomes = measure_batch(wing, setting, seed, pid, np.array(axes), np.array(signs, dtype=np.int8))
        out.sendall(protocol.encode_batch(pid, np.tile(setting_vec, (len(pid), 1)), outcomes, wing))
        report.measured += len(pid)
        ids.clear(), axes.clear(), signs.clear()

    with conn, out, conn.makefile("rb") as stream:
        reader = FrameReader(stream, capture)
        while True:
            try:
                payload = reader.read_frame()
            except ProtocolError as exc:
                log.warning("wing %s: %s; closing input", wing, exc)
                report.malformed += 1
                break
            if payload is None:
                break
            report.received += 1
            try:
                msg = protocol.decode_particle(payload)
                if msg.wing != wing:
                    raise ProtocolError(f"particle for wing {msg.wing} arrived at wing {wing}")
            except ProtocolError as exc:
                log.warning("wing %s: skipping malformed frame: %s", wing, exc)
                report.malformed += 1
                continue
            ids.append(msg.pair_id)
            axes.append(msg.axis)
            signs.append(msg.branch)
            if len(ids) >= batch:
                flush()
        flush()
        out.shutdown(socket.SHUT_WR)
    return report


# -- collector -----------------------------------------------------------------

@dataclass
class CollectorReport:
    mismatch: bool
    received: dict = field(default_factory=lambda: {"A": 0, "B": 0})
    n_matched: int = 0
    orphaned: dict = field(default_factory=lambda: {"A": 0, "B": 0})
    duplicates: dict = field(default_factory=lambda: {"A": 0, "B": 0})
    malformed: int = 0
    errors: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)
    table: Optional[CoincidenceTable] = None
    estimate: Optional[Estimate] = None

    @property
    def n_orphaned(self) -> int:
        return self.orphaned["A"] + self.orphaned["B"]

    def reconciles(self) -> bool:
        return all(
            self.received[w] == self.n_matched + self.orphaned[w] + self.duplicates[w] for w in ("A", "B")
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_orphaned"] = self.n_orphaned
        d["reconciles"] = self.reconciles()
        if self.table is not None:
            d["table"] = {"p_pp": self.table.p_pp, "p_pm": self.table.p_pm, "p_mp": self.table.p_mp,
                          "p_mm": self.table.p_mm, "normalization": self.table.normalization.value}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CollectorReport":
        from ..correlations import TableNorm

        d = dict(d)
        d.pop("n_orphaned", None)
        d.pop("reconciles", None)
        if d.get("table") is not None:
            t = dict(d["table"])
            t["normalization"] = TableNorm(t["normalization"])
            d["table"] = CoincidenceTable(**t)
        if d.get("estimate") is not None:
            d["estimate"] = Estimate(**d["estimate"])
        return cls(**d)


class JoinBuffer:
    """Pairs results from the two wings by pair id.

    In mismatch mode wing A's id i is joined with wing B's id i + 1, so each
    joined pair holds spins from two different sources.
    """

    def __init__(self, report: CollectorReport, capacity: int, mismatch: bool):
        self.report = report
        self.capacity = capacity
        self.mismatch = mismatch
        self.pending: dict[int, tuple[str, int]] = {}
        self.seen = {"A": set(), "B": set()}
        self.out_a: list[int] = []
        self.out_b: list[int] = []

    def add(self, msg: protocol.ResultMsg) -> None:
        r = self.report
        r.received[msg.wing] += 1
        if msg.pair_id in self.seen[msg.wing]:
            r.duplicates[msg.wing] += 1
            if len(r.errors) < 20:
                r.errors.append(f"duplicate pair_id {msg.pair_id} on wing {msg.wing}")
            return
        self.seen[msg.wing].add(msg.pair_id)
        r.settings.setdefault(msg.wing, list(msg.setting))
        key = msg.pair_id + 1 if (self.mismatch and msg.wing == "A") else msg.pair_id
        other = self.pending.get(key)
        if other is not None and other[0] != msg.wing:
            del self.pending[key]
            a, b = (msg.outcome, other[1]) if msg.wing == "A" else (other[1], msg.outcome)
            self.out_a.append(a)
            self.out_b.append(b)
            r.n_matched += 1
            return
        self.pending[key] = (msg.wing, msg.outcome)
        if len(self.pending) > self.capacity:
            oldest = next(iter(self.pending))
            wing, _ = self.pending.pop(oldest)
            r.orphaned[wing] += 1

    def finish(self) -> CollectorReport:
        r = self.report
        for wing, _ in self.pending.values():
            r.orphaned[wing] += 1
        self.pending.clear()
        if r.n_matched:
            a, b = np.array(self.out_a), np.array(self.out_b)
            r.table = empirical_table(a, b)
            if r.n_matched >= 2:
                r.estimate = Estimate.from_samples(a * b)
        return r


def run_collector(
    listen: Address,
    mismatch: bool = False,
    capacity: int = 1 << 22,
    ready: Optional[Callable[[Address], None]] = None,
    n_wings: int = 2,
    timeout: Optional[float] = None,
) -> CollectorReport:
    """Accept ``n_wings`` detector connections and join their results until both close."""
    report = CollectorReport(mismatch=mismatch)
    join = JoinBuffer(report, capacity, mismatch)
    srv = listen_on(listen)
    srv.setblocking(False)
    if ready is not None:
        ready(srv.getsockname()[:2])
    sel = selectors.DefaultSelector()
    sel.register(srv, selectors.EVENT_READ, None)
    accepted = open_conns = 0
    deadline = None if timeout is None else time.monotonic() + timeout
    try:
        while accepted < n_wings or open_conns:
            wait = None if deadline is None else max(0.0, deadline - time.monotonic())
            events = sel.select(wait)
            if not events and deadline is not None and time.monotonic() >= deadline:
                raise TimeoutError(f"collector did not finish within {timeout}s ({accepted} connections accepted)")
            for key, _ in events:
                if key.data is None:
                    conn, _ = srv.accept()
                    conn.setblocking(False)
                    sel.register(conn, selectors.EVENT_READ, FrameBuffer())
                    accepted += 1
                    open_conns += 1
                    if accepted == n_wings:
                        sel.unregister(srv)
                    continue
                conn, buf = key.fileobj, key.data
                data = conn.recv(1 << 16)
                if not data:
                    if buf.pending:
                        report.malformed += 1
                        report.errors.append(f"connection closed with {buf.pending} bytes of a partial frame")
                    sel.unregister(conn)
                    conn.close()
                    open_conns -= 1
                    continue
                try:
                    frames = buf.feed(data)
                except ProtocolError as exc:
                    report.malformed += 1
                    report.errors.append(str(exc))
                    sel.unregister(conn)
                    conn.close()
                    open_conns -= 1
                    continue
                for payload in frames:
                    try:
                        join.add(protocol.decode_result(payload))
                    except ProtocolError as exc:
                        report.malformed += 1
                        if len(report.errors) < 20:
                            report.errors.append(str(exc))
    finally:
        sel.close()
        srv.close()
    return join.finish()
