"""Run the whole harness on localhost as separate OS processes."""

from __future__ import annotations

import json
import math
import subprocess
import sys
import tempfile
from pathlib import Path
from typing import Optional

from ..ensemble import Sampler
from ..qlinalg import Direction
from .roles import CollectorReport

READY_PREFIX = "LISTENING "


def _cmd(*args: str) -> list[str]:
    return [sys.executable, "-m", "eprsim", *args]


def _setting_flag(d: Direction) -> str:
    return f"{math.degrees(d.theta)!r},{math.degrees(d.phi)!r}"


def _wait_ready(proc: subprocess.Popen) -> str:
    line = proc.stdout.readline()
    if not line.startswith(READY_PREFIX):
        proc.kill()
        proc.wait()
        proc.errlog.seek(0)
        err = proc.errlog.read()
        raise RuntimeError(f"process did not report a listening address: {line!r} {err}")
    return line[len(READY_PREFIX):].strip()


def run_local(
    n_pairs: int,
    sampler: Sampler,
    seed: int,
    setting_a: Direction,
    setting_b: Direction,
    mismatch: bool = False,
    capture_a: Optional[Path] = None,
    timeout: float = 300.0,
) -> CollectorReport:
    """Start collector, two detectors and a source; return the collector's report."""
    procs: list[subprocess.Popen] = []

    def spawn(*args: str) -> subprocess.Popen:
        err = tempfile.TemporaryFile(mode="w+")
        p = subprocess.Popen(_cmd(*args), stdout=subprocess.PIPE, stderr=err, text=True)
        p.errlog = err
        procs.append(p)
        return p

    try:
        collector_args = ["net-collector", "--listen", "127.0.0.1:0", "--timeout", str(timeout)]
        if mismatch:
            collector_args.append("--mismatch")
        collector = spawn(*collector_args)
        collector_addr = _wait_ready(collector)

        detector_addr = {}
        for wing, setting in (("A", setting_a), ("B", setting_b)):
            args = ["net-detector", "--wing", wing, "--setting", _setting_flag(setting),
                    "--listen", "127.0.0.1:0", "--connect", collector_addr, "--seed", str(seed)]
            if wing == "A" and capture_a is not None:
                args += ["--capture", str(capture_a)]
            detector_addr[wing] = _wait_ready(spawn(*args))

        spawn("net-source", "--pairs", str(n_pairs), "--seed", str(seed), "--sampler", sampler.label(),
              "--connect", detector_addr["A"], "--connect", detector_addr["B"])
        # the collector finishes last; read its report before reaping the others
        report = collector.stdout.read()
        for p in procs:
            p.wait(timeout=timeout)
        for p in procs:
            if p.returncode != 0:
                p.errlog.seek(0)
                raise RuntimeError(f"{p.args[3]} exited with {p.returncode}: {p.errlog.read()}")
        return CollectorReport.from_dict(json.loads(report))
    finally:
        for p in procs:
            if p.poll() is None:
                p.kill()
                p.wait()
            p.stdout.close()
            p.errlog.close()
