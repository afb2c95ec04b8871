"""Distributed locality demonstration: source, two detectors, collector."""

from .protocol import ParticleMsg, ProtocolError, ResultMsg
from .roles import CollectorReport, run_collector, run_detector, run_source

__all__ = [
    "CollectorReport",
    "ParticleMsg",
    "ProtocolError",
    "ResultMsg",
    "run_collector",
    "run_detector",
    "run_source",
]
