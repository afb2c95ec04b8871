"""Closed-form correlations and coincidence probabilities for both pair models.

Every public function evaluates its closed form and, independently, the
same quantity as a trace against the relevant density operator. The two
routes are compared to ``EPS`` on every call; a disagreement raises
``AssertionError`` since it can only mean a bug.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import states
from .qlinalg import EPS, ContractError, Direction, pauli_dot, projector, rotation_between, tensor
from .states import Normalization


class TableNorm(enum.Enum):
    """How a set of four probabilities is normalized.

    PER_SPINS: single-side probabilities, normalized over all spins.
    PER_PAIRS: joint probabilities normalized over spin pairs (sum 1).
    RAW: whatever the trace against an un-normalized operator gives.
    """

    PER_SPINS = "per-spins"
    PER_PAIRS = "per-pairs"
    RAW = "raw"


@dataclass(frozen=True)
class MeasurementSetting:
    a: Direction
    b: Direction

    @property
    def cos_ab(self) -> float:
        return max(-1.0, min(1.0, self.a.dot(self.b)))

    @property
    def theta_ab(self) -> float:
        return math.acos(self.cos_ab)

    @classmethod
    def planar(cls, angle_a: float, angle_b: float) -> "MeasurementSetting":
        return cls(Direction.planar(angle_a), Direction.planar(angle_b))


@dataclass(frozen=True)
class CoincidenceTable:
    p_pp: float
    p_pm: float
    p_mp: float
    p_mm: float
    normalization: TableNorm

    def __post_init__(self) -> None:
        for v in self.as_tuple():
            if not -EPS <= v <= 1 + EPS:
                raise ContractError(f"probability {v!r} outside [0, 1]")
        if self.normalization is TableNorm.PER_PAIRS and abs(self.total() - 1.0) > EPS:
            raise ContractError(f"per-pairs table sums to {self.total()!r}, not 1")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p_pp, self.p_pm, self.p_mp, self.p_mm)

    def total(self) -> float:
        return self.p_pp + self.p_pm + self.p_mp + self.p_mm

    def correlation(self) -> float:
        """P++ - P+- - P-+ + P--."""
        return self.p_pp - self.p_pm - self.p_mp + self.p_mm

    def to_pairs(self) -> "CoincidenceTable":
        t = self.total()
        return CoincidenceTable(*(v / t for v in self.as_tuple()), normalization=TableNorm.PER_PAIRS)


def _agree(closed, traced, what: str) -> None:
    if isinstance(closed, float):
        ok = abs(closed - traced) <= EPS
    else:
        ok = np.allclose(closed, traced, atol=EPS, rtol=0)
    if not ok:
        raise AssertionError(f"{what}: closed form {closed!r} != trace {traced!r}")


def _tr(m: np.ndarray) -> float:
    return float(np.real(np.trace(m)))


_SIGNS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _joint_kets(s: MeasurementSetting) -> np.ndarray:
    """Rows are |sa>_a |sb>_b in the order ++, +-, -+, --."""
    return np.array([np.kron(states.ket(s.a, sa), states.ket(s.b, sb)) for sa, sb in _SIGNS])


def _table_by_trace(rho: np.ndarray, s: MeasurementSetting, kets: np.ndarray | None = None) -> np.ndarray:
    # Tr{|v><v| rho} = <v|rho|v> for each joint ket v
    v = _joint_kets(s) if kets is None else kets
    return np.real(np.einsum("ki,ij,kj->k", v.conj(), rho, v))


# -- entangled pairs ---------------------------------------------------------

@lru_cache(maxsize=1)
def _singlet() -> np.ndarray:
    rho = states.rho_epr().rho
    rho.setflags(write=False)
    return rho


def corr_entangled_trace(s: MeasurementSetting) -> float:
    return _tr(_singlet() @ tensor(pauli_dot(s.a), pauli_dot(s.b)))


def corr_entangled(s: MeasurementSetting) -> float:
    """-cos(theta_ab)."""
    closed = -s.cos_ab
    _agree(closed, corr_entangled_trace(s), "entangled correlation")
    return closed


def coincidence_entangled(s: MeasurementSetting) -> CoincidenceTable:
    c = s.cos_ab
    same, opposite = 0.25 * (1 - c), 0.25 * (1 + c)
    closed = (same, opposite, opposite, same)
    _agree(closed, _table_by_trace(_singlet(), s), "entangled coincidences")
    table = CoincidenceTable(*closed, normalization=TableNorm.PER_PAIRS)
    _agree(table.correlation(), -c, "entangled table correlation")
    return table


# -- one quantization axis ------------------------------------------------------

def single_expectations(s: MeasurementSetting, p: Direction) -> tuple[float, float]:
    """(<a.sigma1>, <b.sigma2>) for spin 1 in + and spin 2 in - along ``p``."""
    closed = (0.5 * s.a.dot(p), -0.5 * s.b.dot(p))
    traced = (
        _tr(pauli_dot(s.a) @ states.reduced(p, +1, 1)),
        _tr(pauli_dot(s.b) @ states.reduced(p, -1, 2)),
    )
    _agree(closed, traced, "single-spin expectations")
    return closed


def pair_product_fixed_axis(s: MeasurementSetting, p: Direction) -> float:
    """-(a.p)(b.p)/4, the product of the two single-spin expectations."""
    ea, eb = single_expectations(s, p)
    closed = -0.25 * s.a.dot(p) * s.b.dot(p)
    _agree(closed, ea * eb, "fixed-axis pair product")
    return closed


def frame_angles(v: Direction, p: Direction) -> tuple[float, float]:
    """Polar and azimuthal angle of ``v`` in a frame whose polar axis is ``p``."""
    r = rotation_between(p, states.Z_AXIS)
    w = r @ v.as_array()
    return math.acos(max(-1.0, min(1.0, w[2]))), math.atan2(w[1], w[0])


def angle_decomposition(s: MeasurementSetting, p: Direction) -> tuple[float, float]:
    """Split cos(theta_ab) into the part along ``p`` and the transverse part.

    Returns (cos ta cos tb, sin ta sin tb cos(pa - pb)) with angles measured
    from ``p``. When a or b is parallel to ``p`` its azimuth is undefined and
    the transverse term is 0.
    """
    # sin ta sin tb cos(pa - pb) is the dot product of the components
    # transverse to p; computing it that way avoids acos near the poles
    pv = p.as_array()
    ca, cb = s.a.dot(p), s.b.dot(p)
    classical = ca * cb
    interference = float(np.dot(s.a.as_array() - ca * pv, s.b.as_array() - cb * pv))
    if abs(classical + interference - s.cos_ab) > EPS:
        raise AssertionError("angle decomposition does not sum to cos(theta_ab)")
    return classical, interference


def single_side_probs(s: MeasurementSetting, p: Direction) -> tuple[float, float, float, float]:
    """(P1+(+,a), P1+(-,a), P2-(+,b), P2-(-,b)); sums to 1."""
    ta = math.acos(max(-1.0, min(1.0, s.a.dot(p))))
    tb = math.acos(max(-1.0, min(1.0, s.b.dot(p))))
    closed = (
        0.5 * math.cos(ta / 2) ** 2,
        0.5 * math.sin(ta / 2) ** 2,
        0.5 * math.sin(tb / 2) ** 2,
        0.5 * math.cos(tb / 2) ** 2,
    )
    r1, r2 = states.reduced(p, +1, 1), states.reduced(p, -1, 2)
    traced = (
        _tr(projector(states.ket_plus(s.a)) @ r1),
        _tr(projector(states.ket_minus(s.a)) @ r1),
        _tr(projector(states.ket_plus(s.b)) @ r2),
        _tr(projector(states.ket_minus(s.b)) @ r2),
    )
    _agree(closed, traced, "single-side probabilities")
    return closed


def coincidence_disentangled_fixed(s: MeasurementSetting, p: Direction) -> CoincidenceTable:
    """Raw joint probabilities for the mixed pair state with axis ``p`` (sum 1/4)."""
    x = s.a.dot(p) * s.b.dot(p)
    same, opposite = (1 - x) / 16, (1 + x) / 16
    closed = (same, opposite, opposite, same)
    rho = states.rho_disentangled(p, Normalization.RAW).rho
    _agree(closed, _table_by_trace(rho, s), "fixed-axis disentangled coincidences")
    return CoincidenceTable(*closed, normalization=TableNorm.RAW)


# -- ensemble averages -------------------------------------------------------

def ensemble_corr_isotropic(s: MeasurementSetting) -> float:
    """Fixed-axis pair product averaged over isotropic axes: -cos(theta_ab)/12."""
    return -s.cos_ab / 12


def nonpair_corr() -> float:
    """Correlation between spins from different pairs (independent axes)."""
    return 0.0


PLANAR_NODES = 8  # trig polynomial of degree 2 in the azimuth; any n >= 3 is exact


def _out_of_plane(s: MeasurementSetting) -> float:
    return s.a.z * s.b.z


def _require_planar(s: MeasurementSetting) -> None:
    if abs(s.a.z) > EPS or abs(s.b.z) > EPS:
        raise ContractError(
            "planar averaging needs both settings in the x-y plane "
            f"(a.zz.b = {_out_of_plane(s)!r}, a_z = {s.a.z!r}, b_z = {s.b.z!r})"
        )


@lru_cache(maxsize=1)
def _planar_node_states() -> tuple[np.ndarray, ...]:
    return tuple(
        states.rho_disentangled(Direction.planar(2 * math.pi * k / PLANAR_NODES), Normalization.RAW).rho
        for k in range(PLANAR_NODES)
    )


def _planar_average_by_trace(s: MeasurementSetting) -> np.ndarray:
    kets = _joint_kets(s)
    return sum(_table_by_trace(rho, s, kets) for rho in _planar_node_states()) / PLANAR_NODES


def coincidence_disentangled_planar(
    s: MeasurementSetting, normalization: TableNorm = TableNorm.RAW
) -> CoincidenceTable:
    """Mixed-state joint probabilities averaged over axes in the x-y plane.

    RAW entries are (1 -+ cos(theta_ab)/2)/16 and sum to 1/4. PER_PAIRS gives
    1/8 + (1 -+ cos(theta_ab))/8, which is the raw table times 4.
    """
    _require_planar(s)
    if abs(_out_of_plane(s)) >= EPS:
        raise ContractError("out-of-plane term a.zz.b is not negligible")
    c = s.cos_ab
    raw_same, raw_opp = (1 - c / 2) / 16, (1 + c / 2) / 16
    raw = (raw_same, raw_opp, raw_opp, raw_same)
    _agree(raw, _planar_average_by_trace(s), "planar-averaged disentangled coincidences")
    if normalization is TableNorm.RAW:
        return CoincidenceTable(*raw, normalization=TableNorm.RAW)
    if normalization is TableNorm.PER_PAIRS:
        same, opp = 1 / 8 + (1 - c) / 8, 1 / 8 + (1 + c) / 8
        table = CoincidenceTable(same, opp, opp, same, normalization=TableNorm.PER_PAIRS)
        _agree(table.as_tuple(), CoincidenceTable(*raw, normalization=TableNorm.RAW).to_pairs().as_tuple(),
               "per-pairs renormalization")
        return table
    raise ContractError(f"no planar table in normalization {normalization!r}")


def corr_disentangled_planar(s: MeasurementSetting, normalization: TableNorm = TableNorm.RAW) -> float:
    """-cos(theta_ab)/8 raw, -cos(theta_ab)/2 per pairs."""
    closed = {TableNorm.RAW: -s.cos_ab / 8, TableNorm.PER_PAIRS: -s.cos_ab / 2}[normalization]
    _agree(closed, coincidence_disentangled_planar(s, normalization).correlation(), "planar correlation")
    return closed


DETECTION_NOTE = (
    "Raw disentangled coincidences sum to 1/4, each channel on a 1/16 scale (6.25%). "
    "The text around the 6.25% figure also quotes the correlation as -(1/16)cos^2(theta_ab); "
    "that form does not follow from the planar-averaged table, whose correlation is "
    "-(1/8)cos(theta_ab). This report uses -(1/8)cos(theta_ab)."
)


@dataclass(frozen=True)
class DetectionReport:
    raw_sum: float
    per_channel_scale: float
    per_channel_max: float
    entangled_sum: float
    raw_correlation: float
    notes: list = field(default_factory=list)


def detection_report(s: MeasurementSetting) -> DetectionReport:
    raw = coincidence_disentangled_planar(s, TableNorm.RAW)
    ent = coincidence_entangled(s)
    return DetectionReport(
        raw_sum=raw.total(),
        per_channel_scale=1 / 16,
        per_channel_max=max(raw.as_tuple()),
        entangled_sum=ent.total(),
        raw_correlation=raw.correlation(),
        notes=[DETECTION_NOTE],
    )
