"""Spin kets, the singlet, reduced single-spin operators and the mixed pair state.

Two normalizations are kept side by side. ``Normalization.RAW`` keeps the
prefactors that come out of the conditional partial trace: each reduced
single-spin operator has trace 1/2 and the disentangled pair mixture has
trace 1/4. ``Normalization.UNIT`` rescales everything to unit trace.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .qlinalg import (
    EPS,
    I2,
    I4,
    PAULI,
    ContractError,
    Direction,
    check_density,
    frobenius,
    pauli_dot,
    tensor,
)


class Normalization(enum.Enum):
    RAW = "raw"
    UNIT = "unit"


class PairKind(enum.Enum):
    ENTANGLED = "entangled"
    DISENTANGLED_FIXED_AXIS = "disentangled-fixed-axis"


Z_AXIS = Direction(0.0, 0.0, 1.0)


def ket_plus(p: Direction) -> np.ndarray:
    """|+> along ``p``: (cos(theta/2), sin(theta/2) e^{i phi})."""
    th, ph = p.theta, p.phi
    return np.array([math.cos(th / 2), math.sin(th / 2) * np.exp(1j * ph)], dtype=complex)


def ket_minus(p: Direction) -> np.ndarray:
    """|-> along ``p``: (-sin(theta/2) e^{-i phi}, cos(theta/2))."""
    th, ph = p.theta, p.phi
    return np.array([-math.sin(th / 2) * np.exp(-1j * ph), math.cos(th / 2)], dtype=complex)


def ket(p: Direction, sign: int) -> np.ndarray:
    if sign == 1:
        return ket_plus(p)
    if sign == -1:
        return ket_minus(p)
    raise ContractError(f"sign must be +1 or -1, got {sign!r}")


def singlet_ket(p: Direction = Z_AXIS) -> np.ndarray:
    """(|+>|-> - |->|+>)/sqrt(2) built from kets quantized along ``p``."""
    up, dn = ket_plus(p), ket_minus(p)
    return (np.kron(up, dn) - np.kron(dn, up)) / math.sqrt(2)


def sigma_dot_sigma() -> np.ndarray:
    return sum(tensor(s, s) for s in PAULI)


@dataclass(frozen=True, eq=False)
class PairState:
    kind: PairKind
    rho: np.ndarray = field(repr=False)
    axis: Optional[Direction] = None
    normalization: Normalization = Normalization.UNIT

    def __post_init__(self) -> None:
        if (self.axis is None) != (self.kind is PairKind.ENTANGLED):
            raise ContractError("axis is required exactly for the disentangled kind")
        check_density(self.rho, trace_value=self.expected_trace, what=self.kind.value)

    @property
    def expected_trace(self) -> float:
        if self.kind is PairKind.DISENTANGLED_FIXED_AXIS and self.normalization is Normalization.RAW:
            return 0.25
        return 1.0


def rho_epr(basis: Direction = Z_AXIS) -> PairState:
    """The singlet density operator.

    Built as the outer product of the singlet ket in the ``basis`` frame and,
    independently, as (I x I - sigma1 . sigma2)/4; the two must agree.
    """
    psi = singlet_ket(basis)
    outer = np.outer(psi, psi.conj())
    termwise = 0.25 * (I4 - sigma_dot_sigma())
    if frobenius(outer, termwise) > EPS:
        raise AssertionError("singlet constructions disagree")
    return PairState(PairKind.ENTANGLED, termwise)


def reduced(p: Direction, branch: int, spin: int, normalization: Normalization = Normalization.RAW) -> np.ndarray:
    """Single-spin operator of spin ``spin`` left in state ``branch`` along ``p``.

    In the raw normalization this is (I + branch * p.sigma)/4, i.e. half of
    the rank-1 projector. The formula does not depend on which spin is meant;
    ``spin`` is validated and kept for readability at call sites.
    """
    if spin not in (1, 2):
        raise ContractError(f"spin must be 1 or 2, got {spin!r}")
    if branch not in (1, -1):
        raise ContractError(f"branch must be +1 or -1, got {branch!r}")
    op = 0.25 * (I2 + branch * pauli_dot(p))
    if normalization is Normalization.UNIT:
        op = 2.0 * op
    return op


def rho_disentangled(p: Direction, normalization: Normalization = Normalization.RAW) -> PairState:
    """Equal mixture of (spin1 +, spin2 -) and (spin1 -, spin2 +) along ``p``.

    With raw-normalized reduced operators the raw trace is 1/4.
    """
    rho = 0.5 * (
        tensor(reduced(p, +1, 1), reduced(p, -1, 2))
        + tensor(reduced(p, -1, 1), reduced(p, +1, 2))
    )
    if normalization is Normalization.UNIT:
        rho = rho / np.real(np.trace(rho))
    return PairState(PairKind.DISENTANGLED_FIXED_AXIS, rho, axis=p, normalization=normalization)


# -- photon helicity pairs --------------------------------------------------

PHOTON_BASIS = ("R1R2", "R1L2", "L1R2", "L1L2")


@dataclass(frozen=True)
class PhotonPairState:
    """Two-photon helicity amplitudes over R1R2, R1L2, L1R2, L1L2.

    R/L are kept as their own labels; mapping them to spin up/down along the
    propagation axis is left to the caller.
    """

    amplitudes: tuple

    def __post_init__(self) -> None:
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (4,):
            raise ContractError("a photon pair state has four amplitudes")
        if abs(float(np.vdot(amps, amps).real) - 1.0) > EPS:
            raise ContractError("photon pair state is not normalized")
        object.__setattr__(self, "amplitudes", tuple(complex(a) for a in amps))

    def vector(self) -> np.ndarray:
        return np.array(self.amplitudes, dtype=complex)

    @classmethod
    def from_labels(cls, **amps: complex) -> "PhotonPairState":
        return cls(tuple(amps.get(label, 0) for label in PHOTON_BASIS))


def phi_state(sign: int) -> PhotonPairState:
    """(|R1R2> + sign |L1L2>)/sqrt(2)."""
    r = 1 / math.sqrt(2)
    return PhotonPairState.from_labels(R1R2=r, L1L2=sign * r)


def photon_singlet() -> PhotonPairState:
    r = 1 / math.sqrt(2)
    return PhotonPairState.from_labels(R1L2=r, L1R2=-r)


def parity_invert(s: PhotonPairState) -> PhotonPairState:
    """Swap R and L on both photons at once."""
    rr, rl, lr, ll = s.amplitudes
    return PhotonPairState((ll, lr, rl, rr))


def parity_eigenvalue(s: PhotonPairState) -> Optional[int]:
    """+1 or -1 if ``s`` is a parity eigenstate, else None."""
    v, w = s.vector(), parity_invert(s).vector()
    for ev in (1, -1):
        if np.allclose(w, ev * v, atol=EPS, rtol=0):
            return ev
    return None


def same_ray(s: PhotonPairState, t: PhotonPairState) -> bool:
    """Equal up to a global phase."""
    return abs(abs(np.vdot(s.vector(), t.vector())) - 1.0) < EPS
