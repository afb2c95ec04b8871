"""Small complex linear algebra for one- and two-spin operators.

Operators are plain ``numpy`` complex arrays of shape (2, 2) or (4, 4).
Two-spin operators use the tensor basis order

    |+z>|+z>, |+z>|-z>, |-z>|+z>, |-z>|-z>

so that index ``2*s1 + s2`` addresses spin 1 in state ``s1`` and spin 2 in
state ``s2`` (0 is up, 1 is down).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-12

I2 = np.eye(2, dtype=complex)
I4 = np.eye(4, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SIGMA_X, SIGMA_Y, SIGMA_Z)


class ContractError(ValueError):
    """Raised when an input violates an operation's precondition."""


@dataclass(frozen=True)
class Direction:
    """Unit vector in three dimensions."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        n2 = self.x * self.x + self.y * self.y + self.z * self.z
        if not math.isfinite(n2) or abs(n2 - 1.0) > 1e-9:
            raise ContractError(f"direction is not unit length (|n|^2 = {n2!r})")

    @classmethod
    def from_polar(cls, theta: float, phi: float = 0.0) -> "Direction":
        st = math.sin(theta)
        return cls(st * math.cos(phi), st * math.sin(phi), math.cos(theta))

    @classmethod
    def from_vector(cls, v) -> "Direction":
        """Normalize an arbitrary nonzero 3-vector."""
        v = np.asarray(v, dtype=float)
        n = float(np.linalg.norm(v))
        if n == 0.0 or not math.isfinite(n):
            raise ContractError("cannot normalize a zero or non-finite vector")
        return cls(*(float(c) for c in v / n))

    @classmethod
    def planar(cls, angle: float) -> "Direction":
        """Unit vector in the x-y plane at azimuth ``angle`` (radians)."""
        return cls(math.cos(angle), math.sin(angle), 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def dot(self, other: "Direction") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    @property
    def theta(self) -> float:
        return math.acos(max(-1.0, min(1.0, self.z)))

    @property
    def phi(self) -> float:
        return math.atan2(self.y, self.x)

    def __neg__(self) -> "Direction":
        return Direction(-self.x, -self.y, -self.z)


def _as_unit(n) -> np.ndarray:
    if isinstance(n, Direction):
        return n.as_array()
    v = np.asarray(n, dtype=float)
    if v.shape != (3,) or abs(float(v @ v) - 1.0) > 1e-9:
        raise ContractError(f"expected a unit 3-vector, got {n!r}")
    return v


def pauli_dot(n) -> np.ndarray:
    """Return n . sigma for a unit vector ``n``."""
    v = _as_unit(n)
    return v[0] * SIGMA_X + v[1] * SIGMA_Y + v[2] * SIGMA_Z


def tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product of two 2x2 operators in the documented basis order."""
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(4, 4)


def adjoint(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def trace(m: np.ndarray) -> complex:
    return complex(np.trace(m))


def partial_trace(m: np.ndarray, over: int) -> np.ndarray:
    """Trace a two-spin operator over spin ``over`` (1 or 2)."""
    r = np.asarray(m).reshape(2, 2, 2, 2)  # (s1, s2, s1', s2')
    if over == 2:
        return np.einsum("ijkj->ik", r)
    if over == 1:
        return np.einsum("ijik->jk", r)
    raise ContractError(f"side must be 1 or 2, got {over!r}")


def projector(ket: np.ndarray) -> np.ndarray:
    ket = np.asarray(ket, dtype=complex)
    return np.outer(ket, ket.conj())


def is_projector(p: np.ndarray, tol: float = EPS) -> bool:
    """True for a rank-1 orthogonal projector."""
    p = np.asarray(p)
    return (
        p.shape == (2, 2)
        and np.allclose(p, adjoint(p), atol=tol, rtol=0)
        and np.allclose(p @ p, p, atol=tol, rtol=0)
        and abs(trace(p) - 1.0) < tol
    )


def conditional_reduce(m: np.ndarray, proj: np.ndarray, on: int) -> np.ndarray:
    """Project spin ``on`` with ``proj`` and trace it out.

    Returns Tr_on{(proj on side ``on``) m}; the remaining operator lives on
    the other spin and its trace is the weight of the projected branch.
    """
    if not is_projector(proj):
        raise ContractError("conditional_reduce needs a rank-1 projector")
    if on == 2:
        full = tensor(I2, proj)
    elif on == 1:
        full = tensor(proj, I2)
    else:
        raise ContractError(f"side must be 1 or 2, got {on!r}")
    return partial_trace(full @ m, over=on)


def is_density_operator(m: np.ndarray, tol: float = EPS, trace_value: float = 1.0) -> bool:
    """Hermitian, trace ``trace_value`` and positive semidefinite, all to ``tol``."""
    m = np.asarray(m)
    if not np.allclose(m, adjoint(m), atol=tol, rtol=0):
        return False
    if abs(trace(m) - trace_value) > tol:
        return False
    return bool(np.linalg.eigvalsh(m).min() >= -tol)


def check_density(m: np.ndarray, trace_value: float = 1.0, what: str = "operator") -> np.ndarray:
    if not is_density_operator(m, trace_value=trace_value):
        raise ContractError(f"{what} fails the density-operator checks (trace {trace_value})")
    return m


def frobenius(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))


def purity(m: np.ndarray) -> float:
    return float(np.real(np.trace(m @ m)))


def rotation_between(u, v) -> np.ndarray:
    """Real 3x3 rotation carrying unit vector ``u`` onto ``v`` (Rodrigues)."""
    u, v = _as_unit(u), _as_unit(v)
    axis = np.cross(u, v)
    s = float(np.linalg.norm(axis))
    c = float(u @ v)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        # antiparallel: rotate by pi about any axis perpendicular to u
        perp = np.cross(u, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-8:
            perp = np.cross(u, [0.0, 1.0, 0.0])
        perp /= np.linalg.norm(perp)
        return 2.0 * np.outer(perp, perp) - np.eye(3)
    k = axis / s
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + s * kx + (1 - c) * (kx @ kx)


def su2_from_rotation(r: np.ndarray) -> np.ndarray:
    """A 2x2 unitary U with U (n.sigma) U^dagger = (R n).sigma."""
    r = np.asarray(r, dtype=float)
    # unit quaternion (w, x, y, z) of R; pivot on the largest component
    # (Shepperd) so small and near-pi angles stay accurate
    t = np.trace(r)
    pivots = [t, r[0, 0], r[1, 1], r[2, 2]]
    k = int(np.argmax(pivots))
    if k == 0:
        w = 0.5 * math.sqrt(max(0.0, 1 + t))
        x, y, z = (r[2, 1] - r[1, 2]) / (4 * w), (r[0, 2] - r[2, 0]) / (4 * w), (r[1, 0] - r[0, 1]) / (4 * w)
    elif k == 1:
        x = 0.5 * math.sqrt(max(0.0, 1 + 2 * r[0, 0] - t))
        w, y, z = (r[2, 1] - r[1, 2]) / (4 * x), (r[0, 1] + r[1, 0]) / (4 * x), (r[0, 2] + r[2, 0]) / (4 * x)
    elif k == 2:
        y = 0.5 * math.sqrt(max(0.0, 1 + 2 * r[1, 1] - t))
        w, x, z = (r[0, 2] - r[2, 0]) / (4 * y), (r[0, 1] + r[1, 0]) / (4 * y), (r[1, 2] + r[2, 1]) / (4 * y)
    else:
        z = 0.5 * math.sqrt(max(0.0, 1 + 2 * r[2, 2] - t))
        w, x, y = (r[1, 0] - r[0, 1]) / (4 * z), (r[0, 2] + r[2, 0]) / (4 * z), (r[1, 2] + r[2, 1]) / (4 * z)
    q = np.array([w, x, y, z]) / math.sqrt(w * w + x * x + y * y + z * z)
    return q[0] * I2 - 1j * (q[1] * SIGMA_X + q[2] * SIGMA_Y + q[3] * SIGMA_Z)
