"""CHSH combinations and local hidden-variable correlations on the sphere.

Sign convention: S = E(a, b) - E(a, b') + E(a', b) + E(a', b').

Hidden-variable correlations are integrals over unit vectors ``lam`` with
the isotropic measure. They are evaluated with a product rule: Gauss-Legendre
in cos(theta) times the uniform rule in phi. With ``n`` Legendre nodes and
``2n`` azimuth nodes the rule integrates spherical polynomials up to degree
2n - 1 exactly, and its weights are positive and sum to 1.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import correlations
from .correlations import MeasurementSetting, TableNorm
from .qlinalg import Direction

Correlation = Callable[[Direction, Direction], float]

QUAD_TOL = 1e-6
QUAD_START = 24
QUAD_MAX = 384


class QuadratureError(RuntimeError):
    def __init__(self, achieved: float, tol: float, order: int):
        super().__init__(f"sphere quadrature did not reach {tol:g} (last change {achieved:.3g} at order {order})")
        self.achieved = achieved
        self.tol = tol
        self.order = order


@dataclass(frozen=True)
class ChshSetting:
    a: Direction
    a_prime: Direction
    b: Direction
    b_prime: Direction

    @classmethod
    def planar(cls, a: float, a_prime: float, b: float, b_prime: float) -> "ChshSetting":
        return cls(*(Direction.planar(t) for t in (a, a_prime, b, b_prime)))


@dataclass(frozen=True)
class ChshResult:
    e_ab: float
    e_abp: float
    e_apb: float
    e_apbp: float
    s_value: float
    setting: ChshSetting | None = None


def chsh(e: Correlation, s: ChshSetting) -> ChshResult:
    e_ab, e_abp = e(s.a, s.b), e(s.a, s.b_prime)
    e_apb, e_apbp = e(s.a_prime, s.b), e(s.a_prime, s.b_prime)
    return ChshResult(e_ab, e_abp, e_apb, e_apbp, e_ab - e_abp + e_apb + e_apbp, s)


def entangled_correlation(a: Direction, b: Direction) -> float:
    return correlations.corr_entangled(MeasurementSetting(a, b))


def disentangled_per_pairs_correlation(a: Direction, b: Direction) -> float:
    """Planar-averaged mixed-state correlation normalized to pairs; a, b planar."""
    return correlations.corr_disentangled_planar(MeasurementSetting(a, b), TableNorm.PER_PAIRS)


def chsh_scan(e: Correlation, resolution: int) -> ChshResult:
    """Maximize |S| over planar settings on a uniform azimuth grid.

    E is tabulated once on the grid; for each (a, a') the best b and b' can
    be picked independently, which keeps the search O(resolution^3).
    Ties resolve to the lowest grid indices.
    """
    if resolution < 4:
        raise ValueError("need at least 4 angles per arm")
    angles = 2 * math.pi * np.arange(resolution) / resolution
    dirs = [Direction.planar(t) for t in angles]
    m = np.array([[e(x, y) for y in dirs] for x in dirs])
    best = (-1.0, 0, 0, 0, 0)
    for i in range(resolution):
        row = m[i][None, :]
        u = m + row  # [a', b] -> E(a,b) + E(a',b)
        v = m - row  # [a', b'] -> E(a',b') - E(a,b')
        for sign in (1.0, -1.0):
            jb = np.argmax(sign * u, axis=1)
            jbp = np.argmax(sign * v, axis=1)
            total = sign * (u[np.arange(resolution), jb] + v[np.arange(resolution), jbp])
            ip = int(np.argmax(total))
            if total[ip] > best[0] + 1e-15:
                best = (float(total[ip]), i, ip, int(jb[ip]), int(jbp[ip]))
    _, i, ip, jb, jbp = best
    return chsh(e, ChshSetting.planar(angles[i], angles[ip], angles[jb], angles[jbp]))


# -- local hidden variables ---------------------------------------------------

class Distribution(enum.Enum):
    DELTA_PAIRED = "delta-paired"  # both wings share one lam
    INDEPENDENT_ISOTROPIC = "independent-isotropic"  # independent lam, lam'


# A(setting, lam) with lam of shape (n, 3); must return values in [-1, 1].
LocalFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LhvModel:
    a_fn: LocalFunction
    b_fn: LocalFunction
    distribution: Distribution = Distribution.DELTA_PAIRED


def projection_model(distribution: Distribution = Distribution.DELTA_PAIRED) -> LhvModel:
    """A = a.lam and B = -b.lam: single-spin expectations scaled to +-1."""
    return LhvModel(lambda a, lam: lam @ a, lambda b, lam: -(lam @ b), distribution)


@lru_cache(maxsize=None)
def sphere_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (m, 3) and weights (m,) summing to 1 on the unit sphere."""
    z, wz = np.polynomial.legendre.leggauss(n)
    phi = 2 * math.pi * np.arange(2 * n) / (2 * n)
    zz, pp = np.meshgrid(z, phi, indexing="ij")
    r = np.sqrt(1 - zz * zz)
    nodes = np.column_stack([(r * np.cos(pp)).ravel(), (r * np.sin(pp)).ravel(), zz.ravel()])
    weights = np.repeat(wz / 2, 2 * n) / (2 * n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _checked(fn: LocalFunction, v: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    vals = np.asarray(fn(v, nodes), dtype=float)
    if np.any(np.abs(vals) > 1 + 1e-12):
        raise ValueError("local response outside [-1, 1]")
    return vals


def _integrate(m: LhvModel, a: np.ndarray, b: np.ndarray, n: int) -> float:
    nodes, w = sphere_rule(n)
    fa, fb = _checked(m.a_fn, a, nodes), _checked(m.b_fn, b, nodes)
    if m.distribution is Distribution.DELTA_PAIRED:
        return float(w @ (fa * fb))
    # independent axes: the double integral factorizes
    return float(w @ fa) * float(w @ fb)


def lhv_correlation(m: LhvModel, s: MeasurementSetting, tol: float = QUAD_TOL) -> float:
    """E(a, b) = integral of A(a, lam) B(b, lam') over the model's distribution.

    The rule order doubles until two successive doublings each change the
    value by less than ``tol``. A single small change is not trusted: a
    discontinuous response can plateau on symmetric node sets.
    """
    a, b = s.a.as_array(), s.b.as_array()
    n = QUAD_START
    prev = _integrate(m, a, b, n)
    changes = [math.inf]
    while n < QUAD_MAX:
        n *= 2
        cur = _integrate(m, a, b, n)
        changes.append(abs(cur - prev))
        if max(changes[-2:]) < tol:
            return cur
        prev = cur
    raise QuadratureError(max(changes[-2:]), tol, n)


def lhv_chsh(m: LhvModel, s: ChshSetting, tol: float = QUAD_TOL) -> ChshResult:
    return chsh(lambda x, y: lhv_correlation(m, MeasurementSetting(x, y), tol), s)
