"""Entangled versus disentangled EPR spin-pair correlations.

Submodules: ``qlinalg`` (2x2/4x4 operator algebra), ``states``,
``correlations``, ``ensemble`` (Monte Carlo), ``bell`` (CHSH and hidden
variable integrals), ``netharness`` (distributed locality demo), ``cli``.
"""

__version__ = "0.1.0"
