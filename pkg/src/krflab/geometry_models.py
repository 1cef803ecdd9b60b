"""Symmetry-reduced model manifolds for the normalized Kahler-Ricci flow.

Homogeneous models carry ``omega_t = f(t) * omega_hat`` where the reference
metric satisfies ``Ric(omega_hat) = rho * omega_hat``; the flow
``d/dt omega = -Ric(omega) - omega`` then reduces to ``f' = -rho - f``.

============== ====== ===================================== =================
model          rho    reference metric                      2 pi c1(K) degree
============== ====== ===================================== =================
FlatTorus(n)   0      flat, HSC 0, volume 1                 0
Hyperbolic(g)  -1     HSC -1, area 2 pi (2g - 2)            2 pi (2g - 2)
ProjectiveLine +2     Fubini-Study, area 2 pi, HSC +2       -4 pi
============== ====== ===================================== =================

``TorusGrid(N)`` is the one genuinely spatial model: a periodic N x N grid on
[0, 1)^2 (lattice Z + iZ) with ``omega_t = e^-t omega_hat + i ddbar phi`` and
the potential equation

    d phi / dt = log((g_flat e^-t + phi_zzbar) / g_flat) - phi,

with ``phi_zzbar = (phi_xx + phi_yy) / 4`` by centered second differences.
Flat data follows ``phi = 1 - t - e^-t`` exactly; the kernels integrate the
difference ``psi = phi - (1 - t - e^-t)``, which stays small.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import cone_certifier as cc
from . import kernels
from .errors import NoClosedForm, NonPositiveInitialMetric, PositivityLost
from .tensor_core import HermitianForm, KahlerCurvature, constant_hsc_tensor

FLAT_TORUS = "flat_torus"
HYPERBOLIC = "hyperbolic"
PROJECTIVE_LINE = "projective_line"
TORUS_GRID = "torus_grid"

# a state whose min metric coefficient falls below this fraction of the
# initial one is treated as degenerate
DEGENERATION_RATIO = 1e-8


@dataclass(frozen=True)
class ModelManifold:
    kind: str
    n: int = 1
    genus: int = 0
    resolution: int = 0
    g_flat: float = 1.0

    @property
    def homogeneous(self):
        return self.kind != TORUS_GRID

    @property
    def ricci_constant(self):
        """``rho`` with ``Ric(omega_hat) = rho omega_hat``."""
        return {FLAT_TORUS: 0.0, HYPERBOLIC: -1.0, PROJECTIVE_LINE: 2.0, TORUS_GRID: 0.0}[self.kind]

    @property
    def spacing(self):
        return 1.0 / self.resolution

    def reference_metric(self):
        if self.kind == TORUS_GRID:
            return HermitianForm([[self.g_flat]])
        return HermitianForm.identity(self.n)

    def reference_curvature(self):
        g = self.reference_metric()
        if self.kind == HYPERBOLIC:
            return constant_hsc_tensor(g, 1.0)
        if self.kind == PROJECTIVE_LINE:
            return constant_hsc_tensor(g, -2.0)
        return KahlerCurvature.zero(self.n)

    @property
    def kappa(self):
        """Best constant with HSC(omega_hat) <= -kappa, or None if HSC is positive."""
        return {FLAT_TORUS: 0.0, HYPERBOLIC: 1.0, PROJECTIVE_LINE: None, TORUS_GRID: 0.0}[self.kind]

    def lattice(self):
        if self.kind == HYPERBOLIC:
            return cc.HyperbolicCurve(self.genus)
        if self.kind == PROJECTIVE_LINE:
            return cc.P1()
        return cc.Torus(self.n)

    def reference_degree(self):
        """Coordinate of ``[omega_hat]`` in the model lattice."""
        if self.kind == HYPERBOLIC:
            return 2.0 * math.pi * (2 * self.genus - 2)
        if self.kind == PROJECTIVE_LINE:
            return 2.0 * math.pi
        if self.kind == TORUS_GRID:
            # i dz ^ dzbar = 2 dx ^ dy on the unit square
            return 2.0 * self.g_flat
        return 1.0

    def label(self):
        if self.kind == HYPERBOLIC:
            return f"HyperbolicSurface(g={self.genus})"
        if self.kind == FLAT_TORUS:
            return f"FlatTorus(n={self.n})"
        if self.kind == TORUS_GRID:
            return f"TorusGrid(N={self.resolution})"
        return "ProjectiveLine"


def FlatTorus(n=1):
    return ModelManifold(FLAT_TORUS, n=n)


def HyperbolicSurface(genus=2):
    if genus < 2:
        raise ValueError("hyperbolic surfaces have genus >= 2")
    return ModelManifold(HYPERBOLIC, n=1, genus=genus)


def ProjectiveLine():
    return ModelManifold(PROJECTIVE_LINE, n=1)


def TorusGrid(resolution=64, g_flat=1.0):
    if resolution < 3:
        raise ValueError("grid needs at least 3 nodes per side")
    return ModelManifold(TORUS_GRID, n=1, resolution=resolution, g_flat=g_flat)


@dataclass(frozen=True, eq=False)
class FlowState:
    """Snapshot of the flow: a scale factor or a potential grid at time ``t``."""

    t: float
    model: ModelManifold
    data: object

    def __post_init__(self):
        if isinstance(self.data, np.ndarray):
            self.data.setflags(write=False)

    def metric(self):
        """``omega_t`` as a HermitianForm (homogeneous) or the node-wise coefficient grid."""
        if self.model.homogeneous:
            return self.model.reference_metric().scaled(self.data)
        return metric_grid(self.model, self.data, self.t)

    def min_metric(self):
        """Smallest eigenvalue of ``omega_t`` relative to ``omega_hat`` over the manifold."""
        if self.model.homogeneous:
            return float(self.data)
        return float(metric_grid(self.model, self.data, self.t).min()) / self.model.g_flat

    def max_metric(self):
        if self.model.homogeneous:
            return float(self.data)
        return float(metric_grid(self.model, self.data, self.t).max()) / self.model.g_flat


def metric_grid(model, phi, t):
    return kernels.grid_metric(np.ascontiguousarray(phi, dtype=float), t, model.spacing, model.g_flat)


def grid_coordinates(resolution):
    x = np.arange(resolution) / resolution
    return np.meshgrid(x, x, indexing="ij")


def cosine_potential(resolution, amplitude, axis=0):
    """``amplitude * cos(2 pi x)`` (axis 0) or ``cos(2 pi y)`` (axis 1) on the grid."""
    X, Y = grid_coordinates(resolution)
    return amplitude * np.cos(2.0 * np.pi * (X if axis == 0 else Y))


def cosine_positivity_threshold(resolution, g_flat=1.0):
    """Largest cosine amplitude keeping the discrete initial metric positive.

    The centered stencil maps cos(2 pi x) to ``-(1 - cos 2 pi h) / (2 h^2)`` times
    itself in ``phi_zzbar``, so positivity needs ``A (1 - cos 2 pi h) / (2 h^2) < g_flat``.
    """
    h = 1.0 / resolution
    return 2.0 * h * h * g_flat / (1.0 - math.cos(2.0 * math.pi * h))


def initial_state(model, f0=1.0, phi0=None):
    """State at t = 0 from a scale factor (homogeneous) or a potential grid."""
    if model.homogeneous:
        f0 = float(f0)
        if not f0 > 0:
            raise NonPositiveInitialMetric(f"initial scale {f0} must be positive")
        return FlowState(0.0, model, f0)
    N = model.resolution
    phi = np.zeros((N, N)) if phi0 is None else np.array(phi0, dtype=float)
    if phi.shape != (N, N):
        raise ValueError(f"potential must have shape {(N, N)}")
    g = metric_grid(model, phi, 0.0)
    if not g.min() > 0:
        raise NonPositiveInitialMetric(f"initial metric has min coefficient {g.min():.3e}")
    return FlowState(0.0, model, phi)


def homogeneous_potential(t):
    """``1 - t - e^-t``: the potential of the flat solution ``omega_t = e^-t omega_hat``."""
    return -t - math.expm1(-t)


def to_relative(phi, t):
    return np.ascontiguousarray(phi, dtype=float) - homogeneous_potential(t)


def from_relative(psi, t):
    return psi + homogeneous_potential(t)


def reduced_velocity(state):
    """Right-hand side of the reduced flow at ``state``."""
    model = state.model
    if model.homogeneous:
        if not state.data > 0:
            raise PositivityLost(f"scale factor {state.data} is not positive", t=state.t)
        return -model.ricci_constant - state.data
    vel, gmin = kernels.grid_velocity(
        to_relative(state.data, state.t), state.t, model.spacing, model.g_flat
    )
    if not gmin > 0:
        raise PositivityLost(f"metric degenerated (min coefficient {gmin:.3e})", t=state.t)
    return vel + math.expm1(-state.t)


def exact_solution(model, f0, t):
    """Closed-form scale ``f(t) = -rho + (f0 + rho) e^-t`` of a homogeneous model."""
    if not model.homogeneous:
        raise NoClosedForm("the grid model has no closed-form solution")
    rho = model.ricci_constant
    return -rho + (f0 + rho) * math.exp(-t)


def class_of(model, which, f0=1.0):
    """``[omega0]`` (``which="initial"``) or ``2 pi c1(K_X)`` (``which="canonical"``)."""
    lat = model.lattice()
    if which == "canonical":
        if model.kind == TORUS_GRID:
            return cc.CohomClass([0.0], lat)
        return cc.canonical_class(lat)
    if which == "initial":
        # the grid potential is exact, so it does not change the class
        scale = 1.0 if model.kind == TORUS_GRID else float(f0)
        return cc.CohomClass([scale * model.reference_degree()], lat)
    raise ValueError(f"which must be 'initial' or 'canonical', got {which!r}")
