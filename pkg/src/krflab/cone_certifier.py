"""Cohomology side of the flow: class evolution, maximal time, Kahler-cone tests.

Classes live in a fixed basis of H^{1,1}(X, R) with the factor 2*pi kept in
the coordinates (``2 pi c1(K)`` of a genus-g curve has degree ``2 pi (2g - 2)``).
Kahler-ness is decided by finitely many intersection numbers: the pairing
with each declared curve generator and the top self-intersection. This is
exact on the built-in lattices, whose curve cones are known and finitely
generated.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundViolated, DimensionMismatch, InitialClassNotKahler, LatticeMismatch

ZERO_TOL = 1e-12
# relative accuracy assumed for roots of the self-intersection quadratic
QUAD_RTOL = 1e-7

KAHLER = "Kahler"
NEF_BOUNDARY = "NefBoundary"
OUTSIDE = "Outside"

TOTAL = "X"


@dataclass(frozen=True, eq=False)
class SurfaceLattice:
    """H^{1,1} lattice with its intersection data.

    ``intersection_form`` is the bilinear form for surfaces. For rank-1
    lattices its single entry is the top self-intersection ``h^dim`` of the
    generator, which covers curves (the degree pairing) and complex tori.
    """

    name: str
    dim: int
    intersection_form: np.ndarray
    curve_generators: tuple = ()
    curve_names: tuple = ()

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.intersection_form, dtype=float))
        if Q.shape[0] != Q.shape[1] or not np.allclose(Q, Q.T, rtol=0, atol=1e-14):
            raise ValueError("intersection form must be a symmetric square matrix")
        if self.dim > 2 and Q.shape[0] != 1:
            raise ValueError("only rank-1 lattices are supported above dimension 2")
        gens = tuple(np.asarray(c, dtype=float).reshape(Q.shape[0]) for c in self.curve_generators)
        names = tuple(self.curve_names) or tuple(f"C{i}" for i in range(len(gens)))
        if len(names) != len(gens):
            raise ValueError("one name per curve generator")
        Q.setflags(write=False)
        object.__setattr__(self, "intersection_form", Q)
        object.__setattr__(self, "curve_generators", gens)
        object.__setattr__(self, "curve_names", names)

    @property
    def rank(self):
        return self.intersection_form.shape[0]

    def subvarieties(self):
        """``(label, dim)`` for every subvariety the cone tests integrate over."""
        return [(name, 1) for name in self.curve_names] + [(TOTAL, self.dim)]

    def to_json(self):
        return {
            "name": self.name,
            "dim": self.dim,
            "intersection_form": self.intersection_form.tolist(),
            "curves": [c.tolist() for c in self.curve_generators],
            "curve_names": list(self.curve_names),
        }


def P2():
    return SurfaceLattice("P2", 2, [[1.0]], [[1.0]], ["line"])


def P1xP1():
    return SurfaceLattice("P1xP1", 2, [[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]],
                          ["ruling_1", "ruling_2"])


def P1():
    return SurfaceLattice("P1", 1, [[1.0]])


def HyperbolicCurve(genus):
    if genus < 2:
        raise ValueError("hyperbolic curves have genus >= 2")
    return SurfaceLattice(f"HyperbolicCurve({genus})", 1, [[1.0]])


def Torus(n=1, volume=1.0):
    """Rank-1 lattice spanned by a flat class ``h`` with ``h^n = volume``.

    For n >= 2 the complete-intersection curve ``h^(n-1)`` is the curve witness.
    """
    if n == 1:
        return SurfaceLattice("Torus", 1, [[volume]])
    return SurfaceLattice(f"Torus({n})", n, [[volume]], [[1.0]], ["h^(n-1)"])


def Custom(intersection_form, curves, names=(), dim=2):
    return SurfaceLattice("Custom", dim, intersection_form, curves, names)


def canonical_class(lattice, genus=None):
    """``2 pi c1(K_X)`` for the built-in lattices."""
    name = lattice.name
    if name == "P2":
        return CohomClass([-6.0 * math.pi], lattice)
    if name == "P1xP1":
        return CohomClass([-4.0 * math.pi, -4.0 * math.pi], lattice)
    if name == "P1":
        return CohomClass([-4.0 * math.pi], lattice)
    if name.startswith("HyperbolicCurve"):
        g = int(name[name.index("(") + 1:-1])
        return CohomClass([2.0 * math.pi * (2 * g - 2)], lattice)
    if name.startswith("Torus"):
        return CohomClass([0.0], lattice)
    raise ValueError(f"no built-in canonical class for lattice {name!r}")


@dataclass(frozen=True, eq=False)
class CohomClass:
    coords: np.ndarray
    lattice: SurfaceLattice

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1)
        if c.size != self.lattice.rank:
            raise DimensionMismatch(f"{c.size} coordinates for a rank-{self.lattice.rank} lattice")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def _check(self, other):
        if other.lattice is not self.lattice and other.lattice.to_json() != self.lattice.to_json():
            raise LatticeMismatch(f"{self.lattice.name} vs {other.lattice.name}")

    def __add__(self, other):
        self._check(other)
        return CohomClass(self.coords + other.coords, self.lattice)

    def __rmul__(self, s):
        return CohomClass(float(s) * self.coords, self.lattice)

    def is_zero(self, tol=ZERO_TOL):
        return bool(np.all(np.abs(self.coords) <= tol))

    def to_json(self):
        return {"lattice": self.lattice.name, "coords": [float(x) for x in self.coords]}


@dataclass(frozen=True)
class ConeVerdict:
    status: str
    witnesses: tuple  # (subvariety label, intersection number)
    lower_bounds: tuple = field(default=())  # (label, flow-derived bound), certify_limit only

    def to_json(self):
        out = {
            "status": self.status,
            "witnesses": [{"subvariety": s, "value": v} for s, v in self.witnesses],
        }
        if self.lower_bounds:
            out["lower_bounds"] = [{"subvariety": s, "bound": b} for s, b in self.lower_bounds]
        return out


def class_at_time(omega0, kclass, t):
    """``e^-t [omega0] + (1 - e^-t) 2 pi c1(K)``; ``t = inf`` gives the canonical class."""
    omega0._check(kclass)
    if math.isinf(t):
        return CohomClass(kclass.coords.copy(), kclass.lattice)
    s = math.exp(-t)
    return CohomClass(s * omega0.coords + (-math.expm1(-t)) * kclass.coords, omega0.lattice)


def intersection_number(classes, subvariety):
    """Integral over ``subvariety`` (a curve label/index or ``"X"``) of a product of classes."""
    classes = list(classes)
    if not classes:
        raise DimensionMismatch("need at least one class")
    lat = classes[0].lattice
    for c in classes[1:]:
        classes[0]._check(c)
    Q = lat.intersection_form
    if subvariety == TOTAL:
        if len(classes) != lat.dim:
            raise DimensionMismatch(f"X has dimension {lat.dim}, got {len(classes)} classes")
        if lat.dim == 2:
            return float(classes[0].coords @ Q @ classes[1].coords)
        return float(Q[0, 0] * math.prod(float(c.coords[0]) for c in classes))
    idx = lat.curve_names.index(subvariety) if isinstance(subvariety, str) else int(subvariety)
    if len(classes) != 1:
        raise DimensionMismatch("curves have dimension 1")
    return float(classes[0].coords @ Q @ lat.curve_generators[idx])


def _witnesses(cls, tol):
    lat = cls.lattice
    scale = max(1.0, float(np.abs(cls.coords).max()))
    qmax = float(np.abs(lat.intersection_form).max())
    out = []
    for label, d in lat.subvarieties():
        v = intersection_number([cls] * d, label)
        if abs(v) <= tol * qmax * scale**d:
            v = 0.0
        out.append((label, v))
    return tuple(out)


def _status(values):
    if all(v > 0 for v in values):
        return KAHLER
    if all(v >= 0 for v in values):
        return NEF_BOUNDARY
    return OUTSIDE


def is_kahler(cls, tol=ZERO_TOL):
    """Finite Nakai-type test: positive on every curve generator and on X.

    Values within ``tol`` (relative) of zero are reported as exactly zero.
    """
    w = _witnesses(cls, tol)
    return ConeVerdict(_status([v for _, v in w]), w)


def is_nef(cls, tol=ZERO_TOL):
    return is_kahler(cls, tol).status != OUTSIDE


def _first_quadratic_root(A, K, Q):
    # q(u) = (A + u D)^T Q (A + u D), q(0) > 0; smallest root in (0, 1)
    D = K - A
    c0 = float(A @ Q @ A)
    c1 = 2.0 * float(A @ Q @ D)
    c2 = float(D @ Q @ D)
    roots = []
    if abs(c0 + c1 + c2) <= ZERO_TOL * (abs(c0) + abs(c1) + abs(c2)):
        # u = 1 is a root (K^2 = 0); deflate it so round-off cannot pull it below 1
        if c2 != 0.0:
            roots.append(c0 / c2)
    elif c2 == 0.0:
        if c1 != 0.0:
            roots.append(-c0 / c1)
    else:
        disc = c1 * c1 - 4.0 * c2 * c0
        if abs(disc) <= 1e-12 * (c1 * c1 + abs(4.0 * c2 * c0)):
            # double root; sqrt would amplify the round-off in disc
            roots.append(-c1 / (2.0 * c2))
        elif disc > 0.0:
            sq = math.sqrt(disc)
            qq = -0.5 * (c1 + math.copysign(sq, c1))
            if qq != 0.0:
                roots += [qq / c2, c0 / qq]
            else:
                roots.append(0.0)
    good = [r for r in roots if 0.0 < r < 1.0]
    return min(good) if good else math.inf


def maximal_time(omega0, kclass, lattice=None):
    """Exit time of ``alpha_t`` from the Kahler cone; ``inf`` iff ``kclass`` is nef.

    Each defining inequality is linear (curves) or quadratic (self-intersection
    on surfaces) in ``u = 1 - e^-t`` and is solved in closed form.
    """
    omega0._check(kclass)
    if lattice is not None and lattice.to_json() != omega0.lattice.to_json():
        raise LatticeMismatch("lattice does not match the classes")
    if is_kahler(omega0).status != KAHLER:
        raise InitialClassNotKahler(f"[omega0] = {omega0.coords.tolist()} is not Kahler")
    if is_nef(kclass):
        # Kahler plus nef stays Kahler
        return math.inf
    lat = omega0.lattice
    A, K = omega0.coords, kclass.coords
    Q = lat.intersection_form
    # linear constraints: curve pairings, plus the degree when X is a curve or rank 1
    linear = [(float(A @ Q @ C), float(K @ Q @ C)) for C in lat.curve_generators]
    if lat.rank == 1:
        linear.append((float(Q[0, 0] * A[0]), float(Q[0, 0] * K[0])))
    # exit at u* = a/(a-k), i.e. t = log((a - k) / (-k))
    T = min((math.log((a - k) / (-k)) for a, k in linear if k < 0), default=math.inf)
    if lat.dim == 2 and lat.rank > 1:
        u = _first_quadratic_root(A, K, Q)
        if u < 1.0:
            T_quad = -math.log1p(-u)
            # a near-double root is only good to ~sqrt(eps); when it agrees with an
            # exact linear exit to that accuracy, keep the linear one
            if T_quad < T * (1.0 - QUAD_RTOL):
                T = T_quad
    return T


def certify_limit(omega0, kclass, T0, lower_bound=None, tol=1e-9):
    """Verdict on ``alpha_T0`` backed by the flow's lower bound ``omega_t >= omega_hat / C``.

    ``lower_bound = (C, omega_hat_class)`` gives, for every subvariety V, the
    requirement ``int_V alpha^dimV >= C^-dimV int_V omega_hat^dimV``; an
    undercut raises ``BoundViolated``. Without a bound only the verdict is returned.
    """
    alpha = class_at_time(omega0, kclass, T0)
    verdict = is_kahler(alpha)
    if lower_bound is None:
        return verdict
    C, hat = lower_bound
    alpha._check(hat)
    bounds = []
    for (label, value), (_, d) in zip(verdict.witnesses, alpha.lattice.subvarieties()):
        b = intersection_number([hat] * d, label) / C**d
        if value < b - tol * max(1.0, abs(b)):
            raise BoundViolated(f"int_{label} alpha = {value!r} undercuts the flow bound {b!r}")
        bounds.append((label, b))
    return ConeVerdict(verdict.status, verdict.witnesses, tuple(bounds))
