"""Pointwise Kahler algebra: metrics, traces, curvature tensors, HSC.

Conventions
-----------
A metric ``g`` is stored as the Hermitian matrix ``G[i, j] = g_{i jbar}``; the
length of a (1,0)-vector is ``|xi|_g^2 = g_{i jbar} xi^i conj(xi^j)``.

Curvature is stored as ``R[i, j, k, l] = R_{i jbar k lbar}``: holomorphic slots
0 and 2, anti-holomorphic slots 1 and 3. The Kahler symmetries are
``R[i,j,k,l] = R[k,j,i,l] = R[i,l,k,j]`` and reality is
``R[i,j,k,l] = conj(R[j,i,l,k])``.

Holomorphic sectional curvature is ``H(xi) = R(xi, xi~, xi, xi~) / |xi|^4``.
Under this sign convention the space form

    R_{i jbar k lbar} = -(c/2) (g_{i jbar} g_{k lbar} + g_{i lbar} g_{k jbar})

has ``H = -c``, so hyperbolic metrics (c > 0) have negative HSC and the Ricci
form ``Ric_{k lbar} = g^{i jbar} R_{i jbar k lbar}`` equals ``-(c/2)(n+1) g``.

Inverse-metric contractions use ``g^{i jbar}`` defined by
``g^{i jbar} g_{k jbar} = delta^i_k``, i.e. the array ``inv(G).T``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch, NonPositiveDefinite, SymmetryViolation, ZeroVector

SYMMETRY_TOL = 1e-10


def _as_complex(a, ndim):
    arr = np.array(a, dtype=np.complex128)
    if arr.ndim == 0 and ndim == 2:
        arr = arr.reshape(1, 1)
    if arr.ndim != ndim or len(set(arr.shape)) != 1:
        raise DimensionMismatch(f"expected a square rank-{ndim} array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class HermitianForm:
    """Positive-definite Hermitian matrix ``g_{i jbar}`` of a Kahler metric at a point."""

    entries: np.ndarray

    def __post_init__(self):
        G = _as_complex(self.entries, 2)
        scale = max(1.0, float(np.abs(G).max()))
        if np.abs(G - G.conj().T).max() > SYMMETRY_TOL * scale:
            raise SymmetryViolation("metric matrix is not Hermitian")
        G = 0.5 * (G + G.conj().T)
        if not np.all(np.isfinite(G)):
            raise NonPositiveDefinite("metric has non-finite entries")
        lo = float(np.linalg.eigvalsh(G)[0])
        if not lo > 0.0:
            raise NonPositiveDefinite(f"smallest eigenvalue {lo!r} is not positive")
        G.setflags(write=False)
        object.__setattr__(self, "entries", G)

    @property
    def dim(self):
        return self.entries.shape[0]

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n))

    @classmethod
    def diag(cls, values):
        return cls(np.diag(np.asarray(values, dtype=float)))

    @classmethod
    def random(cls, rng, n, spread=1.0):
        """Random metric with eigenvalues in ``[e^-spread, e^spread]``."""
        X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        U, _ = np.linalg.qr(X)
        lam = np.exp(rng.uniform(-spread, spread, size=n))
        return cls((U * lam) @ U.conj().T)

    def scaled(self, f):
        return HermitianForm(f * self.entries)

    def eigenvalues_against(self, other):
        """Eigenvalues of ``other^-1 self`` (real, positive)."""
        _check_dims(self, other)
        return np.sort(np.linalg.eigvals(np.linalg.solve(other.entries, self.entries)).real)

    def to_json(self):
        return {"dim": self.dim, "entries": _flatten_complex(self.entries)}

    @classmethod
    def from_json(cls, data):
        n = int(data["dim"])
        return cls(_unflatten_complex(data["entries"], (n, n)))


@dataclass(frozen=True, eq=False)
class KahlerCurvature:
    """Curvature tensor ``R_{i jbar k lbar}`` with the Kahler symmetries.

    Inputs within ``SYMMETRY_TOL`` of symmetric are projected onto the
    symmetric subspace; anything further off raises ``SymmetryViolation``.
    """

    entries: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        R = _as_complex(self.entries, 4)
        S = symmetrize(R)
        if self.validate:
            scale = max(1.0, float(np.abs(R).max()))
            err = float(np.abs(R - S).max())
            if err > SYMMETRY_TOL * scale:
                raise SymmetryViolation(f"curvature tensor breaks Kahler symmetry by {err:.3e}")
        S.setflags(write=False)
        object.__setattr__(self, "entries", S)

    @property
    def dim(self):
        return self.entries.shape[0]

    @classmethod
    def zero(cls, n):
        return cls(np.zeros((n, n, n, n), dtype=np.complex128))

    def __add__(self, other):
        _check_dims(self, other)
        return KahlerCurvature(self.entries + other.entries)

    def __mul__(self, s):
        return KahlerCurvature(float(s) * self.entries)

    __rmul__ = __mul__

    def symmetry_defect(self):
        R = self.entries
        return max(
            float(np.abs(R - R.transpose(2, 1, 0, 3)).max()),
            float(np.abs(R - R.transpose(0, 3, 2, 1)).max()),
            float(np.abs(R - R.transpose(1, 0, 3, 2).conj()).max()),
        )

    def to_json(self):
        return {"dim": self.dim, "entries": _flatten_complex(self.entries)}

    @classmethod
    def from_json(cls, data):
        n = int(data["dim"])
        return cls(_unflatten_complex(data["entries"], (n, n, n, n)))


def symmetrize(R):
    """Average a rank-4 array over the order-8 Kahler symmetry group."""
    R = 0.5 * (R + R.transpose(2, 1, 0, 3))
    R = 0.5 * (R + R.transpose(0, 3, 2, 1))
    return 0.5 * (R + R.transpose(1, 0, 3, 2).conj())


def _flatten_complex(a):
    return [[float(z.real), float(z.imag)] for z in np.asarray(a).ravel()]


def _unflatten_complex(pairs, shape):
    arr = np.asarray(pairs, dtype=float)
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(shape)


def _check_dims(a, b):
    if a.dim != b.dim:
        raise DimensionMismatch(f"dimension {a.dim} != {b.dim}")


def upper(g):
    """The array ``g^{i jbar}`` used in contractions."""
    return np.linalg.inv(g.entries).T


def inverse(g, tol=1e-14):
    """Matrix inverse of ``g``; raises ``NonPositiveDefinite`` if ill-posed."""
    lam = np.linalg.eigvalsh(g.entries)
    if lam[0] <= tol * max(1.0, abs(lam[-1])):
        raise NonPositiveDefinite(f"smallest eigenvalue {lam[0]!r} at or below tolerance")
    return HermitianForm(np.linalg.inv(g.entries))


def trace_ratio(omega, omega_hat):
    """``tr_omega(omega_hat) = g^{i jbar} ghat_{i jbar}``, the trace of ``G^-1 Ghat``."""
    _check_dims(omega, omega_hat)
    return float(np.trace(np.linalg.solve(omega.entries, omega_hat.entries)).real)


def hsc(R, g, xi):
    """Holomorphic sectional curvature of ``R`` at ``xi`` measured with ``g``."""
    xi = np.asarray(xi, dtype=np.complex128)
    if xi.shape != (g.dim,) or R.dim != g.dim:
        raise DimensionMismatch("xi, R and g must share the dimension")
    if not np.any(xi):
        raise ZeroVector("HSC is undefined at the zero vector")
    num = np.einsum("ijkl,i,j,k,l->", R.entries, xi, xi.conj(), xi, xi.conj()).real
    den = (xi @ g.entries @ xi.conj()).real
    return float(num / den**2)


def bicontraction(omega, R_hat):
    """``g^{i jbar} g^{k lbar} Rhat_{i jbar k lbar}`` for the metric ``omega``."""
    _check_dims(omega, R_hat)
    up = upper(omega)
    return float(np.einsum("ij,kl,ijkl->", up, up, R_hat.entries).real)


def bicontraction_constant_hsc(omega, omega_hat, c):
    """Closed form of the bicontraction when ``R_hat`` is the space form of ``omega_hat``.

    With ``A = G^-1 Ghat`` the contraction is ``-(c/2)((tr A)^2 + tr A^2)``,
    evaluated through the eigenvalues of ``A``.
    """
    lam = omega_hat.eigenvalues_against(omega)
    return float(-0.5 * c * (lam.sum() ** 2 + (lam**2).sum()))


def constant_hsc_tensor(g, c):
    """Space-form tensor with ``H = -c`` in every direction."""
    G = g.entries
    R = np.einsum("ij,kl->ijkl", G, G) + np.einsum("il,kj->ijkl", G, G)
    return KahlerCurvature(-0.5 * c * R)


def random_kahler_tensor(rng, n):
    """Random tensor with the Kahler symmetries (complex Gaussian, then averaged)."""
    shape = (n, n, n, n)
    X = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return KahlerCurvature(symmetrize(X), validate=False)


@dataclass(frozen=True)
class HscBudget:
    """Sampler settings for ``hsc_sup``.

    All ``restarts`` ascend until the value stalls at ``coarse_tol``; the best
    ``refine`` of them are then polished to ``tol``.
    """

    restarts: int = 64
    iterations: int = 500
    tol: float = 1e-14
    coarse_tol: float = 1e-8
    refine: int = 4
    seed: int = 0


def orthonormal_frame_tensor(R, g):
    """``R`` rewritten in a ``g``-unitary frame, so that ``|xi|_g = |eta|``."""
    L = np.linalg.cholesky(g.entries)
    M = np.linalg.inv(L).T
    return change_frame(R.entries, M)


def change_frame(T, M):
    """``T'_{abcd} = T_{ijkl} M_ia conj(M_jb) M_kc conj(M_ld)``."""
    n = M.shape[0]
    Mt, Mh = M.T, M.conj().T
    X = T
    # contract the leading axis, then rotate it to the back
    for A in (Mt, Mh, Mt, Mh):
        X = (A @ X.reshape(n, -1)).reshape(n, -1).T
    return X.reshape(n, n, n, n)


def _sphere_tensor(n):
    eye = np.eye(n)
    return 0.5 * (np.einsum("ab,cd->abcd", eye, eye) + np.einsum("ad,cb->abcd", eye, eye))


def hsc_sup(R, g, budget=None):
    """Largest HSC found by multi-start projected ascent on the unit sphere.

    Every returned value is attained at an actual vector, so it is a lower
    bound on the true supremum; with the default budget the two agree to
    round-off on the small dimensions used here.
    """
    budget = budget or HscBudget()
    _check_dims(R, g)
    n = g.dim
    if n == 1:
        return float(R.entries[0, 0, 0, 0].real / g.entries[0, 0].real ** 2)
    Rp = orthonormal_frame_tensor(R, g)
    S = _sphere_tensor(n)
    # split off the constant-HSC part; it is constant on the sphere
    mean = float(np.vdot(S, Rp).real / np.vdot(S, S).real)
    Q = np.ascontiguousarray(Rp - mean * S, dtype=np.complex128)
    qnorm = float(np.linalg.norm(Q))
    if qnorm <= 1e-15 * max(1.0, abs(mean)):
        return mean
    rng = np.random.default_rng(budget.seed)
    eta = rng.standard_normal((budget.restarts, n)) + 1j * rng.standard_normal((budget.restarts, n))
    eta /= np.linalg.norm(eta, axis=1)[:, None]
    eta = np.ascontiguousarray(eta)
    # 3 |Q|_F bounds the Hessian of Q on the sphere, so that shift always ascends
    alpha = 3.0 * qnorm
    vals = kernels.hsc_ascent(Q, eta, budget.iterations, alpha, budget.coarse_tol)
    top = np.argsort(vals)[-budget.refine:]
    best = np.ascontiguousarray(eta[top])
    polished = kernels.hsc_ascent(Q, best, 4 * budget.iterations, alpha, budget.tol)
    return mean + float(max(polished.max(), vals.max()))
