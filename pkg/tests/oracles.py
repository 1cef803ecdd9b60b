"""Reference implementations kept deliberately naive and separate from krflab.

Nothing here imports the package; each function recomputes a quantity from
its defining formula with explicit loops or an unrelated numpy route.
"""

import math

import numpy as np


def upper_metric(G):
    """``g^{i jbar}`` from ``sum_j g^{i jbar} g_{k jbar} = delta_ik``, row by row."""
    n = G.shape[0]
    H = np.zeros((n, n), dtype=complex)
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        # sum_j G[k, j] H[i, j] = delta_ik  ->  G @ H[i] = e_i
        H[i] = np.linalg.solve(G, e)
    return H


def bicontraction(G, R):
    H = upper_metric(G)
    n = G.shape[0]
    total = 0.0 + 0.0j
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    total += H[i, j] * H[k, l] * R[i, j, k, l]
    return total.real


def space_form(G, c):
    n = G.shape[0]
    R = np.zeros((n, n, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    R[i, j, k, l] = -0.5 * c * (G[i, j] * G[k, l] + G[i, l] * G[k, j])
    return R


def hsc(R, G, xi):
    n = G.shape[0]
    num = 0.0 + 0.0j
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    num += R[i, j, k, l] * xi[i] * np.conj(xi[j]) * xi[k] * np.conj(xi[l])
    den = sum(G[i, j] * xi[i] * np.conj(xi[j]) for i in range(n) for j in range(n))
    return (num / den**2).real


def hsc_values(R, G, xis):
    """Vectorized HSC over rows of ``xis`` (sampling oracle)."""
    num = np.einsum("ijkl,mi,mj,mk,ml->m", R, xis, xis.conj(), xis, xis.conj()).real
    den = np.einsum("ij,mi,mj->m", G, xis, xis.conj()).real
    return num / den**2


def sampled_hsc_sup(R, G, rng, samples=200_000):
    """Lower bound on sup HSC from dense random sampling."""
    n = G.shape[0]
    best = -math.inf
    for _ in range(samples // 20_000):
        xis = rng.standard_normal((20_000, n)) + 1j * rng.standard_normal((20_000, n))
        best = max(best, float(hsc_values(R, G, xis).max()))
    return best


def grid_hsc_sup_2d(R, G, m=400):
    """Sup over a dense (theta, phi) grid of directions ``(cos th, sin th e^{i phi})``."""
    th = np.linspace(0.0, 0.5 * np.pi, m)
    ph = np.linspace(0.0, 2.0 * np.pi, 2 * m, endpoint=False)
    T, P = np.meshgrid(th, ph, indexing="ij")
    xis = np.stack([np.cos(T).ravel() + 0j, np.sin(T).ravel() * np.exp(1j * P.ravel())], axis=1)
    return float(hsc_values(R, G, xis).max())


def random_hermitian_pd(rng, n):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return X @ X.conj().T + 0.5 * np.eye(n)


def exact_scale(rho, f0, t):
    return -rho + (f0 + rho) * math.exp(-t)


def fd_derivative(times, values, center):
    """d/dt at ``times[center]`` of the interpolating polynomial (numpy polyfit)."""
    x = np.asarray(times, dtype=float) - times[center]
    scale = max(abs(x).max(), 1e-300)
    p = np.polyfit(x / scale, np.asarray(values, dtype=float), len(x) - 1)
    return np.polyder(p)[-1] / scale


def p1_singular_time(f0):
    # (f0 + 2) e^-T = 2
    return math.log((f0 + 2.0) / 2.0)


def p1_cohomological_time(a):
    # e^-T a - (1 - e^-T) 4 pi = 0
    return math.log((a + 4.0 * math.pi) / (4.0 * math.pi))
