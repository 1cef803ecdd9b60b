"""Pure-numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` call for call; ``krflab.kernels`` picks one of
the two at import time. Grids are periodic N x N arrays on [0, 1)^2 with
spacing h, and the complex Hessian is ``phi_zzbar = (phi_xx + phi_yy) / 4``.

The grid kernels take the relative potential ``psi = phi - (1 - t - e^-t)``,
i.e. the potential minus the exact homogeneous solution. It obeys

    d psi / dt = log1p(e^t psi_zzbar / gflat) - psi,

and stays small, which keeps round-off out of the stiff stencil.
"""

import numpy as np

BACKEND = "python"


def hsc_ascent(Q, eta, iters, alpha, tol):
    """Shifted power ascent of ``Q(eta, eta~, eta, eta~)`` on the unit sphere.

    ``eta`` has shape (m, n), one unit starting vector per row, and is
    overwritten with the final iterates. ``alpha`` is a shift large enough
    to guarantee ascent; each restart starts at ``alpha / 8`` and doubles the
    shift (up to ``alpha``) whenever a step would lower the value. Returns the final
    values, shape (m,).
    """
    m, n = eta.shape
    # w_b = sum_{a,c,d} Q_abcd eta_a eta_c conj(eta_d): one matmul per sweep
    Q2 = np.ascontiguousarray(Q.transpose(0, 2, 1, 3)).reshape(n * n, n * n)

    def sweep(e):
        pairs = (e[:, :, None] * e[:, None, :]).reshape(len(e), n * n)
        w = np.einsum("mbd,md->mb", (pairs @ Q2).reshape(len(e), n, n), e.conj())
        return w, np.einsum("mb,mb->m", e.conj(), w).real

    w, f = sweep(eta)
    shift = np.full(m, alpha / 8.0)
    active = np.ones(m, dtype=bool)
    for _ in range(iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        cand = w[idx] + shift[idx, None] * eta[idx]
        cand /= np.linalg.norm(cand, axis=1)[:, None]
        wc, fc = sweep(cand)
        worse = (fc < f[idx]) & (shift[idx] < alpha)
        shift[idx[worse]] *= 2.0
        ok = ~worse
        acc = idx[ok]
        done = np.abs(fc[ok] - f[acc]) <= tol * (1.0 + np.abs(fc[ok]))
        eta[acc] = cand[ok]
        w[acc] = wc[ok]
        f[acc] = fc[ok]
        active[acc[done]] = False
    return f


def _zzbar(phi, h):
    lap = (
        np.roll(phi, 1, axis=0)
        + np.roll(phi, -1, axis=0)
        + np.roll(phi, 1, axis=1)
        + np.roll(phi, -1, axis=1)
        - 4.0 * phi
    )
    return lap / (4.0 * h * h)


def grid_metric(psi, t, h, gflat):
    """Metric coefficient ``gflat * e^-t + psi_zzbar`` at every node."""
    return gflat * np.exp(-t) + _zzbar(psi, h)


def grid_velocity(psi, t, h, gflat):
    """Velocity of the relative potential and the minimum metric coefficient."""
    r = _zzbar(psi, h) * (np.exp(t) / gflat)
    rmin = float(r.min())
    gmin = gflat * np.exp(-t) * (1.0 + rmin)
    if not rmin > -1.0:
        return np.full_like(psi, np.nan), gmin
    return np.log1p(r) - psi, gmin


def grid_rk4_step(psi, t, dt, h, gflat):
    """One classical RK4 step; returns the new grid and the min metric over stages."""
    k1, m1 = grid_velocity(psi, t, h, gflat)
    k2, m2 = grid_velocity(psi + 0.5 * dt * k1, t + 0.5 * dt, h, gflat)
    k3, m3 = grid_velocity(psi + 0.5 * dt * k2, t + 0.5 * dt, h, gflat)
    k4, m4 = grid_velocity(psi + dt * k3, t + dt, h, gflat)
    out = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return out, min(m1, m2, m3, m4)


def grid_schwarz_extrema(g_window, weights, center, u_center, h, rhs):
    """Max and min over nodes of ``d_t u - u_zzbar / g - rhs`` with ``u = log(gflat / g)``.

    ``u_center`` may be offset by a constant (only its stencil enters).

    ``g_window`` stacks metric fields at nearby times and ``weights`` is the
    finite-difference stencil for d/dt at slot ``center``; ``d_t u = -d_t g / g``.
    """
    g = g_window[center]
    dg = np.tensordot(weights, g_window, axes=1)
    res = -(dg + _zzbar(u_center, h)) / g - rhs
    return float(res.max()), float(res.min())


def grid_fields(psi, t, h, gflat, g_out, u_out):
    """Fill ``g_out`` with the metric and ``u_out`` with ``log(gflat / g) - t``.

    Returns ``(min g, max g)``; ``u_out`` is meaningless if some ``g <= 0``.
    """
    base = gflat * np.exp(-t)
    r = _zzbar(psi, h) / base
    g_out[...] = base * (1.0 + r)
    if r.min() > -1.0:
        u_out[...] = -np.log1p(r)
    return base * (1.0 + float(r.min())), base * (1.0 + float(r.max()))
