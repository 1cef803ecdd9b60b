import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krflab import _kernels_py as py
from krflab import kernels
from krflab.tensor_core import random_kahler_tensor

compiled = pytest.importorskip("krflab._ckernels")

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def smooth_field(seed, N, amp):
    rng = np.random.default_rng(seed)
    x = np.arange(N) / N
    X, Y = np.meshgrid(x, x, indexing="ij")
    field = np.zeros((N, N))
    for kx, ky in rng.integers(-2, 3, size=(3, 2)):
        field += rng.standard_normal() * np.cos(2 * np.pi * (kx * X + ky * Y) + rng.uniform(0, 6.3))
    return amp * field / max(1.0, np.abs(field).max())


def test_default_backend_is_compiled():
    assert kernels.BACKEND == "cython"


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([8, 16, 33]), st.floats(min_value=0, max_value=5))
def test_grid_kernels_agree(seed, N, t):
    h = 1.0 / N
    psi = smooth_field(seed, N, 1e-3)
    assert np.allclose(compiled.grid_metric(psi, t, h, 1.3), py.grid_metric(psi, t, h, 1.3),
                       rtol=1e-13, atol=1e-13)
    vc, mc = compiled.grid_velocity(psi, t, h, 1.3)
    vp, mp = py.grid_velocity(psi, t, h, 1.3)
    assert mc == pytest.approx(mp, rel=1e-13)
    assert np.allclose(vc, vp, rtol=1e-12, atol=1e-14, equal_nan=True)
    sc, sm = compiled.grid_rk4_step(psi, t, 1e-4, h, 1.3)
    sp, spm = py.grid_rk4_step(psi, t, 1e-4, h, 1.3)
    assert (sm > 0) == (spm > 0)
    if spm > 0:
        # fields of a degenerate step are unspecified
        assert np.allclose(sc, sp, rtol=1e-13, atol=1e-16)
        assert sm == pytest.approx(spm, rel=1e-13)


@settings(max_examples=20, deadline=None)
@given(seeds, st.sampled_from([8, 16]))
def test_fields_and_schwarz_agree(seed, N):
    h, t = 1.0 / N, 0.4
    psi = smooth_field(seed, N, 1e-3)
    out = [np.empty((N, N)) for _ in range(4)]
    rc = compiled.grid_fields(psi, t, h, 1.0, out[0], out[1])
    rp = py.grid_fields(psi, t, h, 1.0, out[2], out[3])
    assert np.allclose(rc, rp, rtol=1e-13)
    assert np.allclose(out[0], out[2], rtol=1e-13)
    assert np.allclose(out[1], out[3], rtol=1e-12, atol=1e-14)
    rng = np.random.default_rng(seed)
    window = np.ascontiguousarray(1.0 + 0.01 * rng.standard_normal((5, N, N)))
    w = rng.standard_normal(5)
    ec = compiled.grid_schwarz_extrema(window, w, 2, out[1], h, 1.0)
    ep = py.grid_schwarz_extrema(window, w, 2, out[1], h, 1.0)
    assert np.allclose(ec, ep, rtol=1e-12, atol=1e-12)


def test_velocity_flags_degenerate_metric():
    N = 8
    psi = np.zeros((N, N))
    psi[0, 0] = 1.0
    for impl in (compiled, py):
        v, gmin = impl.grid_velocity(psi, 0.0, 1.0 / N, 1.0)
        assert gmin < 0 and np.isnan(v).all()


def test_hsc_ascent_agrees():
    rng = np.random.default_rng(4)
    for n in (1, 2, 3):
        Q = np.ascontiguousarray(random_kahler_tensor(rng, n).entries)
        eta = rng.standard_normal((16, n)) + 1j * rng.standard_normal((16, n))
        eta /= np.linalg.norm(eta, axis=1)[:, None]
        a, b = eta.copy(), eta.copy()
        fa = compiled.hsc_ascent(Q, a, 200, 8.0, 1e-14)
        fb = py.hsc_ascent(Q, b, 200, 8.0, 1e-14)
        assert np.allclose(fa, fb, rtol=1e-9, atol=1e-9)


def test_pure_python_fallback_runs_end_to_end():
    code = (
        "from krflab import kernels, flow_engine as fe, geometry_models as gm\n"
        "assert kernels.BACKEND == 'python', kernels.BACKEND\n"
        "phi = gm.cosine_potential(16, 0.005)\n"
        "tr = fe.run(gm.TorusGrid(16), {'phi0': phi}, 0.2, 1e-3)\n"
        "print(repr(float(tr.min_metric[-1])))\n"
    )
    env = dict(os.environ, KRFLAB_PURE_PYTHON="1")
    proc = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    from krflab import flow_engine as fe
    from krflab import geometry_models as gm
    tr = fe.run(gm.TorusGrid(16), {"phi0": gm.cosine_potential(16, 0.005)}, 0.2, 1e-3)
    assert float(proc.stdout) == pytest.approx(float(tr.min_metric[-1]), rel=1e-12)
