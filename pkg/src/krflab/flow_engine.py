"""Time integration of the normalized Kahler-Ricci flow with estimate monitors.

Homogeneous models integrate the scale ODE ``f' = -rho - f``; the torus grid
integrates the potential equation node-wise. Both use classical RK4 with step
halving when a step changes the smallest metric coefficient by more than 10%,
and a finite-time singularity is located by bisecting the failing step.

Explicit RK4 on the grid is stable only for ``dt`` below the stencil limit
``2.785 / (2 / (h^2 g_min) + 1)``, so grid steps are additionally capped there.

Monitors run on every accepted step:

* trace bound, nef form ``tr <= e^t max tr_0`` or ample form ``tr <= C``,
  together with the lower half ``omega_t >= omega_hat / C`` of the sandwich;
* the parabolic Schwarz inequality, left side by 5-point finite differences
  in time (``d_t log tr = -d_t g / g``) and the flow's own stencil in space;
* the volume ratio and the running sandwich constants ``C``, ``C'``;
* the Kahler-Einstein residual ``|f - 1|`` on hyperbolic models.
"""

import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import MonitorViolation, NegativeKappa, PositivityLost
from .geometry_models import (
    DEGENERATION_RATIO,
    HYPERBOLIC,
    FlowState,
    from_relative,
    initial_state,
    to_relative,
)
from .tensor_core import bicontraction, trace_ratio

TEST = "test"
EXPLORE = "explore"
REACHED_T_END = "ReachedTEnd"
SINGULAR_AT = "SingularAt"

MAX_RELATIVE_CHANGE = 0.1
MAX_HALVINGS = 50
# real-axis stability limit of classical RK4
RK4_STABILITY = 2.785
CFL_SAFETY = 0.9
BISECTION_STEPS = 80
FD_POINTS = 5
# C growing by this factor over a run counts as degeneration
DEGENERATION_GROWTH = 1e6


class MonitorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MonitorConfig:
    """Monitor switches and tolerances.

    ``trace_rtol=None`` means 1e-9 on homogeneous models and 1e-6 on the grid.
    The Schwarz tolerance is ``(a dt^2 + b h^2 + floor) max(1, |rhs|)`` with
    ``dt`` the widest step inside the finite-difference window.
    """

    trace: bool = True
    schwarz: bool = True
    volume: bool = True
    trace_rtol: float = None
    sandwich_rtol: float = 1e-9
    schwarz_dt_coeff: float = 1.0
    schwarz_h_coeff: float = 1.0
    schwarz_floor: float = 1e-8
    volume_ceiling: float = 1e6
    kappa: float = None  # None: the model's own
    T0: float = None  # nef horizon, None: final time

    def trace_tolerance(self, model):
        if self.trace_rtol is not None:
            return self.trace_rtol
        return 1e-9 if model.homogeneous else 1e-6


@dataclass(frozen=True)
class Termination:
    kind: str
    t: float = None

    def __str__(self):
        return self.kind if self.kind == REACHED_T_END else f"{self.kind}({self.t!r})"


@dataclass(frozen=True)
class EstimateReport:
    t: float
    trace: float
    trace_bound: float
    schwarz_residual: float
    volume_ratio_max: float
    ke_residual: float
    sandwich_low: float
    sandwich_high: float
    all_pass: bool


REPORT_FIELDS = tuple(EstimateReport.__dataclass_fields__)


class ReportTable(Sequence):
    """Column store of EstimateReports, one row per accepted step."""

    def __init__(self, columns):
        self.columns = {k: np.asarray(columns[k]) for k in REPORT_FIELDS}

    def __len__(self):
        return len(self.columns["t"])

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        row = {k: v[i].item() for k, v in self.columns.items()}
        return EstimateReport(**row)


@dataclass(frozen=True)
class MonitorResult:
    name: str
    margins: np.ndarray  # >= -tolerance where the inequality holds
    tolerance: np.ndarray
    bound: np.ndarray = None
    constant: float = None
    sandwich_margins: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self):
        ok = self.margins >= -self.tolerance
        if self.sandwich_margins is not None:
            ok = ok & (self.sandwich_margins >= -self.extra.get("sandwich_tol", 0.0))
        return ok | np.isnan(self.margins)

    @property
    def passed(self):
        return bool(np.all(self.ok))

    def first_violation(self):
        bad = np.flatnonzero(~self.ok)
        return None if bad.size == 0 else int(bad[0])


class _ScaleStates(Sequence):
    """Homogeneous states materialized on demand from the sampled scales."""

    def __init__(self, model, times, scales):
        self._model, self._t, self._f = model, times, scales

    def __len__(self):
        return len(self._t)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        return FlowState(float(self._t[i]), self._model, float(self._f[i]))


@dataclass(eq=False)
class Trajectory:
    """Samples of a run, one entry per accepted step.

    ``min_metric``/``max_metric`` are extreme eigenvalues of ``omega_t``
    relative to ``omega_hat`` over the manifold, ``max_trace`` is the max of
    ``tr_{omega_t} omega_hat`` and ``volume`` the max of ``omega_t^n / omega_hat^n``.
    Homogeneous runs keep every state; grid runs keep states at ``state_steps``.
    """

    model: object
    dt: float
    times: np.ndarray
    min_metric: np.ndarray
    max_metric: np.ndarray
    max_trace: np.ndarray
    volume: np.ndarray
    termination: Termination
    recorded: list = None
    state_steps: np.ndarray = None
    grid_schwarz: tuple = None  # (max, min) residual per step
    reports: ReportTable = None
    monitors: dict = field(default_factory=dict)

    @property
    def scale(self):
        return self.min_metric

    @property
    def states(self):
        if self.model.homogeneous:
            return _ScaleStates(self.model, self.times, self.min_metric)
        return self.recorded

    def state_reports(self):
        """Reports aligned with ``states``."""
        if self.model.homogeneous:
            return self.reports
        return [self.reports[int(k)] for k in self.state_steps]

    @property
    def final_time(self):
        return float(self.times[-1])


# ---------------------------------------------------------------- stepping


def _rk4_scale(f, h, rho):
    k1 = -rho - f
    k2 = -rho - (f + 0.5 * h * k1)
    k3 = -rho - (f + 0.5 * h * k2)
    k4 = -rho - (f + h * k3)
    return f + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _scale_step(f, t, h, rho, floor):
    out = _rk4_scale(f, h, rho)
    if not (out > floor and math.isfinite(out)):
        raise PositivityLost(f"scale {out:.3e} at t = {t + h!r}", t=t + h)
    return out


def _grid_step(model, psi, t, h, floor, g_out, u_out):
    new, stage_min = kernels.grid_rk4_step(psi, t, h, model.spacing, model.g_flat)
    if not stage_min > 0:
        raise PositivityLost(f"metric degenerated inside the step at t = {t!r}", t=t + h)
    gmin, gmax = kernels.grid_fields(new, t + h, model.spacing, model.g_flat, g_out, u_out)
    if not (gmin > floor * model.g_flat and math.isfinite(gmax)):
        raise PositivityLost(f"min metric {gmin:.3e} at t = {t + h!r}", t=t + h)
    return new, gmin, gmax


def step(state, dt, floor=0.0):
    """One RK4 step; ``PositivityLost`` if the min metric ends at or below ``floor``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    model = state.model
    if model.homogeneous:
        return FlowState(state.t + dt, model,
                         _scale_step(state.data, state.t, dt, model.ricci_constant, floor))
    N = model.resolution
    g, u = np.empty((N, N)), np.empty((N, N))
    new, _, _ = _grid_step(model, to_relative(state.data, state.t), state.t, dt, floor, g, u)
    return FlowState(state.t + dt, model, from_relative(new, state.t + dt))


def grid_stable_dt(model, gmin):
    """Largest RK4 step inside the stability region for a min coefficient ``gmin``."""
    h = model.spacing
    return CFL_SAFETY * RK4_STABILITY / (2.0 / (h * h * gmin) + 1.0)


def _step_size(dt_cur, remaining, cap=math.inf):
    h = min(dt_cur, cap)
    # split the tail evenly instead of leaving a sliver step
    n = math.ceil(remaining / h * (1.0 - 1e-9))
    return remaining / n if n <= 2 else h


def _exact_increment(t, h):
    # step by what the stored times will record, so samples and times agree
    return (t + h) - t


# ------------------------------------------------------- finite differences


def _window_starts(count, points=FD_POINTS):
    k = np.arange(count)
    K = min(points, count)
    return np.clip(k - K // 2, 0, count - K), K


def derivative_weights(x, center):
    """Weights of d/dx at ``x[center]`` of the interpolant through the nodes ``x``.

    Vectorized over leading axes: ``x`` has shape (..., K), ``center`` (...).
    """
    x = np.asarray(x, dtype=float)
    center = np.asarray(center)
    K = x.shape[-1]
    xc = np.take_along_axis(x, center[..., None], axis=-1)
    d = x - xc
    W = np.zeros_like(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j in range(K):
            prod = np.ones(x.shape[:-1])
            for m in range(K):
                if m != j:
                    term = -d[..., m] / (d[..., j] - d[..., m])
                    prod = prod * np.where(center == m, 1.0, term)
            W[..., j] = np.where(center == j, 0.0, prod / d[..., j])
    np.put_along_axis(W, center[..., None], -W.sum(axis=-1, keepdims=True), axis=-1)
    return W


def _weights_scalar(xs, c):
    # pure-Python twin of derivative_weights for the streaming grid monitor
    xc = xs[c]
    d = [x - xc for x in xs]
    w = [0.0] * len(xs)
    for j, dj in enumerate(d):
        if j == c:
            continue
        p = 1.0 / dj
        for m, dm in enumerate(d):
            if m != j and m != c:
                p *= -dm / (dj - dm)
        w[j] = p
    w[c] = -sum(w)
    return w


def time_derivative(times, values):
    """d/dt of sampled values: centered 5-point stencils inside, one-sided at the ends."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    S = len(times)
    if S < 3:
        raise ValueError("need at least 3 samples")
    starts, K = _window_starts(S)
    idx = starts[:, None] + np.arange(K)
    W = derivative_weights(times[idx], np.arange(S) - starts)
    return np.einsum("sk,sk->s", W, values[idx])


def window_spacing(times):
    """Widest step inside each sample's finite-difference window."""
    times = np.asarray(times, dtype=float)
    S = len(times)
    if S < 2:
        return np.zeros(S)
    starts, K = _window_starts(S)
    gaps = np.diff(times)
    idx = starts[:, None] + np.arange(K - 1)
    return gaps[idx].max(axis=1)


class _GridSchwarzStream:
    """Node-wise Schwarz residuals over a rolling window of metric fields."""

    def __init__(self, model, rhs):
        N = model.resolution
        self.model, self.rhs = model, rhs
        self.G = np.empty((FD_POINTS, N, N))
        self.U = np.empty((FD_POINTS, N, N))
        self.times = []
        self.rmax, self.rmin = [], []

    def slots(self, k):
        s = k % FD_POINTS
        return self.G[s], self.U[s]

    def _evaluate(self, first, count, center):
        idx = list(range(first, first + count))
        w = _weights_scalar([self.times[i] for i in idx], center - first)
        ws = np.zeros(FD_POINTS)
        for i, wi in zip(idx, w):
            ws[i % FD_POINTS] = wi
        c = center % FD_POINTS
        hi, lo = kernels.grid_schwarz_extrema(self.G, ws, c, self.U[c], self.model.spacing, self.rhs)
        self.rmax[center], self.rmin[center] = hi, lo

    def push(self, t):
        """Register the fields just written to ``slots(k)`` for state ``k``."""
        self.times.append(t)
        self.rmax.append(math.nan)
        self.rmin.append(math.nan)
        k = len(self.times) - 1
        if k == FD_POINTS - 1:
            for c in range(FD_POINTS // 2 + 1):
                self._evaluate(0, FD_POINTS, c)
        elif k >= FD_POINTS:
            self._evaluate(k - FD_POINTS + 1, FD_POINTS, k - FD_POINTS // 2)

    def finish(self):
        S = len(self.times)
        if S < 3:
            return
        if S < FD_POINTS:
            for c in range(S):
                self._evaluate(0, S, c)
        else:
            for c in range(S - FD_POINTS // 2, S):
                self._evaluate(S - FD_POINTS, FD_POINTS, c)


# -------------------------------------------------------------------- run


def _integrate_scale(model, f0, t_end, dt, floor):
    rho = model.ricci_constant
    ts, fs = [0.0], [f0]
    t, f = 0.0, f0
    dt_cur, dt_min = dt, dt * 2.0**-MAX_HALVINGS
    termination = Termination(REACHED_T_END)
    while t_end - t > 1e-9 * dt_cur:
        h = _exact_increment(t, _step_size(dt_cur, t_end - t))
        try:
            new = _scale_step(f, t, h, rho, floor)
        except PositivityLost:
            termination = Termination(SINGULAR_AT, t + _bisect(lambda s: _scale_step(f, t, s, rho, floor), h))
            break
        if abs(new - f) > MAX_RELATIVE_CHANGE * f and h > dt_min:
            dt_cur = h / 2.0
            continue
        t, f = t + h, new
        ts.append(t)
        fs.append(f)
    return np.array(ts), np.array(fs), termination


def _bisect(trial, h):
    lo, hi = 0.0, h
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        try:
            trial(mid)
            lo = mid
        except PositivityLost:
            hi = mid
    return 0.5 * (lo + hi)


def _integrate_grid(model, state, t_end, dt, floor, record_interval):
    N = model.resolution
    stream = _GridSchwarzStream(model, 1.0)
    g0, u0 = stream.slots(0)
    psi = to_relative(state.data, 0.0)
    gmin, gmax = kernels.grid_fields(psi, 0.0, model.spacing, model.g_flat, g0, u0)
    stream.push(0.0)
    ts, lo, hi = [0.0], [gmin], [gmax]
    recorded, rec_steps = [state], [0]
    next_record = record_interval
    scratch = (np.empty((N, N)), np.empty((N, N)))
    t = 0.0
    dt_cur, dt_min = dt, dt * 2.0**-MAX_HALVINGS
    termination = Termination(REACHED_T_END)
    while t_end - t > 1e-9 * dt_cur:
        h = _exact_increment(t, _step_size(dt_cur, t_end - t, grid_stable_dt(model, gmin)))
        g_out, u_out = stream.slots(len(ts))
        try:
            new, ngmin, ngmax = _grid_step(model, psi, t, h, floor, g_out, u_out)
        except PositivityLost:
            def trial(s, psi=psi, t=t):
                _grid_step(model, psi, t, s, floor, *scratch)
            termination = Termination(SINGULAR_AT, t + _bisect(trial, h))
            break
        if abs(ngmin - gmin) > MAX_RELATIVE_CHANGE * gmin and h > dt_min:
            dt_cur = h / 2.0
            continue
        psi, t, gmin = new, t + h, ngmin
        ts.append(t)
        lo.append(ngmin)
        hi.append(ngmax)
        stream.push(t)
        if t >= next_record or t_end - t <= 1e-9 * dt_cur:
            recorded.append(FlowState(t, model, from_relative(psi, t)))
            rec_steps.append(len(ts) - 1)
            next_record = t + record_interval
    if rec_steps[-1] != len(ts) - 1:
        recorded.append(FlowState(t, model, from_relative(psi, t)))
        rec_steps.append(len(ts) - 1)
    stream.finish()
    gf = model.g_flat
    lo, hi = np.array(lo) / gf, np.array(hi) / gf
    return Trajectory(
        model=model, dt=dt, times=np.array(ts), min_metric=lo, max_metric=hi,
        max_trace=1.0 / lo, volume=hi, termination=termination,
        recorded=recorded, state_steps=np.array(rec_steps),
        grid_schwarz=(np.array(stream.rmax), np.array(stream.rmin)),
    )


def integrate(model, params, t_end, dt, record_interval=None):
    """Integrate without monitors; see ``run``."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not dt > 0:
        raise ValueError("dt must be positive")
    params = dict(params or {})
    state = initial_state(model, **params)
    floor = DEGENERATION_RATIO * state.min_metric()
    if not model.homogeneous:
        return _integrate_grid(model, state, t_end, dt, floor,
                               record_interval or t_end / 100.0)
    ts, fs, termination = _integrate_scale(model, state.data, t_end, dt, floor)
    n = model.n
    return Trajectory(
        model=model, dt=dt, times=ts, min_metric=fs, max_metric=fs,
        max_trace=n / fs, volume=fs**n, termination=termination,
    )


def run(model, params, t_end, dt, monitors=None, mode=TEST, record_interval=None):
    """Integrate to ``t_end`` or the first singularity and evaluate every monitor.

    ``params`` are passed to ``initial_state`` (``f0`` or ``phi0``). In test mode
    a failed monitor raises ``MonitorViolation`` (with ``.trajectory`` attached);
    in explore mode it emits a ``MonitorWarning``.
    """
    if mode not in (TEST, EXPLORE):
        raise ValueError(f"mode must be {TEST!r} or {EXPLORE!r}")
    config = monitors or MonitorConfig()
    traj = integrate(model, params, t_end, dt, record_interval)
    evaluate_monitors(traj, config)
    failures = [r for r in traj.monitors.values() if not r.passed]
    for res in failures:
        k = res.first_violation()
        t, margin = float(traj.times[k]), float(res.margins[k])
        msg = f"{res.name} violated at t = {t!r} (margin {margin!r})"
        if mode == TEST:
            err = MonitorViolation(msg, t=t, margin=margin)
            err.trajectory = traj
            raise err
        warnings.warn(msg, MonitorWarning, stacklevel=2)
    return traj


# --------------------------------------------------------------- monitors


def _reference_data(traj, omega_hat):
    """Trace, extreme-eigenvalue and volume factors of the model reference against ``omega_hat``."""
    ref = traj.model.reference_metric()
    if omega_hat is None or np.allclose(omega_hat.entries, ref.entries, rtol=1e-14, atol=0):
        return 1.0, 1.0, 1.0, 1.0
    if not traj.model.homogeneous:
        raise ValueError("grid monitors use the model's own reference metric")
    lam = ref.eigenvalues_against(omega_hat)
    return trace_ratio(ref, omega_hat) / traj.model.n, lam[0], lam[-1], float(np.prod(lam))


def _traces(traj, omega_hat):
    tr_factor, lo_factor, hi_factor, _ = _reference_data(traj, omega_hat)
    return traj.max_trace * tr_factor, traj.min_metric * lo_factor, traj.max_metric * hi_factor


def _trace_result(name, traj, trace, lower, bound, C, rtol):
    tol = rtol * trace
    sand = lower - 1.0 / C if math.isfinite(C) else np.full_like(lower, np.nan)
    return MonitorResult(
        name=name, margins=bound - trace, tolerance=tol, bound=bound, constant=C,
        sandwich_margins=sand, extra={"sandwich_tol": rtol / C if math.isfinite(C) else 0.0},
    )


def monitor_trace_nef(traj, omega_hat=None, T0=None, rtol=None, strict=False):
    """``tr <= e^t max tr_0`` per step, and ``omega_t >= omega_hat / C`` with ``C = e^T0 max tr_0``.

    The sandwich is checked on ``t <= T0`` (default: the whole run).
    """
    rtol = MonitorConfig().trace_tolerance(traj.model) if rtol is None else rtol
    trace, lower, _ = _traces(traj, omega_hat)
    T0 = traj.final_time if T0 is None else T0
    bound = np.exp(traj.times) * trace[0]
    C = math.exp(T0) * float(trace[0])
    res = _trace_result("trace_nef", traj, trace, lower, bound, C, rtol)
    res.sandwich_margins[traj.times > T0] = np.nan
    return _maybe_raise(res, traj, strict)


def ample_constant(n, kappa, trace0):
    return max(2.0 * n / (kappa * (n + 1)), trace0)


def monitor_trace_ample(traj, omega_hat=None, kappa=1.0, rtol=None, strict=False):
    """``tr <= C = max{2n / (kappa (n+1)), max tr_0}`` and ``omega_t >= omega_hat / C``.

    ``kappa = 0`` falls back to the nef form.
    """
    if kappa < 0:
        raise NegativeKappa(f"kappa must be >= 0, got {kappa}")
    if kappa == 0:
        return monitor_trace_nef(traj, omega_hat, rtol=rtol, strict=strict)
    rtol = MonitorConfig().trace_tolerance(traj.model) if rtol is None else rtol
    trace, lower, _ = _traces(traj, omega_hat)
    C = ample_constant(traj.model.n, kappa, float(trace[0]))
    res = _trace_result("trace_ample", traj, trace, lower, np.full_like(trace, C), C, rtol)
    return _maybe_raise(res, traj, strict)


def schwarz_residuals(traj, omega_hat=None, R_hat=None):
    """Per-step ``(max residual, min residual, rhs scale)`` of the Schwarz inequality."""
    model = traj.model
    if len(traj.times) < 3:
        raise ValueError("the Schwarz monitor needs at least 3 states")
    if not model.homogeneous:
        if R_hat is not None and np.abs(R_hat.entries).max() != 0.0:
            raise ValueError("grid monitors use the flat reference curvature")
        _reference_data(traj, omega_hat)
        hi, lo = traj.grid_schwarz
        return hi, lo, np.ones_like(hi)
    ref = model.reference_metric()
    omega_hat = omega_hat or ref
    R_hat = R_hat or model.reference_curvature()
    f = traj.min_metric
    # tr and the bicontraction scale as 1/f and 1/f^2 along omega_t = f omega_ref
    tr1 = trace_ratio(ref, omega_hat)
    bic1 = bicontraction(ref, R_hat)
    lhs = -time_derivative(traj.times, f) / f
    rhs = 1.0 + bic1 / (tr1 * f)
    res = lhs - rhs
    return res, res, np.maximum(1.0, np.abs(rhs))


def monitor_schwarz(traj, omega_hat=None, R_hat=None, config=None, strict=False):
    """Residual LHS - RHS of the parabolic Schwarz inequality, which must stay <= tol."""
    config = config or MonitorConfig()
    hi, lo, scale = schwarz_residuals(traj, omega_hat, R_hat)
    h = 0.0 if traj.model.homogeneous else traj.model.spacing
    dts = window_spacing(traj.times)
    tol = (config.schwarz_dt_coeff * dts**2 + config.schwarz_h_coeff * h * h
           + config.schwarz_floor) * scale
    res = MonitorResult(name="schwarz", margins=-hi, tolerance=tol, extra={"min_residual": lo})
    return _maybe_raise(res, traj, strict)


def monitor_volume_and_sandwich(traj, omega_hat=None, ceiling=1e6, strict=False):
    """Max volume ratio and the running constants ``C = 1 / min lambda``, ``C' = max lambda``."""
    _, lower, upper = _traces(traj, omega_hat)
    vol = traj.volume * _reference_data(traj, omega_hat)[3]
    C_low = 1.0 / np.minimum.accumulate(lower)
    C_high = np.maximum.accumulate(upper)
    res = MonitorResult(
        name="volume", margins=ceiling - vol, tolerance=np.zeros_like(vol), constant=ceiling,
        extra={
            "volume": vol,
            "C": C_low,
            "C_prime": C_high,
            "degenerate": bool(C_low[-1] >= DEGENERATION_GROWTH * C_low[0]),
        },
    )
    return _maybe_raise(res, traj, strict)


def ke_residual(state):
    """Kahler-Einstein residual ``|f - 1|`` of a hyperbolic scale state."""
    if state.model.kind != HYPERBOLIC:
        raise ValueError("the Kahler-Einstein residual is defined for hyperbolic models")
    return abs(state.data - 1.0)


def ke_residuals(traj):
    if traj.model.kind != HYPERBOLIC:
        return np.full(len(traj.times), np.nan)
    return np.abs(traj.min_metric - 1.0)


def fit_decay_rate(times, values, window=(2.0, 8.0)):
    """Least-squares slope of ``log values`` against ``t`` over ``window``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = (times >= window[0]) & (times <= window[1]) & (values > 0)
    if sel.sum() < 2:
        return math.nan
    return float(np.polyfit(times[sel], np.log(values[sel]), 1)[0])


def _maybe_raise(res, traj, strict):
    if strict and not res.passed:
        k = res.first_violation()
        t, margin = float(traj.times[k]), float(res.margins[k])
        raise MonitorViolation(f"{res.name} violated at t = {t!r} (margin {margin!r})",
                               t=t, margin=margin)
    return res


def evaluate_monitors(traj, config=None):
    """Run the configured monitors, fill ``traj.monitors`` and ``traj.reports``."""
    config = config or MonitorConfig()
    model = traj.model
    S = len(traj.times)
    kappa = model.kappa if config.kappa is None else config.kappa
    rtol = config.trace_tolerance(model)
    results = {}
    if config.trace and kappa is not None:
        if kappa > 0:
            results["trace"] = monitor_trace_ample(traj, kappa=kappa, rtol=rtol)
        else:
            results["trace"] = monitor_trace_nef(traj, T0=config.T0, rtol=rtol)
    if config.schwarz and S >= 3:
        results["schwarz"] = monitor_schwarz(traj, config=config)
    vol = monitor_volume_and_sandwich(traj, ceiling=config.volume_ceiling)
    if config.volume:
        results["volume"] = vol
    ok = np.ones(S, dtype=bool)
    for r in results.values():
        ok &= r.ok
    nan = np.full(S, np.nan)
    tr = results.get("trace")
    sch = results.get("schwarz")
    traj.monitors = results
    traj.reports = ReportTable({
        "t": traj.times,
        "trace": traj.max_trace,
        "trace_bound": tr.bound if tr is not None else nan,
        "schwarz_residual": -sch.margins if sch is not None else nan,
        "volume_ratio_max": vol.extra["volume"],
        "ke_residual": ke_residuals(traj),
        "sandwich_low": vol.extra["C"],
        "sandwich_high": vol.extra["C_prime"],
        "all_pass": ok,
    })
    return results


def summary(traj, ke_window=(2.0, 8.0)):
    """JSON-ready digest of a monitored trajectory."""
    term = traj.termination
    rates = {}
    if traj.model.kind == HYPERBOLIC:
        rates["ke_residual"] = fit_decay_rate(traj.times, ke_residuals(traj), ke_window)
    monitors = {}
    for name, r in traj.monitors.items():
        entry = {"passed": r.passed, "min_margin": _finite_min(r.margins)}
        if r.constant is not None:
            entry["constant"] = r.constant
        monitors[name] = entry
    vol = traj.monitors.get("volume")
    out = {
        "model": traj.model.label(),
        "termination": str(term),
        "termination_kind": term.kind,
        "T": term.t if term.kind == SINGULAR_AT else None,
        "t_final": traj.final_time,
        "steps": len(traj.times) - 1,
        "dt": traj.dt,
        "decay_rates": rates,
        "monitors": monitors,
        "all_pass": bool(np.all(traj.reports.columns["all_pass"])) if traj.reports else None,
    }
    if vol is not None:
        out["sandwich"] = {"C": float(vol.extra["C"][-1]), "C_prime": float(vol.extra["C_prime"][-1]),
                           "degenerate": vol.extra["degenerate"]}
    return out


def _finite_min(a):
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    return float(a.min()) if a.size else None
