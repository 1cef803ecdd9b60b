"""Randomized verification of Royden's trace inequality.

For a reference metric with HSC bounded above by ``-kappa`` and any other
metric ``omega``,

    g^{i jbar} g^{k lbar} Rhat_{i jbar k lbar} <= -kappa (n+1)/(2n) (tr_omega omega_hat)^2.

The hypothesis is checked with ``hsc_sup``, a sampled supremum, so every
verdict here is relative to that sampler.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GenerationFailed, HypothesisViolated, NegativeKappa, NonPositiveTrace
from .tensor_core import (
    HermitianForm,
    HscBudget,
    KahlerCurvature,
    bicontraction,
    change_frame,
    constant_hsc_tensor,
    hsc_sup,
    symmetrize,
    trace_ratio,
)

DEFAULT_TOL = 1e-9
MAX_ATTEMPTS = 1000


@dataclass(frozen=True)
class RoydenReport:
    lhs: float
    rhs: float
    kappa: float
    trace: float
    margin: float
    holds: bool


def royden_bound(kappa, n, trace):
    """Right-hand side ``-kappa (n+1)/(2n) trace^2``."""
    if kappa < 0:
        raise NegativeKappa(f"kappa must be >= 0, got {kappa}")
    if not trace > 0:
        raise NonPositiveTrace(f"trace must be > 0, got {trace}")
    if n < 1:
        raise ValueError("n must be a positive integer")
    return -kappa * (n + 1) / (2 * n) * trace**2


def check_royden(omega, omega_hat, R_hat, kappa, tol=DEFAULT_TOL, measured_sup=None, budget=None):
    """Evaluate both sides of the inequality for one configuration.

    ``measured_sup`` skips the HSC sampling when the caller already has it
    (e.g. from ``random_negative_tensor``).
    """
    if kappa < 0:
        raise NegativeKappa(f"kappa must be >= 0, got {kappa}")
    sup = hsc_sup(R_hat, omega_hat, budget) if measured_sup is None else measured_sup
    if sup > -kappa + tol * max(1.0, kappa):
        raise HypothesisViolated(f"sampled HSC sup {sup!r} exceeds -kappa = {-kappa!r}")
    lhs = bicontraction(omega, R_hat)
    trace = trace_ratio(omega, omega_hat)
    rhs = royden_bound(kappa, omega.dim, trace)
    return RoydenReport(
        lhs=lhs,
        rhs=rhs,
        kappa=kappa,
        trace=trace,
        margin=rhs - lhs,
        holds=bool(lhs <= rhs + tol * abs(rhs)),
    )


def random_negative_tensor(seed, n, kappa, perturbation, g_hat=None, budget=None):
    """Curvature with sampled HSC sup <= -kappa: a space form plus a random bump.

    The space form has ``kappa' = kappa + perturbation * U[0, 1)``; the bump has
    unit Frobenius norm in a ``g_hat``-unitary frame (so its HSC is in [-1, 1])
    scaled by ``perturbation * U[0, 1)``. Draws are rejected until the sampled
    sup is at most ``-kappa``. Returns ``(tensor, measured_sup)``.
    """
    if kappa <= 0:
        raise NegativeKappa(f"kappa must be > 0, got {kappa}")
    if perturbation < 0:
        raise ValueError("perturbation must be >= 0")
    g_hat = g_hat or HermitianForm.identity(n)
    rng = np.random.default_rng(seed)
    if perturbation == 0:
        R = constant_hsc_tensor(g_hat, kappa)
        return R, hsc_sup(R, g_hat, budget)
    # frame map back to coordinates: eta = L^T xi
    N = np.linalg.cholesky(g_hat.entries).T
    shape = (n, n, n, n)
    for _ in range(MAX_ATTEMPTS):
        kappa_prime = kappa + perturbation * rng.uniform()
        bump = symmetrize(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        bump *= perturbation * rng.uniform() / np.linalg.norm(bump)
        R = KahlerCurvature(
            constant_hsc_tensor(g_hat, kappa_prime).entries + change_frame(bump, N),
            validate=False,
        )
        sup = hsc_sup(R, g_hat, budget)
        if sup <= -kappa:
            return R, sup
    raise GenerationFailed(f"no tensor with sup <= {-kappa} after {MAX_ATTEMPTS} draws")


@dataclass(frozen=True)
class TrialRecord:
    seed: int
    n: int
    kappa: float
    measured_sup: float
    lhs: float
    rhs: float
    margin: float
    holds: bool


def trial_seeds(seed, count):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


def run_trial(seed, n, kappa, perturbation, omega_equals_hat=False, budget=None, tol=DEFAULT_TOL):
    """One randomized configuration: random reference metric, tensor and test metric."""
    rng = np.random.default_rng(seed)
    g_hat = HermitianForm.random(rng, n)
    omega = g_hat if omega_equals_hat else HermitianForm.random(rng, n, spread=1.5)
    R, sup = random_negative_tensor(int(rng.integers(2**63)), n, kappa, perturbation, g_hat, budget)
    rep = check_royden(omega, g_hat, R, kappa, tol=tol, measured_sup=sup)
    return TrialRecord(seed, n, kappa, sup, rep.lhs, rep.rhs, rep.margin, rep.holds)


def run_trials(seed, trials, n_values, kappa, perturbation, omega_equals_hat=False, budget=None,
               tol=DEFAULT_TOL):
    """``trials`` configurations per dimension, deterministic in ``seed``."""
    seeds = trial_seeds(seed, trials * len(n_values))
    out = []
    for k, n in enumerate(n_values):
        for s in seeds[k * trials:(k + 1) * trials]:
            out.append(run_trial(s, n, kappa, perturbation, omega_equals_hat, budget, tol))
    return out
