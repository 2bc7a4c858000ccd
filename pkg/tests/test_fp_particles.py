"""Particle transport and weak-form residual audits.

Oracles: the driftless scheme is exact (mode variances equal the OU
covariance), constant drifts integrate to the closed-form ODE mean, and
with matching seeds noise cancels between runs so splitting bias can be
measured deterministically.
"""

import numpy as np
import pytest
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import quad

from hilbert_mfg.config import SolverConfig
from hilbert_mfg.fp_particles import (
    DriftField,
    FourierTestFunction,
    bootstrap_stderr,
    propagate,
    residual_audit_cases,
    weak_form_residual,
    weak_residual_profile,
)
from hilbert_mfg.measures import Dirac, ProductGaussian
from hilbert_mfg.spectrum import SpectrumSpec

SPEC1 = SpectrumSpec(eigenvalues=(-1.0,))
Q_AT_1 = 0.43233235838169365  # (1 - e^{-2}) / 2, mode variance at t = 1


def test_zero_drift_variance_matches_mode_covariance():
    cfg = SolverConfig(horizon=1.0, dt=0.02, particles=100_000, seed=0)
    path = propagate(DriftField.zero(1), Dirac([0.0]), SPEC1, cfg)
    for t, q in ((0.5, -np.expm1(-1.0) / 2.0), (1.0, Q_AT_1)):
        x = path.at_time(t).points[:, 0]
        se = q * np.sqrt(2.0 / (len(x) - 1))
        assert abs(x.var() - q) < 3 * se


def test_constant_drift_mean_matches_ode():
    # exponential-Euler reproduces x' = lambda x + c exactly for constant c
    c = 0.7
    cfg = SolverConfig(horizon=1.0, dt=0.02, particles=100_000, seed=0)
    path = propagate(DriftField.constant([c]), Dirac([0.0]), SPEC1, cfg)
    for t in (0.5, 1.0):
        x = path.at_time(t).points[:, 0]
        exact = c * -np.expm1(-t)
        se = np.sqrt(-np.expm1(-2 * t) / 2.0 / len(x))
        assert abs(x.mean() - exact) < 3 * se


def test_drift_superposition_is_exact():
    """Same seed means same noise, so the constant-drift path minus the
    driftless path is the deterministic drift response, to rounding."""
    c = 0.7
    cfg = SolverConfig(horizon=1.0, dt=0.05, particles=500, seed=3)
    path0 = propagate(DriftField.zero(1), Dirac([0.0]), SPEC1, cfg)
    pathc = propagate(DriftField.constant([c]), Dirac([0.0]), SPEC1, cfg)
    for j, t in enumerate(path0.times):
        diff = pathc.measures[j].points - path0.measures[j].points
        assert np.allclose(diff, c * -np.expm1(-t), atol=1e-12)


def test_time_dependent_drift_bias_is_first_order():
    """Freezing the drift at the step's left endpoint is an O(h) splitting:
    halving h should roughly halve the mean error against the
    variation-of-constants integral."""
    c, om, T = 1.5, 2.0, 1.0
    exact, err = quad(lambda s: np.exp(-(T - s)) * c * np.cos(om * s), 0.0, T)
    assert err < 1e-10
    assert abs(exact - 0.3103705727798336) < 1e-12

    def mean_error(h):
        cfg = SolverConfig(horizon=T, dt=h, particles=1, seed=9)
        w = DriftField(fn=lambda t, X: np.full_like(X, c * np.cos(om * t)), bound=c)
        pathw = propagate(w, Dirac([0.0]), SPEC1, cfg)
        path0 = propagate(DriftField.zero(1), Dirac([0.0]), SPEC1, cfg)
        response = pathw.measures[-1].points[0, 0] - path0.measures[-1].points[0, 0]
        return abs(response - exact)

    e_coarse, e_fine = mean_error(0.1), mean_error(0.05)
    assert e_coarse / e_fine >= 1.8


def test_fourier_test_function_derivatives_match_finite_differences():
    phi = FourierTestFunction(h=[0.7, -1.2], theta=0.3, kind="sin",
                              psi=lambda t: np.exp(-t), dpsi=lambda t: -np.exp(-t))
    X = np.array([[0.4, -0.2], [1.1, 0.5]])
    t, eps = 0.6, 1e-6
    dt_fd = (phi.value(t + eps, X) - phi.value(t - eps, X)) / (2 * eps)
    assert np.allclose(phi.dt(t, X), dt_fd, atol=1e-6)
    grad = phi.gradient(t, X)
    for k in range(2):
        dX = np.zeros_like(X)
        dX[:, k] = eps
        g_fd = (phi.value(t, X + dX) - phi.value(t, X - dX)) / (2 * eps)
        assert np.allclose(grad[:, k], g_fd, atol=1e-6)
        d2_fd = (phi.value(t, X + dX) - 2 * phi.value(t, X) + phi.value(t, X - dX)) / eps**2
        if k == 0:
            trace_fd = d2_fd.copy()
        else:
            trace_fd += d2_fd
    assert np.allclose(phi.trace_d2(t, X), trace_fd, atol=1e-3)


def test_fourier_test_function_l0_matches_manual():
    spec = SpectrumSpec(eigenvalues=(-1.0, -3.0))
    phi = FourierTestFunction(h=[1.5, 0.4], theta=0.1)
    X = np.array([[0.3, -0.6], [-1.0, 0.2], [0.0, 0.0]])
    grad = phi.gradient(0.0, X)
    manual = X[:, 0] * -1.0 * grad[:, 0] + X[:, 1] * -3.0 * grad[:, 1] \
        + 0.5 * phi.trace_d2(0.0, X)
    assert np.allclose(phi.l0(spec, 0.0, X), manual, atol=1e-14)


def test_weak_residual_zero_at_initial_time():
    cfg = SolverConfig(horizon=0.5, dt=0.05, particles=200, seed=1)
    path = propagate(DriftField.zero(1), Dirac([0.4]), SPEC1, cfg)
    phi = FourierTestFunction(h=[1.0])
    prof = weak_residual_profile(path, DriftField.zero(1), phi, 0.0, SPEC1)
    assert np.all(prof == 0.0)


def test_weak_residual_stationary_invariant_law():
    """Started from N(0, alpha) with no drift the law never moves, so the
    residual is pure Monte Carlo noise.  The underlying identity
    E[L0 phi] = 0 under the invariant law is checked by quadrature."""
    case = [c for c in residual_audit_cases() if c.label == "stationary"][0]
    alpha = 0.5
    nodes, weights = hermgauss(64)
    X = (nodes * np.sqrt(2.0 * alpha))[:, None]
    l0_mean = (weights / np.sqrt(np.pi)) @ case.phi.l0(case.spec, 0.0, X)
    assert abs(l0_mean) < 1e-12

    cfg = SolverConfig(horizon=1.0, dt=0.01, particles=10_000, seed=case.seed)
    path = propagate(case.w, case.m0, case.spec, cfg)
    prof = weak_residual_profile(path, case.w, case.phi, 1.0, case.spec)
    assert abs(prof.mean()) <= 3 * bootstrap_stderr(prof, seed=1)


def test_weak_residual_generic_drift_small():
    case = [c for c in residual_audit_cases() if c.label == "state-coupled"][0]
    cfg = SolverConfig(horizon=1.0, dt=0.01, particles=10_000, seed=case.seed)
    path = propagate(case.w, case.m0, case.spec, cfg)
    assert abs(weak_form_residual(path, case.w, case.phi, 1.0, case.spec)) < 0.05


def test_weak_residual_shrinks_under_refinement():
    # quadrupling M and halving h must shrink both the residual and its
    # error bar on every shipped pair
    for case in residual_audit_cases():
        res = {}
        se = {}
        for tag, M, h in (("coarse", 10_000, 0.01), ("fine", 40_000, 0.005)):
            cfg = SolverConfig(horizon=1.0, dt=h, particles=M, seed=case.seed)
            path = propagate(case.w, case.m0, case.spec, cfg)
            prof = weak_residual_profile(path, case.w, case.phi, 1.0, case.spec)
            res[tag], se[tag] = abs(prof.mean()), bootstrap_stderr(prof, seed=1)
        assert res["fine"] < res["coarse"], case.label
        assert se["fine"] < se["coarse"], case.label


def test_residual_equals_profile_mean():
    case = residual_audit_cases()[0]
    cfg = SolverConfig(horizon=0.5, dt=0.05, particles=300, seed=2)
    path = propagate(case.w, case.m0, case.spec, cfg)
    prof = weak_residual_profile(path, case.w, case.phi, 0.5, case.spec)
    assert weak_form_residual(path, case.w, case.phi, 0.5, case.spec) == pytest.approx(prof.mean())


def test_moment_bounds_hold_across_drift_sizes():
    """Per-mode second moments stay below 3 (beta_k + alpha_k + alpha_k R^2)
    for constant drifts of size R, with Monte Carlo slack."""
    spec = SpectrumSpec(eigenvalues=(-1.0, -2.0))
    m0 = ProductGaussian(mean=[0.5, 0.0], var=[0.2, 0.1])
    cfg = SolverConfig(horizon=1.0, dt=0.05, particles=20_000, seed=2)
    alphas = np.array([0.5, 0.25])
    betas = np.array([m0.mode_second_moment(k) for k in (1, 2)])
    for R in (0.0, 1.0, 2.0, 4.0):
        w = DriftField.constant([R, 0.0]) if R else DriftField.zero(2)
        path = propagate(w, m0, spec, cfg)
        bound = 3.0 * (betas + alphas + alphas * R * R)
        for m in path.measures:
            sq = m.points**2
            slack = 3.0 * sq.std(axis=0) / np.sqrt(m.M)
            assert np.all(sq.mean(axis=0) <= bound + slack)


def test_fourth_moment_growth_is_at_most_quartic():
    spec = SpectrumSpec(eigenvalues=(-1.0, -2.0))
    cfg = SolverConfig(horizon=1.0, dt=0.05, particles=20_000, seed=2)
    sizes, sups = [], []
    for R in (1.0, 2.0, 4.0):
        path = propagate(DriftField.constant([R, 0.0]), Dirac([0.0, 0.0]), spec, cfg)
        m4 = max(float(np.mean(np.sum(m.points**2, axis=1) ** 2)) for m in path.measures)
        sizes.append(R)
        sups.append(m4)
    slope = np.polyfit(np.log(sizes), np.log(sups), 1)[0]
    assert slope <= 4.2


def test_propagate_is_deterministic():
    case = residual_audit_cases()[1]
    cfg = SolverConfig(horizon=0.5, dt=0.05, particles=400, seed=7)
    a = propagate(case.w, case.m0, case.spec, cfg)
    b = propagate(case.w, case.m0, case.spec, cfg)
    for ma, mb in zip(a.measures, b.measures):
        assert np.array_equal(ma.points, mb.points)


def test_drift_bound_violation_is_fatal():
    w = DriftField(fn=lambda t, X: np.full_like(X, 2.0), bound=1.0)
    cfg = SolverConfig(horizon=0.5, dt=0.05, particles=10, seed=0)
    with pytest.raises(ValueError, match="bound"):
        propagate(w, Dirac([0.0]), SPEC1, cfg)


def test_non_finite_drift_is_fatal():
    w = DriftField(fn=lambda t, X: np.full_like(X, np.nan), bound=1.0)
    cfg = SolverConfig(horizon=0.5, dt=0.05, particles=10, seed=0)
    with pytest.raises(FloatingPointError):
        propagate(w, Dirac([0.0]), SPEC1, cfg)


def test_off_mesh_time_rejected():
    cfg = SolverConfig(horizon=0.5, dt=0.05, particles=50, seed=0)
    path = propagate(DriftField.zero(1), Dirac([0.0]), SPEC1, cfg)
    phi = FourierTestFunction(h=[1.0])
    with pytest.raises(ValueError, match="mesh"):
        weak_form_residual(path, DriftField.zero(1), phi, 0.123, SPEC1)


def test_mode_mismatch_rejected():
    cfg = SolverConfig(horizon=0.5, dt=0.05, particles=50, seed=0)
    with pytest.raises(ValueError, match="modes"):
        propagate(DriftField.zero(2), Dirac([0.0]), SpectrumSpec(eigenvalues=(-1.0, -2.0)), cfg)
