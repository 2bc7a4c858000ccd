"""Damped fixed-point loop, moment audit, and the two-start experiment.

These run at reduced particle counts and coarse meshes; the shipped-scale
tolerances live in the acceptance suite.
"""

import numpy as np
import pytest

from hilbert_mfg import rng
from hilbert_mfg.config import SolverConfig
from hilbert_mfg.fp_particles import DriftField, propagate
from hilbert_mfg.hjb import GeneralHamiltonian
from hilbert_mfg.measures import (
    Dirac,
    MeasurePath,
    ParticleMeasure,
    ProductGaussian,
    path_modulus,
    path_sup_distance,
)
from hilbert_mfg.mfg import (
    MFGProblem,
    calibrate_c0,
    drift_from_gradient,
    fixed_point_iterate,
    membership_report,
    mode_bounds,
    moment_bound_audit,
    psi_map,
    uniqueness_experiment,
)
from hilbert_mfg.models import make_model
from hilbert_mfg.spectrum import SpectrumSpec

CFG = SolverConfig(dt=0.1, particles=3000, grid_points=32, quad_nodes=8,
                   tau_nodes=17, fp_tol=2e-2, seed=9)


def mu_free_problem():
    ham = GeneralHamiltonian(
        value_fn=lambda X, P, mu: 0.8 * np.tanh(P[..., 0]),
        grad_p_fn=lambda X, P, mu: 0.8 / np.cosh(P) ** 2,
        bound_Hp=0.8, label="mu-free")
    return MFGProblem(spectrum=make_model("cap1d_monotone").spectrum,
                      hamiltonian=ham,
                      terminal=lambda X, mu: np.cos(X[..., 0]),
                      m0=Dirac([0.0]), horizon=1.0)


def test_psi_is_constant_map_when_measure_never_enters():
    # same inner seed, different input paths: identical best responses
    prob = mu_free_problem()
    spec = prob.spectrum
    m_a = propagate(DriftField.zero(1), Dirac([0.0]), spec, CFG.with_(seed=101))
    m_b = propagate(DriftField.constant([0.5], 1), ProductGaussian([0.3], [0.2]),
                    spec, CFG.with_(seed=202))
    pa = psi_map(prob, m_a, CFG, fp_seed=77)
    pb = psi_map(prob, m_b, CFG, fp_seed=77)
    assert path_sup_distance(pa, pb) == 0.0


def test_zero_gradient_hamiltonian_converges_immediately():
    ham = GeneralHamiltonian(value_fn=lambda X, P, mu: 0.0 * X[..., 0],
                             grad_p_fn=lambda X, P, mu: np.zeros_like(P),
                             bound_Hp=0.0, label="zero")
    prob = MFGProblem(spectrum=make_model("cap1d_monotone").spectrum,
                      hamiltonian=ham, terminal=lambda X, mu: np.cos(X[..., 0]),
                      m0=Dirac([0.0]), horizon=1.0)
    sol = fixed_point_iterate(prob, CFG)
    assert sol.status == "converged"
    assert len(sol.iterations) == 2  # two quiet steps and out
    # the law is the zero-drift one: variances match the kernel integral
    spec = prob.spectrum
    from hilbert_mfg.spectrum import covariance_qk
    for j, t in enumerate(CFG.mesh()):
        if t == 0.0:
            continue
        mu = sol.m.measures[j]
        want = covariance_qk(spec, 1, t)
        se = np.std(mu.points[:, 0] ** 2) / np.sqrt(mu.M)
        assert abs(mu.mode_second_moment(1) - want) < 4 * se + 1e-12


def test_mode_bounds_closed_form():
    # m0 = delta_0, lambda_n = -n, |H_p| = 1  ->  a_n = 3/n
    spec = SpectrumSpec(eigenvalues=(-1.0, -2.0, -3.0), delta=0.5)
    ham = GeneralHamiltonian(value_fn=lambda X, P, mu: np.linalg.norm(P, axis=-1),
                             grad_p_fn=lambda X, P, mu: np.ones_like(P),
                             bound_Hp=1.0, label="unit-grad")
    prob = MFGProblem(spectrum=spec, hamiltonian=ham,
                      terminal=lambda X, mu: 0.0 * X[..., 0],
                      m0=Dirac([0.0, 0.0, 0.0]), horizon=1.0)
    assert np.allclose(mode_bounds(prob), [3.0, 1.5, 1.0], atol=1e-14)


def test_moment_audit_flags_hand_built_violation():
    prob = make_model("cap1d_monotone")
    a1 = mode_bounds(prob)[0]
    g = rng.generator(77, 0)
    times = CFG.mesh()
    bad = MeasurePath(times=times, measures=tuple(
        ParticleMeasure(np.sqrt(10.0 * a1) * g.standard_normal((500, 1)))
        for _ in times))
    rep = moment_bound_audit(prob, bad, CFG)
    assert not rep.ok
    assert not rep.rows[0].passed
    assert rep.rows[0].observed > 10.0 * a1 * 0.5


def test_moment_audit_tail_rows_use_spectrum_family():
    prob = make_model("cap1d_monotone")  # family lambda_k = -k^3
    m = propagate(DriftField.zero(1), prob.m0, prob.spectrum, CFG)
    rep = moment_bound_audit(prob, m, CFG, tail_modes=3)
    tails = [r for r in rep.rows if not r.sampled]
    assert [r.mode for r in tails] == [2, 3, 4]
    # beta_n = 0 beyond the truncation: a_n = 3 alpha_n (1 + R^2) = 3/n^3
    assert np.allclose([r.bound for r in tails], [3.0 / 8, 3.0 / 27, 3.0 / 64])
    assert all(r.passed for r in tails)


def test_psi_outputs_pass_moment_bounds_on_random_inputs():
    prob = make_model("cap1d_monotone")
    for i in range(3):
        g = rng.generator(100, i)
        c = float(g.uniform(-0.9, 0.9))
        drift = DriftField(fn=lambda t, X, c=c: np.full_like(X, c),
                           bound=abs(c) + 1e-9, label="const")
        m_in = propagate(drift, ProductGaussian([0.0], [float(g.uniform(0.05, 0.5))]),
                         prob.spectrum, CFG.with_(seed=1000 + i))
        psi = psi_map(prob, m_in, CFG, fp_seed=2000 + i)
        rep = moment_bound_audit(prob, psi, CFG)
        assert rep.ok, rep


def test_psi_modulus_constant_uniform_over_input_paths():
    prob = make_model("cap1d_monotone")
    consts = []
    for i in range(10):
        g = rng.generator(100, i)
        c = float(g.uniform(-0.9, 0.9))
        drift = DriftField(fn=lambda t, X, c=c: np.full_like(X, c),
                           bound=abs(c) + 1e-9, label="const")
        m_in = propagate(drift, ProductGaussian([float(g.uniform(-0.5, 0.5))],
                                                [float(g.uniform(0.05, 0.6))]),
                         prob.spectrum, CFG.with_(seed=1000 + i))
        psi = psi_map(prob, m_in, CFG, fp_seed=2000 + i)
        consts.append(path_modulus(psi, seed=i).constant)
    assert max(consts) / min(consts) < 1.5


def test_calibrated_fourth_moment_constant_is_sane():
    prob = make_model("cap1d_monotone")
    c0 = calibrate_c0(prob, CFG)
    assert 0.0 < c0 < 50.0
    m = propagate(DriftField.zero(1), prob.m0, prob.spectrum, CFG)
    rep = moment_bound_audit(prob, m, CFG)
    assert rep.fourth_pass
    assert rep.fourth_bound >= 1.0 + c0  # chat = 1 + c0 (1 + m0 moment + R^4)


def test_fixed_point_smoke_run_reports_certificate_and_audit():
    prob = make_model("cap1d_monotone")
    sol = fixed_point_iterate(prob, CFG)
    assert sol.status == "converged"
    assert sol.converged
    assert len(sol.iterations) <= CFG.fp_max
    assert sol.psi_residual > 0 and np.isfinite(sol.psi_residual_stderr)
    assert sol.audit.ok
    assert sol.v.status in ("converged", "max-iterations")
    # iteration records carry the damping trace
    assert all(r.theta <= CFG.damping for r in sol.iterations)


def test_feedback_drift_respects_declared_bound():
    prob = make_model("cap1d_monotone")
    sol = fixed_point_iterate(prob, CFG)
    drift = drift_from_gradient(sol.v, prob.hamiltonian, sol.m)
    X = np.linspace(-3, 3, 41)[:, None]
    for t in CFG.mesh()[:-1]:
        w = drift(float(t), X)
        assert np.max(np.abs(w)) <= prob.hamiltonian.bound_Hp + 1e-9


def test_uniqueness_identical_legs_are_bit_equal():
    prob = make_model("cap1d_monotone")
    start = propagate(DriftField.zero(1), prob.m0, prob.spectrum,
                      CFG.with_(seed=55))
    rep, sa, sb = uniqueness_experiment(prob, start, start, CFG,
                                        seed_a=42, seed_b=42)
    assert rep.rho_between == 0.0
    assert rep.value_sup_distance == 0.0
    assert rep.both_converged == (sa.converged and sb.converged)


def test_uniqueness_negative_control_reports_without_raising():
    prob = make_model("cap1d_antimonotone")
    cfg = CFG.with_(fp_max=4)  # keep it short; outcome is reported either way
    start_a = propagate(DriftField.zero(1), prob.m0, prob.spectrum,
                        cfg.with_(seed=1))
    start_b = propagate(DriftField.zero(1), ProductGaussian([0.0], [0.5]),
                        prob.spectrum, cfg.with_(seed=2))
    rep, _, _ = uniqueness_experiment(prob, start_a, start_b, cfg)
    assert np.isfinite(rep.rho_between)
    assert rep.status_a in ("converged", "max-iterations")
    assert rep.status_b in ("converged", "max-iterations")


def test_membership_report_delegates():
    prob = make_model("cap1d_monotone")
    m = propagate(DriftField.zero(1), prob.m0, prob.spectrum, CFG)
    rep = membership_report(prob, m.measures[-1], CFG)
    assert rep.ok


def test_problem_validation():
    prob = make_model("cap1d_monotone")
    with pytest.raises(ValueError):
        MFGProblem(spectrum=prob.spectrum, hamiltonian=prob.hamiltonian,
                   terminal=prob.terminal, m0=prob.m0, horizon=0.0)
    bad = GeneralHamiltonian(value_fn=lambda X, P, mu: X[..., 0],
                             grad_p_fn=lambda X, P, mu: P,
                             bound_Hp=np.inf, label="unbounded")
    with pytest.raises(ValueError):
        MFGProblem(spectrum=prob.spectrum, hamiltonian=bad,
                   terminal=prob.terminal, m0=prob.m0, horizon=1.0)
    with pytest.raises(ValueError):
        fixed_point_iterate(prob, CFG.with_(horizon=2.0))


def test_initial_path_must_live_on_config_mesh():
    prob = make_model("cap1d_monotone")
    other = CFG.with_(dt=0.2)
    start = propagate(DriftField.zero(1), prob.m0, prob.spectrum, other)
    with pytest.raises(ValueError):
        fixed_point_iterate(prob, CFG, initial=start)
