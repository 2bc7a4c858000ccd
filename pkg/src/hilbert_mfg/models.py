"""Concrete capped-control Hamiltonian, measure couplings, and checkers.

The control problem behind the shipped Hamiltonian caps the control in the
ball of radius R and charges a uniformly convex running cost f1(|alpha|),
which gives the closed forms

    H1(p) = s(|p|) |p| - f1(s(|p|)),   DH1(p) = s(|p|) p / |p|,

with s(r) = min((f1')^{-1}(r), R): below the kink at |p| = f1'(R) the
supremum sits at the interior stationary point, above it the cap binds.
An optional bounded drift offset b0 enters the Hamiltonian linearly, so
the full gradient is DH1(p) - b0(x) and stays bounded by R + |b0|.

Couplings follow two patterns: rank-one products h(x) int h dmu (scalar
and vector variants, whose monotonicity pairing collapses to the exact
square |int h d(mu1 - mu2)|^2 even at the empirical level) and a
convolution form int l(z, rho*mu(z)) rho(z - x) nu(dz) with every integral
an empirical mean.

The checkers are samplers, not proofs: they report worst observed ratios
against declared constants, and the monotonicity verdict is a minimum over
randomized measure pairs with bootstrap error bars.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .fp_particles import bootstrap_stderr
from .hjb import SeparatedHamiltonian
from .measures import Dirac, ParticleMeasure, ProductGaussian, wasserstein1
from .mfg import MFGProblem
from .spectrum import SpectrumSpec

_TAG_PAIR = 0x2A
_TAG_MONO = 0x2B
_TAG_CHECK = 0x2C
_TAG_BOOT = 0x2D
_TAG_NU = 0x2E


@dataclass(frozen=True)
class QuadraticCost:
    """f1(s) = a s^2; the derivative and its inverse are the linear maps
    the capped closed forms need."""

    a: float = 1.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("uniform convexity needs a > 0")

    def f1(self, s):
        return self.a * np.square(s)

    def df1(self, s):
        return 2.0 * self.a * np.asarray(s, dtype=float)

    def inv_df1(self, r):
        return np.asarray(r, dtype=float) / (2.0 * self.a)

    @property
    def inv_lipschitz(self):
        return 1.0 / (2.0 * self.a)


def _radius(p):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.ndim == 1:
        return p[None, :], np.linalg.norm(p[None, :], axis=-1), True
    return p, np.linalg.norm(p, axis=-1), False


def eval_H1(p, R, profile):
    """sup over |alpha| <= R of <alpha, p> - f1(|alpha|), closed form."""
    pts, r, single = _radius(p)
    s = np.minimum(profile.inv_df1(r), float(R))
    out = s * r - profile.f1(s)
    return float(out[0]) if single else out


def eval_DH1(p, R, profile):
    """Gradient of eval_H1: the optimizer radius times the unit vector of
    p, capped at R; zero at p = 0."""
    pts, r, single = _radius(p)
    s = np.minimum(profile.inv_df1(r), float(R))
    radial = np.divide(s, r, out=np.zeros_like(r), where=r > 0)
    out = radial[..., None] * pts
    return out[0] if single else out


@dataclass
class CappedControlHamiltonian:
    """H0(x, p) = H1(p) - <b0(x), p> for the capped control problem."""

    R: float
    profile: QuadraticCost = field(default_factory=QuadraticCost)
    b0: object = None  # X -> (..., N), bounded by b0_bound
    b0_bound: float = 0.0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("control cap R must be positive")
        if (self.b0 is None) != (self.b0_bound == 0.0):
            raise ValueError("b0 and b0_bound must be declared together")

    @property
    def bound_Hp(self):
        return float(self.R) + float(self.b0_bound)

    @property
    def grad_lipschitz(self):
        # interior branch moves at the inverse-derivative rate; the capped
        # branch R p/|p| at rate at most 2R / f1'(R)
        return max(self.profile.inv_lipschitz,
                   2.0 * self.R / float(self.profile.df1(self.R)))

    def h0(self, X, P):
        out = eval_H1(P, self.R, self.profile)
        if self.b0 is not None:
            out = out - np.sum(np.asarray(self.b0(X), dtype=float) * P, axis=-1)
        return out

    def h0_p(self, X, P):
        out = eval_DH1(P, self.R, self.profile)
        if self.b0 is not None:
            out = out - np.asarray(self.b0(X), dtype=float)
        return out

    def separated(self, coupling, terminal, label=""):
        return SeparatedHamiltonian(
            h0=self.h0,
            h0_p=self.h0_p,
            coupling=coupling,
            terminal=terminal,
            bound_Hp=self.bound_Hp,
            lip_p=self.bound_Hp,
            lip_mu=getattr(coupling, "lip", None),
            label=label,
        )


@dataclass
class F1Coupling:
    """F(x, mu) = weight * h1(x) int h1 dmu for scalar bounded Lipschitz h1.
    weight < 0 flips the pairing sign (the anti-monotone negative control)."""

    h1: object
    lip: float
    bound: float
    weight: float = 1.0
    label: str = "F1"

    def __call__(self, X, mu):
        stat = float(np.mean(self.h1(mu.points)))
        return self.weight * np.asarray(self.h1(np.asarray(X, dtype=float)), dtype=float) * stat

    def closed_pairing(self, mu1, mu2):
        gap = float(np.mean(self.h1(mu1.points))) - float(np.mean(self.h1(mu2.points)))
        return self.weight * gap * gap


@dataclass
class F2Coupling:
    """F(x, mu) = weight * <h2(x), int h2 dmu> for vector h2."""

    h2: object
    lip: float
    bound: float
    weight: float = 1.0
    label: str = "F2"

    def __call__(self, X, mu):
        stat = np.mean(np.asarray(self.h2(mu.points), dtype=float), axis=0)
        return self.weight * np.sum(np.asarray(self.h2(np.asarray(X, dtype=float)), dtype=float) * stat, axis=-1)

    def closed_pairing(self, mu1, mu2):
        gap = np.mean(np.asarray(self.h2(mu1.points), dtype=float), axis=0) \
            - np.mean(np.asarray(self.h2(mu2.points), dtype=float), axis=0)
        return self.weight * float(gap @ gap)


@dataclass
class ConvolutionCoupling:
    """F(x, mu) = int l(z, rho*mu(z)) rho(z - x) nu(dz) with nu an
    empirical sample and rho*mu(z) = int rho(z - u) mu(du)."""

    ell: object  # (z (..., N), r (...)) -> (...)
    rho: object  # (z (..., N)) -> (...)
    nu_points: np.ndarray
    lip: float
    bound: float
    label: str = "convolution"

    def __post_init__(self):
        self.nu_points = np.atleast_2d(np.asarray(self.nu_points, dtype=float))
        if self.nu_points.size == 0:
            raise ValueError("the convolution coupling needs a nonempty nu sample")

    def rho_conv(self, Z, mu):
        diffs = Z[:, None, :] - mu.points[None, :, :]
        return np.mean(np.asarray(self.rho(diffs), dtype=float), axis=-1)

    def __call__(self, X, mu):
        X = np.asarray(X, dtype=float)
        flat = X.reshape(-1, X.shape[-1])
        z = self.nu_points
        lz = np.asarray(self.ell(z, self.rho_conv(z, mu)), dtype=float)
        w = np.asarray(self.rho(z[None, :, :] - flat[:, None, :]), dtype=float)
        return (w @ lz / len(z)).reshape(X.shape[:-1])


def coupling_value(coupling, x, mu):
    """Evaluate a coupling at a single point x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(np.asarray(coupling(x[None, :], mu)).reshape(-1)[0])


def default_pair_sampler(n_modes, M=64):
    """Randomized measure pairs: Gaussian clouds, constant (Dirac-like)
    clouds, and half-and-half mixtures, rotating by seed."""

    def sample(seed):
        g = rng.generator(seed, _TAG_PAIR)

        def cloud():
            mean = g.uniform(-1.0, 1.0, n_modes)
            sd = g.uniform(0.3, 1.2, n_modes)
            return ParticleMeasure(mean + sd * g.standard_normal((M, n_modes)))

        kind = int(g.integers(3))
        if kind == 0:
            return cloud(), cloud()
        if kind == 1:
            a = g.uniform(-1.5, 1.5, n_modes)
            b = g.uniform(-1.5, 1.5, n_modes)
            return (ParticleMeasure(np.tile(a, (M, 1))),
                    ParticleMeasure(np.tile(b, (M, 1))))
        half = M // 2
        mixed = np.vstack([cloud().points[: M - half], cloud().points[:half]])
        return ParticleMeasure(mixed), cloud()

    return sample


@dataclass
class MonotonicityReport:
    label: str
    trials: int
    min_pairing: float
    min_stderr: float
    passed: bool
    identity_gap: float = None  # only for the rank-one couplings
    zero_nondegenerate: int = 0


def monotonicity_check(coupling, sampler=None, trials=1000, seed=0, n_modes=1):
    """Evaluate the pairing int [F(x,mu1) - F(x,mu2)] (mu1 - mu2)(dx) on
    randomized pairs, as the difference of empirical means over the two
    supports.  PASS means no pairing fell below -1e-9 minus 3 bootstrap
    standard errors."""
    sampler = sampler or default_pair_sampler(n_modes)
    closed = getattr(coupling, "closed_pairing", None)
    min_pairing, min_se = np.inf, 0.0
    identity_gap = 0.0 if closed else None
    passed = True
    zero_nondeg = 0
    for i in range(trials):
        mu1, mu2 = sampler(rng.derive_seed(seed, _TAG_MONO, i))
        delta_on_1 = np.asarray(coupling(mu1.points, mu1), dtype=float) \
            - np.asarray(coupling(mu1.points, mu2), dtype=float)
        delta_on_2 = np.asarray(coupling(mu2.points, mu1), dtype=float) \
            - np.asarray(coupling(mu2.points, mu2), dtype=float)
        pairing = float(delta_on_1.mean() - delta_on_2.mean())
        se = math.hypot(bootstrap_stderr(delta_on_1, seed=rng.derive_seed(seed, _TAG_BOOT, i, 0)),
                        bootstrap_stderr(delta_on_2, seed=rng.derive_seed(seed, _TAG_BOOT, i, 1)))
        if closed is not None:
            identity_gap = max(identity_gap, abs(pairing - closed(mu1, mu2)))
        if pairing < min_pairing:
            min_pairing, min_se = pairing, se
        if pairing < -1e-9 - 3.0 * se:
            passed = False
        if abs(pairing) < 1e-12 and wasserstein1(mu1, mu2) > 1e-6:
            zero_nondeg += 1
    return MonotonicityReport(label=getattr(coupling, "label", ""), trials=trials,
                              min_pairing=min_pairing, min_stderr=min_se,
                              passed=passed, identity_gap=identity_gap,
                              zero_nondegenerate=zero_nondeg)


@dataclass
class AssumptionReport:
    hp_worst: float
    hp_declared: float
    lip_p_worst: float
    lip_p_declared: float
    lip_mu_worst: float
    lip_mu_declared: float
    hp_lip_worst: float

    @property
    def hp_ok(self):
        return self.hp_worst <= self.hp_declared + 1e-9

    @property
    def lip_ok(self):
        ok = True
        if self.lip_p_declared is not None:
            ok = ok and self.lip_p_worst <= self.lip_p_declared + 1e-9
        if self.lip_mu_declared is not None:
            ok = ok and self.lip_mu_worst <= self.lip_mu_declared + 1e-9
        return ok

    @property
    def ok(self):
        return bool(self.hp_ok and self.lip_ok)


def assumption_check(hamiltonian, n_modes, trials=200, seed=0):
    """Spot-check the declared bounds: |H_p| against its cap, and the
    Lipschitz ratios of H in p (measure frozen) and in mu (p frozen)."""
    g = rng.generator(seed, _TAG_CHECK)
    sampler = default_pair_sampler(n_modes, M=32)
    hp_worst = 0.0
    lip_p_worst = 0.0
    lip_mu_worst = 0.0
    hp_lip_worst = 0.0
    for i in range(trials):
        x = g.uniform(-3.0, 3.0, (1, n_modes))
        p = g.uniform(-3.0, 3.0, (1, n_modes))
        q = g.uniform(-3.0, 3.0, (1, n_modes))
        mu1, mu2 = sampler(rng.derive_seed(seed, _TAG_CHECK, i))
        hp1 = np.asarray(hamiltonian.grad_p(x, p, mu1), dtype=float)[0]
        hp2 = np.asarray(hamiltonian.grad_p(x, q, mu1), dtype=float)[0]
        hp_worst = max(hp_worst, float(np.linalg.norm(hp1)))
        dp = float(np.linalg.norm(p - q))
        if dp > 1e-9:
            v1 = float(hamiltonian.value(x, p, mu1)[0])
            v2 = float(hamiltonian.value(x, q, mu1)[0])
            lip_p_worst = max(lip_p_worst, abs(v1 - v2) / dp)
            hp_lip_worst = max(hp_lip_worst, float(np.linalg.norm(hp1 - hp2)) / dp)
        d1 = wasserstein1(mu1, mu2)
        if d1 > 1e-9:
            w1 = float(hamiltonian.value(x, p, mu1)[0])
            w2 = float(hamiltonian.value(x, p, mu2)[0])
            lip_mu_worst = max(lip_mu_worst, abs(w1 - w2) / d1)
    return AssumptionReport(
        hp_worst=hp_worst,
        hp_declared=float(hamiltonian.bound_Hp),
        lip_p_worst=lip_p_worst,
        lip_p_declared=getattr(hamiltonian, "lip_p", None),
        lip_mu_worst=lip_mu_worst,
        lip_mu_declared=getattr(hamiltonian, "lip_mu", None),
        hp_lip_worst=hp_lip_worst,
    )


def make_convolution_coupling(n_modes, seed=0, nu_size=64):
    """Shipped convolution example: Gaussian bump rho, l(z, r) = tanh(r)
    (strictly increasing, Lipschitz), nu a seeded Gaussian sample."""
    rho = lambda Z: np.exp(-0.5 * np.sum(np.square(Z), axis=-1))
    ell = lambda z, r: np.tanh(r)
    pts = rng.generator(seed, _TAG_NU).standard_normal((nu_size, n_modes))
    # lip = L_ell * L_rho + ... ; both factors bounded by 1 and exp(-1/2)
    lip = 2.0 * math.exp(-0.5)
    return ConvolutionCoupling(ell=ell, rho=rho, nu_points=pts, lip=lip, bound=1.0)


MODEL_NAMES = ("cap1d_monotone", "cap1d_antimonotone", "cap2d_f2")


def make_model(name, coupling_weight=None):
    """Shipped presets wiring the capped Hamiltonian to a coupling, a
    bounded terminal, an initial law, and a spectrum that certifies the
    trace condition."""
    if name == "cap1d_monotone" or name == "cap1d_antimonotone":
        weight = coupling_weight
        if weight is None:
            weight = 1.0 if name == "cap1d_monotone" else -3.0
        spec = SpectrumSpec(eigenvalues=(-1.0,), delta=0.5, family=("power", 1.0, 3.0))
        cap = CappedControlHamiltonian(R=1.0)
        coupling = F1Coupling(h1=lambda X: 0.8 * np.tanh(X[..., 0]),
                              lip=0.8 * abs(weight), bound=0.8 * abs(weight),
                              weight=weight)
        terminal = lambda X, mu: 0.4 * np.tanh(X[..., 0])
        ham = cap.separated(coupling, terminal, label=name)
        return MFGProblem(spectrum=spec, hamiltonian=ham, terminal=terminal,
                          m0=Dirac([0.0]), horizon=1.0)
    if name == "cap2d_f2":
        spec = SpectrumSpec(eigenvalues=(-1.0, -4.0), delta=0.25, family=("power", 1.0, 2.0))
        b0 = lambda X: 0.3 * np.tanh(X)
        cap = CappedControlHamiltonian(R=1.0, b0=b0, b0_bound=0.3 * math.sqrt(2.0))
        coupling = F2Coupling(h2=lambda X: 0.5 * np.tanh(X),
                              lip=0.5 * math.sqrt(2.0), bound=0.5 * math.sqrt(2.0))
        terminal = lambda X, mu: 0.3 * np.cos(X[..., 0] + X[..., 1])
        ham = cap.separated(coupling, terminal, label=name)
        m0 = ProductGaussian(mean=[0.2, 0.0], var=[0.2, 0.1])
        return MFGProblem(spectrum=spec, hamiltonian=ham, terminal=terminal,
                          m0=m0, horizon=1.0)
    raise ValueError("unknown model %r; shipped: %s" % (name, ", ".join(MODEL_NAMES)))
