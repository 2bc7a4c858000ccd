"""Ornstein-Uhlenbeck transition semigroup R_t and its smoothing gradient.

    [R_t phi](x)   = E[phi(e^{tA} x + Z_t)],   Z_t ~ N(0, diag q_k(t))
    [D R_t phi]_k  = E[phi(e^{tA} x + Z_t) * Lambda_k(t) * zeta_k]

with Lambda_k(t) = e^{lambda_k t} / sqrt(q_k(t)) and zeta the standardized
noise.  The gradient uses the likelihood-ratio weight rather than
differentiating through phi, so it stays valid for merely bounded fields;
Lambda_k blows up like t^{-1/2}, which is the smoothing rate the HJB solver
budgets for.

Expectations are evaluated by tensor Gauss-Hermite quadrature over the
modes: deterministic and spectrally accurate for smooth integrands (a
Monte Carlo route exists only as a test oracle).  Fields are callables on
(..., N)-shaped coordinate arrays; grid-backed fields expose a `box`
attribute, in which case the Gaussian mass falling outside the box (where
the field extrapolates as a constant) is logged as the bias scale.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import ndtr

from .spectrum import covariance_diag, semigroup_factors

logger = logging.getLogger(__name__)


@dataclass
class QuadratureRule:
    """Per-mode Gauss-Hermite rule on the standard normal weight."""

    nodes_per_mode: int = 16
    nodes: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.nodes_per_mode < 1:
            raise ValueError("need at least one quadrature node")
        h_nodes, h_weights = hermgauss(self.nodes_per_mode)
        # physicists' weight e^{-x^2} -> standard normal: x = sqrt(2) t, w / sqrt(pi)
        self.nodes = np.sqrt(2.0) * h_nodes
        self.weights = h_weights / np.sqrt(np.pi)
        self.weights = self.weights / self.weights.sum()
        self._tensor_cache = {}

    def tensor(self, n_modes):
        """(Z, W): nodes (Q, n_modes) and weights (Q,) of the product rule."""
        if n_modes not in self._tensor_cache:
            grids = np.meshgrid(*([self.nodes] * n_modes), indexing="ij")
            Z = np.stack([g.ravel() for g in grids], axis=-1)
            W = np.ones(Z.shape[0])
            wgrids = np.meshgrid(*([self.weights] * n_modes), indexing="ij")
            for wg in wgrids:
                W = W * wg.ravel()
            self._tensor_cache[n_modes] = (Z, W)
        return self._tensor_cache[n_modes]


def _as_points(x, n_modes):
    x = np.asarray(x, dtype=float)
    if x.shape == (n_modes,):
        return x[None, :], True
    if x.ndim >= 1 and x.shape[-1] == n_modes:
        lead = x.shape[:-1]
        return x.reshape(-1, n_modes), lead
    raise ValueError("points must have %d mode coordinates on the last axis" % n_modes)


class OUKernel:
    """R_t and D R_t for a fixed spectrum and quadrature rule."""

    def __init__(self, spec, rule=None):
        self.spec = spec
        self.rule = rule if rule is not None else QuadratureRule()
        self.last_tail_mass = 0.0

    def _images(self, t, pts):
        """Quadrature images e^{tA} x + sd * z for a (G, N) batch."""
        Z, W = self.rule.tensor(self.spec.N)
        mean = pts * semigroup_factors(self.spec, t)
        sd = np.sqrt(covariance_diag(self.spec, t))
        images = mean[:, None, :] + sd[None, None, :] * Z[None, :, :]
        return images, Z, W, sd

    def _log_tail(self, phi, t, pts, sd):
        box = getattr(phi, "box", None)
        if box is None or np.all(sd == 0):
            return
        mean = pts * semigroup_factors(self.spec, t)
        L = np.broadcast_to(np.asarray(box, dtype=float), (self.spec.N,))
        with np.errstate(divide="ignore"):
            lo = ndtr((-L - mean) / np.where(sd > 0, sd, np.inf))
            hi = ndtr((mean - L) / np.where(sd > 0, sd, np.inf))
        mass = float(np.max(np.sum(lo + hi, axis=-1)))
        self.last_tail_mass = mass
        if mass > 0:
            logger.debug("R_t tail mass outside box at t=%.5g: %.3e", t, mass)

    def apply_Rt(self, phi, t, x):
        """[R_t phi](x) for x of shape (..., N); t = 0 returns phi(x)."""
        if t < 0:
            raise ValueError("t must be >= 0")
        pts, lead = _as_points(x, self.spec.N)
        if t == 0.0:
            vals = np.asarray(phi(pts), dtype=float)
        else:
            images, _, W, sd = self._images(t, pts)
            self._log_tail(phi, t, pts, sd)
            vals = np.asarray(phi(images), dtype=float) @ W
        if lead is True:
            return float(vals[0])
        return vals.reshape(lead)

    def gradient_DRt(self, phi, t, x):
        """[D R_t phi](x), shape (..., N); the representation needs t > 0."""
        if t <= 0:
            raise ValueError("gradient representation is singular at t = 0; differentiate phi directly")
        pts, lead = _as_points(x, self.spec.N)
        images, Z, W, sd = self._images(t, pts)
        self._log_tail(phi, t, pts, sd)
        vals = np.asarray(phi(images), dtype=float)
        lam_weight = semigroup_factors(self.spec, t) / np.sqrt(covariance_diag(self.spec, t))
        grad = np.einsum("gq,q,qk->gk", vals, W, Z) * lam_weight
        if lead is True:
            return grad[0]
        return grad.reshape(lead + (self.spec.N,))

    def as_field(self, phi, t):
        """R_t phi as a ScalarField (for composition and tests)."""
        return lambda y: self.apply_Rt(phi, t, y)

    def smoothing_audit(self, phi, t_grid, x_sample, sup_norm=None):
        """Tabulate sup_x |D R_t phi(x)| * sqrt(t) / ||phi|| over the t grid.

        A bounded column certifies the t^{-1/2} smoothing rate.  sup_norm
        defaults to the sample sup of |phi|.
        """
        pts, _ = _as_points(x_sample, self.spec.N)
        if sup_norm is None:
            sup_norm = float(np.max(np.abs(phi(pts))))
        if sup_norm == 0:
            sup_norm = 1.0
        t_grid = np.asarray(t_grid, dtype=float)
        ratios = np.empty_like(t_grid)
        for i, t in enumerate(t_grid):
            g = self.gradient_DRt(phi, t, pts)
            ratios[i] = np.max(np.linalg.norm(g, axis=-1)) * np.sqrt(t) / sup_norm
        return SmoothingTable(t=t_grid, ratio=ratios)


@dataclass
class SmoothingTable:
    t: np.ndarray
    ratio: np.ndarray

    @property
    def max_ratio(self):
        return float(np.max(self.ratio))
