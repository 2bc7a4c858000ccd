"""Shared solver configuration.

One dataclass carries every numeric knob so that run configs serialize to a
flat record and identical configs mean identical runs (all randomness is
keyed by the seed, see rng.py).
"""

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class SolverConfig:
    horizon: float = 1.0        # T
    dt: float = 0.05            # mesh step shared by the HJB mesh and the particle scheme
    particles: int = 10_000     # M
    grid_points: int = 64       # spatial resolution per mode
    box_scale: float = 6.0      # half-width L = box_scale * max_k sqrt(alpha_k + beta_k)
    quad_nodes: int = 16        # Gauss-Hermite nodes per mode
    tau_nodes: int = 33         # nodes of the s = t + tau^2 singular-kernel quadrature
    picard_tol: float = 1e-4    # weighted gradient-change stopping threshold
    picard_max: int = 40
    fp_tol: float = 1e-2        # rho_inf change stopping threshold for the fixed point
    fp_max: int = 50
    damping: float = 0.5        # theta of the damped iteration
    exact_w1_budget: int = 512  # assignment solver cap; sliced surrogate beyond
    sliced_projections: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.horizon <= 0 or self.dt <= 0:
            raise ValueError("horizon and dt must be positive")
        for name in ("picard_tol", "fp_tol"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be positive" % name)
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.particles < 1 or self.grid_points < 2 or self.quad_nodes < 1:
            raise ValueError("particles >= 1, grid_points >= 2, quad_nodes >= 1 required")
        if self.tau_nodes < 2:
            raise ValueError("tau_nodes >= 2 required")

    @property
    def n_steps(self):
        return max(1, int(round(self.horizon / self.dt)))

    def mesh(self):
        """Time mesh 0 = t_0 < ... < t_J = T; realized step is horizon / n_steps."""
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def with_(self, **kw):
        return replace(self, **kw)
