# Ornstein-Uhlenbeck semigroup on mode coordinates.
#
# The state operator is diagonal with negative eigenvalues, so the OU
# transition kernel factorizes over modes: mode k is a 1-d Gaussian with
# mean e^{lam_k t} x_k and variance q_k(t) = (e^{2 lam_k t} - 1)/(2 lam_k).
# The kernel object evaluates (R_t phi)(x) by tensor Gauss-Hermite
# quadrature.  Here we check it against closed forms and look at the
# gradient smoothing factor that makes the mild HJB fixed point work.

import numpy as np

from hilbert_mfg import (
    OUKernel,
    QuadratureRule,
    SpectrumSpec,
    covariance_qk,
    semigroup_factors,
    stationary_variances,
)

# Two explicit modes, embedded in the power family lam_k = -1 * k^2 so the
# trace condition holds for the unresolved tail.
spec = SpectrumSpec((-1.0, -4.0), delta=0.25, family=("power", 1.0, 2.0))
print("eigenvalues:", spec.lam)
print("stationary variances 1/(2|lam|):", stationary_variances(spec))

t = 0.3
print("contraction factors e^{lam t} at t=0.3:", semigroup_factors(spec, t))
print("mode-1 covariance q_1(0.3):", covariance_qk(spec, 1, t))

# Apply R_t to phi(x) = x_1^2.  Closed form:
#   (R_t phi)(x) = e^{2 lam_1 t} x_1^2 + q_1(t).
kernel = OUKernel(spec, QuadratureRule(nodes_per_mode=24))
x = np.array([[0.7, -0.2], [0.0, 1.0], [-1.3, 0.4]])
phi = lambda X: X[..., 0] ** 2
got = kernel.apply_Rt(phi, t, x)
want = np.exp(2 * spec.lam[0] * t) * x[:, 0] ** 2 + covariance_qk(spec, 1, t)
print("R_t x_1^2, quadrature:", got)
print("R_t x_1^2, closed form:", want)
print("max abs error:", np.max(np.abs(got - want)))

# The gradient of R_t phi contracts mode by mode.  For linear phi the
# relation is exact: D_k R_t (x_k) = e^{lam_k t}.
grad = kernel.gradient_DRt(lambda X: X[..., 1], t, np.zeros((1, 2)))
print("D R_t x_2 at the origin:", grad[0])
print("expected e^{lam_2 t}:", np.exp(spec.lam[1] * t))

# smoothing_audit tabulates sup|D R_t phi| * sqrt(t) / sup|phi| on a time
# grid.  A bounded column certifies the t^{-1/2} smoothing rate that lets
# the mild solver handle merely bounded terminal data.
t_grid = np.array([0.05, 0.1, 0.3, 0.6, 1.0])
sample = np.random.default_rng(0).normal(size=(40, 2))
table = kernel.smoothing_audit(lambda X: np.tanh(X[..., 0]), t_grid, sample)
print("smoothing audit, sup|D R_t phi| sqrt(t) / sup|phi|:")
for ti, ri in zip(table.t, table.ratio):
    print("  t=%.2f  ratio=%.4f" % (ti, ri))
