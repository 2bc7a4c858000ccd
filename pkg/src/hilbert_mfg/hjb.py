"""Mild-form backward equations on a time mesh x spatial tensor grid.

The value function is represented by its values and spatial gradient on a
tensor grid over [-L, L]^N and solved in mild form,

    v(t, x) = [R_{T-t} G](x) - int_t^T [R_{s-t} H(., Dv(s, .), m(s))](x) ds,

with the semigroup applied by Gauss-Hermite quadrature (ou_kernel).  The
time integrand's gradient carries an (s - t)^{-1/2} singularity, so the
integral is computed after the substitution s = t + tau^2, which turns the
kernel weight into a bounded function of tau; a uniform trapezoid rule in
tau then converges at its usual rate.  At tau = 0 both integrands vanish
(the value one carries the factor 2 tau, the gradient one is 2 tau times a
quantity converging to the integrand's own spatial gradient), so the left
endpoint contributes exactly zero.

The gradient grid exists only for t < T: the smoothing representation is
singular at the terminal time, and every consumer (drift assembly, norms)
uses the weighted quantity (T-t)^{1/2} Dv, with the final transport step
reading the last available slice.

The nonlinear solve iterates v^{(0)} = R_{T-t} G and
v^{(j+1)} = RHS(v^{(j)}), stopping when the weighted gradient change
sup_t (T-t)^{1/2} max_grid |Dv^{(j+1)} - Dv^{(j)}| drops below tolerance.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import interpn

from .ou_kernel import OUKernel, QuadratureRule
from .spectrum import stationary_variances

_FMT = "%.17g"


def default_box(spec, m0=None, scale=6.0):
    """Half-width L of the grid box [-L, L]^N covering the stationary law
    and the initial law out to `scale` standard deviations."""
    alphas = stationary_variances(spec)
    betas = np.zeros(spec.N)
    if m0 is not None:
        betas = np.array([m0.mode_second_moment(k) for k in range(1, spec.N + 1)])
    return float(scale * np.sqrt(np.max(alphas + betas)))


def grid_axes(box, n_modes, resolution):
    return tuple(np.linspace(-box, box, int(resolution)) for _ in range(n_modes))


def _tensor_points(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _interp_scalar(axes, table, pts):
    q = np.stack([np.clip(pts[:, k], ax[0], ax[-1]) for k, ax in enumerate(axes)], axis=-1)
    return interpn(axes, table, q, method="linear")


@dataclass
class GridValueField:
    """Value function and spatial gradient sampled on a time x space grid.

    values has shape (J+1, *grid); grads has shape (J, *grid, N) and stops
    one slice short of the terminal time (see module docstring).
    """

    times: np.ndarray
    axes: tuple
    values: np.ndarray
    grads: np.ndarray
    status: str = "direct"
    history: tuple = field(default_factory=tuple)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        self.values = np.asarray(self.values, dtype=float)
        self.grads = np.asarray(self.grads, dtype=float)
        J = len(self.times) - 1
        shape = tuple(len(a) for a in self.axes)
        if self.values.shape != (J + 1,) + shape:
            raise ValueError("values shape %s does not match mesh/grid" % (self.values.shape,))
        if self.grads.shape != (J,) + shape + (self.n_modes,):
            raise ValueError("grads shape %s does not match mesh/grid" % (self.grads.shape,))
        if not (np.all(np.isfinite(self.values)) and np.all(np.isfinite(self.grads))):
            raise FloatingPointError("non-finite entry in value field")

    @property
    def n_modes(self):
        return len(self.axes)

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    @property
    def weighted_gradient_norm(self):
        """sup over t < T of (T-t)^{1/2} max |Dv(t, .)| on the grid."""
        if len(self.grads) == 0:
            return 0.0
        w = np.sqrt(self.T - self.times[:-1])
        per_slice = np.max(np.abs(self.grads).reshape(len(self.grads), -1), axis=1)
        return float(np.max(w * per_slice))

    def _flat(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_modes:
            raise ValueError("points have %d modes, field has %d" % (X.shape[-1], self.n_modes))
        lead = X.shape[:-1]
        return X.reshape(-1, self.n_modes), lead

    def _bracket(self, t):
        t = float(np.clip(t, 0.0, self.T))
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        j = min(max(j, 0), len(self.times) - 2)
        h = self.times[j + 1] - self.times[j]
        return j, (t - self.times[j]) / h

    def value_at(self, t, X):
        pts, lead = self._flat(X)
        j, w = self._bracket(t)
        lo = _interp_scalar(self.axes, self.values[j], pts)
        if w > 1e-12:
            hi = _interp_scalar(self.axes, self.values[j + 1], pts)
            lo = (1.0 - w) * lo + w * hi
        return lo.reshape(lead) if lead else float(lo[0])

    def grad_at(self, t, X):
        """Dv at time t; beyond the last stored slice the terminal-layer
        convention applies and the last slice is returned."""
        pts, lead = self._flat(X)
        j, w = self._bracket(t)
        last = len(self.grads) - 1

        def slice_at(i):
            g = self.grads[i]
            return np.stack(
                [_interp_scalar(self.axes, g[..., k], pts) for k in range(self.n_modes)],
                axis=-1,
            )

        if j >= last:
            out = slice_at(last)
        else:
            out = slice_at(j)
            if w > 1e-12:
                out = (1.0 - w) * out + w * slice_at(j + 1)
        return out.reshape(lead + (self.n_modes,)) if lead else out[0]

    def to_dir(self, path, extra=None):
        """One CSV per time slice (coordinates, value, gradient components)
        plus the mesh, the axes, and a metadata table; extra key/value rows
        (diagnostics computed by the caller) append to the metadata."""
        d = Path(path)
        d.mkdir(parents=True, exist_ok=True)
        np.savetxt(d / "times.csv", self.times, fmt=_FMT, header="t", comments="")
        lengths = {len(a) for a in self.axes}
        if len(lengths) != 1:
            raise ValueError("serialization requires equal per-mode resolutions")
        np.savetxt(
            d / "axes.csv",
            np.stack(self.axes, axis=-1),
            fmt=_FMT,
            delimiter=",",
            header=",".join("mode_%d" % (k + 1) for k in range(self.n_modes)),
            comments="",
        )
        pts = _tensor_points(self.axes)
        coord_names = ["x_%d" % (k + 1) for k in range(self.n_modes)]
        grad_names = ["dv_%d" % (k + 1) for k in range(self.n_modes)]
        for j in range(len(self.times)):
            cols = [pts, self.values[j].ravel()[:, None]]
            names = coord_names + ["v"]
            if j < len(self.grads):
                cols.append(self.grads[j].reshape(-1, self.n_modes))
                names += grad_names
            np.savetxt(
                d / ("v_%04d.csv" % j),
                np.hstack(cols),
                fmt=_FMT,
                delimiter=",",
                header=",".join(names),
                comments="",
            )
        with open(d / "metadata.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["key", "value"])
            w.writerow(["status", self.status])
            w.writerow(["sup_norm", _FMT % self.sup_norm])
            w.writerow(["weighted_gradient_norm", _FMT % self.weighted_gradient_norm])
            w.writerow(["history", "|".join(_FMT % h for h in self.history)])
            for key, value in (extra or {}).items():
                w.writerow([key, _FMT % value if isinstance(value, float) else str(value)])

    @classmethod
    def from_dir(cls, path):
        d = Path(path)
        times = np.atleast_1d(np.loadtxt(d / "times.csv", skiprows=1))
        axes_table = np.atleast_2d(np.loadtxt(d / "axes.csv", skiprows=1, delimiter=","))
        if axes_table.shape[0] == 1:
            axes_table = axes_table.T
        axes = tuple(axes_table[:, k] for k in range(axes_table.shape[1]))
        n = len(axes)
        shape = tuple(len(a) for a in axes)
        J = len(times) - 1
        values = np.empty((J + 1,) + shape)
        grads = np.empty((J,) + shape + (n,))
        for j in range(J + 1):
            table = np.atleast_2d(np.loadtxt(d / ("v_%04d.csv" % j), skiprows=1, delimiter=","))
            values[j] = table[:, n].reshape(shape)
            if j < J:
                grads[j] = table[:, n + 1 : 2 * n + 1].reshape(shape + (n,))
        meta = {}
        with open(d / "metadata.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                meta[row["key"]] = row["value"]
        history = tuple(float(tok) for tok in meta.get("history", "").split("|") if tok)
        return cls(times=times, axes=axes, values=values, grads=grads,
                   status=meta.get("status", "direct"), history=history)


@dataclass
class GeneralHamiltonian:
    """H(x, p, mu) given directly, with declared bounds for the audits."""

    value_fn: object
    grad_p_fn: object
    bound_Hp: float
    lip_p: float = None
    lip_mu: float = None
    label: str = ""

    def value(self, X, P, mu):
        return np.asarray(self.value_fn(X, P, mu), dtype=float)

    def grad_p(self, X, P, mu):
        return np.asarray(self.grad_p_fn(X, P, mu), dtype=float)


@dataclass
class SeparatedHamiltonian:
    """H(x, p, mu) = H0(x, p) - F(x, mu); the separated shape is what the
    monotonicity-based uniqueness argument needs."""

    h0: object
    h0_p: object
    coupling: object  # F(x, mu)
    terminal: object  # G(x, mu), carried for the uniqueness gate
    bound_Hp: float
    lip_p: float = None
    lip_mu: float = None
    label: str = ""

    def value(self, X, P, mu):
        return np.asarray(self.h0(X, P), dtype=float) - np.asarray(self.coupling(X, mu), dtype=float)

    def grad_p(self, X, P, mu):
        return np.asarray(self.h0_p(X, P), dtype=float)


def zero_hamiltonian(n_modes, label="zero"):
    return GeneralHamiltonian(
        value_fn=lambda X, P, mu: np.zeros(X.shape[:-1]),
        grad_p_fn=lambda X, P, mu: np.zeros(X.shape[:-1] + (X.shape[-1],)),
        bound_Hp=0.0,
        lip_p=0.0,
        lip_mu=0.0,
        label=label,
    )


def _mild_sweep(kernel, terminal, integrand_at, times, axes, tau_nodes):
    """One evaluation of the mild right-hand side on the full grid.

    integrand_at(s) must return a batch field x -> H(...) or be None for
    the pure semigroup term.
    """
    T = times[-1]
    J = len(times) - 1
    shape = tuple(len(a) for a in axes)
    n = len(axes)
    pts = _tensor_points(axes)
    values = np.empty((J + 1,) + shape)
    grads = np.empty((J,) + shape + (n,))
    for j in range(J + 1):
        horizon = T - times[j]
        v = kernel.apply_Rt(terminal, horizon, pts)
        g = kernel.gradient_DRt(terminal, horizon, pts) if j < J else None
        if integrand_at is not None and horizon > 0:
            taus = np.linspace(0.0, np.sqrt(horizon), tau_nodes)
            v_int = np.zeros((tau_nodes, len(pts)))
            g_int = np.zeros((tau_nodes, len(pts), n))
            for i in range(1, tau_nodes):
                tau = taus[i]
                fld = integrand_at(times[j] + tau * tau)
                v_int[i] = 2.0 * tau * kernel.apply_Rt(fld, tau * tau, pts)
                if j < J:
                    g_int[i] = 2.0 * tau * kernel.gradient_DRt(fld, tau * tau, pts)
            v = v - np.trapezoid(v_int, x=taus, axis=0)
            if j < J:
                g = g - np.trapezoid(g_int, x=taus, axis=0)
        values[j] = v.reshape(shape)
        if j < J:
            grads[j] = g.reshape(shape + (n,))
    return values, grads


def solve_kolmogorov(f, phi, spec, config, m0=None, box=None):
    """Linear backward equation dv/dt + L0 v = f, v(T) = phi, in mild form
    v(t) = R_{T-t} phi - int_t^T R_{s-t} f(s) ds."""
    kernel = OUKernel(spec, QuadratureRule(config.quad_nodes))
    L = default_box(spec, m0, config.box_scale) if box is None else float(box)
    axes = grid_axes(L, spec.N, config.grid_points)
    times = config.mesh()
    integrand_at = None if f is None else (lambda s: (lambda X: np.asarray(f(s, X), dtype=float)))
    values, grads = _mild_sweep(kernel, phi, integrand_at, times, axes, config.tau_nodes)
    return GridValueField(times=times, axes=axes, values=values, grads=grads, status="direct")


def _weighted_change(times, grads_new, grads_old):
    w = np.sqrt(times[-1] - times[:-1])
    diff = np.max(np.abs(grads_new - grads_old).reshape(len(grads_new), -1), axis=1)
    return float(np.max(w * diff))


def weighted_gradient_change(a, b):
    """sup_t (T-t)^{1/2} max_grid |Da - Db| between two fields on the same
    mesh and grid; the metric both the Picard stop rule and the
    data-continuity audit use."""
    if len(a.times) != len(b.times) or not np.allclose(a.times, b.times):
        raise ValueError("fields live on different meshes")
    return _weighted_change(a.times, a.grads, b.grads)


def solve_hjb_mild(H, G, m, spec, config, box=None):
    """Nonlinear mild solve against a frozen measure path m.

    Iterates the right-hand side from v = R_{T-t} G(., m(T)); each sweep
    reads the previous sweep's gradient (time-interpolated) and the
    measure path (nearest mesh point).  Stops on the weighted gradient
    change; a run that exhausts the iteration budget is returned with
    status "max-iterations" and the full change history.
    """
    times = config.mesh()
    if len(m.times) != len(times) or not np.allclose(m.times, times):
        raise ValueError("measure path mesh does not match the config mesh")
    kernel = OUKernel(spec, QuadratureRule(config.quad_nodes))
    L = default_box(spec, None, config.box_scale) if box is None else float(box)
    axes = grid_axes(L, spec.N, config.grid_points)
    mT = m.at_time(times[-1])
    terminal = lambda X: np.asarray(G(X, mT), dtype=float)

    values, grads = _mild_sweep(kernel, terminal, None, times, axes, config.tau_nodes)
    current = GridValueField(times=times, axes=axes, values=values, grads=grads)
    history = []
    status = "max-iterations"
    for _ in range(config.picard_max):
        prev = current

        def integrand_at(s):
            mu = m.at_time(s)
            return lambda X: H.value(X, prev.grad_at(s, X), mu)

        values, grads = _mild_sweep(kernel, terminal, integrand_at, times, axes, config.tau_nodes)
        current = GridValueField(times=times, axes=axes, values=values, grads=grads)
        history.append(_weighted_change(times, current.grads, prev.grads))
        if history[-1] < config.picard_tol:
            status = "converged"
            break
    return GridValueField(times=times, axes=axes, values=current.values,
                          grads=current.grads, status=status, history=tuple(history))


def hjb_residual(v, H, G, m, samples, spec, config):
    """Max defect of the mild identity over (t, x) samples, recomputed with
    an independent, finer quadrature (double the spatial nodes, double the
    tau resolution)."""
    kernel = OUKernel(spec, QuadratureRule(2 * config.quad_nodes))
    tau_nodes = 2 * config.tau_nodes - 1
    mT = m.at_time(v.T)
    terminal = lambda X: np.asarray(G(X, mT), dtype=float)
    worst = 0.0
    for t, x in samples:
        t = float(t)
        if t >= v.T:
            raise ValueError("residual samples need t < T")
        x = np.asarray(x, dtype=float)
        horizon = v.T - t
        rhs = kernel.apply_Rt(terminal, horizon, x)
        taus = np.linspace(0.0, np.sqrt(horizon), tau_nodes)
        vals = np.zeros(tau_nodes)
        for i in range(1, tau_nodes):
            tau = taus[i]
            s = t + tau * tau
            mu = m.at_time(s)
            fld = lambda X: H.value(X, v.grad_at(s, X), mu)
            vals[i] = 2.0 * tau * kernel.apply_Rt(fld, tau * tau, x)
        rhs = rhs - np.trapezoid(vals, x=taus)
        worst = max(worst, abs(v.value_at(t, x) - rhs))
    return float(worst)
