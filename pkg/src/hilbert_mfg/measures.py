"""Empirical measures on mode coordinates, Wasserstein-1 geometry, moment
functionals, and the compactness-set membership audits.

Measures are equal-weight particle clouds on the first N mode coordinates.
Exact W1 between equal-count clouds is the linear assignment problem with
Euclidean ground cost; beyond the configured budget a sliced surrogate
(average of 1-D sorted-coupling distances over random unit directions) is
used and the choice is reported.  All randomized surrogates are
deterministic functions of their seed.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from . import rng

# Resampling cap when reconciling unequal particle counts to a common size.
_COMMON_SIZE_CAP = 4096

# Stream tags for the auxiliary randomness consumers in this module.
_TAG_RESAMPLE = 0xC0
_TAG_SLICE = 0x51
_TAG_POOL_A = 0xA0
_TAG_POOL_B = 0xB0
_TAG_PAIRS = 0x9A


@dataclass
class ParticleMeasure:
    """Equal-weight cloud of M points on N mode coordinates."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ValueError("empty measure")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinate in measure")
        pts = pts.copy()
        pts.flags.writeable = False
        self.points = pts

    @property
    def M(self):
        return self.points.shape[0]

    @property
    def N(self):
        return self.points.shape[1]

    def mode_second_moment(self, k):
        """(1/M) sum_i <x_i, e_k>^2 for 1-based mode k."""
        if not 1 <= k <= self.N:
            raise IndexError("mode index %d out of range 1..%d" % (k, self.N))
        return float(np.mean(self.points[:, k - 1] ** 2))

    def norm_fourth_moment(self):
        """(1/M) sum_i |x_i|^4."""
        return float(np.mean(np.sum(self.points ** 2, axis=1) ** 2))

    def second_moments(self):
        return np.mean(self.points ** 2, axis=0)

    def mean(self):
        return np.mean(self.points, axis=0)


@dataclass
class MeasurePath:
    """Time-indexed path of particle measures on a shared mesh over [0, T]."""

    times: np.ndarray
    measures: list

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.measures):
            raise ValueError("times and measures must align")
        if len(t) < 1 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("times must start at 0 and increase strictly")
        n_modes = {m.N for m in self.measures}
        if len(n_modes) != 1:
            raise ValueError("all measures on a path must share the mode count")
        self.times = t

    @property
    def N(self):
        return self.measures[0].N

    @property
    def horizon(self):
        return float(self.times[-1])

    def at_time(self, t):
        """Measure at the mesh point nearest to t."""
        return self.measures[int(np.argmin(np.abs(self.times - t)))]

    def __len__(self):
        return len(self.measures)


# ---------------------------------------------------------------------------
# Initial laws


@dataclass
class Dirac:
    """Point mass at a fixed state."""

    point: np.ndarray

    def __post_init__(self):
        self.point = np.atleast_1d(np.asarray(self.point, dtype=float))

    @property
    def n_modes(self):
        return len(self.point)

    exact = True

    def mode_second_moment(self, k):
        if not 1 <= k <= self.n_modes:
            raise IndexError("mode index %d out of range 1..%d" % (k, self.n_modes))
        return float(self.point[k - 1] ** 2)

    def norm_fourth_moment(self):
        return float(np.sum(self.point ** 2) ** 2)

    def sample(self, M, seed):
        if M < 1:
            raise ValueError("empty sample requested")
        return np.tile(self.point, (int(M), 1))


@dataclass
class ProductGaussian:
    """Independent Gaussian modes with given means and variances."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.var = np.atleast_1d(np.asarray(self.var, dtype=float))
        if self.mean.shape != self.var.shape:
            raise ValueError("mean and var must have equal length")
        if np.any(self.var < 0):
            raise ValueError("variances must be >= 0")

    @property
    def n_modes(self):
        return len(self.mean)

    exact = True

    def mode_second_moment(self, k):
        if not 1 <= k <= self.n_modes:
            raise IndexError("mode index %d out of range 1..%d" % (k, self.n_modes))
        return float(self.mean[k - 1] ** 2 + self.var[k - 1])

    def norm_fourth_moment(self):
        # E|X|^4 = sum_k EX_k^4 + (sum_k EX_k^2)^2 - sum_k (EX_k^2)^2
        m2 = self.mean ** 2 + self.var
        m4 = self.mean ** 4 + 6.0 * self.mean ** 2 * self.var + 3.0 * self.var ** 2
        return float(np.sum(m4) + np.sum(m2) ** 2 - np.sum(m2 ** 2))

    def sample(self, M, seed):
        if M < 1:
            raise ValueError("empty sample requested")
        M = int(M)
        n = M * self.n_modes
        z = rng.normal_stream(seed, 0, rng.aligned(n))[:n].reshape(M, self.n_modes)
        return self.mean + np.sqrt(self.var) * z


@dataclass
class Empirical:
    """Initial law given by a sample; moments are the sample moments."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ValueError("empty initial sample")
        self.points = pts

    @property
    def n_modes(self):
        return self.points.shape[1]

    exact = False

    def mode_second_moment(self, k):
        if not 1 <= k <= self.n_modes:
            raise IndexError("mode index %d out of range 1..%d" % (k, self.n_modes))
        return float(np.mean(self.points[:, k - 1] ** 2))

    def norm_fourth_moment(self):
        return float(np.mean(np.sum(self.points ** 2, axis=1) ** 2))

    def sample(self, M, seed):
        if M < 1:
            raise ValueError("empty sample requested")
        M = int(M)
        if M == len(self.points):
            return self.points.copy()
        u = rng.uniform_stream(seed, 0, rng.aligned(M))[:M]
        idx = np.minimum((u * len(self.points)).astype(int), len(self.points) - 1)
        return self.points[idx]


# ---------------------------------------------------------------------------
# Wasserstein-1


def _require_compatible(mu, nu):
    if mu.N != nu.N:
        raise ValueError("mode count mismatch: %d vs %d" % (mu.N, nu.N))


def _common_size(mu, nu, seed):
    """Reconcile unequal counts: exact lcm replication when it fits the cap,
    deterministic bootstrap to the cap otherwise."""
    if mu.M == nu.M:
        return mu, nu
    common = math.lcm(mu.M, nu.M)
    if common <= _COMMON_SIZE_CAP:
        a = np.repeat(mu.points, common // mu.M, axis=0)
        b = np.repeat(nu.points, common // nu.M, axis=0)
    else:
        g = rng.generator(seed, _TAG_RESAMPLE)
        a = mu.points[g.integers(0, mu.M, _COMMON_SIZE_CAP)]
        b = nu.points[g.integers(0, nu.M, _COMMON_SIZE_CAP)]
    return ParticleMeasure(a), ParticleMeasure(b)


def wasserstein1(mu, nu, seed=0):
    """Exact W1 between equal-weight clouds: linear assignment with Euclidean
    ground cost.  Unequal counts are first reconciled to a common size."""
    _require_compatible(mu, nu)
    mu, nu = _common_size(mu, nu, seed)
    cost = cdist(mu.points, nu.points)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


def _sorted_w1_1d(a, b):
    """1-D W1 of equal-size samples: mean gap of the sorted coupling."""
    return float(np.mean(np.abs(np.sort(a) - np.sort(b))))


def wasserstein1_sliced(mu, nu, projections=64, seed=0):
    """Sliced surrogate: average over random unit directions of the 1-D
    sorted-coupling W1 of the projected samples."""
    _require_compatible(mu, nu)
    if projections < 1:
        raise ValueError("need at least one projection")
    mu, nu = _common_size(mu, nu, seed)
    g = rng.generator(seed, _TAG_SLICE)
    dirs = g.standard_normal((int(projections), mu.N))
    norms = np.linalg.norm(dirs, axis=1)
    norms[norms == 0] = 1.0
    dirs /= norms[:, None]
    pa = mu.points @ dirs.T
    pb = nu.points @ dirs.T
    pa.sort(axis=0)
    pb.sort(axis=0)
    return float(np.mean(np.abs(pa - pb)))


def mode_second_moment(mu, k):
    return mu.mode_second_moment(k)


def norm_fourth_moment(mu):
    return mu.norm_fourth_moment()


# ---------------------------------------------------------------------------
# Membership audits


@dataclass
class MembershipReport:
    """Per-mode second moments against bounds a_k and the fourth moment
    against c_hat; raw comparisons and 3-stderr-slack comparisons are
    reported separately."""

    modes: np.ndarray
    observed: np.ndarray
    stderr: np.ndarray
    bound: np.ndarray
    raw_pass: np.ndarray
    slack_pass: np.ndarray
    fourth_observed: float
    fourth_stderr: float
    fourth_bound: float
    fourth_raw_pass: bool
    fourth_slack_pass: bool

    @property
    def ok(self):
        return bool(np.all(self.slack_pass)) and self.fourth_slack_pass


def check_Qm0_membership(mu, bounds, c_hat):
    """Audit mu against the compactness set: mode second moments <= a_k and
    norm fourth moment <= c_hat, with 3-stderr statistical slack."""
    bounds = np.asarray(bounds, dtype=float)
    if len(bounds) < mu.N:
        raise ValueError("need a bound for each of the %d modes" % mu.N)
    bounds = bounds[: mu.N]
    sq = mu.points ** 2
    observed = sq.mean(axis=0)
    stderr = sq.std(axis=0) / math.sqrt(mu.M)
    norm4 = np.sum(sq, axis=1) ** 2
    f_obs = float(norm4.mean())
    f_err = float(norm4.std()) / math.sqrt(mu.M)
    return MembershipReport(
        modes=np.arange(1, mu.N + 1),
        observed=observed,
        stderr=stderr,
        bound=bounds,
        raw_pass=observed <= bounds,
        slack_pass=observed <= bounds + 3.0 * stderr,
        fourth_observed=f_obs,
        fourth_stderr=f_err,
        fourth_bound=float(c_hat),
        fourth_raw_pass=f_obs <= c_hat,
        fourth_slack_pass=f_obs <= c_hat + 3.0 * f_err,
    )


# ---------------------------------------------------------------------------
# Path functionals


def _pair_distance(mu, nu, exact_budget, projections, seed):
    if max(mu.M, nu.M) <= exact_budget:
        return wasserstein1(mu, nu, seed=seed), "exact"
    return wasserstein1_sliced(mu, nu, projections=projections, seed=seed), "sliced"


def path_sup_distance(m1, m2, exact_budget=512, projections=64, seed=0, detail=False):
    """sup over mesh points of d_1(m1(t), m2(t)); the sliced surrogate is
    substituted beyond the exact-solver budget and named in the detail."""
    if len(m1.times) != len(m2.times) or not np.allclose(m1.times, m2.times):
        raise ValueError("paths live on different meshes")
    best, method = 0.0, "exact"
    for a, b in zip(m1.measures, m2.measures):
        d, method = _pair_distance(a, b, exact_budget, projections, seed)
        best = max(best, d)
    if detail:
        return best, method
    return best


@dataclass
class ModulusTable:
    """Pairs (|t-s|, d_1(m(t), m(s))) plus the fitted envelope constant C in
    d_1 <= C (sqrt|t-s| + |t-s|)."""

    gaps: np.ndarray
    dists: np.ndarray
    constant: float
    method: str = "exact"


def path_modulus(path, max_pairs=250, exact_budget=512, projections=64, seed=0):
    """Tabulate W1 against time gaps over mesh pairs (budgeted subsample) and
    fit the envelope constant of the sqrt-plus-linear modulus."""
    J = len(path.measures)
    if J < 2:
        raise ValueError("need at least two mesh points")
    pairs = [(i, j) for i in range(J) for j in range(i + 1, J)]
    if len(pairs) > max_pairs:
        g = rng.generator(seed, _TAG_PAIRS)
        keep = g.choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[i] for i in np.sort(keep)]
    gaps = np.empty(len(pairs))
    dists = np.empty(len(pairs))
    method = "exact"
    for n, (i, j) in enumerate(pairs):
        gaps[n] = path.times[j] - path.times[i]
        dists[n], method = _pair_distance(
            path.measures[i], path.measures[j], exact_budget, projections, seed
        )
    constant = float(np.max(dists / (np.sqrt(gaps) + gaps)))
    return ModulusTable(gaps=gaps, dists=dists, constant=constant, method=method)


# ---------------------------------------------------------------------------
# Mixtures by particle pooling (damped iteration support)


def _pool_indices(M, lam, seed):
    k = math.ceil(lam * M)
    perm_a = rng.generator(seed, _TAG_POOL_A).permutation(M)
    perm_b = rng.generator(seed, _TAG_POOL_B).permutation(M)
    return perm_a[:k], perm_b[: M - k]


def mixture_measures(mu_a, mu_b, lam, seed=0):
    """lam*mu_a + (1-lam)*mu_b realized by pooling ceil(lam*M) particles from
    mu_a and the rest from mu_b, chosen by seeded shuffle."""
    _require_compatible(mu_a, mu_b)
    if mu_a.M != mu_b.M:
        raise ValueError("pooling requires equal particle counts")
    ia, ib = _pool_indices(mu_a.M, lam, seed)
    return ParticleMeasure(np.vstack([mu_a.points[ia], mu_b.points[ib]]))


def mixture_paths(path_a, path_b, lam, seed=0):
    """Poolwise mixture of two paths; one index selection is reused across
    all mesh times so pooled trajectories stay time-coherent."""
    if not np.allclose(path_a.times, path_b.times):
        raise ValueError("paths live on different meshes")
    M = path_a.measures[0].M
    if M != path_b.measures[0].M:
        raise ValueError("pooling requires equal particle counts")
    ia, ib = _pool_indices(M, lam, seed)
    measures = [
        ParticleMeasure(np.vstack([a.points[ia], b.points[ib]]))
        for a, b in zip(path_a.measures, path_b.measures)
    ]
    return MeasurePath(times=path_a.times.copy(), measures=measures)


# ---------------------------------------------------------------------------
# CSV serialization


def _float_fmt():
    return "%.17g"


def measure_to_csv(mu, path):
    header = ",".join("mode_%d" % (k + 1) for k in range(mu.N))
    np.savetxt(path, mu.points, fmt=_float_fmt(), delimiter=",", header=header, comments="")


def measure_from_csv(path):
    pts = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ParticleMeasure(pts)


def path_to_dir(path_obj, dirpath):
    os.makedirs(dirpath, exist_ok=True)
    np.savetxt(
        os.path.join(dirpath, "times.csv"),
        path_obj.times[:, None],
        fmt=_float_fmt(),
        delimiter=",",
        header="t",
        comments="",
    )
    for j, mu in enumerate(path_obj.measures):
        measure_to_csv(mu, os.path.join(dirpath, "m_%04d.csv" % j))


def path_from_dir(dirpath):
    times = np.loadtxt(os.path.join(dirpath, "times.csv"), delimiter=",", skiprows=1, ndmin=1)
    measures = [
        measure_from_csv(os.path.join(dirpath, "m_%04d.csv" % j)) for j in range(len(times))
    ]
    return MeasurePath(times=times, measures=measures)
