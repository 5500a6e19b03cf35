"""Synthetic stochastic objectives with exact ground truth.

Every family exposes per-sample value/subgradient oracles, a closed-form (or
frozen high-resolution numeric) population objective, and declared constants.
Sampling is counter-based: sample number ``i`` of a stream occupies a fixed
window of the Philox-4x64 sequence keyed by the stream seed, so a sample is a
pure function of (seed, i) regardless of how many samples were drawn before
it, on every platform.  Normals are produced from fixed-consumption uniforms
through the inverse CDF, which keeps the window arithmetic exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

from .errors import InputError, PreconditionError
from .geometry import FeasibleSet, NormTag, contains, project

__all__ = [
    "ProblemConstants",
    "SampleStream",
    "ProblemInstance",
    "GaussianMean",
    "RidgeRegression",
    "Lasso",
    "SoftSVM",
    "NormPower",
    "FiniteSumQuadratic",
    "make_problem",
    "problem_constants",
]

_MASK64 = (1 << 64) - 1
# Key salt: separates sastra sample streams from any other Philox user.
_KEY_SALT = 0x9E3779B97F4A7C15
# Stream-index salts for internal sample consumers (XORed into the base seed).
POOL_STREAM_INDEX = 0x5EED_F00D_0000_0001
CENTER_STREAM_INDEX = 0x5EED_F00D_0000_0002
INDEX_STREAM_INDEX = 0x5EED_F00D_0000_0003


def _uniform_windows(seed: int, first_sample: int, count: int, words: int) -> np.ndarray:
    """Uniform doubles for sample windows [first, first+count), shape (count, w4).

    Each sample owns ceil(words/4) Philox blocks; w4 = 4 * ceil(words/4).
    Only the first ``words`` columns are meaningful, the rest is padding that
    keeps windows block-aligned.
    """
    bps = max(1, (words + 3) // 4)
    w4 = 4 * bps
    ctr = first_sample * bps
    bg = np.random.Philox(
        key=[seed & _MASK64, _KEY_SALT],
        counter=[ctr & _MASK64, (ctr >> 64) & _MASK64, 0, 0],
    )
    u = np.random.Generator(bg).random(count * w4)
    return u.reshape(count, w4)


def _std_normal(u: np.ndarray) -> np.ndarray:
    """Standard normals from uniforms in [0,1) via the inverse CDF."""
    return ndtri(u + 2.0**-54)


def uniform_values(seed: int, start: int, count: int) -> np.ndarray:
    """Deterministic raw uniforms in [0,1), one Philox window per value.

    Family-independent; used for index randomness (e.g. term sampling in
    finite-sum solvers) so that problem sample windows stay untouched.
    """
    return _uniform_windows(
        (seed ^ INDEX_STREAM_INDEX) & _MASK64, start, count, 1
    )[:, 0]


# Truncated-at-3-sigma standard normal: CDF window and variance.
_PHI3 = 0.5 * (1.0 + math.erf(3.0 / math.sqrt(2.0)))
_TRUNC_WINDOW = 2.0 * _PHI3 - 1.0
_PHI3_PDF = math.exp(-4.5) / math.sqrt(2.0 * math.pi)
TRUNC3_VARIANCE = 1.0 - 6.0 * _PHI3_PDF / _TRUNC_WINDOW


def _trunc3_normal(u: np.ndarray) -> np.ndarray:
    """Standard normal conditioned on |z| <= 3, one uniform per value."""
    return ndtri((1.0 - _PHI3) + u * _TRUNC_WINDOW)


@dataclass(frozen=True)
class ProblemConstants:
    """Declared constants of a problem family.

    M_p        Lipschitz constant of f(.,xi) on the feasible set (inf if the
               data is unbounded; some families declare a documented effective
               RMS bound instead, see the family docstring)
    L          gradient Lipschitz constant, uniform in xi (inf if nonsmooth)
    mu_p       per-sample strong-convexity modulus (0 if merely convex)
    sigma_star_sq   E ||grad f(x*, xi)||_2^2
    s          growth exponent (>= 1)
    mu_ps      growth modulus (0 if no growth condition is declared)
    lambda_sq  sub-Gaussian variance proxy of centered loss differences
    """

    M_p: float
    L: float
    mu_p: float
    sigma_star_sq: float
    s: float
    mu_ps: float
    lambda_sq: float

    def __post_init__(self):
        for name in ("M_p", "L", "mu_p", "sigma_star_sq", "s", "mu_ps", "lambda_sq"):
            if getattr(self, name) < 0:
                raise InputError(f"constant {name} must be nonnegative")
        if math.isfinite(self.L) and self.mu_p > self.L * (1 + 1e-12):
            raise InputError("mu_p cannot exceed L")
        if self.s < 1:
            raise InputError("growth exponent s must be >= 1")


@dataclass(frozen=True)
class SampleStream:
    """Deterministic i.i.d. sample source bound to a problem.

    The pair (base_seed, counter) fully determines the next sample.  Streams
    are values: drawing returns an advanced copy, so concurrent trials can
    hold disjoint streams without coordination.
    """

    problem: "ProblemInstance"
    base_seed: int
    counter: int = 0

    def draw_sample(self):
        """Return (sample row, advanced stream)."""
        rows, stream = self.draw_block(1)
        return rows[0], stream

    def draw_block(self, count: int):
        """Return (rows array of shape (count, sample_width), advanced stream)."""
        if count < 0:
            raise InputError("count must be nonnegative")
        p = self.problem
        u = _uniform_windows(self.base_seed, self.counter, count, p.rng_words)
        rows = p.rows_from_uniforms(u[:, : p.rng_words])
        return rows, replace(self, counter=self.counter + count)

    def substream(self, index: int) -> "SampleStream":
        """Derived stream with seed = base_seed XOR index, fresh counter."""
        return SampleStream(self.problem, (self.base_seed ^ index) & _MASK64, 0)


class ProblemInstance:
    """Base class for stochastic problem families.

    Subclasses fill in the sampler transform, per-sample oracles, the
    population gap and constants.  Instances are immutable after construction
    (lazily built caches excepted) and safe to share across runs.
    """

    family: str = "abstract"

    # --- sampling -----------------------------------------------------

    @property
    def rng_words(self) -> int:
        """Uniform doubles consumed per sample."""
        raise NotImplementedError

    @property
    def sample_width(self) -> int:
        """Float columns of one sample row."""
        raise NotImplementedError

    def rows_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stream(self, seed: int) -> SampleStream:
        return SampleStream(self, int(seed) & _MASK64, 0)

    # --- oracles --------------------------------------------------------

    def loss_value(self, x, xi) -> float:
        x = self._coerce_point(x)
        if not contains(self.feasible_set, x):
            raise PreconditionError("loss_value requires x in the feasible set")
        return self._loss(x, np.atleast_1d(np.asarray(xi, dtype=float)))

    def loss_subgradient(self, x, xi) -> np.ndarray:
        x = self._coerce_point(x)
        return self._subgrad(x, np.atleast_1d(np.asarray(xi, dtype=float)))

    def population_gap(self, x) -> float:
        x = self._coerce_point(x)
        return self._gap(x)

    def constants(self) -> ProblemConstants:
        raise NotImplementedError

    # --- vectorized paths used by solvers and empirical objectives ------

    def batch_losses(self, x, rows: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch_subgrad_mean(self, x, rows: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _loss(self, x: np.ndarray, xi: np.ndarray) -> float:
        return float(self.batch_losses(x, xi[None, :])[0])

    def _subgrad(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return self.batch_subgrad_mean(x, xi[None, :])

    def _gap(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def _coerce_point(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dimension,):
            raise InputError(
                f"point has shape {x.shape}, expected ({self.dimension},)"
            )
        return x

    # --- common accessors ------------------------------------------------

    @property
    def x_star(self) -> np.ndarray:
        raise NotImplementedError

    def default_x0(self) -> np.ndarray:
        s = self.feasible_set
        if s.kind == "simplex":
            return np.full(self.dimension, 1.0 / self.dimension)
        if s.kind in ("l2_ball", "l1_ball"):
            return s.center.copy()
        return np.zeros(self.dimension)

    def _validate_optimum(self):
        if not contains(self.feasible_set, self.x_star, 1e-9):
            raise InputError("population optimum must lie in the feasible set")


@dataclass(frozen=True, eq=False)
class GaussianMean(ProblemInstance):
    """Location estimation under Gaussian noise: f(x, xi) = ||xi - x||^2.

    The population objective is ||x - x*||^2 + n sigma^2, so the gap is exact.
    The per-sample loss is 2-strongly convex and 2-smooth.  When the feasible
    set is bounded, M_p is the documented effective bound 2 (r_max + 3 sigma
    sqrt n) with r_max the farthest set point from x*; the raw data is
    unbounded, so no uniform Lipschitz constant exists.
    """

    mean: np.ndarray
    sigma: float
    feasible_set: FeasibleSet
    norm: NormTag = NormTag(2)

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, float)))
        if self.sigma < 0:
            raise InputError("sigma must be nonnegative")
        if self.mean.shape != (self.feasible_set.dimension,):
            raise InputError("mean and feasible set dimensions differ")
        self._validate_optimum()

    family = "gaussian_mean"

    @property
    def dimension(self) -> int:
        return self.mean.size

    @property
    def rng_words(self) -> int:
        return self.dimension

    @property
    def sample_width(self) -> int:
        return self.dimension

    def rows_from_uniforms(self, u):
        return self.mean + self.sigma * _std_normal(u)

    @property
    def x_star(self) -> np.ndarray:
        return self.mean

    def batch_losses(self, x, rows):
        d = rows - x
        return np.einsum("ij,ij->i", d, d)

    def batch_subgrad_mean(self, x, rows):
        return 2.0 * (x - rows.mean(axis=0))

    def _subgrad(self, x, xi):
        return 2.0 * (x - xi)

    def _gap(self, x):
        d = x - self.mean
        return float(d @ d)

    def constants(self) -> ProblemConstants:
        n = self.dimension
        set_ = self.feasible_set
        if set_.is_bounded:
            if set_.kind == "simplex":
                r_max = float(np.max(np.linalg.norm(np.eye(n) - self.mean, axis=1)))
            else:
                r_max = set_.radius + float(np.linalg.norm(set_.center - self.mean))
            m = 2.0 * (r_max + 3.0 * self.sigma * math.sqrt(n))
        else:
            m = math.inf
        return ProblemConstants(
            M_p=m,
            L=2.0,
            mu_p=2.0,
            sigma_star_sq=4.0 * n * self.sigma**2,
            s=2.0,
            mu_ps=1.0,
            lambda_sq=4.0 * self.sigma**2,
        )


class _LinearModelProblem(ProblemInstance):
    """Shared mechanics for regression rows (a_1..a_n, y)."""

    @property
    def dimension(self) -> int:
        return self.coefficients.size

    @property
    def rng_words(self) -> int:
        return self.dimension + 1

    @property
    def sample_width(self) -> int:
        return self.dimension + 1

    def _design_rows(self, u: np.ndarray) -> np.ndarray:
        """Covariates uniform on the sphere of radius sqrt(n): E a a^T = I."""
        z = _std_normal(u)
        nrm = np.sqrt(np.einsum("ij,ij->i", z, z))
        return z * (math.sqrt(self.dimension) / nrm)[:, None]


@dataclass(frozen=True, eq=False)
class RidgeRegression(_LinearModelProblem):
    """Least squares with bounded design: y = <a, x*> + sigma eta.

    a is uniform on the sphere of radius sqrt(n) and eta is a standard normal
    truncated at +-3, so the loss is uniformly M-Lipschitz and 2n-smooth on
    bounded sets.  The population objective is ||x - x*||^2 + noise floor.
    """

    coefficients: np.ndarray
    sigma: float
    feasible_set: FeasibleSet
    norm: NormTag = NormTag(2)

    family = "ridge"

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients", np.atleast_1d(np.asarray(self.coefficients, float))
        )
        if self.sigma < 0:
            raise InputError("sigma must be nonnegative")
        if self.coefficients.shape != (self.feasible_set.dimension,):
            raise InputError("coefficients and feasible set dimensions differ")
        self._validate_optimum()

    def rows_from_uniforms(self, u):
        n = self.dimension
        a = self._design_rows(u[:, :n])
        noise = self.sigma * _trunc3_normal(u[:, n])
        y = a @ self.coefficients + noise
        return np.hstack([a, y[:, None]])

    @property
    def x_star(self) -> np.ndarray:
        return self.coefficients

    def batch_losses(self, x, rows):
        r = rows[:, :-1] @ x - rows[:, -1]
        return r * r

    def batch_subgrad_mean(self, x, rows):
        r = rows[:, :-1] @ x - rows[:, -1]
        return 2.0 * (r @ rows[:, :-1]) / rows.shape[0]

    def _subgrad(self, x, xi):
        a = xi[:-1]
        return 2.0 * (a @ x - xi[-1]) * a

    def _gap(self, x):
        d = x - self.coefficients
        return float(d @ d)

    def constants(self) -> ProblemConstants:
        n = self.dimension
        set_ = self.feasible_set
        if set_.is_bounded:
            if set_.kind == "simplex":
                r_sup = 1.0
            else:
                r_sup = set_.radius + float(np.linalg.norm(set_.center))
            resid = math.sqrt(n) * (np.linalg.norm(self.coefficients) + r_sup) + 3.0 * self.sigma
            m = 2.0 * math.sqrt(n) * resid
            lam_sq = 2.0 * m * m
        else:
            m = math.inf
            lam_sq = math.inf
        return ProblemConstants(
            M_p=m,
            L=2.0 * n,
            mu_p=0.0,
            sigma_star_sq=4.0 * n * TRUNC3_VARIANCE * self.sigma**2,
            s=2.0,
            mu_ps=1.0,
            lambda_sq=lam_sq,
        )


@dataclass(frozen=True, eq=False)
class Lasso(RidgeRegression):
    """Same generative model as ridge; conventionally paired with an l1
    composite and a sparse ground truth."""

    family = "lasso"


@dataclass(frozen=True, eq=False)
class NormPower(ProblemInstance):
    """f(x, xi) = ||x||_2^s - s <xi, x> on the unit l2-ball, xi ~ N(0, sigma^2 I).

    Population objective ||x||_2^s with optimum at the origin; growth modulus
    mu_{2,s} = 1 and sub-Gaussian proxy lambda^2 = s^2 sigma^2.  M_p is the
    documented effective bound s (1 + sigma sqrt n): stochastic gradients are
    unbounded but their norm concentrates below it.
    """

    s: float
    sigma: float
    dim: int
    feasible_set: FeasibleSet = None
    norm: NormTag = NormTag(2)

    family = "norm_power"

    def __post_init__(self):
        if self.s < 1:
            raise InputError("growth exponent s must be >= 1")
        if self.sigma < 0:
            raise InputError("sigma must be nonnegative")
        if self.feasible_set is None:
            object.__setattr__(self, "feasible_set", FeasibleSet.l2_ball(self.dim, 1.0))
        if self.feasible_set.dimension != self.dim:
            raise InputError("feasible set dimension mismatch")
        self._validate_optimum()

    @property
    def dimension(self) -> int:
        return self.dim

    @property
    def rng_words(self) -> int:
        return self.dim

    @property
    def sample_width(self) -> int:
        return self.dim

    def rows_from_uniforms(self, u):
        return self.sigma * _std_normal(u)

    @property
    def x_star(self) -> np.ndarray:
        return np.zeros(self.dim)

    def batch_losses(self, x, rows):
        nx = float(np.sqrt(x @ x))
        return nx**self.s - self.s * (rows @ x)

    def batch_subgrad_mean(self, x, rows):
        return self._norm_grad(x) - self.s * rows.mean(axis=0)

    def _norm_grad(self, x):
        s = self.s
        nx = float(np.sqrt(x @ x))
        if nx == 0.0:
            # zero subgradient selection of ||.||^s at the origin
            return np.zeros_like(x)
        return (s * nx ** (s - 2.0)) * x

    def _subgrad(self, x, xi):
        return self._norm_grad(x) - self.s * xi

    def _gap(self, x):
        return float(np.sqrt(x @ x)) ** self.s

    def constants(self) -> ProblemConstants:
        s, n = self.s, self.dim
        smooth = s * (s - 1.0) if s >= 2.0 else math.inf
        if s == 1.0:
            smooth = math.inf
        return ProblemConstants(
            M_p=s * (1.0 + self.sigma * math.sqrt(n)),
            L=smooth if s != 2.0 else 2.0,
            mu_p=2.0 if s == 2.0 else 0.0,
            sigma_star_sq=s * s * self.sigma**2 * n,
            s=s,
            mu_ps=1.0,
            lambda_sq=s * s * self.sigma**2,
        )


@dataclass(frozen=True, eq=False)
class FiniteSumQuadratic(ProblemInstance):
    """Uniform mixture of quadratics: f(x, xi) = 1/2 sum_i d_i (x_i - xi_i)^2.

    xi is drawn uniformly from a fixed pool of centers.  With all scales d_i
    equal to one this is the plain 1/2 ||x - xi||^2 loss; anisotropic scales
    give a controlled condition number L/mu = max d / min d.  When every
    center coincides the problem interpolates: sigma*^2 = 0.
    """

    centers: np.ndarray
    scales: np.ndarray = None
    feasible_set: FeasibleSet = None
    norm: NormTag = NormTag(2)

    family = "finite_sum_quadratic"

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1:
            raise InputError("centers must be a nonempty (m, n) array")
        object.__setattr__(self, "centers", c)
        d = self.scales
        d = np.ones(c.shape[1]) if d is None else np.asarray(d, dtype=float)
        if d.shape != (c.shape[1],) or np.any(d <= 0):
            raise InputError("scales must be positive with one entry per coordinate")
        object.__setattr__(self, "scales", d)
        if self.feasible_set is None:
            object.__setattr__(
                self, "feasible_set", FeasibleSet.unconstrained(c.shape[1])
            )
        if self.feasible_set.dimension != c.shape[1]:
            raise InputError("feasible set dimension mismatch")
        # identical centers must yield an exactly-zero spread (interpolation)
        mean = c[0].copy() if np.all(c == c[0]) else c.mean(axis=0)
        object.__setattr__(self, "_mean_center", mean)
        self._validate_optimum()

    @staticmethod
    def interpolating(point, n_terms: int = 8, scales=None, set_=None):
        point = np.atleast_1d(np.asarray(point, dtype=float))
        centers = np.tile(point, (n_terms, 1))
        return FiniteSumQuadratic(centers, scales, set_)

    @staticmethod
    def from_seed(dimension: int, n_terms: int, spread: float, seed: int,
                  scales=None, set_=None, mean=None):
        """Deterministic Gaussian center pool around ``mean``."""
        u = _uniform_windows(
            (seed ^ CENTER_STREAM_INDEX) & _MASK64, 0, n_terms, dimension
        )[:, :dimension]
        base = np.zeros(dimension) if mean is None else np.asarray(mean, float)
        centers = base + spread * _std_normal(u)
        # recenter so the population optimum is exactly ``mean``
        centers += base - centers.mean(axis=0)
        return FiniteSumQuadratic(centers, scales, set_)

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]

    @property
    def rng_words(self) -> int:
        return 1

    @property
    def sample_width(self) -> int:
        return self.dimension

    def rows_from_uniforms(self, u):
        m = self.centers.shape[0]
        idx = np.minimum((u[:, 0] * m).astype(np.int64), m - 1)
        return self.centers[idx]

    @property
    def x_star(self) -> np.ndarray:
        return self._mean_center

    def batch_losses(self, x, rows):
        d = x - rows
        return 0.5 * (d * d) @ self.scales

    def batch_subgrad_mean(self, x, rows):
        return self.scales * (x - rows.mean(axis=0))

    def _subgrad(self, x, xi):
        return self.scales * (x - xi)

    def _gap(self, x):
        d = x - self._mean_center
        return 0.5 * float((d * d) @ self.scales)

    def constants(self) -> ProblemConstants:
        d = self.scales
        diff = self.centers - self._mean_center
        sig = float(np.mean(np.einsum("ij,ij->i", diff * d, diff * d)))
        set_ = self.feasible_set
        if set_.is_bounded and set_.kind != "simplex":
            r_sup = set_.radius + float(
                np.max(np.linalg.norm(set_.center - self.centers, axis=1))
            )
            m = float(np.max(d)) * r_sup
            lam = 2.0 * m * m
        elif set_.kind == "simplex":
            r_sup = 2.0 + float(np.max(np.linalg.norm(self.centers, axis=1)))
            m = float(np.max(d)) * r_sup
            lam = 2.0 * m * m
        else:
            m = math.inf
            lam = math.inf
        return ProblemConstants(
            M_p=m,
            L=float(np.max(d)),
            mu_p=float(np.min(d)),
            sigma_star_sq=sig,
            s=2.0,
            mu_ps=float(np.min(d)) / 2.0,
            lambda_sq=lam,
        )


class SoftSVM(ProblemInstance):
    """Hinge loss over the unit ball with a planted separating direction.

    Lab generative model (the improper density is made proper by fixing the
    covariate law): a is uniform on the unit sphere and the label is drawn
    with P(y | a) proportional to min(1, exp(y <concept, a> - 1)).  The
    population objective has no closed form; it is frozen once per instance
    as the average over a reference pool of ``pool_size`` samples, and the
    pool minimizer (solved to high accuracy on a smoothed hinge with
    continuation) serves as ground truth with quantified Monte Carlo error.
    """

    family = "soft_svm"

    def __init__(self, concept, feasible_set: FeasibleSet | None = None,
                 pool_size: int = 1_000_000, pool_seed: int = 2024,
                 norm: NormTag = NormTag(2)):
        self.concept = np.atleast_1d(np.asarray(concept, dtype=float))
        n = self.concept.size
        self.feasible_set = feasible_set or FeasibleSet.l2_ball(n, 1.0)
        if self.feasible_set.dimension != n:
            raise InputError("feasible set dimension mismatch")
        if self.feasible_set.kind != "l2_ball":
            raise InputError("soft_svm is defined over an l2 ball")
        if pool_size < 1:
            raise InputError("pool_size must be positive")
        self.pool_size = int(pool_size)
        self.pool_seed = int(pool_seed)
        self.norm = norm
        self._reference = None

    @property
    def dimension(self) -> int:
        return self.concept.size

    @property
    def rng_words(self) -> int:
        return self.dimension + 1

    @property
    def sample_width(self) -> int:
        return self.dimension + 1

    def rows_from_uniforms(self, u):
        n = self.dimension
        z = _std_normal(u[:, :n])
        nrm = np.sqrt(np.einsum("ij,ij->i", z, z))
        a = z / nrm[:, None]
        m = a @ self.concept
        w_pos = np.exp(np.minimum(m - 1.0, 0.0))
        w_neg = np.exp(np.minimum(-m - 1.0, 0.0))
        p_pos = w_pos / (w_pos + w_neg)
        y = np.where(u[:, n] < p_pos, 1.0, -1.0)
        return np.hstack([a, y[:, None]])

    def batch_losses(self, x, rows):
        margins = (rows[:, :-1] @ x) * rows[:, -1]
        return np.maximum(0.0, 1.0 - margins)

    def batch_subgrad_mean(self, x, rows):
        ya = rows[:, :-1] * rows[:, -1][:, None]
        margins = ya @ x
        active = margins < 1.0
        if not np.any(active):
            return np.zeros_like(x)
        return -ya[active].sum(axis=0) / rows.shape[0]

    def _subgrad(self, x, xi):
        a, y = xi[:-1], xi[-1]
        if y * (a @ x) < 1.0:
            return -y * a
        return np.zeros_like(x)

    # --- frozen reference pool ------------------------------------------

    def _pool(self):
        ref = self._reference
        if ref is None:
            ref = _SvmReference.build(self)
            self._reference = ref
        return ref

    @property
    def x_star(self) -> np.ndarray:
        return self._pool().x_hat

    def _gap(self, x):
        ref = self._pool()
        return max(ref.value(x) - ref.f_star, 0.0)

    def reference_error_estimate(self) -> float:
        """Monte Carlo standard error of the frozen population objective."""
        return self._pool().mc_standard_error

    def constants(self) -> ProblemConstants:
        return ProblemConstants(
            M_p=1.0,
            L=math.inf,
            mu_p=0.0,
            sigma_star_sq=1.0,  # ||a|| = 1, upper bound used as the declared proxy
            s=2.0,
            mu_ps=0.0,
            lambda_sq=2.0,
        )


class _SvmReference:
    """Frozen pool, pool minimizer and pool optimum value for one SoftSVM."""

    def __init__(self, signed_design, x_hat, f_star, mc_se):
        self.signed_design = signed_design  # float32 (P, n): rows y_i * a_i
        self.x_hat = x_hat
        self.f_star = f_star
        self.mc_standard_error = mc_se

    def value(self, x) -> float:
        m = self.signed_design @ np.asarray(x, dtype=np.float32)
        return float(np.mean(np.maximum(0.0, 1.0 - m), dtype=np.float64))

    @staticmethod
    def build(problem: "SoftSVM") -> "_SvmReference":
        stream = SampleStream(
            problem, (problem.pool_seed ^ POOL_STREAM_INDEX) & _MASK64, 0
        )
        chunks = []
        remaining = problem.pool_size
        while remaining > 0:
            take = min(remaining, 1 << 16)
            rows, stream = stream.draw_block(take)
            chunks.append((rows[:, :-1] * rows[:, -1][:, None]).astype(np.float32))
            remaining -= take
        signed = np.vstack(chunks)

        x_hat = _SvmReference._solve_pool(signed, problem.feasible_set)
        m = signed @ x_hat.astype(np.float32)
        losses = np.maximum(0.0, 1.0 - m).astype(np.float64)
        f_star = float(losses.mean())
        mc_se = float(losses.std() / math.sqrt(losses.size))
        return _SvmReference(signed, x_hat, f_star, mc_se)

    @staticmethod
    def _solve_pool(signed, set_: FeasibleSet, smoothings=(3e-2, 3e-3, 3e-4)):
        """Projected FISTA with restarts on the Huber-smoothed pool hinge.

        Continuation over the smoothing parameter; a subsample warm start
        keeps the full-pool stages short.  The smoothing bias of the final
        stage is O(h^2), far below the pool's Monte Carlo error.
        """
        n = signed.shape[1]
        warm_rows = min(signed.shape[0], 100_000)
        x = np.zeros(n)
        x = _SvmReference._fista(signed[:warm_rows], set_, x, smoothings[0], 400)
        for h in smoothings[1:]:
            x = _SvmReference._fista(signed[:warm_rows], set_, x, h, 400)
        for h in smoothings[1:]:
            x = _SvmReference._fista(signed, set_, x, h, 350)
        return x

    @staticmethod
    def _fista(signed, set_, x0, h, iters):
        count = signed.shape[0]
        lip = 1.0 / h  # mean of unit-norm rank-one terms, curvature 1/h each
        x = project(set_, x0)
        y = x.copy()
        t = 1.0
        f_prev = np.inf
        for _ in range(iters):
            m = signed @ y.astype(np.float32)
            gap = 1.0 - m.astype(np.float64)
            w = np.clip(gap / h, 0.0, 1.0)
            g = -(w.astype(np.float32) @ signed).astype(np.float64) / count
            x_new = project(set_, y - g / lip)
            f_val = float(
                np.mean(np.where(gap > h, gap - 0.5 * h, 0.5 * np.maximum(gap, 0.0) ** 2 / h))
            )
            if f_val > f_prev:  # adaptive restart on objective increase
                t = 1.0
                y = x.copy()
                f_prev = np.inf
                continue
            f_prev = f_val
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, t = x_new, t_new
        return x


_FAMILIES = {
    "gaussian_mean": GaussianMean,
    "ridge": RidgeRegression,
    "lasso": Lasso,
    "soft_svm": SoftSVM,
    "norm_power": NormPower,
    "finite_sum_quadratic": FiniteSumQuadratic,
}


def make_problem(family: str, **kwargs) -> ProblemInstance:
    """Build a problem by family name; unknown names raise InputError."""
    try:
        cls = _FAMILIES[family]
    except KeyError:
        raise InputError(f"unknown problem family {family!r}") from None
    return cls(**kwargs)


def problem_constants(problem: ProblemInstance) -> ProblemConstants:
    """Declared constants of a problem (free-function spelling of .constants())."""
    return problem.constants()
