"""One-dimensional densities, d-dimensional targets and quadrature.

A :class:`ScalarDensity` is the coordinate law ``rho`` of a product
target. It exposes ``log rho`` and its first four derivatives, an exact
sampler and a truncated quadrature domain whose outside tail mass is
below 1e-12. All ``rho(g)`` style constants in the package go through
:func:`expectation`.

The tails of every density used here must decay faster than any
exponential and ``log rho`` must have four derivatives of
sub-exponential growth. This is a documented requirement, not a
runtime check; the Gaussian mixtures shipped below satisfy it.
"""
import math
import warnings

import numpy as np
from scipy import integrate, linalg, optimize, special
from scipy.special import logsumexp

from . import _backend
from .exceptions import DomainError, NonConvergence, NotPositiveDefinite
from .rng import as_generator

LOG_2PI = math.log(2.0 * math.pi)

# |z| beyond which a normal component has two-sided tail mass < 1e-12.
TAIL_Z = 7.5


def _fd_step(x, order):
    # Central-difference step; grows with the number of chained
    # differences to keep round-off in check.
    base = 1e-5 * 10.0 ** (order - 1)
    return np.maximum(base, base * np.abs(x))


class ScalarDensity:
    """A strictly positive density on the real line.

    Parameters
    ----------
    log_rho : callable
        Vectorised ``x -> log rho(x)`` (normalised).
    derivatives : sequence of callables, optional
        Analytic ``(log rho)^(k)`` for k = 1, 2, ...; missing orders are
        obtained by central differences of the highest analytic order.
    sampler : callable, optional
        ``(n, rng) -> ndarray`` of exact IID draws.
    domain : (float, float)
        Quadrature interval with tail mass outside below 1e-12.
    name : str
    breakpoints : sequence of float, optional
        Hints for the adaptive quadrature (e.g. mixture modes).
    """

    def __init__(self, log_rho, derivatives=(), sampler=None, domain=(-10.0, 10.0),
                 name="density", breakpoints=()):
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise DomainError(f"empty quadrature domain [{lo}, {hi}]")
        self._log_rho = log_rho
        self._derivs = tuple(derivatives)
        self._sampler = sampler
        self.quadrature_domain = (lo, hi)
        self.name = name
        self.breakpoints = tuple(float(b) for b in breakpoints if lo < b < hi)

    def log_rho(self, x):
        return self._log_rho(x)

    def pdf(self, x):
        return np.exp(self._log_rho(x))

    def d_log_rho(self, k, x):
        """k-th derivative of ``log rho`` at ``x`` (k = 0..4)."""
        if k == 0:
            return self._log_rho(x)
        if not 1 <= k <= 4:
            raise DomainError(f"derivative order must be in 0..4, got {k}")
        if k <= len(self._derivs):
            return self._derivs[k - 1](x)
        lower = k - 1
        x = np.asarray(x, dtype=float)
        h = _fd_step(x, k - len(self._derivs))
        return (self.d_log_rho(lower, x + h) - self.d_log_rho(lower, x - h)) / (2.0 * h)

    def has_analytic(self, k):
        return k <= len(self._derivs)

    def sample(self, n, rng):
        if self._sampler is None:
            raise NotImplementedError(f"{self.name} has no exact sampler")
        return self._sampler(int(n), as_generator(rng))

    @property
    def kernel_params(self):
        """Parameters for the compiled product kernels, or None."""
        return None

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r})"


class GaussianMixture1D(ScalarDensity):
    """Finite mixture of normals with closed-form log-derivatives."""

    def __init__(self, weights, means, std_devs, name=None):
        w = np.asarray(weights, dtype=float)
        mu = np.asarray(means, dtype=float)
        sd = np.asarray(std_devs, dtype=float)
        if not (w.shape == mu.shape == sd.shape) or w.ndim != 1 or w.size == 0:
            raise ValueError("weights, means and std_devs must be 1-D arrays of equal length")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if np.any(sd <= 0):
            raise ValueError("std_devs must be positive")
        self.weights, self.means, self.std_devs = w, mu, sd
        # log w_k - log sd_k - log(2 pi)/2, the per-component log constant
        self._a = np.log(w) - np.log(sd) - 0.5 * LOG_2PI
        self._inv_sd = 1.0 / sd
        lo = float(np.min(mu - TAIL_Z * sd))
        hi = float(np.max(mu + TAIL_Z * sd))
        if name is None:
            name = "mixture" if w.size > 1 else "normal"
        super().__init__(
            self._logpdf,
            derivatives=[lambda x, k=k: self._derivative(x, k) for k in (1, 2, 3, 4)],
            sampler=self._draw,
            domain=(lo, hi),
            name=name,
            breakpoints=mu,
        )

    def _components(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.means) * self._inv_sd
        return z, self._a - 0.5 * z * z

    def _logpdf(self, x):
        _, logc = self._components(x)
        return logsumexp(logc, axis=-1)

    def _derivative(self, x, k):
        z, logc = self._components(x)
        resp = np.exp(logc - logsumexp(logc, axis=-1, keepdims=True))
        s = self._inv_sd

        def moment(n):
            # p^(n)/p = sum_k r_k (-1)^n He_n(z_k) / sd_k^n
            he = {1: z, 2: z * z - 1.0, 3: z ** 3 - 3.0 * z, 4: z ** 4 - 6.0 * z * z + 3.0}[n]
            return np.sum(resp * (-1.0) ** n * he * s ** n, axis=-1)

        m1 = moment(1)
        if k == 1:
            return m1
        l2 = moment(2) - m1 ** 2
        if k == 2:
            return l2
        l3 = moment(3) - 3.0 * m1 * l2 - m1 ** 3
        if k == 3:
            return l3
        return moment(4) - 4.0 * m1 * l3 - 6.0 * m1 ** 2 * l2 - 3.0 * l2 ** 2 - m1 ** 4

    def _draw(self, n, rng):
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        return self.means[comp] + self.std_devs[comp] * rng.standard_normal(n)

    def mean(self):
        return float(np.dot(self.weights, self.means))

    def variance(self):
        m = self.mean()
        return float(np.dot(self.weights, self.std_devs ** 2 + (self.means - m) ** 2))

    def quantile(self, q):
        """Inverse CDF by bracketed root finding."""
        def cdf(x):
            return float(np.dot(self.weights, special.ndtr((x - self.means) * self._inv_sd)))

        lo = float(np.min(self.means - 40 * self.std_devs))
        hi = float(np.max(self.means + 40 * self.std_devs))
        return optimize.brentq(lambda x: cdf(x) - q, lo, hi, xtol=1e-14, rtol=1e-15)

    @property
    def kernel_params(self):
        return self._a.copy(), self.means.copy(), self._inv_sd.copy()


def standard_normal():
    return GaussianMixture1D([1.0], [0.0], [1.0], name="standard_normal")


def normal(sigma=1.0, mu=0.0):
    return GaussianMixture1D([1.0], [mu], [sigma], name=f"normal(mu={mu},sigma={sigma})")


def bimodal_mixture():
    """Two-well mixture 2/5 N(-3, (7/4)^2) + 3/5 N(4, (7/4)^2); mean 6/5."""
    return GaussianMixture1D([0.4, 0.6], [-3.0, 4.0], [1.75, 1.75], name="bimodal_mixture")


def expectation(density, g, tol=1e-10, limit=400, limits=None):
    """Adaptive Gauss-Kronrod estimate of ``rho(g) = int g rho``.

    ``g`` is called with scalar floats. ``limits`` restricts the integral
    to a sub-interval of the quadrature domain. Raises :class:`NonConvergence`
    when the subdivision budget runs out or the error estimate exceeds
    ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = density.quadrature_domain if limits is None else map(float, limits)
    points = [b for b in density.breakpoints if lo < b < hi]

    def integrand(x):
        return g(x) * math.exp(float(density.log_rho(x)))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(integrand, lo, hi, epsabs=tol, epsrel=0.0, limit=limit,
                             points=points or None, full_output=1)
    value, err = out[0], out[1]
    if len(out) > 3 or err > tol:
        raise NonConvergence(
            f"quadrature did not reach tol={tol:g} on {density.name} (error {err:.3g})",
            estimate=value, error=err,
        )
    return value


def fisher_J(density, tol=1e-10):
    """``J = rho(((log rho)')**2)``."""
    return expectation(density, lambda x: float(density.d_log_rho(1, x)) ** 2, tol=tol)


class TargetDistribution:
    """A d-dimensional target with exact stationary sampler.

    Subclasses implement ``log_density`` for arrays of shape (..., d)
    and ``sample``. ``kernel`` names the compiled kernel family (or None
    for the generic path).
    """

    kind = None
    kernel = None

    def __init__(self, d):
        if int(d) < 1:
            raise ValueError("dimension must be >= 1")
        self.d = int(d)

    def log_density(self, x):
        raise NotImplementedError

    def sample(self, n, rng):
        raise NotImplementedError

    @property
    def fisher_J(self):
        raise NotImplementedError


class ProductTarget(TargetDistribution):
    """``rho_d(x) = prod_i rho(x_i)``."""

    kind = "product"

    def __init__(self, density, d):
        super().__init__(d)
        self.density = density
        params = density.kernel_params
        self.kernel = "product" if params is not None else None
        self._params = params
        self._J = None

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected trailing dimension {self.d}, got {x.shape[-1]}")
        if self._params is None:
            return np.sum(self.density.log_rho(x), axis=-1)
        flat = np.ascontiguousarray(x.reshape(-1, self.d))
        out = _backend.kernels.product_logpdf_rows(flat, *self._params)
        return out.reshape(x.shape[:-1])

    def sample(self, n, rng):
        rng = as_generator(rng)
        draws = self.density.sample(int(n) * self.d, rng)
        return np.asarray(draws, dtype=float).reshape(int(n), self.d)

    @property
    def fisher_J(self):
        if self._J is None:
            self._J = fisher_J(self.density)
        return self._J

    def describe(self):
        return {"family": "product", "density": self.density.name, "d": self.d}


class MvGaussianMixture(TargetDistribution):
    """Mixture of normals sharing one covariance matrix."""

    kind = "mv_gaussian_mixture"
    kernel = "mv"

    def __init__(self, weights, means, cov):
        means = np.atleast_2d(np.asarray(means, dtype=float))
        super().__init__(means.shape[1])
        w = np.asarray(weights, dtype=float)
        if w.shape != (means.shape[0],) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a positive probability vector, one per mean")
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (self.d, self.d) or not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise NotPositiveDefinite("covariance must be a symmetric d x d matrix")
        try:
            chol = linalg.cho_factor(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from exc
        self.weights = w
        self.means = means
        self.cov = cov
        self.chol = np.tril(chol[0])
        self.precision = linalg.cho_solve(chol, np.eye(self.d))
        self.precision = 0.5 * (self.precision + self.precision.T)
        self.log_det = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        self._logw = np.log(w) - 0.5 * self.log_det - 0.5 * self.d * LOG_2PI

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected trailing dimension {self.d}, got {x.shape[-1]}")
        flat = np.ascontiguousarray(x.reshape(-1, self.d))
        out = _backend.kernels.mv_logpdf_rows(flat, self.means, self._logw, self.precision)
        return out.reshape(x.shape[:-1])

    @property
    def kernel_params(self):
        return self.means, self._logw, self.precision

    def sample(self, n, rng):
        rng = as_generator(rng)
        n = int(n)
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        z = rng.standard_normal((n, self.d))
        return self.means[comp] + z @ self.chol.T

    def mixture_mean(self):
        return self.weights @ self.means

    def mixture_covariance(self):
        """Covariance of the mixture itself, not of a component."""
        m = self.mixture_mean()
        centred = self.means - m
        return self.cov + (centred.T * self.weights) @ centred

    @property
    def fisher_J(self):
        # Per-coordinate Fisher information of the component Gaussian.
        return float(np.mean(np.diag(self.precision)))

    def describe(self):
        return {"family": "mv_gaussian_mixture", "d": self.d, "n_components": int(self.weights.size)}


def spiked_covariance(d, spike=25.0):
    """Covariance with eigenvector (1,...,1)/sqrt(d) at ``spike``, identity elsewhere."""
    v = np.full(d, 1.0 / math.sqrt(d))
    return np.eye(d) + (spike - 1.0) * np.outer(v, v)


def bimodal_gaussian_mixture(d, h, spike=25.0):
    """Equal mixture of N(-mu, S) and N(mu, S), mu = (h/2, 0, ..., 0)."""
    if h < 0:
        raise ValueError("h must be >= 0")
    mu = np.zeros(d)
    mu[0] = 0.5 * h
    return MvGaussianMixture([0.5, 0.5], np.vstack([-mu, mu]), spiked_covariance(d, spike))


def sample_stationary(target, n, rng):
    """``n`` exact IID draws from ``target`` as an (n, d) array."""
    if int(n) < 1:
        raise ValueError("n must be >= 1")
    return target.sample(int(n), rng)
