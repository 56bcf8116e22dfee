"""Solutions of the Poisson equation for the limiting Langevin diffusion.

The diffusion has generator ``G g = (h/2) (g'' + (log rho)' g')`` with
speed ``h(l) = 2 l^2 Phi(-l sqrt(J) / 2)``. A solution ``fhat`` of
``G fhat = rho(f) - f`` is the ingredient of the control variate
``d (P_d fhat - fhat)``. Three constructions are provided:

* :func:`solve_closed_form` -- the explicit double-integral solution,
* :func:`solve_grid` -- a crude finite-difference solve on a grid fitted
  to a chain's first coordinate, using a minimum-norm least-squares
  solution of the (rank deficient) linear system,
* :func:`gaussian_cv` -- the linear control variate for the first-
  coordinate mean of a Gaussian target with covariance ``Sigma``.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, interpolate, linalg, special

from .exceptions import DomainError, IllConditioned, NotPositiveDefinite
from .sampler import optimal_l

# Quantile level defining the closed-form solver's evaluation domain.
TAIL_Q = 1e-8
N_CLOSED_FORM_NODES = 4000


def h_of_l(l, J):
    """Diffusion speed ``2 l^2 Phi(-l sqrt(J)/2)``."""
    if not l > 0 or J < 0:
        raise ValueError("need l > 0 and J >= 0")
    return 2.0 * l * l * float(special.ndtr(-0.5 * l * math.sqrt(J)))


@dataclass(frozen=True)
class LimitConstants:
    J: float
    l: float
    h_l: float

    @classmethod
    def from_J(cls, J, l=None):
        """Constants for ``J``; ``l`` defaults to the speed-optimal scale."""
        if l is None:
            l = optimal_l(J)
        return cls(float(J), float(l), h_of_l(l, J))


@dataclass
class PoissonSolution:
    """Evaluable control-variate generator.

    ``applies_to`` is ``"first"`` for scalar solutions evaluated at the
    first coordinate and ``"full"`` for state-linear Gaussian solutions.
    """

    kind: str
    applies_to: str
    _fn: object
    _dfn: object = None
    meta: dict = field(default_factory=dict)

    def evaluate(self, x, strict=False):
        if strict and self.applies_to == "first":
            lo, hi = self.meta["domain"]
            xa = np.asarray(x)
            if np.any((xa < lo) | (xa > hi)):
                raise DomainError(f"evaluation outside solver domain [{lo:.6g}, {hi:.6g}]")
        return self._fn(x)

    __call__ = evaluate

    def derivative(self, x):
        if self._dfn is None:
            raise DomainError(f"{self.kind} solution exposes no scalar derivative")
        return self._dfn(x)

    @property
    def is_zero(self):
        return bool(self.meta.get("zero", False))


def _linear_extension(fn, dfn, lo, hi):
    f_lo, f_hi = float(fn(lo)), float(fn(hi))
    d_lo, d_hi = float(dfn(lo)), float(dfn(hi))

    def value(x):
        x = np.asarray(x, dtype=float)
        inner = fn(np.clip(x, lo, hi))
        out = np.where(x < lo, f_lo + d_lo * (x - lo), inner)
        return np.where(x > hi, f_hi + d_hi * (x - hi), out)

    def slope(x):
        x = np.asarray(x, dtype=float)
        inner = dfn(np.clip(x, lo, hi))
        return np.where(x < lo, d_lo, np.where(x > hi, d_hi, inner))

    return value, slope


def evaluation_domain(density, q=TAIL_Q):
    """``[q, 1 - q]`` quantiles of ``density``."""
    if hasattr(density, "quantile"):
        return density.quantile(q), density.quantile(1.0 - q)
    lo, hi = density.quadrature_domain
    x = np.linspace(lo, hi, 200001)
    cdf = integrate.cumulative_trapezoid(density.pdf(x), x, initial=0.0)
    cdf /= cdf[-1]
    return float(np.interp(q, cdf, x)), float(np.interp(1.0 - q, cdf, x))


def solve_closed_form(density, f, rho_f, constants, n_nodes=N_CLOSED_FORM_NODES):
    """Explicit solution with ``fhat(0) = 0``.

    ``fhat'(y) = 2 / (h rho(y)) * I(y)`` with
    ``I(y) = int_{-inf}^y rho(z) (rho(f) - f(z)) dz``. ``I`` is
    tabulated on ``n_nodes`` uniform nodes of the ``[1e-8, 1 - 1e-8]``
    quantile interval, accumulated from the left on the lower half and
    from the right (using ``I(inf) = 0``) on the upper half so that
    neither tail suffers cancellation; the tails beyond the nodes come
    from adaptive quadrature. ``fhat'`` is splined and integrated
    exactly, and extended linearly outside the node interval.
    """
    lo, hi = evaluation_domain(density)
    q_lo, q_hi = density.quadrature_domain
    x = np.linspace(lo, hi, int(n_nodes))

    def g(z):
        return np.exp(density.log_rho(z)) * (rho_f - np.asarray(f(z), dtype=float))

    gx = g(x)
    if not np.any(gx):
        zero = PoissonSolution("closed_form", "first", lambda y: np.zeros_like(np.asarray(y, dtype=float)),
                               lambda y: np.zeros_like(np.asarray(y, dtype=float)),
                               {"h_l": constants.h_l, "rho_f": rho_f, "domain": (lo, hi), "zero": True})
        return zero

    def tail(a, b):
        if not a < b:
            return 0.0
        return integrate.quad(lambda z: float(g(z)), a, b, epsabs=0.0, epsrel=1e-12, limit=400)[0]

    left = tail(q_lo, lo) + integrate.cumulative_simpson(gx, x=x, initial=0.0)
    upper = integrate.cumulative_simpson(gx[::-1], dx=x[1] - x[0], initial=0.0)[::-1]
    right = -(tail(hi, q_hi) + upper)
    # I is accurate from the side it was accumulated on; switch where the
    # density's mass is split evenly.
    mass = integrate.cumulative_trapezoid(np.exp(density.log_rho(x)), x, initial=0.0)
    split = mass <= 0.5 * mass[-1]
    inner = np.where(split, left, right)
    slope = 2.0 * inner / (constants.h_l * np.exp(density.log_rho(x)))

    dspline = interpolate.CubicSpline(x, slope)
    anti = dspline.antiderivative()
    anchor = float(np.clip(0.0, lo, hi))
    offset = float(anti(anchor))
    value, deriv = _linear_extension(lambda y: anti(y) - offset, dspline, lo, hi)
    meta = {"h_l": constants.h_l, "rho_f": float(rho_f), "domain": (lo, hi),
            "grid_nodes": x, "grid_slopes": slope}
    return PoissonSolution("closed_form", "first", value, deriv, meta)


def _grid_system(log_rho, f, rho_f, x, h_l):
    m = x.size
    dx = x[1] - x[0]
    b_log = (np.asarray(log_rho(x + dx)) - np.asarray(log_rho(x - dx))) / (2.0 * dx)
    A = np.zeros((m, m))
    c2 = 0.5 * h_l / dx ** 2
    c1 = 0.5 * h_l / (2.0 * dx)
    for i in range(1, m - 1):
        A[i, i - 1] = c2 - c1 * b_log[i]
        A[i, i] = -2.0 * c2
        A[i, i + 1] = c2 + c1 * b_log[i]
    # one-sided second-order stencils on the two boundary rows
    A[0, :4] = c2 * np.array([2.0, -5.0, 4.0, -1.0])
    A[0, :3] += c1 * b_log[0] * np.array([-3.0, 4.0, -1.0])
    A[-1, -4:] = c2 * np.array([-1.0, 4.0, -5.0, 2.0])
    A[-1, -3:] += c1 * b_log[-1] * np.array([1.0, -4.0, 3.0])
    rhs = rho_f - np.asarray(f(x), dtype=float)
    return A, rhs


def solve_grid(log_rho, f, rho_f_hat, chain_coord1, l, d, constants, m=100, domain=None,
               rcond=1e-10):
    """Finite-difference solution on ``m`` equally spaced nodes.

    The grid spans ``[min X - 3 l/sqrt(d), max X + 3 l/sqrt(d)]`` of the
    chain's first coordinate unless ``domain`` is given. Derivatives of
    the unknown and of ``log rho`` are replaced by symmetric differences
    on the grid; the system is solved in the minimum-norm least-squares
    sense (pseudoinverse, singular values below ``rcond * s_max``
    dropped) and the node values are interpolated linearly.
    """
    if int(m) < 10:
        raise ValueError("need at least 10 grid nodes")
    if domain is None:
        xs = np.asarray(chain_coord1, dtype=float)
        if xs.size == 0:
            raise ValueError("chain_coord1 is empty")
        pad = 3.0 * l / math.sqrt(d)
        domain = (float(xs.min()) - pad, float(xs.max()) + pad)
    x = np.linspace(domain[0], domain[1], int(m))
    A, rhs = _grid_system(log_rho, f, rho_f_hat, x, constants.h_l)
    u_, s, vt = linalg.svd(A)
    keep = s > rcond * s[0]
    rank = int(np.count_nonzero(keep))
    if rank < m - 2:
        warnings.warn(f"grid Poisson system has effective rank {rank} < m-2 = {m - 2}",
                      IllConditioned, stacklevel=2)
    u = vt[keep].T @ ((u_[:, keep].T @ rhs) / s[keep])
    # fhat itself is the linear interpolant; its derivative is taken from
    # the C2 spline through the same nodes, which keeps G fhat meaningful
    slope_spline = interpolate.CubicSpline(x, u).derivative()

    def value(y):
        y = np.asarray(y, dtype=float)
        out = np.interp(y, x, u)
        out = np.where(y < x[0], u[0] + (u[1] - u[0]) / (x[1] - x[0]) * (y - x[0]), out)
        return np.where(y > x[-1], u[-1] + (u[-1] - u[-2]) / (x[-1] - x[-2]) * (y - x[-1]), out)

    def deriv(y):
        y = np.asarray(y, dtype=float)
        return slope_spline(np.clip(y, x[0], x[-1]))

    meta = {"h_l": constants.h_l, "rho_f": float(rho_f_hat), "domain": (x[0], x[-1]),
            "grid_nodes": x, "grid_values": u, "rank": rank, "zero": bool(np.all(u == u[0]))}
    return PoissonSolution("grid", "first", value, deriv, meta)


def gaussian_cv(Sigma, l, d=None):
    """Linear control variate ``(2/h0) sum_j x_j Sigma_j1`` for the first-coordinate mean.

    ``h0 = h(l)`` evaluated at ``J0 = tr((Sigma^-1)[1:, 1:]) / d``; for
    d = 1 the trace block is empty and J0 = 0. The mean of the target
    never enters.
    """
    S = np.asarray(Sigma, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("Sigma must be square")
    if d is None:
        d = S.shape[0]
    if d != S.shape[0]:
        raise ValueError(f"d={d} does not match Sigma of size {S.shape[0]}")
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise NotPositiveDefinite("Sigma is not symmetric")
    try:
        cf = linalg.cho_factor(S, lower=True)
    except linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    inv = linalg.cho_solve(cf, np.eye(d))
    J0 = float(np.trace(inv[1:, 1:])) / d
    h0 = h_of_l(l, J0)
    coef = (2.0 / h0) * S[:, 0].copy()

    def value(x):
        return np.asarray(x, dtype=float) @ coef

    meta = {"h_l": h0, "J0": J0, "Sigma_column": S[:, 0].copy(), "coef": coef}
    return PoissonSolution("gaussian_analytic", "full", value, None, meta)


def _fd_first(g, x):
    e = 1e-5 * np.maximum(1.0, np.abs(x))
    return (g(x + e) - g(x - e)) / (2.0 * e)


def generator_limit(density, g, constants, x, g_prime=None, g_second=None):
    """``(h/2) (g'' + (log rho)' g')`` at ``x``.

    Derivatives come from ``g_prime``/``g_second`` when supplied, from
    ``g.derivative`` for a :class:`PoissonSolution`, and otherwise from
    central differences.
    """
    x = np.asarray(x, dtype=float)
    if g_prime is None:
        if isinstance(g, PoissonSolution):
            g_prime = g.derivative
        else:
            def g_prime(y):
                return _fd_first(g, y)
    if g_second is None:
        def g_second(y):
            e = 1e-4 * np.maximum(1.0, np.abs(y))
            return (g_prime(y + e) - g_prime(y - e)) / (2.0 * e)
    return 0.5 * constants.h_l * (g_second(x) + density.d_log_rho(1, x) * g_prime(x))
