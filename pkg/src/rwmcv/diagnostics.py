"""Checks of the structural limit results.

* the generator gap between the RWM generator ``G_d g`` (estimated by
  Monte Carlo over proposals) and the diffusion generator ``G g``;
* the concentration sets ``A_d``: four empirical-average conditions on
  coordinates ``2..d`` built from a set ``A`` where
  ``|log rho''| < (log rho')^2`` and ``1/c_A < |log rho'| < c_A``;
* the sluggish sequence ``a_d = sqrt(2 log d)``.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .exceptions import DomainError, EmptyA
from .poisson import generator_limit
from .rng import INNER, POINTS, StreamKey, as_generator
from .targets import ProductTarget, expectation, fisher_J, sample_stationary

DEFAULT_C_A_GRID = (4.0, 8.0, 16.0, 32.0, 64.0)
RHO_A_TARGET = 0.05
N_SCAN = 10_000
# A condition whose constant is (numerically) zero is read as "the
# centred average is zero"; see ad_membership.
DEGENERATE = 1e-9


def sluggish_default(d):
    """``sqrt(2 log d)``, defined for real ``d >= 2``."""
    if not d >= 2:
        raise DomainError(f"sluggish sequence needs d >= 2, got {d!r}")
    return math.sqrt(2.0 * math.log(d))


@dataclass
class AdConstants:
    """Constants of the ``A_d`` conditions for one scalar density.

    ``set_A`` is a list of open intervals ``(a, b)``.
    """

    c_A: float
    set_A: list
    rho_A: float
    exp_moment: float
    J: float
    c3: float
    c4: float
    density: object = field(default=None, repr=False, compare=False)

    def in_A(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.set_A:
            out |= (x > a) & (x < b)
        return out

    def as_dict(self):
        return {"c_A": self.c_A, "set_A": [list(iv) for iv in self.set_A], "rho_A": self.rho_A,
                "exp_moment": self.exp_moment, "J": self.J, "c3": self.c3, "c4": self.c4}


def _margin(density, c_A):
    """Continuous function that is positive exactly on ``A``."""
    def m(x):
        l1 = density.d_log_rho(1, x)
        l2 = density.d_log_rho(2, x)
        a1 = np.abs(l1)
        return np.minimum(np.minimum(l1 * l1 - np.abs(l2), a1 - 1.0 / c_A), c_A - a1)
    return m


def _intervals(margin, x):
    """Intervals where ``margin > 0``, with scan transitions refined by root finding."""
    pos = margin(x) > 0
    out = []
    start = None
    for i in range(x.size):
        if pos[i] and start is None:
            start = x[i] if i == 0 else optimize.brentq(margin, x[i - 1], x[i], xtol=1e-14)
        elif not pos[i] and start is not None:
            out.append((float(start), float(optimize.brentq(margin, x[i - 1], x[i], xtol=1e-14))))
            start = None
    if start is not None:
        out.append((float(start), float(x[-1])))
    return out


def _mass(density, intervals, tol):
    total = 0.0
    for a, b in intervals:
        total += expectation(density, lambda z: 1.0, tol=tol, limits=(a, b))
    return total


def compute_ad_constants(density, c_A_grid=DEFAULT_C_A_GRID, n_scan=N_SCAN, tol=1e-10):
    """Constants of the ``A_d`` conditions.

    ``A`` is located by scanning ``n_scan`` points of the density's
    quadrature domain and refining each boundary with Brent's method, so
    the result does not depend on the scan resolution. The smallest
    ``c_A`` in the grid with ``rho(A) >= 0.05`` is used; failing that,
    the one with the largest positive ``rho(A)``.
    """
    lo, hi = density.quadrature_domain
    x = np.linspace(lo, hi, int(n_scan))
    best = None
    for c in sorted(float(c) for c in c_A_grid):
        if not c > 1.0:
            continue
        ivs = _intervals(_margin(density, c), x)
        mass = _mass(density, ivs, tol) if ivs else 0.0
        if mass >= RHO_A_TARGET:
            best = (c, ivs, mass)
            break
        if mass > 0 and (best is None or mass > best[2]):
            best = (c, ivs, mass)
    if best is None:
        raise EmptyA(f"no c_A in {list(c_A_grid)} gives rho(A) > 0")
    c_A, ivs, rho_A = best
    J = fisher_J(density, tol)
    exp_moment = expectation(density, lambda z: math.exp(abs(z)), tol=tol)
    v3 = expectation(density, lambda z: (density.d_log_rho(1, z) ** 2 - J) ** 2, tol=tol)
    v4 = expectation(density, lambda z: (density.d_log_rho(2, z) + J) ** 2, tol=tol)
    return AdConstants(c_A, ivs, rho_A, exp_moment, J, math.sqrt(3.0 * max(v3, 0.0)),
                       math.sqrt(3.0 * max(v4, 0.0)), density)


def _bound_holds(lhs, bound):
    if bound <= DEGENERATE:
        return lhs <= DEGENERATE
    return lhs < bound


def ad_membership(consts, x, a_d):
    """Evaluate the four ``A_d`` conditions on coordinates ``2..d``.

    ``x`` is one state ``(d,)`` or a batch ``(n, d)``. Returns a dict with
    boolean ``in_Ad`` and ``cond`` (shape ``(4,)`` or ``(n, 4)``).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    d = X.shape[1]
    if d < 2:
        raise DomainError("A_d membership needs d >= 2")
    rest = X[:, 1:]
    dens = consts.density
    scale = a_d / math.sqrt(d)
    c1 = np.mean(np.exp(np.abs(rest)), axis=1) < 2.0 * consts.exp_moment
    c2 = np.mean(consts.in_A(rest), axis=1) > consts.rho_A / 2.0
    lhs3 = np.abs(np.mean(dens.d_log_rho(1, rest) ** 2, axis=1) - consts.J)
    lhs4 = np.abs(np.mean(dens.d_log_rho(2, rest), axis=1) + consts.J)
    b3, b4 = scale * consts.c3, scale * consts.c4
    c3 = np.array([_bound_holds(v, b3) for v in lhs3])
    c4 = np.array([_bound_holds(v, b4) for v in lhs4])
    cond = np.stack([c1, c2, c3, c4], axis=1)
    in_Ad = cond.all(axis=1)
    if single:
        return {"in_Ad": bool(in_Ad[0]), "cond": cond[0]}
    return {"in_Ad": in_Ad, "cond": cond}


def generator_chain_mc(target, g, x, l, n_inner, rng, antithetic=True):
    """Monte Carlo estimate of ``G_d g(x) = d E[(g(Y_1) - g(x_1)) alpha(x, Y)]``.

    Returns ``(estimate, standard_error)``. With ``antithetic`` the
    proposals come in pairs that share coordinates ``2..d`` and flip the
    first increment; the SE is computed from pair means.
    """
    rng = as_generator(rng)
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    n_inner = int(n_inner)
    sd = l / math.sqrt(d)
    if antithetic:
        half = n_inner // 2
        Z = rng.standard_normal((half, d))
        Z2 = Z.copy()
        Z2[:, 0] = -Z2[:, 0]
        Y = x + sd * np.concatenate([Z, Z2])
    else:
        Y = x + sd * rng.standard_normal((n_inner, d))
    lx = float(target.log_density(x))
    alpha = np.exp(np.minimum(target.log_density(Y) - lx, 0.0))
    terms = d * (np.asarray(g(Y[:, 0]), dtype=float) - float(g(x[0]))) * alpha
    if antithetic:
        units = 0.5 * (terms[:half] + terms[half:])
    else:
        units = terms
    est = float(np.mean(terms))
    se = float(np.std(units, ddof=1) / math.sqrt(units.size)) if units.size > 1 else float("nan")
    return est, se


@dataclass
class GeneratorGapReport:
    """Per-dimension records of ``|G g - G_d g|`` over stationary points."""

    records: list

    def rows(self):
        return list(self.records)

    def mean_gap(self, d):
        for r in self.records:
            if r["d"] == d:
                return r["mean_abs_gap"]
        raise KeyError(d)


GAP_COLUMNS = ("d", "mean_abs_gap", "q95_abs_gap", "mean_inner_se", "n_points", "n_inner")


def generator_gap_study(density, g, constants, d_grid, n_points, n_inner, seed,
                        g_prime=None, g_second=None, consts_Ad=None):
    """Compare the chain generator with its diffusion limit.

    For each ``d`` the product target ``rho^{(x)d}`` is built, ``n_points``
    stationary states are drawn, and at each the limit ``G g(x_1)`` is
    compared with :func:`generator_chain_mc` (``n_inner`` proposals,
    scale ``constants.l``). With ``consts_Ad`` points outside ``A_d`` are
    redrawn, i.e. the study is conditioned on ``A_d``.
    """
    records = []
    seed = int(seed)
    for d in d_grid:
        d = int(d)
        target = ProductTarget(density, d)
        pts_rng = StreamKey(seed, (POINTS, d)).generator()
        pts = sample_stationary(target, int(n_points), pts_rng)
        if consts_Ad is not None:
            a_d = sluggish_default(d)
            keep = ad_membership(consts_Ad, pts, a_d)["in_Ad"]
            while not keep.all():
                fresh = sample_stationary(target, int((~keep).sum()), pts_rng)
                pts[~keep] = fresh
                keep = ad_membership(consts_Ad, pts, a_d)["in_Ad"]
        limit = np.asarray(generator_limit(density, g, constants, pts[:, 0], g_prime, g_second),
                           dtype=float)
        gaps = np.empty(pts.shape[0])
        ses = np.empty(pts.shape[0])
        for i in range(pts.shape[0]):
            est, se = generator_chain_mc(target, g, pts[i], constants.l, n_inner,
                                         StreamKey(seed, (INNER, d, i)))
            gaps[i] = abs(limit[i] - est)
            ses[i] = se
        records.append({"d": d, "mean_abs_gap": float(gaps.mean()),
                        "q95_abs_gap": float(np.quantile(gaps, 0.95)),
                        "mean_inner_se": float(ses.mean()),
                        "n_points": int(n_points), "n_inner": int(n_inner)})
    return GeneratorGapReport(records)
