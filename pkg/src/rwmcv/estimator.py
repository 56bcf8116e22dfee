"""Ergodic averages with and without the Poisson control variate.

The corrected estimator is

    (1/T) sum_n [ f(X_n) + d * cv(X_n) ],

where ``cv(x)`` is the nested IID Monte Carlo estimate of
``(P_d fhat - fhat)(x)``:

    cv(x) = (1/n_MC) sum_j (1 ^ rho_d(Y_j)/rho_d(x)) (fhat(Y_j) - fhat(x)),
    Y_j ~ N(x, l^2/d I_d) IID.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateDenominator, TooFewBatches
from .rng import CV, StreamKey, as_generator

# Chain steps per counter block of the inner Monte Carlo stream. Part of
# the reproducibility contract: changing it changes every corrected run.
BLOCK = 128


def first_coordinate(x):
    return np.asarray(x)[..., 0]


@dataclass(frozen=True)
class CVSpec:
    """How the control variate is applied.

    ``applies_to`` is ``"first"`` (scalar solution evaluated at the
    first coordinate) or ``"full"`` (state-linear Gaussian solution);
    it defaults to what the solution declares.
    """

    solution: object
    n_MC: int
    d: int
    l: float
    applies_to: str = None

    def __post_init__(self):
        if int(self.n_MC) < 1:
            raise ValueError("n_MC must be >= 1")
        mode = self.applies_to or self.solution.applies_to
        if mode not in ("first", "full"):
            raise ValueError(f"unknown applies_to {mode!r}")
        if mode != self.solution.applies_to:
            raise ValueError(f"{self.solution.kind} solution cannot be applied to {mode!r}")
        object.__setattr__(self, "applies_to", mode)


@dataclass
class EstimateResult:
    plain: float
    corrected: float
    cv_values: np.ndarray = None
    seeds: dict = field(default_factory=dict)


def plain_average(chain, f=first_coordinate):
    """``(1/T) sum_n f(X_n)``."""
    return float(np.mean(f(chain.states)))


def _cv_values(target, spec, X, Z):
    """Nested-MC estimates for states X (n, d) given normals Z (n, n_MC, d)."""
    if spec.solution.is_zero:
        return np.zeros(X.shape[0])
    Y = X[:, None, :] + (spec.l / math.sqrt(spec.d)) * Z
    log_ratio = target.log_density(Y) - target.log_density(X)[:, None]
    alpha = np.exp(np.minimum(log_ratio, 0.0))
    if spec.applies_to == "first":
        fy = spec.solution(Y[..., 0])
        fx = spec.solution(X[:, 0])
    else:
        fy = spec.solution(Y)
        fx = spec.solution(X)
    return np.mean(alpha * (fy - fx[:, None]), axis=1)


def cv_correction(target, spec, state, rng):
    """Unbiased nested-MC estimate of ``(P_d fhat - fhat)(state)``."""
    rng = as_generator(rng)
    x = np.asarray(state, dtype=float).reshape(1, spec.d)
    Z = rng.standard_normal((1, int(spec.n_MC), spec.d))
    return float(_cv_values(target, spec, x, Z)[0])


def cv_stream(seed, d=0, run=0, knob=0):
    return StreamKey(int(seed), (CV, int(d), int(run), int(knob)))


def cv_values(chain, target, spec, stream):
    """Per-step CV estimates along a chain.

    Step n draws its proposals from counter block ``n // BLOCK`` of
    ``stream``, so each block can be computed independently and in any
    order with identical results.
    """
    X = np.asarray(chain.states, dtype=float)
    T = X.shape[0]
    out = np.empty(T)
    for b, start in enumerate(range(0, T, BLOCK)):
        stop = min(start + BLOCK, T)
        gen = stream.generator(b)
        Z = gen.standard_normal((stop - start, int(spec.n_MC), spec.d))
        out[start:stop] = _cv_values(target, spec, X[start:stop], Z)
    return out


def cv_average(chain, target, spec, stream, f=first_coordinate, keep_values=False):
    """Plain and corrected estimates from the same trajectory.

    ``corrected`` is defined as ``plain + d * mean(cv_values)``.
    """
    if not isinstance(stream, StreamKey):
        raise TypeError("cv_average needs a StreamKey so per-step streams can be derived")
    plain = plain_average(chain, f)
    if spec.solution.is_zero:
        values = np.zeros(chain.states.shape[0])
        corrected = plain
    else:
        values = cv_values(chain, target, spec, stream)
        corrected = plain + spec.d * float(np.mean(values))
    return EstimateResult(plain, corrected, values if keep_values else None,
                          {"seed": stream.seed, "path": list(stream.path)})


def variance_reduction(plain_runs, cv_runs, truth):
    """Ratio of summed squared errors, plain over corrected."""
    p = np.asarray(plain_runs, dtype=float)
    c = np.asarray(cv_runs, dtype=float)
    if p.shape != c.shape or p.ndim != 1 or p.size < 1:
        raise ValueError("plain_runs and cv_runs must be equal-length non-empty vectors")
    den = float(np.sum((c - truth) ** 2))
    if den == 0.0:
        raise DegenerateDenominator("every corrected run equals the truth")
    return float(np.sum((p - truth) ** 2)) / den


def batch_means_variance(values, batch_count):
    """Batch-means estimate of the asymptotic variance ``sigma^2``.

    The running mean of ``n`` values then has variance about
    ``sigma^2 / n``. A trailing partial batch is dropped.
    """
    v = np.asarray(values, dtype=float)
    batch_count = int(batch_count)
    if batch_count < 2:
        raise TooFewBatches("batch_count must be >= 2")
    size = v.size // batch_count
    if size < 1:
        raise TooFewBatches(f"{v.size} values cannot fill {batch_count} batches")
    means = v[: size * batch_count].reshape(batch_count, size).mean(axis=1)
    return float(size * np.sum((means - means.mean()) ** 2) / (batch_count - 1))
