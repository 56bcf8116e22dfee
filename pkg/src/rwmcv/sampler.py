"""Random-walk Metropolis kernel, chains started in stationarity, tuning."""
import csv
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from . import _backend
from .rng import CHAIN, StreamKey, as_generator
from .targets import sample_stationary


@dataclass(frozen=True)
class RWMConfig:
    """Proposal ``N(x, l^2/d I_d)``, chain length ``T``, master ``seed``."""

    d: int
    l: float
    T: int
    seed: int = 0

    def __post_init__(self):
        if int(self.d) < 1:
            raise ValueError("d must be >= 1")
        if not self.l > 0:
            raise ValueError("l must be positive")
        if int(self.T) < 1:
            raise ValueError("T must be >= 1")

    @property
    def step_sd(self):
        return self.l / math.sqrt(self.d)


@dataclass
class ChainSample:
    """One trajectory. ``states[0]`` is the stationary draw and
    ``accepted[0]`` is True by convention, so T states hold T-1 moves."""

    states: np.ndarray
    accepted: np.ndarray
    config: RWMConfig

    @property
    def T(self):
        return self.states.shape[0]

    @property
    def d(self):
        return self.states.shape[1]


def _log_accept_ratio(target, y, x):
    return float(target.log_density(y) - target.log_density(x))


def rwm_step(target, state, l, rng):
    """One RWM transition from ``state``.

    Draws d proposal normals then one uniform from ``rng``; accepts when
    ``log U < log rho_d(Y) - log rho_d(x)``, which always holds if the
    ratio is at least one.
    """
    rng = as_generator(rng)
    x = np.asarray(state, dtype=float)
    d = x.shape[-1]
    proposal = x + (l / math.sqrt(d)) * rng.standard_normal(d)
    u = rng.random()
    log_ratio = _log_accept_ratio(target, proposal, x)
    accepted = log_ratio >= 0.0 or u == 0.0 or math.log(u) < log_ratio
    return (proposal.copy() if accepted else x.copy()), bool(accepted), proposal


def chain_stream(seed, d=0, run=0, extra=0):
    """Stream key for run ``run`` of a cell; see :mod:`rwmcv.rng`."""
    return StreamKey(int(seed), (CHAIN, int(d), int(run), int(extra)))


def _python_chain(target, x0, steps, log_u):
    n_steps, d = steps.shape
    states = np.empty((n_steps + 1, d))
    accepted = np.empty(n_steps + 1, dtype=bool)
    states[0] = x = x0
    accepted[0] = True
    lp = float(target.log_density(x))
    for t in range(n_steps):
        y = x + steps[t]
        lpy = float(target.log_density(y))
        ok = log_u[t] < lpy - lp
        if ok:
            x, lp = y, lpy
        accepted[t + 1] = ok
        states[t + 1] = x
    return states, accepted


def rwm_run(target, config, stream=None):
    """Simulate a chain of ``config.T`` states started from an exact draw.

    Randomness comes from ``stream`` (a StreamKey or Generator); by
    default the stream is derived from ``config.seed``. Draw order: the
    initial state, then all T-1 increments row by row, then the T-1
    acceptance uniforms.
    """
    if target.d != config.d:
        raise ValueError(f"target dimension {target.d} != config.d {config.d}")
    if stream is None:
        stream = chain_stream(config.seed, config.d)
    rng = as_generator(stream)
    x0 = sample_stationary(target, 1, rng)[0]
    n_steps = int(config.T) - 1
    steps = config.step_sd * rng.standard_normal((n_steps, config.d))
    with np.errstate(divide="ignore"):
        log_u = np.log(rng.random(n_steps))
    k = _backend.kernels
    if target.kernel == "product":
        states, accepted = k.product_chain(x0, steps, log_u, *target.density.kernel_params)
    elif target.kernel == "mv":
        states, accepted = k.mv_chain(x0, steps, log_u, *target.kernel_params)
    else:
        states, accepted = _python_chain(target, x0, steps, log_u)
    return ChainSample(np.asarray(states), np.asarray(accepted, dtype=bool), config)


def empirical_acceptance(chain):
    """Fraction of accepted moves among the T-1 transitions (1.0 if T == 1)."""
    acc = np.asarray(chain.accepted, dtype=bool)
    if acc.size <= 1:
        return 1.0
    return float(np.mean(acc[1:]))


def limit_acceptance(l, J):
    """Limiting acceptance rate ``2 Phi(-l sqrt(J) / 2)``."""
    return 2.0 * float(special.ndtr(-0.5 * l * math.sqrt(J)))


@functools.lru_cache(maxsize=1)
def _c_hat():
    # maximiser of 2 c^2 Phi(-c/2); the J-dependence is pure scaling
    res = optimize.minimize_scalar(lambda c: -2.0 * c * c * special.ndtr(-0.5 * c),
                                   bracket=(0.5, 2.0, 8.0), method="golden", tol=1e-12)
    return float(res.x)


def optimal_l(J):
    """Proposal scale maximising the diffusion speed ``2 l^2 Phi(-l sqrt(J)/2)``."""
    if not J > 0:
        raise ValueError("J must be positive")
    return _c_hat() / math.sqrt(J)


def write_trajectory_csv(chain, path, max_coords=50):
    """Dump ``step,accepted,x1,...,xk`` with k = min(d, max_coords)."""
    k = min(chain.d, int(max_coords))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "accepted"] + [f"x{i + 1}" for i in range(k)])
        for n in range(chain.T):
            w.writerow([n + 1, int(chain.accepted[n])] + [repr(float(v)) for v in chain.states[n, :k]])
