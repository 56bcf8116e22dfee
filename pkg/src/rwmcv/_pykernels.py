"""Pure-Python/NumPy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module.
Product kernels take per-component constants ``a`` (log weight minus
log normaliser), means ``mu`` and inverse standard deviations ``s``;
mixture-of-normals kernels take component means (K, d), log weights
with the Gaussian normaliser folded in, and the shared precision.
"""
import numpy as np

NAME = "python"


def _coord_logpdf(x, a, mu, s):
    z = (x[..., None] - mu) * s
    c = a - 0.5 * z * z
    m = np.max(c, axis=-1)
    return m + np.log(np.sum(np.exp(c - m[..., None]), axis=-1))


def product_logpdf_rows(X, a, mu, s):
    """Row sums of the coordinate log-density, X of shape (n, d)."""
    return np.sum(_coord_logpdf(np.asarray(X, dtype=float), a, mu, s), axis=-1)


def product_chain(x0, steps, log_u, a, mu, s):
    """Random-walk Metropolis for a product target.

    ``steps`` holds the T-1 scaled proposal increments and ``log_u`` the
    log uniforms; returns (states (T, d), accepted (T,)).
    """
    x = np.array(x0, dtype=float)
    n_steps, d = steps.shape
    states = np.empty((n_steps + 1, d))
    accepted = np.empty(n_steps + 1, dtype=bool)
    states[0] = x
    accepted[0] = True
    lp = _coord_logpdf(x, a, mu, s)
    for t in range(n_steps):
        y = x + steps[t]
        lpy = _coord_logpdf(y, a, mu, s)
        if log_u[t] < np.sum(lpy - lp):
            x, lp = y, lpy
            accepted[t + 1] = True
        else:
            accepted[t + 1] = False
        states[t + 1] = x
    return states, accepted


def mv_logpdf_rows(X, means, logw, prec):
    X = np.asarray(X, dtype=float)
    mp = means @ prec
    quad = np.einsum("ij,ij->i", X @ prec, X)
    cross = X @ mp.T
    mpm = np.einsum("ij,ij->i", mp, means)
    c = logw - 0.5 * (quad[:, None] - 2.0 * cross + mpm)
    m = np.max(c, axis=1)
    return m + np.log(np.sum(np.exp(c - m[:, None]), axis=1))


def _mv_point(y, means, logw, prec):
    diff = y - means
    c = logw - 0.5 * np.einsum("ij,jk,ik->i", diff, prec, diff)
    m = np.max(c)
    return m + np.log(np.sum(np.exp(c - m)))


def mv_chain(x0, steps, log_u, means, logw, prec):
    x = np.array(x0, dtype=float)
    n_steps, d = steps.shape
    states = np.empty((n_steps + 1, d))
    accepted = np.empty(n_steps + 1, dtype=bool)
    states[0] = x
    accepted[0] = True
    lp = _mv_point(x, means, logw, prec)
    for t in range(n_steps):
        y = x + steps[t]
        lpy = _mv_point(y, means, logw, prec)
        if log_u[t] < lpy - lp:
            x, lp = y, lpy
            accepted[t + 1] = True
        else:
            accepted[t + 1] = False
        states[t + 1] = x
    return states, accepted
