"""Single-view semi-NMF, ``X ~ U V^T`` with ``V >= 0``.

``X`` is ``M x N`` (features x instances), ``U`` is ``M x K`` and ``V`` is
``N x K``.  Used as a clustering baseline and to initialise DAIMC.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import pos_neg_split, solve_spd

EPS = 1e-10
RIDGE = 1e-12


@dataclass
class SemiNmfState:
    u: np.ndarray
    v: np.ndarray
    objective: float
    trace: list = field(default_factory=list)
    n_iter: int = 0


def objective(x, u, v):
    r = x - u @ v.T
    return float(np.sum(r * r))


def update_u(x, v):
    """Least-squares basis ``U = X V (V^T V)^-1`` (tiny ridge on the Gram)."""
    gram = v.T @ v
    if np.any(np.diag(gram) == 0):
        warnings.warn("latent matrix has an all-zero column; basis column is "
                      "determined by the ridge term only", RuntimeWarning,
                      stacklevel=2)
    gram = gram + RIDGE * np.eye(gram.shape[0])
    return solve_spd(gram, (x @ v).T).T


def update_v(x, u, v, eps=EPS):
    xtu_p, xtu_n = pos_neg_split(x.T @ u)
    utu_p, utu_n = pos_neg_split(u.T @ u)
    num = xtu_p + v @ utu_n
    den = xtu_n + v @ utu_p + eps
    return v * np.sqrt(num / den)


def init_latent(x, k, seed):
    """``|N(0,1)|`` draws scaled per instance by the mean of ``|X|``'s column."""
    rng = np.random.default_rng(seed)
    scale = np.abs(x).mean(axis=0)
    fallback = np.abs(x).mean()
    scale = np.where(scale > 0, scale, fallback if fallback > 0 else 1.0)
    return np.abs(rng.standard_normal((x.shape[1], k))) * scale[:, None]


def fit(x, k, tol=1e-6, max_iter=200, seed=0, v_init=None):
    x = np.asarray(x, dtype=float)
    if k > min(x.shape):
        raise ValueError(f"k={k} exceeds min(X.shape)={min(x.shape)}")
    v = init_latent(x, k, seed) if v_init is None else np.array(v_init, dtype=float)
    u = update_u(x, v)
    obj = objective(x, u, v)
    trace = [obj]
    it = 0
    while it < max_iter:
        u = update_u(x, v)
        v = update_v(x, u, v)
        it += 1
        new = objective(x, u, v)
        trace.append(new)
        converged = abs(obj - new) < tol * max(obj, np.finfo(float).tiny)
        obj = new
        if converged:
            break
    return SemiNmfState(u=u, v=v, objective=obj, trace=trace, n_iter=it)
