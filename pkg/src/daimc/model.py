"""DAIMC: joint weighted semi-NMF with L2,1-regularised basis alignment.

Minimises, over per-view bases ``U_i`` (``d_i x K``), a shared nonnegative
latent matrix ``V`` (``N x K``) and per-view regression matrices ``B_i``::

    sum_i ||(X_i - U_i V^T) W_i||_F^2 + alpha (||B_i^T U_i - I||_F^2 + beta ||B_i||_{2,1})

where ``W_i`` is the 0/1 diagonal presence matrix of view ``i``.
"""

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import seminmf
from .errors import InvalidInputError, NumericError
from .numerics import pos_neg_split, solve_spd, sym_eig

log = logging.getLogger(__name__)

RIDGE = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 1e1
    beta: float = 1e0
    k: int = 2
    outer_tol: float = 1e-6
    inner_tol: float = 1e-5
    outer_max: int = 200
    inner_max: int = 50
    epsilon: float = 1e-10
    seed: int = 0
    regression: str = "woodbury"

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise InvalidInputError("alpha and beta must be nonnegative")
        if self.k < 1:
            raise InvalidInputError("k must be >= 1")
        if self.outer_tol <= 0 or self.inner_tol <= 0 or self.epsilon <= 0:
            raise InvalidInputError("tolerances must be positive")
        if self.regression not in ("woodbury", "direct"):
            raise InvalidInputError(f"unknown regression form {self.regression!r}")

    def to_dict(self):
        return asdict(self)


@dataclass
class FactorizationState:
    basis: list
    latent: np.ndarray
    regression: list
    objective_trace: list = field(default_factory=list)
    pre_normalization_trace: list = field(default_factory=list)
    zero_columns: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False
    wall_time: float = 0.0

    def copy(self):
        return replace(self, basis=[u.copy() for u in self.basis],
                       latent=self.latent.copy(),
                       regression=[b.copy() for b in self.regression],
                       objective_trace=list(self.objective_trace),
                       pre_normalization_trace=list(self.pre_normalization_trace),
                       zero_columns=list(self.zero_columns))


def l21_norm(b):
    return float(np.sum(np.sqrt(np.sum(b * b, axis=1))))


def smoothed_l21(b, eps):
    """Huber-smoothed L2,1 norm; its IRLS weights are ``1/max(||b_j||, eps)``."""
    r = np.sqrt(np.sum(b * b, axis=1))
    return float(np.sum(np.where(r >= eps, r, r * r / (2 * eps) + eps / 2)))


def _check_shapes(ds, st):
    if len(st.basis) != ds.n_views or len(st.regression) != ds.n_views:
        raise InvalidInputError("state has the wrong number of views")
    k = st.latent.shape[1]
    if st.latent.shape[0] != ds.n_instances:
        raise InvalidInputError(
            f"V has {st.latent.shape[0]} rows, dataset has {ds.n_instances} instances")
    for i, (u, b, d) in enumerate(zip(st.basis, st.regression, ds.dims)):
        if u.shape != (d, k) or b.shape != (d, k):
            raise InvalidInputError(
                f"view {i}: U {u.shape}, B {b.shape}, expected ({d}, {k})")


def data_term(ds, basis, latent):
    total = 0.0
    for i, u in enumerate(basis):
        r = (ds.masked_view(i) - u @ latent.T)[:, ds.mask(i)]
        total += float(np.sum(r * r))
    return total


def alignment_term(basis, regression, beta):
    total = 0.0
    for u, b in zip(basis, regression):
        e = b.T @ u - np.eye(u.shape[1])
        total += float(np.sum(e * e)) + beta * l21_norm(b)
    return total


def objective(ds, st, hp):
    _check_shapes(ds, st)
    return (data_term(ds, st.basis, st.latent)
            + hp.alpha * alignment_term(st.basis, st.regression, hp.beta))


def solve_sylvester(a, b, c):
    """Solve ``A X + X B = C`` for symmetric PSD ``A`` (d x d) and ``B`` (K x K).

    Diagonalises the small ``B = Q L Q^T`` and solves ``(A + l_j I) y_j = (CQ)_j``
    column by column, then maps back with ``X = Y Q^T``.
    """
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    lam, q = sym_eig(b)
    ct = c @ q
    d = a.shape[0]
    eye = np.eye(d)
    y = np.empty_like(ct)
    for j, lj in enumerate(lam):
        try:
            y[:, j] = solve_spd(a + lj * eye, ct[:, j])
        except NumericError:
            shift = max(0.0, -lj) + RIDGE * max(1.0, np.linalg.norm(a), abs(lj))
            try:
                y[:, j] = solve_spd(a + (lj + shift) * eye, ct[:, j])
            except NumericError as exc:
                raise NumericError(
                    f"Sylvester system singular for eigenvalue {lj:g}",
                    column=j, eigenvalue=float(lj)) from exc
    return y @ q.T


def update_basis(ds, st, hp, view):
    """Exact minimiser of the view-``view`` subproblem in ``U`` (Sylvester)."""
    v = st.latent
    vp = v[ds.mask(view)]
    gram = vp.T @ vp
    xwv = ds.masked_view(view) @ v
    if hp.alpha == 0:
        k = gram.shape[0]
        return solve_spd(gram + RIDGE * np.eye(k), xwv.T).T
    b = st.regression[view]
    return solve_sylvester(hp.alpha * (b @ b.T), gram, xwv + hp.alpha * b)


def _pushthrough(u, shift):
    # (U U^T + s I)^-1 U == U (U^T U + s I)^-1
    k = u.shape[1]
    return solve_spd(u.T @ u + shift * np.eye(k), u.T).T


def regression_weights(b, eps):
    """Inverse IRLS weights ``1/D_jj = max(||b_j||, eps)``."""
    return np.maximum(np.sqrt(np.sum(b * b, axis=1)), eps)


def regression_direct(u, beta, d_inv):
    return solve_spd(u @ u.T + 0.5 * beta * np.diag(1.0 / d_inv), u)


def regression_woodbury(u, beta, d_inv):
    k = u.shape[1]
    g = d_inv[:, None] * u
    inner = u.T @ g + 0.5 * beta * np.eye(k)
    try:
        s = solve_spd(inner, g.T @ u)
    except NumericError:
        s = solve_spd(inner + RIDGE * np.eye(k), g.T @ u)
    return (2.0 / beta) * (g - g @ s)


def update_regression(st, hp, view, form=None):
    """One IRLS step for ``B_i`` with the current row-norm reweighting."""
    u = st.basis[view]
    if hp.beta == 0:
        return _pushthrough(u, RIDGE)
    d_inv = regression_weights(st.regression[view], hp.epsilon)
    form = form or hp.regression
    if form == "direct":
        return regression_direct(u, hp.beta, d_inv)
    return regression_woodbury(u, hp.beta, d_inv)


def latent_term(ds, basis, latent):
    return data_term(ds, basis, latent)


def latent_step(ds, basis, v, eps):
    num = np.zeros_like(v)
    den = np.zeros_like(v)
    for i, u in enumerate(basis):
        w = ds.mask(i)[:, None]
        xtu_p, xtu_n = pos_neg_split(ds.masked_view(i).T @ u)
        utu_p, utu_n = pos_neg_split(u.T @ u)
        num += w * (xtu_p + v @ utu_n)
        den += w * (xtu_n + v @ utu_p)
    return v * np.sqrt(num / (den + eps))


def update_latent(ds, st, hp, return_trace=False):
    """Iterate the multiplicative ``V`` update until the data term settles."""
    v = st.latent
    obj = latent_term(ds, st.basis, v)
    trace = [obj]
    for _ in range(hp.inner_max):
        v = latent_step(ds, st.basis, v, hp.epsilon)
        new = latent_term(ds, st.basis, v)
        trace.append(new)
        done = abs(obj - new) < hp.inner_tol * max(obj, np.finfo(float).tiny)
        obj = new
        if done:
            break
    return (v, trace) if return_trace else v


def normalize(st):
    """Rescale so every nonzero column of ``V`` sums to one (``U_i`` absorbs it)."""
    q = st.latent.sum(axis=0)
    zero = q <= 0
    q = np.where(zero, 1.0, q)
    out = st.copy()
    out.latent = st.latent / q
    out.basis = [u * q for u in st.basis]
    out.zero_columns = np.flatnonzero(zero).tolist()
    return out


def _match_columns(ref, other, rows):
    """Column permutation of ``other`` best correlated with ``ref`` on ``rows``."""
    k = ref.shape[1]
    if rows.sum() < 2:
        return np.arange(k)
    a = ref[rows] - ref[rows].mean(axis=0)
    b = other[rows] - other[rows].mean(axis=0)
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    corr = (a.T @ b) / np.maximum(np.outer(na, nb), np.finfo(float).tiny)
    _, cols = linear_sum_assignment(corr, maximize=True)
    return cols


def initialize(ds, hp):
    """Starting point built from per-view semi-NMF runs.

    Each view is factorised on its present instances (missing rows get the
    view's mean latent row), columns are matched to view 0's, column-scaled
    to unit sums and averaged into ``V``.  ``U_i`` then solves the alpha=0
    subproblem and ``B_i`` the regression with ``D = I``.
    """
    k = hp.k
    seeds = np.random.SeedSequence(hp.seed).spawn(ds.n_views)
    n = ds.n_instances
    latents = []
    for i in range(ds.n_views):
        present = ds.mask(i)
        res = seminmf.fit(ds.views[i][:, present], k, seed=seeds[i])
        full = np.empty((n, k))
        full[present] = res.v
        full[~present] = res.v.mean(axis=0)
        if latents:
            full = full[:, _match_columns(latents[0], full, present & ds.mask(0))]
        latents.append(full)
    v = np.mean([x / np.where(x.sum(axis=0) > 0, x.sum(axis=0), 1.0)
                 for x in latents], axis=0)
    st = FactorizationState(basis=[None] * ds.n_views, latent=v,
                            regression=[np.zeros((d, k)) for d in ds.dims])
    plain = replace(hp, alpha=0.0)
    st.basis = [update_basis(ds, st, plain, i) for i in range(ds.n_views)]
    st = normalize(st)
    st.regression = [_pushthrough(u, 0.5 * hp.beta + RIDGE) for u in st.basis]
    return st


def fit(ds, hp, init=None):
    """Alternate U, B (per view), an inner V loop, and normalisation.

    ``objective_trace`` holds the objective at the start and after every outer
    iteration (post-normalisation); ``pre_normalization_trace`` holds the value
    just before each normalisation.
    """
    if hp.k > min(ds.n_instances, min(ds.dims)):
        raise InvalidInputError(
            f"k={hp.k} exceeds min(N, d_i)={min(ds.n_instances, min(ds.dims))}")
    ds.check_rank(hp.k)
    t0 = time.perf_counter()
    st = initialize(ds, hp) if init is None else init.copy()
    _check_shapes(ds, st)
    obj = objective(ds, st, hp)
    st.objective_trace = [obj]
    st.pre_normalization_trace = []
    st.n_iter = 0
    st.converged = False
    for it in range(1, hp.outer_max + 1):
        step = "update_basis"
        try:
            for i in range(ds.n_views):
                step = "update_basis"
                st.basis[i] = update_basis(ds, st, hp, i)
                step = "update_regression"
                st.regression[i] = update_regression(st, hp, i)
            step = "update_latent"
            st.latent = update_latent(ds, st, hp)
        except NumericError as exc:
            exc.diagnostics.update(iteration=it, step=step)
            raise NumericError(f"iteration {it}, {step}: {exc}",
                               **exc.diagnostics) from exc
        st.pre_normalization_trace.append(objective(ds, st, hp))
        trace, pre = st.objective_trace, st.pre_normalization_trace
        st = normalize(st)
        st.objective_trace, st.pre_normalization_trace = trace, pre
        if st.zero_columns:
            log.warning("iteration %d: V columns %s are all zero", it, st.zero_columns)
        new = objective(ds, st, hp)
        st.objective_trace.append(new)
        st.n_iter = it
        if abs(obj - new) < hp.outer_tol * max(obj, np.finfo(float).tiny):
            st.converged = True
            break
        obj = new
    st.wall_time = time.perf_counter() - t0
    return st
