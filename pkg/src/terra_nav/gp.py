"""Gaussian-process regression: exact and sparse posteriors.

The exact path follows the standard Cholesky recipe.  The sparse path is a
subset-of-regressors approximation with the deterministic-training-
conditional variance correction, so that with the inducing set equal to
the full training set it reproduces the exact posterior.  A KD-tree +
K-means local approximation serves large query batches with a fixed
number of GP solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial import cKDTree

from .errors import DataError, NumericalError, UsageError
from .kernels import Kernel, kernel_from_dict

__all__ = [
    "GPModel",
    "fit",
    "predict",
    "predict_mean",
    "log_marginal_likelihood",
    "train_hyperparams",
    "kmeans",
    "KDIndex",
    "kd_nearest",
    "local_approx_predict",
    "fit_count",
    "model_to_dict",
    "model_from_dict",
]

JITTER_LADDER = (1e-9, 1e-6, 1e-4)

_FIT_COUNT = 0


def fit_count() -> int:
    """Total number of GP factorizations performed (instrumentation)."""
    return _FIT_COUNT


def _chol_with_jitter(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    for jitter in (0.0, *JITTER_LADDER):
        try:
            return cholesky(A + jitter * np.eye(len(A)), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("covariance factorization failed after jitter escalation")


@dataclass
class GPModel:
    """A fitted GP posterior. Read-only after :func:`fit`."""

    kernel: Kernel
    X: np.ndarray
    y: np.ndarray
    noise_var: float
    inducing_idx: np.ndarray | None = None
    # cached factorizations
    y_mean: float = 0.0
    _L: np.ndarray | None = field(default=None, repr=False)
    _w: np.ndarray | None = field(default=None, repr=False)   # mean weights
    _Luu: np.ndarray | None = field(default=None, repr=False)
    _LB: np.ndarray | None = field(default=None, repr=False)
    _Zc: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def is_sparse(self) -> bool:
        return self.inducing_idx is not None

    @property
    def Z(self) -> np.ndarray:
        if not self.is_sparse:
            return self.X
        if self._Zc is None:
            self._Zc = self.X[self.inducing_idx]
        return self._Zc


def _resolve_inducing(n: int, inducing) -> np.ndarray | None:
    if inducing is None:
        return None
    if isinstance(inducing, str):
        if inducing != "all":
            raise UsageError(f"unknown inducing policy {inducing!r}")
        return np.arange(n)
    if np.isscalar(inducing):
        m = int(inducing)
        if m >= n:
            return np.arange(n)
        # uniform strided subsample
        return np.unique(np.linspace(0, n - 1, m).round().astype(int))
    return np.asarray(inducing, dtype=int)


def fit(X, y, kernel: Kernel, noise_var: float, inducing=None) -> GPModel:
    """Condition a GP on data and cache factorizations for prediction.

    ``inducing`` is None for the exact posterior, an integer for a strided
    inducing subset of that size, "all", or an index array.
    """
    global _FIT_COUNT
    if noise_var <= 0:
        raise UsageError("noise variance must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.size == 0:
        X = X.reshape(0, X.shape[1] if X.ndim == 2 and X.shape[1] else 1)
    if len(X) != len(y):
        raise DataError("inputs and targets must be length-matched")
    if y.size and not np.isfinite(y).all():
        raise DataError("targets contain non-finite values")

    model = GPModel(kernel=kernel, X=X, y=y, noise_var=float(noise_var),
                    inducing_idx=_resolve_inducing(len(X), inducing))
    _FIT_COUNT += 1
    if len(X) == 0:
        return model
    model.y_mean = float(y.mean())
    yc = y - model.y_mean

    if not model.is_sparse:
        K = kernel(X)
        L = _chol_with_jitter(K + noise_var * np.eye(len(X)))
        alpha = cho_solve((L, True), yc)
        model._L, model._w = L, alpha
        return model

    # sparse: SoR mean with DTC variance correction
    Z = model.Z
    m = len(Z)
    Kuu = kernel(Z)
    Kuf = kernel(Z, X)
    Luu = _chol_with_jitter(Kuu)
    A = solve_triangular(Luu, Kuf, lower=True) / np.sqrt(noise_var)
    B = np.eye(m) + A @ A.T
    LB = _chol_with_jitter(B)
    c = solve_triangular(LB, A @ yc, lower=True) / np.sqrt(noise_var)
    # mean weights: mu(x) = k_u(x)' w  with  w = Luu^-T LB^-T c
    w = solve_triangular(Luu.T, solve_triangular(LB.T, c, lower=False),
                         lower=False)
    model._Luu, model._LB, model._w = Luu, LB, w
    return model


def predict(model: GPModel, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query points.

    A single 1-D query returns floats; an (n, d) batch returns arrays.
    Variances are clamped to be non-negative.
    """
    Xq_arr = np.asarray(Xq, dtype=float)
    single = Xq_arr.ndim == 1
    Xq_arr = np.atleast_2d(Xq_arr)
    prior_var = model.kernel.diag(Xq_arr)

    if model.n == 0:
        mean = np.zeros(len(Xq_arr))
        var = prior_var
    elif not model.is_sparse:
        Kq = model.kernel(model.X, Xq_arr)
        mean = Kq.T @ model._w + model.y_mean
        V = solve_triangular(model._L, Kq, lower=True)
        var = prior_var - np.einsum("ij,ij->j", V, V)
    else:
        Kq = model.kernel(model.Z, Xq_arr)
        a = solve_triangular(model._Luu, Kq, lower=True)
        b = solve_triangular(model._LB, a, lower=True)
        mean = Kq.T @ model._w + model.y_mean
        var = prior_var - np.einsum("ij,ij->j", a, a) \
            + np.einsum("ij,ij->j", b, b)
    var = np.maximum(var, 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def predict_mean(model: GPModel, Xq) -> np.ndarray:
    """Posterior mean only (fast path for planner vertex queries)."""
    Xq_arr = np.atleast_2d(np.asarray(Xq, dtype=float))
    if model.n == 0:
        return np.zeros(len(Xq_arr))
    Kq = model.kernel(model.Z, Xq_arr) if model.is_sparse \
        else model.kernel(model.X, Xq_arr)
    return Kq.T @ model._w + model.y_mean


def log_marginal_likelihood(kernel: Kernel, X, y, noise_var: float) -> float:
    """Exact log marginal likelihood of mean-centered targets."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    yc = y - y.mean()
    n = len(y)
    K = kernel(X) + noise_var * np.eye(n)
    L = _chol_with_jitter(K)
    alpha = cho_solve((L, True), yc)
    return float(-0.5 * yc @ alpha - np.log(np.diag(L)).sum()
                 - 0.5 * n * np.log(2 * np.pi))


def _lml_and_grad(kernel, X, yc, noise_var):
    n = len(yc)
    K = kernel(X) + noise_var * np.eye(n)
    L = _chol_with_jitter(K)
    alpha = cho_solve((L, True), yc)
    lml = float(-0.5 * yc @ alpha - np.log(np.diag(L)).sum()
                - 0.5 * n * np.log(2 * np.pi))
    Kinv = cho_solve((L, True), np.eye(n))
    G = 0.5 * (np.outer(alpha, alpha) - Kinv)
    return lml, kernel.lml_gradient(X, G)


def train_hyperparams(model: GPModel, max_iter: int = 50,
                      subsample: int | None = None,
                      seed: int = 0) -> tuple[Kernel, dict]:
    """Maximize the log marginal likelihood over kernel hyperparameters.

    Returns a new kernel set to the best parameters seen (never worse than
    the initial ones) plus an info dict with the initial/final objective
    and a convergence flag.
    """
    if model.n < 5:
        raise UsageError("hyperparameter training needs at least 5 data points")
    X, y = model.X, model.y
    if subsample is not None and subsample < len(X):
        idx = np.random.default_rng(seed).choice(len(X), subsample, replace=False)
        X, y = X[idx], y[idx]
    yc = y - y.mean()

    kernel = model.kernel.clone()
    theta0 = kernel.theta.copy()
    lml0, _ = _lml_and_grad(kernel, X, yc, model.noise_var)
    best = {"theta": theta0.copy(), "lml": lml0}
    info = {"lml_initial": lml0, "lml_final": lml0, "converged": True,
            "iterations": 0}
    if max_iter == 0:
        return kernel, info

    def objective(theta):
        kernel.theta = theta
        try:
            lml, grad = _lml_and_grad(kernel, X, yc, model.noise_var)
        except NumericalError:
            return 1e25, np.zeros_like(theta)
        if np.isfinite(lml) and lml > best["lml"]:
            best["lml"] = lml
            best["theta"] = np.asarray(theta, dtype=float).copy()
        return -lml, -grad

    res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter})
    kernel.theta = best["theta"]
    info.update(lml_final=best["lml"], converged=bool(res.success),
                iterations=int(res.nit))
    return kernel, info


def kmeans(points, k: int, seed: int = 0,
           max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm. Returns (labels, centers), deterministic per seed."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    if k < 1 or k > n:
        raise UsageError("k must satisfy 1 <= k <= number of points")
    rng = np.random.default_rng(seed)
    centers = pts[rng.choice(n, k, replace=False)].copy()
    labels = np.full(n, -1)
    for _ in range(max_iter):
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)   # argmin ties -> lowest index
        if (new_labels == labels).all():
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            if mask.any():
                centers[c] = pts[mask].mean(axis=0)
    return labels, centers


class KDIndex:
    """KD-tree over training inputs for exact nearest-neighbor queries."""

    def __init__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) == 0:
            raise UsageError("cannot index an empty point set")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self):
        return len(self.points)


def kd_nearest(index: KDIndex, query, n: int) -> np.ndarray:
    """Indices of the n nearest points; ties broken by lower index."""
    if n < 1 or n > len(index):
        raise UsageError("n must satisfy 1 <= n <= index size")
    q = np.asarray(query, dtype=float)
    # query a few extra so boundary ties resolve toward lower indices
    k = min(n + 8, len(index))
    dist, idx = index._tree.query(q, k=k)
    dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
    order = np.lexsort((idx, dist))
    return idx[order][:n]


def local_approx_predict(X, y, kernel: Kernel, noise_var: float, query_points,
                         k: int, n: int, seed: int = 0
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Cluster queries, fit one local GP per cluster, predict per cluster.

    Queries are split into ``k`` clusters; each cluster is served by an
    exact GP conditioned on the ``n`` training points nearest its center,
    so exactly ``k`` GP solves happen regardless of the query count.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    Xq = np.atleast_2d(np.asarray(query_points, dtype=float))
    if len(X) == 0:
        raise UsageError("local approximation needs training data")
    if n > len(X):
        raise UsageError("n exceeds training set size")
    labels, centers = kmeans(Xq, k, seed=seed)
    index = KDIndex(X)
    means = np.empty(len(Xq))
    variances = np.empty(len(Xq))
    for c in range(k):
        nearest = kd_nearest(index, centers[c], n)
        local = fit(X[nearest], y[nearest], kernel, noise_var)
        mask = labels == c
        if mask.any():
            means[mask], variances[mask] = predict(local, Xq[mask])
    return means, variances


def model_to_dict(model: GPModel) -> dict:
    """JSON-serializable snapshot (data + kernel, not factorizations)."""
    return {
        "kernel": model.kernel.to_dict(),
        "X": model.X.tolist(),
        "y": model.y.tolist(),
        "noise_var": model.noise_var,
        "inducing_idx": None if model.inducing_idx is None
        else model.inducing_idx.tolist(),
    }


def model_from_dict(d: dict) -> GPModel:
    return fit(np.asarray(d["X"], dtype=float), np.asarray(d["y"], dtype=float),
               kernel_from_dict(d["kernel"]), d["noise_var"],
               inducing=None if d["inducing_idx"] is None
               else np.asarray(d["inducing_idx"], dtype=int))
