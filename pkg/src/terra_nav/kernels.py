"""Covariance kernels for terrain and model-error regression.

Three kernels are provided:

* :class:`RBFKernel` -- stationary squared-exponential baseline.
* :class:`NeuralNetKernel` -- arcsin-form nonstationary kernel (the
  infinite-width single-hidden-layer network kernel), suited to
  discontinuous elevation data.
* :class:`AttentiveKernel` -- membership-gated weighted sum of base RBF
  kernels whose weight and membership vectors come from a small tanh
  feature network.

All positive hyperparameters are optimized in log space; each kernel
exposes a flat ``theta`` vector plus an analytic gradient hook used by the
marginal-likelihood trainer in :mod:`terra_nav.gp`.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError

__all__ = [
    "Kernel",
    "RBFKernel",
    "NeuralNetKernel",
    "AttentiveKernel",
    "FeatureNet",
    "kernel_eval",
    "kernel_from_dict",
]


def _check_dims(X1, X2, dim):
    if X1.ndim != 2 or X2.ndim != 2 or X1.shape[1] != X2.shape[1]:
        raise UsageError("kernel inputs must be 2-D with matching dimension")
    if dim is not None and X1.shape[1] != dim:
        raise UsageError(f"kernel expects dimension {dim}, got {X1.shape[1]}")


def _sqdist(X1, X2):
    n1 = np.einsum("ij,ij->i", X1, X1)
    n2 = n1 if X2 is X1 else np.einsum("ij,ij->i", X2, X2)
    d2 = n1[:, None] + n2[None, :] - 2.0 * (X1 @ X2.T)
    return np.maximum(d2, 0.0)


class Kernel:
    """Base class: a positive-definite covariance function."""

    dim: int | None = None

    def __call__(self, X1: np.ndarray, X2: np.ndarray | None = None) -> np.ndarray:
        raise NotImplementedError

    def diag(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.array([self(X[i:i + 1], X[i:i + 1])[0, 0] for i in range(len(X))])

    # -- hyperparameter vector -------------------------------------------
    @property
    def theta(self) -> np.ndarray:
        raise NotImplementedError

    @theta.setter
    def theta(self, value):
        raise NotImplementedError

    def lml_gradient(self, X: np.ndarray, G: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(G * K(X, X))`` w.r.t. ``theta``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def clone(self) -> "Kernel":
        return kernel_from_dict(self.to_dict())


class RBFKernel(Kernel):
    """sigma_f^2 * exp(-||xi - xj||^2 / (2 l^2))."""

    def __init__(self, sigma_f2: float = 1.0, lengthscale: float = 1.0,
                 dim: int | None = None):
        if sigma_f2 <= 0 or lengthscale <= 0:
            raise UsageError("RBF parameters must be positive")
        self.sigma_f2 = float(sigma_f2)
        self.lengthscale = float(lengthscale)
        self.dim = dim

    def __call__(self, X1, X2=None):
        X1 = np.asarray(X1, dtype=float)
        X2 = X1 if X2 is None else np.asarray(X2, dtype=float)
        _check_dims(X1, X2, self.dim)
        return self.sigma_f2 * np.exp(-_sqdist(X1, X2) / (2 * self.lengthscale ** 2))

    def diag(self, X):
        return np.full(len(X), self.sigma_f2)

    @property
    def theta(self):
        return np.log([self.sigma_f2, self.lengthscale])

    @theta.setter
    def theta(self, value):
        self.sigma_f2, self.lengthscale = np.exp(np.asarray(value, dtype=float))

    def lml_gradient(self, X, G):
        K = self(X)
        D2 = _sqdist(np.asarray(X, dtype=float), np.asarray(X, dtype=float))
        g_sf = float(np.sum(G * K))
        g_ell = float(np.sum(G * K * D2 / self.lengthscale ** 2))
        return np.array([g_sf, g_ell])

    def to_dict(self):
        return {"variant": "rbf", "sigma_f2": self.sigma_f2,
                "lengthscale": self.lengthscale, "dim": self.dim}


class NeuralNetKernel(Kernel):
    """Arcsin kernel of the infinite single-hidden-layer network.

    k(xi, xj) = sigma_f^2 * arcsin( (beta + 2 xi' S xj)
                / sqrt((1 + beta + 2 xi' S xi)(1 + beta + 2 xj' S xj)) )
    with S = diag(lengthscales)^-2.  Output magnitude is bounded by
    sigma_f^2 * pi/2.
    """

    def __init__(self, sigma_f2: float = 1.0, bias: float = 1.0,
                 lengthscales=(1.0, 1.0)):
        ls = np.asarray(lengthscales, dtype=float)
        if sigma_f2 <= 0 or bias <= 0 or (ls <= 0).any():
            raise UsageError("NN kernel parameters must be positive")
        self.sigma_f2 = float(sigma_f2)
        self.bias = float(bias)
        self.lengthscales = ls
        self.dim = len(ls)

    def _scaled(self, X):
        return X / self.lengthscales ** 2

    def __call__(self, X1, X2=None):
        X1 = np.asarray(X1, dtype=float)
        X2 = X1 if X2 is None else np.asarray(X2, dtype=float)
        _check_dims(X1, X2, self.dim)
        u = self.bias + 2 * X1 @ self._scaled(X2).T
        q1 = 1 + self.bias + 2 * np.einsum("ij,ij->i", X1, self._scaled(X1))
        q2 = 1 + self.bias + 2 * np.einsum("ij,ij->i", X2, self._scaled(X2))
        r = u / np.sqrt(np.outer(q1, q2))
        return self.sigma_f2 * np.arcsin(np.clip(r, -1.0, 1.0))

    @property
    def theta(self):
        return np.log(np.concatenate(([self.sigma_f2, self.bias], self.lengthscales)))

    @theta.setter
    def theta(self, value):
        v = np.exp(np.asarray(value, dtype=float))
        self.sigma_f2, self.bias = v[0], v[1]
        self.lengthscales = v[2:]

    def lml_gradient(self, X, G):
        X = np.asarray(X, dtype=float)
        n, dim = X.shape
        Xs = self._scaled(X)
        u = self.bias + 2 * X @ Xs.T
        q = 1 + self.bias + 2 * np.einsum("ij,ij->i", X, Xs)
        sq = np.sqrt(np.outer(q, q))
        r = np.clip(u / sq, -1.0, 1.0)
        K = self.sigma_f2 * np.arcsin(r)
        # dK = sigma_f2 / sqrt(1 - r^2) * dr, guarded at |r| -> 1
        denom = np.sqrt(np.maximum(1.0 - r ** 2, 1e-12))
        front = self.sigma_f2 / denom
        qi = q[:, None]
        qj = q[None, :]
        grads = [float(np.sum(G * K))]  # d / d log sigma_f2
        # d / d log beta
        dr_dbeta = 1.0 / sq - 0.5 * r * (1.0 / qi + 1.0 / qj)
        grads.append(float(np.sum(G * front * dr_dbeta)) * self.bias)
        # d / d log lengthscale_a  (dSigma_aa/dlog l_a = -2 / l_a^2)
        for a in range(dim):
            xa = X[:, a]
            dr_dS = (2 * np.outer(xa, xa)) / sq \
                - r * (xa[:, None] ** 2 / qi + xa[None, :] ** 2 / qj)
            grads.append(float(np.sum(G * front * dr_dS))
                         * (-2.0 / self.lengthscales[a] ** 2))
        return np.array(grads)

    def to_dict(self):
        return {"variant": "nn", "sigma_f2": self.sigma_f2, "bias": self.bias,
                "lengthscales": self.lengthscales.tolist()}


class FeatureNet:
    """Two-hidden-layer tanh network emitting weight and membership vectors.

    For each input location it produces ``M`` base-kernel weights
    (softmax then l2-normalized) and an ``M``-dim membership vector
    (l2-normalized).
    """

    def __init__(self, dim_in: int = 2, hidden: int = 16, n_base: int = 8,
                 seed: int = 0):
        rng = np.random.default_rng(seed)
        sc = 1.0
        self.W1 = rng.normal(0, sc / np.sqrt(dim_in), (dim_in, hidden))
        self.b1 = np.zeros(hidden)
        self.W2 = rng.normal(0, sc / np.sqrt(hidden), (hidden, hidden))
        self.b2 = np.zeros(hidden)
        self.Ww = rng.normal(0, sc / np.sqrt(hidden), (hidden, n_base))
        self.bw = np.zeros(n_base)
        self.Wz = rng.normal(0, sc / np.sqrt(hidden), (hidden, n_base))
        self.bz = np.zeros(n_base)

    _FIELDS = ("W1", "b1", "W2", "b2", "Ww", "bw", "Wz", "bz")

    def forward(self, X, cache: bool = False):
        X = np.asarray(X, dtype=float)
        H1 = np.tanh(X @ self.W1 + self.b1)
        H2 = np.tanh(H1 @ self.W2 + self.b2)
        Lw = H2 @ self.Ww + self.bw
        S = np.exp(Lw - Lw.max(axis=1, keepdims=True))
        S /= S.sum(axis=1, keepdims=True)
        ns = np.linalg.norm(S, axis=1, keepdims=True)
        W = S / ns
        V = H2 @ self.Wz + self.bz
        nv = np.linalg.norm(V, axis=1, keepdims=True)
        nv = np.where(nv == 0, 1.0, nv)
        Z = V / nv
        if cache:
            return W, Z, (X, H1, H2, S, ns, nv, Z)
        return W, Z

    def backward(self, cache, dW, dZ):
        """Accumulate parameter gradients given d/dW and d/dZ."""
        X, H1, H2, S, ns, nv, Z = cache
        Wn = S / ns
        # l2-normalization heads
        dV = (dZ - Z * np.sum(Z * dZ, axis=1, keepdims=True)) / nv
        dS = (dW - Wn * np.sum(Wn * dW, axis=1, keepdims=True)) / ns
        # softmax
        dLw = S * (dS - np.sum(S * dS, axis=1, keepdims=True))
        dH2 = dLw @ self.Ww.T + dV @ self.Wz.T
        dA2 = dH2 * (1 - H2 ** 2)
        dH1 = dA2 @ self.W2.T
        dA1 = dH1 * (1 - H1 ** 2)
        return {
            "W1": X.T @ dA1, "b1": dA1.sum(axis=0),
            "W2": H1.T @ dA2, "b2": dA2.sum(axis=0),
            "Ww": H2.T @ dLw, "bw": dLw.sum(axis=0),
            "Wz": H2.T @ dV, "bz": dV.sum(axis=0),
        }

    # -- flat parameter vector -------------------------------------------
    def get_flat(self):
        return np.concatenate([getattr(self, f).ravel() for f in self._FIELDS])

    def set_flat(self, vec):
        pos = 0
        for f in self._FIELDS:
            arr = getattr(self, f)
            n = arr.size
            setattr(self, f, np.asarray(vec[pos:pos + n], dtype=float).reshape(arr.shape))
            pos += n

    def grads_flat(self, grads: dict):
        return np.concatenate([grads[f].ravel() for f in self._FIELDS])

    def to_dict(self):
        return {f: getattr(self, f).tolist() for f in self._FIELDS}

    @classmethod
    def from_dict(cls, d):
        net = cls.__new__(cls)
        for f in cls._FIELDS:
            setattr(net, f, np.asarray(d[f], dtype=float))
        return net


class AttentiveKernel(Kernel):
    """alpha * z_i' z_j * sum_m w_im * k_m(xi, xj) * w_jm.

    The base kernels k_m are unit-variance RBFs with fixed, log-spaced
    lengthscales; w and z come from the feature network.
    """

    def __init__(self, amplitude: float = 1.0, base_lengthscales=None,
                 net: FeatureNet | None = None, dim: int = 2, seed: int = 0):
        if amplitude <= 0:
            raise UsageError("amplitude must be positive")
        if base_lengthscales is None:
            base_lengthscales = np.geomspace(0.25, 8.0, 8)
        self.amplitude = float(amplitude)
        self.base_lengthscales = np.asarray(base_lengthscales, dtype=float)
        if len(self.base_lengthscales) < 2:
            raise UsageError("attentive kernel needs at least 2 base lengthscales")
        self.dim = dim
        self.net = net if net is not None else FeatureNet(
            dim_in=dim, n_base=len(self.base_lengthscales), seed=seed)
        # memoized net features for the most recent input array; planners
        # evaluate cross-grams against the same training set thousands of
        # times per mission, so recomputing its features dominates runtime
        self._feat_cache = None

    def _features(self, X):
        cache = self._feat_cache
        if cache is not None and cache[0] is X:
            return cache[1], cache[2]
        W, Z = self.net.forward(X)
        self._feat_cache = (X, W, Z)
        return W, Z

    def _base_grams(self, X1, X2):
        D2 = _sqdist(X1, X2)
        return [np.exp(-D2 / (2 * l ** 2)) for l in self.base_lengthscales]

    def __call__(self, X1, X2=None):
        X1 = np.asarray(X1, dtype=float)
        X2 = X1 if X2 is None else np.asarray(X2, dtype=float)
        _check_dims(X1, X2, self.dim)
        W1, Z1 = self._features(X1)
        W2, Z2 = (W1, Z1) if X2 is X1 else self.net.forward(X2)
        D2 = _sqdist(X1, X2)
        # sum_m outer(w1_m, w2_m) * exp(-d^2 / 2 l_m^2), batched over m
        E = np.exp(D2[None, :, :] *
                   (-0.5 / self.base_lengthscales ** 2)[:, None, None])
        E *= W1.T[:, :, None]
        E *= W2.T[:, None, :]
        return self.amplitude * (Z1 @ Z2.T) * E.sum(axis=0)

    def diag(self, X):
        X = np.asarray(X, dtype=float)
        W, Z = self.net.forward(X)
        # k_m(x, x) = 1 and z'z = 1, so the diagonal is alpha * sum_m w_m^2
        return self.amplitude * np.sum(W ** 2, axis=1)

    @property
    def theta(self):
        return np.concatenate(([np.log(self.amplitude)], self.net.get_flat()))

    @theta.setter
    def theta(self, value):
        value = np.asarray(value, dtype=float)
        self.amplitude = float(np.exp(value[0]))
        self.net.set_flat(value[1:])
        self._feat_cache = None

    def lml_gradient(self, X, G):
        X = np.asarray(X, dtype=float)
        W, Z, cache = self.net.forward(X, cache=True)
        Kms = self._base_grams(X, X)
        M = len(Kms)
        S = sum(np.outer(W[:, m], W[:, m]) * Kms[m] for m in range(M))
        ZZ = Z @ Z.T
        K = self.amplitude * ZZ * S
        g_amp = float(np.sum(G * K))   # d / d log alpha
        dZ = 2 * self.amplitude * (G * S) @ Z
        dW = np.empty_like(W)
        P = self.amplitude * G * ZZ
        for m in range(M):
            dW[:, m] = 2 * (P * Kms[m]) @ W[:, m]
        grads = self.net.backward(cache, dW, dZ)
        return np.concatenate(([g_amp], self.net.grads_flat(grads)))

    def to_dict(self):
        return {"variant": "attentive", "amplitude": self.amplitude,
                "base_lengthscales": self.base_lengthscales.tolist(),
                "dim": self.dim, "net": self.net.to_dict()}


def kernel_eval(kernel: Kernel, xi, xj) -> float:
    """Covariance between two single input vectors."""
    xi = np.asarray(xi, dtype=float).reshape(1, -1)
    xj = np.asarray(xj, dtype=float).reshape(1, -1)
    if xi.shape[1] != xj.shape[1]:
        raise UsageError("input dimension mismatch")
    return float(kernel(xi, xj)[0, 0])


def kernel_from_dict(d: dict) -> Kernel:
    variant = d["variant"]
    if variant == "rbf":
        return RBFKernel(d["sigma_f2"], d["lengthscale"], d.get("dim"))
    if variant == "nn":
        return NeuralNetKernel(d["sigma_f2"], d["bias"], d["lengthscales"])
    if variant == "attentive":
        return AttentiveKernel(
            amplitude=d["amplitude"],
            base_lengthscales=d["base_lengthscales"],
            net=FeatureNet.from_dict(d["net"]),
            dim=d.get("dim", 2))
    raise UsageError(f"unknown kernel variant {variant!r}")
