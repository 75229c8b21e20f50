"""Covariance functions over joint (configuration, epoch) inputs.

Inputs are 2-D arrays ``Z`` of shape ``(n, d + 1)`` whose last column is the
normalized epoch ``t = epoch / t_max`` and whose leading columns are the
configuration in the unit cube.  One-dimensional kernels (``ExpDecay``,
``Linear`` and an ``RBF`` used on the epoch axis) act on 1-D arrays of epochs.

Derivative conventions: ``grad_t(A, B)[i, j]`` is the derivative of
``k(a_i, b_j)`` with respect to the epoch of the *second* argument, and
``hess_tt(A, B)[i, j]`` is the mixed derivative with respect to both epochs.
The derivative with respect to the first argument is ``grad_t(B, A).T``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ParameterDomainError, UnsupportedOperationError

__all__ = [
    "RBF",
    "ExpDecay",
    "Linear",
    "Product",
    "kernel_eval",
    "kernel_grad_t",
    "kernel_hess_tt",
]


def _check_finite(*arrays):
    for a in arrays:
        # one reduction; a non-finite entry makes the sum non-finite
        if not np.isfinite(np.sum(a)):
            if not np.all(np.isfinite(a)):
                raise ParameterDomainError("non-finite kernel input")


def _as_t(t):
    t = np.asarray(t, dtype=float)
    if t.ndim == 2:
        if t.shape[1] != 1:
            raise ParameterDomainError(f"epoch input must have one column, got {t.shape}")
        t = t[:, 0]
    return np.atleast_1d(t)


@dataclass(frozen=True)
class RBF:
    """Squared-exponential kernel with per-dimension lengthscales.

    On the epoch axis (1-D input) the single lengthscale is used and the
    epoch derivatives are available.
    """

    lengthscales: tuple
    variance: float = 1.0

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        if not all(np.isfinite(v) and v > 0 for v in ls):
            raise ParameterDomainError(f"lengthscales must be positive, got {ls}")
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ParameterDomainError(f"variance must be positive, got {self.variance}")

    @property
    def param_names(self):
        return ["variance"] + [f"lengthscale_{i}" for i in range(len(self.lengthscales))]

    @property
    def params(self):
        return np.array([self.variance, *self.lengthscales])

    def with_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        return RBF(tuple(theta[1:]), float(theta[0]))

    def _sqdist(self, X1, X2):
        ls = np.asarray(self.lengthscales)
        A = X1 / ls
        B = X2 / ls
        d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return np.maximum(d2, 0.0)

    def _prep(self, X1, X2):
        X1 = np.asarray(X1, dtype=float)
        X2 = np.asarray(X2, dtype=float)
        if X1.ndim == 1:
            X1 = X1[:, None]
        if X2.ndim == 1:
            X2 = X2[:, None]
        _check_finite(X1, X2)
        if X1.shape[1] != len(self.lengthscales) or X2.shape[1] != len(self.lengthscales):
            raise ParameterDomainError(
                f"input dimension does not match {len(self.lengthscales)} lengthscales"
            )
        return X1, X2

    def __call__(self, X1, X2):
        X1, X2 = self._prep(X1, X2)
        if X1.shape[1] == 1:
            # exact differences keep FD checks clean on the epoch axis
            r = (X1 - X2.T) / self.lengthscales[0]
            return self.variance * np.exp(-0.5 * r * r)
        return self.variance * np.exp(-0.5 * self._sqdist(X1, X2))

    def diag(self, X):
        return np.full(np.asarray(X).shape[0], self.variance)

    def _epoch_only(self):
        if len(self.lengthscales) != 1:
            raise UnsupportedOperationError("epoch derivatives need a 1-D RBF")
        return self.lengthscales[0]

    def grad_t(self, t1, t2):
        l = self._epoch_only()
        t1, t2 = _as_t(t1), _as_t(t2)
        diff = t1[:, None] - t2[None, :]
        return diff / l**2 * self.variance * np.exp(-0.5 * (diff / l) ** 2)

    def hess_tt(self, t1, t2):
        l = self._epoch_only()
        t1, t2 = _as_t(t1), _as_t(t2)
        diff = t1[:, None] - t2[None, :]
        k = self.variance * np.exp(-0.5 * (diff / l) ** 2)
        return (1.0 - diff**2 / l**2) / l**2 * k


@dataclass(frozen=True)
class ExpDecay:
    """Exponential-decay epoch kernel ``w + (t/beta + t'/beta + 1)**(-alpha)``."""

    alpha: float = 1.0
    beta: float = 1.0
    w: float = 0.0

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ParameterDomainError(f"{name} must be positive, got {v}")
        if not (np.isfinite(self.w) and self.w >= 0):
            raise ParameterDomainError(f"w must be nonnegative, got {self.w}")

    param_names = ["alpha", "beta", "w"]

    @property
    def params(self):
        return np.array([self.alpha, self.beta, self.w])

    def with_params(self, theta):
        return ExpDecay(*(float(v) for v in theta))

    def _base(self, t1, t2):
        t1, t2 = _as_t(t1), _as_t(t2)
        _check_finite(t1, t2)
        s = t1[:, None] / self.beta + t2[None, :] / self.beta + 1.0
        if np.any(s <= 0):
            raise ParameterDomainError("exponential-decay kernel needs nonnegative epochs")
        return s

    def __call__(self, t1, t2):
        return self.w + self._base(t1, t2) ** (-self.alpha)

    def diag(self, t):
        t = _as_t(t)
        return self.w + (2.0 * t / self.beta + 1.0) ** (-self.alpha)

    def grad_t(self, t1, t2):
        s = self._base(t1, t2)
        return -(self.alpha / self.beta) * s ** (-self.alpha - 1.0)

    def hess_tt(self, t1, t2):
        s = self._base(t1, t2)
        return self.alpha * (self.alpha + 1.0) / self.beta**2 * s ** (-self.alpha - 2.0)

    def log_param_grads(self, t1, t2):
        """Derivatives of ``k`` with respect to ``log alpha, log beta, log w``."""
        s = self._base(t1, t2)
        p = s ** (-self.alpha)
        return [
            -self.alpha * np.log(s) * p,
            self.alpha * p / s * (s - 1.0),
            np.full_like(s, self.w),
        ]


@dataclass(frozen=True)
class Linear:
    """Linear epoch kernel ``bias + slope * t * t'``."""

    bias: float = 1.0
    slope: float = 1.0

    def __post_init__(self):
        for name in ("bias", "slope"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ParameterDomainError(f"{name} must be nonnegative, got {v}")

    param_names = ["bias", "slope"]

    @property
    def params(self):
        return np.array([self.bias, self.slope])

    def with_params(self, theta):
        return Linear(*(float(v) for v in theta))

    def __call__(self, t1, t2):
        t1, t2 = _as_t(t1), _as_t(t2)
        _check_finite(t1, t2)
        return self.bias + self.slope * t1[:, None] * t2[None, :]

    def diag(self, t):
        t = _as_t(t)
        return self.bias + self.slope * t * t

    def grad_t(self, t1, t2):
        raise UnsupportedOperationError("linear kernel derivatives are not used for constraints")

    hess_tt = grad_t

    def log_param_grads(self, t1, t2):
        t1, t2 = _as_t(t1), _as_t(t2)
        return [np.full((t1.size, t2.size), self.bias), self.slope * t1[:, None] * t2[None, :]]


@dataclass(frozen=True)
class Product:
    """``scale * k_x(x, x') * k_t(t, t')`` over inputs ``[x, t]``."""

    kx: RBF
    kt: object
    scale: float = 1.0

    def __post_init__(self):
        if not isinstance(self.kx, RBF):
            raise ParameterDomainError("product x-kernel must be an RBF")
        if not isinstance(self.kt, (RBF, ExpDecay, Linear)):
            raise ParameterDomainError("product t-kernel must be RBF, ExpDecay or Linear")
        if isinstance(self.kt, RBF) and len(self.kt.lengthscales) != 1:
            raise ParameterDomainError("t-kernel RBF must have a single lengthscale")
        if self.kx.variance != 1.0 or (isinstance(self.kt, RBF) and self.kt.variance != 1.0):
            raise ParameterDomainError("factor variances are fixed at 1; use scale")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ParameterDomainError(f"scale must be positive, got {self.scale}")

    @property
    def dim(self):
        return len(self.kx.lengthscales)

    def _kt_params(self):
        if isinstance(self.kt, RBF):
            return np.array(self.kt.lengthscales)
        return self.kt.params

    @property
    def param_names(self):
        kt_names = ["t_lengthscale"] if isinstance(self.kt, RBF) else list(self.kt.param_names)
        return ["scale"] + [f"lengthscale_{i}" for i in range(self.dim)] + kt_names

    @property
    def params(self):
        return np.concatenate([[self.scale], self.kx.lengthscales, self._kt_params()])

    def with_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        d = self.dim
        kx = RBF(tuple(theta[1 : 1 + d]))
        rest = theta[1 + d :]
        kt = RBF((float(rest[0]),)) if isinstance(self.kt, RBF) else self.kt.with_params(rest)
        return Product(kx, kt, float(theta[0]))

    def _split(self, Z):
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[None, :]
        if Z.shape[1] != self.dim + 1:
            raise ParameterDomainError(f"expected inputs with {self.dim + 1} columns, got {Z.shape[1]}")
        _check_finite(Z)
        return Z[:, :-1], Z[:, -1]

    def __call__(self, Z1, Z2):
        X1, t1 = self._split(Z1)
        X2, t2 = self._split(Z2)
        return self.scale * self.kx(X1, X2) * self.kt(t1, t2)

    def diag(self, Z):
        _, t = self._split(Z)
        return self.scale * self.kt.diag(t)

    def grad_t(self, Z1, Z2):
        X1, t1 = self._split(Z1)
        X2, t2 = self._split(Z2)
        return self.scale * self.kx(X1, X2) * self.kt.grad_t(t1, t2)

    def log_param_grads(self, Z1, Z2):
        """``dK/dlog(theta_i)`` for every entry of :attr:`params`, in order."""
        X1, t1 = self._split(Z1)
        X2, t2 = self._split(Z2)
        Kx = self.kx(X1, X2)
        Kt = self.kt(t1, t2)
        K = self.scale * Kx * Kt
        out = [K]
        for j, l in enumerate(self.kx.lengthscales):
            out.append(K * (X1[:, j : j + 1] - X2[None, :, j]) ** 2 / l**2)
        if isinstance(self.kt, RBF):
            l = self.kt.lengthscales[0]
            out.append(K * (t1[:, None] - t2[None, :]) ** 2 / l**2)
        else:
            out.extend(self.scale * Kx * g for g in self.kt.log_param_grads(t1, t2))
        return out

    def hess_tt(self, Z1, Z2):
        X1, t1 = self._split(Z1)
        X2, t2 = self._split(Z2)
        return self.scale * self.kx(X1, X2) * self.kt.hess_tt(t1, t2)


def _pair(spec, z, z2):
    z = np.atleast_1d(np.asarray(z, dtype=float))
    z2 = np.atleast_1d(np.asarray(z2, dtype=float))
    if isinstance(spec, Product):
        return z[None, :], z2[None, :]
    # bare kernels act on the epoch coordinate of a query
    return z[-1:], z2[-1:]


def kernel_eval(spec, z, z2):
    """Covariance between two single queries."""
    return float(spec(*_pair(spec, z, z2))[0, 0])


def kernel_grad_t(spec, z, z2):
    """Derivative of ``k(z, z2)`` with respect to the epoch of ``z2``."""
    return float(spec.grad_t(*_pair(spec, z, z2))[0, 0])


def kernel_hess_tt(spec, z, z2):
    """Mixed second derivative of ``k(z, z2)`` with respect to both epochs."""
    return float(spec.hess_tt(*_pair(spec, z, z2))[0, 0])


def with_scale(spec, scale):
    """Copy of a product kernel with a new output scale."""
    return replace(spec, scale=float(scale))
