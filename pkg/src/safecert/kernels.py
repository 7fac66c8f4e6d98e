"""Gaussian kernel machinery shared by every estimator in the package.

All conditional-expectation estimates reduce to kernel ridge weights

    w(x) = [K + M lam I]^{-1} k_M(x),

where K is the Gram matrix of the M training inputs and k_M(x) the vector of
kernel evaluations against them.  The ridge term is scaled by the sample
count M so that ``lam`` keeps a consistent meaning across sample sizes.
Weights may be negative; nothing here clips them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = ["KernelSpec", "GramSystem", "NumericError", "gram_matrix", "fit_weights", "weights_at"]

# sup_x sqrt(k(x, x)) for the Gaussian kernel
KAPPA = 1.0


class NumericError(RuntimeError):
    """Raised when a linear system is too ill-conditioned to factor."""


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel with per-dimension lengthscales and ridge parameter.

    k(x, y) = exp(-0.5 * sum_l ((x_l - y_l) / lengthscales[l])**2)

    Parameters
    ----------
    lengthscales : array-like, shape (d,)
        Per-dimension scale sigma_l > 0.
    lam : float
        Ridge regularizer lambda > 0; the solve uses M * lam on the diagonal.
    """

    lengthscales: tuple[float, ...]
    lam: float

    def __post_init__(self) -> None:
        ls = tuple(float(s) for s in np.atleast_1d(np.asarray(self.lengthscales, dtype=float)))
        object.__setattr__(self, "lengthscales", ls)
        if any(s <= 0 for s in ls):
            raise ValueError("lengthscales must be positive")
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    @classmethod
    def isotropic(cls, scale: float, dim: int, lam: float) -> "KernelSpec":
        return cls(lengthscales=(float(scale),) * dim, lam=lam)

    @classmethod
    def from_variances(cls, variances, lam: float) -> "KernelSpec":
        """Build from squared lengthscales (the form hyperparameter tables use)."""
        v = np.asarray(variances, dtype=float)
        return cls(lengthscales=tuple(np.sqrt(v)), lam=lam)


def _scaled(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != spec.dim:
        raise ValueError(f"expected points of dimension {spec.dim}, got {x.shape[1]}")
    return x / np.asarray(spec.lengthscales)


def gram_matrix(spec: KernelSpec, x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Kernel matrix k(x_i, y_j); with ``y=None`` the symmetric Gram of x."""
    u = _scaled(spec, x)
    if y is None:
        sq = np.sum(u * u, axis=1)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (u @ u.T)
        np.maximum(d2, 0.0, out=d2)
        k = np.exp(-0.5 * d2)
        k = 0.5 * (k + k.T)
        np.fill_diagonal(k, 1.0)
        return k
    v = _scaled(spec, y)
    d2 = (
        np.sum(u * u, axis=1)[:, None]
        + np.sum(v * v, axis=1)[None, :]
        - 2.0 * (u @ v.T)
    )
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-0.5 * d2)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    """Single kernel evaluation k(x, y)."""
    return float(gram_matrix(spec, np.atleast_2d(x), np.atleast_2d(y))[0, 0])


@dataclass
class GramSystem:
    """Factorized ridge system over a fixed set of training inputs."""

    spec: KernelSpec
    inputs: np.ndarray          # (M, d)
    gram: np.ndarray            # (M, M)
    _factor: tuple = field(repr=False, default=None)

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    def weights_at(self, query: np.ndarray) -> np.ndarray:
        """Ridge weights w(x) for one query (d,) or a batch (n, d).

        Returns shape (M,) for a single point, (n, M) for a batch.
        """
        q = np.asarray(query, dtype=float)
        single = q.ndim == 1
        kq = gram_matrix(self.spec, np.atleast_2d(q), self.inputs)  # (n, M)
        w = cho_solve(self._factor, kq.T).T
        return w[0] if single else w

    def representer_norm(self, values: np.ndarray) -> float:
        """RKHS norm of the ridge interpolant of ``values`` on the inputs.

        norm = sqrt(alpha^T K alpha) with alpha = (K + M lam I)^{-1} values.
        This is a finite surrogate for the norm of the underlying function.
        """
        v = np.asarray(values, dtype=float)
        alpha = cho_solve(self._factor, v)
        sq = float(alpha @ (self.gram @ alpha))
        return float(np.sqrt(max(sq, 0.0)))


def fit_weights(spec: KernelSpec, train_inputs: np.ndarray) -> GramSystem:
    """Build and factor the ridge system K + M lam I over ``train_inputs``."""
    x = np.atleast_2d(np.asarray(train_inputs, dtype=float))
    m = x.shape[0]
    if m == 0:
        raise ValueError("training set is empty")
    k = gram_matrix(spec, x)
    a = k + (m * spec.lam) * np.eye(m)
    try:
        factor = cho_factor(a, lower=True)
    except np.linalg.LinAlgError as exc:
        eigs = np.linalg.eigvalsh(a)
        cond = eigs[-1] / eigs[0] if eigs[0] != 0 else np.inf
        raise NumericError(
            f"ridge system not positive definite (condition estimate {cond:.3e}); "
            "increase lam or deduplicate inputs"
        ) from exc
    return GramSystem(spec=spec, inputs=x, gram=k, _factor=factor)


def weights_at(sys: GramSystem, query: np.ndarray) -> np.ndarray:
    """Module-level alias for :meth:`GramSystem.weights_at`."""
    return sys.weights_at(query)
