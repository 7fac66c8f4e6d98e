"""Backward value iteration through an empirical one-step conditional model.

The safety value functions satisfy V_T = 1_S and

    V_l(x) = 1_S(x) * clamp( E[V_{l+1}(X+) | X = x] - eps * kappa * ||V_{l+1}||, 0, 1 ),

and the conditional expectation is replaced by ridge weights over the
transition samples (x_i, x_i^+).  The recursion only ever needs the values at
the sampled next states, so the whole backward pass reduces to one transfer
matrix

    transfer[i, j] = w_j(x_i^+)

built with a single factorization, followed by T matrix-vector products.
With eps = 0 the norm penalty vanishes; otherwise ||V|| is approximated by
the representer norm of the ridge interpolant of the value vector, a finite
surrogate used in place of the intractable RKHS norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .benchmark import OneStepPairs, SafeRegion, is_safe
from .kernels import KAPPA, GramSystem, KernelSpec, fit_weights

__all__ = [
    "DpModel",
    "ValueVector",
    "SpectralDecay",
    "SpectralConvergenceError",
    "fit_dp",
    "backward_value",
    "evaluate_dp",
    "spectral_decay",
    "stack_to_csv",
]


class SpectralConvergenceError(RuntimeError):
    """Power iteration failed to converge; carries the last estimate."""

    def __init__(self, message: str, last_estimate: float):
        super().__init__(message)
        self.last_estimate = last_estimate


@dataclass(frozen=True)
class ValueVector:
    """Value function at one level, evaluated at the sampled next states."""

    level: int
    v: np.ndarray


@dataclass
class DpModel:
    """One-step conditional model over transition samples."""

    transfer: np.ndarray          # (M, M), transfer[i, j] = w_j(x_i^+)
    safe_mask_next: np.ndarray    # (M,) floats, 1_S at the sampled next states
    region: SafeRegion | None
    ambiguity: float = 0.0
    gram: GramSystem | None = None     # over source states; None for exact chains
    x_next: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.transfer.shape[0]

    @classmethod
    def from_transfer(
        cls, transfer: np.ndarray, safe_mask: np.ndarray, ambiguity: float = 0.0
    ) -> "DpModel":
        """Wrap an explicitly known transition/transfer matrix (exact chains, tests)."""
        transfer = np.asarray(transfer, dtype=float)
        safe_mask = np.asarray(safe_mask, dtype=float)
        if transfer.shape[0] != transfer.shape[1] or transfer.shape[0] != safe_mask.shape[0]:
            raise ValueError("transfer must be square and match the safety mask")
        return cls(
            transfer=transfer, safe_mask_next=safe_mask, region=None, ambiguity=ambiguity
        )

    def value_norm(self, v: np.ndarray) -> float:
        if self.gram is None:
            raise ValueError("norm penalty needs a kernel-backed model")
        return self.gram.representer_norm(v)


def fit_dp(
    spec: KernelSpec, pairs: OneStepPairs, region: SafeRegion, ambiguity: float = 0.0
) -> DpModel:
    """Factor the ridge system over source states and precompute the transfer matrix."""
    if ambiguity < 0:
        raise ValueError("ambiguity must be nonnegative")
    gram = fit_weights(spec, pairs.x)
    transfer = gram.weights_at(pairs.x_next)
    safe_mask = is_safe(region, pairs.x_next).astype(float)
    return DpModel(
        transfer=transfer,
        safe_mask_next=safe_mask,
        region=region,
        ambiguity=ambiguity,
        gram=gram,
        x_next=np.asarray(pairs.x_next, dtype=float),
    )


def backward_value(model: DpModel, T: int) -> list[ValueVector]:
    """Run the clamped backward recursion; returns the stack indexed by level.

    stack[l].v holds V_l at the sampled next states, so stack[T].v is the
    safety mask itself and stack[0].v feeds the final query evaluation.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    v = model.safe_mask_next.astype(float).copy()
    levels = [ValueVector(level=T, v=v)]
    for level in range(T - 1, -1, -1):
        pen = 0.0
        if model.ambiguity > 0:
            pen = model.ambiguity * KAPPA * model.value_norm(v)
        v = model.safe_mask_next * np.clip(model.transfer @ v - pen, 0.0, 1.0)
        levels.append(ValueVector(level=level, v=v))
    levels.reverse()
    return levels


def evaluate_dp(
    model: DpModel, stack: list[ValueVector], x0: np.ndarray
) -> np.ndarray | float:
    """V_0 at one query (d,) or a batch (n, d); output always lies in [0, 1]."""
    if model.gram is None or model.region is None:
        raise ValueError("query evaluation needs a kernel-backed model")
    q = np.asarray(x0, dtype=float)
    single = q.ndim == 1
    pts = np.atleast_2d(q)
    safe0 = is_safe(model.region, pts).astype(float)
    T = stack[-1].level
    if T == 0:
        out = safe0
    else:
        v1 = stack[1].v
        pen = 0.0
        if model.ambiguity > 0:
            pen = model.ambiguity * KAPPA * model.value_norm(v1)
        w = model.gram.weights_at(pts)
        out = safe0 * np.clip(w @ v1 - pen, 0.0, 1.0)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class SpectralDecay:
    rho: float
    rho_pow_T: float
    iterations: int


def spectral_decay(
    model: DpModel, T: int, tol: float = 1e-10, max_iter: int = 10_000
) -> SpectralDecay:
    """Spectral radius of diag(safe_mask) @ transfer by power iteration.

    rho below 1 means the observed value decay is intrinsic to the fitted
    operator rather than an artifact of the horizon; rho**T quantifies it.

    Convergence is residual-based.  A simple dominant eigenvalue is read off
    the Rayleigh quotient; when the iterate keeps rotating (dominant complex
    or opposite-sign pair), the magnitude is extracted from the quadratic
    that three consecutive iterates satisfy on the invariant subspace.
    """
    a = model.safe_mask_next[:, None] * model.transfer
    rng = np.random.default_rng(0)
    x = rng.standard_normal(a.shape[0])
    x /= np.linalg.norm(x)
    last = np.nan
    for it in range(1, max_iter + 1):
        y = a @ x
        ny = float(np.linalg.norm(y))
        if ny == 0.0:
            return SpectralDecay(rho=0.0, rho_pow_T=0.0, iterations=it)
        lam = float(x @ y)
        if np.linalg.norm(y - lam * x) <= tol * max(1.0, abs(lam)):
            rho = abs(lam)
            return SpectralDecay(rho=rho, rho_pow_T=rho ** T, iterations=it)
        # Rayleigh-Ritz on span{x, y}: catches rotating iterates (complex or
        # opposite-sign dominant pairs) that a plain norm ratio cannot settle
        q2 = y - lam * x
        nq2 = float(np.linalg.norm(q2))
        if nq2 > 0.0:
            q2 = q2 / nq2
            aq2 = a @ q2
            basis = np.stack([x, q2], axis=1)
            image = np.stack([y, aq2], axis=1)
            h = basis.T @ image
            vals, vecs = np.linalg.eig(h)
            k = int(np.argmax(np.abs(vals)))
            theta, s = vals[k], vecs[:, k]
            resid = float(np.linalg.norm(image @ s - theta * (basis @ s)))
            if resid <= tol * max(1.0, abs(theta)):
                rho = float(abs(theta))
                return SpectralDecay(rho=rho, rho_pow_T=rho ** T, iterations=it)
        last = ny
        x = y / ny
    raise SpectralConvergenceError(
        f"power iteration did not converge within {max_iter} iterations "
        f"(last estimate {last:.12g})",
        last_estimate=last,
    )


def stack_to_csv(stack: list[ValueVector], header_comment: str = "") -> str:
    """Serialize a value stack as level,i,v rows."""
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append("level,i,v")
    for vv in stack:
        for i, val in enumerate(vv.v):
            lines.append(f"{vv.level},{i},{val:.17g}")
    return "\n".join(lines) + "\n"
