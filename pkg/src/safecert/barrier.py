"""Barrier-style certificates checked against the empirical one-step model.

A nonnegative function B certifies safety when it is small on the initial
set, large on the unsafe set, and its expected one-step growth inside the
safe set is bounded:

    (a)  B(x) <= eta        on X0
    (b)  B(x) >= gamma_lvl  on the unsafe set
    (c)  E[B(X+) | x] - B(x) <= beta   for x in S,

giving the horizon-T bound  P_safe >= 1 - (eta + beta * T) / gamma_lvl
whenever gamma_lvl > eta >= 0.  The conditional expectation in (c) is the
ridge-weight estimate from a fitted one-step model plus the ambiguity
penalty eps * kappa * ||B||_H, and the RKHS norm of a kernel-expansion
candidate is exact: sqrt(alpha^T K_c alpha).

All suprema and infima are evaluated on user-density grids, so the check is
a falsification-grade screen rather than a global proof; the report records
the grids used.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .benchmark import SafeRegion, is_safe, trajectory_safe
from .dp import DpModel
from .kernels import KAPPA, KernelSpec, fit_weights, gram_matrix
from .rng import stream

__all__ = [
    "BarrierCandidate",
    "BarrierReport",
    "OracleResult",
    "check_barrier",
    "uniform_mc_oracle",
    "fit_barrier_candidate",
    "candidate_to_csv",
    "candidate_from_csv",
]


@dataclass(frozen=True)
class BarrierCandidate:
    """Kernel expansion B(x) = sum_i alpha_i k(x, c_i)."""

    spec: KernelSpec
    centers: np.ndarray  # (m, d)
    alpha: np.ndarray    # (m,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "centers", np.atleast_2d(np.asarray(self.centers, dtype=float)))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        if self.alpha.shape[0] != self.centers.shape[0]:
            raise ValueError("alpha must have one coefficient per center")

    def value(self, x: np.ndarray) -> np.ndarray | float:
        q = np.asarray(x, dtype=float)
        single = q.ndim == 1
        k = gram_matrix(self.spec, np.atleast_2d(q), self.centers)
        out = k @ self.alpha
        return float(out[0]) if single else out

    def rkhs_norm(self) -> float:
        k = gram_matrix(self.spec, self.centers)
        return float(np.sqrt(max(self.alpha @ (k @ self.alpha), 0.0)))


@dataclass
class BarrierReport:
    """Grid-checked certificate quantities and the resulting bound."""

    eta: float
    gamma_lvl: float
    beta: float                # grid sup of the drift plus the ambiguity penalty
    bound: float | None        # None when the level condition fails
    feasible: bool             # gamma_lvl > eta >= 0 and B >= 0 on the grids
    nonneg_ok: bool
    horizon: int
    ambiguity_penalty: float
    n_grid_points: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _mesh(low: np.ndarray, high: np.ndarray, counts: tuple[int, ...]) -> np.ndarray:
    axes = [np.linspace(low[k], high[k], counts[k]) for k in range(len(counts))]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _resolve_counts(grids, dim: int) -> tuple[int, ...]:
    if isinstance(grids, int):
        return (grids,) * dim
    counts = tuple(int(c) for c in grids)
    if len(counts) != dim or any(c < 2 for c in counts):
        raise ValueError("grid counts must give at least 2 points per dimension")
    return counts


def check_barrier(
    candidate: BarrierCandidate,
    dp_model: DpModel,
    region: SafeRegion,
    x0_box: tuple[np.ndarray, np.ndarray],
    T: int,
    grids: int | tuple[int, ...] = 25,
) -> BarrierReport:
    """Evaluate conditions (a)-(c) on grids and assemble the horizon-T bound.

    The unsafe set is the union of obstacle boxes inside the region bounding
    box; a region without obstacles has nothing to check against and is
    rejected.  The bound uses max(beta, 0): any upper bound on the drift is
    admissible and a negative one would let the formula exceed 1.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    if dp_model.gram is None or dp_model.x_next is None:
        raise ValueError("barrier check needs a kernel-backed one-step model")
    if not region.obstacles:
        raise ValueError("region has no obstacle boxes, so the unsafe grid is empty")
    dim = region.dim
    counts = _resolve_counts(grids, dim)

    x0_low = np.asarray(x0_box[0], dtype=float)
    x0_high = np.asarray(x0_box[1], dtype=float)
    init_pts = _mesh(x0_low, x0_high, counts)

    unsafe_pts = np.vstack(
        [_mesh(np.asarray(ol), np.asarray(oh), counts) for ol, oh in region.obstacles]
    )

    lo, hi = region.box_array()
    box_pts = _mesh(lo, hi, counts)
    safe_pts = box_pts[is_safe(region, box_pts)]
    if safe_pts.shape[0] == 0:
        raise ValueError("safe-set grid is empty; refine the grid")

    eta = float(np.max(candidate.value(init_pts)))
    gamma_lvl = float(np.min(candidate.value(unsafe_pts)))

    b_next = candidate.value(dp_model.x_next)
    w = dp_model.gram.weights_at(safe_pts)
    drift = w @ b_next - candidate.value(safe_pts)
    penalty = dp_model.ambiguity * KAPPA * candidate.rkhs_norm()
    beta = float(np.max(drift)) + penalty

    all_pts = np.vstack([init_pts, unsafe_pts, safe_pts])
    nonneg_ok = bool(np.min(candidate.value(all_pts)) >= 0.0)

    feasible = nonneg_ok and eta >= 0.0 and gamma_lvl > eta
    bound = None
    if feasible:
        bound = 1.0 - (eta + max(beta, 0.0) * T) / gamma_lvl
    return BarrierReport(
        eta=eta,
        gamma_lvl=gamma_lvl,
        beta=beta,
        bound=bound,
        feasible=feasible,
        nonneg_ok=nonneg_ok,
        horizon=T,
        ambiguity_penalty=penalty,
        n_grid_points=all_pts.shape[0],
    )


@dataclass(frozen=True)
class OracleResult:
    """Minimum Monte Carlo safety probability over an initial-set grid."""

    value: float
    stderr: float
    grid: np.ndarray
    estimates: np.ndarray


def uniform_mc_oracle(
    rollout,
    region: SafeRegion,
    x0_box: tuple[np.ndarray, np.ndarray],
    T: int,
    n_mc: int,
    seed: int,
    grids: int | tuple[int, ...] = 11,
) -> OracleResult:
    """min over an X0 grid of Monte Carlo safety estimates.

    ``rollout(x0s, T, rng)`` must return (n, T+1, d) trajectories; the
    standard error reported is the binomial one at the minimizing point.
    """
    dim = region.dim
    counts = _resolve_counts(grids, dim)
    grid = _mesh(np.asarray(x0_box[0], dtype=float), np.asarray(x0_box[1], dtype=float), counts)
    estimates = np.empty(grid.shape[0])
    for g in range(grid.shape[0]):
        rng = stream(seed, "barrier-mc", g)
        rolls = rollout(np.tile(grid[g], (n_mc, 1)), T, rng)
        estimates[g] = float(np.mean(trajectory_safe(region, rolls)))
    k = int(np.argmin(estimates))
    p = estimates[k]
    return OracleResult(
        value=float(p),
        stderr=float(np.sqrt(p * (1.0 - p) / n_mc)),
        grid=grid,
        estimates=estimates,
    )


def fit_barrier_candidate(
    spec: KernelSpec, centers: np.ndarray, targets: np.ndarray
) -> BarrierCandidate:
    """Ridge-fit a kernel expansion through (centers, targets)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    gram = fit_weights(spec, centers)
    from scipy.linalg import cho_solve

    alpha = cho_solve(gram._factor, np.asarray(targets, dtype=float))
    return BarrierCandidate(spec=spec, centers=centers, alpha=alpha)


def candidate_to_csv(candidate: BarrierCandidate, header_comment: str = "") -> str:
    d = candidate.centers.shape[1]
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append(",".join([f"cx{k + 1}" for k in range(d)] + ["alpha"]))
    for c, a in zip(candidate.centers, candidate.alpha):
        lines.append(",".join([f"{v:.17g}" for v in c] + [f"{a:.17g}"]))
    return "\n".join(lines) + "\n"


def candidate_from_csv(text: str, spec: KernelSpec) -> BarrierCandidate:
    rows = [
        line.split(",")
        for line in text.splitlines()
        if line and not line.startswith("#")
    ][1:]
    arr = np.asarray([[float(v) for v in r] for r in rows])
    return BarrierCandidate(spec=spec, centers=arr[:, :-1], alpha=arr[:, -1])
