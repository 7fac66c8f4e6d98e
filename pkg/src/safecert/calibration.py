"""Histogram-binning calibration with finite-sample certified lower bounds.

Raw model scores are only rankings; this module turns them into guaranteed
probabilities.  Calibration scores are split into quantile bins, each bin
gets the empirical safety rate of its members, and a Hoeffding width

    eps_b = sqrt( ln(B / delta_conf) / (2 n_b) )

is subtracted (Bonferroni over the B bins), clipped at zero:

    p_b = max(0, rate_b - eps_b).

For a fresh draw from the same distribution, P(true probability >= p_bin) is
at least 1 - delta_conf marginally over the draw and the calibration set.
The guarantee is distribution-free; it needs nothing from the model that
produced the scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["BinnedCalibrator", "calibrate", "certified_lower_bound", "soundness_and_discrimination"]

_DEGENERATE_SPAN = 1e-12


@dataclass
class BinnedCalibrator:
    """Quantile-binned calibration table with per-bin certified bounds."""

    edges: np.ndarray       # (B+1,) strictly increasing working edges
    counts: np.ndarray      # (B,) calibration points per bin
    rates: np.ndarray       # (B,) empirical safety rate per bin
    widths: np.ndarray      # (B,) Hoeffding half-widths
    certified: np.ndarray   # (B,) max(0, rate - width)
    delta_conf: float
    n_cal: int
    requested_bins: int
    degenerate: bool = False

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def bin_of(self, scores: np.ndarray) -> np.ndarray:
        """Bin index for each score; outside scores map to the end bins."""
        s = np.asarray(scores, dtype=float)
        idx = np.searchsorted(self.edges[1:-1], s, side="right")
        return np.clip(idx, 0, self.n_bins - 1)

    def to_json(self) -> str:
        payload = {
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
            "rates": self.rates.tolist(),
            "widths": self.widths.tolist(),
            "certified": self.certified.tolist(),
            "delta_conf": self.delta_conf,
            "n_cal": self.n_cal,
            "requested_bins": self.requested_bins,
            "degenerate": self.degenerate,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BinnedCalibrator":
        d = json.loads(text)
        return cls(
            edges=np.asarray(d["edges"], dtype=float),
            counts=np.asarray(d["counts"], dtype=int),
            rates=np.asarray(d["rates"], dtype=float),
            widths=np.asarray(d["widths"], dtype=float),
            certified=np.asarray(d["certified"], dtype=float),
            delta_conf=float(d["delta_conf"]),
            n_cal=int(d["n_cal"]),
            requested_bins=int(d["requested_bins"]),
            degenerate=bool(d["degenerate"]),
        )


def _merge_empty_bins(edges: list[float], counts: np.ndarray) -> list[float]:
    """Merge each empty bin toward its nearest nonempty neighbor, one edge at a time."""
    edges = list(edges)
    while True:
        nonempty = np.flatnonzero(counts)
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0 or nonempty.size == 0:
            return edges
        b = int(empty[0])
        dist = np.abs(nonempty - b)
        target = int(nonempty[np.argmin(dist)])
        if target < b:
            del edges[b]
            counts = np.concatenate([counts[: b - 1], [counts[b - 1] + counts[b]], counts[b + 1 :]])
        else:
            del edges[b + 1]
            counts = np.concatenate([counts[:b], [counts[b] + counts[b + 1]], counts[b + 2 :]])


def calibrate(
    scores: np.ndarray,
    outcomes: np.ndarray,
    n_bins: int = 10,
    delta_conf: float = 0.1,
) -> BinnedCalibrator:
    """Fit the binned calibrator on held-out (score, binary outcome) pairs.

    Scores with a span at or below 1e-12 collapse to a single bin.  Tied
    quantiles are deduplicated and any remaining empty bin is merged into its
    nearest nonempty neighbor; widths use the final bin count.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(outcomes).astype(float).ravel()
    if s.size == 0:
        raise ValueError("calibration set is empty")
    if s.size != y.size:
        raise ValueError("scores and outcomes must have equal length")
    if not (0.0 < delta_conf < 1.0):
        raise ValueError("delta_conf must lie in (0, 1)")
    if not (1 <= n_bins <= s.size):
        raise ValueError("n_bins must lie in [1, n_cal]")

    span = float(np.max(s) - np.min(s))
    degenerate = span <= _DEGENERATE_SPAN
    if degenerate or n_bins == 1:
        edges = [float(np.min(s)), float(np.max(s))]
    else:
        qs = np.quantile(s, np.linspace(0.0, 1.0, n_bins + 1))
        edges = [float(qs[0])]
        for e in qs[1:]:
            if e > edges[-1]:
                edges.append(float(e))

    def assign(e: list[float]) -> np.ndarray:
        idx = np.searchsorted(np.asarray(e[1:-1]), s, side="right")
        return np.clip(idx, 0, len(e) - 2)

    bins = assign(edges)
    counts = np.bincount(bins, minlength=len(edges) - 1)
    if np.any(counts == 0):
        edges = _merge_empty_bins(edges, counts)
        bins = assign(edges)
        counts = np.bincount(bins, minlength=len(edges) - 1)

    b_eff = len(counts)
    rates = np.zeros(b_eff)
    for b in range(b_eff):
        rates[b] = float(np.mean(y[bins == b]))
    widths = np.sqrt(np.log(b_eff / delta_conf) / (2.0 * counts))
    certified = np.maximum(0.0, rates - widths)
    return BinnedCalibrator(
        edges=np.asarray(edges),
        counts=counts,
        rates=rates,
        widths=widths,
        certified=certified,
        delta_conf=delta_conf,
        n_cal=s.size,
        requested_bins=n_bins,
        degenerate=degenerate,
    )


def certified_lower_bound(cal: BinnedCalibrator, scores: np.ndarray) -> np.ndarray | float:
    """Certified bound for one score or a batch: the bound of the score's bin."""
    s = np.asarray(scores, dtype=float)
    single = s.ndim == 0
    out = cal.certified[cal.bin_of(np.atleast_1d(s))]
    return float(out[0]) if single else out


def soundness_and_discrimination(
    cal: BinnedCalibrator, scores: np.ndarray, p_mc: np.ndarray
) -> tuple[float, float]:
    """Fraction of points whose bound respects the MC truth, and bound spread.

    Soundness is the fraction of grid points with bound <= p_mc; the
    discrimination proxy is the standard deviation of the bounds (a flat,
    useless bound scores zero).
    """
    bounds = certified_lower_bound(cal, scores)
    soundness = float(np.mean(bounds <= np.asarray(p_mc, dtype=float)))
    return soundness, float(np.std(bounds))
