"""Binning of continuous columns for the hypothesis-testing pipeline.

Quantile bins use the inverted-CDF empirical quantile: interior cut point k
is the order statistic at position ``ceil(k * n / B)`` (1-indexed), which is
integer-exact and needs no interpolation.  A value equal to an interior edge
belongs to the lower bin, so bins are ``(edges[m], edges[m+1]]`` with the
bottom edge closed; when all values are distinct the quantile bin counts
differ by at most one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BinningError, DataError, TooFewDistinctValuesError


@dataclass(frozen=True)
class BinningSpec:
    strategy: str = "quantile"
    bins: int = 2

    def __post_init__(self):
        if self.strategy not in ("quantile", "uniform"):
            raise BinningError(f"unknown binning strategy {self.strategy!r}")
        if self.bins < 2:
            raise BinningError("bin count must be >= 2")


@dataclass(frozen=True)
class BinnedColumn:
    labels: np.ndarray = field(repr=False)
    edges: np.ndarray
    counts: np.ndarray

    @property
    def bins(self) -> int:
        return len(self.counts)

    @property
    def n(self) -> int:
        return len(self.labels)


def _quantile_edges(column: np.ndarray, bins: int) -> np.ndarray:
    n = len(column)
    ordered = np.sort(column)
    positions = np.ceil(np.arange(1, bins) * n / bins).astype(int) - 1
    edges = np.concatenate(([ordered[0]], ordered[positions], [ordered[-1]]))
    if len(np.unique(edges)) != bins + 1:
        raise TooFewDistinctValuesError(
            f"ties leave fewer than {bins} distinct quantile bins"
        )
    return edges


def _uniform_edges(column: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = float(np.min(column)), float(np.max(column))
    if not hi > lo:
        raise TooFewDistinctValuesError("constant column cannot be binned")
    return np.linspace(lo, hi, bins + 1)


def apply_edges(column: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Label values against existing edges; out-of-range values clamp to the
    boundary bins so train-time partitions can be reused on new data."""
    column = np.asarray(column, dtype=np.float64)
    interior = np.asarray(edges)[1:-1]
    return np.searchsorted(interior, column, side="left").astype(np.int64)


def discretize(column: np.ndarray, spec: BinningSpec) -> BinnedColumn:
    """Bin a column into ``spec.bins`` labeled categories."""
    column = np.asarray(column, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(column)):
        raise DataError("cannot discretize non-finite values")
    if len(column) < spec.bins:
        raise BinningError(
            f"need at least {spec.bins} samples for {spec.bins} bins"
        )
    if spec.strategy == "quantile":
        edges = _quantile_edges(column, spec.bins)
    else:
        edges = _uniform_edges(column, spec.bins)
    labels = apply_edges(column, edges)
    counts = np.bincount(labels, minlength=spec.bins)
    return BinnedColumn(labels=labels, edges=edges, counts=counts)
