"""Proxy-based conditional-independence test for treatment-outcome edges.

The null hypothesis is that a treatment and an outcome are independent given
the latent confounders.  A second treatment serves as the confounder proxy.
All three variables are binned (M bins for the tested treatment, N for the
proxy, L for the outcome, M > N); within each tested-treatment bin we record
the proxy bin frequencies (the columns of Q) and the outcome level
frequencies (the stacked vector q over the first L-1 levels).  Under the null
q lies, asymptotically, in the column space of the block design built from Q,
so after whitening by the plug-in multinomial covariance the squared residual
of projecting q off that space, scaled by n, follows a chi-square law with
(M - N)(L - 1) degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from .data import Dataset
from .discretize import BinnedColumn, BinningSpec, discretize
from .errors import (
    BinUnderflowError,
    ConfigError,
    EmptyBinError,
    ProxyBinsError,
)

DEFAULT_BINS = (15, 8, 5)
DEFAULT_BINS_REAL = (10, 6, 5)

_EIG_FLOOR = 1e-12  # relative floor for covariance eigenvalues
_RANK_TOL = 1e-10  # relative singular-value cutoff for the design


def chi_square_sf(x: float, k: int) -> float:
    """Upper tail of the chi-square(k) law via the regularized upper
    incomplete gamma function; absolute error below 1e-10."""
    if x < 0:
        raise ConfigError("chi-square statistic must be >= 0")
    if k < 1:
        raise ConfigError("degrees of freedom must be >= 1")
    return float(gammaincc(k / 2.0, x / 2.0))


@dataclass(frozen=True)
class ProbabilityTables:
    """Empirical conditional frequencies within each tested-treatment bin.

    ``q_matrix`` is the N x M column-stochastic matrix of proxy-bin
    frequencies; ``q_vec`` stacks the outcome-level frequencies level-major,
    levels 1..L-1 (the last level is dropped as redundant).
    """

    m_bins: int
    n_bins: int
    l_bins: int
    counts: np.ndarray  # per tested-treatment-bin sample counts, length M
    q_matrix: np.ndarray = field(repr=False)  # N x M
    q_vec: np.ndarray = field(repr=False)  # length M * (L - 1), level-major
    n: int


@dataclass
class TestResult:
    statistic: float
    dof: int
    p_value: float
    reject: bool
    alpha: float
    diagnostics: dict
    i: str | None = None
    j: str | None = None
    proxy: str | None = None
    bins: tuple[int, int, int] | None = None

    def to_json_dict(self) -> dict:
        m, n, l = self.bins if self.bins else (None, None, None)
        return {
            "i": self.i,
            "j": self.j,
            "proxy": self.proxy,
            "M": m,
            "N": n,
            "L": l,
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "reject": self.reject,
            "diagnostics": self.diagnostics,
        }


def build_tables(
    a_i: BinnedColumn, a_proxy: BinnedColumn, y: BinnedColumn
) -> ProbabilityTables:
    """Cross-tabulate proxy bins and outcome levels within treatment bins."""
    m_bins, n_bins, l_bins = a_i.bins, a_proxy.bins, y.bins
    if m_bins <= n_bins:
        raise ProxyBinsError(
            f"tested treatment bins (M={m_bins}) must exceed proxy bins (N={n_bins})"
        )
    if not (a_i.n == a_proxy.n == y.n):
        raise ConfigError("binned columns must have equal length")
    counts = a_i.counts.astype(np.int64)
    if np.any(counts == 0):
        raise EmptyBinError("a tested-treatment bin is empty")

    joint_proxy = np.zeros((n_bins, m_bins), dtype=np.int64)
    np.add.at(joint_proxy, (a_proxy.labels, a_i.labels), 1)
    q_matrix = joint_proxy / counts[None, :]

    joint_y = np.zeros((l_bins, m_bins), dtype=np.int64)
    np.add.at(joint_y, (y.labels, a_i.labels), 1)
    level_freq = joint_y / counts[None, :]
    q_vec = level_freq[: l_bins - 1, :].reshape(-1)  # level-major stacking

    return ProbabilityTables(
        m_bins=m_bins,
        n_bins=n_bins,
        l_bins=l_bins,
        counts=counts,
        q_matrix=q_matrix,
        q_vec=q_vec,
        n=int(counts.sum()),
    )


def estimate_covariance(
    tables: ProbabilityTables, min_count: int = 5
) -> np.ndarray:
    """Plug-in multinomial covariance of sqrt(n) * q_vec.

    Within treatment bin m the level frequencies are a multinomial proportion
    with n_m trials, giving covariance (diag(p) - p p^T) / (n_m / n) across
    the kept levels; distinct bins are independent.  A relative ridge jitter
    guarantees positive definiteness even at degenerate frequencies.
    """
    m_bins, l_keep = tables.m_bins, tables.l_bins - 1
    if np.any(tables.counts < min_count):
        raise BinUnderflowError(
            f"a treatment bin holds fewer than {min_count} samples"
        )
    dim = m_bins * l_keep
    sigma = np.zeros((dim, dim))
    p = tables.q_vec.reshape(l_keep, m_bins)
    for m in range(m_bins):
        pm = p[:, m]
        block = (np.diag(pm) - np.outer(pm, pm)) * (
            tables.n / tables.counts[m]
        )
        idx = np.arange(l_keep) * m_bins + m
        sigma[np.ix_(idx, idx)] = block
    trace = float(np.trace(sigma))
    eps = 1e-8 * (trace / dim if trace > 0 else 1.0)
    sigma[np.diag_indices_from(sigma)] += eps
    return sigma


def _inverse_sqrt(sigma: np.ndarray) -> tuple[np.ndarray, float]:
    """Symmetric inverse square root with a relative eigenvalue floor."""
    w, v = np.linalg.eigh(sigma)
    floor = _EIG_FLOOR * float(w[-1])
    w = np.maximum(w, floor)
    return (v / np.sqrt(w)) @ v.T, float(w[-1] / w[0])


def block_design(tables: ProbabilityTables) -> np.ndarray:
    """Block-diagonal repetition of Q^T over the kept outcome levels."""
    m_bins, n_bins, l_keep = tables.m_bins, tables.n_bins, tables.l_bins - 1
    q0 = np.zeros((m_bins * l_keep, n_bins * l_keep))
    qt = tables.q_matrix.T  # M x N
    for l in range(l_keep):
        q0[l * m_bins : (l + 1) * m_bins, l * n_bins : (l + 1) * n_bins] = qt
    return q0


def projection_statistic(
    tables: ProbabilityTables, sigma: np.ndarray, n: int, alpha: float = 0.05
) -> TestResult:
    """Chi-square statistic from the whitened projection residual.

    The whitened design is ``Q2 = sigma^{-1/2} Q0``; the statistic is
    ``n * ||(I - P) sigma^{-1/2} q||^2`` with P the orthogonal projector onto
    the column space of Q2.  The degrees of freedom are (M - N)(L - 1); if
    the whitened design is rank deficient beyond the pseudoinverse tolerance
    the dof are corrected to M(L - 1) - rank and flagged in the diagnostics.
    """
    m_bins, n_bins, l_keep = tables.m_bins, tables.n_bins, tables.l_bins - 1
    root_inv, cond = _inverse_sqrt(sigma)
    q2 = root_inv @ block_design(tables)
    u, s, _ = np.linalg.svd(q2, full_matrices=False)
    rank = int(np.sum(s > _RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    basis = u[:, :rank]
    white_q = root_inv @ tables.q_vec
    resid = white_q - basis @ (basis.T @ white_q)
    statistic = float(n * resid @ resid)

    full_rank = n_bins * l_keep
    dof = m_bins * l_keep - rank
    diagnostics = {
        "min_bin_count": int(tables.counts.min()),
        "covariance_condition": cond,
        "design_rank": rank,
        "rank_deficient": rank < full_rank,
    }
    p_value = chi_square_sf(statistic, dof)
    return TestResult(
        statistic=statistic,
        dof=dof,
        p_value=p_value,
        reject=bool(p_value < alpha),
        alpha=alpha,
        diagnostics=diagnostics,
        bins=(m_bins, n_bins, tables.l_bins),
    )


def test_edge(
    dataset: Dataset,
    i: str,
    j: str,
    proxy: str,
    bins: tuple[int, int, int] = DEFAULT_BINS,
    alpha: float = 0.05,
    strategy: str = "quantile",
) -> TestResult:
    """End-to-end edge test: discretize, tabulate, whiten, project."""
    if proxy == i:
        raise ConfigError("the proxy must differ from the tested treatment")
    m_bins, n_bins, l_bins = bins
    if m_bins <= n_bins:
        raise ProxyBinsError(
            f"tested treatment bins (M={m_bins}) must exceed proxy bins (N={n_bins})"
        )
    binned_a = discretize(dataset.column(i), BinningSpec(strategy, m_bins))
    binned_proxy = discretize(dataset.column(proxy), BinningSpec(strategy, n_bins))
    binned_y = discretize(dataset.column(j), BinningSpec(strategy, l_bins))
    tables = build_tables(binned_a, binned_proxy, binned_y)
    sigma = estimate_covariance(tables)
    result = projection_statistic(tables, sigma, dataset.n, alpha)
    result.i, result.j, result.proxy = i, j, proxy
    return result
