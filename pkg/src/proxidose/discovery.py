"""Bipartite treatment-outcome graph discovery and admissible proxy selection.

Every treatment-outcome pair is edge-tested with a proxy treatment; the
resulting graph certifies which variables can serve as the treatment-inducing
proxy Z and the outcome-inducing proxy W for a target pair.  The graph-level
certificate used throughout is:

* Z an outcome, W a treatment: W must have no edge into Z.
* Z and W both outcomes: W must have no incoming edge from the studied
  treatment set (Z is unconstrained because the studied treatments are
  conditioned on in the Z independence).
* Z and W both treatments: Z must have no edge into the studied outcome.

Selection is deterministic so identical inputs always produce identical
assignments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import AssumptionViolation, ConfigError, ProxidoseError
from .proxytest import DEFAULT_BINS, TestResult, test_edge
from .scm import ScmSpec


@dataclass(frozen=True)
class BipartiteGraph:
    """Treatments x outcomes adjacency with the per-edge p-values."""

    treatments: tuple[str, ...]
    outcomes: tuple[str, ...]
    adjacency: np.ndarray = field(repr=False)  # I x J bool
    p_values: np.ndarray = field(repr=False)  # I x J float
    alpha: float = 0.05
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        adjacency = np.asarray(self.adjacency, dtype=bool)
        p_values = np.asarray(self.p_values, dtype=np.float64)
        shape = (len(self.treatments), len(self.outcomes))
        if adjacency.shape != shape or p_values.shape != shape:
            raise ConfigError("adjacency and p-value matrices must be I x J")
        if not np.array_equal(adjacency, p_values < self.alpha):
            raise ConfigError("adjacency must equal (p_values < alpha)")
        for arr in (adjacency, p_values):
            arr.setflags(write=False)
        object.__setattr__(self, "adjacency", adjacency)
        object.__setattr__(self, "p_values", p_values)
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @classmethod
    def from_edges(cls, treatments, outcomes, edges, alpha: float = 0.05):
        """Build a graph from an explicit edge list (p = 0 on edges, 1 off)."""
        treatments, outcomes = tuple(treatments), tuple(outcomes)
        p = np.ones((len(treatments), len(outcomes)))
        for a, y in edges:
            p[treatments.index(a), outcomes.index(y)] = 0.0
        return cls(treatments, outcomes, p < alpha, p, alpha)

    def has_edge(self, a: str, y: str) -> bool:
        return bool(
            self.adjacency[self.treatments.index(a), self.outcomes.index(y)]
        )

    def edge_count(self) -> int:
        return int(self.adjacency.sum())

    def to_json_dict(self) -> dict:
        return {
            "treatments": list(self.treatments),
            "outcomes": list(self.outcomes),
            "alpha": self.alpha,
            "adjacency": self.adjacency.astype(int).tolist(),
            "p_values": self.p_values.tolist(),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_dot(self) -> str:
        lines = ["digraph bipartite {", "  rankdir=LR;"]
        for a in self.treatments:
            lines.append(f'  "{a}" [shape=box];')
        for y in self.outcomes:
            lines.append(f'  "{y}" [shape=ellipse];')
        for i, a in enumerate(self.treatments):
            for j, y in enumerate(self.outcomes):
                if self.adjacency[i, j]:
                    lines.append(
                        f'  "{a}" -> "{y}" [label="{self.p_values[i, j]:.3g}"];'
                    )
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ProxyAssignment:
    """Chosen (Z, W) proxy roles for a target (treatment set, outcome)."""

    treated: tuple[str, ...]
    outcome: str
    z: str
    w: str
    case: str  # 'i' | 'ii' | 'iii' | 'remark'


def truth_graph(spec: ScmSpec, alpha: float = 0.05) -> BipartiteGraph:
    """Ground-truth adjacency read directly off a structural model."""
    edges = [
        (a, y)
        for y in spec.outcomes
        for a in spec.parents(y)
        if a in spec.treatments
    ]
    return BipartiteGraph.from_edges(spec.treatments, spec.outcomes, edges, alpha)


def _proxy_candidates(treatments: tuple[str, ...], i: str, rule: str):
    others = [t for t in treatments if t != i]
    if rule == "smallest-other":
        return others[:1]
    if rule == "majority":
        return others
    raise ConfigError(f"unknown proxy rule {rule!r}")


def discover_graph(
    dataset: Dataset,
    bins: tuple[int, int, int] = DEFAULT_BINS,
    alpha: float = 0.05,
    proxy_rule: str = "smallest-other",
    strategy: str = "quantile",
) -> BipartiteGraph:
    """Edge-test every treatment-outcome pair and assemble the graph.

    ``proxy_rule`` picks the proxy treatment per edge: ``smallest-other``
    uses the first treatment column other than the tested one;
    ``majority`` tests against every other treatment and rejects on a strict
    majority (the recorded p-value is the upper median, so the adjacency
    invariant still holds).  An edge whose test aborts is conservatively
    marked present with p = 0 and flagged in the warnings list.
    """
    treatments, outcomes = dataset.treatments, dataset.outcomes
    if len(treatments) < 2:
        raise ConfigError("discovery needs at least two treatments for a proxy")
    if not outcomes:
        raise ConfigError("discovery needs at least one outcome")
    p_values = np.ones((len(treatments), len(outcomes)))
    warnings: list[str] = []
    for ii, a in enumerate(treatments):
        for jj, y in enumerate(outcomes):
            ps = []
            for proxy in _proxy_candidates(treatments, a, proxy_rule):
                try:
                    result = test_edge(
                        dataset, a, y, proxy, bins=bins, alpha=alpha,
                        strategy=strategy,
                    )
                    ps.append(result.p_value)
                except ProxidoseError as exc:
                    warnings.append(
                        f"{a}->{y} via {proxy}: {exc.category}: marked present"
                    )
                    ps.append(0.0)
            ps.sort()
            p_values[ii, jj] = ps[len(ps) // 2]  # upper median = strict majority
    return BipartiteGraph(
        treatments, outcomes, p_values < alpha, p_values, alpha, tuple(warnings)
    )


def _normalize_target(graph: BipartiteGraph, treated, outcome: str):
    treated = (treated,) if isinstance(treated, str) else tuple(treated)
    for a in treated:
        if a not in graph.treatments:
            raise ConfigError(f"unknown treatment {a!r}")
    if outcome not in graph.outcomes:
        raise ConfigError(f"unknown outcome {outcome!r}")
    return treated, outcome


def check_null_proxy(graph: BipartiteGraph, treated, outcome: str) -> str:
    """First satisfied admissibility branch for the target, or 'violation'.

    (i)   at least three outcomes and a studied treatment misses some other
          outcome; (ii) at least two other treatments and one of them misses
          the studied outcome; (iii) some other treatment misses some other
          outcome.
    """
    treated, outcome = _normalize_target(graph, treated, outcome)
    other_a = [t for t in graph.treatments if t not in treated]
    other_y = [y for y in graph.outcomes if y != outcome]

    if len(graph.outcomes) >= 3 and any(
        not graph.has_edge(a, y) for a in treated for y in other_y
    ):
        return "i"
    if len(other_a) >= 2 and any(not graph.has_edge(a, outcome) for a in other_a):
        return "ii"
    if any(not graph.has_edge(a, y) for a in other_a for y in other_y):
        return "iii"
    return "violation"


def certify(
    graph: BipartiteGraph, treated, outcome: str, z: str, w: str
) -> bool:
    """Check the (Z, W) conditional-independence certificate on the graph."""
    treated, outcome = _normalize_target(graph, treated, outcome)
    if z == w or z in treated or w in treated or outcome in (z, w):
        return False
    z_is_y, w_is_y = z in graph.outcomes, w in graph.outcomes
    if not z_is_y and z not in graph.treatments:
        return False
    if not w_is_y and w not in graph.treatments:
        return False
    if z_is_y and not w_is_y:
        return not graph.has_edge(w, z)
    if z_is_y and w_is_y:
        return all(not graph.has_edge(a, w) for a in treated)
    if not z_is_y and not w_is_y:
        return not graph.has_edge(z, outcome)
    # z a treatment, w an outcome: w must dodge both z and the studied set
    return not graph.has_edge(z, outcome) and all(
        not graph.has_edge(a, w) for a in list(treated) + [z]
    )


def select_proxies(graph: BipartiteGraph, treated, outcome: str) -> ProxyAssignment:
    """Deterministically pick an admissible (Z, W) pair for the target.

    Branch (iii) is preferred: Z is an outcome, W a treatment with no edge
    into Z, scanned from the highest treatment index down and, within a
    treatment, from the highest outcome index down (this reproduces the
    reference pairings for the built-in benchmark).  Branch (i) uses two
    other outcomes with W unhit by the studied treatments; branch (ii) uses
    two other treatments with Z unhit by the studied outcome.  Every
    candidate is validated against the graph certificate before returning.
    """
    treated, outcome = _normalize_target(graph, treated, outcome)
    other_a = [t for t in graph.treatments if t not in treated]
    other_y = [y for y in graph.outcomes if y != outcome]

    def finish(z: str, w: str, case: str) -> ProxyAssignment:
        if not certify(graph, treated, outcome, z, w):
            raise AssumptionViolation(
                f"candidate (z={z}, w={w}) fails the graph certificate"
            )
        return ProxyAssignment(treated, outcome, z, w, case)

    # (iii): (Z, W) = (outcome, treatment) with no W -> Z edge
    for w in reversed(other_a):
        for z in reversed(other_y):
            if not graph.has_edge(w, z):
                return finish(z, w, "iii")
    # (i): both proxies are other outcomes; W must be unhit by the studied set
    if len(graph.outcomes) >= 3:
        for w in other_y:
            if all(not graph.has_edge(a, w) for a in treated):
                for z in other_y:
                    if z != w:
                        return finish(z, w, "i")
    # (ii): both proxies are other treatments; Z must miss the studied outcome
    if len(other_a) >= 2:
        for z in other_a:
            if not graph.has_edge(z, outcome):
                for w in other_a:
                    if w != z:
                        return finish(z, w, "ii")
    raise AssumptionViolation(
        f"no admissible proxy pair exists for {treated} -> {outcome}"
    )


def graph_metrics(
    estimated: BipartiteGraph, truth: BipartiteGraph
) -> tuple[float, float, float]:
    """Edge-set precision, recall and F1 of an estimated graph."""
    if estimated.adjacency.shape != truth.adjacency.shape:
        raise ConfigError("graphs must have identical dimensions")
    est, tru = estimated.adjacency, truth.adjacency
    tp = int(np.sum(est & tru))
    fp = int(np.sum(est & ~tru))
    fn = int(np.sum(~est & tru))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return precision, recall, f1
