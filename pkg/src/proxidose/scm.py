"""Structural causal models: declarative specs, sampling, interventions.

A :class:`ScmSpec` lists nodes in three layers -- latent confounders (``u``),
treatments (``a``) and outcomes (``y``) -- each with a noise law and a
structural function written as a sum of terms.  Layer order is enforced at
construction: treatments may depend only on confounders, outcomes only on
confounders and treatments, so the graph is a DAG with no treatment-treatment
or outcome-outcome edges.

Reproducibility contract
------------------------
All randomness comes from the Philox-4x64 counter-based generator.  Each node
draws from its own substream with a 128-bit key ``run_key | (node_index << 64)``;
the per-sample position is the Philox counter.  ``run_key`` is the user seed
for plain sampling, and ``splitmix64(seed ^ splitmix64(g + 1))`` for grid point
``g`` of a Monte Carlo dose-response curve.  Uniform variates are
``(k + 0.5) / 2**53`` with ``k`` drawn from ``[0, 2**53)``; normal variates are
obtained from uniforms by the inverse normal CDF.  Equal ``(spec, n, seed)``
therefore yield bit-identical output across runs and platforms, and replicate
blocks can be generated independently in any order.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .data import Dataset
from .errors import ConfigError, SpecValidationError, UnknownScenarioError
from .estimator import EffectCurve

_M64 = (1 << 64) - 1

_INNER_FUNCS = {
    "linear": lambda x: x,
    "square": np.square,
    "cube": lambda x: x**3,
}

_OUTER_FUNCS = {
    "linear": lambda x: x,
    "tanh": np.tanh,
    "sin": np.sin,
    "cos": np.cos,
    "sigmoid": lambda x: 1.0 / (1.0 + np.exp(-x)),
    "square": np.square,
    "cube": lambda x: x**3,
    "exp-neg": lambda x: np.exp(-x),
}


@dataclass(frozen=True)
class Arg:
    """One input of a term: ``inner(node) * scale`` fed into the outer function."""

    node: str
    scale: float = 1.0
    inner: str = "linear"


@dataclass(frozen=True)
class Term:
    """``coef * fn(sum_k scale_k * inner_k(node_k))``; ``fn='const'`` is just ``coef``."""

    coef: float
    fn: str = "linear"
    args: tuple[Arg, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if self.fn == "const":
            if self.args:
                raise SpecValidationError("const terms take no arguments")
        elif self.fn not in _OUTER_FUNCS:
            raise SpecValidationError(f"unknown term function {self.fn!r}")
        elif not self.args:
            raise SpecValidationError(f"term {self.fn!r} needs at least one argument")
        for a in self.args:
            if a.inner not in _INNER_FUNCS:
                raise SpecValidationError(f"unknown inner function {a.inner!r}")


@dataclass(frozen=True)
class Noise:
    """Noise law: ``uniform`` with bounds (a, b) or ``normal`` with (mu, sigma)."""

    kind: str
    a: float
    b: float

    def __post_init__(self):
        if self.kind not in ("uniform", "normal"):
            raise SpecValidationError(f"unknown noise kind {self.kind!r}")
        if self.kind == "uniform" and not self.b > self.a:
            raise SpecValidationError("uniform noise needs b > a")
        if self.kind == "normal" and self.b < 0:
            raise SpecValidationError("normal noise needs sigma >= 0")


@dataclass(frozen=True)
class Node:
    name: str
    role: str  # 'u' | 'a' | 'y'
    noise: Noise
    terms: tuple[Term, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if self.role not in ("u", "a", "y"):
            raise SpecValidationError(f"unknown node role {self.role!r}")


@dataclass(frozen=True)
class ScmSpec:
    """Validated structural causal model over confounders, treatments, outcomes."""

    nodes: tuple[Node, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise SpecValidationError("duplicate node names")
        role_of = {n.name: n.role for n in self.nodes}
        index_of = {n.name: i for i, n in enumerate(self.nodes)}
        for i, node in enumerate(self.nodes):
            for term in node.terms:
                for arg in term.args:
                    if arg.node not in role_of:
                        raise SpecValidationError(
                            f"{node.name} references unknown node {arg.node!r}"
                        )
                    parent_role = role_of[arg.node]
                    if node.role == "u":
                        ok = parent_role == "u" and index_of[arg.node] < i
                    elif node.role == "a":
                        ok = parent_role == "u"
                    else:
                        ok = parent_role in ("u", "a")
                    if not ok:
                        raise SpecValidationError(
                            f"edge {arg.node} -> {node.name} violates the "
                            "confounder -> treatment -> outcome layer order"
                        )

    @property
    def treatments(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.role == "a")

    @property
    def outcomes(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.role == "y")

    @property
    def confounders(self) -> tuple[str, ...]:
        return tuple(n.name for n in self.nodes if n.role == "u")

    def node(self, name: str) -> Node:
        for n in self.nodes:
            if n.name == name:
                return n
        raise ConfigError(f"no node named {name!r}")

    def parents(self, name: str) -> set[str]:
        return {a.node for t in self.node(name).terms for a in t.args}

    def to_json(self) -> str:
        return json.dumps(spec_to_dict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScmSpec":
        return spec_from_dict(json.loads(text))


def spec_to_dict(spec: ScmSpec) -> dict:
    def noise_dict(z: Noise) -> dict:
        if z.kind == "uniform":
            return {"kind": "uniform", "lo": z.a, "hi": z.b}
        return {"kind": "normal", "mu": z.a, "sigma": z.b}

    return {
        "nodes": [
            {
                "name": n.name,
                "role": n.role,
                "noise": noise_dict(n.noise),
                "terms": [
                    {
                        "coef": t.coef,
                        "fn": t.fn,
                        "args": [
                            {"node": a.node, "scale": a.scale, "inner": a.inner}
                            for a in t.args
                        ],
                    }
                    for t in n.terms
                ],
            }
            for n in spec.nodes
        ]
    }


def spec_from_dict(doc: dict) -> ScmSpec:
    nodes = []
    for nd in doc["nodes"]:
        z = nd["noise"]
        if z["kind"] == "uniform":
            noise = Noise("uniform", z["lo"], z["hi"])
        else:
            noise = Noise("normal", z["mu"], z["sigma"])
        terms = tuple(
            Term(
                t["coef"],
                t["fn"],
                tuple(
                    Arg(a["node"], a.get("scale", 1.0), a.get("inner", "linear"))
                    for a in t.get("args", ())
                ),
            )
            for t in nd.get("terms", ())
        )
        nodes.append(Node(nd["name"], nd["role"], noise, terms))
    return ScmSpec(tuple(nodes))


def save_spec(spec: ScmSpec, path) -> None:
    Path(path).write_text(spec.to_json() + "\n")


def load_spec(path) -> ScmSpec:
    return ScmSpec.from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# sampling


def _splitmix64(x: int) -> int:
    x &= _M64
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return (x ^ (x >> 31)) & _M64


def _node_stream(run_key: int, node_index: int) -> np.random.Generator:
    key = (run_key & _M64) | ((node_index & _M64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _uniform01(gen: np.random.Generator, n: int) -> np.ndarray:
    # open-interval uniforms: (k + 0.5) / 2^53 never hits 0 or 1
    k = gen.integers(0, 1 << 53, size=n, dtype=np.uint64)
    return (k.astype(np.float64) + 0.5) * 2.0**-53


def _draw_noise(noise: Noise, gen: np.random.Generator, n: int) -> np.ndarray:
    u = _uniform01(gen, n)
    if noise.kind == "uniform":
        return noise.a + (noise.b - noise.a) * u
    return noise.a + noise.b * ndtri(u)


def _eval_terms(node: Node, values: dict[str, np.ndarray], n: int) -> np.ndarray:
    total = np.zeros(n)
    for term in node.terms:
        if term.fn == "const":
            total += term.coef
            continue
        inner = np.zeros(n)
        for arg in term.args:
            inner = inner + arg.scale * _INNER_FUNCS[arg.inner](values[arg.node])
        total += term.coef * _OUTER_FUNCS[term.fn](inner)
    return total


def _propagate(
    spec: ScmSpec, n: int, run_key: int, do: dict[str, float] | None = None
) -> dict[str, np.ndarray]:
    """Draw n joint samples in layer order; ``do`` pins nodes to constants."""
    do = do or {}
    values: dict[str, np.ndarray] = {}
    for idx, node in enumerate(spec.nodes):
        if node.name in do:
            values[node.name] = np.full(n, float(do[node.name]))
            continue
        gen = _node_stream(run_key, idx)
        values[node.name] = _eval_terms(node, values, n) + _draw_noise(
            node.noise, gen, n
        )
    return values


def sample(spec: ScmSpec, n: int, seed: int) -> Dataset:
    """n i.i.d. draws of the observed (treatment and outcome) columns.

    Confounder columns are never exported: they are unobserved by contract.
    Identical ``(spec, n, seed)`` produce bit-identical datasets.
    """
    if n < 1:
        raise ConfigError("sample size must be >= 1")
    values = _propagate(spec, n, int(seed) & _M64)
    cols = [
        (node.name, node.role, values[node.name])
        for node in spec.nodes
        if node.role in ("a", "y")
    ]
    return Dataset.from_columns(cols)


def ground_truth_curve(
    spec: ScmSpec,
    target: str,
    treated,
    grid,
    replicates: int = 10_000,
    seed: int = 0,
) -> EffectCurve:
    """Monte Carlo interventional means of ``target`` under ``do(treated = a)``.

    For every grid point the exogenous noises and confounders are re-sampled
    from a grid-indexed substream, the treated nodes are forced to the dose,
    and the remaining nodes are propagated.  With R replicates the standard
    error of each point shrinks as 1/sqrt(R).
    """
    treated = [treated] if isinstance(treated, str) else list(treated)
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    if target not in spec.outcomes:
        raise ConfigError(f"target {target!r} is not an outcome of the model")
    for t in treated:
        if t not in spec.treatments:
            raise ConfigError(f"treated id {t!r} is not a treatment of the model")
    grid_arr = np.asarray(grid, dtype=np.float64)
    if grid_arr.size == 0:
        raise ConfigError("grid must be nonempty")
    if grid_arr.ndim == 1:
        if len(treated) != 1:
            raise ConfigError("scalar grid requires exactly one treated id")
        doses = grid_arr[:, None]
    else:
        doses = grid_arr
        if doses.shape[1] != len(treated):
            raise ConfigError("grid width must match the number of treated ids")
    estimates = np.empty(doses.shape[0])
    seed = int(seed) & _M64
    for g, dose in enumerate(doses):
        run_key = _splitmix64(seed ^ _splitmix64(g + 1))
        vals = _propagate(
            spec, replicates, run_key, do=dict(zip(treated, dose))
        )
        estimates[g] = float(np.mean(vals[target]))
    return EffectCurve(grid=grid_arr, estimates=estimates, n_used=replicates)


# ---------------------------------------------------------------------------
# built-in scenarios

_STD = Noise("normal", 0.0, 1.0)


def _treatment_shapes() -> dict[str, tuple[Term, ...]]:
    """The five confounder-to-treatment shapes, 0.5-scaled with their offsets."""
    pi8 = math.pi / 8.0
    return {
        "linear": (Term(0.5, "linear", (Arg("U"),)), Term(2.5, "const")),
        "tanh": (Term(0.5, "tanh", (Arg("U"),)), Term(1.5, "const")),
        "sin": (Term(0.5, "sin", (Arg("U", pi8),)), Term(1.5, "const")),
        "sigmoid": (Term(0.5, "sigmoid", (Arg("U", -1.0),)), Term(1.5, "const")),
        "cos": (Term(0.5, "cos", (Arg("U", pi8),)), Term(1.5, "const")),
    }


def _synthetic_main(assignment: tuple[str, ...]) -> ScmSpec:
    shapes = _treatment_shapes()
    nodes = [Node("U", "u", Noise("uniform", -1.0, 1.0))]
    for i, shape in enumerate(assignment, start=1):
        nodes.append(Node(f"A_{i}", "a", _STD, shapes[shape]))
    u_term = Term(1.0, "linear", (Arg("U"),))
    nodes += [
        Node(
            "Y_1",
            "y",
            _STD,
            (
                Term(2.0, "sin", (Arg("A_1", 1.4), Arg("A_3", 2.0, "square"))),
                Term(0.5, "linear", (Arg("A_2"),)),
                Term(0.5, "square", (Arg("A_4"),)),
                Term(0.5, "linear", (Arg("A_5"),)),
                Term(1.0, "cube", (Arg("A_3"),)),
                u_term,
            ),
        ),
        Node(
            "Y_2",
            "y",
            _STD,
            (
                Term(-2.0, "cos", (Arg("A_2", 1.8),)),
                Term(1.5, "square", (Arg("A_4"),)),
                u_term,
            ),
        ),
        Node(
            "Y_3",
            "y",
            _STD,
            (
                Term(0.7, "square", (Arg("A_3"),)),
                Term(1.2, "linear", (Arg("A_4"),)),
                u_term,
            ),
        ),
        Node(
            "Y_4",
            "y",
            _STD,
            (
                Term(1.6 * math.e, "exp-neg", (Arg("A_1"),)),
                Term(2.3, "square", (Arg("A_5"),)),
                u_term,
            ),
        ),
    ]
    return ScmSpec(tuple(nodes))


def _proxy_strength(beta: float, link: str, case: str) -> ScmSpec:
    w_fn = "linear" if link == "linear" else "tanh"
    y_terms = [Term(1.0, "linear", (Arg("U"),))]
    if case == "causal":
        y_terms.insert(0, Term(1.0, "linear", (Arg("A"),)))
    return ScmSpec(
        (
            Node("U", "u", _STD),
            Node("A", "a", _STD, (Term(1.0, "linear", (Arg("U"),)),)),
            Node("W", "a", _STD, (Term(beta, w_fn, (Arg("U"),)),)),
            Node("Y", "y", _STD, tuple(y_terms)),
        )
    )


def _confounding_strength(beta: float, link: str, case: str) -> ScmSpec:
    u_fn = "linear" if link == "linear" else "tanh"
    y_terms = [Term(1.0, "linear", (Arg("W"),)), Term(beta, u_fn, (Arg("U"),))]
    if case == "causal":
        y_terms.insert(0, Term(1.0, "linear", (Arg("A"),)))
    return ScmSpec(
        (
            Node("U", "u", _STD),
            Node("A", "a", _STD, (Term(beta, "linear", (Arg("U"),)),)),
            Node("W", "a", _STD, (Term(beta, "linear", (Arg("U"),)),)),
            Node("Y", "y", _STD, tuple(y_terms)),
        )
    )


_SCENARIO_RE = re.compile(r"^\s*([a-z-]+[a-z])\s*(?:\(([^)]*)\))?\s*$")

CANONICAL_SHAPES = ("linear", "tanh", "sin", "sigmoid", "cos")


def builtin_scenario(name: str) -> ScmSpec:
    """Return one of the built-in benchmark models by name.

    Recognized names::

        synthetic-main
        synthetic-main-random-g(<seed>)
        proxy-strength(<beta>, linear|nonlinear, causal|independent)
        confounding-strength(<beta>, linear|nonlinear, causal|independent)

    ``synthetic-main`` is the canonical five-treatment, four-outcome model
    with one shared Uniform[-1, 1] confounder; the ``random-g`` variant draws
    the confounder-to-treatment shape assignment at random from the same five
    shapes using the given seed.
    """
    m = _SCENARIO_RE.match(name or "")
    if not m:
        raise UnknownScenarioError(f"cannot parse scenario name {name!r}")
    base, argstr = m.group(1), m.group(2)
    args = [a.strip() for a in argstr.split(",")] if argstr else []

    if base == "synthetic-main":
        if args:
            raise UnknownScenarioError("synthetic-main takes no arguments")
        return _synthetic_main(CANONICAL_SHAPES)
    if base == "synthetic-main-random-g":
        if len(args) != 1:
            raise UnknownScenarioError("synthetic-main-random-g needs a seed")
        gen = _node_stream(int(args[0]) & _M64, 0)
        shapes = tuple(
            CANONICAL_SHAPES[int(k)] for k in gen.integers(0, 5, size=5)
        )
        return _synthetic_main(shapes)
    if base in ("proxy-strength", "confounding-strength"):
        if len(args) != 3:
            raise UnknownScenarioError(
                f"{base} needs (beta, linear|nonlinear, causal|independent)"
            )
        beta_str = args[0].split("=")[-1]
        try:
            beta = float(beta_str)
        except ValueError:
            raise UnknownScenarioError(f"bad strength value {args[0]!r}") from None
        link, case = args[1], args[2]
        if link not in ("linear", "nonlinear") or case not in (
            "causal",
            "independent",
        ):
            raise UnknownScenarioError(
                f"{base} needs (beta, linear|nonlinear, causal|independent)"
            )
        maker = _proxy_strength if base == "proxy-strength" else _confounding_strength
        return maker(beta, link, case)
    raise UnknownScenarioError(f"unknown scenario {name!r}")
