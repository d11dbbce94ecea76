"""Discrete structural causal models: the ground-truth machine.

An :class:`Scm` couples a dag with one conditional probability table per
node.  Because every domain is finite, interventional quantities can be
computed *exactly* by enumerating the mutilated model, which is what makes
these models usable as oracles for the estimators: sample an observational
table, run an estimator on it, and compare against the enumerated truth.

Interventions follow the modularity rule: setting a node replaces only
that node's CPT with a point mass; every other mechanism is untouched.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dag import Dag, parse_dag, serialize_dag
from .defaults import DEFAULT_SEED
from .positivity import PositivityError
from .table import ColumnSpec, PatientTable, Schema

__all__ = [
    "ScmError",
    "NodeModel",
    "InterventionSpec",
    "Scm",
    "sample",
    "exact_interventional",
    "adjusted_distribution",
    "MulticentreConfig",
    "build_multicentre_scm",
    "generate_multicentre",
    "scm_to_json",
    "scm_from_json",
    "load_scm",
]

STATE_SPACE_LIMIT = 10_000_000

_ROW_SUM_TOL = 1e-12


class ScmError(ValueError):
    """Invalid model structure, table, or intervention."""


@dataclass(frozen=True)
class NodeModel:
    """Finite domain plus the conditional probability table of one node.

    ``cpt`` has one row per parent configuration and one column per level.
    Rows are ordered by mixed-radix parent index with the *first* parent in
    the dag's (sorted) parent tuple as the most significant digit — i.e.
    ``cpt.reshape(parent_sizes + [n_levels])`` indexes naturally.
    """

    levels: tuple
    cpt: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, NodeModel):
            return NotImplemented
        return self.levels == other.levels and np.array_equal(self.cpt,
                                                              other.cpt)

    def __hash__(self):  # frozen dataclass with array payload
        return hash((self.levels, self.cpt.shape))


@dataclass(frozen=True)
class InterventionSpec:
    """A do(...) assignment: node name -> level label."""

    assignments: dict = field(default_factory=dict)

    def __post_init__(self):
        for node, level in self.assignments.items():
            if not isinstance(level, str):
                raise ScmError(
                    f"do-value for {node!r} must be a level label, "
                    f"got {level!r}")


class Scm:
    """A dag with one :class:`NodeModel` per node."""

    def __init__(self, dag: Dag, nodes: dict):
        self.dag = dag
        self.nodes = dict(nodes)
        missing = [v for v in dag.nodes if v not in self.nodes]
        if missing:
            raise ScmError(f"no model for node(s): {', '.join(missing)}")
        extra = [v for v in self.nodes if v not in dag.nodes]
        if extra:
            raise ScmError(f"model for unknown node(s): {', '.join(extra)}")
        for name in dag.nodes:
            model = self.nodes[name]
            if not model.levels:
                raise ScmError(f"node {name!r}: empty domain")
            if len(set(model.levels)) != len(model.levels):
                raise ScmError(f"node {name!r}: duplicate levels")
            n_cfg = 1
            for p in dag.parents(name):
                n_cfg *= len(self.nodes[p].levels)
            cpt = np.asarray(model.cpt, dtype=float)
            if cpt.shape != (n_cfg, len(model.levels)):
                raise ScmError(
                    f"node {name!r}: CPT shape {cpt.shape} does not match "
                    f"{n_cfg} parent configuration(s) x "
                    f"{len(model.levels)} level(s)")
            if (cpt < 0).any():
                raise ScmError(f"node {name!r}: negative probabilities")
            bad = np.abs(cpt.sum(axis=1) - 1.0) > _ROW_SUM_TOL
            if bad.any():
                raise ScmError(
                    f"node {name!r}: CPT row(s) "
                    f"{np.nonzero(bad)[0].tolist()} do not sum to 1")

    def __eq__(self, other):
        if not isinstance(other, Scm):
            return NotImplemented
        return self.dag == other.dag and self.nodes == other.nodes

    def state_space_size(self) -> int:
        size = 1
        for model in self.nodes.values():
            size *= len(model.levels)
        return size

    def _check_intervention(self, do: InterventionSpec) -> dict:
        """Validate and translate do-values into level codes."""
        codes = {}
        for node, level in do.assignments.items():
            if node not in self.nodes:
                raise ScmError(f"unknown node {node!r} in intervention")
            levels = self.nodes[node].levels
            if level not in levels:
                raise ScmError(
                    f"node {node!r} has no level {level!r} "
                    f"(domain: {', '.join(levels)})")
            codes[node] = levels.index(level)
        return codes

    def mutilated(self, do: InterventionSpec) -> "Scm":
        """The post-intervention model: point-mass CPTs for do-nodes.

        Non-intervened nodes keep their CPT arrays (the same objects, not
        copies) — modularity in executable form.
        """
        codes = self._check_intervention(do)
        nodes = dict(self.nodes)
        for name, code in codes.items():
            model = self.nodes[name]
            n_cfg = model.cpt.shape[0]
            point = np.zeros((n_cfg, len(model.levels)))
            point[:, code] = 1.0
            nodes[name] = NodeModel(model.levels, point)
        return Scm(self.dag, nodes)


def sample(scm: Scm, n: int, seed=DEFAULT_SEED,
           do: InterventionSpec | None = None) -> PatientTable:
    """Ancestral sampling in topological order; deterministic given seed.

    ``seed`` is anything ``numpy.random.default_rng`` accepts, so worker
    shards can derive disjoint streams from (seed, shard) tuples.
    Intervened nodes are pinned to their do-values and consume no
    randomness.  Nodes whose domain is exactly ("0", "1") become binary
    columns, all others categorical; a synthetic unique id column is
    prepended.  Nodes need at least two levels to be expressible as table
    columns.
    """
    if n < 1:
        raise ScmError(f"n must be >= 1, got {n}")
    do_codes = scm._check_intervention(do) if do is not None else {}
    for name, model in scm.nodes.items():
        if len(model.levels) < 2:
            raise ScmError(
                f"node {name!r} has a single level; table columns need "
                f"at least two")

    rng = np.random.default_rng(seed)
    values: dict[str, np.ndarray] = {}
    for name in scm.dag.topological_order():
        model = scm.nodes[name]
        if name in do_codes:
            values[name] = np.full(n, do_codes[name], dtype=np.int64)
            continue
        parents = scm.dag.parents(name)
        if parents:
            idx = np.zeros(n, dtype=np.int64)
            for p in parents:
                idx = idx * len(scm.nodes[p].levels) + values[p]
        else:
            idx = np.zeros(n, dtype=np.int64)
        cum = np.cumsum(model.cpt, axis=1)[idx]
        u = rng.random(n)
        codes = (u[:, None] >= cum).sum(axis=1)
        values[name] = np.minimum(codes, len(model.levels) - 1)

    id_name = "pid"
    while id_name in scm.nodes:
        id_name += "_"
    specs = [ColumnSpec(id_name, "id", role="id")]
    data = {id_name: (np.array([f"r{i:08d}" for i in range(n)],
                               dtype=object), None)}
    for name in sorted(scm.nodes):
        model = scm.nodes[name]
        if model.levels == ("0", "1"):
            specs.append(ColumnSpec(name, "binary"))
            data[name] = (values[name].astype(int), None)
        else:
            specs.append(ColumnSpec(name, "categorical",
                                    levels=tuple(model.levels)))
            data[name] = (values[name], None)
    return PatientTable.from_columns(Schema(specs), data)


def exact_interventional(scm: Scm, do: InterventionSpec,
                         target: str) -> dict:
    """Distribution of ``target`` under do(...), by exact enumeration.

    Builds the joint probability tensor of the mutilated model one factor
    at a time and marginalises everything except the target.  Refuses when
    the full state space exceeds ``STATE_SPACE_LIMIT`` configurations.
    """
    if target not in scm.nodes:
        raise ScmError(f"unknown target node {target!r}")
    size = scm.state_space_size()
    if size > STATE_SPACE_LIMIT:
        raise ScmError(
            f"state space has {size} configurations, above the "
            f"{STATE_SPACE_LIMIT} enumeration limit")
    model = scm.mutilated(do) if do.assignments else scm

    order = model.dag.topological_order()
    pos = {name: i for i, name in enumerate(order)}
    shape = tuple(len(model.nodes[v].levels) for v in order)
    joint = np.ones(shape)
    for name in order:
        parents = model.dag.parents(name)
        sizes = [len(model.nodes[p].levels) for p in parents]
        factor = model.nodes[name].cpt.reshape(
            sizes + [len(model.nodes[name].levels)])
        axes = [pos[p] for p in parents] + [pos[name]]
        perm = np.argsort(axes)
        factor = np.transpose(factor, perm)
        full = [1] * len(order)
        for ax, length in zip(sorted(axes), factor.shape):
            full[ax] = length
        joint = joint * factor.reshape(full)

    keep = pos[target]
    marginal = joint.sum(axis=tuple(i for i in range(len(order))
                                    if i != keep))
    total = float(marginal.sum())
    if abs(total - 1.0) > 1e-9:
        raise ScmError(f"enumeration mass {total} is not 1")
    levels = model.nodes[target].levels
    return {lv: float(p) for lv, p in zip(levels, marginal)}


def adjusted_distribution(table: PatientTable, x: str, y: str,
                          adjustment, x_level: str) -> dict:
    """Back-door estimate of p(y | do(x = x_level)) from a sample.

    Computes sum_z p_hat(z) * p_hat(y | x, z) over the observed
    configurations of the adjustment columns.  A configuration with mass
    but no exposed patients makes the estimate undefined and raises
    :class:`PositivityError`.
    """
    adjustment = list(adjustment)
    for name in (x, y, *adjustment):
        if name not in table.schema:
            raise ScmError(f"unknown column {name!r}")

    def levels_of(name):
        spec = table.schema[name]
        if spec.ctype == "binary":
            return ("0", "1")
        if spec.ctype in ("categorical", "ordered"):
            return spec.levels
        raise ScmError(f"column {name!r} must be discrete, "
                       f"is {spec.ctype}")

    x_levels = levels_of(x)
    if x_level not in x_levels:
        raise ScmError(f"column {x!r} has no level {x_level!r}")
    x_code = x_levels.index(x_level)

    codes = {name: np.asarray(table.column(name).values, dtype=np.int64)
             for name in (x, y, *adjustment)}
    for name in (x, y, *adjustment):
        if table.column(name).missing.any():
            raise ScmError(f"column {name!r} has missing values")

    n = table.n_rows
    if adjustment:
        z_idx = np.zeros(n, dtype=np.int64)
        for name in adjustment:
            z_idx = z_idx * len(levels_of(name)) + codes[name]
    else:
        z_idx = np.zeros(n, dtype=np.int64)

    y_levels = levels_of(y)
    out = np.zeros(len(y_levels))
    in_x = codes[x] == x_code
    for z in np.unique(z_idx):
        members = z_idx == z
        p_z = float(members.sum()) / n
        cell = members & in_x
        n_cell = int(cell.sum())
        if n_cell == 0:
            config = _decode_config(int(z), adjustment, levels_of)
            raise PositivityError(
                f"no patients with {x}={x_level} in adjustment cell "
                f"{config}; the adjusted estimate is undefined")
        for k in range(len(y_levels)):
            out[k] += p_z * float((codes[y][cell] == k).sum()) / n_cell
    return {lv: float(p) for lv, p in zip(y_levels, out)}


def _decode_config(z_idx: int, adjustment, levels_of) -> str:
    parts = []
    for name in reversed(adjustment):
        size = len(levels_of(name))
        parts.append(f"{name}={levels_of(name)[z_idx % size]}")
        z_idx //= size
    return "{" + ", ".join(reversed(parts)) + "}"


# ---------------------------------------------------------------------------
# multicentre test-bed
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MulticentreConfig:
    """Generative settings for the multicentre cohort model.

    The model: a uniform centre, a latent binary frailty, one binary
    severity covariate influenced by frailty, treatment driven by centre
    and severity, outcome driven by treatment, severity, frailty and
    (optionally) the centre directly.  All response probabilities are
    linear in their inputs, so linear-link regressions downstream are
    correctly specified.
    """

    n_centres: int = 18
    n_per_centre: int = 1000
    propensity_shifts: tuple | None = None  # default: even spread +-0.12
    tau: float = 0.15
    direct_outcome_shifts: tuple | None = None  # default: all zero
    base_treatment: float = 0.45
    base_outcome: float = 0.35
    p_frail: float = 0.3
    p_severe_given_frail: tuple = (0.35, 0.65)
    severity_effect_treatment: float = 0.06
    severity_effect_outcome: float = 0.08
    frailty_effect_outcome: float = 0.05

    def shifts(self) -> np.ndarray:
        if self.propensity_shifts is None:
            return np.linspace(-0.12, 0.12, self.n_centres)
        out = np.asarray(self.propensity_shifts, dtype=float)
        if out.shape != (self.n_centres,):
            raise ScmError(
                f"propensity_shifts must have length {self.n_centres}")
        return out

    def outcome_shifts(self) -> np.ndarray:
        if self.direct_outcome_shifts is None:
            return np.zeros(self.n_centres)
        out = np.asarray(self.direct_outcome_shifts, dtype=float)
        if out.shape != (self.n_centres,):
            raise ScmError(
                f"direct_outcome_shifts must have length {self.n_centres}")
        return out

    def __post_init__(self):
        if self.n_centres < 2:
            raise ScmError("need at least 2 centres")
        if self.n_per_centre < 1:
            raise ScmError("n_per_centre must be >= 1")
        shifts = self.shifts()
        p_t = self.base_treatment + shifts[:, None] + np.array(
            [0.0, self.severity_effect_treatment])
        if (p_t <= 0).any() or (p_t >= 1).any():
            raise ScmError("treatment probabilities leave (0, 1)")
        extremes = (self.outcome_shifts()[:, None, None, None]
                    + self.tau * np.array([0.0, 1.0])[:, None, None]
                    + self.severity_effect_outcome
                    * np.array([0.0, 1.0])[:, None]
                    + self.frailty_effect_outcome * np.array([0.0, 1.0]))
        p_y = self.base_outcome + extremes
        if (p_y <= 0).any() or (p_y >= 1).any():
            raise ScmError("outcome probabilities leave (0, 1)")
        if not 0.0 < self.p_frail < 1.0:
            raise ScmError("p_frail must lie in (0, 1)")
        for p in self.p_severe_given_frail:
            if not 0.0 < p < 1.0:
                raise ScmError("p_severe_given_frail must lie in (0, 1)")


def _centre_levels(k: int) -> tuple:
    return tuple(f"c{i + 1:02d}" for i in range(k))


def build_multicentre_scm(config: MulticentreConfig) -> Scm:
    """The Scm behind :func:`generate_multicentre`, for exact oracles."""
    k = config.n_centres
    shifts = config.shifts()
    out_shifts = config.outcome_shifts()
    has_direct = bool(np.any(out_shifts != 0.0))

    lines = ["node centre;", "node frail;",
             "frail -> severity;",
             "centre -> treated;", "severity -> treated;",
             "treated -> event;", "severity -> event;",
             "frail -> event;"]
    if has_direct:
        lines.append("centre -> event;")
    dag = parse_dag("\n".join(lines))

    binary = ("0", "1")
    nodes = {
        "centre": NodeModel(_centre_levels(k),
                            np.full((1, k), 1.0 / k)),
        "frail": NodeModel(binary, np.array([[1.0 - config.p_frail,
                                              config.p_frail]])),
        "severity": NodeModel(binary, np.array(
            [[1.0 - p, p] for p in config.p_severe_given_frail])),
    }

    # treated | (centre, severity) -- parents sorted: centre, severity
    rows = []
    for c in range(k):
        for s in (0, 1):
            p = (config.base_treatment + shifts[c]
                 + config.severity_effect_treatment * s)
            rows.append([1.0 - p, p])
    nodes["treated"] = NodeModel(binary, np.array(rows))

    # event | sorted parents
    parents = dag.parents("event")
    rows = []
    for cfg in np.ndindex(*[k if p == "centre" else 2 for p in parents]):
        assign = dict(zip(parents, cfg))
        p = (config.base_outcome
             + config.tau * assign["treated"]
             + config.severity_effect_outcome * assign["severity"]
             + config.frailty_effect_outcome * assign["frail"])
        if has_direct:
            p += out_shifts[assign["centre"]]
        rows.append([1.0 - p, p])
    nodes["event"] = NodeModel(binary, np.array(rows))
    return Scm(dag, nodes)


def generate_multicentre(config: MulticentreConfig,
                         seed: int = DEFAULT_SEED) -> PatientTable:
    """Sample a role-tagged multicentre cohort; the latent stays hidden.

    Centre sizes are fixed at ``n_per_centre`` exactly (the centre node is
    intervened per block rather than sampled), mirroring how a registry
    reports fixed per-centre enrolment.
    """
    scm = build_multicentre_scm(config)
    levels = _centre_levels(config.n_centres)
    blocks = []
    for i, level in enumerate(levels):
        block = sample(scm, config.n_per_centre, seed=(seed, i),
                       do=InterventionSpec({"centre": level}))
        blocks.append(block)

    n = config.n_per_centre * config.n_centres
    schema = Schema([
        ColumnSpec("pid", "id", role="id"),
        ColumnSpec("treated", "binary", role="treatment"),
        ColumnSpec("event", "binary", role="outcome"),
        ColumnSpec("centre", "categorical", role="centre", levels=levels),
        ColumnSpec("severity", "binary", role="covariate"),
    ])
    data = {
        "pid": (np.array([f"s{i:08d}" for i in range(n)], dtype=object),
                None),
        "treated": (np.concatenate(
            [b.column("treated").values for b in blocks]).astype(int), None),
        "event": (np.concatenate(
            [b.column("event").values for b in blocks]).astype(int), None),
        "centre": (np.concatenate(
            [b.column("centre").values for b in blocks]).astype(np.int64),
            None),
        "severity": (np.concatenate(
            [b.column("severity").values for b in blocks]).astype(int),
            None),
    }
    return PatientTable.from_columns(schema, data)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def scm_to_json(scm: Scm) -> str:
    """JSON document: embedded graph text plus per-node levels and CPT."""
    doc = {
        "dag": serialize_dag(scm.dag),
        "nodes": {
            name: {"levels": list(model.levels),
                   "cpt": [[float(v) for v in row] for row in model.cpt]}
            for name, model in sorted(scm.nodes.items())
        },
    }
    return json.dumps(doc, indent=2)


def scm_from_json(source) -> Scm:
    """Inverse of :func:`scm_to_json`; accepts a JSON string or a dict."""
    if isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as err:
            raise ScmError(f"invalid JSON: {err}") from err
    elif isinstance(source, dict):
        doc = source
    else:
        raise ScmError(f"expected JSON text or dict, got "
                       f"{type(source).__name__}")
    if not isinstance(doc, dict) or "dag" not in doc or "nodes" not in doc:
        raise ScmError("document must contain 'dag' and 'nodes'")
    dag = parse_dag(doc["dag"])
    nodes = {}
    for name, entry in doc["nodes"].items():
        try:
            levels = tuple(str(v) for v in entry["levels"])
            cpt = np.asarray(entry["cpt"], dtype=float)
        except (KeyError, TypeError, ValueError) as err:
            raise ScmError(f"node {name!r}: malformed entry ({err})") \
                from err
        if cpt.ndim != 2:
            raise ScmError(f"node {name!r}: CPT must be a 2-d array")
        nodes[name] = NodeModel(levels, cpt)
    return Scm(dag, nodes)


def load_scm(source) -> Scm:
    """Load from a file path, JSON text, or an already-parsed dict."""
    if isinstance(source, dict):
        return scm_from_json(source)
    text = str(source)
    looks_like_path = ("{" not in text and "\n" not in text
                       and (text.endswith(".json") or os.path.sep in text))
    if looks_like_path:
        with open(text, "r", encoding="utf-8") as fh:
            return scm_from_json(fh.read())
    return scm_from_json(text)
