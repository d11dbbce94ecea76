"""Analysis workflows shared by the command line and the HTTP service.

Each ``run_*`` function takes already-loaded inputs plus request
parameters and returns ``(payload, artifacts)``: the payload is the
JSON-serializable result (what the service responds with and the CLI
writes as ``<command>.json``), artifacts are extra text files (CSV plot
data, pair lists) the CLI writes next to it.  Keeping one code path for
both surfaces is what makes their outputs byte-identical.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dag import Dag, find_adjustment_sets, parse_dag, serialize_dag
from .defaults import DEFAULT_SEED
from .estimators import build_design, fit_logit_map, predict_propensity, \
    forest_export
from .filters import apply_stratum, parse_filter
from .matching import MatchConfig, post_match_balance, \
    rct_equivalent_sample_size, stochastic_match
from .monitoring import egger_iv, fit_centre_effects, scatter_export
from .positivity import overlap_report
from .scm import InterventionSpec, Scm, load_scm, sample
from .table import PatientTable, Schema, ingest_csv, load_schema

__all__ = [
    "WorkflowError",
    "StudyBundle",
    "load_bundle",
    "run_identify",
    "run_positivity",
    "run_match",
    "run_monitor",
    "run_simulate",
    "schema_payload",
    "dag_payload",
    "to_json_bytes",
]


class WorkflowError(ValueError):
    """A request that cannot be served; carries optional detail payload."""

    def __init__(self, message: str, details: dict | None = None):
        super().__init__(message)
        self.details = details or {}


@dataclass
class StudyBundle:
    """The immutable inputs one session works against."""

    table: PatientTable | None = None
    dag: Dag | None = None
    scm: Scm | None = None

    def require_table(self) -> PatientTable:
        if self.table is None:
            raise WorkflowError("no dataset loaded (need --data/--schema)")
        return self.table

    def require_dag(self) -> Dag:
        if self.dag is None:
            raise WorkflowError("no graph loaded (need --dag)")
        return self.dag

    def require_scm(self) -> Scm:
        if self.scm is None:
            raise WorkflowError("no simulation model loaded (need --scm)")
        return self.scm


def load_bundle(data: str | None = None, schema: str | None = None,
                dag: str | None = None, scm: str | None = None
                ) -> StudyBundle:
    """Read and parse the analysis inputs from file paths."""
    table = None
    if data is not None:
        if schema is None:
            raise WorkflowError("--data requires --schema")
        schema_obj = load_schema(schema)
        with open(data, "r", encoding="utf-8") as fh:
            table, _ = ingest_csv(fh.read(), schema_obj)
    dag_obj = None
    if dag is not None:
        with open(dag, "r", encoding="utf-8") as fh:
            dag_obj = parse_dag(fh.read())
    scm_obj = load_scm(scm) if scm is not None else None
    return StudyBundle(table=table, dag=dag_obj, scm=scm_obj)


def _json_safe(value):
    """Recursively replace non-finite floats with None for strict JSON."""
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.floating, float)):
        out = float(value)
        return out if math.isfinite(out) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    return value


def to_json_bytes(payload: dict) -> bytes:
    """Canonical JSON rendering used by both the CLI and the service."""
    text = json.dumps(_json_safe(payload), indent=2, sort_keys=True,
                      allow_nan=False)
    return (text + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# identify
# ---------------------------------------------------------------------------

def run_identify(dag: Dag, x: str, y: str, forced=(), latent=(),
                 max_candidates: int = 20):
    """Adjustment-set search over the observed part of the graph."""
    latent = list(latent)
    for v in latent:
        if v not in dag.nodes:
            raise WorkflowError(f"latent node {v!r} is not in the graph")
    if x in latent or y in latent:
        raise WorkflowError("exposure and outcome cannot be latent")
    observed = [v for v in dag.nodes if v not in set(latent)]
    result = find_adjustment_sets(dag, x, y, observed, forced=forced,
                                  max_candidates=max_candidates)
    payload = result.to_dict()
    payload["latent"] = sorted(latent)
    return payload, {}


def identify_text(payload: dict) -> str:
    """Human rendering of an identify payload."""
    lines = [f"status: {payload['status']}",
             f"effect: {payload['x']} -> {payload['y']}"]
    if payload.get("latent"):
        lines.append("latent: " + ", ".join(payload["latent"]))
    if payload["status"] == "Identified":
        lines.append("minimal adjustment sets:")
        for s in payload["admissible_sets"]:
            lines.append("  {" + ", ".join(s) + "}")
    else:
        lines.append("open non-causal paths (no admissible set):")
        for p in payload["witness_paths"]:
            lines.append("  " + p["text"])
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# shared propensity plumbing
# ---------------------------------------------------------------------------

def _covariate_names(table: PatientTable, covariates=None) -> list:
    if covariates is None:
        names = [spec.name for spec in table.schema
                 if spec.role == "covariate"]
        if not names:
            raise WorkflowError("schema declares no covariate columns")
        return names
    names = list(covariates)
    for name in names:
        if name not in table.schema:
            raise WorkflowError(f"unknown covariate column {name!r}")
    return names


def _stratum_table(table: PatientTable, filter_text: str | None):
    """Apply the filter (when given); refuse an empty stratum."""
    if filter_text is None:
        return table, None
    filt = parse_filter(filter_text, table.schema)
    stratum = apply_stratum(table, filt)
    if stratum.table.n_rows == 0:
        raise WorkflowError(
            f"filter {filter_text!r} matches no patients",
            details=stratum.to_dict())
    return stratum.table, stratum


def _propensity(table: PatientTable, treatment: str | None,
                covariates: list):
    """Complete-case propensity fit; returns everything downstream needs."""
    t_name = treatment or table.schema.single("treatment").name
    used = covariates + [t_name]
    complete, n_dropped = table.complete_case(used)
    if complete.n_rows == 0:
        raise WorkflowError("no complete-case patients to fit on")
    x, info = build_design(complete, covariates)
    arm = complete.column(t_name).values.astype(int)
    fit = fit_logit_map(x, arm.astype(float), labels=info.labels,
                        design=info)
    scores = predict_propensity(fit, x)
    return complete, n_dropped, arm, scores, fit


# ---------------------------------------------------------------------------
# positivity
# ---------------------------------------------------------------------------

def run_positivity(table: PatientTable, filter_text: str | None = None,
                   treatment: str | None = None, covariates=None,
                   thresholds: dict | None = None, grid_size: int = 512):
    """Propensity overlap diagnosis on a stratum."""
    covariates = _covariate_names(table, covariates)
    working, stratum = _stratum_table(table, filter_text)
    complete, n_dropped, arm, scores, fit = _propensity(
        working, treatment, covariates)
    treated, control = scores[arm == 1], scores[arm == 0]
    if treated.size < 2 or control.size < 2:
        raise WorkflowError(
            f"need at least 2 patients per arm for density estimates "
            f"(treated {treated.size}, control {control.size})")
    report = overlap_report(treated, control, grid_size=grid_size,
                            thresholds=thresholds)
    payload = {
        "filter": filter_text,
        "stratum": None if stratum is None else stratum.to_dict(),
        "n_complete": complete.n_rows,
        "n_dropped_incomplete": n_dropped,
        "covariates": covariates,
        "propensity_fit": fit.to_dict(),
        "overlap": report.to_dict(),
        "plot": {
            "score": [float(v) for v in report.treated.grid],
            "density_treated": [float(v) for v in report.treated.density],
            "density_control": [float(v) for v in report.control.density],
        },
    }
    return payload, {"positivity_plot.csv": report.plot_csv()}


def positivity_text(payload: dict) -> str:
    rep = payload["overlap"]
    lines = [f"verdict: {rep['verdict']}",
             f"overlap coefficient: {rep['overlap_coefficient']:.3f}",
             f"patients analysed: {payload['n_complete']}"]
    for group in ("treated", "control"):
        lines.append(f"mass outside common support ({group}): "
                     f"{rep['mass_outside'][group]:.3f}")
    if payload["stratum"] is not None:
        s = payload["stratum"]
        lines.append(f"stratum: {s['n_matched']} of {s['n_input']} "
                     f"patients matched the filter")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# match
# ---------------------------------------------------------------------------

def run_match(table: PatientTable, filter_text: str | None = None,
              treatment: str | None = None, covariates=None,
              rct_n: int | None = None, caliper: float | None = None,
              ratio: int = 1, with_replacement: bool = False,
              seed: int = DEFAULT_SEED):
    """Propensity matching plus balance and trial-planning numbers."""
    covariates = _covariate_names(table, covariates)
    working, stratum = _stratum_table(table, filter_text)
    complete, n_dropped, arm, scores, fit = _propensity(
        working, treatment, covariates)
    config = MatchConfig(ratio=ratio, caliper=caliper,
                         with_replacement=with_replacement, seed=seed)
    result = stochastic_match(complete.ids, scores, arm, config)
    balance = post_match_balance(complete, result, covariates,
                                 scores=scores)

    rct = None
    if rct_n is not None:
        shown = result.display_ratio
        if shown <= 0.0:
            raise WorkflowError(
                "sampling ratio is 0 in this stratum; the effect is not "
                "probeable by matching here")
        rct = {
            "rct_n": rct_n,
            "sampling_ratio_used": shown,
            "equivalent_cohort_size": rct_equivalent_sample_size(rct_n,
                                                                 shown),
        }

    payload = {
        "filter": filter_text,
        "stratum": None if stratum is None else stratum.to_dict(),
        "n_dropped_incomplete": n_dropped,
        "covariates": covariates,
        "propensity_fit": fit.to_dict(),
        "match": result.to_dict(),
        "balance": balance.to_dict(),
        "rct": rct,
    }
    return payload, {"pairs.csv": result.pairs_csv()}


def match_text(payload: dict) -> str:
    m = payload["match"]
    lines = [f"pairs: {m['n_pairs']}",
             f"matched patients: {m['n_matched_patients']} "
             f"of {m['n_stratum']}",
             f"sampling ratio: {m['sampling_ratio_display']:.2f}",
             f"caliper (logit): {m['caliper']:.4f}",
             f"seed: {m['seed']}"]
    if payload["rct"] is not None:
        r = payload["rct"]
        lines.append(
            f"equivalent cohort for an RCT of {r['rct_n']}: "
            f"{r['equivalent_cohort_size']} "
            f"(at ratio {r['sampling_ratio_used']:.2f})")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# monitor
# ---------------------------------------------------------------------------

def run_monitor(table: PatientTable, covariates=None,
                centre: str | None = None, treatment: str | None = None,
                outcome: str | None = None, reference: str | None = None,
                weighting: str = "beta", anonymize: bool = False,
                min_per_centre: int = 10):
    """Centre effect pairs, the Egger line, and the plot payloads."""
    covariates = _covariate_names(table, covariates)
    effects, fit_t, fit_o = fit_centre_effects(
        table, covariates, centre=centre, treatment=treatment,
        outcome=outcome, reference=reference,
        min_per_centre=min_per_centre, return_fits=True)
    fit = egger_iv(effects, weighting=weighting)
    scatter = scatter_export(effects, fit, anonymize=anonymize)
    payload = {
        "covariates": covariates,
        "effects": effects.to_dict(),
        "egger": fit.to_dict(),
        "scatter": scatter,
        "forest": {
            "treatment_model": forest_export(fit_t),
            "outcome_model": forest_export(fit_o),
        },
    }
    return payload, {"centre_effects.csv": effects.csv_export()}


def monitor_text(payload: dict) -> str:
    egger = payload["egger"]
    lines = [
        f"centres: {egger['n_centres']} effect pairs "
        f"(reference {payload['effects']['reference']})",
        f"egger slope: {egger['slope']:.4f} (se {egger['se_slope']:.4f})",
        f"egger intercept: {egger['intercept']:.4f} "
        f"(se {egger['se_intercept']:.4f})",
        f"weighting: {egger['weighting']}",
        f"caveat: {egger['caveat']}",
    ]
    small = payload["effects"]["small_centres"]
    if small:
        lines.append("small centres: " + ", ".join(small))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def run_simulate(scm: Scm, n: int, seed: int = DEFAULT_SEED,
                 do: dict | None = None):
    """Draw a dataset from the model, optionally under intervention."""
    if n < 1:
        raise WorkflowError(f"n must be >= 1, got {n}")
    spec = InterventionSpec(dict(do)) if do else None
    table = sample(scm, n, seed=seed, do=spec)
    csv_text = table.to_csv()
    payload = {
        "n": n,
        "seed": seed,
        "do": dict(do) if do else {},
        "columns": list(table.schema.names),
        "csv": csv_text,
    }
    return payload, {"dataset.csv": csv_text}


def simulate_text(payload: dict) -> str:
    do = payload["do"]
    pinned = (", ".join(f"{k}={v}" for k, v in sorted(do.items()))
              if do else "none")
    return "\n".join([
        f"rows: {payload['n']}",
        f"seed: {payload['seed']}",
        f"interventions: {pinned}",
        f"columns: {', '.join(payload['columns'])}",
    ])


# ---------------------------------------------------------------------------
# static payloads
# ---------------------------------------------------------------------------

def schema_payload(schema: Schema) -> dict:
    return schema.to_dict()


def dag_payload(dag: Dag) -> dict:
    return {
        "text": serialize_dag(dag),
        "nodes": list(dag.nodes),
        "edges": [[a, b] for a, b in dag.edges],
    }
