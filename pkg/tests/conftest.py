"""Shared fixtures: reference graphs used across the suite.

``EVD_DSL`` describes an external-drain study where admission to a
specialised centre acts as a selection step: every analysed patient has
been admitted, so Admitted and Centre are conditioned by design.
``EVD_HTN_DSL`` is the same study with hypertension and an unmeasured
frailty factor U added.  ``DEMO_DSL`` is a small six-node teaching graph.
"""
import pytest

from studypilot.dag import parse_dag
from studypilot.table import Schema, ColumnSpec

DEMO_DSL = """
A -> D; B -> D;
D -> O; B -> O;
U -> A; U -> O;
B -> C; A -> C;
"""

EVD_DSL = """
EVD -> Outcome;
Centre -> Outcome;
Centre -> EVD;
Centre -> Admitted;
Smoking -> Admitted;
Smoking -> Outcome;
Admitted -> Outcome;
Admitted -> EVD;
"""

EVD_HTN_DSL = """
EVD -> Outcome;
Centre -> Outcome;
U -> Hypertension;
U -> Outcome;
Centre -> EVD;
Centre -> Admitted;
Smoking -> Admitted;
Smoking -> Outcome;
Admitted -> Outcome;
Admitted -> EVD;
Hypertension -> EVD;
Smoking -> Hypertension;
Hypertension -> Admitted;
"""


@pytest.fixture(scope="session")
def demo_dag():
    return parse_dag(DEMO_DSL)


@pytest.fixture(scope="session")
def evd_dag():
    return parse_dag(EVD_DSL)


@pytest.fixture(scope="session")
def evd_htn_dag():
    return parse_dag(EVD_HTN_DSL)


def make_clinical_schema(centres=("c01", "c02", "c03")):
    """Schema used by most table-level tests: one admitted aSAH cohort."""
    return Schema([
        ColumnSpec("pid", "id", role="id"),
        ColumnSpec("evd", "binary", role="treatment"),
        ColumnSpec("outcome", "binary", role="outcome"),
        ColumnSpec("centre", "categorical", role="centre", levels=tuple(centres)),
        ColumnSpec("wfns", "ordered", role="covariate",
                   levels=("1", "2", "3", "4", "5", "6")),
        ColumnSpec("rebleed", "binary", role="covariate"),
        ColumnSpec("ab_ratio", "real", role="covariate"),
        ColumnSpec("age", "real", role="covariate"),
        ColumnSpec("smoker", "binary", role="covariate"),
    ])


@pytest.fixture()
def clinical_schema():
    return make_clinical_schema()


def make_demo_scm():
    """Confounded triangle Z -> X, Z -> Y, X -> Y with fixed tables."""
    import numpy as np
    from studypilot.scm import NodeModel, Scm

    dag = parse_dag("Z -> X;\nZ -> Y;\nX -> Y;")
    binary = ("0", "1")
    return Scm(dag, {
        "Z": NodeModel(binary, np.array([[0.5, 0.5]])),
        "X": NodeModel(binary, np.array([[0.7, 0.3], [0.35, 0.65]])),
        "Y": NodeModel(binary, np.array([
            [0.9, 0.1], [0.6, 0.4], [0.5, 0.5], [0.2, 0.8]])),
    })


def make_planted_cohort():
    """147 patients whose age geometry pins the matching outcome.

    Control ages carpet [35, 71]; 34 treated sit inside that range and 6
    treated far above it.  Any monotone propensity fitted on age alone
    reproduces the same pair structure: 34 pairs, 68 matched patients,
    ratio 68/147.
    """
    import numpy as np
    from studypilot.table import PatientTable

    ages = np.concatenate([
        np.linspace(40.0, 69.0, 34),   # matchable treated
        np.linspace(85.0, 90.0, 6),    # isolated treated
        np.linspace(35.0, 71.0, 107),  # controls
    ])
    evd = np.concatenate([np.ones(40, dtype=int), np.zeros(107, dtype=int)])
    n = 147
    rng = np.random.default_rng(77)
    data = {
        "pid": (np.array([f"t{i:02d}" for i in range(40)]
                         + [f"c{i:03d}" for i in range(107)], dtype=object),
                None),
        "evd": (evd, None),
        "outcome": (rng.integers(0, 2, n), None),
        "centre": (np.arange(n) % 3, None),
        "wfns": (rng.integers(0, 6, n), None),
        "rebleed": (rng.integers(0, 2, n), None),
        "ab_ratio": (rng.uniform(0.05, 0.45, n), None),
        "age": (ages, None),
        "smoker": (rng.integers(0, 2, n), None),
    }
    return PatientTable.from_columns(make_clinical_schema(), data)


@pytest.fixture(scope="session")
def study_files(tmp_path_factory):
    """Input files for CLI and service tests, written once per session."""
    import json
    from oracles import make_multicentre_table
    from studypilot.scm import scm_to_json

    root = tmp_path_factory.mktemp("study")
    cohort = make_planted_cohort()
    (root / "cohort.csv").write_text(cohort.to_csv())
    (root / "schema.json").write_text(json.dumps(cohort.schema.to_dict()))

    mtable, _, _ = make_multicentre_table(140, n_per_centre=60, tau=0.15)
    (root / "monitor.csv").write_text(mtable.to_csv())
    (root / "monitor_schema.json").write_text(
        json.dumps(mtable.schema.to_dict()))

    (root / "graph.dag").write_text(EVD_HTN_DSL)
    (root / "model.json").write_text(scm_to_json(make_demo_scm()))
    return {
        "data": str(root / "cohort.csv"),
        "schema": str(root / "schema.json"),
        "monitor_data": str(root / "monitor.csv"),
        "monitor_schema": str(root / "monitor_schema.json"),
        "dag": str(root / "graph.dag"),
        "scm": str(root / "model.json"),
    }
