"""studypilot: feasibility and monitoring tools for observational studies.

The package is organised around the questions a study team asks midway
through an observational treatment study:

* can the effect be identified from what we measure (``dag``),
* do treated and untreated patients overlap (``positivity``),
* what would a matched analysis look like (``matching``),
* do centre differences behave like usable instruments (``monitoring``),
* and does the whole pipeline work on data with a known answer (``scm``).

``cli`` and ``service`` expose the same analyses as a command line tool and
an HTTP service with identical payloads.
"""

__version__ = "0.1.0"

from .dag import (  # noqa: F401
    Dag,
    Path,
    SeparationQuery,
    IdentifyResult,
    IdentifyStatus,
    parse_dag,
    serialize_dag,
    d_separated,
    all_simple_paths,
    backdoor_paths,
    is_backdoor_admissible,
    find_adjustment_sets,
)
from .table import (  # noqa: F401
    ColumnSpec,
    PatientTable,
    Schema,
    ingest_csv,
    load_schema,
)
from .codings import (  # noqa: F401
    GcsAssessment,
    GosCategory,
    WfnsGrade,
    wfns_from_gcs,
)
from .filters import StratumFilter, apply_stratum, parse_filter  # noqa: F401
from .estimators import (  # noqa: F401
    Prior,
    build_design,
    fit_linear_wls,
    fit_logit_map,
    forest_export,
    predict_propensity,
)
from .positivity import overlap_report, positivity_cells  # noqa: F401
from .matching import (  # noqa: F401
    MatchConfig,
    MatchResult,
    post_match_balance,
    rct_equivalent_sample_size,
    stochastic_match,
)
from .monitoring import (  # noqa: F401
    CentreEffects,
    EggerFit,
    egger_iv,
    fit_centre_effects,
    scatter_export,
)
from .scm import (  # noqa: F401
    InterventionSpec,
    MulticentreConfig,
    NodeModel,
    Scm,
    adjusted_distribution,
    exact_interventional,
    generate_multicentre,
    load_scm,
    sample,
    scm_from_json,
    scm_to_json,
)
from .workflows import StudyBundle, load_bundle  # noqa: F401
from .defaults import DEFAULT_SEED  # noqa: F401
