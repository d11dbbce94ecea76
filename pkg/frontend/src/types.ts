/** Typed mirrors of the analysis service's JSON payloads.
 *
 * Every interface here matches a response byte-for-byte recorded from the
 * running service; the cockpit renders these values verbatim and performs
 * no statistics of its own.
 */

export interface SchemaColumn {
  name: string;
  type: string;
  role: string;
}

export interface SchemaPayload {
  columns: SchemaColumn[];
}

export interface DagPayload {
  nodes: string[];
  edges: [string, string][];
  text: string;
}

export interface WitnessPath {
  nodes: string[];
  arrows: string[];
  text: string;
}

export interface IdentifyPayload {
  x: string;
  y: string;
  latent: string[];
  forced: string[];
  status: "Identified" | "NotIdentified";
  admissible_sets: string[][];
  witness_paths: WitnessPath[];
}

export interface Coefficient {
  label: string;
  point: number;
  se: number;
  low: number;
  high: number;
}

export interface PropensityFit {
  link: string;
  n_obs: number;
  iterations: number;
  gradient_norm: number;
  coefficients: Coefficient[];
  prior: { intercept_sd: number; coefficient_sd: number };
  flags: Record<string, unknown>;
}

export interface OverlapReport {
  verdict: "Adequate" | "Partial" | "Inadequate";
  overlap_coefficient: number;
  common_support: [number, number][];
  one_sided_regions: [string, number, number][];
  mass_outside: { treated: number; control: number };
  treated: { n: number; bandwidth: number };
  control: { n: number; bandwidth: number };
  thresholds: {
    adequate_overlap: number;
    inadequate_overlap: number;
    tail_mass_limit: number;
    epsilon: number;
  };
}

export interface PositivityPayload {
  covariates: string[];
  filter: string | null;
  stratum: string | null;
  n_complete: number;
  n_dropped_incomplete: number;
  propensity_fit: PropensityFit;
  overlap: OverlapReport;
  plot: {
    score: number[];
    density_treated: number[];
    density_control: number[];
  };
}

export interface MatchedPair {
  treated: string;
  control: string;
  distance: number;
}

export interface BalanceRow {
  covariate: string;
  smd_before: number;
  smd_after: number;
}

export interface MatchPayload {
  covariates: string[];
  filter: string | null;
  stratum: string | null;
  n_dropped_incomplete: number;
  propensity_fit: PropensityFit;
  match: {
    caliper: number;
    ratio: number;
    seed: number;
    with_replacement: boolean;
    n_stratum: number;
    n_treated: number;
    n_control: number;
    n_pairs: number;
    n_matched_patients: number;
    sampling_ratio: number;
    sampling_ratio_display: number;
    pairs: MatchedPair[];
    unmatched_treated: string[];
    unmatched_control: string[];
  };
  balance: {
    n_pairs: number;
    rows: BalanceRow[];
    post_match_overlap: OverlapReport;
  };
  rct: {
    rct_n: number;
    sampling_ratio_used: number;
    equivalent_cohort_size: number;
  };
}

export interface CentreEffect {
  centre: string;
  n: number;
  alpha: number;
  se_alpha: number;
  beta: number;
  se_beta: number;
}

export interface ScatterPoint {
  centre: string;
  x: number;
  y: number;
  se_x: number;
  se_y: number;
  weight: number;
}

export interface ScatterLine {
  slope: number;
  intercept: number;
  se_slope: number;
  se_intercept: number;
}

export interface ForestRow {
  label: string;
  point: number;
  low: number;
  high: number;
  level: number;
}

export interface MonitorPayload {
  covariates: string[];
  effects: {
    reference: string;
    covariates: string[];
    n_obs: number;
    n_dropped: number;
    small_centres: string[];
    centres: CentreEffect[];
  };
  egger: {
    slope: number;
    se_slope: number;
    intercept: number;
    se_intercept: number;
    n_centres: number;
    weighting: string;
    weights: number[];
    caveat: string;
  };
  scatter: {
    points: ScatterPoint[];
    line: ScatterLine;
    n_centres: number;
    reference: string;
    weighting: string;
    transform: string;
    caveat: string;
  };
  forest: {
    outcome_model: ForestRow[];
    treatment_model: ForestRow[];
  };
}

export interface ErrorPayload {
  error: string;
  position?: number;
  details?: Record<string, unknown>;
}

/** Request bodies accepted by the service's POST endpoints. */

export interface IdentifyRequest {
  x: string;
  y: string;
  latent?: string[];
  forced?: string[];
}

export interface PositivityRequest {
  covariates?: string[];
  filter?: string;
  stratum?: string;
}

export interface MatchRequest {
  covariates?: string[];
  filter?: string;
  stratum?: string;
  caliper?: number;
  ratio?: number;
  seed?: number;
  with_replacement?: boolean;
  rct_n?: number;
}

export interface MonitorRequest {
  covariates?: string[];
  reference?: string;
  weighting?: string;
  anonymize?: boolean;
}
