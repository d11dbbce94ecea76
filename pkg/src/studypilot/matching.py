"""Propensity-score matching and the sampling-ratio planning numbers.

The matcher is greedy and stochastic: treated patients are visited in a
seeded random order, and each picks uniformly among the controls whose
logit score lies within a caliper of its own.  Randomising the pick (rather
than taking the nearest neighbour) makes the matched set an honest draw
from the eligible pool, at the price of a seed in the interface.

Two planning quantities are derived from a match: the sampling ratio (the
share of the stratum that ends up in the matched sample) and the size an
equally powered randomised trial would need once that ratio is taken into
account.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import greedy_caliper_match
from .defaults import DEFAULT_SEED
from .table import PatientTable

__all__ = [
    "MatchingError",
    "MatchConfig",
    "MatchedPair",
    "MatchResult",
    "stochastic_match",
    "rct_equivalent_sample_size",
    "post_match_balance",
    "BalanceTable",
]


class MatchingError(ValueError):
    """Invalid matching inputs or configuration."""


@dataclass(frozen=True)
class MatchConfig:
    """Matching policy.

    ``caliper`` is on the logit scale; when None it is computed as
    ``caliper_sd_scale`` times the standard deviation of the logit scores.
    """

    ratio: int = 1
    caliper: float | None = None
    caliper_sd_scale: float = 0.2
    with_replacement: bool = False
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not isinstance(self.ratio, int) or self.ratio < 1:
            raise MatchingError(f"ratio must be a positive integer, "
                                f"got {self.ratio!r}")
        if self.caliper is not None and not self.caliper > 0:
            raise MatchingError(f"caliper must be positive, got {self.caliper!r}")
        if self.caliper_sd_scale <= 0:
            raise MatchingError("caliper_sd_scale must be positive")


@dataclass(frozen=True)
class MatchedPair:
    treated_id: str
    control_id: str
    distance: float  # |logit difference|


@dataclass
class MatchResult:
    """Pairs, leftovers and the derived planning numbers for one match run."""

    pairs: list[MatchedPair]
    unmatched_treated: list[str]
    unmatched_control: list[str]
    caliper: float
    ratio: int
    with_replacement: bool
    seed: int
    n_stratum: int
    n_treated: int
    n_control: int

    @property
    def n_matched_patients(self) -> int:
        """Distinct patients in the matched sample (both arms)."""
        treated = {p.treated_id for p in self.pairs}
        controls = {p.control_id for p in self.pairs}
        return len(treated) + len(controls)

    @property
    def sampling_ratio(self) -> float:
        """Matched patients as a share of the stratum."""
        if self.n_stratum == 0:
            return 0.0
        return self.n_matched_patients / self.n_stratum

    @property
    def display_ratio(self) -> float:
        """The ratio as reported: two decimal places.

        Planning arithmetic (see :func:`rct_equivalent_sample_size`) runs
        on this rounded figure, matching how such ratios are quoted.
        """
        return round(self.sampling_ratio, 2)

    def to_dict(self) -> dict:
        return {
            "n_stratum": self.n_stratum,
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "n_pairs": len(self.pairs),
            "n_matched_patients": self.n_matched_patients,
            "sampling_ratio": self.sampling_ratio,
            "sampling_ratio_display": self.display_ratio,
            "caliper": self.caliper,
            "ratio": self.ratio,
            "with_replacement": self.with_replacement,
            "seed": self.seed,
            "pairs": [{"treated": p.treated_id, "control": p.control_id,
                       "distance": p.distance} for p in self.pairs],
            "unmatched_treated": list(self.unmatched_treated),
            "unmatched_control": list(self.unmatched_control),
        }

    def pairs_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["treated_id", "control_id", "logit_distance"])
        for p in self.pairs:
            w.writerow([p.treated_id, p.control_id, repr(p.distance)])
        return buf.getvalue()


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


def stochastic_match(ids, scores, arm, config: MatchConfig | None = None
                     ) -> MatchResult:
    """Greedy seeded caliper matching of treated to control patients.

    Treated patients are processed in a seeded random permutation; each
    draws up to ``config.ratio`` controls uniformly at random from the
    controls within the caliper (without replacement unless configured
    otherwise).  The same seed always yields the same pairs.
    """
    config = config or MatchConfig()
    ids = np.asarray(ids, dtype=object)
    scores = np.asarray(scores, dtype=float)
    arm = np.asarray(arm)
    if not (ids.shape == scores.shape == arm.shape):
        raise MatchingError("ids, scores and arm must have equal length")
    if not np.isfinite(scores).all():
        raise MatchingError("scores must be finite")
    if (scores <= 0.0).any() or (scores >= 1.0).any():
        raise MatchingError("scores must lie strictly in (0, 1)")
    if not np.isin(arm, (0, 1)).all():
        raise MatchingError("arm must be 0/1")
    t_mask = arm == 1
    n_t, n_c = int(t_mask.sum()), int((~t_mask).sum())
    if n_t == 0 or n_c == 0:
        raise MatchingError(f"both arms must be non-empty "
                            f"(treated {n_t}, control {n_c})")

    logits = _logit(scores)
    if config.caliper is None:
        spread = float(np.std(logits, ddof=1)) if logits.size > 1 else 0.0
        caliper = config.caliper_sd_scale * spread
    else:
        caliper = float(config.caliper)

    t_idx = np.nonzero(t_mask)[0]
    c_idx = np.nonzero(~t_mask)[0]
    t_logits = logits[t_idx]
    c_order = np.argsort(logits[c_idx], kind="stable")
    c_sorted = logits[c_idx][c_order]

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(n_t)
    uniforms = rng.random((n_t, config.ratio))

    pt, pc = greedy_caliper_match(t_logits, c_sorted, order.astype(np.int64),
                                  uniforms, caliper, config.ratio,
                                  config.with_replacement)

    pairs = []
    for a, b in zip(pt, pc):
        ti = t_idx[a]
        ci = c_idx[c_order[b]]
        pairs.append(MatchedPair(str(ids[ti]), str(ids[ci]),
                                 float(abs(logits[ti] - logits[ci]))))
    matched_t = {p.treated_id for p in pairs}
    matched_c = {p.control_id for p in pairs}
    unmatched_t = [str(ids[i]) for i in t_idx if str(ids[i]) not in matched_t]
    unmatched_c = [str(ids[i]) for i in c_idx if str(ids[i]) not in matched_c]
    return MatchResult(pairs=pairs, unmatched_treated=unmatched_t,
                       unmatched_control=unmatched_c, caliper=caliper,
                       ratio=config.ratio,
                       with_replacement=config.with_replacement,
                       seed=config.seed, n_stratum=int(ids.size),
                       n_treated=n_t, n_control=n_c)


def rct_equivalent_sample_size(rct_n: int, sampling_ratio: float) -> int:
    """Observational cohort size needed to retain ``rct_n`` patients.

    When matching keeps only a ``sampling_ratio`` share of the stratum, a
    cohort of ``ceil(rct_n / sampling_ratio)`` patients is needed to end up
    with as many analysable patients as a trial enrolling ``rct_n``.
    """
    if not isinstance(rct_n, (int, np.integer)) or rct_n < 1:
        raise MatchingError(f"rct_n must be a positive integer, got {rct_n!r}")
    if not 0.0 < sampling_ratio <= 1.0:
        raise MatchingError(f"sampling_ratio must lie in (0, 1], "
                            f"got {sampling_ratio!r}")
    return int(math.ceil(rct_n / sampling_ratio))


# ---------------------------------------------------------------------------
# balance
# ---------------------------------------------------------------------------

def _smd(x_t: np.ndarray, x_c: np.ndarray) -> float:
    """Standardised mean difference with a pooled spread denominator."""
    if x_t.size < 2 or x_c.size < 2:
        return float("nan")
    pooled = math.sqrt((float(np.var(x_t, ddof=1))
                        + float(np.var(x_c, ddof=1))) / 2.0)
    diff = float(np.mean(x_t) - np.mean(x_c))
    if pooled == 0.0:
        return 0.0 if diff == 0.0 else float("nan")
    return diff / pooled


@dataclass
class BalanceTable:
    """Covariate balance before and after matching."""

    rows: list = field(default_factory=list)  # {"covariate", "smd_before",
    #                                            "smd_after"}
    n_pairs: int = 0
    post_match_overlap: object = None  # OverlapReport when scores supplied

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "rows": self.rows,
            "post_match_overlap": (None if self.post_match_overlap is None
                                   else self.post_match_overlap.to_dict()),
        }

    def to_text(self) -> str:
        width = max([len("covariate")] + [len(r["covariate"])
                                          for r in self.rows])
        out = [f"{'covariate':<{width}}  {'smd before':>11}  {'smd after':>11}"]
        for r in self.rows:
            after = "--" if r["smd_after"] is None else f"{r['smd_after']:.4f}"
            out.append(f"{r['covariate']:<{width}}  "
                       f"{r['smd_before']:>11.4f}  {after:>11}")
        return "\n".join(out)


def post_match_balance(table: PatientTable, result: MatchResult,
                       covariates, scores=None) -> BalanceTable:
    """Standardised mean differences per covariate, before vs after matching.

    Categorical covariates contribute one indicator row per level.  The
    after column uses the matched sample (controls counted once per pair,
    which matters when matching ran with replacement); it is None when no
    pairs exist.  When per-patient balancing ``scores`` (aligned with the
    table rows) are supplied and the matched sample is big enough, the
    result also carries an overlap report of the post-match scores.
    """
    t_spec = table.schema.single("treatment")
    arm = table.column(t_spec.name).values.astype(int)
    id_of = {str(pid): i for i, pid in enumerate(table.ids)}
    t_rows = [id_of[p.treated_id] for p in result.pairs]
    c_rows = [id_of[p.control_id] for p in result.pairs]
    have_pairs = len(result.pairs) > 0

    rows = []
    for name in covariates:
        col = table.column(name)
        keep = ~col.missing
        if col.spec.ctype == "categorical":
            series = [(f"{name}={lv}", (col.values == i).astype(float))
                      for i, lv in enumerate(col.spec.levels)]
        else:
            series = [(name, col.as_numeric())]
        for label, values in series:
            before = _smd(values[(arm == 1) & keep], values[(arm == 0) & keep])
            after = None
            if have_pairs:
                vt = values[[r for r in t_rows if keep[r]]]
                vc = values[[r for r in c_rows if keep[r]]]
                after = _smd(vt, vc)
            rows.append({"covariate": label,
                         "smd_before": before,
                         "smd_after": after})

    overlap = None
    if scores is not None and have_pairs:
        scores = np.asarray(scores, dtype=float)
        s_t, s_c = scores[t_rows], scores[c_rows]
        if s_t.size >= 2 and s_c.size >= 2:
            from .positivity import overlap_report
            overlap = overlap_report(s_t, s_c)
    return BalanceTable(rows=rows, n_pairs=len(result.pairs),
                        post_match_overlap=overlap)
