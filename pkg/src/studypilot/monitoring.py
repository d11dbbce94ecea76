"""Multicentre monitoring via centre fixed effects and the Egger IV line.

Centres that differ only in their willingness to treat act like a natural
randomiser: a centre's effect on treatment propensity (alpha) and its
effect on the outcome (beta) should line up along a slope equal to the
treatment effect, provided centres influence the outcome only through
treatment.  Both centre models use a linear link deliberately, so the
coefficients stay collapsible across centres.

The Egger regression of beta on alpha keeps an intercept: a nonzero
intercept flags centres influencing outcomes away from the treatment
pathway, which is the standard MR-Egger diagnostic.
"""
from __future__ import annotations

import csv
import hashlib
import io
import warnings
from dataclasses import dataclass

import numpy as np

from .estimators import build_design, fit_linear_wls
from .table import PatientTable

__all__ = [
    "MonitoringError",
    "CentreEffects",
    "EggerFit",
    "fit_centre_effects",
    "egger_iv",
    "scatter_export",
]

DILUTION_CAVEAT = ("alpha estimates carry sampling error that is not "
                   "corrected; the slope is attenuated toward zero "
                   "(regression dilution)")


class MonitoringError(ValueError):
    """Invalid monitoring inputs."""


@dataclass(frozen=True)
class CentreEffects:
    """Per-centre effect pairs from the two reduced-form models.

    ``alpha`` is each non-reference centre's shift in treatment propensity,
    ``beta`` its shift in outcome probability, both on the probability
    scale (linear link).  The reference centre is pinned at (0, 0) by
    construction and is not listed.
    """

    centres: tuple
    reference: str
    alpha: np.ndarray
    se_alpha: np.ndarray
    beta: np.ndarray
    se_beta: np.ndarray
    counts: dict
    small_centres: tuple
    covariates: tuple
    n_obs: int
    n_dropped: int

    def __len__(self) -> int:
        return len(self.centres)

    def to_dict(self) -> dict:
        return {
            "reference": self.reference,
            "centres": [
                {"centre": c,
                 "alpha": float(a), "se_alpha": float(sa),
                 "beta": float(b), "se_beta": float(sb),
                 "n": self.counts[c]}
                for c, a, sa, b, sb in zip(self.centres, self.alpha,
                                           self.se_alpha, self.beta,
                                           self.se_beta)
            ],
            "small_centres": list(self.small_centres),
            "covariates": list(self.covariates),
            "n_obs": self.n_obs,
            "n_dropped": self.n_dropped,
        }

    def csv_export(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["centre", "alpha", "se_alpha", "beta", "se_beta"])
        for c, a, sa, b, sb in zip(self.centres, self.alpha, self.se_alpha,
                                   self.beta, self.se_beta):
            w.writerow([c, repr(float(a)), repr(float(sa)),
                        repr(float(b)), repr(float(sb))])
        return buf.getvalue()


@dataclass(frozen=True)
class EggerFit:
    """Precision-weighted line through the (alpha, beta) cloud."""

    slope: float
    intercept: float
    se_slope: float
    se_intercept: float
    weights: tuple
    weighting: str
    n_centres: int
    caveat: str = DILUTION_CAVEAT

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "se_slope": self.se_slope,
            "se_intercept": self.se_intercept,
            "weights": list(self.weights),
            "weighting": self.weighting,
            "n_centres": self.n_centres,
            "caveat": self.caveat,
        }


def fit_centre_effects(table: PatientTable, covariates,
                       centre: str | None = None,
                       treatment: str | None = None,
                       outcome: str | None = None,
                       reference: str | None = None,
                       min_per_centre: int = 10,
                       return_fits: bool = False):
    """Fit the two linear-link centre models and read off (alpha, beta).

    Treatment and outcome are each regressed (unweighted least squares,
    linear link) on the covariates plus one-hot centre indicators with a
    common reference; the centre coefficients and their standard errors
    form the effect pairs.  Centres smaller than ``min_per_centre`` are
    reported in a warning, not refused.  With ``return_fits`` the two
    underlying regression results come back alongside the effect pairs.
    """
    centre = centre or table.schema.single("centre").name
    treatment = treatment or table.schema.single("treatment").name
    outcome = outcome or table.schema.single("outcome").name
    covariates = tuple(covariates)
    for name in (centre, treatment, outcome):
        if name in covariates:
            raise MonitoringError(
                f"column {name!r} cannot appear among the covariates")

    levels = table.schema[centre].levels
    if len(levels) < 3:
        raise MonitoringError(
            f"need at least 3 centres, got {len(levels)}")
    reference = reference if reference is not None else levels[0]
    if reference not in levels:
        raise MonitoringError(f"unknown reference centre {reference!r}")

    used = list(covariates) + [centre, treatment, outcome]
    complete, n_dropped = table.complete_case(used)

    centre_codes = complete.column(centre).values
    counts = {lv: int(np.sum(centre_codes == i))
              for i, lv in enumerate(levels)}
    small = tuple(lv for lv in levels if counts[lv] < min_per_centre)
    if small:
        warnings.warn(
            f"centres below the {min_per_centre}-patient floor: "
            f"{', '.join(small)}", UserWarning, stacklevel=2)

    x, info = build_design(complete, list(covariates) + [centre],
                           references={centre: reference})
    y_t = complete.column(treatment).as_numeric()
    y_o = complete.column(outcome).as_numeric()
    fit_t = fit_linear_wls(x, y_t, labels=info.labels, design=info)
    fit_o = fit_linear_wls(x, y_o, labels=info.labels, design=info)

    others = tuple(lv for lv in levels if lv != reference)
    pos = {lab: i for i, lab in enumerate(info.labels)}
    idx = [pos[f"{centre}={lv}"] for lv in others]
    effects = CentreEffects(
        centres=others,
        reference=reference,
        alpha=fit_t.coefficients[idx].copy(),
        se_alpha=fit_t.se[idx].copy(),
        beta=fit_o.coefficients[idx].copy(),
        se_beta=fit_o.se[idx].copy(),
        counts=counts,
        small_centres=small,
        covariates=covariates,
        n_obs=complete.n_rows,
        n_dropped=n_dropped,
    )
    if return_fits:
        return effects, fit_t, fit_o
    return effects


def egger_iv(effects: CentreEffects, weighting: str = "beta") -> EggerFit:
    """Weighted least squares of beta on alpha, intercept included.

    The slope is the effect estimate; the intercept is the pleiotropy
    diagnostic.  Default weights are the outcome-side precisions
    ``1 / se_beta**2``; ``weighting`` may instead name ``"alpha"`` or
    ``"equal"``.
    """
    k = len(effects)
    if k < 3:
        raise MonitoringError(
            f"Egger regression needs at least 3 centre pairs, got {k}")
    alpha = np.asarray(effects.alpha, dtype=float)
    beta = np.asarray(effects.beta, dtype=float)
    if float(np.ptp(alpha)) == 0.0:
        raise MonitoringError(
            "all centre propensity effects are identical: "
            "no instrument variation to regress on")

    if weighting == "beta":
        w = 1.0 / np.asarray(effects.se_beta, dtype=float) ** 2
    elif weighting == "alpha":
        w = 1.0 / np.asarray(effects.se_alpha, dtype=float) ** 2
    elif weighting == "equal":
        w = np.ones(k)
    else:
        raise MonitoringError(
            f"unknown weighting {weighting!r} "
            f"(expected 'beta', 'alpha' or 'equal')")

    x = np.column_stack([np.ones(k), alpha])
    fit = fit_linear_wls(x, beta, weights=w,
                         labels=["(intercept)", "alpha"])
    se = fit.se
    return EggerFit(
        slope=float(fit.coefficients[1]),
        intercept=float(fit.coefficients[0]),
        se_slope=float(se[1]),
        se_intercept=float(se[0]),
        weights=tuple(float(v) for v in w),
        weighting=weighting,
        n_centres=k,
    )


def _anon(label: str) -> str:
    return "centre-" + hashlib.sha256(label.encode("utf-8")).hexdigest()[:8]


def scatter_export(effects: CentreEffects, fit: EggerFit,
                   anonymize: bool = False) -> dict:
    """Plot payload: reluctance (−alpha) against outcome shift (beta).

    The fit itself lives on the raw alpha axis; only the display flips the
    sign, so the exported line slope is ``-fit.slope``.  The payload keeps
    the raw triples and weights, so the fit can be recomputed from it.
    """
    labels = [(_anon(c) if anonymize else c) for c in effects.centres]
    points = [
        {"centre": lab,
         "x": float(-a), "y": float(b),
         "se_x": float(sa), "se_y": float(sb),
         "weight": float(w)}
        for lab, a, sa, b, sb, w in zip(labels, effects.alpha,
                                        effects.se_alpha, effects.beta,
                                        effects.se_beta, fit.weights)
    ]
    return {
        "points": points,
        "line": {"slope": -fit.slope, "intercept": fit.intercept,
                 "se_slope": fit.se_slope, "se_intercept": fit.se_intercept},
        "transform": "x = -alpha (reluctance); line slope shown is the "
                     "negated fit slope; the fit is computed on raw alpha",
        "weighting": fit.weighting,
        "reference": effects.reference,
        "n_centres": fit.n_centres,
        "caveat": fit.caveat,
    }
