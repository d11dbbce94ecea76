"""Regression machinery: MAP logistic fits, weighted least squares, exports.

Two fitting routines cover every model the toolkit runs:

* :func:`fit_logit_map` -- Bernoulli likelihood with independent Gaussian
  priors on the coefficients, maximised by Newton iterations with
  step-halving.  The prior keeps estimates finite under separated data and
  its scale is recorded on every fit so reports can flag it.
* :func:`fit_linear_wls` -- weighted least squares with an explicit
  rank check that names the collinear columns.

Design matrices standardize continuous covariates and expand categoricals
into one-hot columns against a declared reference level; the encoding is
stored with the fit so new data can be scored consistently.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import qr as _qr
from scipy.special import expit
from scipy.stats import norm as _norm

from .table import PatientTable, SchemaError

__all__ = [
    "EstimationError",
    "ConvergenceError",
    "RankError",
    "Prior",
    "DesignInfo",
    "FitResult",
    "build_design",
    "encode_design",
    "fit_logit_map",
    "fit_linear_wls",
    "predict_propensity",
    "forest_export",
    "logit_penalized_loglik",
    "logit_penalized_gradient",
]

INTERCEPT = "(intercept)"


class EstimationError(ValueError):
    """Base class for estimation failures."""


class ConvergenceError(EstimationError):
    """Optimiser did not reach the gradient tolerance."""


class RankError(EstimationError):
    """Design matrix is rank deficient; names the offending columns."""

    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        super().__init__("design matrix is rank deficient; collinear "
                         f"columns: {', '.join(self.columns)}")


@dataclass(frozen=True)
class Prior:
    """Independent Gaussian prior scales for the logit fit."""

    coefficient_sd: float = 2.5
    intercept_sd: float = 10.0

    def __post_init__(self):
        if not (self.coefficient_sd > 0 and self.intercept_sd > 0):
            raise EstimationError("prior standard deviations must be positive")

    def sd_vector(self, labels: Sequence[str]) -> np.ndarray:
        return np.array([self.intercept_sd if lb == INTERCEPT
                         else self.coefficient_sd for lb in labels])

    def describe(self) -> str:
        return (f"Gaussian, sd {self.coefficient_sd:g} (coefficients), "
                f"{self.intercept_sd:g} (intercept)")


# ---------------------------------------------------------------------------
# design matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignInfo:
    """How table columns map to design-matrix columns.

    ``standardization`` holds (mean, sd) per standardized source column;
    ``references`` the omitted level per categorical column.
    """

    columns: tuple[str, ...]
    labels: tuple[str, ...]
    standardization: dict = field(default_factory=dict)
    references: dict = field(default_factory=dict)


def build_design(table: PatientTable, columns: Sequence[str],
                 references: dict | None = None,
                 standardize: bool = True) -> tuple[np.ndarray, DesignInfo]:
    """Encode ``columns`` of ``table`` into a design matrix with intercept.

    Continuous and ordered columns are standardized to mean zero and unit
    spread (constant columns are left centred with spread 1); binary columns
    enter as 0/1; categorical columns become one-hot indicators for every
    level except the reference (the first declared level unless
    ``references`` overrides it).  Rows must be complete in ``columns``.
    """
    references = dict(references or {})
    blocks: list[np.ndarray] = [np.ones(table.n_rows)]
    labels: list[str] = [INTERCEPT]
    standardization: dict = {}
    used_refs: dict = {}
    for name in columns:
        col = table.column(name)
        if col.missing.any():
            raise EstimationError(
                f"column {name!r} has missing values; restrict to complete "
                "cases before building a design matrix")
        spec = col.spec
        if spec.ctype == "categorical":
            ref = references.get(name, spec.levels[0])
            if ref not in spec.levels:
                raise EstimationError(
                    f"reference level {ref!r} is not a level of {name!r}")
            used_refs[name] = ref
            for i, level in enumerate(spec.levels):
                if level == ref:
                    continue
                blocks.append((col.values == i).astype(float))
                labels.append(f"{name}={level}")
        elif spec.ctype == "binary":
            blocks.append(col.values.astype(float))
            labels.append(name)
        else:
            x = col.as_numeric()
            if standardize:
                mean = float(x.mean())
                sd = float(x.std())
                if sd == 0.0:
                    sd = 1.0
                standardization[name] = (mean, sd)
                x = (x - mean) / sd
            blocks.append(x)
            labels.append(name)
    matrix = np.column_stack(blocks)
    info = DesignInfo(columns=tuple(columns), labels=tuple(labels),
                      standardization=standardization, references=used_refs)
    return matrix, info


def encode_design(info: DesignInfo, table: PatientTable) -> np.ndarray:
    """Encode new rows under a stored :class:`DesignInfo`.

    Standardization constants and reference levels are reused from the
    original fit, so scores are comparable across datasets.
    """
    blocks: list[np.ndarray] = [np.ones(table.n_rows)]
    for name in info.columns:
        col = table.column(name)
        if col.missing.any():
            raise EstimationError(f"column {name!r} has missing values")
        spec = col.spec
        if spec.ctype == "categorical":
            ref = info.references[name]
            for i, level in enumerate(spec.levels):
                if level != ref:
                    blocks.append((col.values == i).astype(float))
        elif spec.ctype == "binary":
            blocks.append(col.values.astype(float))
        else:
            x = col.as_numeric()
            if name in info.standardization:
                mean, sd = info.standardization[name]
                x = (x - mean) / sd
            blocks.append(x)
    matrix = np.column_stack(blocks)
    if matrix.shape[1] != len(info.labels):
        raise EstimationError("table layout does not match the stored design")
    return matrix


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    """Coefficients, covariance and provenance of one regression fit."""

    link: str  # "logit" or "linear"
    labels: tuple[str, ...]
    coefficients: np.ndarray
    covariance: np.ndarray
    n_obs: int
    iterations: int = 0
    gradient_norm: float = 0.0
    prior: Prior | None = None
    design: DesignInfo | None = None
    flags: dict = field(default_factory=dict)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    def interval(self, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
        """Normal-approximation interval at the given coverage level."""
        if not 0.0 < level < 1.0:
            raise EstimationError(f"interval level must be in (0, 1), got {level}")
        z = float(_norm.ppf(0.5 + level / 2.0))
        return self.coefficients - z * self.se, self.coefficients + z * self.se

    def summary(self, level: float = 0.95) -> str:
        """Aligned text table with the fit header.

        The header always states the prior (for logit fits) so a default
        prior is never silent.
        """
        lo, hi = self.interval(level)
        head = [f"{self.link} fit  (n = {self.n_obs}, "
                f"{len(self.labels)} coefficients)"]
        if self.prior is not None:
            head.append(f"prior: {self.prior.describe()}")
        if self.link == "logit":
            head.append(f"converged in {self.iterations} iterations, "
                        f"|grad| = {self.gradient_norm:.2e}")
        for key, value in sorted(self.flags.items()):
            head.append(f"note: {key} = {value}")
        width = max(len(lb) for lb in self.labels)
        pct = f"{level * 100:g}%"
        rows = [f"{'label':<{width}}  {'point':>10}  {'se':>10}  "
                f"{pct + ' low':>10}  {pct + ' high':>10}"]
        for i, lb in enumerate(self.labels):
            rows.append(f"{lb:<{width}}  {self.coefficients[i]:>10.4f}  "
                        f"{self.se[i]:>10.4f}  {lo[i]:>10.4f}  {hi[i]:>10.4f}")
        return "\n".join(head + rows)

    def to_dict(self, level: float = 0.95) -> dict:
        lo, hi = self.interval(level)
        return {
            "link": self.link,
            "n_obs": self.n_obs,
            "prior": None if self.prior is None else {
                "coefficient_sd": self.prior.coefficient_sd,
                "intercept_sd": self.prior.intercept_sd},
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "flags": dict(self.flags),
            "coefficients": [
                {"label": lb, "point": float(self.coefficients[i]),
                 "se": float(self.se[i]),
                 "low": float(lo[i]), "high": float(hi[i])}
                for i, lb in enumerate(self.labels)],
        }


# ---------------------------------------------------------------------------
# logit MAP
# ---------------------------------------------------------------------------

def logit_penalized_loglik(x: np.ndarray, y: np.ndarray, beta: np.ndarray,
                           prior_sds: np.ndarray) -> float:
    """Bernoulli log-likelihood plus independent Gaussian log-priors."""
    eta = x @ beta
    ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
    return ll - float(np.sum(beta ** 2 / (2.0 * prior_sds ** 2)))


def logit_penalized_gradient(x: np.ndarray, y: np.ndarray, beta: np.ndarray,
                             prior_sds: np.ndarray) -> np.ndarray:
    """Analytic gradient of :func:`logit_penalized_loglik`."""
    p = expit(x @ beta)
    return x.T @ (y - p) - beta / prior_sds ** 2


def _validate_xy(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2:
        raise EstimationError("design matrix must be two-dimensional")
    if y.shape != (x.shape[0],):
        raise EstimationError(
            f"response length {y.shape} does not match {x.shape[0]} rows")
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise EstimationError("design and response must be finite")
    return x, y


def fit_logit_map(x, y, prior: Prior | None = None,
                  labels: Sequence[str] | None = None,
                  design: DesignInfo | None = None,
                  max_iter: int = 100, tol: float = 1e-8) -> FitResult:
    """Maximum a-posteriori logistic regression.

    Newton iterations on the penalized log-likelihood with step-halving
    (at most 30 halvings per step); convergence is declared when the
    gradient norm drops below ``tol``.  The reported covariance is the
    Laplace approximation, the inverse negative Hessian at the mode.

    Raises :class:`ConvergenceError` (reporting the gradient norm) if the
    tolerance is not met within ``max_iter`` iterations.
    """
    x, y = _validate_xy(x, y)
    bad = (y != 0.0) & (y != 1.0)
    if bad.any():
        raise EstimationError("logit response must be 0/1")
    prior = prior or Prior()
    if design is not None and labels is None:
        labels = design.labels
    if labels is None:
        labels = tuple(f"x{i}" for i in range(x.shape[1]))
        labels = (INTERCEPT,) + labels[1:] if x.shape[1] else labels
    labels = tuple(labels)
    if len(labels) != x.shape[1]:
        raise EstimationError("one label per design column required")
    sds = prior.sd_vector(labels)

    beta = np.zeros(x.shape[1])
    obj = logit_penalized_loglik(x, y, beta, sds)
    grad = logit_penalized_gradient(x, y, beta, sds)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            iterations -= 1
            break
        p = expit(x @ beta)
        w = p * (1.0 - p)
        hess = (x.T * w) @ x + np.diag(1.0 / sds ** 2)
        step = np.linalg.solve(hess, grad)
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            cand_obj = logit_penalized_loglik(x, y, cand, sds)
            if cand_obj > obj:
                break
            t *= 0.5
        else:
            # no ascent available: the mode is numerically reached
            grad = logit_penalized_gradient(x, y, beta, sds)
            break
        beta = beta + t * step
        obj = cand_obj
        grad = logit_penalized_gradient(x, y, beta, sds)

    gnorm = float(np.linalg.norm(grad))
    if gnorm >= tol:
        raise ConvergenceError(
            f"logit MAP did not converge in {max_iter} iterations; "
            f"gradient norm {gnorm:.3e}")
    p = expit(x @ beta)
    w = p * (1.0 - p)
    hess = (x.T * w) @ x + np.diag(1.0 / sds ** 2)
    cov = np.linalg.inv(hess)
    return FitResult(link="logit", labels=labels, coefficients=beta,
                     covariance=cov, n_obs=x.shape[0], iterations=iterations,
                     gradient_norm=gnorm, prior=prior, design=design)


# ---------------------------------------------------------------------------
# weighted least squares
# ---------------------------------------------------------------------------

def fit_linear_wls(x, y, weights=None, labels: Sequence[str] | None = None,
                   design: DesignInfo | None = None) -> FitResult:
    """Weighted least squares with a named rank check.

    The error variance is the weighted residual variance with ``n - p``
    degrees of freedom, where ``n`` counts the positive-weight rows.  When
    the response is 0/1 the fit flags how many fitted values fall outside
    the unit interval (linear-link risk on binary outcomes).
    """
    x, y = _validate_xy(x, y)
    n, p = x.shape
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise EstimationError("one weight per row required")
        if not np.isfinite(w).all() or (w < 0).any():
            raise EstimationError("weights must be finite and non-negative")
    if not (w > 0).any():
        raise EstimationError("at least one positive weight required")
    if design is not None and labels is None:
        labels = design.labels
    if labels is None:
        labels = tuple(f"x{i}" for i in range(p))
    labels = tuple(labels)
    if len(labels) != p:
        raise EstimationError("one label per design column required")

    sw = np.sqrt(w)
    xw = x * sw[:, None]
    # pivoted QR exposes which columns are linearly dependent
    _, r, piv = _qr(xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(n, p) * np.finfo(float).eps if diag.size else 0.0
    rank = int((diag > tol).sum())
    if rank < p:
        raise RankError([labels[j] for j in sorted(piv[rank:])])

    n_eff = int((w > 0).sum())
    if n_eff <= p:
        raise EstimationError(
            f"no residual degrees of freedom: {n_eff} weighted rows for "
            f"{p} coefficients")
    xtwx = (x.T * w) @ x
    beta = np.linalg.solve(xtwx, (x.T * w) @ y)
    resid = y - x @ beta
    sigma2 = float(np.sum(w * resid ** 2) / (n_eff - p))
    cov = sigma2 * np.linalg.inv(xtwx)

    flags: dict = {}
    if np.isin(y, (0.0, 1.0)).all():
        fitted = x @ beta
        outside = int(((fitted < 0.0) | (fitted > 1.0)).sum())
        if outside:
            flags["fitted_outside_unit_interval"] = outside
    return FitResult(link="linear", labels=labels, coefficients=beta,
                     covariance=cov, n_obs=n, prior=None, design=design,
                     flags=flags)


# ---------------------------------------------------------------------------
# derived quantities
# ---------------------------------------------------------------------------

def predict_propensity(fit: FitResult, data) -> np.ndarray:
    """Treatment probabilities for new rows under a logit fit.

    ``data`` is a :class:`PatientTable` (encoded with the fit's stored
    design) or an already-encoded matrix.  Values are clipped to stay
    strictly inside (0, 1) so downstream logits are finite.
    """
    if fit.link != "logit":
        raise EstimationError("propensity prediction needs a logit fit")
    if isinstance(data, PatientTable):
        if fit.design is None:
            raise EstimationError("fit carries no design; pass a matrix")
        x = encode_design(fit.design, data)
    else:
        x = np.asarray(data, dtype=float)
        if x.ndim != 2 or x.shape[1] != len(fit.labels):
            raise EstimationError(
                f"expected a matrix with {len(fit.labels)} columns")
    p = expit(x @ fit.coefficients)
    tiny = np.finfo(float).tiny
    return np.clip(p, tiny, 1.0 - 1e-16)


def forest_export(fit: FitResult, level: float = 0.95) -> list[dict]:
    """Forest-plot records (one per non-intercept coefficient)."""
    if not 0.0 < level < 1.0:
        raise EstimationError(f"interval level must be in (0, 1), got {level}")
    lo, hi = fit.interval(level)
    out = []
    for i, lb in enumerate(fit.labels):
        if lb == INTERCEPT:
            continue
        out.append({"label": lb, "point": float(fit.coefficients[i]),
                    "low": float(lo[i]), "high": float(hi[i]),
                    "level": level})
    return out
