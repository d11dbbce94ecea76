"""Positivity diagnostics: do treated and untreated patients overlap?

Given balancing scores (estimated treatment probabilities) for both arms,
this module estimates each arm's score density on the unit interval with a
boundary-reflected Gaussian KDE, measures the overlap coefficient between
the two densities, locates the common-support region, and turns the numbers
into a coarse verdict (Adequate / Partial / Inadequate) against explicit
thresholds.  A cell-count diagnostic for discrete covariate configurations
complements the density view.
"""
from __future__ import annotations

import io
import csv
from dataclasses import dataclass, field

import numpy as np

from ._kernels import kde_gauss_reflect
from .table import PatientTable

__all__ = [
    "PositivityError",
    "DensityProfile",
    "OverlapReport",
    "CellReport",
    "kde_profile",
    "overlap_report",
    "positivity_cells",
    "silverman_bandwidth",
]

BANDWIDTH_FLOOR = 1e-3

DEFAULT_THRESHOLDS = {
    "epsilon": 0.01,          # density level defining support
    "adequate_overlap": 0.5,
    "inadequate_overlap": 0.2,
    "tail_mass_limit": 0.10,  # max mass outside common support for Adequate
}


class PositivityError(ValueError):
    """Invalid inputs to the positivity diagnostics."""


def silverman_bandwidth(scores: np.ndarray) -> float:
    """Rule-of-thumb bandwidth 0.9 * min(sd, IQR/1.34) * n^(-1/5).

    The sample standard deviation uses ddof = 1; a floor of 1e-3 keeps the
    estimator defined for nearly-degenerate score sets.
    """
    n = scores.size
    sd = float(np.std(scores, ddof=1))
    q25, q75 = np.percentile(scores, [25.0, 75.0])
    iqr = float(q75 - q25)
    spread = min(sd, iqr / 1.34)
    return max(0.9 * spread * n ** (-0.2), BANDWIDTH_FLOOR)


@dataclass
class DensityProfile:
    """A density estimate for one arm's balancing scores on [0, 1]."""

    group: str
    grid: np.ndarray
    density: np.ndarray
    n: int
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def to_dict(self) -> dict:
        return {"group": self.group, "n": self.n, "bandwidth": self.bandwidth,
                "grid": self.grid.tolist(), "density": self.density.tolist()}


def _check_scores(scores, group: str) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 1 or scores.size < 2:
        raise PositivityError(f"{group}: need at least two scores")
    if not np.isfinite(scores).all():
        raise PositivityError(f"{group}: scores must be finite")
    if (scores <= 0.0).any() or (scores >= 1.0).any():
        raise PositivityError(f"{group}: scores must lie strictly in (0, 1)")
    return scores


def kde_profile(scores, group: str, grid_size: int = 512) -> DensityProfile:
    """Boundary-reflected Gaussian KDE of scores on a uniform unit grid.

    Reflection at 0 and 1 stops the estimator from leaking mass outside the
    probability scale; the result is renormalised so its trapezoid integral
    over [0, 1] is exactly one.
    """
    scores = _check_scores(scores, group)
    if grid_size < 16:
        raise PositivityError("grid_size must be at least 16")
    grid = np.linspace(0.0, 1.0, grid_size)
    bw = silverman_bandwidth(scores)
    density = np.asarray(kde_gauss_reflect(scores, grid, bw))
    density /= np.trapezoid(density, grid)
    return DensityProfile(group=group, grid=grid, density=density,
                          n=scores.size, bandwidth=bw)


@dataclass
class OverlapReport:
    """Overlap diagnostics between the treated and control score densities."""

    treated: DensityProfile
    control: DensityProfile
    overlap_coefficient: float
    common_support: list  # [(lo, hi)] where both densities exceed epsilon
    one_sided_regions: list  # [(group, lo, hi)] where only one arm has mass
    mass_outside: dict  # group -> density mass outside the common support
    verdict: str
    thresholds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "overlap_coefficient": self.overlap_coefficient,
            "common_support": [list(iv) for iv in self.common_support],
            "one_sided_regions": [[g, lo, hi]
                                  for g, lo, hi in self.one_sided_regions],
            "mass_outside": dict(self.mass_outside),
            "verdict": self.verdict,
            "thresholds": dict(self.thresholds),
            "treated": {"n": self.treated.n,
                        "bandwidth": self.treated.bandwidth},
            "control": {"n": self.control.n,
                        "bandwidth": self.control.bandwidth},
        }

    def plot_csv(self) -> str:
        """Grid and both densities as CSV for the density-overlay display."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["score", "density_treated", "density_control"])
        for g, dt, dc in zip(self.treated.grid, self.treated.density,
                             self.control.density):
            w.writerow([repr(float(g)), repr(float(dt)), repr(float(dc))])
        return buf.getvalue()


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as (start, end) index pairs, end inclusive."""
    out = []
    start = None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            out.append((start, i - 1))
            start = None
    if start is not None:
        out.append((start, len(mask) - 1))
    return out


def overlap_report(treated_scores, control_scores, grid_size: int = 512,
                   thresholds: dict | None = None) -> OverlapReport:
    """Measure how well the two arms' score distributions overlap.

    The overlap coefficient is the integral of the pointwise minimum of the
    two densities (1 = identical, 0 = disjoint).  The verdict is Adequate
    when the coefficient reaches ``adequate_overlap`` and neither arm has
    more than ``tail_mass_limit`` of its mass outside the common support;
    Inadequate when the coefficient falls below ``inadequate_overlap``;
    Partial otherwise.
    """
    th = dict(DEFAULT_THRESHOLDS)
    th.update(thresholds or {})
    treated = kde_profile(treated_scores, "treated", grid_size)
    control = kde_profile(control_scores, "control", grid_size)
    grid = treated.grid
    dt, dc = treated.density, control.density

    overlap = float(np.trapezoid(np.minimum(dt, dc), grid))

    eps = th["epsilon"]
    both = (dt > eps) & (dc > eps)
    common = [(float(grid[i]), float(grid[j])) for i, j in _runs(both)]
    one_sided = []
    for group, d_this, d_other in (("treated", dt, dc), ("control", dc, dt)):
        only = (d_this > eps) & ~(d_other > eps)
        for i, j in _runs(only):
            one_sided.append((group, float(grid[i]), float(grid[j])))
    one_sided.sort()

    mass_outside = {}
    for group, d in (("treated", dt), ("control", dc)):
        inside = float(np.trapezoid(np.where(both, d, 0.0), grid))
        mass_outside[group] = max(0.0, 1.0 - inside)

    if overlap < th["inadequate_overlap"]:
        verdict = "Inadequate"
    elif overlap >= th["adequate_overlap"] and \
            max(mass_outside.values()) <= th["tail_mass_limit"]:
        verdict = "Adequate"
    else:
        verdict = "Partial"

    return OverlapReport(treated=treated, control=control,
                         overlap_coefficient=overlap, common_support=common,
                         one_sided_regions=one_sided,
                         mass_outside=mass_outside, verdict=verdict,
                         thresholds=th)


# ---------------------------------------------------------------------------
# discrete cells
# ---------------------------------------------------------------------------

@dataclass
class CellReport:
    """Per-configuration arm counts over discrete covariate cells."""

    parents: tuple
    cells: list  # [{"config": {...}, "n_treated": int, "n_control": int,
    #                "flagged": bool}]
    min_count: int
    n_excluded_missing: int
    n_excluded_out_of_range: int

    @property
    def n_flagged(self) -> int:
        return sum(1 for c in self.cells if c["flagged"])

    def to_dict(self) -> dict:
        return {"parents": list(self.parents), "min_count": self.min_count,
                "n_excluded_missing": self.n_excluded_missing,
                "n_excluded_out_of_range": self.n_excluded_out_of_range,
                "n_flagged": self.n_flagged, "cells": self.cells}


def positivity_cells(table: PatientTable, parents, treatment: str | None = None,
                     min_count: int = 1, bins: dict | None = None) -> CellReport:
    """Count treated/control patients in every covariate configuration.

    ``parents`` are the treatment's direct influences; binary, categorical
    and ordered columns contribute their levels, real columns need explicit
    bin edges via ``bins``.  Every combination of levels appears in the
    output, so empty cells (hard positivity violations) are visible; cells
    with fewer than ``min_count`` patients in either arm are flagged.
    """
    bins = dict(bins or {})
    if min_count < 1:
        raise PositivityError("min_count must be at least 1")
    t_spec = table.schema.single("treatment") if treatment is None \
        else table.schema[treatment]
    if t_spec.ctype != "binary":
        raise PositivityError(f"treatment column {t_spec.name!r} must be binary")
    parents = list(parents)
    if not parents:
        raise PositivityError("need at least one parent column")

    level_sets: list[list[str]] = []
    codes = np.zeros((len(parents), table.n_rows), dtype=int)
    excluded_missing = np.zeros(table.n_rows, dtype=bool)
    out_of_range = np.zeros(table.n_rows, dtype=bool)
    for k, name in enumerate(parents):
        col = table.column(name)
        excluded_missing |= col.missing
        if col.spec.ctype == "binary":
            level_sets.append(["0", "1"])
            codes[k] = col.values
        elif col.spec.ctype in ("categorical", "ordered"):
            level_sets.append(list(col.spec.levels))
            codes[k] = col.values
        elif col.spec.ctype == "real":
            if name not in bins:
                raise PositivityError(
                    f"real column {name!r} needs bin edges via 'bins'")
            edges = np.asarray(bins[name], dtype=float)
            if edges.ndim != 1 or edges.size < 2 or (np.diff(edges) <= 0).any():
                raise PositivityError(
                    f"bin edges for {name!r} must be increasing, length >= 2")
            level_sets.append([f"[{edges[i]:g},{edges[i + 1]:g})"
                               for i in range(edges.size - 1)])
            idx = np.digitize(col.values, edges) - 1
            bad = (idx < 0) | (idx >= edges.size - 1)
            out_of_range |= bad & ~col.missing
            codes[k] = np.clip(idx, 0, edges.size - 2)
        else:
            raise PositivityError(f"column {name!r} cannot index cells")

    tcol = table.column(t_spec.name)
    excluded_missing |= tcol.missing
    keep = ~excluded_missing & ~out_of_range
    arm = tcol.values.astype(int)

    sizes = [len(ls) for ls in level_sets]
    total = int(np.prod(sizes))
    if total > 10_000:
        raise PositivityError(
            f"{total} covariate configurations exceed the reporting cap")

    # linear cell index, mixed radix over parent levels
    lin = np.zeros(table.n_rows, dtype=int)
    for k in range(len(parents)):
        lin = lin * sizes[k] + codes[k]
    counts = np.zeros((total, 2), dtype=int)
    np.add.at(counts, (lin[keep], arm[keep]), 1)

    cells = []
    for cell in range(total):
        rem = cell
        labels = [""] * len(parents)
        for k in range(len(parents) - 1, -1, -1):
            labels[k] = level_sets[k][rem % sizes[k]]
            rem //= sizes[k]
        n_c, n_t = int(counts[cell, 0]), int(counts[cell, 1])
        cells.append({
            "config": {p: lv for p, lv in zip(parents, labels)},
            "n_treated": n_t,
            "n_control": n_c,
            "flagged": n_t < min_count or n_c < min_count,
        })
    return CellReport(parents=tuple(parents), cells=cells, min_count=min_count,
                      n_excluded_missing=int(excluded_missing.sum()),
                      n_excluded_out_of_range=int((out_of_range
                                                   & ~excluded_missing).sum()))
