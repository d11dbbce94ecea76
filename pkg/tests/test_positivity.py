import numpy as np
import pytest
from scipy import integrate, stats

from studypilot.positivity import (
    BANDWIDTH_FLOOR,
    PositivityError,
    kde_profile,
    overlap_report,
    positivity_cells,
    silverman_bandwidth,
)
from studypilot.table import ColumnSpec, PatientTable, Schema


def test_density_normalises_to_one():
    rng = np.random.default_rng(0)
    for n in (2, 10, 500):
        prof = kde_profile(rng.beta(2, 2, n), "treated")
        assert abs(prof.integral() - 1.0) < 1e-9
        assert prof.grid.shape == (512,) and prof.n == n


def test_beta_density_recovered_within_l1_tolerance():
    rng = np.random.default_rng(314)
    scores = rng.beta(2.0, 5.0, 10_000)
    prof = kde_profile(scores, "treated")
    truth = stats.beta(2.0, 5.0).pdf(prof.grid)
    l1 = float(np.trapezoid(np.abs(prof.density - truth), prof.grid))
    assert l1 < 0.05, l1


def test_bandwidth_rule():
    rng = np.random.default_rng(7)
    scores = rng.beta(3, 3, 400)
    sd = np.std(scores, ddof=1)
    iqr = np.subtract(*np.percentile(scores, [75, 25]))
    want = 0.9 * min(sd, iqr / 1.34) * 400 ** -0.2
    assert silverman_bandwidth(scores) == pytest.approx(want, rel=1e-12)
    # degenerate scores fall back to the floor and stay usable
    flat = np.full(50, 0.5)
    assert silverman_bandwidth(flat) == BANDWIDTH_FLOOR
    prof = kde_profile(flat, "control")
    assert abs(prof.integral() - 1.0) < 1e-9
    assert np.isfinite(prof.density).all()


def test_reflection_keeps_boundary_mass():
    rng = np.random.default_rng(21)
    prof = kde_profile(rng.uniform(0.0001, 0.9999, 20_000), "treated")
    # a plain KDE would put roughly half the true density at the edges
    assert prof.density[0] > 0.85
    assert prof.density[-1] > 0.85


def _truncnorm_scores(rng, mu, sigma, n):
    a, b = (0.0 - mu) / sigma, (1.0 - mu) / sigma
    return stats.truncnorm(a, b, loc=mu, scale=sigma).rvs(n, random_state=rng)


def test_overlap_matches_quadrature_truth():
    rng = np.random.default_rng(2718)
    treated = _truncnorm_scores(rng, 0.6, 0.1, 10_000)
    control = _truncnorm_scores(rng, 0.4, 0.1, 10_000)
    rep = overlap_report(treated, control)

    def trunc_pdf(mu, sigma):
        z = stats.norm.cdf((1 - mu) / sigma) - stats.norm.cdf((0 - mu) / sigma)
        return lambda x: stats.norm.pdf((x - mu) / sigma) / (sigma * z)

    f_t, f_c = trunc_pdf(0.6, 0.1), trunc_pdf(0.4, 0.1)
    truth, _ = integrate.quad(lambda x: min(f_t(x), f_c(x)), 0.0, 1.0,
                              points=[0.5], limit=200)
    assert abs(rep.overlap_coefficient - truth) < 0.05
    assert rep.verdict == "Partial"  # ~0.32 lies between the cutoffs


def test_identical_distributions_overlap_near_one():
    rng = np.random.default_rng(99)
    a = rng.beta(3, 3, 4000)
    b = rng.beta(3, 3, 4000)
    rep = overlap_report(a, b)
    assert rep.overlap_coefficient > 0.9
    assert rep.verdict == "Adequate"
    assert max(rep.mass_outside.values()) <= 0.10
    assert len(rep.common_support) >= 1


def test_disjoint_arms_are_inadequate_with_one_sided_tails():
    rng = np.random.default_rng(5)
    treated = _truncnorm_scores(rng, 0.85, 0.03, 3000)
    control = _truncnorm_scores(rng, 0.15, 0.03, 3000)
    rep = overlap_report(treated, control)
    assert rep.verdict == "Inadequate"
    assert rep.overlap_coefficient < 0.2
    groups = {g for g, _, _ in rep.one_sided_regions}
    assert groups == {"treated", "control"}
    t_lo = min(lo for g, lo, _ in rep.one_sided_regions if g == "treated")
    c_hi = max(hi for g, _, hi in rep.one_sided_regions if g == "control")
    assert t_lo > c_hi  # treated-only mass sits right of control-only mass
    assert max(rep.mass_outside.values()) > 0.5


def test_verdict_consistent_with_reported_numbers():
    rng = np.random.default_rng(17)
    for mu in (0.42, 0.5, 0.62, 0.8):
        rep = overlap_report(_truncnorm_scores(rng, mu, 0.08, 2000),
                             _truncnorm_scores(rng, 0.4, 0.08, 2000))
        th = rep.thresholds
        if rep.overlap_coefficient < th["inadequate_overlap"]:
            want = "Inadequate"
        elif rep.overlap_coefficient >= th["adequate_overlap"] and \
                max(rep.mass_outside.values()) <= th["tail_mass_limit"]:
            want = "Adequate"
        else:
            want = "Partial"
        assert rep.verdict == want


def test_score_validation():
    with pytest.raises(PositivityError, match="at least two"):
        kde_profile([0.5], "treated")
    with pytest.raises(PositivityError, match="strictly in"):
        kde_profile([0.0, 0.5], "treated")
    with pytest.raises(PositivityError, match="strictly in"):
        kde_profile([0.5, 1.0], "treated")
    with pytest.raises(PositivityError, match="finite"):
        kde_profile([0.5, np.nan], "treated")


def test_plot_csv_layout():
    rng = np.random.default_rng(3)
    rep = overlap_report(rng.beta(2, 2, 50), rng.beta(2, 2, 60), grid_size=16)
    lines = rep.plot_csv().strip().split("\n")
    assert lines[0] == "score,density_treated,density_control"
    assert len(lines) == 17
    d = rep.to_dict()
    assert d["treated"]["n"] == 50 and d["control"]["n"] == 60
    assert set(d["thresholds"]) == {"epsilon", "adequate_overlap",
                                    "inadequate_overlap", "tail_mass_limit"}


# ---------------------------------------------------------------------------
# discrete cells
# ---------------------------------------------------------------------------

def _cells_table():
    schema = Schema([
        ColumnSpec("pid", "id", role="id"),
        ColumnSpec("t", "binary", role="treatment"),
        ColumnSpec("sex", "binary"),
        ColumnSpec("grade", "categorical", levels=("lo", "hi")),
        ColumnSpec("age", "real"),
    ])
    t = np.array([1, 1, 0, 0, 1, 0, 1, 0], dtype=np.int8)
    sex = np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=np.int8)
    grade = np.array([0, 1, 0, 1, 0, 0, 0, 0], dtype=np.int32)
    age = np.array([40.0, 50.0, 60.0, 70.0, 45.0, 55.0, 65.0, 200.0])
    miss = np.zeros(8, dtype=bool)
    miss[1] = True  # one missing grade row
    return PatientTable.from_columns(schema, {
        "pid": (np.array([f"p{i}" for i in range(8)], dtype=object), None),
        "t": (t, None),
        "sex": (sex, None),
        "grade": (grade, miss),
        "age": (age, None),
    })


def test_cells_enumerate_all_configurations():
    rep = positivity_cells(_cells_table(), ["sex", "grade"])
    assert len(rep.cells) == 4
    assert rep.n_excluded_missing == 1
    by_cfg = {tuple(c["config"].values()): c for c in rep.cells}
    # sex=0, grade=lo has one treated (p0) and one control (p2)
    assert by_cfg[("0", "lo")] == {"config": {"sex": "0", "grade": "lo"},
                                   "n_treated": 1, "n_control": 1,
                                   "flagged": False}
    # sex=1, grade=hi is empty in both arms: a hard positivity violation
    assert by_cfg[("1", "hi")]["flagged"]
    assert by_cfg[("1", "hi")]["n_treated"] == 0
    # flagged: (0,hi) lacks treated patients, (1,hi) is empty outright
    assert rep.n_flagged == 2


def test_cells_min_count_and_real_bins():
    rep = positivity_cells(_cells_table(), ["age"],
                           bins={"age": [30.0, 60.0, 90.0]}, min_count=1)
    assert [c["config"]["age"] for c in rep.cells] == ["[30,60)", "[60,90)"]
    assert rep.n_excluded_out_of_range == 1  # the age-200 row
    strict = positivity_cells(_cells_table(), ["sex"], min_count=2)
    assert all(c["flagged"] == (c["n_treated"] < 2 or c["n_control"] < 2)
               for c in strict.cells)


def test_cells_validation():
    table = _cells_table()
    with pytest.raises(PositivityError, match="bin edges"):
        positivity_cells(table, ["age"])
    with pytest.raises(PositivityError, match="increasing"):
        positivity_cells(table, ["age"], bins={"age": [50.0, 40.0]})
    with pytest.raises(PositivityError, match="at least one parent"):
        positivity_cells(table, [])
    with pytest.raises(PositivityError, match="min_count"):
        positivity_cells(table, ["sex"], min_count=0)
