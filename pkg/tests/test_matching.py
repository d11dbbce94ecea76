"""Tests for stochastic caliper matching and the planning numbers."""
import json
import math

import numpy as np
import pytest

from studypilot.matching import (
    BalanceTable,
    MatchConfig,
    MatchingError,
    MatchResult,
    post_match_balance,
    rct_equivalent_sample_size,
    stochastic_match,
)
from studypilot.table import PatientTable


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def _planted_stratum():
    """147 patients: 34 matchable treated, 6 isolated treated, 107 controls.

    Control logits carpet [-2.0, 1.6]; the treated bulk sits inside that
    range while six treated sit far above it, beyond any plausible caliper.
    """
    c_logits = np.linspace(-2.0, 1.6, 107)
    t_bulk = np.linspace(-1.5, 1.4, 34)
    t_far = np.linspace(3.0, 3.5, 6)
    logits = np.concatenate([t_bulk, t_far, c_logits])
    arm = np.concatenate([np.ones(40, dtype=int), np.zeros(107, dtype=int)])
    ids = np.array([f"t{i:02d}" for i in range(40)]
                   + [f"c{i:03d}" for i in range(107)], dtype=object)
    return ids, _sigmoid(logits), arm


def _random_stratum(seed, n_t=40, n_c=90):
    rng = np.random.default_rng(seed)
    logits = np.concatenate([rng.normal(0.4, 0.9, n_t),
                             rng.normal(-0.3, 0.9, n_c)])
    arm = np.concatenate([np.ones(n_t, dtype=int), np.zeros(n_c, dtype=int)])
    ids = np.array([f"p{i:03d}" for i in range(n_t + n_c)], dtype=object)
    return ids, _sigmoid(logits), arm


class TestSamplingRatio:
    def test_planted_stratum_yields_expected_ratio(self):
        ids, scores, arm = _planted_stratum()
        result = stochastic_match(ids, scores, arm, MatchConfig(seed=11))
        # every bulk treated finds a control, the six isolated ones do not
        assert len(result.pairs) == 34
        assert result.n_matched_patients == 68
        assert abs(result.sampling_ratio - 0.46) <= 0.05
        assert result.display_ratio == 0.46
        assert set(result.unmatched_treated) == {f"t{i:02d}"
                                                 for i in range(34, 40)}

    def test_planted_stratum_plans_rct_of_218(self):
        ids, scores, arm = _planted_stratum()
        result = stochastic_match(ids, scores, arm, MatchConfig(seed=11))
        # planning arithmetic runs on the two-decimal display ratio
        assert rct_equivalent_sample_size(100, result.display_ratio) == 218

    def test_identical_scores_match_everyone(self):
        n = 30
        scores = np.full(2 * n, 0.37)
        arm = np.concatenate([np.ones(n, dtype=int), np.zeros(n, dtype=int)])
        ids = np.array([f"p{i}" for i in range(2 * n)], dtype=object)
        res = stochastic_match(ids, scores, arm, MatchConfig(seed=0))
        assert len(res.pairs) == n
        assert res.sampling_ratio == 1.0

    def test_separated_arms_match_nobody(self):
        rng = np.random.default_rng(0)
        t = 0.9 + rng.uniform(-0.01, 0.01, 20)
        c = 0.1 + rng.uniform(-0.01, 0.01, 20)
        scores = np.concatenate([t, c])
        arm = np.concatenate([np.ones(20, dtype=int), np.zeros(20, dtype=int)])
        ids = np.array([f"p{i}" for i in range(40)], dtype=object)
        res = stochastic_match(ids, scores, arm,
                               MatchConfig(caliper=0.2, seed=0))
        assert res.pairs == []
        assert res.sampling_ratio == 0.0

    def test_rct_equivalent_size_from_planted_ratio(self):
        assert rct_equivalent_sample_size(100, 0.46) == 218

    def test_rct_equivalent_size_exact_ratios(self):
        assert rct_equivalent_sample_size(100, 0.5) == 200
        assert rct_equivalent_sample_size(100, 1.0) == 100
        assert rct_equivalent_sample_size(7, 0.25) == 28
        assert rct_equivalent_sample_size(1, 0.0001) == 10000

    def test_rct_equivalent_size_rounds_up(self):
        # 100 / 0.3 = 333.33..., a cohort of 333 would fall short
        assert rct_equivalent_sample_size(100, 0.3) == 334

    def test_rct_equivalent_size_validation(self):
        with pytest.raises(MatchingError):
            rct_equivalent_sample_size(0, 0.5)
        with pytest.raises(MatchingError):
            rct_equivalent_sample_size(100, 0.0)
        with pytest.raises(MatchingError):
            rct_equivalent_sample_size(100, 1.2)
        with pytest.raises(MatchingError):
            rct_equivalent_sample_size(100, -0.1)


class TestDeterminism:
    def test_same_seed_byte_identical(self):
        ids, scores, arm = _random_stratum(5)
        cfg = MatchConfig(seed=1729)
        a = stochastic_match(ids, scores, arm, cfg)
        b = stochastic_match(ids, scores, arm, cfg)
        assert json.dumps(a.to_dict(), sort_keys=True) == \
            json.dumps(b.to_dict(), sort_keys=True)
        assert a.pairs_csv() == b.pairs_csv()

    def test_different_seed_different_pairs(self):
        ids, scores, arm = _random_stratum(5)
        a = stochastic_match(ids, scores, arm, MatchConfig(seed=1))
        b = stochastic_match(ids, scores, arm, MatchConfig(seed=2))
        assert [(p.treated_id, p.control_id) for p in a.pairs] != \
            [(p.treated_id, p.control_id) for p in b.pairs]

    def test_default_config_is_reproducible(self):
        ids, scores, arm = _random_stratum(8)
        a = stochastic_match(ids, scores, arm)
        b = stochastic_match(ids, scores, arm)
        assert a.to_dict() == b.to_dict()


class TestCaliper:
    def test_all_pair_distances_within_caliper(self):
        for seed in range(6):
            ids, scores, arm = _random_stratum(seed)
            res = stochastic_match(ids, scores, arm, MatchConfig(seed=seed))
            assert res.caliper > 0
            for p in res.pairs:
                assert p.distance <= res.caliper + 1e-12

    def test_default_caliper_is_fifth_of_logit_sd(self):
        ids, scores, arm = _random_stratum(3)
        res = stochastic_match(ids, scores, arm, MatchConfig(seed=0))
        logits = np.log(scores) - np.log1p(-scores)
        assert res.caliper == pytest.approx(0.2 * np.std(logits, ddof=1),
                                            rel=1e-12)

    def test_explicit_caliper_respected(self):
        ids, scores, arm = _random_stratum(3)
        res = stochastic_match(ids, scores, arm,
                               MatchConfig(caliper=0.05, seed=0))
        assert res.caliper == 0.05
        for p in res.pairs:
            assert p.distance <= 0.05 + 1e-12

    def test_caliper_ladder_monotone_pair_counts(self):
        ids, scores, arm = _random_stratum(12)
        counts = []
        for cal in (0.01, 0.05, 0.1, 0.25, 1.0, 50.0):
            res = stochastic_match(ids, scores, arm,
                                   MatchConfig(caliper=cal, seed=4))
            counts.append(len(res.pairs))
        assert counts == sorted(counts)
        # an unbounded caliper matches every treated (controls outnumber them)
        assert counts[-1] == 40


class TestReplacementSemantics:
    def test_no_control_reuse_without_replacement(self):
        for ratio in (1, 2):
            ids, scores, arm = _random_stratum(7)
            res = stochastic_match(
                ids, scores, arm, MatchConfig(ratio=ratio, seed=7))
            controls = [p.control_id for p in res.pairs]
            assert len(controls) == len(set(controls))

    def test_with_replacement_reuses_but_not_within_a_treated(self):
        # two tight clusters: many treated share very few nearby controls
        t = np.full(12, 0.70)
        c = np.array([0.69, 0.71, 0.30, 0.31])
        scores = np.concatenate([t, c])
        arm = np.concatenate([np.ones(12, dtype=int), np.zeros(4, dtype=int)])
        ids = np.array([f"t{i}" for i in range(12)]
                       + [f"c{i}" for i in range(4)], dtype=object)
        res = stochastic_match(ids, scores, arm,
                               MatchConfig(ratio=2, caliper=0.5,
                                           with_replacement=True, seed=3))
        assert len(res.pairs) == 24  # every treated fills both slots
        controls = [p.control_id for p in res.pairs]
        assert len(set(controls)) < len(controls)  # reuse across treated
        per_treated: dict[str, list[str]] = {}
        for p in res.pairs:
            per_treated.setdefault(p.treated_id, []).append(p.control_id)
        for picked in per_treated.values():
            assert len(picked) == len(set(picked))

    def test_without_replacement_starves(self):
        # same geometry, no replacement: only the two nearby controls are
        # inside the caliper, so a single treated exhausts the pool
        t = np.full(12, 0.70)
        c = np.array([0.69, 0.71, 0.30, 0.31])
        scores = np.concatenate([t, c])
        arm = np.concatenate([np.ones(12, dtype=int), np.zeros(4, dtype=int)])
        ids = np.array([f"t{i}" for i in range(12)]
                       + [f"c{i}" for i in range(4)], dtype=object)
        res = stochastic_match(ids, scores, arm,
                               MatchConfig(ratio=2, caliper=0.5, seed=3))
        assert len(res.pairs) == 2
        assert len(res.unmatched_treated) == 11
        assert set(res.unmatched_control) == {"c2", "c3"}


class TestValidation:
    def test_config_rejects_bad_values(self):
        with pytest.raises(MatchingError):
            MatchConfig(ratio=0)
        with pytest.raises(MatchingError):
            MatchConfig(caliper=0.0)
        with pytest.raises(MatchingError):
            MatchConfig(caliper=-1.0)
        with pytest.raises(MatchingError):
            MatchConfig(caliper_sd_scale=0.0)

    def test_scores_must_be_open_unit_interval(self):
        ids = np.array(["a", "b"], dtype=object)
        arm = np.array([1, 0])
        with pytest.raises(MatchingError):
            stochastic_match(ids, np.array([0.0, 0.5]), arm)
        with pytest.raises(MatchingError):
            stochastic_match(ids, np.array([0.5, 1.0]), arm)
        with pytest.raises(MatchingError):
            stochastic_match(ids, np.array([0.5, np.nan]), arm)

    def test_both_arms_required(self):
        ids = np.array(["a", "b"], dtype=object)
        with pytest.raises(MatchingError):
            stochastic_match(ids, np.array([0.4, 0.5]), np.array([1, 1]))
        with pytest.raises(MatchingError):
            stochastic_match(ids, np.array([0.4, 0.5]), np.array([0, 0]))

    def test_arm_must_be_binary(self):
        ids = np.array(["a", "b"], dtype=object)
        with pytest.raises(MatchingError):
            stochastic_match(ids, np.array([0.4, 0.5]), np.array([1, 2]))

    def test_length_mismatch(self):
        with pytest.raises(MatchingError):
            stochastic_match(np.array(["a"], dtype=object),
                             np.array([0.4, 0.5]), np.array([1, 0]))


def _balance_table(make_clinical_schema=None):
    from conftest import make_clinical_schema as mk
    schema = mk(centres=("c01", "c02"))
    rng = np.random.default_rng(42)
    n = 120
    age = rng.normal(55.0, 8.0, n) + 6.0 * (np.arange(n) < 50)
    evd = (np.arange(n) < 50).astype(int)  # first 50 treated, and older
    data = {
        "pid": (np.array([f"p{i:03d}" for i in range(n)], dtype=object), None),
        "evd": (evd, None),
        "outcome": (rng.integers(0, 2, n), None),
        "centre": (rng.integers(0, 2, n), None),
        "wfns": (rng.integers(0, 6, n), None),
        "rebleed": (rng.integers(0, 2, n), None),
        "ab_ratio": (rng.uniform(0.05, 0.3, n), None),
        "age": (age, None),
        "smoker": (rng.integers(0, 2, n), None),
    }
    return PatientTable.from_columns(schema, data)


class TestBalance:
    def test_matching_on_age_logit_shrinks_age_imbalance(self):
        table = _balance_table()
        age = table.column("age").as_numeric()
        arm = table.column("evd").values.astype(int)
        # a propensity that is a monotone function of age
        scores = _sigmoid((age - age.mean()) / age.std(ddof=1) * 1.5)
        res = stochastic_match(table.ids, scores, arm, MatchConfig(seed=9))
        bal = post_match_balance(table, res, ["age", "smoker"])
        rows = {r["covariate"]: r for r in bal.rows}
        assert rows["age"]["smd_before"] > 0.5
        assert abs(rows["age"]["smd_after"]) < rows["age"]["smd_before"] / 2
        assert bal.n_pairs == len(res.pairs)

    def test_categorical_expands_per_level(self):
        table = _balance_table()
        arm = table.column("evd").values.astype(int)
        scores = np.full(table.n_rows, 0.5)
        # pin scores into (0,1) strictly and identical -> caliper window 0
        scores = np.clip(scores, 1e-6, 1 - 1e-6)
        res = stochastic_match(table.ids, scores, arm,
                               MatchConfig(caliper=1.0, seed=2))
        bal = post_match_balance(table, res, ["centre"])
        labels = [r["covariate"] for r in bal.rows]
        assert labels == ["centre=c01", "centre=c02"]

    def test_no_pairs_gives_none_after(self):
        ids, scores, arm = _random_stratum(4)
        res = stochastic_match(ids, scores, arm,
                               MatchConfig(caliper=1e-9, seed=1))
        assert res.pairs == []
        table = _balance_table()
        arm2 = table.column("evd").values.astype(int)
        age = table.column("age").as_numeric()
        scores2 = _sigmoid((age - age.mean()) / 40.0)
        res2 = stochastic_match(table.ids, scores2, arm2,
                                MatchConfig(caliper=1e-12, seed=1))
        if res2.pairs:  # geometry may still allow exact ties; force empty
            res2 = MatchResult(pairs=[], unmatched_treated=[],
                               unmatched_control=[], caliper=1e-12, ratio=1,
                               with_replacement=False, seed=1,
                               n_stratum=table.n_rows, n_treated=50,
                               n_control=70)
        bal = post_match_balance(table, res2, ["age"])
        assert bal.rows[0]["smd_after"] is None

    def test_planted_one_sd_shift_reads_as_smd_one(self):
        rng = np.random.default_rng(21)
        n = 1000
        from conftest import make_clinical_schema
        schema = make_clinical_schema()
        arm = (np.arange(n) < n // 2).astype(int)
        age = rng.normal(55.0, 8.0, n) + 8.0 * arm  # shift = 1 sd
        data = {
            "pid": (np.array([f"p{i:04d}" for i in range(n)], dtype=object),
                    None),
            "evd": (arm, None),
            "outcome": (rng.integers(0, 2, n), None),
            "centre": (rng.integers(0, 3, n), None),
            "wfns": (rng.integers(0, 6, n), None),
            "rebleed": (rng.integers(0, 2, n), None),
            "ab_ratio": (rng.uniform(0.05, 0.3, n), None),
            "age": (age, None),
            "smoker": (rng.integers(0, 2, n), None),
        }
        table = PatientTable.from_columns(schema, data)
        empty = MatchResult(pairs=[], unmatched_treated=[],
                            unmatched_control=[], caliper=0.1, ratio=1,
                            with_replacement=False, seed=0,
                            n_stratum=n, n_treated=n // 2, n_control=n // 2)
        bal = post_match_balance(table, empty, ["age"])
        assert abs(bal.rows[0]["smd_before"] - 1.0) < 0.1

    def test_post_match_overlap_report_attached(self):
        table = _balance_table()
        age = table.column("age").as_numeric()
        arm = table.column("evd").values.astype(int)
        scores = _sigmoid((age - age.mean()) / age.std(ddof=1))
        res = stochastic_match(table.ids, scores, arm, MatchConfig(seed=6))
        bal = post_match_balance(table, res, ["age"], scores=scores)
        assert bal.post_match_overlap is not None
        assert 0.0 < bal.post_match_overlap.overlap_coefficient <= 1.0
        assert bal.to_dict()["post_match_overlap"] is not None
        # without scores the field stays empty
        plain = post_match_balance(table, res, ["age"])
        assert plain.post_match_overlap is None

    def test_balance_text_render(self):
        table = _balance_table()
        arm = table.column("evd").values.astype(int)
        age = table.column("age").as_numeric()
        scores = _sigmoid((age - age.mean()) / age.std(ddof=1))
        res = stochastic_match(table.ids, scores, arm, MatchConfig(seed=3))
        text = post_match_balance(table, res, ["age"]).to_text()
        assert "covariate" in text and "smd before" in text
        assert "age" in text


class TestResultShape:
    def test_to_dict_fields(self):
        ids, scores, arm = _planted_stratum()
        res = stochastic_match(ids, scores, arm, MatchConfig(seed=11))
        d = res.to_dict()
        assert d["n_stratum"] == 147
        assert d["n_treated"] == 40
        assert d["n_control"] == 107
        assert d["n_pairs"] == len(d["pairs"])
        assert d["ratio"] == 1 and d["with_replacement"] is False
        for entry in d["pairs"]:
            assert set(entry) == {"treated", "control", "distance"}

    def test_pairs_csv_header_and_rows(self):
        ids, scores, arm = _random_stratum(10)
        res = stochastic_match(ids, scores, arm, MatchConfig(seed=10))
        lines = res.pairs_csv().splitlines()
        assert lines[0] == "treated_id,control_id,logit_distance"
        assert len(lines) == 1 + len(res.pairs)
