"""Tests for discrete structural models, sampling, and exact enumeration."""
import numpy as np
import pytest

from studypilot.dag import parse_dag
from studypilot.monitoring import egger_iv, fit_centre_effects
from studypilot.positivity import PositivityError
from studypilot.scm import (
    InterventionSpec,
    MulticentreConfig,
    NodeModel,
    Scm,
    ScmError,
    adjusted_distribution,
    build_multicentre_scm,
    exact_interventional,
    generate_multicentre,
    load_scm,
    sample,
    scm_from_json,
    scm_to_json,
)

B = ("0", "1")
NO_DO = InterventionSpec({})


def _single_node(p_one=0.3):
    dag = parse_dag("node X;")
    return Scm(dag, {"X": NodeModel(B, np.array([[1 - p_one, p_one]]))})


def _chain():
    """X -> Y with p(X=1)=0.4, p(Y=1|X=0)=0.2, p(Y=1|X=1)=0.7."""
    dag = parse_dag("X -> Y;")
    return Scm(dag, {
        "X": NodeModel(B, np.array([[0.6, 0.4]])),
        "Y": NodeModel(B, np.array([[0.8, 0.2], [0.3, 0.7]])),
    })


def _triangle(p_z=0.5):
    """Z -> X, Z -> Y, X -> Y: the smallest confounded model."""
    dag = parse_dag("Z -> X;\nZ -> Y;\nX -> Y;")
    # Y | (X, Z): parents sorted -> rows ordered X-major
    return Scm(dag, {
        "Z": NodeModel(B, np.array([[1 - p_z, p_z]])),
        "X": NodeModel(B, np.array([[0.7, 0.3], [0.35, 0.65]])),
        "Y": NodeModel(B, np.array([
            [0.9, 0.1],    # X=0, Z=0
            [0.6, 0.4],    # X=0, Z=1
            [0.5, 0.5],    # X=1, Z=0
            [0.2, 0.8],    # X=1, Z=1
        ])),
    })


class TestValidation:
    def test_missing_model(self):
        dag = parse_dag("X -> Y;")
        with pytest.raises(ScmError, match="no model"):
            Scm(dag, {"X": NodeModel(B, np.array([[0.5, 0.5]]))})

    def test_extra_model(self):
        dag = parse_dag("node X;")
        with pytest.raises(ScmError, match="unknown node"):
            Scm(dag, {"X": NodeModel(B, np.array([[0.5, 0.5]])),
                      "Q": NodeModel(B, np.array([[0.5, 0.5]]))})

    def test_bad_row_sum(self):
        dag = parse_dag("node X;")
        with pytest.raises(ScmError, match="sum to 1"):
            Scm(dag, {"X": NodeModel(B, np.array([[0.5, 0.6]]))})

    def test_wrong_shape(self):
        dag = parse_dag("X -> Y;")
        with pytest.raises(ScmError, match="shape"):
            Scm(dag, {"X": NodeModel(B, np.array([[0.5, 0.5]])),
                      "Y": NodeModel(B, np.array([[0.5, 0.5]]))})

    def test_negative_probability(self):
        dag = parse_dag("node X;")
        with pytest.raises(ScmError, match="negative"):
            Scm(dag, {"X": NodeModel(B, np.array([[1.2, -0.2]]))})

    def test_empty_domain(self):
        dag = parse_dag("node X;")
        with pytest.raises(ScmError, match="empty domain"):
            Scm(dag, {"X": NodeModel((), np.zeros((1, 0)))})

    def test_duplicate_levels(self):
        dag = parse_dag("node X;")
        with pytest.raises(ScmError, match="duplicate"):
            Scm(dag, {"X": NodeModel(("a", "a"),
                                     np.array([[0.5, 0.5]]))})

    def test_intervention_validation(self):
        scm = _chain()
        with pytest.raises(ScmError, match="unknown node"):
            sample(scm, 5, do=InterventionSpec({"Q": "1"}))
        with pytest.raises(ScmError, match="no level"):
            sample(scm, 5, do=InterventionSpec({"X": "2"}))
        with pytest.raises(ScmError):
            InterventionSpec({"X": 1})  # codes must be level labels


class TestSampling:
    def test_marginal_frequency_concentrates(self):
        table = sample(_single_node(0.3), 100_000, seed=5)
        freq = table.column("X").values.mean()
        assert abs(freq - 0.3) < 0.01

    def test_do_pins_column(self):
        table = sample(_chain(), 500, seed=1,
                       do=InterventionSpec({"X": "1"}))
        assert (table.column("X").values == 1).all()

    def test_same_seed_identical(self):
        a = sample(_triangle(), 2000, seed=42)
        b = sample(_triangle(), 2000, seed=42)
        assert a.to_csv() == b.to_csv()

    def test_different_seeds_differ(self):
        a = sample(_triangle(), 2000, seed=1)
        b = sample(_triangle(), 2000, seed=2)
        assert a.to_csv() != b.to_csv()

    def test_conditional_frequencies_match_cpt(self):
        scm = _triangle()
        table = sample(scm, 100_000, seed=9)
        x = table.column("X").values
        y = table.column("Y").values
        z = table.column("Z").values
        for xv in (0, 1):
            for zv in (0, 1):
                cell = (x == xv) & (z == zv)
                p_hat = y[cell].mean()
                p_true = scm.nodes["Y"].cpt[xv * 2 + zv, 1]
                assert abs(p_hat - p_true) < 0.02

    def test_multilevel_node_becomes_categorical(self):
        dag = parse_dag("node G;")
        scm = Scm(dag, {"G": NodeModel(("lo", "mid", "hi"),
                                       np.array([[0.2, 0.3, 0.5]]))})
        table = sample(scm, 50_000, seed=3)
        spec = table.schema["G"]
        assert spec.ctype == "categorical"
        assert spec.levels == ("lo", "mid", "hi")
        freqs = [float((table.column("G").values == i).mean())
                 for i in range(3)]
        assert np.allclose(freqs, [0.2, 0.3, 0.5], atol=0.02)

    def test_n_must_be_positive(self):
        with pytest.raises(ScmError):
            sample(_single_node(), 0)

    def test_single_level_node_cannot_be_tabled(self):
        dag = parse_dag("node K;")
        scm = Scm(dag, {"K": NodeModel(("only",), np.array([[1.0]]))})
        with pytest.raises(ScmError, match="single level"):
            sample(scm, 10)


class TestExactInterventional:
    def test_cpt_read_off(self):
        dist = exact_interventional(_chain(), InterventionSpec({"X": "1"}),
                                    "Y")
        assert abs(dist["0"] - 0.3) < 1e-12
        assert abs(dist["1"] - 0.7) < 1e-12

    def test_backdoor_formula_matches_enumeration(self):
        scm = _triangle(p_z=0.4)
        for xv in ("0", "1"):
            dist = exact_interventional(scm, InterventionSpec({"X": xv}),
                                        "Y")
            xi = int(xv)
            by_hand = (0.6 * scm.nodes["Y"].cpt[xi * 2 + 0, 1]
                       + 0.4 * scm.nodes["Y"].cpt[xi * 2 + 1, 1])
            assert abs(dist["1"] - by_hand) < 1e-12

    def test_do_on_sink_is_irrelevant(self):
        scm = _chain()
        plain = exact_interventional(scm, NO_DO, "X")
        pinned = exact_interventional(scm, InterventionSpec({"Y": "1"}),
                                      "X")
        for level in plain:
            assert abs(plain[level] - pinned[level]) < 1e-12
        assert abs(plain["1"] - 0.4) < 1e-12

    def test_observational_marginal(self):
        # chain: p(Y=1) = 0.6*0.2 + 0.4*0.7 = 0.4
        dist = exact_interventional(_chain(), NO_DO, "Y")
        assert abs(dist["1"] - 0.4) < 1e-12
        assert abs(sum(dist.values()) - 1.0) < 1e-12

    def test_state_space_cap(self):
        names = [f"n{i}" for i in range(24)]
        dag = parse_dag("\n".join(f"node {v};" for v in names))
        nodes = {v: NodeModel(B, np.array([[0.5, 0.5]])) for v in names}
        scm = Scm(dag, nodes)
        with pytest.raises(ScmError, match="enumeration limit"):
            exact_interventional(scm, NO_DO, "n0")

    def test_unknown_target(self):
        with pytest.raises(ScmError, match="unknown target"):
            exact_interventional(_chain(), NO_DO, "Q")


class TestMutilation:
    def test_untouched_cpts_share_storage(self):
        scm = _triangle()
        cut = scm.mutilated(InterventionSpec({"X": "1"}))
        assert cut.nodes["Z"].cpt is scm.nodes["Z"].cpt
        assert cut.nodes["Y"].cpt is scm.nodes["Y"].cpt
        assert not np.array_equal(cut.nodes["X"].cpt, scm.nodes["X"].cpt)

    def test_point_mass_rows(self):
        cut = _triangle().mutilated(InterventionSpec({"X": "0"}))
        assert np.array_equal(cut.nodes["X"].cpt,
                              np.array([[1.0, 0.0], [1.0, 0.0]]))


class TestAdjustedDistribution:
    def test_matches_exact_interventional(self):
        scm = _triangle()
        table = sample(scm, 100_000, seed=17)
        for xv in ("0", "1"):
            est = adjusted_distribution(table, "X", "Y", ["Z"], xv)
            truth = exact_interventional(scm, InterventionSpec({"X": xv}),
                                         "Y")
            assert abs(est["1"] - truth["1"]) < 0.02

    def test_empty_adjustment_is_conditional(self):
        table = sample(_chain(), 50_000, seed=2)
        est = adjusted_distribution(table, "X", "Y", [], "1")
        x = table.column("X").values
        y = table.column("Y").values
        assert est["1"] == pytest.approx(y[x == 1].mean())

    def test_empty_cell_raises(self):
        # X can never be 1 when Z=0, so the (X=1, Z=0) cell stays empty
        dag = parse_dag("Z -> X;\nZ -> Y;\nX -> Y;")
        scm = Scm(dag, {
            "Z": NodeModel(B, np.array([[0.5, 0.5]])),
            "X": NodeModel(B, np.array([[1.0, 0.0], [0.4, 0.6]])),
            "Y": NodeModel(B, np.array([[0.9, 0.1], [0.6, 0.4],
                                        [0.5, 0.5], [0.2, 0.8]])),
        })
        table = sample(scm, 5000, seed=3)
        with pytest.raises(PositivityError, match="Z=0"):
            adjusted_distribution(table, "X", "Y", ["Z"], "1")

    def test_unknown_column_and_level(self):
        table = sample(_chain(), 100, seed=1)
        with pytest.raises(ScmError):
            adjusted_distribution(table, "Q", "Y", [], "1")
        with pytest.raises(ScmError):
            adjusted_distribution(table, "X", "Y", [], "9")


class TestSerialization:
    def test_round_trip_exact(self):
        scm = _triangle(p_z=0.37)
        text = scm_to_json(scm)
        back = scm_from_json(text)
        assert back == scm
        for name in scm.nodes:
            assert np.array_equal(back.nodes[name].cpt,
                                  scm.nodes[name].cpt)

    def test_load_from_dict_and_path(self, tmp_path):
        scm = _chain()
        assert load_scm(scm_to_json(scm)) == scm
        import json
        assert load_scm(json.loads(scm_to_json(scm))) == scm
        path = tmp_path / "model.json"
        path.write_text(scm_to_json(scm))
        assert load_scm(str(path)) == scm

    def test_malformed_documents(self):
        with pytest.raises(ScmError, match="invalid JSON"):
            scm_from_json("{nope")
        with pytest.raises(ScmError, match="'dag' and 'nodes'"):
            scm_from_json("{}")
        with pytest.raises(ScmError, match="malformed"):
            scm_from_json({"dag": "node X;",
                           "nodes": {"X": {"levels": ["0", "1"]}}})
        with pytest.raises(ScmError, match="2-d"):
            scm_from_json({"dag": "node X;",
                           "nodes": {"X": {"levels": ["0", "1"],
                                           "cpt": [0.5, 0.5]}}})


class TestMulticentre:
    def test_planted_contrasts_exact_in_model(self):
        config = MulticentreConfig(n_centres=6, n_per_centre=10)
        scm = build_multicentre_scm(config)
        shifts = config.shifts()
        # P(treated=1 | do(centre=k)) contrasts equal the planted shifts
        p = [exact_interventional(
                scm, InterventionSpec({"centre": f"c{k + 1:02d}"}),
                "treated")["1"] for k in range(6)]
        for k in range(6):
            assert abs((p[k] - p[0]) - (shifts[k] - shifts[0])) < 1e-12

    def test_planted_effect_exact_in_model(self):
        config = MulticentreConfig(n_centres=5, n_per_centre=10, tau=0.11)
        scm = build_multicentre_scm(config)
        p1 = exact_interventional(scm, InterventionSpec({"treated": "1"}),
                                  "event")["1"]
        p0 = exact_interventional(scm, InterventionSpec({"treated": "0"}),
                                  "event")["1"]
        assert abs((p1 - p0) - 0.11) < 1e-12

    def test_generated_cohort_shape_and_roles(self):
        config = MulticentreConfig(n_centres=4, n_per_centre=50)
        table = generate_multicentre(config, seed=3)
        assert table.n_rows == 200
        assert table.schema.single("treatment").name == "treated"
        assert table.schema.single("outcome").name == "event"
        assert table.schema.single("centre").name == "centre"
        assert "frail" not in table.schema  # the latent stays hidden
        centre = table.column("centre").values
        for k in range(4):
            assert int((centre == k).sum()) == 50

    def test_determinism(self):
        config = MulticentreConfig(n_centres=3, n_per_centre=40)
        a = generate_multicentre(config, seed=8)
        b = generate_multicentre(config, seed=8)
        assert a.to_csv() == b.to_csv()

    def test_eighteen_centres_feed_seventeen_pairs(self):
        config = MulticentreConfig(n_per_centre=200)
        table = generate_multicentre(config, seed=4)
        effects = fit_centre_effects(table, ["severity"])
        assert len(effects) == 17

    def test_null_effect_slope_within_two_se(self):
        config = MulticentreConfig(n_per_centre=1500, tau=0.0)
        table = generate_multicentre(config, seed=6)
        effects = fit_centre_effects(table, ["severity"])
        fit = egger_iv(effects)
        assert abs(fit.slope) <= 2.0 * fit.se_slope

    def test_config_validation(self):
        with pytest.raises(ScmError):
            MulticentreConfig(n_centres=1)
        with pytest.raises(ScmError):
            MulticentreConfig(n_per_centre=0)
        with pytest.raises(ScmError):
            MulticentreConfig(propensity_shifts=(0.9,) * 18)
        with pytest.raises(ScmError):
            MulticentreConfig(tau=0.9)
        with pytest.raises(ScmError):
            MulticentreConfig(n_centres=3,
                              propensity_shifts=(0.0, 0.1))

    def test_direct_outcome_shifts_add_centre_edge(self):
        clean = build_multicentre_scm(MulticentreConfig(n_centres=3))
        assert not clean.dag.has_edge("centre", "event")
        leaky = build_multicentre_scm(MulticentreConfig(
            n_centres=3, direct_outcome_shifts=(0.0, 0.05, -0.05)))
        assert leaky.dag.has_edge("centre", "event")
