import numpy as np
import pytest

from evidence_select.constants import BASELINE_RULES, UNAVAILABLE
from evidence_select.diagnostics import audits, baselines, interventions, subsets, sweeps
from evidence_select.diagnostics.localization import localization
from evidence_select.diagnostics.stability import perturb_bag, stability
from evidence_select.diagnostics.suite import DiagnosticsConfig, run_diagnostics
from evidence_select.errors import ConfigError, ContractError

from conftest import small_train_config


@pytest.fixture
def split_bags(dataset):
    return dataset.split("test")


@pytest.fixture
def backbone(trained_state):
    state = trained_state.copy()
    state.use_selector = False
    return state


@pytest.mark.parametrize("n,k", [(1, 1), (10, 1), (29, 1), (30, 2), (50, 3), (100, 5), (1000, 50)])
def test_budget_k(n, k):
    assert interventions.budget_k(n) == k


def test_snr_aggregate_identities(trained_state, split_bags):
    explained = interventions.explain_split(trained_state, split_bags)
    report = interventions.snr_evaluate(
        trained_state, split_bags,
        {k: e.evidence.indices for k, e in explained.items()},
        {k: e.cd_gap for k, e in explained.items()},
    )
    assert report.bags == len(split_bags)
    assert report.keep_only_drop + report.evidence_sufficiency == pytest.approx(report.full_macro_f1)
    assert 0.0 < report.evidence_fraction <= 1.0
    assert 0.0 <= report.sufficient_rate <= 1.0
    assert report.cd_gap_median != UNAVAILABLE


def test_full_bag_evidence_leaves_complement_unavailable(trained_state, split_bags):
    evidence = {bag.id: list(range(bag.num_patches)) for bag in split_bags}
    report = interventions.snr_evaluate(trained_state, split_bags, evidence)
    assert report.complement_degradation == UNAVAILABLE
    assert report.necessary_rate == UNAVAILABLE
    assert report.complement_skipped == len(split_bags)
    assert report.keep_only_drop == 0.0
    assert report.cd_gap == UNAVAILABLE


def test_snr_contract_errors(trained_state, split_bags):
    with pytest.raises(ContractError):
        interventions.snr_evaluate(trained_state, split_bags, {})
    with pytest.raises(ContractError):
        interventions.evaluate_subset(trained_state, split_bags[0], [])


def test_summarize_backbone_reports_unavailable(backbone, split_bags):
    summary = interventions.summarize_model(backbone, split_bags)
    assert isinstance(summary["macro_f1"], float)
    assert summary["cd_gap"] == UNAVAILABLE


def test_top_k_breaks_ties_by_index():
    assert baselines.top_k(np.array([1.0, 3.0, 3.0, 0.0]), 2) == [1, 2]


@pytest.mark.parametrize("rule", BASELINE_RULES)
def test_baselines_return_exactly_k(trained_state, split_bags, rule):
    for bag in split_bags:
        subset = baselines.baseline_subset(rule, trained_state, bag, fraction=0.25)
        assert len(subset) == len(set(subset)) == interventions.budget_k(bag.num_patches, 0.25)
        assert all(0 <= i < bag.num_patches for i in subset)


def test_random_k_is_seeded_per_bag(trained_state, split_bags):
    bag = split_bags[0]
    a = baselines.baseline_subset("random_k", trained_state, bag, 0.5, seed=4)
    b = baselines.baseline_subset("random_k", trained_state, bag, 0.5, seed=4)
    assert a == b


def test_baseline_rule_errors(trained_state, backbone, split_bags):
    with pytest.raises(ContractError):
        baselines.baseline_subset("magic", trained_state, split_bags[0])
    with pytest.raises(ContractError):
        baselines.baseline_subset("gce_discrete", backbone, split_bags[0])


def test_occlusion_on_single_patch_bag(trained_state, split_bags):
    single = split_bags[0].restrict([0])
    assert baselines.occlusion_scores(trained_state, single).tolist() == [0.0]


def test_same_budget_table(trained_state, backbone, split_bags):
    rows = baselines.same_budget_table(trained_state, split_bags, fraction=0.25)
    assert [r["rule"] for r in rows] == BASELINE_RULES
    for row in rows:
        assert row["keep_only_drop"] == pytest.approx(
            rows[0]["keep_only_drop"] + rows[0]["keep_only_macro_f1"] - row["keep_only_macro_f1"]
        )
    post_hoc = baselines.same_budget_table(backbone, split_bags, fraction=0.25)
    assert [r["rule"] for r in post_hoc] == ["random_k", "attention_topk", "gradient_topk", "occlusion_topk"]


def test_inference_cost_rows(trained_state, split_bags):
    rows = baselines.inference_cost(trained_state, split_bags)
    assert [r["mode"] for r in rows] == ["full_bag", "gce_soft", "gce_discrete", "attention_topk", "occlusion_topk"]
    assert rows[0]["patch_ratio"] == 1.0
    assert 0.0 < rows[2]["patch_ratio"] <= 1.0


@pytest.mark.parametrize("policy", ["sufficient_prefix", "attention_topk", "random_topk"])
def test_minimal_subsets_are_disjoint_and_sized(trained_state, split_bags, policy):
    for bag in split_bags:
        result = subsets.minimal_subset_search(trained_state, bag, 2, policy, drop_tol=1.0)
        seen = set()
        for chosen in result.subsets:
            assert len(chosen) == 2
            assert seen.isdisjoint(chosen)
            seen.update(chosen)
        assert result.keep_only_drop is not None


def test_minimal_subset_too_large(trained_state, split_bags):
    bag = split_bags[0]
    result = subsets.minimal_subset_search(trained_state, bag, bag.num_patches + 1, "attention_topk")
    assert result.subsets == []
    assert result.keep_only_drop is None
    assert set(result.remove_union_drops.values()) == {None}


def test_minimal_subset_errors(trained_state, split_bags):
    with pytest.raises(ContractError):
        subsets.minimal_subset_search(trained_state, split_bags[0], 2, "sideways")
    with pytest.raises(ContractError):
        subsets.minimal_subset_search(trained_state, split_bags[0], 0, "attention_topk")


def test_summarize_search():
    results = [
        subsets.SubsetSearchResult("a", [[0], [1], [2]], 0.01, {1: 0.1, 2: 0.2, 3: None}),
        subsets.SubsetSearchResult("b", [[4]], 0.03, {1: 0.3, 2: None, 3: None}),
    ]
    report = subsets.summarize_search(results, "attention_topk", 1)
    assert report.subsets_per_bag == 2.0
    assert report.at_least_two == 0.5
    assert report.at_least_three == 0.5
    assert report.keep_only_drop == pytest.approx(0.02)
    assert report.remove_union_drops == {1: pytest.approx(0.2), 2: 0.2, 3: None}
    assert "remove_union_3" in report.to_dict()["remove_union_drops"]


def test_localization(split_bags):
    perfect = {bag.id: list(bag.planted) for bag in split_bags if bag.planted}
    result = localization(perfect, split_bags)
    assert result.dice == 1.0 and result.precision == 1.0 and result.recall == 1.0
    unplanted = [bag.restrict(range(bag.num_patches)) for bag in split_bags]
    assert localization(perfect, unplanted) == UNAVAILABLE


def test_stability_needs_two_seeds(trained_state, split_bags):
    with pytest.raises(ContractError):
        stability(trained_state, split_bags, ["random_k"], [1])
    with pytest.raises(ContractError):
        stability(trained_state, split_bags, ["random_k"], [1, 2], perturbation="shake")


def test_feature_noise_stability(trained_state, split_bags):
    results = stability(trained_state, split_bags, ["attention_topk", "gce_discrete"], [1, 2],
                        perturbation="feature_noise", fraction=0.25)
    assert [r.rule for r in results] == ["attention_topk", "gce_discrete"]
    for r in results:
        assert r.runs == 2
        assert 0.0 <= r.jaccard <= 1.0
        assert 0.0 <= r.flip_rate <= 1.0


def test_perturb_bag_is_seeded(split_bags):
    bag = split_bags[0]
    a = perturb_bag(bag, 5)
    b = perturb_bag(bag, 5)
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.features, bag.features)


def test_interventional_bound_holds_on_every_subset():
    report = audits.interventional_bound_audit(num_bags=2, num_patches=6)
    assert report.checked == 2 * 2 ** 6
    assert report.violations == 0
    with pytest.raises(ContractError):
        audits.interventional_bound_audit(num_bags=1, num_patches=11)


def test_recoverability_bound(trained_state, split_bags):
    runs = [audits.recoverability_bound_audit(trained_state, bag, probes=60) for bag in split_bags[:4]]
    assert all(r.holds for r in runs)
    summary = audits.recoverability_summary(runs)
    assert summary["bags"] == 4 and summary["violations"] == 0
    assert audits.recoverability_summary([]) == {"bags": 0, "violations": 0}


def test_run_diagnostics_selected_sections(trained_state, dataset):
    cfg = DiagnosticsConfig(sections=["snr", "localization", "inference_cost"], budget_fraction=0.25)
    seen = []
    report = run_diagnostics(trained_state, dataset, cfg, progress=seen.append)
    assert seen == ["snr", "localization", "inference_cost"]
    assert report["bags"] == len(dataset.split("test"))
    assert "same_budget" not in report
    snr = report["snr"]
    assert snr["keep_only_drop"] + snr["evidence_sufficiency"] == pytest.approx(snr["full_macro_f1"])
    assert set(report["localization"]) == {"gce_recovered", "gce_discrete", "attention_topk", "random_k"}


def test_run_diagnostics_backbone(backbone, dataset):
    cfg = DiagnosticsConfig(sections=["snr", "audits"], audit_bags=1, audit_patches=4)
    report = run_diagnostics(backbone, dataset, cfg)
    assert report["snr"] == UNAVAILABLE
    assert report["audits"]["recoverability"] == UNAVAILABLE
    assert report["audits"]["interventional"]["violations"] == 0


@pytest.mark.parametrize("field,value,key", [
    ("sections", ["snr", "horoscope"], "diagnostics.sections"),
    ("stability_seeds", [1], "diagnostics.stability_seeds"),
    ("split", "holdout", "diagnostics.split"),
    ("rules", ["magic"], "diagnostics.rules"),
])
def test_diagnostics_config_validation(field, value, key):
    with pytest.raises(ConfigError) as info:
        DiagnosticsConfig(**{field: value}).validate()
    assert info.value.key == key


def test_anchor_bank_variants(dataset):
    bank = dataset.anchors
    random_bank = sweeps.random_anchor_bank(bank, seed=3)
    assert np.allclose(random_bank.anchors @ random_bank.anchors.T, np.eye(bank.size), atol=1e-10)
    shuffled = sweeps.shuffled_anchor_bank(bank)
    assert np.array_equal(shuffled.anchors[1], bank.anchors[0])
    assert shuffled.names == bank.names


def test_grounding_variant_settings(dataset):
    cfg = small_train_config()
    _, off = sweeps.grounding_variant(dataset, cfg, "no_grounding")
    assert off.lambda_ground == 0.0
    _, loose = sweeps.grounding_variant(dataset, cfg, "unconstrained_bridge")
    assert not loose.constrained_bridge
    moved, same = sweeps.grounding_variant(dataset, cfg, "random_anchors")
    assert same is cfg and moved.bags is dataset.bags
    assert not np.array_equal(moved.anchors.anchors, dataset.anchors.anchors)


def test_budget_sweep_rows(dataset):
    rows = sweeps.budget_sweep(dataset, small_train_config(epochs=1), grid=[0.05, 0.5])
    assert [r["rho"] for r in rows] == [0.05, 0.5]
    assert [r["operating_point"] for r in rows] == [True, False]
    assert all("macro_f1" in r and "max_budget_loss" in r for r in rows)


def test_ablation_ladder(dataset):
    rows = sweeps.ablation_suite(dataset, small_train_config(epochs=1))
    assert [r["rung"] for r in rows] == [name for name, _, _ in sweeps.ABLATION_LADDER]
    assert rows[0]["cd_gap"] == UNAVAILABLE
    assert rows[-1]["cd_gap"] != UNAVAILABLE


def test_summary_reports_gate_statistics(trained_state, split_bags):
    summary = interventions.summarize_model(trained_state, split_bags)
    assert 0.0 <= summary["gate_margin_median"] <= 0.5
    assert summary["gate_distance_median"] >= 0.0
    assert 0.0 < summary["mean_gate"] < 1.0
    assert summary["cd_gap_median"] != UNAVAILABLE


def test_backbone_summary_has_no_gate_statistics(backbone, split_bags):
    summary = interventions.summarize_model(backbone, split_bags)
    assert all(summary[key] == UNAVAILABLE for key in interventions.GATE_KEYS)


def test_gate_summary_on_binary_gates(trained_state, split_bags):
    explained = interventions.explain_split(trained_state, split_bags[:2])
    for e in explained.values():
        pi = np.zeros(len(e.inference.gates.pi))
        pi[e.evidence.indices] = 1.0
        e.inference.gates.pi = pi
    stats = interventions.gate_summary(explained, 0.5)
    assert stats["gate_margin_median"] == 0.5
    assert stats["gate_distance_median"] == 0.0
    assert interventions.gate_summary({}, 0.5)["mean_gate"] == UNAVAILABLE


def test_fixed_temperature_config():
    cfg = sweeps.fixed_temperature(small_train_config())
    cfg.validate()
    assert not cfg.anneal
    assert [cfg.temperature(e) for e in range(cfg.epochs)] == [1.0] * cfg.epochs


def test_temperature_control_rows(dataset):
    rows = sweeps.temperature_control(dataset, small_train_config())
    assert [r["variant"] for r in rows] == ["annealed", "fixed_temperature"]
    assert rows[0]["final_temperature"] == pytest.approx(0.4)
    assert rows[1]["final_temperature"] == 1.0
    assert all(r["gate_margin_median"] != UNAVAILABLE for r in rows)
