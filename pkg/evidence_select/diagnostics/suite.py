"""The full diagnostics run behind ``evidence-select diagnose``."""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

from ..constants import (
    BASELINE_RULES,
    BUDGET_FRACTION,
    DEFAULT_SEED,
    DROP_TOLERANCE,
    LIPSCHITZ_PROBES,
    NECESSITY_DELTA,
    RECOVERABILITY_DELTA,
    SPLITS,
    SUBSET_POLICIES,
    SUBSET_SIZES,
    SUFFICIENCY_DELTA,
    UNAVAILABLE,
)
from ..errors import ConfigError
from ..model import ModelState
from ..pipeline import Explanation
from ..recovery import RecoveryConfig
from ..synthbag import Dataset
from ..training import TrainConfig
from . import audits
from .baselines import inference_cost, same_budget_table, baseline_subset
from .interventions import Thresholds, explain_split, snr_evaluate
from .localization import localization
from .stability import NOISE_SCALE, PERTURBATIONS, stability
from .subsets import minimal_subset_table


logger = logging.getLogger(__name__)

SECTIONS = [
    "snr",
    "same_budget",
    "minimal_subsets",
    "stability",
    "localization",
    "audits",
    "inference_cost",
]


@dataclass
class DiagnosticsConfig:
    """Which diagnostics run and with what settings."""
    split: str = "test"
    budget_fraction: float = BUDGET_FRACTION
    drop_tolerance: float = DROP_TOLERANCE
    subset_sizes: List[int] = field(default_factory=lambda: list(SUBSET_SIZES))
    subset_policies: List[str] = field(default_factory=lambda: list(SUBSET_POLICIES))
    rules: List[str] = field(default_factory=lambda: list(BASELINE_RULES))
    stability_seeds: List[int] = field(default_factory=lambda: [1, 2, 3])
    perturbation: str = "selector_reinit"
    noise_scale: float = NOISE_SCALE
    sufficiency_delta: float = SUFFICIENCY_DELTA
    necessity_delta: float = NECESSITY_DELTA
    recoverability_delta: float = RECOVERABILITY_DELTA
    probes: int = LIPSCHITZ_PROBES
    audit_bags: int = 10
    audit_patches: int = 8
    sections: List[str] = field(default_factory=lambda: list(SECTIONS))
    seed: int = DEFAULT_SEED

    def validate(self) -> None:
        if self.split not in SPLITS:
            raise ConfigError(f"must be one of {', '.join(SPLITS)}", "diagnostics.split")
        if not 0.0 < self.budget_fraction <= 1.0:
            raise ConfigError("must lie in (0, 1]", "diagnostics.budget_fraction")
        if any(k < 1 for k in self.subset_sizes):
            raise ConfigError("sizes must be >= 1", "diagnostics.subset_sizes")
        unknown = set(self.subset_policies) - set(SUBSET_POLICIES)
        if unknown:
            raise ConfigError(f"unknown policy {sorted(unknown)[0]!r}", "diagnostics.subset_policies")
        unknown = set(self.rules) - set(BASELINE_RULES)
        if unknown:
            raise ConfigError(f"unknown rule {sorted(unknown)[0]!r}", "diagnostics.rules")
        if len(self.stability_seeds) < 2:
            raise ConfigError("need at least two seeds", "diagnostics.stability_seeds")
        if self.perturbation not in PERTURBATIONS:
            raise ConfigError(f"must be one of {', '.join(PERTURBATIONS)}", "diagnostics.perturbation")
        unknown = set(self.sections) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section {sorted(unknown)[0]!r}", "diagnostics.sections")
        if self.probes < 2:
            raise ConfigError("must be >= 2", "diagnostics.probes")

    def thresholds(self) -> Thresholds:
        return Thresholds(self.sufficiency_delta, self.necessity_delta, self.recoverability_delta)

    def to_dict(self) -> dict:
        return asdict(self)


def run_diagnostics(state: ModelState, dataset: Dataset, cfg: DiagnosticsConfig,
                    recovery_cfg: Optional[RecoveryConfig] = None,
                    train_cfg: Optional[TrainConfig] = None, threads: int = 1,
                    progress: Optional[Callable[[str], None]] = None,
                    explained: Optional[Dict[str, Explanation]] = None) -> Dict:
    """Run the configured sections and return the report as plain data.

    ``explained`` reuses recovered evidence already computed for the split.
    """
    cfg.validate()
    recovery_cfg = recovery_cfg or RecoveryConfig()
    bags = dataset.split(cfg.split)
    thresholds = cfg.thresholds()
    report: Dict = {"split": cfg.split, "bags": len(bags)}

    def announce(name: str) -> None:
        logger.info("diagnostics: %s", name)
        if progress:
            progress(name)

    if explained is None:
        explained = explain_split(state, bags, recovery_cfg, threads) if state.use_selector else {}
    evidence = {k: e.evidence.indices for k, e in explained.items()}

    if "snr" in cfg.sections:
        announce("snr")
        if explained:
            snr = snr_evaluate(state, bags, evidence, {k: e.cd_gap for k, e in explained.items()},
                               thresholds, threads)
            report["snr"] = snr.to_dict()
            report["snr"]["saturated"] = sum(e.evidence.saturated for e in explained.values())
        else:
            report["snr"] = UNAVAILABLE

    if "same_budget" in cfg.sections:
        announce("same_budget")
        report["same_budget"] = same_budget_table(
            state, bags, cfg.rules, cfg.budget_fraction, cfg.seed, recovery_cfg, thresholds,
            threads, explained or None,
        )

    if "minimal_subsets" in cfg.sections:
        announce("minimal_subsets")
        report["minimal_subsets"] = [
            r.to_dict() for r in minimal_subset_table(
                state, bags, cfg.subset_sizes, cfg.subset_policies, cfg.drop_tolerance, cfg.seed, threads)
        ]

    if "stability" in cfg.sections:
        announce("stability")
        report["stability"] = [
            r.to_dict() for r in stability(
                state, bags, cfg.rules, cfg.stability_seeds, cfg.perturbation, dataset,
                train_cfg or TrainConfig(), cfg.budget_fraction, recovery_cfg, cfg.noise_scale, threads)
        ]

    if "localization" in cfg.sections:
        announce("localization")
        section = {}
        if explained:
            section["gce_recovered"] = _as_dict(localization(evidence, bags))
        for rule in ("gce_discrete", "attention_topk", "random_k"):
            if rule == "gce_discrete" and not explained:
                continue
            matched = {
                bag.id: baseline_subset(rule, state, bag, cfg.budget_fraction, cfg.seed,
                                        explained.get(bag.id), recovery_cfg)
                for bag in bags
            }
            section[rule] = _as_dict(localization(matched, bags))
        report["localization"] = section

    if "audits" in cfg.sections:
        announce("audits")
        section = {
            "interventional": audits.interventional_bound_audit(
                cfg.audit_bags, cfg.audit_patches, seed=cfg.seed).to_dict(),
        }
        if explained:
            runs = [
                audits.recoverability_bound_audit(
                    state, bag, explained[bag.id].inference.gates.pi, explained[bag.id].evidence.indices,
                    cfg.probes, cfg.seed, recovery_cfg.threshold)
                for bag in bags
            ]
            section["recoverability"] = audits.recoverability_summary(runs)
        else:
            section["recoverability"] = UNAVAILABLE
        report["audits"] = section

    if "inference_cost" in cfg.sections:
        announce("inference_cost")
        report["inference_cost"] = inference_cost(state, bags, cfg.budget_fraction, recovery_cfg, cfg.seed, threads)

    return report


def _as_dict(value):
    return value if isinstance(value, str) else value.to_dict()
