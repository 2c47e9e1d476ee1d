"""Sufficiency, necessity and recoverability diagnostics."""

from .audits import interventional_bound_audit, recoverability_bound_audit
from .baselines import baseline_subset, inference_cost, same_budget_table
from .interventions import budget_k, snr_evaluate, summarize_model
from .localization import localization
from .stability import stability
from .subsets import minimal_subset_search, minimal_subset_table
from .suite import DiagnosticsConfig, run_diagnostics
from .sweeps import ablation_suite, budget_sweep, grounding_variants, temperature_control

__all__ = [
    "DiagnosticsConfig",
    "ablation_suite",
    "baseline_subset",
    "budget_k",
    "budget_sweep",
    "grounding_variants",
    "inference_cost",
    "interventional_bound_audit",
    "localization",
    "minimal_subset_search",
    "minimal_subset_table",
    "recoverability_bound_audit",
    "run_diagnostics",
    "same_budget_table",
    "snr_evaluate",
    "stability",
    "summarize_model",
    "temperature_control",
]
