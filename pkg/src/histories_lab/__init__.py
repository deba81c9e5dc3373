"""Consistency criteria for decoherent histories, and the anomalies of the weakened ones."""

from histories_lab.certificates import AnomalyCertificate, AnomalyKind, AnomalyScan, ScanStatus
from histories_lab.composition import compose, composition_anomaly, linear_positivity_composition_anomaly
from histories_lab.consistency import (
    brute_force_consistency,
    classify,
    decoherence_functional,
    probabilities_linear,
    probabilities_standard,
    sum_rule_check,
)
from histories_lab.errors import HistoriesError, InvalidInputError, NumericFailure, PreconditionError
from histories_lab.histories import (
    EventSchedule,
    HistoryFamily,
    Partition,
    ProjectorDecomposition,
    build_family,
    coarse_grain,
    validate_decomposition,
)
from histories_lab.kernel import Tolerance
from histories_lab.perturbation import PhaseKick, perturb_family, perturbed_dfunc, robustness_scan
from histories_lab.search import SearchSpec, SearchTarget, canonical_witness, random_family, search

__all__ = [
    "AnomalyCertificate",
    "AnomalyKind",
    "AnomalyScan",
    "EventSchedule",
    "HistoriesError",
    "HistoryFamily",
    "InvalidInputError",
    "NumericFailure",
    "Partition",
    "PhaseKick",
    "PreconditionError",
    "ProjectorDecomposition",
    "ScanStatus",
    "SearchSpec",
    "SearchTarget",
    "Tolerance",
    "brute_force_consistency",
    "build_family",
    "canonical_witness",
    "classify",
    "coarse_grain",
    "compose",
    "composition_anomaly",
    "decoherence_functional",
    "linear_positivity_composition_anomaly",
    "perturb_family",
    "perturbed_dfunc",
    "probabilities_linear",
    "probabilities_standard",
    "random_family",
    "robustness_scan",
    "search",
    "sum_rule_check",
    "validate_decomposition",
]
