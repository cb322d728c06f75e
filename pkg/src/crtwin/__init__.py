"""Win statistics for hierarchical composite endpoints in cluster-randomized trials."""
from .analysis import METHODS, Analysis, analyze
from .data import (
    BOTH_EVENTS,
    GEHAN,
    ComparisonRule,
    Dataset,
    EventRecord,
    RuleVariant,
    SubjectOutcome,
    compare,
    load_dataset,
    parse_event_log,
    read_event_csv,
    write_event_csv,
)
from .estimators import ESTIMANDS, WinEstimates, estimate_all, gradients
from .jel import jel_ci, jel_test, pseudo_values, solve_lambda
from .pairwise import PairCache, cluster_scores, leave_one_cluster, subject_projections, tally_cross_arm
from .randomization import PermutationPlan, fs_score_test, permutation_test
from .variance import TestResult

__version__ = "0.1.0"

__all__ = [
    "METHODS", "ESTIMANDS", "Analysis", "analyze", "BOTH_EVENTS", "GEHAN", "ComparisonRule", "RuleVariant",
    "Dataset", "EventRecord", "SubjectOutcome", "compare", "load_dataset", "parse_event_log",
    "read_event_csv", "write_event_csv", "WinEstimates", "estimate_all", "gradients", "jel_ci", "jel_test",
    "pseudo_values", "solve_lambda", "PairCache", "cluster_scores", "leave_one_cluster",
    "subject_projections", "tally_cross_arm", "PermutationPlan", "fs_score_test", "permutation_test",
    "TestResult",
]
