"""Mortality prognosis from longitudinal lab findings with tree ensembles and a reject option."""

__version__ = "0.1.0"

from .cohort import Cohort, PatientRecord, ingest_cohort
from .datasets import Dataset, build_dataset, build_day_datasets, split_cohort
from .ensemble import Forest, HyperConfig, fit, load_model, save_model
from .evaluation import EvalReport, evaluate
from .metrics import macro_f2, roc_auc
from .selection import SearchSpec, random_search
from .synth import GeneratorSpec, generate
from .uncertainty import apply_threshold, find_uncertain_threshold

__all__ = [
    "Cohort",
    "Dataset",
    "EvalReport",
    "Forest",
    "GeneratorSpec",
    "HyperConfig",
    "PatientRecord",
    "SearchSpec",
    "apply_threshold",
    "build_dataset",
    "build_day_datasets",
    "evaluate",
    "find_uncertain_threshold",
    "fit",
    "generate",
    "ingest_cohort",
    "load_model",
    "macro_f2",
    "random_search",
    "roc_auc",
    "save_model",
    "split_cohort",
]
