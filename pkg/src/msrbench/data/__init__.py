from .dataset import (SPLIT_NAMES, TEST, TRAIN, VAL, Batch, ProcessedDataset, make_batches,
                      read_processed, split_811, split_assignment, write_processed)
from .features import (DatasetManifest, FeatureSpace, FeatureSpec, ManifestError,
                       builtin_manifest, declared_feature_space)
from .ingest import DataError, MissingColumnError, ingest, read_raw
from .stats import ScenarioStats, coefficient_of_variation, scenario_stats
from .synthetic import SyntheticSpec, filter_top_scenarios, gen_synthetic

__all__ = [
    "SPLIT_NAMES", "TRAIN", "VAL", "TEST", "Batch", "ProcessedDataset", "make_batches",
    "read_processed", "split_811", "split_assignment", "write_processed", "DatasetManifest",
    "FeatureSpace", "FeatureSpec", "ManifestError", "builtin_manifest", "declared_feature_space",
    "DataError", "MissingColumnError", "ingest", "read_raw", "ScenarioStats",
    "coefficient_of_variation", "scenario_stats", "SyntheticSpec", "filter_top_scenarios",
    "gen_synthetic",
]
