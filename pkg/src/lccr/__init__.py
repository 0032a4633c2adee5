"""Locality-constrained collaborative representation (LCCR) for nearest-subspace
face recognition, with CRC-RLS and LRC as special cases."""

from .classifier import (
    PartitionScheme,
    classify,
    classify_batch,
    classify_partitioned,
    classify_unregularized,
    partition_image,
)
from .coder import CoderModel, build_coder, code_batch, code_one, objective_value
from .datamodel import (
    ClassificationResult,
    Code,
    CoderParams,
    LabeledDictionary,
    class_selector,
    make_labeled_dictionary,
)
from .neighbors import MetricState, distance, eps_ball, fit_metric, knn
from .preprocess import PcaModel, fit_pca, project, unit_normalize_columns

__version__ = "0.1.0"
