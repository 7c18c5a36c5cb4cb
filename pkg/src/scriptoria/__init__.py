"""Writer identification and retrieval from local image descriptors.

The toolkit learns local features without labels (cluster-membership
surrogate classes over filtered keypoint descriptors), aggregates them
into global image descriptors (VLAD and multi-codebook VLAD with joint
whitening, or sum pooling), optionally re-encodes queries with exemplar
SVMs, and evaluates retrieval with leave-one-image-out ranking metrics.
"""

from .clustering import (Assignment, MiniBatchKMeans, SurrogateDataset,
                         assign_nearest, assign_nearest_batch,
                         build_surrogate_dataset, ratio_filter)
from .config import PipelineConfig, load_config
from .encoding import (MVladEncoder, SumEncoder, VladEncoder, sum_pool,
                       vlad_accumulate, vlad_encode)
from .esvm import (EsvmReencoder, MulticlassSvm, SvmModel, esvm_feature,
                   select_c, train_linear_svm)
from .exceptions import (ClampedEigenvalueWarning, ConfigMismatchWarning,
                         ConvergenceWarning, DegenerateInputWarning,
                         FormatError, ManifestError, NotFittedError,
                         TruncatedListWarning)
from .image import binarize_otsu, load_image, standardize_patch
from .keypoints import (DetectorParams, KeypointRecord, dedupe_keypoints,
                        detect_keypoints)
from .manifest import DatasetManifest, load_manifest, write_manifest
from .normalize import (hellinger_normalize, l2_normalize, power_normalize)
from .retrieval import (EvalReport, RankedList, average_precision, hard_n,
                        leave_one_out_eval, precision_at_n, rank, soft_n)
from .whitening import PCAWhitener

__version__ = "0.1.0"

__all__ = [
    "Assignment", "ClampedEigenvalueWarning", "ConfigMismatchWarning",
    "ConvergenceWarning", "DatasetManifest", "DegenerateInputWarning",
    "DetectorParams", "EsvmReencoder", "EvalReport", "FormatError",
    "KeypointRecord", "ManifestError", "MiniBatchKMeans", "MulticlassSvm",
    "MVladEncoder", "NotFittedError", "PCAWhitener", "PipelineConfig",
    "RankedList", "SumEncoder", "SurrogateDataset", "SvmModel",
    "TruncatedListWarning", "VladEncoder", "assign_nearest",
    "assign_nearest_batch", "average_precision", "binarize_otsu",
    "build_surrogate_dataset", "dedupe_keypoints", "detect_keypoints",
    "esvm_feature", "hard_n", "hellinger_normalize", "l2_normalize",
    "leave_one_out_eval", "load_config", "load_image", "load_manifest",
    "power_normalize", "precision_at_n", "rank", "ratio_filter",
    "select_c", "soft_n", "standardize_patch", "sum_pool",
    "train_linear_svm", "vlad_accumulate", "vlad_encode", "write_manifest",
]
