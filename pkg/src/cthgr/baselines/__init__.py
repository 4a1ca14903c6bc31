from .cnn3d import REFERENCE_CNN3D_COUNTS, Cnn3d, Cnn3dConfig, count_parameters
from .features import extract_features, extract_features_batch
from .svm import LinearSVM, SvmConfig, train_svm

__all__ = [
    "REFERENCE_CNN3D_COUNTS",
    "Cnn3d",
    "Cnn3dConfig",
    "LinearSVM",
    "SvmConfig",
    "count_parameters",
    "extract_features",
    "extract_features_batch",
    "train_svm",
]
