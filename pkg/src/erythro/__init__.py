"""Low-footprint blood-cell image classification.

Fixed feature extractors (a dependency-free builtin featurizer or
TorchScript CNN backbones used headless) feed two classical classifiers, a
one-vs-rest linear SVM and a Gaussian Naive Bayes, evaluated with
stratified k-fold cross-validation.
"""

from .classifiers import (
    NbModel,
    Prediction,
    Scaler,
    SvmModel,
    apply_scaler,
    fit_scaler,
    load_model,
    predict_nb,
    predict_svm,
    save_model,
    train_nb,
    train_svm,
)
from .dataset import ClassLabel, Dataset, ImageVariant, LabeledImage, load_dataset, load_image
from .errors import ErythroError
from .evaluation import (
    ConfusionMatrix,
    EvalReport,
    FoldPlan,
    MetricSet,
    benchmark,
    compute_metrics,
    cross_validate,
    stratified_kfold,
)
from .features import (
    BACKBONE_REGISTRY,
    BUILTIN_DIM,
    BackboneSpec,
    FeatureMatrix,
    FeatureVector,
    extract_builtin,
    extract_cnn,
    load_features,
    resolve_backbone,
    save_features,
)
from .report import ExperimentGrid, read_json, render_table, write_csv, write_json

__version__ = "0.1.0"

__all__ = [
    "BACKBONE_REGISTRY",
    "BUILTIN_DIM",
    "BackboneSpec",
    "ClassLabel",
    "ConfusionMatrix",
    "Dataset",
    "ErythroError",
    "EvalReport",
    "ExperimentGrid",
    "FeatureMatrix",
    "FeatureVector",
    "FoldPlan",
    "ImageVariant",
    "LabeledImage",
    "MetricSet",
    "NbModel",
    "Prediction",
    "Scaler",
    "SvmModel",
    "apply_scaler",
    "benchmark",
    "compute_metrics",
    "cross_validate",
    "extract_builtin",
    "extract_cnn",
    "fit_scaler",
    "load_dataset",
    "load_features",
    "load_image",
    "load_model",
    "predict_nb",
    "predict_svm",
    "read_json",
    "render_table",
    "resolve_backbone",
    "save_features",
    "save_model",
    "stratified_kfold",
    "train_nb",
    "train_svm",
    "write_csv",
    "write_json",
]
