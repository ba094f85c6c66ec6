"""Two-source biomarker classification: spectra preprocessing, peak
features, base classifiers, fusion strategies and resampled evaluation."""

from biofuse.dataset import CASE, CONTROL, Dataset, SourceTag
from biofuse.errors import BiofuseError
from biofuse.evaluation import EvalReport, SplitPlan, corrected_t_test, make_splits, roc_auc, run_experiment
from biofuse.fusion import FusionSpec, ScoreMode, Strategy, data_merge, t_test_select, train_fusion
from biofuse.models import predict_label, predict_score, train_model
from biofuse.peaks import PeakModel, build_peak_model, extract_features
from biofuse.pipeline import Pipeline, PipelineSpec, SourceBundle
from biofuse.spectra import PipelineConfig, Spectrum, preprocess_batch
from biofuse.synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "CASE", "CONTROL", "BiofuseError", "Dataset", "EvalReport", "FusionSpec", "PeakModel",
    "Pipeline", "PipelineConfig", "PipelineSpec", "ScoreMode", "SourceBundle", "SourceTag",
    "Spectrum", "SplitPlan", "Strategy", "SynthConfig", "build_peak_model", "corrected_t_test",
    "data_merge", "extract_features", "generate", "make_splits", "predict_label", "predict_score",
    "preprocess_batch", "roc_auc", "run_experiment", "t_test_select", "train_fusion", "train_model",
]
