"""Image comparisons, Fréchet distance and the six counterfactual scores."""

from cfbench.metrics.features import FeatureExtractor, extract_features, extract_features_batch
from cfbench.metrics.frechet import frechet_distance, gaussian_fit, sqrtm_psd
from cfbench.metrics.image import SsimParams, l1_distance, ssim3d, ssim_map
from cfbench.metrics.report import MetricReport, ModelMetrics
from cfbench.metrics.scores import (
    EvalItem,
    InterventionOutcome,
    composition_score,
    effectiveness_from,
    effectiveness_score,
    generalizability_score,
    intervention_outcomes,
    measure,
    minimality_from,
    minimality_score,
    realism_score,
    reversibility_score,
)

__all__ = [
    "EvalItem",
    "FeatureExtractor",
    "InterventionOutcome",
    "MetricReport",
    "ModelMetrics",
    "SsimParams",
    "composition_score",
    "effectiveness_from",
    "effectiveness_score",
    "extract_features",
    "extract_features_batch",
    "frechet_distance",
    "gaussian_fit",
    "generalizability_score",
    "intervention_outcomes",
    "l1_distance",
    "measure",
    "minimality_from",
    "minimality_score",
    "realism_score",
    "reversibility_score",
    "sqrtm_psd",
    "ssim3d",
    "ssim_map",
]
