"""qoekit: measure and predict perceived experience of streaming text services.

Shapes token streams under controlled quality-of-service settings,
collects ratings through a session service, cleans them into Mean
Opinion Scores, analyzes the factor structure, and fits regression
models over the five controllable parameters.
"""

__version__ = "0.1.0"

from .model import (ConditionId, ContentConfig, FeatureVector, Grid, MosTable,
                    PipelineParams, QosConfig, RaterProfile, RatingRecord,
                    default_grid, from_feature_vector, to_feature_vector,
                    validate_record)
from .pipeline import run_pipeline
from .shaper import play, schedule_emission, shape_upstream, tokenize
from .stats import kendall, pearson, spearman

__all__ = [
    "ConditionId", "ContentConfig", "FeatureVector", "Grid", "MosTable",
    "PipelineParams", "QosConfig", "RaterProfile", "RatingRecord",
    "default_grid", "from_feature_vector", "to_feature_vector",
    "validate_record", "run_pipeline", "play", "schedule_emission",
    "shape_upstream", "tokenize", "kendall", "pearson", "spearman",
    "__version__",
]
