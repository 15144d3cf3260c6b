"""Lexical geolocation of micro-posts.

Profile locations are resolved against a template-generated gazetteer, and
post content is geolocated with TF-IDF and LSI centroid classifiers.
"""

from geodiverse.gazetteer import (
    AdminUnit,
    GeneratedName,
    HierarchyError,
    Level,
    LocationHierarchy,
    NameIndex,
    ResolvedLocation,
    expand_templates,
    load_hierarchy,
    normalize,
    resolve,
)
from geodiverse.corpus import (
    Document,
    GroupingStrategy,
    MicroPost,
    Token,
    filter_for_training,
    group,
    ingest,
    tokenize,
)
from geodiverse.classify import (
    ClassifierSpec,
    LocationIndex,
    Prediction,
    Variant,
    diverse_timeline,
    predict,
    predict_baseline,
    train,
)
from geodiverse.evaluation import (
    EvalReport,
    FoldPlan,
    cross_validate,
    select_locations,
    stratified_folds,
)

__version__ = "0.1.0"

__all__ = [
    "AdminUnit",
    "ClassifierSpec",
    "Document",
    "EvalReport",
    "FoldPlan",
    "GeneratedName",
    "GroupingStrategy",
    "HierarchyError",
    "Level",
    "LocationHierarchy",
    "LocationIndex",
    "MicroPost",
    "NameIndex",
    "Prediction",
    "ResolvedLocation",
    "Token",
    "Variant",
    "cross_validate",
    "diverse_timeline",
    "expand_templates",
    "filter_for_training",
    "group",
    "ingest",
    "load_hierarchy",
    "normalize",
    "predict",
    "predict_baseline",
    "resolve",
    "select_locations",
    "stratified_folds",
    "tokenize",
    "train",
]
