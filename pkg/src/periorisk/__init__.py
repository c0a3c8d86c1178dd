"""Perioperative risk prediction under class imbalance.

Weighted logistic regression, kernel-density naive Bayes and stratified
random forests, with stepwise, wrapper and mutual-information variable
selection, conditional-table imputation and class-specific evaluation.
"""

from .data import Dataset, Schema, SplitSpec, Variable, VariableKind, load_csv, temporal_split
from .forest import RFWrapperSelector, StratifiedRandomForest
from .infosel import HybridCMISelector, conditional_mutual_information, mutual_information
from .logit import StepwiseAICSelector, WeightedLogisticRegression
from .metrics import EvaluationReport, auc, brier_per_class, evaluate
from .nbkde import KDENaiveBayes, NBWrapperSelector
from .pipeline import RunConfig, render_table, run
from .preprocess import ConditionalTableImputer

__version__ = "0.1.0"

__all__ = [
    "ConditionalTableImputer",
    "Dataset",
    "EvaluationReport",
    "HybridCMISelector",
    "KDENaiveBayes",
    "NBWrapperSelector",
    "RFWrapperSelector",
    "RunConfig",
    "Schema",
    "SplitSpec",
    "StepwiseAICSelector",
    "StratifiedRandomForest",
    "Variable",
    "VariableKind",
    "WeightedLogisticRegression",
    "auc",
    "brier_per_class",
    "conditional_mutual_information",
    "evaluate",
    "load_csv",
    "mutual_information",
    "render_table",
    "run",
    "temporal_split",
]
