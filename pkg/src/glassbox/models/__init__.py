from .gbt import GbtConfig, GbtModel, gain_importance, logistic_loss, train_gbt
from .linear import ConvergenceError, LinearModel, penalized_loss, train_logistic
from .metrics import MetricError, MetricReport, Predictor, auc, classification_metrics, evaluate, predict_proba, r2_score
from .tree import Tree, TrainingError, TreeModel, train_decision_tree

__all__ = [
    "GbtConfig",
    "GbtModel",
    "gain_importance",
    "logistic_loss",
    "train_gbt",
    "ConvergenceError",
    "LinearModel",
    "penalized_loss",
    "train_logistic",
    "MetricError",
    "MetricReport",
    "Predictor",
    "auc",
    "classification_metrics",
    "evaluate",
    "predict_proba",
    "r2_score",
    "Tree",
    "TrainingError",
    "TreeModel",
    "train_decision_tree",
]
