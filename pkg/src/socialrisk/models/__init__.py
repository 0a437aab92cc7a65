from socialrisk.models.cv import CVResult, CVSelection, grid_search_cv, stratified_kfold
from socialrisk.models.gbdt import GBDTParams, Tree, TreeEnsemble, fit_gbdt
from socialrisk.models.irls import IRLSFit, fit_logistic_irls
from socialrisk.models.linear import LinearModel, fit_penalized_logistic
from socialrisk.models.store import load_model, save_model

__all__ = [
    "CVResult",
    "CVSelection",
    "GBDTParams",
    "IRLSFit",
    "LinearModel",
    "Tree",
    "TreeEnsemble",
    "fit_gbdt",
    "fit_logistic_irls",
    "fit_penalized_logistic",
    "grid_search_cv",
    "load_model",
    "save_model",
    "stratified_kfold",
]
