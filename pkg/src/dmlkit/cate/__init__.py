from .blp import BlpResult, blp_cate, heterogeneity_blp_test
from .meta import CateModel, meta_learn
from .policy import TreePolicy, optimal_policy_value, policy_learn, policy_value
from .scoring import compare_models, dr_loss, dr_score, ensemble
from .signals import DrSignal, dr_signal, three_way_split
from .validation import CalibrationReport, UpliftCurves, calibration, toc_qini

__all__ = [
    "BlpResult",
    "CalibrationReport",
    "CateModel",
    "DrSignal",
    "TreePolicy",
    "UpliftCurves",
    "blp_cate",
    "calibration",
    "compare_models",
    "dr_loss",
    "dr_score",
    "dr_signal",
    "ensemble",
    "heterogeneity_blp_test",
    "meta_learn",
    "optimal_policy_value",
    "policy_learn",
    "policy_value",
    "three_way_split",
    "toc_qini",
]
