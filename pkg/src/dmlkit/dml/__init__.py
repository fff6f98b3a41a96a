from .did import did_canonical, dml_did_panel, dml_did_rcs
from .engine import DmlResult, generic_dml, linear_score_result
from .estimators import (
    dml_atet,
    dml_gate,
    dml_irm_ate,
    dml_late,
    dml_plm,
    dml_pliv,
    irm_signals,
)
from .rct import rct_estimators
from .rdd import rdd_sharp

__all__ = [
    "DmlResult",
    "did_canonical",
    "dml_atet",
    "dml_did_panel",
    "dml_did_rcs",
    "dml_gate",
    "dml_irm_ate",
    "dml_late",
    "dml_plm",
    "dml_pliv",
    "generic_dml",
    "irm_signals",
    "linear_score_result",
    "rct_estimators",
    "rdd_sharp",
]
