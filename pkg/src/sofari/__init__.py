"""Debiased inference on the latent factors of sparse SVD multi-response regression."""
__version__ = "0.1.0"

from .core import RegressionData, SvdTriple, Variant, compose_coefficient
from .datagen import Design, SimSetting, gen_instance, preset
from .debias import (DebiasedLayer, SofariConfig, SofariResult, debias_layer,
                     diagnose_orthogonality, run_sofari, run_sofari_split)
from .errcov import adaptive_threshold_cov, residuals
from .precision import nodewise_precision
from .report import bh_fdr, ci, coverage_run, kde_export, pvalue_two_sided, standardized_stat
from .sofar import SofarConfig, SofarEstimate, fit_sofar

__all__ = [
    "RegressionData", "SvdTriple", "Variant", "compose_coefficient",
    "Design", "SimSetting", "gen_instance", "preset",
    "DebiasedLayer", "SofariConfig", "SofariResult", "debias_layer",
    "diagnose_orthogonality", "run_sofari", "run_sofari_split",
    "adaptive_threshold_cov", "residuals", "nodewise_precision",
    "bh_fdr", "ci", "coverage_run", "kde_export", "pvalue_two_sided", "standardized_stat",
    "SofarConfig", "SofarEstimate", "fit_sofar",
]
