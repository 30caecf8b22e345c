"""Worked studies: newsvendor ROI, mean-variance dispersion, interval DEA
and a nonconvex min-max ratio, with perfect-hindsight comparisons."""

from .appendix_a import AppendixACheck, appendix_a_check, appendixA_check
from .dea import (
    DeaData,
    dea_efficiency,
    dea_program,
    dea_rank,
    dea_simulate,
    dea_sweep,
    load_dea,
    nominal_efficiency,
    rank_from_efficiencies,
)
from .hindsight import perfect_hindsight
from .meanvar import (
    MeanVarData,
    dispersion,
    meanvar_generate,
    meanvar_hindsight,
    meanvar_program,
    meanvar_solve,
    meanvar_study,
    meanvar_worst_case,
)
from .newsvendor import (
    NewsvendorData,
    load_newsvendor,
    newsvendor_generate,
    newsvendor_hindsight,
    newsvendor_primal,
    newsvendor_program,
    newsvendor_roi,
    newsvendor_solve,
    newsvendor_study,
    newsvendor_worst_case,
    write_newsvendor,
)

__all__ = [
    "AppendixACheck", "appendix_a_check", "appendixA_check",
    "DeaData", "dea_efficiency", "dea_program", "dea_rank", "dea_simulate", "dea_sweep",
    "load_dea", "nominal_efficiency", "rank_from_efficiencies",
    "perfect_hindsight",
    "MeanVarData", "dispersion", "meanvar_generate", "meanvar_hindsight", "meanvar_program",
    "meanvar_solve", "meanvar_study", "meanvar_worst_case",
    "NewsvendorData", "load_newsvendor", "newsvendor_generate", "newsvendor_hindsight",
    "newsvendor_primal", "newsvendor_program", "newsvendor_roi", "newsvendor_solve",
    "newsvendor_study", "newsvendor_worst_case", "write_newsvendor",
]
