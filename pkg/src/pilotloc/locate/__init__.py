"""Localisation from pilot observations: moments, grid MLE, AO-ML and MUSIC."""

from .aoml import SolverConfig, aoml_estimate
from .grid import GridSpec, grid_maximize
from .matching import match_to_truth
from .mle import mle_estimate
from .moments import DefectStats, MomentModel, PilotModel, build_moments, defect_stats
from .music import RankDeficiencyError, music_doppler_estimate, music_estimate
from .params import ParamVector

__all__ = [
    "DefectStats", "GridSpec", "MomentModel", "ParamVector", "PilotModel", "RankDeficiencyError",
    "SolverConfig", "aoml_estimate", "build_moments", "defect_stats", "grid_maximize",
    "match_to_truth", "mle_estimate", "music_doppler_estimate", "music_estimate",
]
