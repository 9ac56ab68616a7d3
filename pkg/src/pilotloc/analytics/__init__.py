"""Closed-form performance predictions: CRLB and the average sum data rate."""

from .angle_expectation import AngleErrorModel, default_bounds, e3_table, expectation_E3
from .channel_moments import (DefectMoments, channel_moment_2, channel_moment_4, defect_moments,
                              noise_moments, partitions)
from .fim import FimResult, crlb_stddevs, fim, mean_jacobian
from .sdr import SdrMethod, SdrPrediction, rate_from_moments, sdr_predict

__all__ = [
    "AngleErrorModel", "DefectMoments", "FimResult", "SdrMethod", "SdrPrediction",
    "channel_moment_2", "channel_moment_4", "crlb_stddevs", "default_bounds", "defect_moments",
    "e3_table", "expectation_E3", "fim", "mean_jacobian", "noise_moments", "partitions",
    "rate_from_moments", "sdr_predict",
]
