"""Flow matching: schedules, training, sampling and likelihoods."""
from .fields import GaussianPathField, LinearField, PointMassField
from .likelihood import NLLEstimate, dopri5, hutchinson_divergence, nll
from .model import TrainConfig, TrainedModel, TrainLog, train
from .sampling import (SampleResult, ddim_eta, ddim_sample, ddim_step, denoise,
                       denoiser_from_velocity, sample, score_from_velocity)
from .schedules import Schedule, interpolate

__all__ = [
    "GaussianPathField", "LinearField", "PointMassField", "NLLEstimate", "dopri5",
    "hutchinson_divergence", "nll", "TrainConfig", "TrainedModel", "TrainLog", "train",
    "SampleResult", "ddim_eta", "ddim_sample", "ddim_step", "denoise",
    "denoiser_from_velocity", "sample", "score_from_velocity", "Schedule", "interpolate",
]
