"""Self-checks of the samplers and the likelihood against closed-form fields."""
from __future__ import annotations

import math

import numpy as np

from ..evt import VerificationReport, _rel_check
from ..transforms import TransformSpec
from .fields import GaussianPathField, LinearField, PointMassField
from .likelihood import hutchinson_divergence, nll, rademacher
from .model import TrainedModel
from .sampling import ddim_sample, denoiser_from_velocity, sample
from .schedules import Schedule

GAUSS_ENTROPY = 0.5 * math.log(2.0 * math.pi * math.e)


def _gauss_model(d, sigma, kind):
    schedule = Schedule(kind)
    return TrainedModel(GaussianPathField(d, sigma, schedule), TransformSpec.identity(d), schedule)


def check_euler_gaussian(sigma=2.0, n=100_000, steps=100, seed=0):
    """Euler samples from the exact Gaussian-path field: mean and variance."""
    res = sample(_gauss_model(1, sigma, "linear"), n, steps, seed=seed)
    x = res.samples[:, 0]
    mean, var = float(x.mean()), float(x.var())
    return [
        VerificationReport("euler_gaussian_mean", "mean", 0.0, mean, "+/-0.02",
                           abs(mean) <= 0.02, {"sigma": sigma, "n": n, "steps": steps}),
        _rel_check("euler_gaussian_variance", "variance", sigma**2, var, 0.05,
                   {"sigma": sigma, "n": n, "steps": steps}),
    ]


def check_ddim_gaussian(sigma=2.0, n=100_000, steps=500, seed=0):
    """Deterministic DDIM from the exact Gaussian denoiser: terminal variance."""
    res = ddim_sample(_gauss_model(1, sigma, "vp_trig"), n, steps, "zero", seed=seed)
    var = float(res.samples[:, 0].var())
    return _rel_check("ddim_gaussian_variance", "variance", sigma**2, var, 0.02,
                      {"sigma": sigma, "n": n, "steps": steps})


def check_gaussian_nll(n=100_000, seed=0):
    """Likelihood of N(0, 1) data under its own exact flow is its entropy."""
    x = np.random.default_rng(seed).standard_normal((n, 1))
    est = nll(_gauss_model(1, 1.0, "linear"), x, seed=seed)
    return VerificationReport("gaussian_nll_entropy", "nll_per_dim", GAUSS_ENTROPY,
                              est.nll_per_dim, "+/-0.01",
                              abs(est.nll_per_dim - GAUSS_ENTROPY) <= 0.01, {"n": n})


def check_hutchinson(d=5, probes=10_000, seed=0):
    """Averaged Rademacher estimates recover the trace of a linear field."""
    rng = np.random.default_rng(seed)
    A = 2.0 * np.eye(d) + 0.3 * rng.standard_normal((d, d))
    field = LinearField(A)
    x = rng.standard_normal((1, d))
    eps = rademacher((probes, 1, d), rng)
    est = float(hutchinson_divergence(field.jvp, x, 0.5, eps)[0])
    return _rel_check("hutchinson_trace", "trace", float(np.trace(A)), est, 0.01,
                      {"d": d, "probes": probes})


def check_point_mass_denoiser(seed=0):
    """Under a point-mass data law the posterior mean of x0 is the point itself."""
    center = np.array([1.5, -0.5])
    schedule = Schedule("linear")
    model = TrainedModel(PointMassField(center, schedule), TransformSpec.identity(2), schedule)
    x = np.random.default_rng(seed).standard_normal((1000, 2))
    errs = [np.max(np.abs(denoiser_from_velocity(model, x, t)[0] - center))
            for t in (0.1, 0.5, 0.9)]
    worst = float(max(errs))
    return VerificationReport("point_mass_denoiser", "max |x0_hat - c|", 0.0, worst, "<=1e-12",
                              worst <= 1e-12, {})


def flow_checks(seed: int = 0):
    return [
        *check_euler_gaussian(seed=seed),
        check_ddim_gaussian(seed=seed),
        check_gaussian_nll(seed=seed),
        check_hutchinson(seed=seed),
        check_point_mass_denoiser(seed=seed),
    ]
