"""Generation by reverse-time integration, DDIM transitions, and denoisers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InverseOverflowError, ScheduleError
from ..transforms import apply_inverse

ETA_MODES = ("zero", "ddpm", "max")


@dataclass
class SampleResult:
    """Output of a sampler.

    ``samples`` is in data space, ``latent`` is the final state in
    transformed space (before any clamp).  A diverged run carries a reason
    and ``samples`` is ``None``.
    """

    samples: np.ndarray | None
    latent: np.ndarray | None
    diverged: str | None = None

    @property
    def ok(self) -> bool:
        return self.diverged is None


def _noise(model, n, seed, noise):
    if noise is not None:
        noise = np.array(noise, dtype=np.float64)
        if noise.shape != (n, model.d):
            raise ValueError(f"noise must have shape ({n}, {model.d})")
        return noise
    return np.random.default_rng(seed).standard_normal((n, model.d))


def _finish(model, z, clamp):
    latent = model.from_latent(z)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            x = apply_inverse(model.transform, latent, clamp=clamp)
    except InverseOverflowError as exc:
        return SampleResult(None, latent, str(exc))
    if not np.all(np.isfinite(x)):
        return SampleResult(None, latent, "non-finite sample")
    return SampleResult(x, latent)


def sample(model, n, steps=100, clamp=math.inf, seed=0, noise=None) -> SampleResult:
    """Euler integration of the learned ODE from ``t = 1`` down to ``t = 0``.

    With ``dt = 1 / steps`` the update at ``t = k / steps`` (``k = steps..1``)
    is ``z <- z - dt * v(z, t)``.  Gated coordinates are optionally clamped
    to ``[-clamp, clamp]`` before the inverse transform.  A non-finite state
    is reported in the result instead of raising.
    """
    steps = int(steps)
    if steps < 1:
        raise ValueError("need at least one integration step")
    z = _noise(model, n, seed, noise)
    dt = 1.0 / steps
    with np.errstate(all="ignore"):
        for k in range(steps, 0, -1):
            v = model.velocity(z, np.full(n, k / steps))
            z = z - dt * v
            if not np.all(np.isfinite(z)):
                return SampleResult(None, None, f"non-finite state at t={(k - 1) / steps:.4g}")
    return _finish(model, z, clamp)


# -- score and denoisers -------------------------------------------------------

def denoise(schedule, x, v, t):
    """Solve ``x = a x0 + b x1`` and ``v = a' x0 + b' x1`` for ``(x0, x1)``."""
    t = np.asarray(t, dtype=np.float64)
    a, b, da, db = schedule.coefficients(t)
    if np.ndim(t):
        a, b, da, db = (c[:, None] for c in (a, b, da, db))
    det = a * db - b * da
    if np.any(det == 0):
        raise ScheduleError("denoiser is undefined at this time")
    x0 = (db * x - b * v) / det
    x1 = (a * v - da * x) / det
    return x0, x1


def _check_open(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any((t <= 0.0) | (t >= 1.0)):
        raise ScheduleError("denoisers need t strictly inside (0, 1)")


def denoiser_from_velocity(model, x, t):
    """Posterior means ``(E[x0 | x_t], E[x1 | x_t])`` implied by the velocity field."""
    _check_open(t)
    x = np.asarray(x, dtype=np.float64)
    return denoise(model.schedule, x, model.velocity(x, _times(t, x)), t)


def score_from_velocity(model, x, t):
    """``grad log p_t(x) = -E[x1 | x_t] / beta_t``."""
    _check_open(t)
    x = np.asarray(x, dtype=np.float64)
    _, x1 = denoise(model.schedule, x, model.velocity(x, _times(t, x)), t)
    b = model.schedule.beta(t)
    return -x1 / (b[:, None] if np.ndim(b) else b)


def _times(t, x):
    return np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))


# -- DDIM ---------------------------------------------------------------------

def ddim_eta(schedule, t_k, t_next, mode):
    """Noise level for the transition from ``t_next`` down to ``t_k``.

    ``zero`` gives the deterministic sampler, ``max`` uses ``eta = beta_{t_k}``
    and ``ddpm`` the posterior choice
    ``eta^2 = (beta_k^2 / beta_next^2) * (1 - alpha_next^2 / alpha_k^2)``.
    """
    if mode == "zero":
        return 0.0
    if mode == "max":
        return float(schedule.beta(t_k))
    if mode == "ddpm":
        a_k, b_k = float(schedule.alpha(t_k)), float(schedule.beta(t_k))
        a_n, b_n = float(schedule.alpha(t_next)), float(schedule.beta(t_next))
        if b_k == 0.0:
            return 0.0
        eta2 = (b_k**2 / b_n**2) * (1.0 - a_n**2 / a_k**2)
        return math.sqrt(max(eta2, 0.0))
    raise ValueError(f"unknown eta mode {mode!r}; expected one of {ETA_MODES}")


def ddim_step(schedule, x0_hat, x1_hat, t_k, eta, z=None):
    """``x_{t_k} = alpha x0_hat + sqrt(beta^2 - eta^2) x1_hat + eta z``."""
    b = float(schedule.beta(t_k))
    radicand = b * b - eta * eta
    if radicand < -1e-15:
        raise ValueError(f"eta={eta} exceeds beta={b}: negative radicand")
    out = float(schedule.alpha(t_k)) * x0_hat + math.sqrt(max(radicand, 0.0)) * x1_hat
    if eta:
        out = out + eta * z
    return out


def ddim_grid(schedule, steps):
    """Uniform time grid from the top time down to 0 (``steps + 1`` points)."""
    top = schedule.training_time_range()[1]
    return top * np.arange(steps, -1, -1) / steps


def ddim_sample(model, n, steps=100, eta_mode="zero", seed=0, clamp=math.inf,
                noise=None) -> SampleResult:
    """DDIM sampling for variance-preserving schedules.

    The denoiser at each grid time comes from the velocity field; the
    transition noise is drawn from a stream independent of the initial noise.
    """
    schedule = model.schedule
    if not schedule.variance_preserving:
        raise ScheduleError("DDIM requires variance-preserving schedule")
    if eta_mode not in ETA_MODES:
        raise ValueError(f"unknown eta mode {eta_mode!r}; expected one of {ETA_MODES}")
    steps = int(steps)
    if steps < 1:
        raise ValueError("need at least one step")
    init_seed, walk_seed = np.random.SeedSequence(seed).spawn(2)
    z = _noise(model, n, init_seed, noise)
    rng = np.random.default_rng(walk_seed)
    grid = ddim_grid(schedule, steps)
    with np.errstate(all="ignore"):
        for t_next, t_k in zip(grid[:-1], grid[1:]):
            v = model.velocity(z, np.full(n, t_next))
            x0_hat, x1_hat = denoise(schedule, z, v, t_next)
            eta = ddim_eta(schedule, t_k, t_next, eta_mode)
            noise_k = rng.standard_normal(z.shape) if eta else None
            z = ddim_step(schedule, x0_hat, x1_hat, t_k, eta, noise_k)
            if not np.all(np.isfinite(z)):
                return SampleResult(None, None, f"non-finite state at t={t_k:.4g}")
    return _finish(model, z, clamp)
