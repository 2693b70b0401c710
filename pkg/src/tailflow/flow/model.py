"""Training a velocity field on transformed data, and the trained-model container."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..errors import ConfigError, DivergenceError
from ..nn import OptimizerState, VelocityNet, adamw_step
from ..transforms import TransformSpec, apply_forward, log_det_jacobian
from .schedules import KINDS, Schedule, interpolate


@dataclass
class TrainConfig:
    """Training hyperparameters.  Defaults follow the reference setup."""

    transform: str = "adaptive"      # adaptive | uniform | identity
    family: str = "softlog"          # softlog | arcsinh
    alpha_max: float = 4.0
    hill_k: int | None = None
    schedule: str = "linear"
    hidden: int = 256
    n_layers: int = 4
    embed_dim: int = 256
    freq_low: float = 1.0
    freq_high: float = 1000.0
    lr: float = 5e-3
    weight_decay: float = 1e-5
    clip: float = 10.0
    max_epochs: int = 5000
    patience: int = 100
    early_stopping: bool = True
    standardize: bool = False

    def __post_init__(self):
        if self.transform not in ("adaptive", "uniform", "identity"):
            raise ConfigError("transform", f"unknown transform mode {self.transform!r}")
        if self.family not in ("softlog", "arcsinh"):
            raise ConfigError("family", f"unknown family {self.family!r}")
        if self.schedule not in KINDS:
            raise ConfigError("schedule", f"unknown schedule {self.schedule!r}")
        if not 1 <= int(self.max_epochs) <= 5000:
            raise ConfigError("max_epochs", "must lie in [1, 5000]")
        if int(self.patience) < 1:
            raise ConfigError("patience", "must be positive")
        for key in ("lr", "alpha_max", "clip"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay", "must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict, prefix: str = "") -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        extra = set(payload) - known
        if extra:
            key = sorted(extra)[0]
            raise ConfigError(prefix + key, "unknown training key")
        return cls(**payload)


@dataclass
class TrainLog:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = math.inf
    epochs: int = 0
    diverged: str | None = None
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload) -> "TrainLog":
        return cls(**payload)


class TrainedModel:
    """A velocity field together with the transform and schedule it was trained with.

    ``net`` is anything exposing ``forward(x, t)`` and ``jvp(x, t, v)``; the
    analytic fields in :mod:`tailflow.flow.fields` can stand in for a trained
    :class:`~tailflow.nn.VelocityNet`.  When ``shift``/``scale`` are set the
    field lives on the standardized variable ``(phi(x) - shift) / scale``.
    """

    def __init__(self, net, transform: TransformSpec, schedule: Schedule,
                 shift=None, scale=None, log: TrainLog | None = None, seed=None,
                 config: TrainConfig | None = None):
        self.net = net
        self.transform = transform
        self.schedule = schedule
        d = transform.dim
        if getattr(net, "d", d) != d:
            raise ValueError("transform dimension does not match the velocity field")
        self.shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=np.float64)
        self.scale = np.ones(d) if scale is None else np.asarray(scale, dtype=np.float64)
        self.log = log if log is not None else TrainLog()
        self.seed = seed
        self.config = config

    @property
    def d(self) -> int:
        return self.transform.dim

    @property
    def standardized(self) -> bool:
        return bool(np.any(self.shift != 0) or np.any(self.scale != 1))

    @property
    def diverged(self) -> bool:
        return self.log.diverged is not None

    def velocity(self, z, t):
        return self.net.forward(z, t)

    def jvp(self, z, t, v):
        return self.net.jvp(z, t, v)

    def to_latent(self, x):
        """Data space to the space the field was trained on."""
        z = apply_forward(self.transform, x)
        if self.standardized:
            z = (z - self.shift) / self.scale
        return z

    def from_latent(self, z):
        """Undo the standardization; the result is still in transformed space."""
        if self.standardized:
            return z * self.scale + self.shift
        return z

    def latent_log_det(self, x):
        """``log |det d latent / dx|`` per row (transform plus standardization)."""
        return log_det_jacobian(self.transform, np.atleast_2d(x)) - np.sum(np.log(self.scale))


def _as_array(data):
    arr = getattr(data, "data", data)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("data must be an n x d matrix")
    return arr


def train(data, config: TrainConfig | None = None, val=None, seed=0,
          callback=None) -> TrainedModel:
    """Fit the transform and train a velocity network with full-batch AdamW.

    Each epoch draws a fresh time and noise vector for every training row.
    The validation loss uses one fixed draw of times and noise so that it is
    a deterministic function of the parameters; the parameters with the
    lowest validation loss are restored at the end.

    A non-finite loss or gradient stops training and is recorded in
    ``model.log.diverged`` instead of raising.
    """
    config = config or TrainConfig()
    x = _as_array(data)
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two training rows")
    xv = None if val is None else _as_array(val)
    if config.early_stopping and (xv is None or xv.shape[0] == 0):
        raise ValueError("early stopping needs a non-empty validation set")
    if xv is not None and xv.shape[1] != d:
        raise ValueError("validation data has the wrong number of columns")

    spec = TransformSpec.fit(x, mode=config.transform, family=config.family,
                             alpha_max=config.alpha_max, k=config.hill_k)
    z = apply_forward(spec, x)
    shift = scale = None
    if config.standardize:
        shift = z.mean(axis=0)
        scale = z.std(axis=0)
        scale[scale == 0] = 1.0
        z = (z - shift) / scale
    schedule = Schedule(config.schedule)

    seeds = np.random.SeedSequence(seed).spawn(3)
    net = VelocityNet(d, config.hidden, config.n_layers, config.embed_dim,
                      (config.freq_low, config.freq_high), seed=np.random.default_rng(seeds[0]))
    model = TrainedModel(net, spec, schedule, shift, scale, seed=seed, config=config)
    rng = np.random.default_rng(seeds[1])
    lo, hi = schedule.training_time_range()

    val_batch = None
    if xv is not None and xv.shape[0]:
        zv = model.to_latent(xv)
        vrng = np.random.default_rng(seeds[2])
        tv = vrng.uniform(lo, hi, zv.shape[0])
        val_batch = (*interpolate(schedule, zv, vrng.standard_normal(zv.shape), tv), tv)

    opt = OptimizerState.for_params(net.params, lr=config.lr,
                                    weight_decay=config.weight_decay, clip=config.clip)
    log = model.log
    best = net.params.copy()
    start = time.perf_counter()
    for epoch in range(int(config.max_epochs)):
        t = rng.uniform(lo, hi, n)
        x_t, u = interpolate(schedule, z, rng.standard_normal(z.shape), t)
        try:
            loss, grad = net.loss_and_grad(x_t, u, t)
            adamw_step(net.params, opt, grad)
        except DivergenceError as exc:
            log.diverged = f"epoch {epoch}: {exc}"
            break
        log.train_loss.append(loss)
        log.epochs = epoch + 1
        if val_batch is not None:
            vx, vu, vt = val_batch
            with np.errstate(all="ignore"):
                vloss = net.loss(vx, vu, vt)
            log.val_loss.append(vloss)
            if not math.isfinite(vloss):
                log.diverged = f"epoch {epoch}: non-finite validation loss"
                break
            if vloss < log.best_val:
                log.best_val, log.best_epoch = vloss, epoch
                best[...] = net.params
        else:
            log.best_epoch = epoch
            best[...] = net.params
        if callback is not None:
            callback(epoch, log)
        if config.early_stopping and epoch - log.best_epoch >= config.patience:
            break
    if log.best_epoch >= 0:
        net.set_params(best)
    log.seconds = time.perf_counter() - start
    return model
