"""Synthetic FeFET-like measurements with known ground truth.

Each device gets a latent pair (threshold shift, on-current gain).  Its median
turn-on curve is logistic in V_G.  Currents are drawn from a two-component
Gaussian mixture truncated at zero: the main branch follows the device curve,
and a lower "partially switched" branch gains weight at high gate voltage,
which makes the high-V_G distributions broad and bimodal while low-V_G ones
stay sharp and skewed against the I >= 0 bound.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .train import Dataset

__all__ = ["OracleConfig", "OracleTruth", "generate_synthetic_dataset"]


@dataclass(frozen=True)
class OracleConfig:
    device_count: int = 63
    latent_dim: int = 2
    v_min: float = 0.0
    v_max: float = 1.8
    n_voltages: int = 61
    cycles: int = 20
    i_on: float = 1e-4  # A
    vth: float = 1.0  # V
    slope: float = 0.12  # V
    vth_spread: float = 0.08  # V
    on_spread: float = 0.12  # relative
    noise_scale: float = 0.06  # relative to the local mean
    noise_floor: float = 0.15  # added to the mean, relative to i_on, before scaling by noise_scale
    bimodal_weight: float = 0.3
    bimodal_shift: float = 0.35  # relative drop of the second branch
    bimodal_onset: float = 1.45  # V
    n_components: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.device_count < 1 or self.cycles < 1 or self.n_voltages < 2:
            raise ConfigError("device_count, cycles must be >= 1 and n_voltages >= 2")
        if self.latent_dim != 2:
            raise ConfigError("the oracle uses a 2-D device latent")
        if not self.v_max > self.v_min:
            raise ConfigError("voltage grid must be increasing")
        if self.n_components not in (1, 2):
            raise ConfigError("n_components must be 1 or 2")
        for name in ("i_on", "slope"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("vth_spread", "on_spread", "noise_scale", "noise_floor", "bimodal_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")

    def to_dict(self):
        return asdict(self)

    @property
    def voltages(self):
        return np.linspace(self.v_min, self.v_max, self.n_voltages)


@dataclass
class OracleTruth:
    config: OracleConfig
    latents: np.ndarray  # (device_count, 2): threshold shift [V], relative gain

    def mean_curve(self, device, v):
        c = self.config
        dvth, gain = self.latents[device, 0], self.latents[device, 1]
        return c.i_on * (1.0 + gain) / (1.0 + np.exp(-(np.asarray(v) - (c.vth + dvth)) / c.slope))

    def mixture(self, device, v):
        """Untruncated ground-truth mixture (alphas, mus, sigmas) in amperes, shape (..., 2)."""
        c = self.config
        v = np.asarray(v, dtype=float)
        m = self.mean_curve(device, v)
        s = c.noise_scale * (m + c.noise_floor * c.i_on)
        if c.n_components == 1:
            return np.ones(v.shape + (1,)), m[..., None], s[..., None]
        w2 = c.bimodal_weight / (1.0 + np.exp(-(v - c.bimodal_onset) / 0.05))
        alphas = np.stack([1.0 - w2, w2], axis=-1)
        mus = np.stack([m, (1.0 - c.bimodal_shift) * m], axis=-1)
        sigmas = np.stack([s, s], axis=-1)
        return alphas, mus, sigmas


def _truncated_normal(rng, mu, sigma):
    """Draw N(mu, sigma^2) conditioned on >= 0 by resampling the negatives."""
    x = rng.normal(mu, sigma)
    bad = x < 0
    while np.any(bad):
        x[bad] = rng.normal(mu[bad], sigma[bad])
        bad = x < 0
    return x


def generate_synthetic_dataset(cfg=None):
    """Return ``(Dataset, OracleTruth)``; rows ordered by device, cycle, then voltage."""
    cfg = cfg or OracleConfig()
    rng = np.random.default_rng(cfg.seed)
    latents = np.column_stack(
        [rng.normal(0.0, cfg.vth_spread, cfg.device_count), rng.normal(0.0, cfg.on_spread, cfg.device_count)]
    )
    truth = OracleTruth(cfg, latents)
    v = cfg.voltages
    n_v = v.size
    dev = np.repeat(np.arange(cfg.device_count), cfg.cycles * n_v)
    volts = np.tile(v, cfg.device_count * cfg.cycles)

    alphas, mus, sigmas = truth.mixture(dev, volts)
    u = rng.random(dev.size)
    comp = (u < alphas[:, -1]).astype(np.int64) if cfg.n_components == 2 else np.zeros(dev.size, np.int64)
    pick = np.arange(dev.size)
    mu, sigma = mus[pick, comp], sigmas[pick, comp]
    if cfg.noise_scale == 0:
        current = mu.copy()
    else:
        current = _truncated_normal(rng, mu, sigma)
    return Dataset.from_arrays(dev, volts, current, device_count=cfg.device_count), truth
