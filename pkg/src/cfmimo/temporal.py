"""Jakes temporal correlation and anchored channel-aging realizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .config import SystemConfig

SPEED_OF_LIGHT = 299_792_458.0


def jakes_rho(velocity, carrier_freq, sample_time, delta):
    """J0(2*pi*f_d*T_s*delta) with Doppler f_d = v*f_c/c. Broadcasts."""
    delta = np.asarray(delta, dtype=float)
    if np.any(delta < 0):
        raise ValueError("delta must be nonnegative")
    f_d = np.asarray(velocity, dtype=float) * carrier_freq / SPEED_OF_LIGHT
    return special.j0(2 * np.pi * f_d * sample_time * delta)


@dataclass(frozen=True, eq=False)
class AgingProfile:
    """rho[k, d] and rho_bar[k, d] for instant separations d = 0..tau_c-1."""

    rho: np.ndarray

    @property
    def rho_bar(self) -> np.ndarray:
        return np.sqrt(np.clip(1.0 - self.rho**2, 0.0, None))

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "AgingProfile":
        d = np.arange(cfg.tau_c)
        rho = jakes_rho(cfg.velocities[:, None], cfg.carrier_freq, cfg.sample_time, d[None, :])
        rho[:, 0] = 1.0
        return cls(rho=rho)

    def anchor_lag(self, slots: np.ndarray, anchor: int) -> np.ndarray:
        """rho_k[lambda - t_k] for every UE."""
        return self.rho[np.arange(len(slots)), anchor - slots]


def sqrtm_psd(R: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root over the trailing two axes (eigen-decomposition)."""
    w, V = np.linalg.eigh(R)
    w = np.sqrt(np.clip(w, 0.0, None))
    return (V * w[..., None, :]) @ V.conj().swapaxes(-1, -2)


def complex_normal(rng: np.random.Generator, shape, var=1.0) -> np.ndarray:
    """Circularly symmetric complex Gaussian samples with the given variance."""
    z = rng.standard_normal(tuple(shape) + (2,)).view(complex)[..., 0]
    return z * np.sqrt(np.asarray(var, dtype=float) / 2.0)


def random_phase(rng: np.random.Generator, shape) -> np.ndarray:
    return np.exp(1j * rng.uniform(-np.pi, np.pi, size=shape))


def sample_fresh(h_bar, R_sqrt, rng, batch=()):
    """h_bar*e^{j phi} + R^{1/2} g for a batch; h_bar (..., N), R_sqrt (..., N, N)."""
    batch = tuple(batch)
    shape = batch + h_bar.shape[:-1]
    g = complex_normal(rng, shape + h_bar.shape[-1:])
    return h_bar * random_phase(rng, shape)[..., None] + np.einsum("...ij,...j->...i", R_sqrt, g)


def sample_anchor(h_bar, R, rng, batch=(), R_sqrt=None):
    """Anchor realization h[lambda] = h_bar e^{j phi} + R^{1/2} g, phi ~ U[-pi, pi)."""
    if R_sqrt is None:
        R_sqrt = sqrtm_psd(R)
    return sample_fresh(h_bar, R_sqrt, rng, batch)


def sample_aged(h_lambda, rho, h_bar, R, rng, R_sqrt=None):
    """h[n] = rho*h[lambda] + rho_bar*(h_bar e^{j phi_n} + f[n]) with fresh phi_n, f[n].

    ``rho`` broadcasts against ``h_lambda[..., 0]`` (one value per link/UE).
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) > 1):
        raise ValueError("|rho| must be <= 1")
    if R_sqrt is None:
        R_sqrt = sqrtm_psd(R)
    batch = h_lambda.shape[: h_lambda.ndim - h_bar.ndim]
    innovation = sample_fresh(h_bar, R_sqrt, rng, batch)
    rho_bar = np.sqrt(1.0 - rho**2)
    return rho[..., None] * h_lambda + rho_bar[..., None] * innovation
