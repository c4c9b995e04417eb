"""Network geometry and large-scale channel statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .config import SystemConfig, db_to_linear


@dataclass(frozen=True, eq=False)
class PilotAssignment:
    slot: np.ndarray  # (K,) pilot instant t_k in 1..tau_p
    tau_p: int

    def copilot(self, k: int) -> np.ndarray:
        """Indices of UEs sharing UE k's pilot instant (k included)."""
        return np.flatnonzero(self.slot == self.slot[k])

    def same_pilot(self) -> np.ndarray:
        """(K, K) boolean mask, True where two UEs share a pilot instant."""
        return self.slot[:, None] == self.slot[None, :]


@dataclass(frozen=True, eq=False)
class LinkStatistics:
    """Long-term statistics for every AP-UE link; leading axes are (M, K)."""

    beta: np.ndarray  # (M, K)
    rician_K: np.ndarray  # (M, K)
    aoa: np.ndarray  # (M, K) rad
    h_bar: np.ndarray  # (M, K, N)
    R: np.ndarray  # (M, K, N, N)

    @property
    def R_bar(self) -> np.ndarray:
        return self.R + self.h_bar[..., :, None] * self.h_bar[..., None, :].conj()


@dataclass(frozen=True, eq=False)
class Scenario:
    config: SystemConfig
    ap_pos: np.ndarray  # (M, 2)
    ue_pos: np.ndarray  # (K, 2)
    distance: np.ndarray  # (M, K)
    stats: LinkStatistics
    pilots: PilotAssignment


def wrapped_offset(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    """Shortest vector from a to b on a torus of the given side (last axis = x, y)."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return d - side * np.round(d / side)


def wrapped_distance(a, b, side: float) -> np.ndarray:
    return np.linalg.norm(wrapped_offset(a, b, side), axis=-1)


def generate_layout(cfg: SystemConfig, rng: np.random.Generator):
    """Uniform AP and UE drops in the square; returns (ap_pos, ue_pos, distance, offsets)."""
    side = cfg.area_side
    ap = rng.uniform(0.0, side, size=(cfg.M, 2))
    ue = rng.uniform(0.0, side, size=(cfg.K, 2))
    off = wrapped_offset(ap[:, None, :], ue[None, :, :], side)
    return ap, ue, np.linalg.norm(off, axis=-1), off


def compute_large_scale(d, shadow_db=0.0):
    """Path loss (linear) and Rician factor (linear) for distance d in meters."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    beta_db = -30.9 - 26.0 * np.log10(d) + shadow_db
    k_db = 13.0 - 0.03 * d
    return db_to_linear(beta_db), db_to_linear(k_db)


def build_spatial_correlation(aoa: float, asd_deg: float, N: int,
                              spacing: float = 0.5) -> np.ndarray:
    """Gaussian local scattering correlation, second-order closed form (unit diagonal)."""
    sigma = np.deg2rad(asd_deg)
    dist = np.arange(N)[:, None] - np.arange(N)[None, :]
    phase = 2 * np.pi * spacing * dist
    R = np.exp(1j * phase * np.sin(aoa)) * np.exp(-0.5 * sigma**2 * (phase * np.cos(aoa))**2)
    return 0.5 * (R + R.conj().T)


def integrate_spatial_correlation(aoa: float, asd_deg: float, N: int,
                                  spacing: float = 0.5) -> np.ndarray:
    """Exact Gaussian local scattering correlation by quadrature over the angle deviation."""
    sigma = np.deg2rad(asd_deg)
    R = np.eye(N, dtype=complex)
    if sigma == 0:
        a = np.exp(2j * np.pi * spacing * np.arange(N) * np.sin(aoa))
        return np.outer(a, a.conj())
    pdf = lambda x: np.exp(-0.5 * (x / sigma)**2) / (np.sqrt(2 * np.pi) * sigma)
    lim = 20 * sigma
    for d in range(1, N):
        arg = lambda x: 2 * np.pi * spacing * d * np.sin(aoa + x)
        re = integrate.quad(lambda x: np.cos(arg(x)) * pdf(x), -lim, lim, limit=400)[0]
        im = integrate.quad(lambda x: np.sin(arg(x)) * pdf(x), -lim, lim, limit=400)[0]
        for l in range(N - d):
            R[l + d, l] = re + 1j * im
            R[l, l + d] = re - 1j * im
    return R


def build_los_vector(aoa, N: int) -> np.ndarray:
    """Unit-modulus LoS array response; element i is exp(j*i*aoa). Broadcasts over aoa."""
    aoa = np.asarray(aoa, dtype=float)
    return np.exp(1j * aoa[..., None] * np.arange(N))


def assign_pilots(K: int, tau_p: int) -> PilotAssignment:
    """Round-robin: UE k (0-based) uses pilot instant 1 + (k mod tau_p)."""
    return PilotAssignment(slot=1 + np.arange(K) % tau_p, tau_p=tau_p)


def link_statistics(cfg: SystemConfig, distance, offsets, shadow_db) -> LinkStatistics:
    beta, kfac = compute_large_scale(distance, shadow_db)
    aoa = np.arctan2(offsets[..., 1], offsets[..., 0])
    N = cfg.N
    h_bar = np.sqrt(kfac * beta / (kfac + 1))[..., None] * build_los_vector(aoa, N)
    R = np.empty(aoa.shape + (N, N), dtype=complex)
    for idx in np.ndindex(aoa.shape):
        R[idx] = build_spatial_correlation(aoa[idx], cfg.asd_deg, N, cfg.antenna_spacing)
    R *= (beta / (kfac + 1))[..., None, None]
    return LinkStatistics(beta=beta, rician_K=kfac, aoa=aoa, h_bar=h_bar, R=R)


def build_scenario(cfg: SystemConfig, rng: np.random.Generator | None = None) -> Scenario:
    """Drop APs/UEs and compute every link's statistics. Deterministic in cfg.seed."""
    if rng is None:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, 0])))
    ap, ue, dist, off = generate_layout(cfg, rng)
    # guard against a UE dropped exactly on an AP
    dist = np.maximum(dist, 1.0)
    shadow = rng.normal(0.0, cfg.shadow_sigma_db, size=dist.shape)
    stats = link_statistics(cfg, dist, off, shadow)
    return Scenario(config=cfg, ap_pos=ap, ue_pos=ue, distance=dist, stats=stats,
                    pilots=assign_pilots(cfg.K, cfg.tau_p))
