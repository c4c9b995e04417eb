"""LMMSE channel estimation at the anchor instant and its second-order statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .hardware import HardwareProfile
from .scenario import PilotAssignment, Scenario
from .temporal import AgingProfile

log = logging.getLogger(__name__)


def hermitian(X):
    return X.conj().swapaxes(-1, -2)


def diag_embed(v):
    return v[..., :, None] * np.eye(v.shape[-1])


@dataclass(frozen=True, eq=False)
class EstimationKernel:
    """Per-link estimator quantities; leading axes (M, K).

    ``G`` is the estimator matrix (h_hat = G y), ``P = G^H A`` so that
    h_hat^H A h = y^H P h.
    """

    Psi: np.ndarray
    G: np.ndarray
    Gamma: np.ndarray
    P: np.ndarray
    gain: np.ndarray  # (K,) alpha sqrt(p_tilde) rho[lambda - t_k]
    R_bar: np.ndarray

    @property
    def C_err(self) -> np.ndarray:
        return self.R_bar - self.Gamma


def compute_psi_inverse(R_bar, a, v, pilot_rx_power, same_pilot, sigma2):
    """Covariance of the received pilot, the matrix whose inverse is Psi.

    R_bar (M, K, N, N); a, v (M, N); pilot_rx_power (K,) = alpha (1+kappa_t^2) p_tilde;
    same_pilot (K, K) mask.
    """
    weights = same_pilot * pilot_rx_power[None, :]
    ARA = a[:, None, :, None] * R_bar * a[:, None, None, :]
    S = np.einsum("kj,mjab->mkab", weights, ARA)
    J = np.einsum("kj,mja->mka", weights, np.real(np.einsum("...ii->...i", R_bar)))
    return S + diag_embed(v[:, None, :] * J + sigma2 * a[:, None, :])


def hermitian_inverse(X):
    """Inverse of Hermitian positive-definite matrices via Cholesky."""
    L = np.linalg.cholesky(X)
    eye = np.broadcast_to(np.eye(X.shape[-1]), X.shape)
    Linv = np.linalg.solve(L, eye)
    return hermitian(Linv) @ Linv


def compute_kernels(scn: Scenario, hw: HardwareProfile, aging: AgingProfile) -> EstimationKernel:
    cfg = scn.config
    R_bar = scn.stats.R_bar
    pilots = scn.pilots
    p_tilde = cfg.pilot_power
    Psi_inv = compute_psi_inverse(R_bar, hw.a, hw.v, hw.tx_gain * p_tilde,
                                  pilots.same_pilot(), cfg.noise_power)
    try:
        Psi = hermitian_inverse(Psi_inv)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError(
            "received-pilot covariance is singular (zero noise and zero pilot power?)") from None
    if log.isEnabledFor(logging.DEBUG):
        log.debug("max condition number of pilot covariance: %.3e",
                  np.max(np.linalg.cond(Psi_inv)))
    rho_t = aging.anchor_lag(pilots.slot, cfg.anchor)
    gain = hw.alpha_d * np.sqrt(p_tilde) * rho_t
    A = diag_embed(hw.a)[:, None]  # (M, 1, N, N)
    G = gain[None, :, None, None] * (R_bar @ A @ Psi)
    Gamma = G @ Psi_inv @ hermitian(G)
    Gamma = 0.5 * (Gamma + hermitian(Gamma))
    P = hermitian(G) @ A
    return EstimationKernel(Psi=Psi, G=G, Gamma=Gamma, P=P, gain=gain, R_bar=R_bar)


def lmmse_estimate(y, G):
    """h_hat = G y; broadcasts over leading axes."""
    return np.einsum("...ij,...j->...i", G, y)


def phase_aware_estimate(y, los_mean_rx, h_bar_phase, cond_cov, gain_k, R_k, a):
    """Estimate that knows the LoS phases (oracle side information).

    y: received pilot; los_mean_rx: E{y | phases}; h_bar_phase: h_bar e^{j phi_lambda};
    cond_cov: Cov{y | phases}; gain_k: alpha sqrt(p_tilde) rho[lambda - t_k];
    R_k: NLoS covariance; a: ADC gains (diagonal).
    """
    W = gain_k * (R_k * a[..., None, :]) @ np.linalg.inv(cond_cov)
    return h_bar_phase + np.einsum("...ij,...j->...i", W, y - los_mean_rx)


def phase_conditioned_moments(h_bar, R, a, v, copilots, mu, omega, rho_t, rho_bar_t,
                              phase_lambda, phase_t, sigma2):
    """Mean and covariance of one AP's received pilot given all co-pilot LoS phases.

    h_bar (J, N), R (J, N, N) for the J co-pilot UEs; mu = alpha sqrt(p_tilde),
    omega = alpha (1 - alpha + kappa_t^2) p_tilde; phases broadcast over a batch
    with trailing axis J.
    """
    los = h_bar * (rho_t[:, None] * phase_lambda[..., None]
                   + rho_bar_t[:, None] * phase_t[..., None])  # (..., J, N)
    mean = np.sum(mu[:, None] * a * los, axis=-2)
    pi = mu**2 + omega
    ARA = a[:, None] * np.sum(pi[:, None, None] * R, axis=0) * a[None, :]
    outer = np.einsum("j,...ja,...jb->...ab", omega, a * los, (a * los).conj())
    rx_power = np.einsum("j,...ja->...a", pi, np.abs(los) ** 2) + np.einsum(
        "j,jaa->a", pi, R).real
    cov = ARA + outer + diag_embed(v * rx_power + sigma2 * a)
    return mean, cov
