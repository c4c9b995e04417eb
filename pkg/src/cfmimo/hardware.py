"""Bussgang DAC/ADC quantization gains and EVM RF distortion."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.stats import norm

from .config import SystemConfig
from .temporal import complex_normal

# Normalized MSE of the Lloyd-Max quantizer for a unit-variance Gaussian input,
# indexed by bits. Regenerate with ``python -m cfmimo.hardware``.
LLOYD_MAX_NMSE = {
    1: 0.3633802276324186,
    2: 0.11748184782932913,
    3: 0.0345477607885033,
    4: 0.009501008008191869,
    5: 0.002504668355674644,
    6: 0.0006442396653172366,
    7: 0.00016347822998019623,
    8: 4.11850828665461e-05,
}


def _centroids(c):
    t = np.concatenate(([-np.inf], 0.5 * (c[1:] + c[:-1]), [np.inf]))
    prob = np.diff(norm.cdf(t))
    return (norm.pdf(t[:-1]) - norm.pdf(t[1:])) / prob, prob


def lloyd_max_nmse(bits: int, warmup: int = 50) -> float:
    """Normalized MSE of the optimal 2^bits-level quantizer for N(0, 1).

    A few plain Lloyd iterations (centroid / midpoint conditions) bring the
    levels close; the fixed point is then polished with a root finder since
    the plain iteration converges very slowly for many levels.
    """
    levels = 2**bits
    c = norm.ppf((np.arange(levels) + 0.5) / levels)
    for _ in range(warmup):
        c = _centroids(c)[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        c = optimize.fsolve(lambda x: _centroids(x)[0] - x, c, xtol=1e-15)
    c, prob = _centroids(c)
    return float(1.0 - np.sum(prob * c**2))


def adc_distortion_factor(bits) -> float:
    """Distortion factor iota for a b-bit converter; inf (ideal) gives 0."""
    if bits is None or bits == "ideal" or (isinstance(bits, float) and math.isinf(bits)):
        return 0.0
    if bits <= 0:
        raise ValueError("bits must be >= 1")
    b = int(bits)
    if b != bits:
        raise ValueError("bits must be an integer")
    if b in LLOYD_MAX_NMSE:
        return LLOYD_MAX_NMSE[b]
    # beyond the table the high-resolution asymptote is accurate to <1%
    return math.sqrt(3) * math.pi / 2 * 2.0 ** (-2 * b)


def build_adc_matrix(bits) -> np.ndarray:
    """Diagonal Bussgang gains 1 - iota(b) for one AP's antennas (returned as a vector)."""
    return np.array([1.0 - adc_distortion_factor(b) for b in np.atleast_1d(bits)])


@dataclass(frozen=True, eq=False)
class HardwareProfile:
    alpha_d: np.ndarray  # (K,) DAC Bussgang gains
    kappa_t: np.ndarray  # (K,)
    kappa_r: np.ndarray  # (M,)
    a: np.ndarray  # (M, N) diagonal of A_m
    pilot_distortion: str = "shared"

    @property
    def b(self) -> np.ndarray:
        """Diagonal of B_m = A_m (I - A_m)."""
        return self.a * (1.0 - self.a)

    @property
    def v(self) -> np.ndarray:
        """Diagonal of B_m + kappa_r^2 A_m (scales received power into distortion)."""
        return self.b + self.kappa_r[:, None] ** 2 * self.a

    @property
    def tx_gain(self) -> np.ndarray:
        """alpha (1 + kappa_t^2): total transmitted power per unit power budget."""
        return self.alpha_d * (1.0 + self.kappa_t**2)

    @property
    def tx_distortion(self) -> np.ndarray:
        """alpha (1 - alpha + kappa_t^2): distortion power per unit power budget."""
        return self.alpha_d * (1.0 - self.alpha_d + self.kappa_t**2)

    @property
    def copilot_gain(self) -> np.ndarray:
        """Ratio E|s|^2 / |E s|^2 of a UE's pilot as seen coherently across APs.

        When the UE-side distortion is one realization shared by all APs, the
        cross-AP second moment picks up (1 + kappa_t^2) / alpha.
        """
        if self.pilot_distortion == "shared":
            return (1.0 + self.kappa_t**2) / self.alpha_d
        return np.ones_like(self.alpha_d)

    @property
    def ideal(self) -> bool:
        return (np.all(self.a == 1) and np.all(self.alpha_d == 1)
                and not np.any(self.kappa_t) and not np.any(self.kappa_r))

    @classmethod
    def from_config(cls, cfg: SystemConfig) -> "HardwareProfile":
        a = build_adc_matrix(cfg.adc_bits).reshape(cfg.M, cfg.N)
        alpha = build_adc_matrix(cfg.dac_bits)
        return cls(alpha_d=alpha, kappa_t=cfg.kappa_t.copy(), kappa_r=cfg.kappa_r.copy(),
                   a=a, pilot_distortion=cfg.pilot_distortion)


def distort_ue_transmit(symbol, power, alpha_d, kappa_t, rng, size=None):
    """alpha sqrt(p) s + DAC noise + transmit RF distortion."""
    power = np.asarray(power, dtype=float)
    if np.any(power < 0):
        raise ValueError("power must be nonnegative")
    shape = np.broadcast(symbol, power, alpha_d, kappa_t).shape if size is None else size
    dac = complex_normal(rng, shape, alpha_d * (1 - alpha_d) * power)
    rf = complex_normal(rng, shape, kappa_t**2 * alpha_d * power)
    return alpha_d * np.sqrt(power) * symbol + dac + rf


def distort_ap_receive(y, kappa_r, a, w, sigma2, rng):
    """Receive RF distortion, AWGN and Bussgang ADC for one or more AP signals.

    ``a`` and ``w`` are diagonals (..., N): ``w`` is diag(E{y y^H | h}).
    """
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("W must be a nonnegative diagonal")
    kappa_r = np.asarray(kappa_r, dtype=float)[..., None]
    eta = complex_normal(rng, y.shape, kappa_r**2 * w)
    z = complex_normal(rng, y.shape, sigma2)
    b = a * (1 - a)
    n_adc = complex_normal(rng, y.shape, b * ((1 + kappa_r**2) * w + sigma2))
    return a * (y + eta + z) + n_adc


if __name__ == "__main__":
    for bits in range(1, 9):
        print(bits, repr(lloyd_max_nmse(bits)), flush=True)
