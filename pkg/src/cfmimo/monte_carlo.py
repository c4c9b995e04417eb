"""Monte Carlo simulation of the full uplink receive chain.

The pilot phase is simulated sample by sample (realized channels, UE DAC and
RF distortion, receive RF distortion, noise and quantization), and channel
estimates come from the realized received pilots. For the data phase each
trial draws the anchor channel and one innovation, and every data instant is
h[n] = rho h[lambda] + rho_bar innovation. Reusing the same innovation for
all n (common random numbers) leaves every per-instant expectation unbiased.

Accumulators hold power-free sums (second moments of the per-AP gains
g_mki = h_hat_mk^H A_m h_mi), so one run can be evaluated for any powers,
any instant and any second-layer weights. Data-phase distortion and noise
are zero mean and independent of the channels, so their contribution is
accumulated as the exact conditional power given the realized channels and
estimates. :func:`simulate_data_instant` keeps the fully realized path.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .estimation import compute_kernels, hermitian
from .hardware import HardwareProfile
from .scenario import Scenario
from .temporal import AgingProfile, complex_normal, random_phase, sqrtm_psd

SHARD_SIZE = 1000
TERM_NAMES = ("DS", "BU", "CA", "IUI", "DAC", "TRF", "RRF", "ADC", "NS")


# ---------------------------------------------------------------------------
# Compensated accumulation
# ---------------------------------------------------------------------------

class NeumaierSum:
    """Elementwise Neumaier (improved Kahan) summation of equally shaped arrays."""

    def __init__(self, shape, dtype=float):
        self.total = np.zeros(shape, dtype=dtype)
        self.comp = np.zeros(shape, dtype=dtype)

    def add(self, x):
        x = np.asarray(x)
        if np.iscomplexobj(self.total):
            for part in ("real", "imag"):
                self._add(getattr(self.total, part), getattr(self.comp, part),
                          np.ascontiguousarray(getattr(x, part)))
        else:
            self._add(self.total, self.comp, x)

    @staticmethod
    def _add(total, comp, x):
        t = total + x
        big = np.abs(total) >= np.abs(x)
        comp += np.where(big, (total - t) + x, (x - t) + total)
        total[...] = t

    @property
    def value(self):
        return self.total + self.comp


@dataclass(eq=False)
class TrialResult:
    """Raw sums over trials; all arrays are power-free.

    m1 (K, M):           sum of g_mkk[lambda]
    S_lam, S_in (K, K, M, M): sum of g g^H for the anchor and innovation gains
    U_lam, U_in (K, K, M, N): sum of |h_hat_mk,l|^2 |h_mi,l|^2 for both parts
    H2 (K, M, N):        sum of |h_hat_mk,l|^2

    Products between the anchor and innovation parts have zero mean (the
    innovation is independent of everything else) and are left out, which only
    removes variance.
    """

    count: int
    m1: np.ndarray
    S_lam: np.ndarray
    S_in: np.ndarray
    U_lam: np.ndarray
    U_in: np.ndarray
    H2: np.ndarray

    _ARRAYS = ("m1", "S_lam", "S_in", "U_lam", "U_in", "H2")

    @classmethod
    def merge(cls, parts) -> "TrialResult":
        """Sum shard results with compensated summation (order-insensitive to ~1 ulp)."""
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to merge")
        out = {}
        for name in cls._ARRAYS:
            ref = getattr(parts[0], name)
            acc = NeumaierSum(ref.shape, ref.dtype)
            for part in parts:
                acc.add(getattr(part, name))
            out[name] = acc.value
        return cls(count=sum(p.count for p in parts), **out)

    def gain_moments(self, rho, rho_bar) -> np.ndarray:
        """Empirical E{g_ki g_ki^H} (K, K, M, M) at an instant with per-UE rho."""
        T = self.count
        r2 = (rho**2)[None, :, None, None]
        rb2 = (rho_bar**2)[None, :, None, None]
        return (r2 * self.S_lam + rb2 * self.S_in) / T

    def power_moments(self, rho, rho_bar) -> np.ndarray:
        """Empirical E{|h_hat_mk,l|^2 |h_mi,l[n]|^2} (K, K, M, N)."""
        r2 = (rho**2)[None, :, None, None]
        rb2 = (rho_bar**2)[None, :, None, None]
        return (r2 * self.U_lam + rb2 * self.U_in) / self.count


# ---------------------------------------------------------------------------
# Chain pieces
# ---------------------------------------------------------------------------

def _channel_draw(h_bar, R_sqrt, rng, T):
    """T fresh Rician draws for all links: (T, M, K, N)."""
    g = complex_normal(rng, (T,) + h_bar.shape)
    phase = random_phase(rng, (T,) + h_bar.shape[:-1])
    return h_bar * phase[..., None] + (R_sqrt @ g[..., None])[..., 0]


def _ue_transmit(rng, shape, amp, var):
    """alpha sqrt(p) + DAC noise + transmit RF distortion, unit pilot symbol."""
    return amp + complex_normal(rng, shape, var)


def simulate_pilot_phase(h_pilot, hw: HardwareProfile, slots, tau_p, pilot_power, sigma2, rng):
    """Quantized received pilots y (T, M, tau_p, N).

    h_pilot (T, M, K, N): each UE's channel at its own pilot instant. UEs with
    slot t transmit at instant t only. The UE distortion is one realization
    per UE, shared by all APs, unless the profile asks for per-AP draws.
    """
    T, M, K, N = h_pilot.shape
    amp = hw.alpha_d * np.sqrt(pilot_power)
    var = hw.tx_distortion * pilot_power
    if hw.pilot_distortion == "shared":
        x = _ue_transmit(rng, (T, 1, K), amp, var)
    else:
        x = _ue_transmit(rng, (T, M, K), amp, var)
    onehot = (slots[:, None] == np.arange(1, tau_p + 1)[None, :]).astype(float)  # (K, tau_p)
    y = ((h_pilot * x[..., None]).swapaxes(-1, -2) @ onehot).swapaxes(-1, -2)
    W = ((np.abs(h_pilot) ** 2).swapaxes(-1, -2) @ ((hw.tx_gain * pilot_power)[:, None] * onehot))
    W = W.swapaxes(-1, -2)
    return _receive(y, W, hw, sigma2, rng, ap_axis=1)


def _receive(y, W, hw, sigma2, rng, ap_axis):
    """Receive RF distortion, noise and Bussgang ADC; y, W have AP at ap_axis and N last."""
    shape = [1] * y.ndim
    shape[ap_axis] = -1
    kr2 = (hw.kappa_r**2).reshape(shape)
    ashape = list(shape)
    ashape[-1] = y.shape[-1]
    a = hw.a.reshape(ashape)
    eta = complex_normal(rng, y.shape, kr2 * W)
    z = complex_normal(rng, y.shape, sigma2)
    n_adc = complex_normal(rng, y.shape, a * (1 - a) * ((1 + kr2) * W + sigma2))
    return a * (y + eta + z) + n_adc


def estimate_channels(y, G, slots):
    """h_hat_mk = G_mk y_m,slot(k); y (T, M, tau_p, N), G (M, K, N, N)."""
    return (G @ y[:, :, slots - 1, :, None])[..., 0]


def simulate_data_instant(h_n, h_hat, hw: HardwareProfile, p, symbols, sigma2, rng):
    """Per-AP combined outputs h_hat_mk^H y_ADC,m[n] (T, M, K), all distortion realized."""
    T, M, K, N = h_n.shape
    p = np.asarray(p, dtype=float)
    x = (hw.alpha_d * np.sqrt(p) * symbols
         + complex_normal(rng, (T, K), hw.tx_distortion * p))
    y = np.einsum("tmkn,tk->tmn", h_n, x)
    W = np.einsum("tmkn,k->tmn", np.abs(h_n) ** 2, hw.tx_gain * p)
    r = _receive(y, W, hw, sigma2, rng, ap_axis=1)
    return np.einsum("tmkn,tmn->tmk", h_hat.conj(), r)


def lsfd_combine(s_breve, a):
    """Second-layer combining: sum_m conj(a_mk) s_breve_mk. a (K, M)."""
    return np.einsum("km,...mk->...k", np.conj(a), s_breve)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChainSetup:
    h_bar: np.ndarray
    R_sqrt: np.ndarray
    G: np.ndarray
    hw: HardwareProfile
    slots: np.ndarray
    tau_p: int
    pilot_power: np.ndarray
    sigma2: float
    rho_t: np.ndarray
    rho_bar_t: np.ndarray


def make_setup(scn: Scenario, hw: HardwareProfile | None = None,
               aging: AgingProfile | None = None) -> ChainSetup:
    cfg = scn.config
    hw = HardwareProfile.from_config(cfg) if hw is None else hw
    aging = AgingProfile.from_config(cfg) if aging is None else aging
    ker = compute_kernels(scn, hw, aging)
    rho_t = aging.anchor_lag(scn.pilots.slot, cfg.anchor)
    return ChainSetup(h_bar=scn.stats.h_bar, R_sqrt=sqrtm_psd(scn.stats.R), G=ker.G, hw=hw,
                      slots=scn.pilots.slot, tau_p=cfg.tau_p, pilot_power=cfg.pilot_power,
                      sigma2=cfg.noise_power, rho_t=rho_t,
                      rho_bar_t=np.sqrt(np.clip(1 - rho_t**2, 0, None)))


def draw_shard(setup: ChainSetup, rng, T):
    """One shard of realizations: (h_hat, h_lambda, h_innovation), each (T, M, K, N)."""
    h_lam = _channel_draw(setup.h_bar, setup.R_sqrt, rng, T)
    back = _channel_draw(setup.h_bar, setup.R_sqrt, rng, T)
    h_pilot = (setup.rho_t[:, None] * h_lam + setup.rho_bar_t[:, None] * back)
    y = simulate_pilot_phase(h_pilot, setup.hw, setup.slots, setup.tau_p,
                             setup.pilot_power, setup.sigma2, rng)
    h_hat = estimate_channels(y, setup.G, setup.slots)
    h_in = _channel_draw(setup.h_bar, setup.R_sqrt, rng, T)
    return h_hat, h_lam, h_in


def _gram(g):
    """sum_t g_t g_t^H for g (T, M, K, K) -> (K, K, M, M) via contiguous batched GEMM."""
    T, M, K, _ = g.shape
    G = np.ascontiguousarray(g.reshape(T, M, K * K).transpose(2, 1, 0))  # (KK, M, T)
    GH = np.ascontiguousarray(G.conj().transpose(0, 2, 1))
    return (G @ GH).reshape(K, K, M, M)


def _power_cross(x2, y2):
    """sum_t x2[t,m,k,l] y2[t,m,i,l] -> (K, K, M, N)."""
    X = np.ascontiguousarray(x2.transpose(1, 3, 2, 0))  # (M, N, K, T)
    Y = np.ascontiguousarray(y2.transpose(1, 3, 0, 2))  # (M, N, T, K)
    return (X @ Y).transpose(2, 3, 0, 1)


def accumulate_terms(h_hat, h_lam, h_in, a_diag) -> TrialResult:
    """Power-free sums for one shard; a_diag (M, N) are the ADC gains."""
    hc = h_hat.conj()
    # g[t, m, k, i] = h_hat_mk^H A_m h_mi
    g_lam = hc @ (a_diag[None, :, None, :] * h_lam).swapaxes(-1, -2)
    g_in = hc @ (a_diag[None, :, None, :] * h_in).swapaxes(-1, -2)
    K = h_hat.shape[2]
    idx = np.arange(K)
    hh2 = np.abs(h_hat) ** 2
    return TrialResult(
        count=h_hat.shape[0],
        m1=g_lam[:, :, idx, idx].sum(axis=0).T,
        S_lam=_gram(g_lam),
        S_in=_gram(g_in),
        U_lam=_power_cross(hh2, np.abs(h_lam) ** 2),
        U_in=_power_cross(hh2, np.abs(h_in) ** 2),
        H2=hh2.sum(axis=0).transpose(1, 0, 2),
    )


def shard_rng(seed: int, shard: int) -> np.random.Generator:
    # stream 0 is the scenario drop; Monte Carlo shards use (seed, 1, shard)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 1, shard])))


def _run_shard(setup, seed, shard, T):
    rng = shard_rng(seed, shard)
    return accumulate_terms(*draw_shard(setup, rng, T), setup.hw.a)


def run_monte_carlo(scn: Scenario, trials: int, seed: int | None = None, threads: int = 1,
                    hw=None, aging=None, shard_size: int = SHARD_SIZE) -> TrialResult:
    """Simulate ``trials`` independent realizations. Results do not depend on ``threads``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seed = scn.config.seed if seed is None else seed
    setup = make_setup(scn, hw, aging)
    n_shards = math.ceil(trials / shard_size)
    sizes = [min(shard_size, trials - s * shard_size) for s in range(n_shards)]
    if threads <= 1:
        parts = [_run_shard(setup, seed, s, T) for s, T in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda sT: _run_shard(setup, seed, *sT), enumerate(sizes)))
    return TrialResult.merge(parts)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def empirical_terms(result: TrialResult, hw: HardwareProfile, rho, a, p, sigma2) -> dict:
    """Every named SINR term per UE at an instant with data-lag correlations ``rho`` (K,)."""
    a = np.asarray(a, dtype=complex)
    p = np.asarray(p, dtype=float)
    rho = np.asarray(rho, dtype=float)
    rho_bar = np.sqrt(np.clip(1 - rho**2, 0, None))
    T = result.count
    K = len(p)
    idx = np.arange(K)
    ac = a.conj()
    a2 = np.abs(a) ** 2
    alpha2p = hw.alpha_d**2 * p

    C = result.gain_moments(rho, rho_bar)
    cki = np.real(np.einsum("km,kimn,kn->ki", ac, C, a))
    mean = rho * np.einsum("km,km->k", ac, result.m1 / T)
    lam_pow = rho**2 * np.real(np.einsum("km,kmn,kn->k", ac, result.S_lam[idx, idx], a)) / T
    iui = cki * alpha2p[None, :]
    iui[idx, idx] = 0.0

    U = result.power_moments(rho, rho_bar)  # (K, K, M, N)
    W = np.einsum("kiml,i->kml", U, hw.tx_gain * p)  # E{|h_hat_l|^2 W_l}
    kr2 = (hw.kappa_r**2)[None, :, None]
    H2 = result.H2 / T
    return {
        "DS": alpha2p * np.abs(mean) ** 2,
        "BU": alpha2p * (lam_pow - np.abs(mean) ** 2),
        "CA": alpha2p * (cki[idx, idx] - lam_pow),
        "IUI": iui,
        "DAC": cki @ (hw.alpha_d * (1 - hw.alpha_d) * p),
        "TRF": cki @ (hw.alpha_d * hw.kappa_t**2 * p),
        "RRF": np.einsum("km,kml->k", a2, kr2 * hw.a[None] ** 2 * W),
        "ADC": np.einsum("km,kml->k", a2, hw.b[None] * ((1 + kr2) * W + sigma2 * H2)),
        "NS": sigma2 * np.einsum("km,kml->k", a2, hw.a[None] ** 2 * H2),
    }


def interference_power(terms: dict) -> np.ndarray:
    return (terms["BU"] + terms["CA"] + terms["IUI"].sum(axis=1) + terms["DAC"]
            + terms["TRF"] + terms["RRF"] + terms["ADC"] + terms["NS"])


def empirical_sinr(terms: dict) -> np.ndarray:
    """DS over the sum of all other terms; zero desired power gives 0."""
    den = interference_power(terms)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(terms["DS"] > 0, terms["DS"] / den, 0.0)


def empirical_se(result: TrialResult, cfg: SystemConfig, hw, aging, weights, p) -> np.ndarray:
    """Per-UE SE; ``weights(n)`` returns the (K, M) second-layer weights at instant n."""
    total = np.zeros(cfg.K)
    for n in range(cfg.anchor, cfg.tau_c + 1):
        rho = aging.rho[:, n - cfg.anchor]
        terms = empirical_terms(result, hw, rho, weights(n), p, cfg.noise_power)
        total += np.log2(1 + empirical_sinr(terms))
    return total / cfg.tau_c
