"""Closed-form uplink SE with channel aging, hardware impairments and two-layer decoding.

Naming: for the estimate of UE k at AP m and the channel of UE i,
``g_mki[n] = h_hat_mk^H A_m h_mi[n]`` is the effective gain after local
combining. Every term of the SINR is a second moment of these gains or of
distortion terms built from them.

Moments that do not depend on the data instant are computed once in
:class:`TermCache`; everything that depends on n enters through
rho_i[n - lambda]^2, which keeps per-instant assembly cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .estimation import EstimationKernel, compute_kernels, diag_embed, hermitian
from .hardware import HardwareProfile
from .scenario import Scenario
from .temporal import AgingProfile


# ---------------------------------------------------------------------------
# Fourth-order moment identities for Rician channels with random LoS phase
# ---------------------------------------------------------------------------

def _diag(X):
    return np.einsum("...ii->...i", X)


def lemma1_diag_moment(R_bar, h_bar, R, A, P, rho_anchor, rho_age):
    """E{h[t]^H A P diag(h[n] h[n]^H) P^H A h[t]} for one link.

    h[t] and h[n] are the pilot-instant and data-instant channels, correlated
    through the anchor as rho_anchor * rho_age * R_bar.
    """
    X = A @ P
    XhR = np.diag(hermitian(X) @ R)
    base = np.trace(R_bar @ X @ np.diag(np.diag(R_bar)) @ hermitian(X))
    los = np.outer(h_bar, h_bar.conj())
    excess = (2 * np.real(np.trace(los @ X @ np.diag(XhR)))
              + np.trace(R @ X @ np.diag(XhR)))
    return float(np.real(base + (rho_anchor * rho_age) ** 2 * excess))


def lemma1_quartic_moment(R_bar, h_bar, R, A, P):
    """E{|h^H A P h|^2} for a Rician channel with uniformly random LoS phase."""
    X = A @ P
    t1 = np.trace(R_bar @ X @ R_bar @ hermitian(X))
    t2 = abs(np.trace(R @ X)) ** 2
    t3 = 2 * np.real(h_bar.conj() @ X @ h_bar * np.trace(R @ hermitian(X)))
    return float(np.real(t1 + t2 + t3))


def _excess_pair(xR, x_hbar, y_hbar):
    """|x^H R y|^2 + 2 Re{(x^H h_bar)(h_bar^H y)(y^H R x)}.

    The part of E{|x^H h_a|^2 |y^H h_b|^2} beyond the product of second
    moments, per unit squared correlation between the two instants.
    Arguments: xR = x^H R y, x_hbar = x^H h_bar, y_hbar = y^H h_bar.
    """
    return np.abs(xR) ** 2 + 2 * np.real(x_hbar * np.conj(y_hbar) * np.conj(xR))


# ---------------------------------------------------------------------------
# Instant-independent moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TermCache:
    """Power-free moments per (k, i, m); axes are (K, K, M) unless noted.

    nu:       tr(Gamma_mk A R_bar_mi A), the uncorrelated part of E|g_mki|^2
    mean:     E{g_mki[lambda]} (nonzero only for co-pilot pairs)
    quad_ex:  E|g_mki[lambda]|^2 - nu (co-pilot excess)
    rrf_base, adc_base: tr(Gamma_mk W diag(R_bar_mi)) with W = A^2 or B
    rrf_ex, adc_ex:     co-pilot excess of the same, per unit rho_i[n-lambda]^2
    """

    config: SystemConfig
    hw: HardwareProfile
    aging: AgingProfile
    kernel: EstimationKernel
    nu: np.ndarray
    mean: np.ndarray
    quad_ex: np.ndarray
    rrf_base: np.ndarray
    rrf_ex: np.ndarray
    adc_base: np.ndarray
    adc_ex: np.ndarray
    adc_const: np.ndarray  # (K, M) sigma^2 tr(Gamma B)
    Q: np.ndarray  # (K, M) tr(Gamma A A)
    same_pilot: np.ndarray  # (K, K)

    @property
    def instants(self) -> range:
        """Data instants n = lambda..tau_c (1-based)."""
        return range(self.config.anchor, self.config.tau_c + 1)

    def rho_data(self, n: int) -> np.ndarray:
        if n < self.config.anchor or n > self.config.tau_c:
            raise ValueError(f"instant {n} is not a data instant")
        return self.aging.rho[:, n - self.config.anchor]

    def terms(self, n: int) -> "SETermSet":
        return build_terms(self, n)


def build_cache(scn: Scenario, hw: HardwareProfile | None = None,
                aging: AgingProfile | None = None) -> TermCache:
    cfg = scn.config
    hw = HardwareProfile.from_config(cfg) if hw is None else hw
    aging = AgingProfile.from_config(cfg) if aging is None else aging
    ker = compute_kernels(scn, hw, aging)
    st = scn.stats
    M, K, N = cfg.M, cfg.K, cfg.N
    a, b, v = hw.a, hw.b, hw.v  # (M, N)
    p_tilde = cfg.pilot_power
    mu_pilot = hw.alpha_d * np.sqrt(p_tilde)
    pi_pilot = hw.tx_gain * p_tilde
    rho_t = aging.anchor_lag(scn.pilots.slot, cfg.anchor)
    same = scn.pilots.same_pilot()

    R_bar, R, h_bar = ker.R_bar, st.R, st.h_bar  # (M, K, ...)
    Gamma, P, G = ker.Gamma, ker.P, ker.G
    gdiag = np.real(_diag(Gamma))  # (M, K, N)
    rdiag = np.real(_diag(R_bar))

    # nu[k,i,m] = tr(Gamma_mk A R_bar_mi A)
    ARA = a[:, None, :, None] * R_bar * a[:, None, None, :]
    nu = np.real(np.einsum("mkab,miba->kim", Gamma, ARA))

    # co-pilot moments; X = A P_mk
    X = a[:, None, :, None] * P  # (M, K, N, N)
    trXR = np.einsum("mkab,miba->kim", X, R)
    trXRbar = np.einsum("mkab,miba->kim", X, R_bar)
    hXh = np.einsum("mia,mkab,mib->kim", h_bar.conj(), X, h_bar)
    same = same.astype(float)
    mean = same[:, :, None] * (mu_pilot * rho_t)[None, :, None] * trXRbar
    # |tr(X R_bar)|^2 - |h^H X h|^2 in a cancellation-free form
    gauss_ex = np.abs(trXR) ** 2 + 2 * np.real(np.conj(hXh) * trXR)
    PR = np.einsum("mkab,miba->kima", P, R)  # (P_mk R_mi)_ll
    Ph = np.einsum("mkab,mib->kima", P, h_bar)
    hb = np.transpose(h_bar, (1, 0, 2))[None]  # (1, K, M, N) indexed [., i, m, l]
    diag_ex = np.einsum("ml,kiml->kim", v, _excess_pair(PR, Ph, hb))
    co = same[:, :, None] * (pi_pilot * rho_t**2)[None, :, None]
    quad_ex = co * (gauss_ex + diag_ex)

    # receive-RF / ADC kernels: sum_l W_l E{|h_hat_l|^2 |h_i,l[n]|^2}
    rrf_base = np.einsum("ml,mkl,mil->kim", a**2, gdiag, rdiag)
    adc_base = np.einsum("ml,mkl,mil->kim", b, gdiag, rdiag)
    GAR = np.einsum("mkab,mb,miba->kima", G, a, R)  # (G A R)_ll
    GAh = np.einsum("mkab,mb,mib->kima", G, a, h_bar)
    ex_gain = _excess_pair(GAR, GAh, hb)  # (K, K, M, N)
    # E_i[q, l] = |R_ql|^2 + 2 Re{h_q conj(h_l) R_lq}
    Eql = (np.abs(R) ** 2 + 2 * np.real(h_bar[..., :, None] * h_bar[..., None, :].conj()
                                        * np.swapaxes(R, -1, -2)))  # (M, i, q, l)
    G2v = np.abs(G) ** 2 * v[:, None, None, :]  # (M, k, l, q)
    ex_noise = np.einsum("mklq,miql->kiml", G2v, Eql)
    ex_total = ex_gain + ex_noise
    rrf_ex = co * np.einsum("ml,kiml->kim", a**2, ex_total)
    adc_ex = co * np.einsum("ml,kiml->kim", b, ex_total)

    adc_const = cfg.noise_power * np.einsum("ml,mkl->km", b, gdiag)
    Q = np.einsum("ml,mkl->km", a**2, gdiag)
    return TermCache(config=cfg, hw=hw, aging=aging, kernel=ker, nu=nu, mean=mean,
                     quad_ex=quad_ex, rrf_base=rrf_base, rrf_ex=rrf_ex,
                     adc_base=adc_base, adc_ex=adc_ex, adc_const=adc_const, Q=Q,
                     same_pilot=same)


# ---------------------------------------------------------------------------
# Per-instant term set
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SETermSet:
    """Power-free SINR kernels at one data instant.

    delta (K, M); bu (K, M, M); ca (K, M) diagonal; C (K, K, M, M);
    D, Dbar (K, K, M) diagonals with kappa_r,m^2 and (1 + kappa_r,m^2) folded in
    together with alpha_i (1 + kappa_t,i^2); adc_const, Q (K, M).
    With powers p the SINR matrices are alpha_k^2 p_k bu, alpha_k^2 p_k diag(ca),
    p_i D_ki, p_i Dbar_ki.
    """

    n: int
    delta: np.ndarray
    bu: np.ndarray
    ca: np.ndarray
    C: np.ndarray
    D: np.ndarray
    Dbar: np.ndarray
    adc_const: np.ndarray
    Q: np.ndarray
    alpha_d: np.ndarray
    tx_distortion: np.ndarray
    tx_gain: np.ndarray
    sigma2: float

    def omega_power_matrices(self) -> np.ndarray:
        """(K, K, M, M): Omega_k = sum_i p_i * out[k, i] + omega0_k (exactly affine)."""
        out = self.tx_gain[None, :, None, None] * self.C + diag_embed(self.D + self.Dbar)
        K = self.delta.shape[0]
        self_ds = (self.alpha_d**2)[:, None, None] * np.einsum("km,kn->kmn", self.delta, self.delta.conj())
        out[np.arange(K), np.arange(K)] -= self_ds
        return out

    def omega_constant(self) -> np.ndarray:
        return diag_embed(self.adc_const + self.sigma2 * self.Q)

    def omega(self, p) -> np.ndarray:
        """(K, M, M) interference-plus-noise matrices at powers p."""
        p = np.asarray(p, dtype=float)
        Om = np.einsum("i,kimn->kmn", p, self.omega_power_matrices()) + self.omega_constant()
        return 0.5 * (Om + hermitian(Om))


def build_terms(cache: TermCache, n: int) -> SETermSet:
    hw = cache.hw
    K = cache.config.K
    rho = cache.rho_data(n)  # (K,)
    rho2 = rho**2
    r2 = rho2[None, :, None]  # indexed by i
    chi = hw.copilot_gain
    kidx = np.arange(K)

    mean = cache.mean
    delta = rho[:, None] * np.real(mean[kidx, kidx])
    coh = (rho2 * chi)[None, :, None, None] * np.einsum("kim,kin->kimn", mean, mean.conj())
    diag_part = cache.nu + r2 * (cache.quad_ex - chi[None, :, None] * np.abs(mean) ** 2)
    C = coh + diag_embed(diag_part)

    nu_self = cache.nu[kidx, kidx]
    ca = (1 - rho2)[:, None] * nu_self
    bu = C[kidx, kidx] - np.einsum("km,kn->kmn", delta, delta) - diag_embed(ca)
    bu = 0.5 * (bu + hermitian(bu))

    txg = hw.tx_gain[None, :, None]
    kr2 = (hw.kappa_r**2)[None, None, :]
    D = kr2 * txg * (cache.rrf_base + r2 * cache.rrf_ex)
    Dbar = (1 + kr2) * txg * (cache.adc_base + r2 * cache.adc_ex)
    return SETermSet(n=n, delta=delta, bu=bu, ca=ca, C=C, D=D, Dbar=Dbar,
                     adc_const=cache.adc_const, Q=cache.Q, alpha_d=hw.alpha_d,
                     tx_distortion=hw.tx_distortion, tx_gain=hw.tx_gain,
                     sigma2=cache.config.noise_power)


def compute_se_terms(scn: Scenario, n: int, hw=None, aging=None) -> SETermSet:
    return build_cache(scn, hw, aging).terms(n)


# ---------------------------------------------------------------------------
# SINR, LSFD and SE
# ---------------------------------------------------------------------------

def assemble_sinr(terms: SETermSet, a, p):
    """Desired power, interference-plus-noise power and SINR per UE for weights a (K, M)."""
    a = np.asarray(a, dtype=complex)
    p = np.asarray(p, dtype=float)
    if not np.any(a):
        raise ValueError("all-zero combining weights leave the SINR undefined")
    Delta = terms.alpha_d**2 * p * np.abs(np.einsum("km,km->k", a.conj(), terms.delta)) ** 2
    Omega = np.real(np.einsum("km,kmn,kn->k", a.conj(), terms.omega(p), a))
    if np.any(Omega <= 0):
        raise FloatingPointError("interference-plus-noise power must be positive")
    return Delta, Omega, Delta / Omega


def optimal_lsfd(terms: SETermSet, p) -> np.ndarray:
    """Weights a_k = Omega_k^{-1} delta_k (generalized Rayleigh quotient maximizer)."""
    Om = terms.omega(p)
    L = np.linalg.cholesky(Om)
    y = np.linalg.solve(L, terms.delta[..., None].astype(complex))
    return np.linalg.solve(hermitian(L), y)[..., 0]


def sld_weights(terms: SETermSet) -> np.ndarray:
    return np.ones_like(terms.delta, dtype=complex)


def lsfd_sinr(terms: SETermSet, p) -> np.ndarray:
    """SINR with optimal weights: alpha^2 p delta^H Omega^{-1} delta."""
    a = optimal_lsfd(terms, p)
    q = np.real(np.einsum("km,km->k", terms.delta.conj(), a))
    return terms.alpha_d**2 * np.asarray(p, dtype=float) * q


def weights(terms: SETermSet, p, mode: str) -> np.ndarray:
    if mode == "lsfd":
        return optimal_lsfd(terms, p)
    if mode == "sld":
        return sld_weights(terms)
    raise ValueError(f"unknown combining mode {mode!r}")


def sinr_per_instant(cache: TermCache, p, mode: str = "lsfd") -> np.ndarray:
    """(tau_c - tau_p, K) SINR for every data instant."""
    out = []
    for n in cache.instants:
        t = cache.terms(n)
        if mode == "lsfd":
            out.append(lsfd_sinr(t, p))
        else:
            out.append(assemble_sinr(t, weights(t, p, mode), p)[2])
    return np.array(out)


def se_per_ue(cache: TermCache, p, mode: str = "lsfd") -> np.ndarray:
    """Per-UE SE: (1/tau_c) sum over data instants of log2(1 + SINR)."""
    return np.sum(np.log2(1 + sinr_per_instant(cache, p, mode)), axis=0) / cache.config.tau_c


def sum_se(sinr, tau_c: int) -> float:
    """Sum SE from a (instants, K) SINR array with the 1/tau_c prelog."""
    return float(np.sum(np.log2(1 + np.asarray(sinr))) / tau_c)


def term_powers(terms: SETermSet, a, p) -> dict:
    """Every named SINR term (powers after both combining layers) per UE k."""
    a = np.asarray(a, dtype=complex)
    p = np.asarray(p, dtype=float)
    ac = a.conj()
    alpha2p = terms.alpha_d**2 * p

    def quad(Mx):  # a_k^H M_k a_k
        return np.real(np.einsum("km,kmn,kn->k", ac, Mx, a))

    def quad_pair(Mx):  # a_k^H M_ki a_k, (K, K)
        return np.real(np.einsum("km,kimn,kn->ki", ac, Mx, a))

    def quad_diag(d):  # diagonal kernels (K, K, M) -> (K, K)
        return np.einsum("km,kim->ki", np.abs(a) ** 2, d)

    cki = quad_pair(terms.C)
    K = len(p)
    iui = cki * (terms.alpha_d**2 * p)[None, :]
    iui[np.arange(K), np.arange(K)] = 0.0
    return {
        "DS": alpha2p * np.abs(np.einsum("km,km->k", ac, terms.delta)) ** 2,
        "BU": alpha2p * quad(terms.bu),
        "CA": alpha2p * np.einsum("km,km->k", np.abs(a) ** 2, terms.ca),
        "IUI": iui,
        "DAC": cki @ (terms.alpha_d * (1 - terms.alpha_d) * p),
        "TRF": cki @ ((terms.tx_distortion - terms.alpha_d * (1 - terms.alpha_d)) * p),
        "RRF": quad_diag(terms.D) @ p,
        "ADC": quad_diag(terms.Dbar) @ p + np.einsum("km,km->k", np.abs(a) ** 2, terms.adc_const),
        "NS": terms.sigma2 * np.einsum("km,km->k", np.abs(a) ** 2, terms.Q),
    }


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def rayleigh_ideal_sinr(gamma_bar, beta, N, p, rho_data, same_pilot, sigma2, a):
    """SINR for ideal hardware and uncorrelated Rayleigh fading (R = beta I).

    gamma_bar (M, K): per-antenna estimate variance tr(Gamma_mk)/N;
    beta (M, K); rho_data (K,): rho_k[n - lambda]; a (K, M) weights.
    Co-pilot coherent interference is summed over i in P_k without k itself.
    """
    p = np.asarray(p, dtype=float)
    K = len(p)
    ac = np.conj(a)
    num = p * rho_data**2 * np.abs(np.einsum("km,mk->k", ac, N * gamma_bar)) ** 2
    a2 = np.abs(a) ** 2
    spread = np.einsum("km,mk,mi,i->k", a2, N * gamma_bar, beta, p)
    coherent = np.zeros(K)
    root = np.sqrt(gamma_bar)
    for k in range(K):
        for i in range(K):
            if i != k and same_pilot[k, i]:
                coherent[k] += (N**2 * p[i] * rho_data[i] ** 2
                                * np.abs(np.sum(ac[k] * root[:, k] * root[:, i])) ** 2)
    noise = sigma2 * np.einsum("km,mk->k", a2, N * gamma_bar)
    return num / (spread + coherent + noise)


def classical_single_antenna_sinr(gamma, beta, p, same_pilot, sigma2):
    """Single-antenna cell-free SINR with unit weights, no aging, equal pilot powers."""
    K = len(p)
    out = np.empty(K)
    for k in range(K):
        num = p[k] * np.sum(gamma[:, k]) ** 2
        contam = sum(p[i] * np.sum(gamma[:, k] * beta[:, i] / beta[:, k]) ** 2
                     for i in range(K) if i != k and same_pilot[k, i])
        spread = sum(p[i] * np.sum(gamma[:, k] * beta[:, i]) for i in range(K))
        out[k] = num / (contam + spread + sigma2 * np.sum(gamma[:, k]))
    return out


def iui_aging_coefficients(cache: TermCache, a, p, k: int, i: int):
    """Fit IUI_ki[n] = e2 + e4 rho_i[n - lambda]^2 over all data instants.

    Returns (e2, e4, max relative residual). ``a`` is a fixed (M,) weight vector.
    """
    a = np.asarray(a, dtype=complex)
    values, x = [], []
    for n in cache.instants:
        t = cache.terms(n)
        values.append(cache.hw.alpha_d[i] ** 2 * p[i]
                      * np.real(a.conj() @ t.C[k, i] @ a))
        x.append(cache.rho_data(n)[i] ** 2)
    values, x = np.array(values), np.array(x)
    if np.ptp(x) == 0:
        return float(values.mean()), 0.0, float(np.ptp(values) / max(abs(values.mean()), 1e-300))
    design = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    resid = np.max(np.abs(design @ coef - values)) / np.max(np.abs(values))
    return float(coef[0]), float(coef[1]), float(resid)
