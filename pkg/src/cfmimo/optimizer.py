"""Sum-SE power allocation at one data instant by minorization-maximization.

With fixed second-layer weights every SINR is a ratio of a term linear in the
UE's own power and a term affine in all powers:

    SINR_k(p) = d_k p_k / (omega0_k + sum_i omega_ki p_i)

Two MM schemes are provided:
* plain quadratic-transform MM, whose inner concave problem is solved by
  projected gradient ascent;
* the Lagrangian-dual plus quadratic-transform MM with a closed-form power
  update (``run_algorithm1``).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .closed_form_se import SETermSet, TermCache, optimal_lsfd, sld_weights

log = logging.getLogger(__name__)
LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class AffineSinrCoeffs:
    d: np.ndarray  # (K,)
    omega0: np.ndarray  # (K,)
    omega: np.ndarray  # (K, K), omega[k, i] multiplies p_i in Omega_k
    p_max: float

    def desired(self, p):
        return self.d * p

    def interference(self, p):
        return self.omega0 + self.omega @ p

    def sinr(self, p):
        return self.desired(p) / self.interference(p)


@dataclass(eq=False)
class PowerAllocation:
    p: np.ndarray
    history: list = field(default_factory=list)  # objective after each iteration
    iterations: int = 0
    converged: bool = False


def extract_affine_coeffs(terms: SETermSet, a, p_max: float) -> AffineSinrCoeffs:
    """Regroup the SINR by powers for fixed weights ``a`` (K, M)."""
    a = np.asarray(a, dtype=complex)
    ac = a.conj()
    mats = terms.omega_power_matrices()
    omega = np.real(np.einsum("km,kimn,kn->ki", ac, mats, a))
    omega0 = np.real(np.einsum("km,kmn,kn->k", ac, terms.omega_constant(), a))
    d = terms.alpha_d**2 * np.abs(np.einsum("km,km->k", ac, terms.delta)) ** 2
    # exact zeros can come out as -1e-30 after cancellation
    return AffineSinrCoeffs(d=d, omega0=np.maximum(omega0, 0.0),
                            omega=np.maximum(omega, 0.0), p_max=float(p_max))


def objective(p, coeffs: AffineSinrCoeffs) -> float:
    """Sum of log2(1 + SINR_k) at one instant (the 1/tau_c prelog is left out)."""
    return float(np.sum(np.log2(1 + coeffs.sinr(np.asarray(p, dtype=float)))))


def objective_gradient(p, coeffs: AffineSinrCoeffs) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    Om = coeffs.interference(p)
    De = coeffs.desired(p)
    tot = Om + De
    # d/dp_j log(Om + De) - log(Om)
    g = np.diag(coeffs.d / tot) + coeffs.omega / tot[:, None] - coeffs.omega / Om[:, None]
    return g.sum(axis=0) / LN2


# ---------------------------------------------------------------------------
# Auxiliary-variable updates
# ---------------------------------------------------------------------------

def y_update(p, coeffs: AffineSinrCoeffs, gamma=None) -> np.ndarray:
    """Quadratic-transform variable.

    Without ``gamma``: sqrt(Delta)/Omega (plain MM). With ``gamma``:
    sqrt(Delta (1 + gamma)) / (Delta + Omega) (dual-transform MM).
    """
    De = coeffs.desired(np.asarray(p, dtype=float))
    Om = coeffs.interference(np.asarray(p, dtype=float))
    if gamma is None:
        return np.sqrt(De) / Om
    return np.sqrt(De * (1 + gamma)) / (De + Om)


def gamma_update(p, coeffs: AffineSinrCoeffs) -> np.ndarray:
    """Optimal dual-transform variable gamma = Delta / Omega (the SINR)."""
    return coeffs.sinr(np.asarray(p, dtype=float))


def lagrange_multiplier(p, coeffs: AffineSinrCoeffs) -> np.ndarray:
    """Multiplier of the SINR constraint at the optimal gamma, for diagnostics."""
    p = np.asarray(p, dtype=float)
    De, Om = coeffs.desired(p), coeffs.interference(p)
    return Om / ((De + Om) * LN2)


def surrogate_value(p, y, coeffs: AffineSinrCoeffs, gamma=None) -> float:
    """Lower bound of :func:`objective`, tight at the matching auxiliary variables.

    Plain form: sum log2(1 + 2 y sqrt(Delta) - y^2 Omega), -inf if an argument
    leaves the log domain. Dual form: sum [ln(1+gamma) - gamma
    + 2 y sqrt((1+gamma) Delta) - y^2 (Delta + Omega)] / ln 2.
    """
    p = np.asarray(p, dtype=float)
    De, Om = coeffs.desired(p), coeffs.interference(p)
    if gamma is None:
        arg = 1 + 2 * y * np.sqrt(De) - y**2 * Om
        if np.any(arg <= 0):
            return -math.inf
        return float(np.sum(np.log2(arg)))
    val = (np.log1p(gamma) - gamma + 2 * y * np.sqrt((1 + gamma) * De) - y**2 * (De + Om))
    return float(np.sum(val) / LN2)


def surrogate_gradient(p, y, coeffs: AffineSinrCoeffs) -> np.ndarray:
    """Gradient in p of the plain surrogate (p > 0)."""
    p = np.asarray(p, dtype=float)
    De, Om = coeffs.desired(p), coeffs.interference(p)
    arg = 1 + 2 * y * np.sqrt(De) - y**2 * Om
    own = y * np.sqrt(coeffs.d / p) / arg
    cross = (y**2 / arg) @ coeffs.omega
    return (own - cross) / LN2


# ---------------------------------------------------------------------------
# Plain MM: concave inner problem by projected gradient
# ---------------------------------------------------------------------------

def _p2_value_grad(x, y, coeffs):
    """Plain surrogate and its gradient in x = sqrt(p / p_max) on [0, 1]^K."""
    Pm = coeffs.p_max
    sq = 2 * y * np.sqrt(coeffs.d * Pm)
    Om = coeffs.omega0 + coeffs.omega @ (Pm * x**2)
    arg = 1 + sq * x - y**2 * Om
    if np.any(arg <= 0):
        return -math.inf, None
    grad = (sq / arg - 2 * Pm * x * ((y**2 / arg) @ coeffs.omega)) / LN2
    return float(np.sum(np.log2(arg))), grad


def solve_p2_projected_gradient(coeffs: AffineSinrCoeffs, y, p0, tol=1e-10, max_iter=2000,
                                step0=1.0, shrink=0.5, slope=1e-4) -> np.ndarray:
    """Maximize the plain surrogate over the power box with y fixed.

    Works in x = sqrt(p / p_max), where the surrogate stays concave and its
    gradient finite at p = 0. Armijo backtracking along the projection arc;
    stops when the projected-gradient step is below ``tol``.
    """
    y = np.asarray(y, dtype=float)
    x = np.sqrt(np.clip(np.asarray(p0, dtype=float) / coeffs.p_max, 0.0, 1.0))
    f, g = _p2_value_grad(x, y, coeffs)
    if not math.isfinite(f):
        raise FloatingPointError("surrogate undefined at the starting point")
    step = step0
    for _ in range(max_iter):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite surrogate gradient")
        pg = np.clip(x + g, 0.0, 1.0) - x  # projected-gradient residual
        if np.linalg.norm(pg) <= tol:
            break
        t = step
        while True:
            xn = np.clip(x + t * g, 0.0, 1.0)
            fn, gn = _p2_value_grad(xn, y, coeffs)
            if fn >= f + slope * g @ (xn - x):
                break
            t *= shrink
            if t < 1e-20:
                return coeffs.p_max * x**2
        # let the step grow back after easy iterations
        step = min(t / shrink, 1e6) if t == step else t
        if np.linalg.norm(xn - x) <= tol * 1e-3:
            x, f, g = xn, fn, gn
            break
        x, f, g = xn, fn, gn
    return coeffs.p_max * x**2


def run_mm_projected_gradient(coeffs: AffineSinrCoeffs, p0, max_iters=200, tol=1e-8,
                              inner_tol=1e-10) -> PowerAllocation:
    """Plain MM: y = sqrt(Delta)/Omega, then solve the concave surrogate problem."""
    p = np.clip(np.asarray(p0, dtype=float), 0.0, coeffs.p_max)
    out = PowerAllocation(p=p, history=[objective(p, coeffs)])
    for it in range(1, max_iters + 1):
        y = y_update(p, coeffs)
        p_new = solve_p2_projected_gradient(coeffs, y, p, tol=inner_tol)
        # the inner solver only moves uphill on the surrogate; keep p if it did not
        if surrogate_value(p_new, y, coeffs) < surrogate_value(p, y, coeffs):
            p_new = p
        step = float(np.sum((p_new - p) ** 2))
        p = p_new
        out.history.append(objective(p, coeffs))
        out.iterations = it
        if step <= tol:
            out.converged = True
            break
    out.p = p
    return out


# ---------------------------------------------------------------------------
# Closed-form MM
# ---------------------------------------------------------------------------

def closed_form_power_update(y, gamma, coeffs: AffineSinrCoeffs) -> np.ndarray:
    """Exact maximizer of the dual-transform surrogate over the power box.

    p_k = min(p_max, y_k^2 (1+gamma_k) d_k / (y_k^2 d_k + l_k)^2) with
    l_k = sum_i y_i^2 omega_ik, the derivative of sum_i y_i^2 Omega_i in p_k.
    """
    y = np.asarray(y, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    l = (y**2) @ coeffs.omega
    den = (y**2 * coeffs.d + l) ** 2
    num = y**2 * (1 + gamma) * coeffs.d
    zero = den == 0
    if np.any(zero):
        warnings.warn("power update has a zero denominator; using p_max", RuntimeWarning,
                      stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(zero, coeffs.p_max, num / np.where(zero, 1.0, den))
    return np.clip(p, 0.0, coeffs.p_max)


def run_algorithm1(coeffs: AffineSinrCoeffs, p0, max_iters=50, tol=1e-8) -> PowerAllocation:
    """Closed-form MM: (gamma, y) at p, then the closed-form p update.

    Stops when ||p_new - p||^2 <= tol. ``history`` holds the objective at p0
    and after every iteration; it is nondecreasing.
    """
    p = np.clip(np.asarray(p0, dtype=float), 0.0, coeffs.p_max)
    out = PowerAllocation(p=p, history=[objective(p, coeffs)])
    for it in range(1, max_iters + 1):
        gamma = gamma_update(p, coeffs)
        y = y_update(p, coeffs, gamma)
        p_new = closed_form_power_update(y, gamma, coeffs)
        step = float(np.sum((p_new - p) ** 2))
        p = p_new
        out.history.append(objective(p, coeffs))
        out.iterations = it
        if step <= tol:
            out.converged = True
            break
    out.p = p
    if not out.converged:
        log.info("closed-form MM stopped after %d iterations without converging", max_iters)
    return out


def initial_power(coeffs: AffineSinrCoeffs, K: int) -> np.ndarray:
    """Equal power allocation: the better of p_max/2 and p_max for every UE."""
    half = np.full(K, coeffs.p_max / 2)
    full = np.full(K, coeffs.p_max)
    return full if objective(full, coeffs) > objective(half, coeffs) else half


def optimize_power(coeffs: AffineSinrCoeffs, method="closed_form", p0=None, **kw):
    K = len(coeffs.d)
    p0 = initial_power(coeffs, K) if p0 is None else p0
    if method == "closed_form":
        return run_algorithm1(coeffs, p0, **kw)
    if method == "projected_gradient":
        return run_mm_projected_gradient(coeffs, p0, **kw)
    raise ValueError(f"unknown method {method!r}")


def alternate_with_lsfd(cache: TermCache, n_opt: int | None = None, rounds: int = 1,
                        mode: str = "lsfd", method: str = "closed_form", p0=None, **kw):
    """Power optimization at instant ``n_opt`` with optional weight refreshes.

    The weights start as LSFD at p0 (or all ones for ``mode="sld"``), then the
    powers are optimized. ``rounds=0`` stops there. Each further round
    recomputes LSFD weights at the current powers and optimizes again; every
    round can only raise the objective. SLD weights never change.
    Returns (p, weights, objective history across rounds).
    """
    cfg = cache.config
    n_opt = cfg.anchor if n_opt is None else n_opt
    terms = cache.terms(n_opt)
    K = cfg.K
    p = np.full(K, cfg.p_max / 2) if p0 is None else np.asarray(p0, dtype=float)
    a = sld_weights(terms) if mode == "sld" else optimal_lsfd(terms, p)
    coeffs = extract_affine_coeffs(terms, a, cfg.p_max)
    if p0 is None:
        p = initial_power(coeffs, K)
    history = []
    for r in range(max(rounds, 0) + 1):
        if r > 0:
            if mode == "sld":
                break
            a = optimal_lsfd(terms, p)
            coeffs = extract_affine_coeffs(terms, a, cfg.p_max)
        res = optimize_power(coeffs, method, p, **kw)
        p = res.p
        history.append(res.history[-1])
    if mode != "sld":
        a = optimal_lsfd(terms, p)
    return p, a, history
