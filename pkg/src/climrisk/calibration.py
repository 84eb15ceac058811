"""Firm-value model estimation and cluster jump-parameter calibration.

Per firm, asset value and asset volatility solve the two-equation system
``E = C_BS(V, D, sigma_hat, T, r)`` and
``E * sigma_E = N(d1) * V * sigma_hat``; per cluster, the jump pair
``(lam, theta)`` minimizes the root of the summed squared percentage error
of the jump pricer against the stressed equity targets.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize
from scipy.special import ndtr

from .clustering import ClusterKey
from .errors import EmptyCluster, InvalidInputs, NoConvergence, OptimizerFailed
from .pricing import JumpParams, bs_call, lewis_call_batch

log = logging.getLogger("climrisk.calibration")

LAM_BOUNDS = (1e-3, 5.0)
THETA_BOUNDS = (1e-3, 1.5)


@dataclass(frozen=True)
class FvmFirmParams:
    """Calibrated asset value and volatility, with the correlation split."""

    firm_id: str
    asset_value: float
    asset_vol: float
    rho: float
    sigma_idio: float
    omega_sys: float

    @classmethod
    def build(cls, firm_id: str, asset_value: float, asset_vol: float, rho: float):
        sigma, omega = split_correlation(asset_vol, rho)
        return cls(firm_id, asset_value, asset_vol, rho, sigma, omega)


@dataclass(frozen=True)
class ClusterParams:
    key: ClusterKey
    jumps: JumpParams
    alpha: float
    rmspe: float
    model_mean_loss: float
    target_mean_loss: float


def split_correlation(sigma_hat: float, rho: float) -> tuple[float, float]:
    """Split total asset vol into idiosyncratic and systematic legs.

    ``sigma = sigma_hat * sqrt(1 - rho)``, ``omega = sigma_hat * sqrt(rho)``
    so that any two firms' log assets correlate at ``rho``.
    """
    if not (0.0 <= rho <= 1.0):
        raise InvalidInputs(f"rho must be in [0, 1], got {rho}")
    if not (sigma_hat > 0.0):
        raise InvalidInputs(f"sigma_hat must be > 0, got {sigma_hat}")
    return sigma_hat * math.sqrt(1.0 - rho), sigma_hat * math.sqrt(rho)


def _d1(asset: float, debt: float, vol: float, maturity: float, rate: float) -> float:
    return (math.log(asset / debt) + (rate + 0.5 * vol * vol) * maturity) / (
        vol * math.sqrt(maturity)
    )


def _residuals(
    asset: float, vol: float, equity: float, equity_vol: float,
    debt: float, maturity: float, rate: float,
) -> tuple[float, float]:
    """Relative residuals of the two calibration equations."""
    price = bs_call(asset, debt, vol, maturity, rate)
    nd1 = ndtr(_d1(asset, debt, vol, maturity, rate))
    f1 = price / equity - 1.0
    f2 = (nd1 * asset * vol) / (equity * equity_vol) - 1.0
    return f1, f2


def solve_fvm(
    equity: float,
    equity_vol: float,
    debt: float,
    maturity: float,
    rate: float,
    tol: float = 1e-11,
) -> tuple[float, float]:
    """Asset value and asset vol from observed equity value and equity vol.

    Damped Newton in (log V, log sigma_hat) with the analytic Jacobian,
    started from ``V = E + D exp(-rT)``, ``sigma = sigma_E * E / V``; falls
    back to nested bisection on sigma_hat when Newton stalls.  Zero debt
    degenerates to ``(E, sigma_E)`` exactly.
    """
    if not (equity > 0 and equity_vol > 0 and maturity > 0 and debt >= 0):
        raise InvalidInputs(
            f"need equity, equity_vol, maturity > 0 and debt >= 0: "
            f"({equity}, {equity_vol}, {debt}, {maturity})"
        )
    if debt == 0.0:
        return equity, equity_vol

    sqrt_t = math.sqrt(maturity)
    disc_debt = debt * math.exp(-rate * maturity)

    def newton(v0: float, s0: float) -> tuple[float, float] | None:
        x = np.array([math.log(v0), math.log(s0)])
        for _ in range(80):
            v, s = math.exp(x[0]), math.exp(x[1])
            f1, f2 = _residuals(v, s, equity, equity_vol, debt, maturity, rate)
            if abs(f1) < tol and abs(f2) < tol:
                return v, s
            d1 = _d1(v, debt, s, maturity, rate)
            d2 = d1 - s * sqrt_t
            nd1 = ndtr(d1)
            pdf1 = math.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)
            # dC/dV = N(d1); dC/ds = V sqrt(T) phi(d1)
            j11 = v * nd1 / equity
            j12 = s * (v * sqrt_t * pdf1) / equity
            # F2 = N(d1) V s / (E sigma_E); dd1/dV = 1/(V s sqrt(T)); dd1/ds = -d2/s
            scale2 = 1.0 / (equity * equity_vol)
            j21 = v * (nd1 * s + pdf1 / sqrt_t) * scale2
            j22 = s * (nd1 * v - v * pdf1 * d2) * scale2
            jac = np.array([[j11, j12], [j21, j22]])
            try:
                step = np.linalg.solve(jac, np.array([f1, f2]))
            except np.linalg.LinAlgError:
                return None
            step = np.clip(step, -2.0, 2.0)
            damp = 1.0
            base = abs(f1) + abs(f2)
            for _ in range(30):
                cand = x - damp * step
                v_c, s_c = math.exp(cand[0]), math.exp(cand[1])
                try:
                    g1, g2 = _residuals(v_c, s_c, equity, equity_vol, debt, maturity, rate)
                except (OverflowError, ValueError):
                    damp *= 0.5
                    continue
                if abs(g1) + abs(g2) < base:
                    x = cand
                    break
                damp *= 0.5
            else:
                return None
        return None

    v_init = equity + disc_debt
    starts = [
        (v_init, max(equity_vol * equity / v_init, 1e-6)),
        (v_init, equity_vol),
        (equity + debt, equity_vol * 0.5),
    ]
    for v0, s0 in starts:
        result = newton(v0, s0)
        if result is not None:
            return result

    # Fallback: for fixed sigma, V solves the price equation (monotone in V);
    # outer root-find on sigma through the vol equation.
    def v_of_sigma(s: float) -> float:
        lo = max(disc_debt * 1e-12, equity * 1e-9)
        hi = equity + disc_debt
        # bs_call(V) - E is increasing in V; bracket upward if needed
        while bs_call(hi, debt, s, maturity, rate) < equity:
            hi *= 2.0
            if hi > 1e18 * equity:
                raise NoConvergence("price equation bracket failed")
        lo = max(lo, equity)  # call price <= V, so V >= E at the root
        if bs_call(lo, debt, s, maturity, rate) > equity:
            lo = equity * (1.0 - 1e-12)
        return brentq(
            lambda v: bs_call(v, debt, s, maturity, rate) - equity,
            lo, hi, xtol=1e-14 * max(equity, 1.0), rtol=8.9e-16,
        )

    def vol_gap(s: float) -> float:
        v = v_of_sigma(s)
        return ndtr(_d1(v, debt, s, maturity, rate)) * v * s - equity * equity_vol

    s_lo, s_hi = 1e-8, equity_vol * 1.5 + 0.5
    try:
        while vol_gap(s_hi) < 0:
            s_hi *= 2.0
            if s_hi > 1e4:
                raise NoConvergence("vol equation bracket failed")
        s_star = brentq(vol_gap, s_lo, s_hi, xtol=1e-15, rtol=8.9e-16)
        v_star = v_of_sigma(s_star)
    except (ValueError, NoConvergence) as exc:
        raise NoConvergence(f"FVM solver failed after multi-start: {exc}") from None

    f1, f2 = _residuals(v_star, s_star, equity, equity_vol, debt, maturity, rate)
    if abs(f1) > 1e-9 or abs(f2) > 1e-9:
        raise NoConvergence(f"FVM residuals too large: ({f1:.2e}, {f2:.2e})")
    return v_star, s_star


@dataclass(frozen=True)
class CalibrationMember:
    """One firm's pricing inputs and stressed target inside a cluster."""

    firm_id: str
    asset_value: float
    asset_vol: float
    debt: float
    maturity: float
    rate: float
    baseline_equity: float
    stressed_target: float


def _reflect(u: float, lo: float, hi: float) -> float:
    """Fold a real number into [lo, hi] by reflection at the edges."""
    span = hi - lo
    t = (u - lo) % (2.0 * span)
    return lo + (t if t <= span else 2.0 * span - t)


def calibrate_cluster_jumps(
    key: ClusterKey,
    members: list[CalibrationMember],
    alpha: float,
    return_trace: bool = False,
):
    """Jump pair minimizing the summed squared percentage pricing error.

    The objective ``sqrt(sum_j (E~_j - C_jump_j)^2 / E~_j^2)`` is evaluated
    with a shared-grid pricer across the cluster's firms.  A log-spaced
    8 x 8 grid over the admissible box seeds Nelder-Mead; the box is
    enforced by reflecting coordinates at the edges.
    """
    if not members:
        raise EmptyCluster(f"cluster {key} has no calibratable members")
    targets = np.array([m.stressed_target for m in members])
    if np.any(targets <= 0):
        raise InvalidInputs(f"cluster {key}: stressed targets must be positive")

    log_lo = (math.log(LAM_BOUNDS[0]), math.log(THETA_BOUNDS[0]))
    log_hi = (math.log(LAM_BOUNDS[1]), math.log(THETA_BOUNDS[1]))
    trace: list[float] = []
    best_seen = math.inf

    def objective_at(lam: float, theta: float) -> float:
        total = 0.0
        jumps = JumpParams(lam, theta)
        for m, target in zip(members, targets):
            price = float(
                lewis_call_batch(
                    np.array([m.asset_value]), m.debt, m.asset_vol, m.maturity, m.rate, jumps
                )[0]
            )
            total += (target - price) ** 2 / (target * target)
        return math.sqrt(total)

    def objective(u: np.ndarray) -> float:
        nonlocal best_seen
        lam = math.exp(_reflect(float(u[0]), log_lo[0], log_hi[0]))
        theta = math.exp(_reflect(float(u[1]), log_lo[1], log_hi[1]))
        value = objective_at(lam, theta)
        best_seen = min(best_seen, value)
        trace.append(best_seen)
        return value

    grid_lam = np.geomspace(*LAM_BOUNDS, 8)
    grid_theta = np.geomspace(*THETA_BOUNDS, 8)
    seed, seed_val = None, math.inf
    for lam in grid_lam:
        for theta in grid_theta:
            value = objective_at(float(lam), float(theta))
            if value < seed_val:
                seed, seed_val = (float(lam), float(theta)), value
    best_seen = seed_val
    trace.append(best_seen)

    x0 = np.array([math.log(seed[0]), math.log(seed[1])])
    result = None
    for _ in range(3):
        result = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "xatol": 1e-12,
                "fatol": 1e-14,
                "maxiter": 4000,
                "maxfev": 4000,
            },
        )
        x0 = result.x
    if result is None or not math.isfinite(result.fun):
        raise OptimizerFailed(f"cluster {key}: jump calibration did not produce a result")

    lam = math.exp(_reflect(float(result.x[0]), log_lo[0], log_hi[0]))
    theta = math.exp(_reflect(float(result.x[1]), log_lo[1], log_hi[1]))
    jumps = JumpParams(lam, theta)
    rmspe = objective_at(lam, theta)
    log.info("cluster %s: lam=%.6g theta=%.6g rmspe=%.3e", key, lam, theta, rmspe)

    model_losses = []
    target_losses = []
    for m in members:
        price = float(
            lewis_call_batch(
                np.array([m.asset_value]), m.debt, m.asset_vol, m.maturity, m.rate, jumps
            )[0]
        )
        model_losses.append((m.baseline_equity - price) / m.baseline_equity * 100.0)
        target_losses.append((m.baseline_equity - m.stressed_target) / m.baseline_equity * 100.0)

    params = ClusterParams(
        key=key,
        jumps=jumps,
        alpha=alpha,
        rmspe=rmspe,
        model_mean_loss=float(np.mean(model_losses)),
        target_mean_loss=float(np.mean(target_losses)),
    )
    return (params, trace) if return_trace else params
