"""Cluster shock factors and dividend-growth stressed equity targets.

The climate stress scales a firm's dividend growth rate down by the cluster
shock factor ``alpha`` (growth becomes ``(1 - alpha) g``); the resulting
relative equity change follows from the constant-growth valuation identity
and is independent of the initial dividend level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .clustering import ClusterKey
from .errors import DegenerateGrowth, DegenerateSeries, GordonInvalid
from .ingestion import ExclusionRecord, FirmRecord, Stage

__all__ = [
    "ShockInputs",
    "ShockRow",
    "StressedEquity",
    "estimate_growth",
    "required_return",
    "cluster_alpha",
    "gordon_shock",
    "shock_table",
    "stressed_equity_targets",
]


@dataclass(frozen=True)
class ShockInputs:
    growth: float
    required_return: float
    alpha: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise GordonInvalid(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class StressedEquity:
    firm_id: str
    shock: float
    stressed_value: float


@dataclass(frozen=True)
class ShockRow:
    """StressedEquity plus the intermediates that feed the shocks table."""

    firm_id: str
    key: ClusterKey
    alpha: float
    growth: float
    required_return: float
    shock: float
    stressed_value: float

    def target(self) -> StressedEquity:
        return StressedEquity(self.firm_id, self.shock, self.stressed_value)


def estimate_growth(ebitda_series: Sequence[tuple[int, float]]) -> float:
    """Annualized growth rate from an EBITDA history.

    Ordinary least squares of EBITDA on the year gives a currency-per-year
    slope; dividing by the mean absolute EBITDA over the window turns it
    into a dimensionless rate usable as a dividend growth rate.
    """
    if len(ebitda_series) < 2:
        raise DegenerateSeries(f"need at least 2 observations, got {len(ebitda_series)}")
    years = [float(t) for t, _ in ebitda_series]
    values = [float(v) for _, v in ebitda_series]
    if len(set(years)) < 2:
        raise DegenerateSeries("all observations share the same year")
    n = len(years)
    mean_t = sum(years) / n
    mean_v = sum(values) / n
    sxx = sum((t - mean_t) ** 2 for t in years)
    sxy = sum((t - mean_t) * (v - mean_v) for t, v in zip(years, values))
    slope = sxy / sxx
    denom = sum(abs(v) for v in values) / n
    if denom == 0.0:
        return 0.0
    return slope / denom


def required_return(beta: float, market_return: float) -> float:
    """Required return as beta times the reference index return."""
    if not (math.isfinite(beta) and math.isfinite(market_return)):
        raise GordonInvalid(f"beta and market return must be finite: {beta}, {market_return}")
    return beta * market_return


def cluster_alpha(mean_vulnerability: float, mean_intensity: float) -> float:
    """Shock factor: product of the cluster's vulnerability and intensity scores."""
    if not (0.0 <= mean_vulnerability <= 1.0 and 0.0 <= mean_intensity <= 1.0):
        raise GordonInvalid(
            f"scores must lie in [0, 1], got ({mean_vulnerability}, {mean_intensity})"
        )
    return mean_vulnerability * mean_intensity


def gordon_shock(inputs: ShockInputs) -> float:
    """Relative equity change when growth drops to ``(1 - alpha) g``.

    ``shock = (1 + g~) / (q - g~) * (q - g) / (1 + g) - 1`` with
    ``g~ = (1 - alpha) g``.  Requires ``1 + g > 0`` and a positive
    denominator for both the baseline and stressed valuations; for positive
    growth that means ``q > g``, which keeps the shock above -1 and the
    stressed equity nonnegative.
    """
    g, q, alpha = inputs.growth, inputs.required_return, inputs.alpha
    if g <= -1.0:
        raise DegenerateGrowth(f"growth must exceed -1, got {g}")
    g_tilde = (1.0 - alpha) * g
    if q <= g_tilde:
        raise GordonInvalid(f"required return {q} must exceed stressed growth {g_tilde}")
    if g > 0.0 and q <= g:
        raise GordonInvalid(f"required return {q} must exceed growth {g}")
    if g == 0.0 or alpha == 0.0:
        return 0.0
    return (1.0 + g_tilde) / (q - g_tilde) * (q - g) / (1.0 + g) - 1.0


def shock_table(
    firms: Sequence[FirmRecord],
    keys: Mapping[str, ClusterKey],
    alphas: Mapping[ClusterKey, float],
    market_returns: Mapping[str, float],
) -> tuple[list[ShockRow], list[ExclusionRecord]]:
    """Per-firm shock rows with the growth/return intermediates.

    Growth comes from the firm's EBITDA history, the required return from
    beta times the return of its reference index (first listed membership).
    Firms that fail the valuation preconditions are excluded and ledgered,
    never imputed.
    """
    rows: list[ShockRow] = []
    ledger: list[ExclusionRecord] = []
    for firm in firms:
        key = keys[firm.firm_id]
        alpha = alphas[key]
        try:
            g = estimate_growth(firm.ebitda_series)
        except DegenerateSeries as exc:
            ledger.append(ExclusionRecord(Stage.SHOCK_COMPUTATION, firm.firm_id, str(exc)))
            continue
        if not firm.index_memberships:
            ledger.append(
                ExclusionRecord(Stage.SHOCK_COMPUTATION, firm.firm_id, "no index membership")
            )
            continue
        reference_index = firm.index_memberships[0][0]
        if reference_index not in market_returns:
            ledger.append(
                ExclusionRecord(
                    Stage.SHOCK_COMPUTATION,
                    firm.firm_id,
                    f"no market return for index {reference_index}",
                )
            )
            continue
        q = required_return(firm.capm_beta, market_returns[reference_index])
        try:
            shock = gordon_shock(ShockInputs(g, q, alpha))
        except (GordonInvalid, DegenerateGrowth) as exc:
            ledger.append(
                ExclusionRecord(Stage.SHOCK_COMPUTATION, firm.firm_id, f"GordonInvalid: {exc}")
            )
            continue
        rows.append(
            ShockRow(
                firm_id=firm.firm_id,
                key=key,
                alpha=alpha,
                growth=g,
                required_return=q,
                shock=shock,
                stressed_value=(1.0 + shock) * firm.equity_value,
            )
        )
    return rows, ledger


def stressed_equity_targets(
    firms: Sequence[FirmRecord],
    keys: Mapping[str, ClusterKey],
    alphas: Mapping[ClusterKey, float],
    market_returns: Mapping[str, float],
) -> tuple[list[StressedEquity], list[ExclusionRecord]]:
    """Per-firm stressed equity targets ``E~ = (1 + shock) E``."""
    rows, ledger = shock_table(firms, keys, alphas, market_returns)
    return [row.target() for row in rows], ledger
