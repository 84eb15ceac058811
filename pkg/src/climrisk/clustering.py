"""Climate cluster assignment: vulnerability tiers x asset-intensity tiers.

Country vulnerability scores are cut into three agglomerative clusters and
the two upper ones merged (the top cluster is always thin); sector asset
intensity (PPE over revenues, averaged per NACE sector, winsorized and
min-max scaled) is cut into four tiers.  Ward linkage on 1-D Euclidean
distance keeps the cuts variance-minimizing and reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInput, TooFewPoints, ZeroRevenue
from .ingestion import CountryClimate, FirmRecord

log = logging.getLogger("climrisk.clustering")


class VulnerabilityTier(str, Enum):
    LOW = "Low"
    MID_HIGH = "MidHigh"


class IntensityTier(str, Enum):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    EXTREME = "Extreme"


INTENSITY_ORDER = (
    IntensityTier.LOW,
    IntensityTier.MEDIUM,
    IntensityTier.HIGH,
    IntensityTier.EXTREME,
)


@dataclass(frozen=True)
class ClusterKey:
    vulnerability_tier: VulnerabilityTier
    intensity_tier: IntensityTier

    def __str__(self) -> str:
        return f"{self.vulnerability_tier.value}/{self.intensity_tier.value}"


ALL_CLUSTER_KEYS = tuple(
    ClusterKey(v, i) for v in VulnerabilityTier for i in INTENSITY_ORDER
)


@dataclass(frozen=True)
class ClusterStats:
    """Per-cluster firm counts and moments.

    Vulnerability and intensity moments are computed at the company level
    (each firm carries its country score and its sector's scaled intensity);
    the sector-level intensity moments are reported alongside because the
    intensity clustering itself runs on sector averages.
    """

    key: ClusterKey
    firm_count: int
    mean_vulnerability: float
    sd_vulnerability: float
    mean_intensity: float
    sd_intensity: float
    sector_mean_intensity: float
    sector_sd_intensity: float


def winsorize_minmax(values: Sequence[float], p_lo: float = 1.0, p_hi: float = 99.0) -> np.ndarray:
    """Clip to the [p_lo, p_hi] empirical percentiles, then rescale to [0, 1].

    Percentiles interpolate linearly between order statistics.  Constant
    input (max equals min after clipping) maps to all zeros.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise EmptyInput("winsorize_minmax needs at least one value")
    if not (0.0 <= p_lo < p_hi <= 100.0):
        raise EmptyInput(f"percentiles must satisfy 0 <= lo < hi <= 100, got ({p_lo}, {p_hi})")
    lo = np.percentile(arr, p_lo)
    hi = np.percentile(arr, p_hi)
    clipped = np.clip(arr, lo, hi)
    span = clipped.max() - clipped.min()
    if span == 0.0:
        log.debug("degenerate min-max scaling: constant input mapped to zeros")
        return np.zeros_like(clipped)
    return (clipped - clipped.min()) / span


def hierarchical_cluster(
    values: Sequence[tuple[Hashable, float]], n_clusters: int
) -> dict[Hashable, int]:
    """Agglomerative Ward clustering of scalar values, cut at ``n_clusters``.

    Returns a map from id to cluster index, with indices ordered by
    ascending cluster mean.  Ties in the merge criterion are broken toward
    the pair with the smallest member positions, so the result is a pure
    function of the input sequence.
    """
    n = len(values)
    if n_clusters < 1 or n_clusters > n:
        raise TooFewPoints(f"need 1 <= n_clusters <= {n}, got {n_clusters}")

    # each cluster: (sum, count, smallest input position, member positions)
    sums = [float(v) for _, v in values]
    counts = [1] * n
    anchor = list(range(n))
    members: list[list[int]] = [[i] for i in range(n)]
    active = list(range(n))

    while len(active) > n_clusters:
        best = None
        for ai in range(len(active)):
            i = active[ai]
            mi = sums[i] / counts[i]
            for aj in range(ai + 1, len(active)):
                j = active[aj]
                mj = sums[j] / counts[j]
                # Ward increase in within-cluster sum of squares
                delta = counts[i] * counts[j] / (counts[i] + counts[j]) * (mi - mj) ** 2
                lo_anchor, hi_anchor = sorted((anchor[i], anchor[j]))
                cand = (delta, lo_anchor, hi_anchor, i, j)
                if best is None or cand[:3] < best[:3]:
                    best = cand
        _, _, _, i, j = best
        sums[i] += sums[j]
        counts[i] += counts[j]
        anchor[i] = min(anchor[i], anchor[j])
        members[i].extend(members[j])
        active.remove(j)

    # order clusters by ascending mean (then anchor, for exact ties)
    ordered = sorted(active, key=lambda i: (sums[i] / counts[i], anchor[i]))
    label: dict[Hashable, int] = {}
    for rank, i in enumerate(ordered):
        for pos in members[i]:
            label[values[pos][0]] = rank
    return label


def _effective_clusters(point_values: Iterable[float], requested: int) -> int:
    distinct = len(set(point_values))
    if distinct < requested:
        log.info("reducing cluster count from %d to %d distinct values", requested, distinct)
    return min(requested, distinct)


def assign_vulnerability_tiers(
    climate: Sequence[CountryClimate],
) -> dict[str, VulnerabilityTier]:
    """Three-way cut of country scores; the two upper clusters merge."""
    if len(climate) < 3:
        raise TooFewPoints(f"need at least 3 countries, got {len(climate)}")
    pairs = [(c.country, c.vulnerability) for c in climate]
    n_eff = _effective_clusters((v for _, v in pairs), 3)
    labels = hierarchical_cluster(pairs, n_eff)
    return {
        country: VulnerabilityTier.LOW if labels[country] == 0 else VulnerabilityTier.MID_HIGH
        for country, _ in pairs
    }


def sector_intensity(
    firms: Sequence[FirmRecord], p_lo: float = 1.0, p_hi: float = 99.0
) -> dict[str, float]:
    """Scaled sector-level asset intensity in [0, 1].

    Per-firm intensity is PPE over revenue; sector value is the mean over
    member firms; sectors are then winsorized and min-max scaled jointly.
    """
    by_sector: dict[str, list[float]] = {}
    for firm in firms:
        if firm.revenue is None or firm.revenue <= 0:
            raise ZeroRevenue(f"firm {firm.firm_id} has nonpositive revenue")
        ppe = firm.ppe if firm.ppe is not None else 0.0
        by_sector.setdefault(firm.nace, []).append(ppe / firm.revenue)
    sectors = sorted(by_sector)
    raw = [sum(by_sector[s]) / len(by_sector[s]) for s in sectors]
    scaled = winsorize_minmax(raw, p_lo, p_hi)
    return dict(zip(sectors, scaled.tolist()))


def assign_intensity_tiers(sector_values: Mapping[str, float]) -> dict[str, IntensityTier]:
    """Four intensity tiers over sector values, ordered Low to Extreme."""
    if len(sector_values) < 4:
        raise TooFewPoints(f"need at least 4 sectors, got {len(sector_values)}")
    pairs = sorted(sector_values.items())
    n_eff = _effective_clusters((v for _, v in pairs), 4)
    labels = hierarchical_cluster(pairs, n_eff)
    return {sector: INTENSITY_ORDER[labels[sector]] for sector, _ in pairs}


def assign_cluster_keys(
    firms: Sequence[FirmRecord],
    vulnerability_tiers: Mapping[str, VulnerabilityTier],
    intensity_tiers: Mapping[str, IntensityTier],
) -> dict[str, ClusterKey]:
    """Total assignment of kept firms to the 2 x 4 cluster grid."""
    out: dict[str, ClusterKey] = {}
    for firm in firms:
        out[firm.firm_id] = ClusterKey(
            vulnerability_tiers[firm.country], intensity_tiers[firm.nace]
        )
    return out


def cluster_stats(
    firms: Sequence[FirmRecord],
    climate: Sequence[CountryClimate],
    sector_scaled: Mapping[str, float],
    keys: Mapping[str, ClusterKey],
) -> list[ClusterStats]:
    """Company-level moments per cluster, plus sector-level intensity moments."""
    score = {c.country: c.vulnerability for c in climate}
    vuln: dict[ClusterKey, list[float]] = {k: [] for k in ALL_CLUSTER_KEYS}
    inten: dict[ClusterKey, list[float]] = {k: [] for k in ALL_CLUSTER_KEYS}
    sector_of: dict[ClusterKey, set[str]] = {k: set() for k in ALL_CLUSTER_KEYS}
    for firm in firms:
        key = keys[firm.firm_id]
        vuln[key].append(score[firm.country])
        inten[key].append(sector_scaled[firm.nace])
        sector_of[key].add(firm.nace)

    def moments(xs: list[float]) -> tuple[float, float]:
        if not xs:
            return math.nan, math.nan
        arr = np.asarray(xs)
        return float(arr.mean()), float(arr.std())

    out = []
    for key in ALL_CLUSTER_KEYS:
        mv, sv = moments(vuln[key])
        mi, si = moments(inten[key])
        ms, ss = moments([sector_scaled[s] for s in sorted(sector_of[key])])
        out.append(
            ClusterStats(
                key=key,
                firm_count=len(vuln[key]),
                mean_vulnerability=mv,
                sd_vulnerability=sv,
                mean_intensity=mi,
                sd_intensity=si,
                sector_mean_intensity=ms,
                sector_sd_intensity=ss,
            )
        )
    return out
