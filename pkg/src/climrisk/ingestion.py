"""Loading, validation, and staged filtering of firm and country inputs.

All interchange is CSV with a mandatory header row, UTF-8, "." decimal
separator.  Monetary inputs are assumed pre-converted to USD.  Empty cells
are missing values; malformed numerics are a hard parse error naming the row.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .errors import (
    DuplicateCountry,
    DuplicateFirmId,
    MissingColumn,
    NumericParse,
    OutOfRangeScore,
    WeightMismatch,
)

FIRM_COLUMNS = [
    "firm_id",
    "country",
    "nace",
    "equity_value",
    "equity_vol",
    "total_debt",
    "debt_maturity",
    "risk_free",
    "ppe",
    "revenue",
    "capm_beta",
    "index_id",
    "index_weight",
]

EBITDA_COLUMNS = ["firm_id", "year", "ebitda"]
VULNERABILITY_COLUMNS = ["country", "vulnerability"]


class Stage(str, Enum):
    CLIMATE_CLUSTERING = "climate_clustering"
    SHOCK_COMPUTATION = "shock_computation"
    FVM_ESTIMATION = "fvm_estimation"


@dataclass(frozen=True)
class FirmRecord:
    """One firm's market, balance-sheet, and classification data."""

    firm_id: str
    country: str
    nace: str
    equity_value: float | None
    equity_vol: float | None
    total_debt: float | None
    debt_maturity: float | None
    risk_free: float | None
    ppe: float | None
    revenue: float | None
    capm_beta: float | None
    ebitda_series: tuple[tuple[int, float], ...] = ()
    index_memberships: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class CountryClimate:
    country: str
    vulnerability: float


@dataclass(frozen=True)
class ExclusionRecord:
    stage: Stage
    firm_id: str
    reason: str


def _parse_float(raw: str, row: int, column: str) -> float | None:
    raw = raw.strip() if raw is not None else ""
    if raw == "":
        return None
    try:
        value = float(raw)
    except ValueError:
        raise NumericParse(f"row {row}: column '{column}' is not numeric: {raw!r}") from None
    if not math.isfinite(value):
        raise NumericParse(f"row {row}: column '{column}' is not finite: {raw!r}")
    return value


def _reader(path: Path, required: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise MissingColumn(f"{path}: missing columns {missing}")
        yield from enumerate(reader, start=2)  # data starts on file line 2


def load_ebitda(path: str | Path) -> dict[str, tuple[tuple[int, float], ...]]:
    """Long-format EBITDA history: firm_id, year, ebitda."""
    series: dict[str, dict[int, float]] = {}
    for row_no, row in _reader(Path(path), EBITDA_COLUMNS):
        firm_id = row["firm_id"].strip()
        year_raw = _parse_float(row["year"], row_no, "year")
        value = _parse_float(row["ebitda"], row_no, "ebitda")
        if year_raw is None or value is None:
            raise NumericParse(f"row {row_no}: year and ebitda are required")
        year = int(year_raw)
        if year != year_raw:
            raise NumericParse(f"row {row_no}: year must be an integer, got {year_raw}")
        per_firm = series.setdefault(firm_id, {})
        if year in per_firm:
            raise DuplicateFirmId(f"row {row_no}: duplicate EBITDA year {year} for firm {firm_id}")
        per_firm[year] = value
    return {
        firm: tuple(sorted(years.items())) for firm, years in series.items()
    }


def load_firms(path: str | Path, ebitda_path: str | Path | None = None) -> list[FirmRecord]:
    """Parse firms.csv (one row per index membership) into FirmRecord values.

    Firm-level fields must agree across a firm's membership rows; duplicate
    (firm, index) memberships are an error, not a merge.
    """
    ebitda = load_ebitda(ebitda_path) if ebitda_path is not None else {}

    firm_fields: dict[str, dict] = {}
    memberships: dict[str, list[tuple[str, float]]] = {}
    order: list[str] = []
    for row_no, row in _reader(Path(path), FIRM_COLUMNS):
        firm_id = row["firm_id"].strip()
        if not firm_id:
            raise NumericParse(f"row {row_no}: empty firm_id")
        fields = {
            "country": row["country"].strip(),
            "nace": row["nace"].strip(),
        }
        for col in (
            "equity_value",
            "equity_vol",
            "total_debt",
            "debt_maturity",
            "risk_free",
            "ppe",
            "revenue",
            "capm_beta",
        ):
            fields[col] = _parse_float(row[col], row_no, col)

        if firm_id not in firm_fields:
            firm_fields[firm_id] = fields
            memberships[firm_id] = []
            order.append(firm_id)
        elif firm_fields[firm_id] != fields:
            raise DuplicateFirmId(
                f"row {row_no}: firm {firm_id} repeats with conflicting attributes"
            )

        index_id = row["index_id"].strip()
        if index_id:
            weight = _parse_float(row["index_weight"], row_no, "index_weight")
            if weight is None or not (0.0 <= weight <= 1.0):
                raise NumericParse(
                    f"row {row_no}: index_weight must be in [0, 1], got {row['index_weight']!r}"
                )
            if any(idx == index_id for idx, _ in memberships[firm_id]):
                raise DuplicateFirmId(
                    f"row {row_no}: duplicate membership ({firm_id}, {index_id})"
                )
            memberships[firm_id].append((index_id, weight))

    return [
        FirmRecord(
            firm_id=firm_id,
            ebitda_series=ebitda.get(firm_id, ()),
            index_memberships=tuple(memberships[firm_id]),
            **firm_fields[firm_id],
        )
        for firm_id in order
    ]


def load_vulnerability(path: str | Path) -> list[CountryClimate]:
    """country, vulnerability in [0, 1]; one row per country."""
    seen: dict[str, float] = {}
    out: list[CountryClimate] = []
    for row_no, row in _reader(Path(path), VULNERABILITY_COLUMNS):
        country = row["country"].strip()
        score = _parse_float(row["vulnerability"], row_no, "vulnerability")
        if score is None:
            raise NumericParse(f"row {row_no}: vulnerability is required")
        if not (0.0 <= score <= 1.0):
            raise OutOfRangeScore(
                f"row {row_no}: vulnerability {score} outside [0, 1] for {country}"
            )
        if country in seen:
            raise DuplicateCountry(f"row {row_no}: duplicate country {country}")
        seen[country] = score
        out.append(CountryClimate(country, score))
    return out


def vulnerability_summary(entries: list[CountryClimate]) -> tuple[float, float]:
    """(mean, sample standard deviation) of per-country scores."""
    n = len(entries)
    mean = sum(e.vulnerability for e in entries) / n
    if n < 2:
        return mean, 0.0
    var = sum((e.vulnerability - mean) ** 2 for e in entries) / (n - 1)
    return mean, math.sqrt(var)


def _impute_risk_free(firms: list[FirmRecord]) -> list[FirmRecord]:
    """Fill missing rates with the mean rate of same-index firms."""
    index_rates: dict[str, list[float]] = {}
    for firm in firms:
        if firm.risk_free is None:
            continue
        for index_id, _ in firm.index_memberships:
            index_rates.setdefault(index_id, []).append(firm.risk_free)
    index_mean = {idx: sum(v) / len(v) for idx, v in index_rates.items()}

    out = []
    for firm in firms:
        if firm.risk_free is not None:
            out.append(firm)
            continue
        candidates = [
            index_mean[idx] for idx, _ in firm.index_memberships if idx in index_mean
        ]
        if candidates:
            out.append(replace(firm, risk_free=sum(candidates) / len(candidates)))
        else:
            out.append(firm)  # stays missing; excluded at the FVM stage
    return out


def filter_pipeline(
    firms: list[FirmRecord], climate: list[CountryClimate]
) -> tuple[list[FirmRecord], list[ExclusionRecord]]:
    """Three sequential exclusion stages; never fails, only records.

    Stage 1 drops firms lacking country vulnerability or asset-intensity
    inputs, stage 2 those lacking EBITDA history or beta for the shock
    computation, stage 3 those lacking the equity/debt block for FVM
    estimation (after same-index risk-free imputation).
    """
    countries = {c.country for c in climate}
    ledger: list[ExclusionRecord] = []

    def drop(stage: Stage, firm: FirmRecord, reason: str) -> None:
        ledger.append(ExclusionRecord(stage, firm.firm_id, reason))

    stage1: list[FirmRecord] = []
    for firm in firms:
        if firm.country not in countries:
            drop(Stage.CLIMATE_CLUSTERING, firm, "no vulnerability score for country")
        elif not firm.nace:
            drop(Stage.CLIMATE_CLUSTERING, firm, "missing NACE sector")
        elif firm.ppe is None or firm.ppe < 0:
            drop(Stage.CLIMATE_CLUSTERING, firm, "missing or negative PPE")
        elif firm.revenue is None or firm.revenue <= 0:
            drop(Stage.CLIMATE_CLUSTERING, firm, "missing or nonpositive revenue")
        else:
            stage1.append(firm)

    stage2: list[FirmRecord] = []
    for firm in stage1:
        distinct_years = {year for year, _ in firm.ebitda_series}
        if len(distinct_years) < 2:
            drop(Stage.SHOCK_COMPUTATION, firm, "EBITDA history shorter than 2 years")
        elif firm.capm_beta is None:
            drop(Stage.SHOCK_COMPUTATION, firm, "missing CAPM beta")
        else:
            stage2.append(firm)

    stage3: list[FirmRecord] = []
    for firm in _impute_risk_free(stage2):
        if firm.equity_value is None or firm.equity_value <= 0:
            drop(Stage.FVM_ESTIMATION, firm, "missing or nonpositive equity value")
        elif firm.equity_vol is None or firm.equity_vol <= 0:
            drop(Stage.FVM_ESTIMATION, firm, "missing or nonpositive equity vol")
        elif firm.total_debt is None or firm.total_debt < 0:
            drop(Stage.FVM_ESTIMATION, firm, "missing or negative total debt")
        elif firm.debt_maturity is None or firm.debt_maturity <= 0:
            drop(Stage.FVM_ESTIMATION, firm, "missing or nonpositive debt maturity")
        elif firm.risk_free is None:
            drop(Stage.FVM_ESTIMATION, firm, "missing risk-free rate (no same-index rates)")
        else:
            stage3.append(firm)

    return stage3, ledger


def renormalize_index_weights(firms: list[FirmRecord]) -> dict[str, dict[str, float]]:
    """Per-index weights over the given firms, rescaled to sum to one."""
    raw: dict[str, dict[str, float]] = {}
    for firm in firms:
        for index_id, weight in firm.index_memberships:
            raw.setdefault(index_id, {})[firm.firm_id] = weight
    out: dict[str, dict[str, float]] = {}
    for index_id, weights in raw.items():
        total = sum(weights.values())
        if total <= 0:
            raise WeightMismatch(f"index {index_id}: member weights sum to {total}")
        out[index_id] = {fid: w / total for fid, w in weights.items()}
    return out
