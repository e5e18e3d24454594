"""Ingestion: CSV files to validated in-memory tables.

Series files use the two-column `month,<name>` layout. Panel files need
firm_id, month, ret plus any extra columns; (firm, month) pairs must be
unique and rets finite. Unit conversion (bps to decimal) and quarterly
forward-carry happen here, exactly once, so downstream code always sees
monthly decimals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .config import RunConfig
from .errors import MissingColumn, SchemaViolation
from .panel import FirmMonthPanel, validate_panel
from .series import MonthlySeries, month_code, read_series_csv


@dataclass
class Dataset:
    """Everything a pipeline run can start from."""

    sentiment: MonthlySeries | None = None
    market: MonthlySeries | None = None
    panel: FirmMonthPanel | None = None
    notes: list[str] = field(default_factory=list)


def read_panel_csv(path: str | Path, ret_units: str = "decimal",
                   quarterly_carry: tuple[str, ...] = ()) -> FirmMonthPanel:
    """Load and validate a firm-month panel CSV.

    Returns in bps are divided by 1e4. Columns named in quarterly_carry are
    treated as quarterly observations: within each (firm, calendar quarter)
    the single observed value is carried to all three months.
    """
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise SchemaViolation(f"{path}: {exc}") from exc
    for col in ("firm_id", "month", "ret"):
        if col not in df.columns:
            raise MissingColumn(f"{path}: panel needs a {col!r} column")

    bad = df["ret"].isna() | ~np.isfinite(df["ret"].to_numpy(dtype=float))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0]) + 2  # 1-based + header
        raise SchemaViolation(f"{path}: non-finite ret at row {row}")
    if ret_units == "bps":
        df["ret"] = df["ret"].astype(float) / 1e4

    df = df.copy()
    df["month_code"] = df["month"].map(month_code)

    for col in quarterly_carry:
        if col not in df.columns:
            raise MissingColumn(f"{path}: quarterly column {col!r} not present")
        df["_q"] = df["month_code"] // 3
        filled = df.groupby(["firm_id", "_q"])[col].transform(
            lambda s: s.ffill().bfill())
        df[col] = filled
        df = df.drop(columns="_q")

    df = df.drop(columns="month_code")
    return FirmMonthPanel.from_frame(df)


def ingest(config: RunConfig) -> Dataset:
    """Load every input file named in the config into typed tables."""
    ds = Dataset()
    sent_path = config.input_path("sentiment")
    if sent_path is not None:
        ds.sentiment = read_series_csv(sent_path)
        ds.notes.append(f"sentiment: {len(ds.sentiment.values)} months from {sent_path.name}")
    market_path = config.input_path("market")
    if market_path is not None:
        ds.market = read_series_csv(market_path)
        if config.inputs.get("ret_units", "decimal") == "bps":
            ds.market = MonthlySeries(ds.market.start_month,
                                      np.asarray(ds.market.values) / 1e4)
        ds.notes.append(f"market: {len(ds.market.values)} months from {market_path.name}")
    panel_path = config.input_path("panel")
    if panel_path is not None:
        carry = tuple(config.inputs.get("quarterly_carry", ()))
        ds.panel = read_panel_csv(panel_path,
                                  ret_units=config.inputs.get("ret_units", "decimal"),
                                  quarterly_carry=carry)
        ds.notes.append(f"panel: {len(ds.panel.df)} rows from {panel_path.name}")
    return ds
