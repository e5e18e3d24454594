import numpy as np
import pandas as pd
import pytest

from sentkit import MonthlySeries, month_label

# one line per acceptance criterion, echoed after the run so the verdicts
# survive pytest's output capture
acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.line(line)


def make_panel(n_firms=20, n_months=36, seed=0, start_code=24180, missing=0.0,
               extra_cols=None):
    """Random balanced firm-month panel, optionally with rows knocked out."""
    rng = np.random.default_rng(seed)
    firms = [f"F{i:03d}" for i in range(n_firms)]
    rows = []
    for f, firm in enumerate(firms):
        for m in range(n_months):
            rows.append({
                "firm_id": firm,
                "month": month_label(start_code + m),
                "ret": rng.normal(0.005, 0.04),
            })
    df = pd.DataFrame(rows)
    if extra_cols:
        for name, fn in extra_cols.items():
            df[name] = fn(rng, len(df))
    if missing > 0:
        keep = rng.random(len(df)) > missing
        df = df[keep].reset_index(drop=True)
    return df


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def short_series():
    return MonthlySeries("2010-01", np.array([0.01, -0.02, 0.015, 0.0, 0.005]))
