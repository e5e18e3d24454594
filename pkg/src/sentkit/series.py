"""Monthly time-series primitives.

Containers for contiguous monthly data plus the shock-construction chain:
AR(1) estimation on a (demeaned) sentiment index, residual standardization
to unit-variance shocks, forward cumulative returns, and sign splitting.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSeries,
    HorizonTooLong,
    NonMonotoneDates,
    SchemaViolation,
    SeriesTooShort,
)

# ---------------------------------------------------------------------------
# month arithmetic
# ---------------------------------------------------------------------------

def month_code(label: str) -> int:
    """Convert an ISO month label 'YYYY-MM' to an integer month count."""
    try:
        year_s, month_s = label.strip().split("-")
        year, month = int(year_s), int(month_s)
    except (ValueError, AttributeError) as exc:
        raise SchemaViolation(f"bad month label {label!r}, expected YYYY-MM") from exc
    if not 1 <= month <= 12:
        raise SchemaViolation(f"bad month label {label!r}: month {month} out of range")
    return year * 12 + (month - 1)


def month_label(code: int) -> str:
    """Inverse of :func:`month_code`."""
    return f"{code // 12:04d}-{code % 12 + 1:02d}"


def _freeze(values) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonthlySeries:
    """A contiguous monthly series: first month label plus a value vector.

    Values are per-context (decimal monthly returns or raw index levels) and
    are frozen after construction so instances can be shared across workers.
    """

    start_month: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values))
        month_code(self.start_month)  # validates the label
        if self.values.ndim != 1 or len(self.values) < 1:
            raise SchemaViolation("series must be a nonempty 1-D vector")
        if not np.all(np.isfinite(self.values)):
            raise SchemaViolation("series contains non-finite values")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def start_code(self) -> int:
        return month_code(self.start_month)

    def month_codes(self) -> np.ndarray:
        return self.start_code + np.arange(len(self.values))

    def months(self) -> list[str]:
        return [month_label(c) for c in self.month_codes()]


@dataclass(frozen=True)
class ShockSeries:
    """Standardized innovations on a monthly index (unitless, 1 s.d. scale).

    Series produced by :func:`standardize_shocks` or the simulators have
    sample variance 1 (ddof=1) to 1e-12. The container itself does not
    reject other scales so that toy inputs and sign-split parts remain
    representable; ``sample_variance`` exposes the check.
    """

    start_month: str
    eps: np.ndarray
    flipped: bool = False

    def __post_init__(self):
        object.__setattr__(self, "eps", _freeze(self.eps))
        month_code(self.start_month)
        if self.eps.ndim != 1 or len(self.eps) < 1:
            raise SchemaViolation("shock series must be a nonempty 1-D vector")
        if not np.all(np.isfinite(self.eps)):
            raise SchemaViolation("shock series contains non-finite values")

    def __len__(self) -> int:
        return len(self.eps)

    @property
    def start_code(self) -> int:
        return month_code(self.start_month)

    def month_codes(self) -> np.ndarray:
        return self.start_code + np.arange(len(self.eps))

    def months(self) -> list[str]:
        return [month_label(c) for c in self.month_codes()]

    @property
    def sample_variance(self) -> float:
        return float(np.var(self.eps, ddof=1)) if len(self.eps) > 1 else float("nan")


@dataclass(frozen=True)
class Ar1Fit:
    """Result of fitting S_t = alpha + phi * S_{t-1} + u_t by OLS.

    Standard errors are Bartlett-kernel HAC at ``hac_lag``. ``sigma_u`` is
    the residual standard deviation with denominator (n-1), matching the
    scale used by :func:`standardize_shocks`.
    """

    alpha: float
    phi: float
    sigma_u: float
    se_alpha: float
    se_phi: float
    se_sigma: float
    residuals: MonthlySeries
    nobs: int
    hac_lag: int
    mean_removed: float = 0.0
    flags: tuple[str, ...] = field(default=())


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def estimate_ar1(series: MonthlySeries, hac_lag: int = 12, demean: bool = True) -> Ar1Fit:
    """Fit a first-order autoregression to a monthly index.

    The series is demeaned first (the intercept is still estimated and
    reported); residuals are stored starting one month after the input
    start. HAC standard errors use a Bartlett kernel with ``hac_lag``.

    Raises
    ------
    SeriesTooShort
        Fewer than 24 observations.
    DegenerateSeries
        Zero-variance input.
    """
    from .regression import hac_long_run_variance, ols_hac

    values = np.asarray(series.values, dtype=float)
    if len(values) < 24:
        raise SeriesTooShort(f"AR(1) estimation needs >= 24 observations, got {len(values)}")
    if np.var(values) == 0.0:
        raise DegenerateSeries("AR(1) estimation on a constant series")

    mean_removed = float(np.mean(values)) if demean else 0.0
    s = values - mean_removed

    y = s[1:]
    x = s[:-1]
    X = np.column_stack([np.ones_like(x), x])
    res = ols_hac(y, X, lag=hac_lag)
    alpha, phi = (float(b) for b in res.coefficients)
    u = y - X @ res.coefficients

    n = len(u)
    sigma_u = float(np.std(u, ddof=1))
    if sigma_u == 0.0:
        se_sigma = 0.0
    else:
        # delta method: Var(sigma^2) from the HAC long-run variance of u^2
        g = u * u - np.mean(u * u)
        var_sigma2 = hac_long_run_variance(g, lag=hac_lag) / n
        se_sigma = float(np.sqrt(max(var_sigma2, 0.0)) / (2.0 * sigma_u))

    residuals = MonthlySeries(month_label(series.start_code + 1), u)
    return Ar1Fit(
        alpha=alpha,
        phi=phi,
        sigma_u=sigma_u,
        se_alpha=float(np.sqrt(res.covariance[0, 0])),
        se_phi=float(np.sqrt(res.covariance[1, 1])),
        se_sigma=se_sigma,
        residuals=residuals,
        nobs=n,
        hac_lag=hac_lag,
        mean_removed=mean_removed,
    )


def standardize_shocks(fit: Ar1Fit, flip: bool = False) -> ShockSeries:
    """Divide AR(1) residuals by their sample s.d. (denominator n-1).

    ``flip`` reverses the sign of the whole series and sets the ``flipped``
    flag; sign alignment is a caller decision, never auto-detected.
    """
    u = np.asarray(fit.residuals.values, dtype=float)
    sd = np.std(u, ddof=1)
    if sd == 0.0 or not np.isfinite(sd):
        raise DegenerateSeries("cannot standardize zero-variance residuals")
    eps = u / sd
    if flip:
        eps = -eps
    return ShockSeries(fit.residuals.start_month, eps, flipped=flip)


def cumulative_returns(returns: MonthlySeries, h: int) -> MonthlySeries:
    """Forward h-month cumulative return: value at t sums r_{t+1}..r_{t+h}.

    Output has length T-h and keeps the input start month (the value stored
    at month t is the sum of the h returns strictly after t).
    """
    if h < 1:
        raise HorizonTooLong(f"horizon must be >= 1, got {h}")
    v = np.asarray(returns.values, dtype=float)
    if len(v) <= h:
        raise HorizonTooLong(f"horizon {h} too long for series of length {len(v)}")
    windows = np.lib.stride_tricks.sliding_window_view(v[1:], h)
    out = windows.sum(axis=1)
    return MonthlySeries(returns.start_month, out)


def split_sign(shocks: ShockSeries) -> tuple[MonthlySeries, MonthlySeries]:
    """Pointwise positive/negative parts; the two parts sum back exactly."""
    eps = np.asarray(shocks.eps, dtype=float)
    pos = np.maximum(eps, 0.0)
    neg = np.minimum(eps, 0.0)
    return (
        MonthlySeries(shocks.start_month, pos),
        MonthlySeries(shocks.start_month, neg),
    )


# ---------------------------------------------------------------------------
# CSV round-trip (two columns: month,value)
# ---------------------------------------------------------------------------

def read_series_csv(path) -> MonthlySeries:
    """Read a `month,value` CSV with ISO months into a MonthlySeries.

    Enforces the container invariants at the boundary: months must be
    strictly increasing and contiguous (no gaps, no duplicates).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0].strip().lower() != "month":
            raise SchemaViolation(f"{path}: expected header 'month,<value>', got {header!r}")
        labels: list[str] = []
        vals: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise SchemaViolation(f"{path}:{lineno}: expected two columns")
            labels.append(row[0])
            try:
                vals.append(float(row[1]))
            except ValueError as exc:
                raise SchemaViolation(f"{path}:{lineno}: bad value {row[1]!r}") from exc
    if not labels:
        raise SchemaViolation(f"{path}: empty series")
    codes = [month_code(lab) for lab in labels]
    for i in range(1, len(codes)):
        if codes[i] <= codes[i - 1]:
            raise NonMonotoneDates(f"{path}: months not strictly increasing at row {i + 2}")
        if codes[i] != codes[i - 1] + 1:
            raise SchemaViolation(
                f"{path}: gap in monthly index between {labels[i - 1]} and {labels[i]}"
            )
    return MonthlySeries(labels[0], np.array(vals))


def write_series_csv(series, path, value_name: str = "value") -> None:
    values = series.eps if isinstance(series, ShockSeries) else series.values
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["month", value_name])
        for lab, v in zip(series.months(), values):
            writer.writerow([lab, repr(float(v))])
