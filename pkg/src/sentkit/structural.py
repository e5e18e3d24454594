"""Structural models of sentiment-driven return dynamics.

Four pieces live here:

* the geometric feedback recursion ``r_{t+1} = rho * r_t + kappa * eps`` with
  its closed-form impulse responses and half-life,
* the piecewise price-impact map that kinks upward once a short-sale cap
  binds,
* a two-population mean-variance market-clearing solver with corner regimes
  (institutional short-sale limit, retail nonnegativity, funding cap),
* state-dependent coefficient functions kappa(V), rho(V) in affine or
  logistic form, with an affine calibrator and a random-coefficient
  simulator.

Units: ``kappa`` is stored in basis points per one-standard-deviation shock
everywhere; simulators convert to decimal returns internally (x 1e-4).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from .errors import (
    DegenerateStates,
    Infeasible,
    InvalidRho,
    MissingVariance,
    NoFiniteThreshold,
    NonstationaryRho,
    SchemaViolation,
    SeriesTooShort,
)
from .series import MonthlySeries, ShockSeries, month_label

RHO_INFINITY_CUTOFF = 1.0 - 1e-9  # at or above this, decay is treated as none

IRF_CONVENTIONS = ("level-h", "level-h-minus-1", "cumulative")


# ---------------------------------------------------------------------------
# geometric feedback
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeedbackParams:
    """Impact (bps per 1 s.d. shock) and persistence of the feedback loop."""

    kappa: float
    rho: float

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and np.isfinite(self.rho)):
            raise SchemaViolation("feedback parameters must be finite")


def half_life(rho: float) -> float:
    """Months until the impulse response decays to half its impact.

    Closed form ln(0.5)/ln(rho); returns +inf once rho is within 1e-9 of 1
    (no meaningful decay).

    Raises
    ------
    InvalidRho
        For rho <= 0, where geometric decay is undefined.
    """
    if rho <= 0:
        raise InvalidRho(f"half-life undefined for rho={rho} <= 0")
    if rho >= RHO_INFINITY_CUTOFF:
        return math.inf
    return math.log(0.5) / math.log(rho)


def theoretical_irf(params: FeedbackParams, horizons, convention: str = "level-h") -> np.ndarray:
    """Closed-form impulse responses of the geometric feedback model.

    Conventions
    -----------
    ``level-h``            kappa * rho^h, valid for h >= 0 (h months after
                           the impact month).
    ``level-h-minus-1``    kappa * rho^(h-1), valid for h >= 1 (h months
                           after the shock observation; impact at h=1). This
                           is the shape local projections estimate under the
                           observed-at-t / acts-from-t+1 timing.
    ``cumulative``         kappa * (1 - rho^h)/(1 - rho), valid for h >= 1.
    """
    if convention not in IRF_CONVENTIONS:
        raise SchemaViolation(f"unknown IRF convention {convention!r}")
    h = np.asarray(horizons, dtype=float)
    min_h = 0 if convention == "level-h" else 1
    if np.any(h < min_h):
        raise SchemaViolation(f"horizons must be >= {min_h} for convention {convention!r}")
    k, r = params.kappa, params.rho
    if convention == "level-h":
        return k * r ** h
    if convention == "level-h-minus-1":
        return k * r ** (h - 1)
    if r == 1.0:
        return k * h
    return k * (1.0 - r ** h) / (1.0 - r)


def _standardized_normals(rng: np.random.Generator, n: int) -> np.ndarray:
    """Standard normal draws rescaled to exact unit sample variance (ddof=1)."""
    e = rng.standard_normal(n)
    if n >= 2:
        sd = np.std(e, ddof=1)
        if sd > 0:
            e = e / sd
    return e


def simulate_feedback(
    params: FeedbackParams,
    T: int,
    seed,
    start_month: str = "2000-01",
    burn_in: int = 0,
    return_shocks: bool = False,
):
    """Simulate the feedback recursion r_{t+1} = rho r_t + (kappa/1e4) s_t.

    The innovation labeled month t is the one that first moves the month
    t+1 return (shock observed at t, acts from t+1), so a level local
    projection of r_{t+h} on s_t recovers kappa * rho^(h-1). Returns are
    decimal per month; r_0 = 0 unless ``burn_in`` > 0, in which case the
    recursion is warmed up for that many months first.

    With ``return_shocks=True`` returns ``(returns, shocks)`` where the
    shock series spans the first T-1 months and has unit sample variance
    exactly (draws are rescaled by their sample s.d.).
    """
    if T < 2:
        raise SeriesTooShort(f"simulation needs T >= 2, got {T}")
    if params.rho >= 1.0 or params.rho < 0.0:
        raise NonstationaryRho(f"simulation requires 0 <= rho < 1, got {params.rho}")
    rng = np.random.default_rng(seed)
    kdec = params.kappa * 1e-4

    n_innov = burn_in + T - 1
    e = rng.standard_normal(n_innov)
    exposed = e[burn_in:]
    if len(exposed) >= 2:
        sd = np.std(exposed, ddof=1)
        if sd > 0:
            e = e / sd

    # x[i] = rho * x[i-1] + kdec * e[i] with x[-1] = 0
    x = signal.lfilter([kdec], [1.0, -params.rho], e)
    if burn_in > 0:
        r = np.concatenate([[x[burn_in - 1]], x[burn_in:]])
    else:
        r = np.concatenate([[0.0], x])

    returns = MonthlySeries(start_month, r)
    if not return_shocks:
        return returns
    shocks = ShockSeries(start_month, e[burn_in:])
    return returns, shocks


# ---------------------------------------------------------------------------
# piecewise short-sale-cap model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PiecewiseConfig:
    """Primitives of the capped-arbitrage price-impact map.

    lam: price impact per unit net demand (> 0)
    psi: arbitrageur risk-bearing capacity (>= 0; 0 disables the kink)
    theta: retail demand sensitivity to the shock (> 0)
    s_bar: short-sale cap (>= 0)
    """

    lam: float
    psi: float
    theta: float
    s_bar: float

    def __post_init__(self):
        vals = (self.lam, self.psi, self.theta, self.s_bar)
        if not all(np.isfinite(v) for v in vals):
            raise SchemaViolation("piecewise config must be finite")
        if self.lam <= 0 or self.theta <= 0:
            raise SchemaViolation("lam and theta must be > 0")
        if self.psi < 0 or self.s_bar < 0:
            raise SchemaViolation("psi and s_bar must be >= 0")


def binding_threshold(cfg: PiecewiseConfig) -> float:
    """Shock level above which the short-sale cap binds.

    eps* = (1 + lam * psi) * s_bar / (lam * theta * psi); only defined for
    psi > 0 (with psi = 0 the cap never binds through this mechanism).
    """
    if cfg.psi == 0:
        raise NoFiniteThreshold("psi = 0: the cap never binds via this mechanism")
    return (1.0 + cfg.lam * cfg.psi) * cfg.s_bar / (cfg.lam * cfg.theta * cfg.psi)


def piecewise_impact(eps: float, cfg: PiecewiseConfig) -> tuple[float, str]:
    """Price deviation for a shock, with the regime flag.

    Below the threshold arbitrageurs lean against retail demand and the
    slope is lam*theta/(1+lam*psi); above it their short position is capped
    at s_bar and the slope jumps to lam*theta. The two branches meet at the
    threshold exactly (both equal s_bar/psi).
    """
    if cfg.psi > 0 and eps > binding_threshold(cfg):
        return cfg.lam * (cfg.theta * eps - cfg.s_bar), "constrained"
    return cfg.lam * cfg.theta * eps / (1.0 + cfg.lam * cfg.psi), "unconstrained"


def piecewise_slopes(cfg: PiecewiseConfig) -> tuple[float, float]:
    """(kappa_minus, kappa_plus): impact slopes below and above the kink.

    kappa_minus = lam*theta/(1+lam*psi), kappa_plus = lam*theta; the two
    coincide exactly when psi = 0.
    """
    kp = cfg.lam * cfg.theta
    km = kp / (1.0 + cfg.lam * cfg.psi)
    return km, kp


# ---------------------------------------------------------------------------
# two-population market clearing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MfgConfig:
    """Two-population mean-variance market: retail (R) and institutional (I).

    Demands are x_j = mu_j / (gamma_j * sigma2) with mu_R = f + theta and
    mu_I = f; market clearing is n_R x_R + n_I x_I = supply.
    """

    n_R: float
    n_I: float
    gamma_R: float
    gamma_I: float
    sigma2: float
    x_bar: float | None = None
    supply: float = 1.0

    def __post_init__(self):
        if self.n_R <= 0 or self.n_I <= 0:
            raise SchemaViolation("population masses must be positive")
        if abs(self.n_R + self.n_I - 1.0) > 1e-12:
            raise SchemaViolation("population masses must sum to 1")
        if self.gamma_R <= 0 or self.gamma_I <= 0 or self.sigma2 <= 0:
            raise SchemaViolation("risk aversions and variance must be > 0")
        if self.x_bar is not None and self.x_bar <= 0:
            raise SchemaViolation("funding cap must be > 0 when given")


@dataclass(frozen=True)
class EquilibriumResult:
    """Market-clearing outcome for one sentiment level.

    ``price_deviation`` is the drop in the implied fundamental expected
    return relative to the theta=0 baseline (return units; positive
    sentiment raises the price, i.e. lowers implied f). ``residual`` is the
    clearing error |n_R x_R + n_I x_I - supply|.
    """

    price_deviation: float
    x_R: float
    x_I: float
    regime: str
    implied_f: float
    residual: float


_CLEAR_TOL = 1e-10


def _candidate_regimes(cfg: MfgConfig, theta: float):
    """Yield (regime, f, x_R, x_I, consistent) in resolution order."""
    gRs = cfg.gamma_R * cfg.sigma2
    gIs = cfg.gamma_I * cfg.sigma2
    a_R = cfg.n_R / gRs
    a_I = cfg.n_I / gIs
    cap = cfg.x_bar
    tol = 1e-12

    # interior: both first-order conditions unconstrained
    f = (cfg.supply - theta * a_R) / (a_R + a_I)
    x_R = (f + theta) / gRs
    x_I = f / gIs
    ok = x_I >= -tol and x_R >= -tol and (cap is None or x_I <= cap + tol)
    yield "interior", f, x_R, x_I, ok

    # institutional short-sale corner: x_I = 0, retail alone hold the supply
    x_R = cfg.supply / cfg.n_R
    f = gRs * x_R - theta
    ok = f <= tol and x_R >= -tol
    yield "short-cap-binding", f, x_R, 0.0, ok

    # retail corner: x_R = 0
    x_I = cfg.supply / cfg.n_I
    f = gIs * x_I
    ok = (f + theta) <= tol and (cap is None or x_I <= cap + tol)
    yield "retail-corner", f, 0.0, x_I, ok

    if cap is not None:
        # funding cap: x_I = x_bar
        x_R = (cfg.supply - cfg.n_I * cap) / cfg.n_R
        f = gRs * x_R - theta
        ok = x_R >= -tol and f / gIs >= cap - tol
        yield "funding-cap-binding", f, x_R, cap, ok

        # double corner: x_R = 0 and x_I = x_bar (clears only if supply matches)
        if abs(cfg.n_I * cap - cfg.supply) < _CLEAR_TOL:
            x_I = cap
            f = gIs * x_I  # boundary value consistent with the cap binding
            ok = (f + theta) <= tol
            yield "funding-cap-binding", f, 0.0, x_I, ok


def _solve_clearing(cfg: MfgConfig, theta: float):
    report = []
    for regime, f, x_R, x_I, ok in _candidate_regimes(cfg, theta):
        residual = abs(cfg.n_R * x_R + cfg.n_I * x_I - cfg.supply)
        if ok and residual < _CLEAR_TOL:
            return regime, f, x_R, x_I, residual
        report.append(
            {"regime": regime, "f": f, "x_R": x_R, "x_I": x_I,
             "consistent": ok, "residual": residual}
        )
    raise Infeasible(f"no market-clearing regime for theta={theta}", constraints=report)


def mfg_clearing(cfg: MfgConfig, theta_shock: float) -> EquilibriumResult:
    """Solve for the fundamental return and demands at a sentiment level.

    Tries the interior solution first, then corners in order: institutional
    short-sale (x_I >= 0), retail nonnegativity (x_R >= 0), funding cap
    (x_I <= x_bar); the first regime passing complementary slackness and
    clearing within 1e-10 wins.

    Raises
    ------
    Infeasible
        When no regime clears; the exception carries the per-regime
        constraint report.
    """
    regime, f, x_R, x_I, residual = _solve_clearing(cfg, theta_shock)
    if theta_shock == 0.0:
        f0 = f
    else:
        _, f0, _, _, _ = _solve_clearing(cfg, 0.0)
    return EquilibriumResult(
        price_deviation=f0 - f,
        x_R=x_R,
        x_I=x_I,
        regime=regime,
        implied_f=f,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# state-dependent coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StateParamSpec:
    """Functional forms for kappa(V) and rho(V).

    Affine: kappa(V) = kappa0 + kappa1*V, rho(V) = rho0 + rho1*V.
    Logistic: rho(V) = 1/(1+exp(alpha*(V-m))) (decreasing in V for
    alpha > 0) and kappa(V) = kappa_min + (kappa_max-kappa_min) /
    (1+exp(-beta*(V-m_kappa))). Evaluated rho is always clipped into
    (rho_lo, rho_hi).
    """

    form: str
    kappa0: float = 0.0
    kappa1: float = 0.0
    rho0: float = 0.0
    rho1: float = 0.0
    alpha: float = 0.0
    m: float = 0.0
    kappa_min: float = 0.0
    kappa_max: float = 0.0
    beta: float = 0.0
    m_kappa: float = 0.0
    rho_lo: float = 0.001
    rho_hi: float = 0.999

    def __post_init__(self):
        if self.form not in ("affine", "logistic"):
            raise SchemaViolation(f"unknown state form {self.form!r}")
        if not (0.0 < self.rho_lo < self.rho_hi < 1.0):
            raise SchemaViolation("rho clip bounds must satisfy 0 < lo < hi < 1")

    @classmethod
    def affine(cls, kappa0, kappa1, rho0, rho1, rho_lo=0.001, rho_hi=0.999):
        return cls(form="affine", kappa0=kappa0, kappa1=kappa1, rho0=rho0, rho1=rho1,
                   rho_lo=rho_lo, rho_hi=rho_hi)

    @classmethod
    def logistic(cls, alpha, m, kappa_min, kappa_max, beta, m_kappa,
                 rho_lo=0.001, rho_hi=0.999):
        return cls(form="logistic", alpha=alpha, m=m, kappa_min=kappa_min,
                   kappa_max=kappa_max, beta=beta, m_kappa=m_kappa,
                   rho_lo=rho_lo, rho_hi=rho_hi)

    def kappa_of(self, V):
        V = np.asarray(V, dtype=float)
        if self.form == "affine":
            out = self.kappa0 + self.kappa1 * V
        else:
            out = self.kappa_min + (self.kappa_max - self.kappa_min) / (
                1.0 + np.exp(-self.beta * (V - self.m_kappa))
            )
        return float(out) if out.ndim == 0 else out

    def rho_of(self, V):
        V = np.asarray(V, dtype=float)
        if self.form == "affine":
            raw = self.rho0 + self.rho1 * V
        else:
            raw = 1.0 / (1.0 + np.exp(self.alpha * (V - self.m)))
        out = np.clip(raw, self.rho_lo, self.rho_hi)
        return float(out) if out.ndim == 0 else out


def state_params(V: float, spec: StateParamSpec) -> FeedbackParams:
    """Evaluate the coefficient functions at one volatility level."""
    return FeedbackParams(kappa=spec.kappa_of(V), rho=spec.rho_of(V))


def calibrate_affine(kappa_L, kappa_H, rho_L, rho_H, V_L, V_H,
                     rho_lo: float = 0.001, rho_hi: float = 0.999) -> StateParamSpec:
    """Affine spec hitting (kappa_L, rho_L) at V_L and (kappa_H, rho_H) at V_H.

    kappa1 = (kappa_L - kappa_H)/(V_L - V_H) and
    kappa0 = (kappa_H*V_L - kappa_L*V_H)/(V_L - V_H); same for rho.
    """
    if V_L == V_H:
        raise DegenerateStates("cannot calibrate with V_L == V_H")
    dv = V_L - V_H
    kappa1 = (kappa_L - kappa_H) / dv
    kappa0 = (kappa_H * V_L - kappa_L * V_H) / dv
    rho1 = (rho_L - rho_H) / dv
    rho0 = (rho_H * V_L - rho_L * V_H) / dv
    return StateParamSpec.affine(kappa0, kappa1, rho0, rho1, rho_lo=rho_lo, rho_hi=rho_hi)


@dataclass(frozen=True)
class StateSimResult:
    """Random-coefficient simulation output with the per-period audit trail.

    ``kappa_path[t]`` and ``rho_path[t]`` are the coefficients applied at
    the step that produced ``returns.values[t+1]`` (evaluated at V_t).
    """

    returns: MonthlySeries
    shocks: ShockSeries
    kappa_path: np.ndarray
    rho_path: np.ndarray


def simulate_state_dependent(V: MonthlySeries, spec: StateParamSpec, seed) -> StateSimResult:
    """Simulate r_{t+1} = rho(V_t) r_t + (kappa(V_t)/1e4) s_t.

    Timing matches :func:`simulate_feedback`: the shock labeled month t
    first moves the month t+1 return, and both coefficient functions are
    evaluated at V_t. Innovations are rescaled to unit sample variance.
    """
    T = len(V)
    if T < 2:
        raise SeriesTooShort(f"simulation needs T >= 2, got {T}")
    rng = np.random.default_rng(seed)
    e = _standardized_normals(rng, T - 1)

    v = np.asarray(V.values, dtype=float)[:-1]
    kappas = np.asarray(spec.kappa_of(v), dtype=float)
    rhos = np.asarray(spec.rho_of(v), dtype=float)

    r = np.empty(T)
    r[0] = 0.0
    prev = 0.0
    for t in range(T - 1):
        prev = rhos[t] * prev + kappas[t] * 1e-4 * e[t]
        r[t + 1] = prev

    return StateSimResult(
        returns=MonthlySeries(V.start_month, r),
        shocks=ShockSeries(V.start_month, e),
        kappa_path=kappas,
        rho_path=rhos,
    )


def wald_equality(fit_L, fit_H) -> dict[str, tuple[float, float]]:
    """Wald tests of parameter equality across two independent fits.

    For each of kappa and rho: chi2 = (theta_L - theta_H)^2/(var_L + var_H),
    p from the chi-square(1) tail. Fits must carry variance estimates
    (``kappa_var`` / ``rho_var``), e.g. from the minimum-distance sandwich
    or a parametric bootstrap.
    """
    out = {}
    for name in ("kappa", "rho"):
        var_L = getattr(fit_L, f"{name}_var", None)
        var_H = getattr(fit_H, f"{name}_var", None)
        if var_L is None or var_H is None:
            raise MissingVariance(f"both fits need {name}_var for the Wald test")
        diff = getattr(fit_L, name) - getattr(fit_H, name)
        denom = var_L + var_H
        if denom <= 0:
            chi2 = 0.0 if diff == 0 else math.inf
        else:
            chi2 = diff * diff / denom
        p = float(stats.chi2.sf(chi2, df=1))
        out[name] = (float(chi2), p)
    return out


def month_range(start_month: str, T: int) -> list[str]:
    """Convenience: T consecutive month labels from a start label."""
    from .series import month_code

    c0 = month_code(start_month)
    return [month_label(c0 + i) for i in range(T)]
