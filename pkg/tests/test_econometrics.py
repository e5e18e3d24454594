import numpy as np
import pytest

import sentkit as sk
from sentkit.econometrics import _curve, profile_kappa
from sentkit.errors import (
    InsufficientOverlap,
    MisalignedIndex,
    SchemaViolation,
    SeriesTooShort,
    WindowTooLong,
)


def _simulate(kappa=1.06, rho=0.94, T=6000, seed=0):
    return sk.simulate_feedback(sk.FeedbackParams(kappa=kappa, rho=rho), T=T,
                                seed=seed, burn_in=200, return_shocks=True)


# --- local projections --------------------------------------------------------

def test_lp_level_slope_matches_hand_ols():
    r, s = _simulate(T=800, seed=3)
    irf = sk.local_projection_irf(s, r, horizons=(2,), mode="level")
    # hand-build the same regression: r_{t+2} on eps_t
    eps = s.eps
    y = r.values[2:]          # r at month t+2 for t = 0..T-3
    x = eps[: len(y)]
    X = np.column_stack([np.ones_like(x), x])
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    assert irf.betas[0] == pytest.approx(beta[1], rel=1e-10)
    assert irf.nobs[0] == len(y)


def test_lp_plim_follows_geometric_decay():
    r, s = _simulate(T=40_000, seed=1)
    irf = sk.local_projection_irf(s, r, horizons=(1, 2, 4, 8), mode="level")
    for h, b in zip(irf.horizons, irf.betas):
        assert b == pytest.approx(1.06e-4 * 0.94 ** (h - 1), rel=0.08)


def test_lp_cumulative_equals_sum_of_levels():
    r, s = _simulate(T=25_000, seed=2)
    cum = sk.local_projection_irf(s, r, horizons=(6,), mode="cumulative")
    target = 1.06e-4 * (1 - 0.94**6) / 0.06
    assert cum.betas[0] == pytest.approx(target, rel=0.08)


def test_lp_requires_overlap():
    r = sk.MonthlySeries("2000-01", np.random.default_rng(0).normal(size=100))
    s = sk.ShockSeries("2050-01", np.random.default_rng(1).normal(size=100))
    with pytest.raises(MisalignedIndex):
        sk.local_projection_irf(s, r, horizons=(1,))


def test_lp_min_obs_enforced():
    r, s = _simulate(T=40, seed=4)
    with pytest.raises(InsufficientOverlap):
        sk.local_projection_irf(s, r, horizons=(12,), min_obs=30)


def test_lp_joint_covariance_has_cross_terms():
    r, s = _simulate(T=3000, seed=5)
    diag = sk.local_projection_irf(s, r, horizons=(1, 3), cross_cov="diagonal")
    joint = sk.local_projection_irf(s, r, horizons=(1, 3), cross_cov="moving-block",
                                    block_len=12, joint_draws=150, seed=42)
    assert diag.covariance[0, 1] == 0.0
    assert joint.covariance[0, 1] != 0.0
    # diagonal entries stay comparable between the two estimators
    ratio = joint.covariance[0, 0] / diag.covariance[0, 0]
    assert 0.2 < ratio < 5.0


# --- geometric curve fitting ----------------------------------------------------

def _noiseless_irf(kappa, rho, horizons, convention):
    h = np.asarray(horizons, dtype=float)
    betas = kappa * _curve(rho, h, convention)
    return sk.IrfEstimate(horizons=tuple(horizons), betas=betas,
                          ses=np.full(len(h), 0.01),
                          covariance=np.eye(len(h)) * 1e-4,
                          nobs=tuple([1000] * len(h)))


@pytest.mark.parametrize("method", ["wls", "gmm", "nls-constrained"])
@pytest.mark.parametrize("convention", ["level-h", "level-h-minus-1"])
def test_fit_recovers_noiseless_parameters(method, convention):
    irf = _noiseless_irf(2.4e-4, 0.91, (1, 3, 6, 12), convention)
    fit = sk.fit_geometric(irf, method=method, convention=convention)
    assert fit.kappa == pytest.approx(2.4e-4, abs=1e-8 * 2.4e-4 + 1e-12)
    assert fit.rho == pytest.approx(0.91, abs=1e-8)
    assert fit.dof == 2
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)


def test_fit_kappa_bps_property():
    irf = _noiseless_irf(2.0e-4, 0.9, (1, 3, 6, 12), "level-h-minus-1")
    fit = sk.fit_geometric(irf)
    assert fit.kappa_bps == pytest.approx(2.0, rel=1e-6)


def test_fit_needs_three_horizons():
    irf = _noiseless_irf(1e-4, 0.9, (1, 3), "level-h")
    with pytest.raises(SchemaViolation):
        sk.fit_geometric(irf, convention="level-h")


def test_fit_flags_boundary():
    # betas that rise with horizon push rho to the upper bound
    irf = sk.IrfEstimate(horizons=(1, 3, 6, 12),
                         betas=np.array([1.0, 2.0, 4.0, 9.0]) * 1e-4,
                         ses=np.full(4, 0.01), covariance=np.eye(4) * 1e-4,
                         nobs=(100, 100, 100, 100))
    fit = sk.fit_geometric(irf, convention="level-h-minus-1")
    assert "boundary-solution" in fit.flags


def test_gmm_singular_covariance_falls_back_to_diagonal():
    h = (1, 3, 6, 12)
    betas = 1e-4 * _curve(0.9, np.asarray(h, dtype=float), "level-h")
    sigma = np.ones((4, 4)) * 1e-6  # rank one
    irf = sk.IrfEstimate(horizons=h, betas=betas, ses=np.full(4, 1e-3),
                         covariance=sigma, nobs=(50,) * 4)
    fit = sk.fit_geometric(irf, method="gmm", convention="level-h")
    assert "gmm-diagonal-fallback" in fit.flags
    assert fit.rho == pytest.approx(0.9, abs=1e-6)


def test_profile_kappa_minimizes():
    rng = np.random.default_rng(0)
    g = np.array([1.0, 0.8, 0.5, 0.2])
    W = np.diag(rng.uniform(0.5, 2.0, size=4))
    betas = 1.7 * g + rng.normal(0, 0.05, size=4)
    k_star = profile_kappa(betas, g, W)
    grid = np.linspace(k_star - 0.5, k_star + 0.5, 401)
    obj = [(betas - k * g) @ W @ (betas - k * g) for k in grid]
    assert obj[200] == pytest.approx(min(obj), abs=1e-9)


def test_fit_variance_feeds_wald():
    r1, s1 = _simulate(kappa=1.0, rho=0.94, T=8000, seed=11)
    r2, s2 = _simulate(kappa=2.0, rho=0.94, T=8000, seed=12)
    f1 = sk.fit_geometric(sk.local_projection_irf(s1, r1, horizons=(1, 3, 6, 12)))
    f2 = sk.fit_geometric(sk.local_projection_irf(s2, r2, horizons=(1, 3, 6, 12)))
    assert f1.kappa_var is not None and f1.kappa_var > 0
    tests = sk.wald_equality(f1, f2)
    assert tests["kappa"][1] < 0.05   # doubled amplification is detectable
    assert tests["rho"][1] > 0.001    # same persistence should rarely reject


# --- rolling windows ------------------------------------------------------------

def test_rolling_fit_window_count_oracle():
    r, s = _simulate(T=420, seed=6)
    fits = sk.rolling_fit(s, r, window=60, step=12, horizons=(1, 3, 6, 12))
    assert len(fits) == 30  # floor((420 - 60 - 12)/12) + 1
    start_label, first = fits[0]
    assert start_label == r.months()[0]
    assert isinstance(first, sk.GeometricFit)


def test_rolling_fit_step_one_contiguous():
    r, s = _simulate(T=120, seed=7)
    fits = sk.rolling_fit(s, r, window=80, step=1, horizons=(1, 3, 6))
    assert len(fits) == 120 - 80 - 6 + 1


def test_rolling_fit_window_too_long():
    r, s = _simulate(T=100, seed=8)
    with pytest.raises(WindowTooLong):
        sk.rolling_fit(s, r, window=95, step=1, horizons=(1, 3, 6, 12))
