import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from trailscan.errors import NumericError
from trailscan.families import (BERNOULLI, EXPONENTIAL, FAMILIES, FD_STEP, GAUSSIAN, alpha, chi_square, f_rate,
                                get_family, lambda_ratio, mean_shift, theta_star, xi)

# independent high-precision log-MGFs
MP_PSI = {
    "gaussian": lambda t: t * t / 2,
    "exponential": lambda t: -mp.log(1 - t),
    "bernoulli": lambda t: mp.log((1 + mp.e**t) / 2),
}
GRIDS = {
    "gaussian": np.linspace(-3, 3, 50),
    "exponential": np.linspace(-3, 0.9, 50),
    "bernoulli": np.linspace(-3, 3, 50),
}
ALL = list(FAMILIES.values())


def test_lambda_examples():
    assert lambda_ratio(GAUSSIAN, 0.5) == pytest.approx(math.exp(0.25), rel=1e-14)
    assert lambda_ratio(EXPONENTIAL, 0.2) == pytest.approx((1 / 0.6) / (1 / 0.8) ** 2, rel=1e-14)
    for fam in ALL:
        assert lambda_ratio(fam, 0.0) == 1.0
    with pytest.raises(ValueError):
        lambda_ratio(EXPONENTIAL, 0.5)


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.name)
def test_lambda_above_one(fam):
    for t in GRIDS[fam.name]:
        if fam.in_domain(2 * t) and t != 0:
            assert lambda_ratio(fam, t) > 1.0


def test_alpha_examples():
    assert alpha(GAUSSIAN, 0.7) == pytest.approx(0.7, abs=1e-12)
    assert alpha(GAUSSIAN, 0.0) == 0.0
    # log(16/15) under the square root; hand arithmetic elsewhere rounds this to 0.25413
    assert alpha(EXPONENTIAL, 0.2) == pytest.approx(math.sqrt(math.log(16 / 15)), rel=1e-13)
    assert alpha(EXPONENTIAL, 0.2) == pytest.approx(0.25413, abs=1e-3)


@given(st.floats(-20, 20))
def test_gaussian_alpha_is_abs(t):
    assert alpha(GAUSSIAN, t) == pytest.approx(abs(t), abs=1e-12)


def test_f_rate_examples():
    assert f_rate(EXPONENTIAL, 0.5) == pytest.approx(math.log(4) / 0.5, rel=1e-14)
    r = math.sqrt(2 * math.log(2))
    assert f_rate(GAUSSIAN, r) == pytest.approx(r, rel=1e-14)
    assert f_rate(BERNOULLI, 1.0) == pytest.approx(math.log1p(math.e), rel=1e-14)
    with pytest.raises(ValueError):
        f_rate(GAUSSIAN, 0.0)


def test_theta_star_values():
    g = theta_star(GAUSSIAN)
    assert abs(g.value - math.sqrt(2 * math.log(2))) < 1e-6
    e = theta_star(EXPONENTIAL)
    assert abs(e.value - 0.6268) < 0.005
    assert abs(mean_shift(EXPONENTIAL, e.value) - 1.68) < 0.02
    b = theta_star(BERNOULLI)
    assert b.unbounded and str(b) == "unbounded"


def test_theta_star_exponential_oracle():
    # f'(t) = 0  <=>  t/(1-t) = log(2/(1-t)) for the exponential family
    root = mp.findroot(lambda t: t / (1 - t) - mp.log(2 / (1 - t)), 0.6)
    assert theta_star(EXPONENTIAL).value == pytest.approx(float(root), abs=1e-6)


@pytest.mark.parametrize("fam", [GAUSSIAN, EXPONENTIAL], ids=lambda f: f.name)
def test_theta_star_is_minimum(fam):
    ts = theta_star(fam)
    grid = np.linspace(0.01, min(fam.domain[1] - 1e-3, 5), 400)
    assert all(ts.f_min <= f_rate(fam, t) + 1e-12 for t in grid)
    h = 1e-5
    assert abs(f_rate(fam, ts.value + h) - f_rate(fam, ts.value - h)) / (2 * h) < 1e-4


@pytest.mark.parametrize("fam", [GAUSSIAN, EXPONENTIAL], ids=lambda f: f.name)
def test_theta_star_stable_under_tol(fam):
    for tol in (1e-5, 1e-6):
        a = theta_star(fam, tol=tol).value
        b = theta_star(fam, tol=tol / 2).value
        assert abs(a - b) < tol


def test_theta_star_errors():
    with pytest.raises(ValueError):
        theta_star(GAUSSIAN, tol=0)
    with pytest.raises(ValueError):
        theta_star(GAUSSIAN, search_interval=(3, 2))
    # an interval that stops before the minimum reports the minimizer as unbounded
    assert theta_star(GAUSSIAN, search_interval=(0, 1.0)).unbounded


def test_xi():
    r = math.sqrt(2 * math.log(2))
    assert xi(GAUSSIAN, r) == pytest.approx(0.5, abs=1e-6)
    assert xi(GAUSSIAN, 0.0) == 1.0
    for t in (0.5, 1.5, 2.5):
        assert xi(GAUSSIAN, t) == pytest.approx(math.exp(-t * t / 2), abs=1e-9)
    e = theta_star(EXPONENTIAL)
    assert xi(EXPONENTIAL, f_rate(EXPONENTIAL, e.value)) == pytest.approx(0.5, abs=1e-6)
    g = theta_star(GAUSSIAN)
    assert xi(GAUSSIAN, g.f_min) == pytest.approx(0.5, abs=1e-6)


def test_chi_square():
    assert chi_square(GAUSSIAN, 0.0) == 0.0
    assert chi_square(GAUSSIAN, 0.8) == pytest.approx(math.expm1(0.64), rel=1e-13)
    assert chi_square(EXPONENTIAL, 0.2) == pytest.approx(1 / 15, rel=1e-12)


def test_sampling_moments():
    rng = np.random.default_rng(0)
    assert abs(GAUSSIAN.sample(0.0, rng, 10**5).mean()) < 0.013
    assert abs(EXPONENTIAL.sample(0.5, rng, 10**5).mean() - 2) < 0.03
    assert abs(BERNOULLI.sample(0.0, rng, 10**5).mean() - 0.5) < 0.005
    with pytest.raises(ValueError):
        EXPONENTIAL.sample(1.0, rng, 3)


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.name)
def test_sampling_matches_tilted_mean(fam):
    rng = np.random.default_rng(1)
    t = 0.4
    x = fam.sample(t, rng, 200_000)
    se = math.sqrt(fam.variance(t) / len(x))
    assert abs(x.mean() - fam.mean(t)) < 5 * se


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.name)
def test_first_derivative_fd(fam):
    h = FD_STEP
    for t in GRIDS[fam.name]:
        fd = (fam.psi(t + h) - fam.psi(t - h)) / (2 * h)
        assert fd == pytest.approx(fam.mean(t), rel=1e-6)


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.name)
def test_second_derivative_fd_high_precision(fam):
    # the step-1e-5 central difference evaluated without roundoff
    mp.mp.dps = 40
    h = mp.mpf(FD_STEP)
    psi = MP_PSI[fam.name]
    for t in GRIDS[fam.name]:
        t = mp.mpf(float(t))
        fd = (psi(t + h) - 2 * psi(t) + psi(t - h)) / h**2
        assert float(fd) == pytest.approx(fam.variance(float(t)), rel=1e-6)


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.name)
def test_second_derivative_fd_double(fam):
    # in double precision the step-1e-5 second difference carries roundoff of order eps*(1+|psi|)/h^2;
    # the O(1) term covers intermediate values such as log(1+e^t) before the log 2 shift
    h = FD_STEP
    eps = np.finfo(float).eps
    for t in GRIDS[fam.name]:
        fd = (fam.psi(t + h) - 2 * fam.psi(t) + fam.psi(t - h)) / h**2
        roundoff = 8 * eps * (1 + abs(fam.psi(t))) / h**2
        assert abs(fd - fam.variance(t)) <= roundoff + 1e-6 * fam.variance(t)


@pytest.mark.parametrize("fam", ALL, ids=lambda f: f.name)
def test_psi_against_oracle(fam):
    mp.mp.dps = 30
    for t in GRIDS[fam.name]:
        assert fam.psi(float(t)) == pytest.approx(float(MP_PSI[fam.name](mp.mpf(float(t)))), rel=1e-13, abs=1e-15)
    assert fam.psi(0.0) == 0.0


def test_theta_for_shift():
    for fam in ALL:
        t = fam.theta_for_shift(0.3)
        assert mean_shift(fam, t) == pytest.approx(0.3, abs=1e-10)
    assert GAUSSIAN.theta_for_shift(0.7) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        BERNOULLI.theta_for_shift(0.6)  # means stay below 1


def test_get_family():
    assert get_family("gaussian") is GAUSSIAN
    with pytest.raises(ValueError):
        get_family("poisson")


def test_numeric_error_type():
    assert issubclass(NumericError, ArithmeticError)
