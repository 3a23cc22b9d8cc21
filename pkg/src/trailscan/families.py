"""One-parameter exponential families tilted from a base distribution.

A family is described by its log-MGF ``psi(theta) = log E_0 exp(theta X)``;
the tilted law ``F_theta`` has density ``exp(theta x - psi(theta))`` with
respect to the base ``F_0``.  Three analytic instances ship: ``gaussian``,
``exponential`` and ``bernoulli``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import NumericError

FD_STEP = 1e-5
LEFT_EDGE = 1e-4
RIGHT_MARGIN = 1e-6
DEFAULT_RIGHT = 10.0


@dataclass(frozen=True)
class Family:
    name: str
    psi: Callable[[float], float]
    domain: tuple  # open interval (lo, hi) of valid theta
    draw: Callable  # (theta, rng, size) -> ndarray
    mean_fn: Optional[Callable[[float], float]] = None
    var_fn: Optional[Callable[[float], float]] = None

    def in_domain(self, theta: float) -> bool:
        lo, hi = self.domain
        return lo < theta < hi

    def check_theta(self, theta: float) -> None:
        if not self.in_domain(theta):
            raise ValueError(f"theta={theta} outside the {self.name} domain {self.domain}")

    def mean(self, theta: float) -> float:
        if self.mean_fn is not None:
            return self.mean_fn(theta)
        h = FD_STEP
        return (self.psi(theta + h) - self.psi(theta - h)) / (2 * h)

    def variance(self, theta: float) -> float:
        if self.var_fn is not None:
            return self.var_fn(theta)
        h = FD_STEP
        return (self.psi(theta + h) - 2 * self.psi(theta) + self.psi(theta - h)) / h**2

    def sample(self, theta: float, rng: np.random.Generator, size=None):
        self.check_theta(theta)
        return self.draw(theta, rng, size)

    def theta_for_shift(self, shift: float) -> float:
        """Natural parameter whose mean exceeds the base mean by ``shift``."""
        target = self.mean(0.0) + shift
        if shift == 0:
            return 0.0
        lo, hi = self.domain
        a, b = (0.0, min(hi - RIGHT_MARGIN, 1.0)) if shift > 0 else (max(lo + RIGHT_MARGIN, -1.0), 0.0)
        g = lambda t: self.mean(t) - target
        for _ in range(60):
            if g(a) * g(b) <= 0:
                break
            if shift > 0:
                b = b + (b - a) if math.isinf(hi) else (b + hi - RIGHT_MARGIN) / 2
            else:
                a = a - (b - a) if math.isinf(lo) else (a + lo + RIGHT_MARGIN) / 2
        else:
            raise ValueError(f"mean shift {shift} not attainable by the {self.name} family")
        return optimize.brentq(g, a, b, xtol=1e-14)


def _gauss_draw(theta, rng, size):
    return theta + rng.standard_normal(size)


def _exp_draw(theta, rng, size):
    return rng.standard_exponential(size) / (1.0 - theta)


def _sigmoid(t):
    return 1.0 / (1.0 + math.exp(-t)) if t >= 0 else math.exp(t) / (1.0 + math.exp(t))


def _bern_draw(theta, rng, size):
    return (rng.random(size) < _sigmoid(theta)).astype(np.float64)


GAUSSIAN = Family(
    "gaussian",
    psi=lambda t: 0.5 * t * t,
    domain=(-math.inf, math.inf),
    draw=_gauss_draw,
    mean_fn=lambda t: t,
    var_fn=lambda t: 1.0,
)

EXPONENTIAL = Family(
    "exponential",
    psi=lambda t: -math.log1p(-t),
    domain=(-math.inf, 1.0),
    draw=_exp_draw,
    mean_fn=lambda t: 1.0 / (1.0 - t),
    var_fn=lambda t: 1.0 / (1.0 - t) ** 2,
)

BERNOULLI = Family(
    "bernoulli",
    psi=lambda t: np.logaddexp(0.0, t) - math.log(2.0),
    domain=(-math.inf, math.inf),
    draw=_bern_draw,
    mean_fn=_sigmoid,
    var_fn=lambda t: _sigmoid(t) * (1.0 - _sigmoid(t)),
)

FAMILIES = {f.name: f for f in (GAUSSIAN, EXPONENTIAL, BERNOULLI)}


def get_family(name: str) -> Family:
    try:
        return FAMILIES[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None


def sample(fam: Family, theta: float, rng: np.random.Generator, size=None):
    return fam.sample(theta, rng, size)


def lambda_ratio(fam: Family, theta: float) -> float:
    """``phi(2 theta) / phi(theta)**2``; the per-node second moment of the likelihood ratio."""
    if not fam.in_domain(2 * theta):
        raise ValueError(f"2*theta={2 * theta} outside the {fam.name} domain {fam.domain}")
    return math.exp(fam.psi(2 * theta) - 2 * fam.psi(theta))


def alpha(fam: Family, theta: float) -> float:
    """``sqrt(log lambda(theta))``; equals ``|theta|`` for the Gaussian family."""
    if not fam.in_domain(2 * theta):
        raise ValueError(f"2*theta={2 * theta} outside the {fam.name} domain {fam.domain}")
    # psi(2t) - 2 psi(t) can round to a tiny negative near 0
    return math.sqrt(max(0.0, fam.psi(2 * theta) - 2 * fam.psi(theta)))


def chi_square(fam: Family, theta: float) -> float:
    """Pearson chi-square distance between the base law and ``F_theta``."""
    if not fam.in_domain(2 * theta):
        raise ValueError(f"2*theta={2 * theta} outside the {fam.name} domain {fam.domain}")
    return math.expm1(fam.psi(2 * theta) - 2 * fam.psi(theta))


def f_rate(fam: Family, theta: float) -> float:
    """``log(2 phi(theta)) / theta``, the growth rate governing the tree threshold."""
    if theta <= 0:
        raise ValueError(f"f_rate needs theta > 0, got {theta}")
    fam.check_theta(theta)
    return (math.log(2.0) + fam.psi(theta)) / theta


@dataclass(frozen=True)
class ThetaStar:
    value: float  # math.inf when f keeps decreasing to the domain edge
    f_min: Optional[float]

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.value)

    def __str__(self):
        return "unbounded" if self.unbounded else f"{self.value:.6f}"


def _search_bracket(fam: Family, search_interval) -> tuple:
    lo, hi = search_interval if search_interval is not None else (0.0, DEFAULT_RIGHT)
    lo = max(lo, LEFT_EDGE)
    hi = min(hi, fam.domain[1] - RIGHT_MARGIN)
    if not lo < hi:
        raise ValueError(f"empty search interval [{lo}, {hi}]")
    return lo, hi


def theta_star(fam: Family, search_interval=None, tol: float = 1e-7) -> ThetaStar:
    """Minimizer of :func:`f_rate` over ``theta > 0``.

    The search runs on ``[1e-4, hi]`` where ``hi`` is the smaller of the
    domain edge (less ``1e-6``) and the right end of ``search_interval``
    (default 10).  If ``f`` still decreases at ``hi`` the minimizer is
    reported as unbounded.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = _search_bracket(fam, search_interval)
    f = lambda t: f_rate(fam, t)
    for t in (lo, hi, 0.5 * (lo + hi)):
        if not math.isfinite(f(t)):
            raise NumericError(f"f_rate is not finite at theta={t}")
    slope_hi = (f(hi) - f(hi - FD_STEP)) / FD_STEP
    if slope_hi < -1e-9:
        return ThetaStar(math.inf, None)
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": tol})
    if not math.isfinite(res.fun):
        raise NumericError("f_rate minimization returned a non-finite value")
    return ThetaStar(float(res.x), float(res.fun))


def xi(fam: Family, t: float, upper=None) -> float:
    """``inf_{theta > 0} phi(theta) exp(-t theta)``.

    Equals 1 when the infimum is approached as ``theta -> 0+``.
    """
    if fam.mean(0.0) >= t:
        return 1.0
    g = lambda s: fam.psi(s) - t * s
    hi = fam.domain[1] - RIGHT_MARGIN if upper is None else upper
    if math.isinf(hi):
        hi = 1.0
        while fam.mean(hi) < t and hi < 1e3:
            hi *= 2.0
    grid = np.linspace(0.0, hi, 201)[1:]
    vals = np.array([g(s) for s in grid])
    k = int(np.argmin(vals))
    a = grid[k - 1] if k > 0 else 0.0
    b = grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(g, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
    best = min(float(res.fun), float(vals[k]), 0.0)
    return math.exp(best)


def mean_shift(fam: Family, theta: float) -> float:
    return fam.mean(theta) - fam.mean(0.0)
