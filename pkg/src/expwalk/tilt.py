"""Optimal exponential tilt, Esscher transform and regime classification."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .steps import (
    ExpTilted,
    Gaussian,
    Lattice,
    Reflected,
    ShiftedPareto,
    StepModel,
    TwoPoint,
)

__all__ = [
    "Boundary",
    "FSpec",
    "TiltReport",
    "RegimeTag",
    "Regime",
    "find_lambda",
    "esscher",
    "regime_classify",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_MAX_ITER = 200


class Boundary(str, enum.Enum):
    INTERIOR = "Interior"
    AT_ZERO = "AtZero"
    AT_THETA_F = "AtThetaF"
    AT_DOMAIN_SUP = "AtDomainSup"


class RegimeTag(str, enum.Enum):
    OSC_LAMBDA_ZERO = "Osc_LambdaZero"
    OSC_INTERIOR = "Osc_Interior"
    OSC_LAMBDA_EQ_THETA = "Osc_LambdaEqTheta"
    DRIFT_LAMBDA_EQ_THETA = "Drift_LambdaEqTheta"
    DRIFT_LAMBDA_ZERO_HEAVY = "Drift_LambdaZero_HeavyTail"
    DRIFT_INTERIOR_HEAVY = "Drift_Interior_HeavyTail"
    DRIFTS_TO_INFINITY = "DriftsToInfinity"
    UNSUPPORTED = "Unsupported"


@dataclass(frozen=True)
class FSpec:
    """The test function ``F(x) = K0 * (c0 + x) ** -theta``.

    Bounded by ``K0 * c0**-theta``, globally Lipschitz, non-increasing and
    ``x**theta * F(x) -> K0``.
    """

    K0: float = 1.0
    theta: float = 1.0
    c0: float = 1.0

    def __post_init__(self):
        if self.K0 <= 0 or self.theta <= 0 or self.c0 <= 0:
            raise ValueError("K0, theta and c0 must be positive")

    def __call__(self, x):
        return self.K0 * np.power(self.c0 + np.asarray(x, dtype=float), -self.theta)

    def from_log(self, log_x):
        """``F(exp(log_x))`` without forming ``exp(log_x)``."""
        log_x = np.asarray(log_x, dtype=float)
        return self.K0 * np.exp(-self.theta * np.logaddexp(math.log(self.c0), log_x))

    @property
    def bound(self) -> float:
        return self.K0 * self.c0 ** (-self.theta)

    @property
    def lipschitz(self) -> float:
        return self.theta * self.K0 * self.c0 ** (-self.theta - 1.0)


@dataclass(frozen=True)
class TiltReport:
    lambda_star: float
    rho_factor: float
    phi_at_lambda: float
    tilted_mean: float
    boundary: Boundary
    tilted_model: StepModel
    theta_f: float


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    report: TiltReport
    reason: str = ""

    def __str__(self) -> str:
        return self.tag.value


def esscher(model: StepModel, lambda0: float) -> StepModel:
    """Law of the step under the measure tilted by ``exp(lambda0 * x) / L(lambda0)``."""
    if lambda0 == 0.0:
        return model
    norm = model.laplace(lambda0)
    if not math.isfinite(norm):
        raise ValueError(f"Laplace transform is infinite at {lambda0}")
    if isinstance(model, Gaussian):
        return Gaussian(model.mu + model.sigma**2 * lambda0, model.sigma)
    if isinstance(model, Lattice):
        values, probs = model.atoms()
        logw = np.full(len(probs), -np.inf)
        pos = probs > 0
        logw[pos] = np.log(probs[pos]) + lambda0 * values[pos]
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()
        return Lattice(model.spacing, model.offsets, tuple(_fix_sum(w)))
    if isinstance(model, TwoPoint):
        if model.p_up in (0.0, 1.0):
            return model
        lu = math.log(model.p_up) + lambda0 * model.up
        ld = math.log1p(-model.p_up) + lambda0 * model.down
        p_up = 1.0 / (1.0 + math.exp(ld - lu))
        return TwoPoint(model.up, model.down, p_up)
    if isinstance(model, ExpTilted):
        total = model.lam + lambda0
        return model.base if total == 0.0 else ExpTilted(model.base, total)
    if isinstance(model, ShiftedPareto):
        return ExpTilted(model, lambda0)
    if isinstance(model, Reflected):
        return Reflected(esscher(model.base, -lambda0))
    raise TypeError(f"no Esscher transform for {model!r}")


def _fix_sum(w: np.ndarray) -> list[float]:
    w = [float(x) for x in w]
    i = int(np.argmax(w))
    w[i] = 1.0 - math.fsum(w[:i] + w[i + 1:])
    return w


def _log_laplace(model: StepModel, lam: float) -> float:
    val = model.laplace(lam)
    return math.inf if not math.isfinite(val) else math.log(val)


def _domain_sup(model: StepModel, theta_f: float, tol: float) -> float:
    """Largest λ in [0, theta_f] with a finite Laplace transform."""
    if hasattr(model, "laplace_domain"):
        return min(theta_f, max(0.0, model.laplace_domain()[1]))
    if math.isfinite(model.laplace(theta_f)):
        return theta_f
    lo, hi = 0.0, theta_f
    for _ in range(_MAX_ITER):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if math.isfinite(model.laplace(mid)):
            lo = mid
        else:
            hi = mid
    return lo


def find_lambda(model: StepModel, theta_f: float, tol: float = 1e-10) -> TiltReport:
    """Minimise the Laplace transform of the step over ``[0, theta_f]``.

    Golden-section search on ``log L`` (log-convex, hence unimodal), with
    endpoint shortcuts when the one-sided slope points outward.  Interior
    minima are polished by root-finding on the tilted mean.
    """
    if theta_f <= 0 or tol <= 0:
        raise ValueError("theta_f and tol must be positive")
    hi = _domain_sup(model, theta_f, tol)
    f = lambda lam: _log_laplace(model, lam)  # noqa: E731
    h = max(tol, 1e-7 * max(hi, 1.0))

    if hi <= 0.0:
        return _report(model, 0.0, Boundary.AT_ZERO, theta_f)
    if f(min(h, hi)) >= f(0.0):
        return _report(model, 0.0, Boundary.AT_ZERO, theta_f)
    top = Boundary.AT_THETA_F if hi >= theta_f else Boundary.AT_DOMAIN_SUP
    if f(max(hi - h, 0.0)) >= f(hi):
        return _report(model, hi, top, theta_f)

    a, b = 0.0, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(_MAX_ITER):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    lam = 0.5 * (a + b)
    # golden section only resolves the flat minimum to about sqrt(eps), so the
    # root of the tilted mean is bracketed more widely
    w = max(10 * tol, 1e-4 * max(1.0, hi))
    lam = _polish(model, lam, max(0.0, lam - w), min(hi, lam + w), tol)
    # a minimiser within tol of an endpoint is that endpoint
    if hi - lam <= 2 * tol:
        return _report(model, hi, top, theta_f)
    if lam <= 2 * tol:
        return _report(model, 0.0, Boundary.AT_ZERO, theta_f)
    return _report(model, lam, Boundary.INTERIOR, theta_f)


def _polish(model: StepModel, lam: float, lo: float, hi: float, tol: float) -> float:
    try:
        g = lambda x: esscher(model, x).mean()  # noqa: E731
        glo, ghi = g(lo), g(hi)
    except (TypeError, ValueError):
        return lam
    if glo == 0.0:
        return lo
    if ghi == 0.0:
        return hi
    if glo * ghi > 0:
        return lam
    return optimize.brentq(g, lo, hi, xtol=min(tol, 1e-14), rtol=4 * np.finfo(float).eps)


def _report(model: StepModel, lam: float, boundary: Boundary, theta_f: float) -> TiltReport:
    rho = model.laplace(lam)
    tilted = esscher(model, lam)
    return TiltReport(
        lambda_star=lam,
        rho_factor=rho,
        phi_at_lambda=math.log(rho),
        tilted_mean=tilted.mean(),
        boundary=boundary,
        tilted_model=tilted,
        theta_f=theta_f,
    )


def regime_classify(model: StepModel, f: FSpec, tol: float = 1e-10, mean_tol: float = 1e-9) -> Regime:
    """Assign the (model, F) pair to one of the asymptotic regimes."""
    mean = model.mean()
    report = find_lambda(model, f.theta, tol)
    if mean > mean_tol:
        return Regime(RegimeTag.DRIFTS_TO_INFINITY, report)
    lam, tm = report.lambda_star, report.tilted_mean
    heavy = getattr(report.tilted_model, "heavy_tail", False)
    oscillating = abs(tm) <= mean_tol

    if report.boundary is Boundary.AT_ZERO:
        if oscillating:
            return Regime(RegimeTag.OSC_LAMBDA_ZERO, report)
        if heavy:
            return Regime(RegimeTag.DRIFT_LAMBDA_ZERO_HEAVY, report)
        return Regime(RegimeTag.UNSUPPORTED, report,
                      "negative drift with zero tilt needs a regularly varying right tail")
    if report.boundary is Boundary.AT_THETA_F:
        if oscillating:
            return Regime(RegimeTag.OSC_LAMBDA_EQ_THETA, report)
        return Regime(RegimeTag.DRIFT_LAMBDA_EQ_THETA, report)
    if report.boundary is Boundary.INTERIOR:
        return Regime(RegimeTag.OSC_INTERIOR, report)
    # AtDomainSup with lam < theta_F
    if oscillating:
        return Regime(RegimeTag.OSC_INTERIOR, report)
    if heavy and lam > 0:
        return Regime(RegimeTag.DRIFT_INTERIOR_HEAVY, report)
    return Regime(RegimeTag.UNSUPPORTED, report,
                  "tilt stops at the Laplace domain boundary without a regularly varying tilted tail")
