"""Rate ingredients: positivity parameter, slowly varying factors, stable densities, decay rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.random import Generator
from scipy import integrate, special, stats

from .results import Estimate
from .steps import Gaussian, StepModel, as_lattice
from .tilt import FSpec, RegimeTag, TiltReport, regime_classify
from .walk import exact_lattice_dp

__all__ = [
    "SlowlyVarying",
    "RatePrediction",
    "positivity_probs",
    "spitzer_rho",
    "slowly_varying_l1",
    "slowly_varying_l1_hat",
    "rate_B_n",
    "stable_density_at_zero",
    "stable_density",
    "predicted_log_rate",
    "rate_prediction",
]

REMAINDER_LIMIT = 0.1


@dataclass(frozen=True)
class SlowlyVarying:
    """Value of a truncated slowly varying series with the bound on its truncated exponent."""

    value: float
    exponent_bound: float

    @property
    def relative_bound(self) -> float:
        return math.expm1(self.exponent_bound)


def _is_symmetric(model: StepModel) -> bool:
    return bool(getattr(model, "is_symmetric", lambda: False)())


def positivity_probs(model: StepModel, k_max: int, *, strict: bool = False, nsim: int = 100_000,
                     rng: Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``P(S_k > 0)`` (``strict``) or ``P(S_k >= 0)`` for ``k = 1..k_max`` and their stderr.

    Exact for lattice laws (dynamic programme) and Gaussian steps, Monte
    Carlo otherwise.
    """
    if isinstance(model, Gaussian):
        k = np.arange(1, k_max + 1)
        p = stats.norm.sf(-model.mu * np.sqrt(k) / model.sigma)
        return p, np.zeros(k_max)
    if as_lattice(model) is not None:
        dp = exact_lattice_dp(model, k_max, max_states=1 << 20)
        p = dp.p_gt0 if strict else dp.p_ge0
        return np.asarray(p[1:], dtype=float), np.zeros(k_max)
    rng = np.random.default_rng() if rng is None else rng
    hits = np.zeros(k_max)
    done = 0
    chunk = max(1, min(nsim, 4_000_000 // max(k_max, 1)))
    while done < nsim:
        c = min(chunk, nsim - done)
        s = np.cumsum(np.asarray(model.sample(rng, (c, k_max)), dtype=float), axis=1)
        hits += ((s > 0) if strict else (s >= 0)).sum(axis=0)
        done += c
    p = hits / nsim
    return p, np.sqrt(p * (1 - p) / nsim)


def spitzer_rho(model: StepModel, k_max: int = 1024, oracle: str = "auto", nsim: int = 10_000,
                rng: Generator | None = None) -> Estimate:
    """Cesaro mean of ``P(S_k > 0)`` over ``k <= k_max``; exactly 1/2 for symmetric laws."""
    if k_max < 16:
        raise ValueError("k_max must be at least 16")
    if _is_symmetric(model):
        return Estimate(0.5, 0.0, 0, "symmetry")
    if oracle == "auto":
        oracle = "DP" if as_lattice(model) is not None or isinstance(model, Gaussian) else "MC"
    if oracle == "DP":
        p, _ = positivity_probs(model, k_max, strict=True)
        return Estimate(float(math.fsum(p)) / k_max, 0.0, 0, "exact")
    if oracle != "MC":
        raise ValueError(f"unknown oracle {oracle!r}")
    rng = np.random.default_rng() if rng is None else rng
    per_path = np.empty(nsim)
    chunk = max(1, 4_000_000 // k_max)
    for lo in range(0, nsim, chunk):
        c = min(chunk, nsim - lo)
        s = np.cumsum(np.asarray(model.sample(rng, (c, k_max)), dtype=float), axis=1)
        per_path[lo:lo + c] = (s > 0).mean(axis=1)
    return Estimate.from_samples(per_path, "mc")


def _series(x: float, k_max: int, rho: float, probs: np.ndarray) -> tuple[float, float]:
    """``sum_{k<=K} y^k/k (p_k - rho)`` with ``y = 1 - 1/x`` and a bound on the rest."""
    if x < 1:
        raise ValueError("x must be >= 1")
    probs = np.asarray(probs, dtype=float)[:k_max]
    if probs.size < k_max:
        raise ValueError("need one probability per k <= k_max")
    if x == 1:
        return 0.0, 0.0
    k = np.arange(1, k_max + 1)
    y = 1.0 - 1.0 / x
    w = np.exp(k * math.log(y)) / k
    dev = probs - rho
    head = float(math.fsum(w * dev))
    # sum_{k > K} y^k / k = log x - sum_{k <= K} y^k / k
    rest = max(0.0, math.log(x) - float(math.fsum(w)))
    sup_dev = float(np.max(np.abs(dev[-max(1, k_max // 4):])))
    return head, sup_dev * rest


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")


def slowly_varying_l1(model: StepModel | None, x: float, k_max: int, rho: float,
                      probs_ge0: np.ndarray | None = None) -> SlowlyVarying:
    """``Gamma(rho)**-1 exp(sum_k (1 - 1/x)**k / k (P(S_k >= 0) - rho))`` truncated at ``k_max``.

    The neglected part of the exponent is bounded by the largest
    ``|P(S_k >= 0) - rho|`` over the last quarter of the computed terms
    times ``sum_{k > k_max} (1 - 1/x)**k / k``.
    """
    _check_rho(rho)
    if probs_ge0 is None:
        probs_ge0, _ = positivity_probs(model, k_max, strict=False)
    head, bound = _series(x, k_max, rho, probs_ge0)
    value = math.exp(head) / special.gamma(rho)
    if math.expm1(bound) > REMAINDER_LIMIT:
        raise RuntimeError(f"series remainder bound {bound:.3g} too large at x={x}; raise k_max")
    return SlowlyVarying(value, bound)


def slowly_varying_l1_hat(tilted_model: StepModel | None, x: float, k_max: int, rho: float,
                          probs_gt0: np.ndarray | None = None) -> SlowlyVarying:
    """``Gamma(1 - rho)**-1 exp(-sum_k (1 - 1/x)**k / k (P(S_k > 0) - rho))`` truncated at ``k_max``."""
    _check_rho(rho)
    if probs_gt0 is None:
        probs_gt0, _ = positivity_probs(tilted_model, k_max, strict=True)
    head, bound = _series(x, k_max, rho, probs_gt0)
    value = math.exp(-head) / special.gamma(1.0 - rho)
    if math.expm1(bound) > REMAINDER_LIMIT:
        raise RuntimeError(f"series remainder bound {bound:.3g} too large at x={x}; raise k_max")
    return SlowlyVarying(value, bound)


def rate_B_n(tilted_model: StepModel, n, beta: float | None = None):
    """``B_n = beta / (a n) * P(X >= a n)`` with ``a = -E[X]`` under the tilted law."""
    a = -tilted_model.mean()
    if a <= 0:
        raise ValueError("B_n needs a negative tilted drift")
    if beta is None:
        beta = getattr(tilted_model, "tail_index", None)
        if beta is None:
            raise ValueError("tail index unknown for this model")
    n_arr = np.asarray(n, dtype=float)
    tails = np.vectorize(tilted_model.tail_prob, otypes=[float])(a * n_arr)
    out = beta / (a * n_arr) * tails
    return out if out.ndim else float(out)


def _check_stable(alpha: float, rho: float) -> None:
    if not 0.0 < alpha <= 2.0:
        raise ValueError("alpha must lie in (0, 2]")
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    if alpha == 2.0 and rho != 0.5:
        raise ValueError("alpha = 2 forces rho = 1/2")
    if alpha > 1.0 and not (1.0 - 1.0 / alpha <= rho <= 1.0 / alpha):
        raise ValueError(f"rho={rho} is not admissible for alpha={alpha}")


def _char_exponent(t: np.ndarray | float, alpha: float, rho: float):
    # log phi(t) = -|t|^alpha exp(-i pi alpha (rho - 1/2) sgn t), t >= 0 here
    return -(t**alpha) * np.exp(-1j * math.pi * alpha * (rho - 0.5))


def stable_density(x: float, alpha: float, rho: float) -> tuple[float, float]:
    """Density of the strictly stable law at ``x`` by Fourier inversion, with the quadrature error.

    Convention: ``log E[exp(i t Y)] = -|t|**alpha * exp(-i pi alpha (rho - 1/2) sgn t)``,
    so ``alpha = 2`` is the centred normal with variance 2 and ``rho = P(Y > 0)``.
    """
    _check_stable(alpha, rho)

    def integrand(t):
        return float(np.real(np.exp(-1j * t * x + _char_exponent(t, alpha, rho))))

    val, err = integrate.quad(integrand, 0.0, math.inf, limit=500, epsabs=1e-13, epsrel=1e-11)
    return val / math.pi, err / math.pi


def stable_density_at_zero(alpha: float, rho: float) -> tuple[float, float]:
    """``g_alpha(0)`` by quadrature of ``(1/pi) int_0^inf Re phi(t) dt`` and its error."""
    return stable_density(0.0, alpha, rho)


# ---------------------------------------------------------------------------
# predicted decay rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RatePrediction:
    """Log of the ``n``-dependent factor of the predicted decay, constants excluded."""

    regime: RegimeTag
    ns: tuple[int, ...]
    log_rates: tuple[float, ...]
    ingredients: dict = field(default_factory=dict)

    def log_rate_at(self, n: int) -> float:
        return self.log_rates[self.ns.index(n)]


def predicted_log_rate(regime: RegimeTag, report: TiltReport, f: FSpec, ingredients: dict,
                       n: int) -> float:
    """Log of the regime's ``n``-dependent decay factor at horizon ``n``.

    ``ingredients`` supplies what the regime needs: ``rho`` and ``l1`` (a
    callable) for the oscillating cases (``l1_hat`` for the boundary tilt),
    ``alpha`` for the interior tilt, and ``beta`` where a tail index enters.
    For the interior oscillating case ``A_n`` is taken as
    ``n**(-1 - 1/alpha)`` with the unknown slowly varying normaliser set to
    1, so only ratios across regimes sharing it are meaningful.
    """
    tag = RegimeTag(regime)
    log_rho = report.phi_at_lambda
    if tag is RegimeTag.OSC_LAMBDA_ZERO:
        rho = ingredients["rho"]
        return (rho - 1.0) * math.log(n) + math.log(ingredients["l1"](n))
    if tag is RegimeTag.OSC_INTERIOR:
        alpha = ingredients.get("alpha", 2.0)
        return n * log_rho - (1.0 + 1.0 / alpha) * math.log(n)
    if tag is RegimeTag.OSC_LAMBDA_EQ_THETA:
        rho = ingredients["rho"]
        return n * log_rho - rho * math.log(n) + math.log(ingredients["l1_hat"](n))
    if tag is RegimeTag.DRIFT_LAMBDA_EQ_THETA:
        return n * log_rho
    if tag is RegimeTag.DRIFT_LAMBDA_ZERO_HEAVY:
        tilted = report.tilted_model
        return math.log(tilted.tail_prob(-tilted.mean() * n))
    if tag is RegimeTag.DRIFT_INTERIOR_HEAVY:
        return n * log_rho + math.log(rate_B_n(report.tilted_model, n, ingredients.get("beta")))
    if tag is RegimeTag.DRIFTS_TO_INFINITY:
        return 0.0
    raise ValueError(f"no rate for regime {tag.value}")


def rate_prediction(model: StepModel, f: FSpec, ns: Sequence[int], *, k_max: int | None = None
                    ) -> RatePrediction:
    """Classify ``(model, f)`` and assemble the predicted log-rates at ``ns``."""
    reg = regime_classify(model, f)
    report = reg.report
    ns = tuple(int(n) for n in ns)
    k_max = k_max or max(1024, 2 * max(ns))
    ing: dict = {"Lambda": report.lambda_star, "varrho": report.rho_factor}
    tag = reg.tag
    if tag in (RegimeTag.OSC_LAMBDA_ZERO, RegimeTag.OSC_LAMBDA_EQ_THETA, RegimeTag.OSC_INTERIOR):
        walk_model = report.tilted_model
        rho = spitzer_rho(walk_model, min(k_max, 4096)).value
        ing["rho"] = rho
        ing["alpha"] = 2.0 if not getattr(walk_model, "heavy_tail", False) else walk_model.tail_index
        if tag is RegimeTag.OSC_LAMBDA_ZERO:
            p, _ = positivity_probs(walk_model, k_max, strict=False)
            ing["l1"] = lambda x: slowly_varying_l1(None, x, k_max, rho, p).value
        elif tag is RegimeTag.OSC_LAMBDA_EQ_THETA:
            p, _ = positivity_probs(walk_model, k_max, strict=True)
            ing["l1_hat"] = lambda x: slowly_varying_l1_hat(None, x, k_max, rho, p).value
    elif tag in (RegimeTag.DRIFT_LAMBDA_ZERO_HEAVY, RegimeTag.DRIFT_INTERIOR_HEAVY):
        ing["a"] = -report.tilted_model.mean()
        ing["beta"] = report.tilted_model.tail_index
    elif tag is RegimeTag.DRIFT_LAMBDA_EQ_THETA:
        ing["a"] = -report.tilted_mean
    rates = tuple(predicted_log_rate(tag, report, f, ing, n) for n in ns)
    snapshot = {k: v for k, v in ing.items() if not callable(v)}
    return RatePrediction(tag, ns, rates, snapshot)

