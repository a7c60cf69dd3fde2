"""Monte Carlo estimators for ``E[F(I_n)]``, passage-time tails and the limiting constants.

Three sampling strategies are used:

* plain simulation under the original law;
* the exponential change of measure
  ``E[F(I_n)] = rho**n * E_tilt[exp(-Lambda * S_n) * F(I_n)]``;
* conditional-tail importance sampling of one designated large step for
  heavy-tailed walks with negative drift.

Series constants are estimated term by term with an adaptive stop and a
geometric bound on the neglected tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.random import Generator
from scipy import special

from . import _batch, _kernels
from .conditioned import simulate_I_up
from .renewal import (
    Flavor,
    RenewalTable,
    expected_tau_minus,
    is_skipfree_down,
    renewal_estimate,
    skipfree_table,
)
from .results import Estimate
from .steps import StepModel, as_lattice, encode, negate
from .tilt import FSpec, TiltReport, find_lambda
from .walk import ladder_height_samples, tau_minus_batch

__all__ = [
    "Estimate",
    "ZGrid",
    "estimate_EF_plain",
    "estimate_EF_tilted",
    "estimate_EF_ladder",
    "estimate_tau_tail",
    "estimate_expected_tau",
    "default_v_table",
    "ladder_series",
    "estimate_C1",
    "estimate_C3",
    "estimate_drift_constant",
    "estimate_C4",
    "estimate_C5",
    "c5_term_closed_form",
    "estimate_bigjump_numerator",
]

MIN_SAMPLES = 200
STOP_REL = 1e-3
STOP_RUN = 4
Z975 = 1.959963984540054


def _fargs(f: FSpec):
    return float(f.K0), float(f.theta), float(f.c0)


def _sub_seeds(rng, count: int, tag: int) -> list[int]:
    return _batch.batch_seeds(_batch.master_seed(rng), count, tag)


def _from_logs(logs: np.ndarray, log_factor: float, method: str, **info) -> Estimate:
    """Estimate of ``exp(log_factor) * mean(exp(logs))`` computed with a max shift."""
    logs = np.asarray(logs, dtype=float).ravel()
    n = logs.size
    top = float(np.max(logs))
    w = np.exp(logs - top)
    mu = float(w.mean())
    rel = float(w.std(ddof=1) / math.sqrt(n)) / mu if n > 1 else math.inf
    total = top + math.log(mu) + log_factor
    if -700.0 < total < 700.0:
        v = math.exp(total)
        return Estimate(v, v * rel, n, method, info=dict(info))
    return Estimate(total, rel, n, method, log_domain=True, info=dict(info))


def _check_nsim(nsim: int) -> None:
    if nsim < MIN_SAMPLES:
        raise ValueError(f"nsim must be at least {MIN_SAMPLES}")


def _ef_logs(model: StepModel, f: FSpec, rungs: Sequence[int], nsim: int, rng, lam: float,
             workers: int, start: float = 0.0) -> np.ndarray:
    rungs = np.asarray(sorted(int(r) for r in rungs), dtype=np.int64)
    if rungs.size == 0 or rungs[0] < 1:
        raise ValueError("horizons must be >= 1")
    enc = encode(model)
    K0, theta, c0 = _fargs(f)
    master = _batch.master_seed(rng)

    def job(c, seed):
        return _kernels.ef_paths(*enc, rungs, float(start), float(lam), K0, theta, c0, c, seed)

    return _batch.concat(_batch.run(job, nsim, master, workers))


# ---------------------------------------------------------------------------
# E[F(I_n)]
# ---------------------------------------------------------------------------


def estimate_EF_plain(model: StepModel, f: FSpec, n: int, nsim: int,
                      rng: Generator | int | None = None, *, workers: int = 1,
                      start: float = 0.0) -> Estimate:
    """Sample mean of ``F(I_n)`` under the original law."""
    _check_nsim(nsim)
    logs = _ef_logs(model, f, [n], nsim, rng, 0.0, workers, start)
    return _from_logs(logs[:, 0], 0.0, "plain")


def estimate_EF_tilted(model: StepModel, f: FSpec, n: int, nsim: int,
                       rng: Generator | int | None = None, *, workers: int = 1,
                       report: TiltReport | None = None) -> Estimate:
    """``rho**n * E_tilt[exp(-Lambda S_n) F(I_n)]``; plain simulation when ``Lambda = 0``.

    Returns a log-domain estimate when ``rho**n`` leaves the float range.
    """
    report = find_lambda(model, f.theta) if report is None else report
    if report.lambda_star == 0.0:
        return estimate_EF_plain(model, f, n, nsim, rng, workers=workers)
    _check_nsim(nsim)
    logs = _ef_logs(report.tilted_model, f, [n], nsim, rng, report.lambda_star, workers)
    return _from_logs(logs[:, 0], n * report.phi_at_lambda, "tilted",
                      lambda_star=report.lambda_star)


def estimate_EF_ladder(model: StepModel, f: FSpec, rungs: Sequence[int], nsim: int,
                       rng: Generator | int | None = None, *, tilted: bool = False,
                       workers: int = 1, report: TiltReport | None = None) -> list[Estimate]:
    """Estimates at several horizons from one set of nested paths."""
    _check_nsim(nsim)
    rungs = sorted(int(r) for r in rungs)
    if tilted:
        report = find_lambda(model, f.theta) if report is None else report
    if not tilted or report.lambda_star == 0.0:
        logs = _ef_logs(model, f, rungs, nsim, rng, 0.0, workers)
        return [_from_logs(logs[:, j], 0.0, "plain") for j in range(len(rungs))]
    logs = _ef_logs(report.tilted_model, f, rungs, nsim, rng, report.lambda_star, workers)
    return [_from_logs(logs[:, j], n * report.phi_at_lambda, "tilted",
                       lambda_star=report.lambda_star) for j, n in enumerate(rungs)]


# ---------------------------------------------------------------------------
# passage times
# ---------------------------------------------------------------------------


def _bigjump_q(n: int, q0: float) -> np.ndarray:
    k = np.arange(1, n + 1, dtype=float)
    w = k**-2.0
    q = np.concatenate([[q0], (1.0 - q0) * w / w.sum()])
    cdf = np.cumsum(q)
    cdf[-1] = 1.0
    return cdf


def estimate_tau_tail(model: StepModel, n: int, nsim: int, rng: Generator | int | None = None,
                      *, method: str = "auto", start: float = 0.0, workers: int = 1,
                      threshold_frac: float = 0.5, q0: float = 0.05) -> Estimate:
    """``P_start(tau_0^- > n)``.

    ``method="plain"`` averages survival indicators.  ``method="bigjump"``
    (the default for heavy-tailed walks with negative drift) places the
    first step above ``threshold_frac * a * n`` at a random index ``k``
    drawn from ``q_0 = q0``, ``q_k ~ k**-2`` and reweights by the exact
    likelihood ratio of that event.
    """
    if n == 0:
        return Estimate(1.0, 0.0, 0, "exact")
    if n < 0:
        raise ValueError("n must be nonnegative")
    mean = model.mean()
    if method == "auto":
        method = "bigjump" if getattr(model, "heavy_tail", False) and mean < 0 else "plain"
    if method == "plain":
        hit, _ = tau_minus_batch(model, start, n, nsim, rng, workers)
        return Estimate.from_samples((hit < 0).astype(float), "plain")
    if method != "bigjump":
        raise ValueError(f"unknown method {method!r}")
    if mean >= 0:
        raise ValueError("big-jump sampling needs a negative drift")
    thr = threshold_frac * (-mean) * n
    p_big = model.tail_prob(thr)
    p_small = 1.0 - p_big
    if not 0.0 < p_big < 1.0:
        raise ValueError("threshold has no probability mass on one side")
    cdf = _bigjump_q(n, q0)
    enc = encode(model)
    master = _batch.master_seed(rng)

    def job(c, seed):
        return _kernels.bigjump_survival(*enc, float(start), int(n), float(thr), p_small, p_big,
                                         cdf, c, seed)

    w = _batch.concat(_batch.run(job, nsim, master, workers))
    return Estimate.from_samples(w, "bigjump", threshold=thr)


def estimate_expected_tau(model: StepModel, start: float, nsim: int, cap: int,
                          rng: Generator | int | None = None, *, workers: int = 1) -> Estimate:
    """``E_start[tau_0^-]`` by simulation with censoring at ``cap``."""
    return expected_tau_minus(model, start, nsim, cap, rng, workers)


# ---------------------------------------------------------------------------
# series machinery
# ---------------------------------------------------------------------------


def default_v_table(model: StepModel, rng: Generator | int | None = None, *,
                    n_chains: int = 4000, cap: int = 10_000, workers: int = 1) -> RenewalTable:
    """Exact renewal table for downward skip-free lattices, a Monte Carlo one otherwise."""
    if is_skipfree_down(model):
        lat = as_lattice(model)
        return skipfree_table(lat.spacing, 64 * lat.spacing)
    seeds = _sub_seeds(rng, 2, 11)
    pilot = ladder_height_samples(model, 2000, cap, seeds[0], workers)
    x_max = 32.0 * float(pilot.heights.mean())
    return renewal_estimate(model, Flavor.DESCENDING, x_max, n_chains, cap, seeds[1],
                            workers=workers)


@dataclass(frozen=True)
class _Stop:
    index: Optional[int]
    tail_bound: float
    ratio: float


def _series_stop(means: np.ndarray, ses: np.ndarray, first: int = 0, rel: float = STOP_REL,
                 run: int = STOP_RUN) -> _Stop:
    """First index after which ``run`` consecutive terms have upper CI below ``rel`` x sum."""
    total = 0.0
    streak = 0
    stop = None
    for i in range(means.size):
        total += means[i]
        if i >= first and means[i] + Z975 * ses[i] < rel * total:
            streak += 1
            if streak >= run:
                stop = i
                break
        else:
            streak = 0
    last = means.size - 1 if stop is None else stop
    tail, ratio = _geometric_tail(means[max(0, last - 3): last + 1])
    return _Stop(stop, tail, ratio)


def _geometric_tail(last: np.ndarray) -> tuple[float, float]:
    """Bound on the remaining sum from the decay of the last few terms."""
    last = np.asarray(last, dtype=float)
    if last.size < 2 or last[-1] <= 0:
        return 0.0, 0.0
    if last[0] <= 0:
        return math.inf, math.inf
    ratio = (last[-1] / last[0]) ** (1.0 / (last.size - 1))
    if ratio >= 1.0:
        return math.inf, ratio
    return float(last[-1] * ratio / (1.0 - ratio)), float(ratio)


def ladder_series(model: StepModel, f: FSpec, v_table: RenewalTable | None = None,
                  k_max: int = 512, nsim: int = 20_000, eps_up: float = 1e-6,
                  rng: Generator | int | None = None, *, workers: int = 1,
                  up_cap: int = 100_000, batch: int = 1024, method: str = "ladder-series"
                  ) -> Estimate:
    """``sum_k E[F(I_k + exp(-S_k) I_up); sigma_k^- = k]`` for ``k = 0..K``.

    ``I_up`` is drawn once per path from the walk conditioned to stay
    nonnegative started at 0; term ``k = 0`` is ``E[F(I_up)]``.
    """
    _check_nsim(nsim)
    s_table, s_up, s_paths = _sub_seeds(rng, 3, 21)
    if v_table is None:
        v_table = default_v_table(model, s_table, workers=workers)
    iup = simulate_I_up(model, v_table, 0.0, eps_up, up_cap, s_up, count=nsim, workers=workers)
    log_iup = np.log(iup.values)
    enc = encode(model)
    K0, theta, c0 = _fargs(f)

    def job(first, c, seed):
        t = _kernels.ladder_terms(*enc, int(k_max), log_iup[first:first + c], K0, theta, c0,
                                  c, seed)
        cum = np.cumsum(t, axis=1)
        return t.sum(0), (t * t).sum(0), cum.sum(0), (cum * cum).sum(0)

    parts = _batch.run(job, nsim, s_paths, workers, batch=batch, indexed=True)
    s1, s2, c1, c2 = (np.sum([p[j] for p in parts], axis=0) for j in range(4))
    means = s1 / nsim
    ses = np.sqrt(np.maximum(s2 / nsim - means**2, 0.0) * nsim / (nsim - 1) / nsim)
    cmean = c1 / nsim
    cses = np.sqrt(np.maximum(c2 / nsim - cmean**2, 0.0) * nsim / (nsim - 1) / nsim)
    stop = _series_stop(means, ses)
    if stop.index is None and not math.isfinite(stop.tail_bound):
        raise RuntimeError(f"series terms do not decay by k_max={k_max}")
    K = k_max if stop.index is None else stop.index
    trace = tuple((float(m), float(s)) for m, s in zip(means[:K + 1], ses[:K + 1]))
    return Estimate(float(cmean[K]), float(cses[K]), nsim, method, trace=trace,
                    info={"K": K, "stopped": stop.index is not None,
                          "tail_bound": stop.tail_bound, "tail_ratio": stop.ratio,
                          "up_truncation_rate": iup.truncation_rate})


def estimate_C1(model: StepModel, f: FSpec, v_table: RenewalTable | None = None,
                k_max: int = 512, nsim: int = 20_000, eps_up: float = 1e-6,
                rng: Generator | int | None = None, *, workers: int = 1,
                up_cap: int = 100_000) -> Estimate:
    """Limiting constant of ``E[F(I_n)] / P(tau_0^- > n)`` when ``Lambda = 0`` and the walk oscillates."""
    return ladder_series(model, f, v_table, k_max, nsim, eps_up, rng, workers=workers,
                         up_cap=up_cap, method="C1")


def estimate_C3(model: StepModel, f: FSpec, k_max: int = 512, nsim: int = 20_000,
                eps_up: float = 1e-6, rng: Generator | int | None = None, *,
                workers: int = 1, vhat_table: RenewalTable | None = None,
                report: TiltReport | None = None, up_cap: int = 100_000) -> Estimate:
    """The ladder series on the dual of the tilted walk with ``(1 + x)**-Lambda``.

    ``vhat_table`` is the descending renewal function of the dual walk
    (the ascending one of the tilted walk); built automatically if absent.
    """
    report = find_lambda(model, f.theta) if report is None else report
    lam = report.lambda_star
    if lam <= 0:
        raise ValueError("C3 needs a positive tilt")
    dual = negate(report.tilted_model)
    return ladder_series(dual, FSpec(1.0, lam, 1.0), vhat_table, k_max, nsim, eps_up, rng,
                         workers=workers, up_cap=up_cap, method="C3")


def _i_hat_infinity(dual: StepModel, nsim: int, seed: int, eps: float, horizon: int,
                    workers: int, window: int = 256):
    enc = encode(dual)

    def job(c, s):
        return _kernels.i_infinity(*enc, 0.0, float(eps), int(window), int(horizon), c, s)

    parts = _batch.run(job, nsim, seed, workers)
    return _batch.concat([p[0] for p in parts]), _batch.concat([p[1] for p in parts])


def estimate_drift_constant(model: StepModel, f: FSpec, horizon: int = 100_000,
                            nsim: int = 20_000, rng: Generator | int | None = None, *,
                            eps: float = 1e-6, workers: int = 1,
                            report: TiltReport | None = None) -> Estimate:
    """``K0 * E_tilt[(1 + I_hat_inf)**-theta]`` with ``I_hat`` from the dual tilted walk."""
    _check_nsim(nsim)
    report = find_lambda(model, f.theta) if report is None else report
    dual = negate(report.tilted_model)
    if dual.mean() <= 0:
        raise ValueError("the dual tilted walk must drift to +infinity")
    log_i, trunc = _i_hat_infinity(dual, nsim, _batch.master_seed(rng), eps, horizon, workers)
    vals = f.K0 * np.exp(-f.theta * np.logaddexp(0.0, log_i))
    return Estimate.from_samples(vals, "drift-constant", truncation_rate=float(trunc.mean()))


# ---------------------------------------------------------------------------
# heavy-tailed drift regimes
# ---------------------------------------------------------------------------


def _drift_a(model: StepModel) -> float:
    a = -model.mean()
    if a <= 0:
        raise ValueError("needs a negative drift")
    return a


def estimate_bigjump_numerator(model: StepModel, f: FSpec, n: int, k: int, nsim: int,
                               rng: Generator | int | None = None, *, workers: int = 1,
                               threshold: float | None = None) -> Estimate:
    """``E[F(I_n); X_k >= a n]`` with ``X_k`` drawn from its conditional tail.

    The estimate is ``P(X >= a n)`` times the conditional mean; ``info``
    carries the conditional mean itself as ``ratio``.
    """
    if k > n or k < 1:
        return Estimate(0.0, 0.0, 0, "bigjump-numerator")
    _check_nsim(nsim)
    thr = _drift_a(model) * n if threshold is None else threshold
    mass = model.tail_prob(thr)
    if mass <= 0:
        raise ValueError("conditioning event has zero probability")
    enc = encode(model)
    K0, theta, c0 = _fargs(f)
    master = _batch.master_seed(rng)

    def job(c, seed):
        return _kernels.bigjump_ef(*enc, int(n), int(k), float(thr), float(mass), K0, theta, c0,
                                   c, seed)

    vals = _batch.concat(_batch.run(job, nsim, master, workers))
    cond = Estimate.from_samples(vals, "bigjump-conditional")
    return Estimate(cond.value * mass, cond.stderr * mass, nsim, "bigjump-numerator",
                    info={"ratio": cond.value, "ratio_stderr": cond.stderr, "tail": mass})


def estimate_C4(model: StepModel, f: FSpec, k_max: int, n_ladder: Sequence[int], nsim: int,
                rng: Generator | int | None = None, *, workers: int = 1,
                strict: bool = True) -> Estimate:
    """``sum_{k <= k_max} E[F(I_{k-1} + exp(-S_{k-1} - X) I~_n) | X >= a n]`` per horizon.

    ``trace`` lists ``(n, value, stderr)`` for every horizon; the estimate is
    the last one.  The trace should be monotone in ``n`` in the direction
    shown by the ``k = 1`` term; with ``strict`` a step against it by more
    than three combined standard errors raises.
    """
    _check_nsim(nsim)
    a = _drift_a(model)
    n_ladder = sorted(int(n) for n in n_ladder)
    enc = encode(model)
    K0, theta, c0 = _fargs(f)
    seeds = _sub_seeds(rng, len(n_ladder) * k_max, 31)
    trace, terms = [], []
    for i, n in enumerate(n_ladder):
        thr = a * n
        mass = model.tail_prob(thr)
        if mass <= 0:
            raise ValueError(f"P(X >= {thr}) = 0")
        row = []
        for k in range(1, k_max + 1):
            seed = seeds[i * k_max + k - 1]

            def job(c, s, k=k):
                return _kernels.c4_samples(*enc, int(k), int(n), float(thr), float(mass), K0,
                                           theta, c0, c, s)

            vals = _batch.concat(_batch.run(job, nsim, seed, workers))
            row.append(Estimate.from_samples(vals, "C4-term"))
        total = math.fsum(e.value for e in row)
        se = math.sqrt(math.fsum(e.stderr**2 for e in row))
        trace.append((n, total, se))
        terms.append(tuple((e.value, e.stderr) for e in row))
    # the direction of monotonicity is taken from the k = 1 term
    direction = 1.0 if terms[-1][0][0] >= terms[0][0][0] else -1.0
    breaks = [j for j in range(1, len(trace))
              if direction * (trace[j - 1][1] - trace[j][1])
              > 3.0 * math.hypot(trace[j][2], trace[j - 1][2])]
    if breaks and strict:
        raise RuntimeError(f"C4 trace is not monotone at horizons {[trace[j][0] for j in breaks]}")
    last = trace[-1]
    return Estimate(last[1], last[2], nsim * k_max, "C4", trace=tuple(trace),
                    info={"terms": tuple(terms), "monotone": not breaks,
                          "direction": "non-decreasing" if direction > 0 else "non-increasing",
                          "a": a})


@dataclass(frozen=True)
class ZGrid:
    """Quadrature specification for the shift integral.

    ``z_max`` is the half-width, ``density`` the number of nodes per unit
    length; ``z_max`` is doubled up to ``max_doublings`` times until the
    analytic tail bounds fall below ``rel_tol`` of the integral.
    """

    z_max: float = 8.0
    density: float = 16.0
    rel_tol: float = 1e-3
    max_doublings: int = 8


def _shift_profile(t: np.ndarray, lam: float, theta: float) -> np.ndarray:
    # exp(-lam t) (1 + exp(-t))**-theta, evaluated in log space
    return np.exp(-lam * t - theta * np.logaddexp(0.0, -t))


def _shift_integral(lam: float, theta: float, grid: ZGrid) -> tuple[float, float, float]:
    """Trapezoid integral of the shift profile, its Richardson error and tail bound."""
    z = grid.z_max
    for _ in range(grid.max_doublings + 1):
        m = max(2, int(math.ceil(2 * z * grid.density)))
        t = np.linspace(-z, z, 2 * (m // 2) + 1)
        g = _shift_profile(t, lam, theta)
        full = float(np.trapezoid(g, t))
        half = float(np.trapezoid(g[::2], t[::2]))
        tail = math.exp(-lam * z) / lam + math.exp(-(theta - lam) * z) / (theta - lam)
        if tail < grid.rel_tol * full:
            return full, abs(full - half) / 3.0, tail
        z *= 2.0
    raise RuntimeError(f"shift integral not converged with z_max={z / 2:g}")


def c5_term_closed_form(lam: float, theta: float) -> float:
    """Exact value of the shift integral, the Beta function ``B(lam, theta - lam)``."""
    return float(special.beta(lam, theta - lam))


def estimate_C5(model: StepModel, f: FSpec, k_max: int = 64, z_grid: ZGrid | None = None,
                nsim: int = 20_000, rng: Generator | int | None = None, *,
                workers: int = 1, eps: float = 1e-6, horizon: int = 100_000,
                report: TiltReport | None = None) -> Estimate:
    """``sum_k int E_tilt[exp(-Lambda (S_k + z)) F(I_k + exp(-S_k - z)(1 + I_hat_inf))] dz``.

    For each sample the integration variable is shifted to centre the
    integrand at its peak, ``exp(-z) (1 + I_hat) = c0 + I_k``; after the
    shift every sample shares the profile ``exp(-Lambda t) (1 + exp(-t))**-theta``,
    which is integrated by the trapezoid rule on ``[-z_max, z_max]``.
    The remaining sample factor is ``K0 (c0 + I_k)**(Lambda - theta) (1 + I_hat)**-Lambda``.
    """
    _check_nsim(nsim)
    report = find_lambda(model, f.theta) if report is None else report
    lam, theta = report.lambda_star, f.theta
    if not 0.0 < lam < theta:
        raise ValueError("C5 needs 0 < Lambda < theta")
    tilted = report.tilted_model
    dual = negate(tilted)
    if dual.mean() <= 0:
        raise ValueError("the dual tilted walk must drift to +infinity")
    quad, quad_err, tail = _shift_integral(lam, theta, z_grid or ZGrid())
    enc = encode(tilted)
    seeds = _sub_seeds(rng, 2 * k_max, 41)
    trace = []
    total_trunc = 0.0
    for k in range(1, k_max + 1):
        def job(c, s, k=k):
            return _kernels.prefix_paths(*enc, int(k), c, s)

        parts = _batch.run(job, nsim, seeds[2 * k - 2], workers)
        log_ik = _batch.concat([p[1] for p in parts])
        log_j, trunc = _i_hat_infinity(dual, nsim, seeds[2 * k - 1], eps, horizon, workers)
        total_trunc += float(trunc.mean())
        vals = f.K0 * np.exp((lam - theta) * np.logaddexp(math.log(f.c0), log_ik)
                             - lam * np.logaddexp(0.0, log_j))
        est = Estimate.from_samples(vals * quad, "C5-term")
        trace.append((est.value, est.stderr))
        means = np.array([t[0] for t in trace])
        ses = np.array([t[1] for t in trace])
        stop = _series_stop(means, ses)
        if stop.index is not None:
            break
    else:
        if not math.isfinite(stop.tail_bound):
            raise RuntimeError(f"C5 terms do not decay by k_max={k_max}")
    value = math.fsum(t[0] for t in trace)
    se = math.sqrt(math.fsum(t[1] ** 2 for t in trace))
    rel_quad = quad_err / quad
    return Estimate(value, se, nsim * len(trace), "C5", trace=tuple(trace),
                    info={"K": len(trace), "stopped": stop.index is not None,
                          "tail_bound": stop.tail_bound, "quad": quad,
                          "quad_rel_error": rel_quad, "z_tail_bound": tail / quad,
                          "truncation_rate": total_trunc / len(trace),
                          "lambda_star": lam})
