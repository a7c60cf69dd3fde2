"""Exact oracle suites: small-instance identities every numeric layer must satisfy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .asymptote import slowly_varying_l1, stable_density_at_zero
from .conditioned import up_row
from .estimators import ZGrid, _shift_integral, c5_term_closed_form
from .renewal import laplace_weighted_integral, skipfree_table
from .steps import Gaussian, Lattice
from .tilt import FSpec, esscher, find_lambda
from .walk import enumerate_paths, exact_lattice_dp

__all__ = ["OracleResult", "SUITES", "run_all"]

SYMMETRIC = Lattice(1.0, (-1, 1), (0.5, 0.5))
# negative drift, so the tilt is interior
DRIFTING = Lattice(1.0, (-1, 1, 2), (0.6, 0.3, 0.1))
# mean zero and downward skip-free
SKEWED = Lattice(1.0, (-1, 1, 2), (0.55, 0.35, 0.1))


@dataclass(frozen=True)
class OracleResult:
    name: str
    error: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(self.error <= self.tol)


def _log_i(paths: np.ndarray) -> np.ndarray:
    s = paths[:, 1:]
    top = -s.min(axis=1, keepdims=True)
    return top[:, 0] + np.log(np.exp(-s - top).sum(axis=1))


def dp_survival() -> OracleResult:
    """Survival of the symmetric walk against the central binomial formula."""
    dp = exact_lattice_dp(SYMMETRIC, 20, floor_at_zero=True)
    err = max(abs(dp.survival(n) - math.comb(n, n // 2) / 2.0**n) for n in range(21))
    return OracleResult("dp_survival", err, 1e-12)


def change_of_measure() -> OracleResult:
    """``E F(I_n) = rho**n E_tilt[exp(-Lambda S_n) F(I_n)]`` by full enumeration."""
    f = FSpec(1.0, 1.0, 1.0)
    rep = find_lambda(DRIFTING, f.theta)
    lam = rep.lambda_star
    err = 0.0
    for n in range(1, 9):
        plain = enumerate_paths(DRIFTING, n, lambda p: f.from_log(_log_i(p)))
        tilted = enumerate_paths(
            rep.tilted_model, n, lambda p: np.exp(-lam * p[:, -1]) * f.from_log(_log_i(p)))
        err = max(err, abs(plain - rep.rho_factor**n * tilted) / plain)
    return OracleResult("change_of_measure", err, 1e-10)


def duality() -> OracleResult:
    """``E_l[exp(-l S_n) I_n**-l] = E_l[(1 + I_hat_{n-1})**-l]`` on the symmetric walk."""
    err = 0.0
    for lam in (math.log(2.0), 1.0):
        tilted = esscher(SYMMETRIC, lam)
        for n in range(1, 11):
            left = enumerate_paths(tilted, n, lambda p: np.exp(-lam * (p[:, -1] + _log_i(p))))

            def right(p, n=n):
                hat = np.exp(p[:, 1:n]).sum(axis=1)
                return (1.0 + hat) ** -lam

            err = max(err, abs(left - enumerate_paths(tilted, n, right)))
    return OracleResult("duality", err, 1e-10)


def harmonic_rows() -> OracleResult:
    """Rows of the h-transform built on the exact skip-free renewal function sum to one."""
    table = skipfree_table(1.0, 256.0)
    err = 0.0
    for model in (SYMMETRIC, SKEWED):
        for x in range(0, 200):
            err = max(err, abs(up_row(float(x), model, table)[1].sum() - 1.0))
    return OracleResult("harmonic_rows", err, 1e-10)


def weighted_integral() -> OracleResult:
    """``int exp(-x) V(dx)`` for ``V(x) = floor(x) + 1`` equals ``1 / (1 - e**-1)``."""
    table = skipfree_table(1.0, 64.0)
    val, _ = laplace_weighted_integral(table, 1.0)
    return OracleResult("weighted_integral", abs(val - 1.0 / (1.0 - math.exp(-1.0))), 1e-10)


def gaussian_tilt() -> OracleResult:
    """``N(-2, 1)`` with ``theta = 1``: ``Lambda = 1`` and ``rho = exp(-3/2)``."""
    rep = find_lambda(Gaussian(-2.0, 1.0), 1.0)
    err = max(abs(rep.lambda_star - 1.0), abs(rep.rho_factor - math.exp(-1.5)))
    return OracleResult("gaussian_tilt", err, 1e-8)


def stable_zero() -> OracleResult:
    """Quadrature ``g(0)`` against ``Gamma(1 + 1/alpha) sin(pi rho) / pi``."""
    err = 0.0
    for alpha, rho in ((2.0, 0.5), (1.0, 0.5), (1.5, 0.4), (0.7, 0.3), (0.5, 0.8)):
        val, _ = stable_density_at_zero(alpha, rho)
        exact = math.gamma(1.0 + 1.0 / alpha) * math.sin(math.pi * rho) / math.pi
        err = max(err, abs(val - exact))
    return OracleResult("stable_zero", err, 1e-9)


def shift_integral() -> OracleResult:
    """Trapezoid shift integral against the Beta function."""
    err = 0.0
    for lam, theta in ((0.5, 1.0), (0.3, 2.0), (1.2, 1.5)):
        val, _, _ = _shift_integral(lam, theta, ZGrid(rel_tol=1e-6))
        exact = c5_term_closed_form(lam, theta)
        err = max(err, abs(val - exact) / exact)
    return OracleResult("shift_integral", err, 1e-4)


def slowly_varying_at_one() -> OracleResult:
    """``l_1(1) = 1 / Gamma(rho)``."""
    probs = np.full(64, 0.3)
    val = slowly_varying_l1(None, 1.0, 64, 0.5, probs).value
    return OracleResult("slowly_varying_at_one", abs(val - 1.0 / math.gamma(0.5)), 1e-15)


SUITES: dict[str, Callable[[], OracleResult]] = {
    "dp_survival": dp_survival,
    "change_of_measure": change_of_measure,
    "duality": duality,
    "harmonic_rows": harmonic_rows,
    "weighted_integral": weighted_integral,
    "gaussian_tilt": gaussian_tilt,
    "stable_zero": stable_zero,
    "shift_integral": shift_integral,
    "slowly_varying_at_one": slowly_varying_at_one,
}


def run_all() -> list[OracleResult]:
    return [suite() for suite in SUITES.values()]
