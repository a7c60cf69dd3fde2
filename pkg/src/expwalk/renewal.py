"""Renewal functions of the strict ladder processes and their Laplace-weighted measures."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

from . import _batch
from .results import Estimate
from .steps import StepModel, as_lattice, negate
from .walk import tau_minus_batch

__all__ = [
    "Flavor",
    "Provenance",
    "RenewalTable",
    "renewal_exact_skipfree",
    "skipfree_table",
    "renewal_estimate",
    "laplace_weighted_integral",
    "MuMeasure",
    "mu_sampler",
    "expected_tau_minus",
    "is_skipfree_down",
]

MIN_POINTS = 64
MAX_POINTS = 1024


class Flavor(str, enum.Enum):
    DESCENDING = "Descending"
    ASCENDING = "Ascending"


class Provenance(str, enum.Enum):
    EXACT_SKIP_FREE = "ExactSkipFree"
    EXACT_MEAN_FORMULA = "ExactMeanFormula"
    MONTE_CARLO = "MonteCarlo"


@dataclass(frozen=True)
class RenewalTable:
    """Gridded renewal function.

    ``step_mode`` tables are right-continuous staircases (lattice walks);
    otherwise values are linearly interpolated.  Beyond the grid the table
    continues with ``slope`` (as a staircase of the last grid period in
    step mode).  Below zero the function vanishes.
    """

    flavor: Flavor
    grid: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    provenance: Provenance
    step_mode: bool
    slope: float
    censored_fraction: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.size < 2 or g[0] != 0.0 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be increasing, start at 0 and have >= 2 points")
        if v.shape != g.shape or v[0] != 1.0:
            raise ValueError("values must match the grid with V(0) = 1")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))

    @property
    def x_max(self) -> float:
        return float(self.grid[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        g, v = self.grid, self.values
        out = np.empty_like(x)
        inside = (x >= -1e-9) & (x < g[-1])
        beyond = x >= g[-1]
        if self.step_mode:
            idx = np.clip(np.searchsorted(g, x[inside] + 1e-9, side="right") - 1, 0, g.size - 1)
            out[inside] = v[idx]
            h = g[-1] - g[-2]
            out[beyond] = v[-1] + self.slope * h * np.floor((x[beyond] - g[-1]) / h + 1e-9)
        else:
            out[inside] = np.interp(x[inside], g, v)
            out[beyond] = v[-1] + self.slope * (x[beyond] - g[-1])
        out[x < -1e-9] = 0.0
        return out if out.ndim else float(out)

    def kernel_args(self):
        return self.grid, self.values, float(self.slope), bool(self.step_mode)

    def rows(self):
        """``(x, value, stderr)`` triples for CSV output."""
        return list(zip(self.grid.tolist(), self.values.tolist(), self.stderr.tolist()))


def renewal_exact_skipfree(spacing: float, x):
    """``V(x) = floor(x / spacing) + 1`` for ``x >= 0`` and 0 below."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    x = np.asarray(x, dtype=float)
    out = np.where(x < 0, 0.0, np.floor(x / spacing + 1e-9) + 1.0)
    return out if out.ndim else float(out)


def is_skipfree_down(model: StepModel) -> bool:
    lat = as_lattice(model)
    if lat is None:
        return False
    downs = [o for o, p in zip(lat.offsets, lat.probs) if o < 0 and p > 0]
    return downs == [-1]


def skipfree_table(spacing: float, x_max: float, flavor: Flavor = Flavor.DESCENDING) -> RenewalTable:
    n = min(MAX_POINTS, max(MIN_POINTS, int(math.floor(x_max / spacing + 1e-9)) + 1))
    grid = spacing * np.arange(n)
    return RenewalTable(flavor, grid, renewal_exact_skipfree(spacing, grid), np.zeros(n),
                        Provenance.EXACT_SKIP_FREE, True, 1.0 / spacing)


def _grid_for(model: StepModel, x_max: float, points: int) -> tuple[np.ndarray, bool]:
    points = min(MAX_POINTS, max(MIN_POINTS, int(points)))
    lat = as_lattice(model)
    if lat is None:
        return np.linspace(0.0, x_max, points), False
    h = lat.spacing
    cells = max(int(math.floor(x_max / h + 1e-9)), points - 1)
    stride = max(1, math.ceil(cells / (MAX_POINTS - 1)))
    n = cells // stride + 1
    return h * stride * np.arange(n), stride == 1


def _fit_slope(grid: np.ndarray, values: np.ndarray) -> float:
    q = max(2, grid.size // 4)
    g, v = grid[-q:], values[-q:]
    slope = float(np.polyfit(g, v, 1)[0])
    return max(slope, 0.0)


def renewal_estimate(model: StepModel, flavor: Flavor | str, x_max: float, n_chains: int,
                     cap: int, rng: Generator | int | None = None, *, points: int = MIN_POINTS,
                     workers: int = 1, max_rounds: int = 100_000) -> RenewalTable:
    """Monte Carlo renewal function on ``[0, x_max]``.

    Each chain draws i.i.d. first strict ladder heights ``H_1, H_2, ...``
    (descending for ``V``, descending for the negated walk for ``V_hat``)
    and counts renewals ``H_1 + ... + H_m <= x``; ``V(x)`` is one plus the
    mean count.  A ladder draw censored at ``cap`` is redrawn unless the
    walk drifts away from the ladder direction, in which case it ends the
    chain.  The censoring rate is kept on the table.
    """
    flavor = Flavor(flavor)
    if x_max <= 0 or n_chains < 2:
        raise ValueError("x_max must be positive and n_chains >= 2")
    walk_model = model if flavor is Flavor.DESCENDING else negate(model)
    defective = walk_model.mean() > 0
    grid, step_mode = _grid_for(walk_model, x_max, points)
    top = grid[-1]
    master = _batch.master_seed(rng)

    cum = np.zeros(n_chains)
    active = np.arange(n_chains)
    events_chain, events_pos = [], []
    drawn = censored = 0
    for rnd in range(max_rounds):
        if active.size == 0:
            break
        hit, pos = tau_minus_batch(walk_model, 0.0, cap, active.size,
                                   _batch.batch_seeds(master, 1, rnd)[0], workers)
        ok = hit >= 0
        drawn += active.size
        censored += int((~ok).sum())
        if drawn >= 64 and censored > 0.5 * drawn:
            raise RuntimeError(f"{censored / drawn:.1%} of ladder chains censored at cap={cap}")
        cum_new = cum[active] - np.where(ok, pos, 0.0)
        inside = ok & (cum_new <= top + 1e-9 * max(1.0, top))
        events_chain.append(active[inside])
        events_pos.append(cum_new[inside])
        cum[active] = cum_new
        # a censored draw is redrawn when ladder epochs are a.s. finite and
        # ends the (defective) renewal chain otherwise
        active = active[inside | (~ok & (not defective))]
    else:
        raise RuntimeError("renewal chains did not leave the grid; ladder heights may vanish")

    chain = np.concatenate(events_chain) if events_chain else np.zeros(0, int)
    where = np.concatenate(events_pos) if events_pos else np.zeros(0)
    # first grid index counting each renewal (right-continuous)
    idx = np.searchsorted(grid, where - 1e-9 * np.maximum(1.0, grid[-1]), side="left")
    counts = np.zeros((n_chains, grid.size))
    np.add.at(counts, (chain, idx), 1.0)
    counts = np.cumsum(counts, axis=1)
    values = 1.0 + counts.mean(axis=0)
    stderr = counts.std(axis=0, ddof=1) / math.sqrt(n_chains)
    return RenewalTable(flavor, grid, values, stderr, Provenance.MONTE_CARLO, step_mode,
                        _fit_slope(grid, values), censored / max(drawn, 1))


# ---------------------------------------------------------------------------
# Laplace-weighted integrals and the measures mu
# ---------------------------------------------------------------------------


def _seg_exp(lam: float, a, b):
    """``int_a^b exp(-lam z) dz`` (vectorised, ``b`` may be inf)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if lam == 0.0:
        return b - a
    return np.exp(-lam * a) * -np.expm1(-lam * (b - a)) / lam


def _seg_lin(lam: float, a, b):
    """``int_a^b (z - a) exp(-lam z) dz``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if lam == 0.0:
        return 0.5 * (b - a) ** 2
    ea = np.exp(-lam * a)
    with np.errstate(invalid="ignore"):
        eb_term = np.where(np.isinf(b), 0.0, (b - a) * np.exp(-lam * b) / lam)
    return ea * -np.expm1(-lam * (b - a)) / lam**2 - eb_term


def _pieces(table: RenewalTable, lam: float, y: float):
    """Masses of ``exp(-lam z) V(z)`` over grid cells clipped to ``[0, y]``."""
    g, v = table.grid, table.values
    lo, hi = g[:-1], np.minimum(g[1:], y)
    live = hi > lo
    if table.step_mode:
        mass = np.where(live, v[:-1] * _seg_exp(lam, lo, np.maximum(hi, lo)), 0.0)
    else:
        s = np.diff(v) / np.diff(g)
        hh = np.maximum(hi, lo)
        mass = np.where(live, v[:-1] * _seg_exp(lam, lo, hh) + s * _seg_lin(lam, lo, hh), 0.0)
    return mass


def _tail(table: RenewalTable, lam: float, y: float) -> float:
    """Mass beyond the grid, using the table's own continuation."""
    g, v = table.grid, table.values
    top = g[-1]
    if y <= top:
        return 0.0
    if table.step_mode:
        h = g[-1] - g[-2]
        q = math.exp(-lam * h)
        delta = table.slope * h
        if math.isinf(y):
            first = math.exp(-lam * top) * (1.0 - q) / lam
            return first * (v[-1] / (1.0 - q) + delta * q / (1.0 - q) ** 2)
        n_full = int(math.floor((y - top) / h))
        j = np.arange(n_full)
        starts = top + j * h
        total = float(np.sum((v[-1] + delta * j) * _seg_exp(lam, starts, starts + h)))
        rest = top + n_full * h
        return total + (v[-1] + delta * n_full) * float(_seg_exp(lam, rest, y))
    return float(v[-1] * _seg_exp(lam, top, y) + table.slope * _seg_lin(lam, top, y))


def laplace_weighted_integral(table: RenewalTable, lam: float, y: float = math.inf
                              ) -> tuple[float, float]:
    """``int_0^y exp(-lam z) V(z) dz`` and an error estimate.

    Cells are integrated exactly for the table's interpolant.  The error
    combines the gap to the trapezoid rule (a discretisation proxy, zero
    for staircases) with the propagated Monte Carlo error of the values.
    """
    if y < 0:
        raise ValueError("y must be nonnegative")
    if math.isinf(y) and lam <= 0:
        raise ValueError("lam must be positive for an infinite upper limit")
    if y == 0:
        return 0.0, 0.0
    mass = _pieces(table, lam, y)
    value = float(math.fsum(mass)) + _tail(table, lam, y)
    err = 0.0
    if not table.step_mode:
        g = table.grid
        hi = np.minimum(g[1:], y)
        live = hi > g[:-1]
        f0 = np.exp(-lam * g[:-1]) * table.values[:-1]
        f1 = np.exp(-lam * hi) * table(hi)
        trap = float(np.sum(np.where(live, 0.5 * (f0 + f1) * (hi - g[:-1]), 0.0)))
        err += abs(trap - float(mass.sum()))
    if np.any(table.stderr > 0):
        w = _seg_exp(lam, table.grid[:-1], np.minimum(table.grid[1:], y))
        err += float(np.sum(np.clip(w, 0, None) * table.stderr[:-1]))
    return value, err


class MuMeasure:
    """Probability measure proportional to ``exp(-lam x) V(x) dx`` on ``[0, inf)``."""

    def __init__(self, table: RenewalTable, lam: float):
        if lam <= 0:
            raise ValueError("lam must be positive")
        self.table, self.lam = table, float(lam)
        self._cells = _pieces(table, lam, math.inf)
        self._tail = _tail(table, lam, math.inf)
        self.total = float(math.fsum(self._cells)) + self._tail
        if not (math.isfinite(self.total) and self.total > 0):
            raise ValueError("the weighted integral is not finite and positive")
        self._probs = np.append(self._cells, self._tail) / self.total

    def cdf(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x)
        out = np.array([laplace_weighted_integral(self.table, self.lam, max(xi, 0.0))[0]
                        if math.isfinite(xi) else self.total for xi in flat]) / self.total
        return out.reshape(x.shape) if x.ndim else float(out[0])

    def sample(self, rng: Generator, size=None):
        count = 1 if size is None else int(np.prod(size))
        lam, g, v = self.lam, self.table.grid, self.table.values
        which = rng.choice(self._probs.size, size=count, p=self._probs)
        out = np.empty(count)
        cell = which < g.size - 1
        if np.any(cell):
            i = which[cell]
            out[cell] = self._in_cell(rng, g[i], g[i + 1], v[i], v[i + 1])
        if np.any(~cell):
            out[~cell] = self._in_tail(rng, int((~cell).sum()))
        return float(out[0]) if size is None else out.reshape(size)

    def _trunc_exp(self, rng: Generator, a, b):
        lam = self.lam
        u = rng.random(np.shape(a))
        return a - np.log1p(-u * -np.expm1(-lam * (b - a))) / lam

    def _in_cell(self, rng: Generator, a, b, va, vb):
        z = self._trunc_exp(rng, a, b)
        if self.table.step_mode:
            return z
        # rejection on the linear factor, exact for piecewise-linear V
        out = z
        todo = np.ones(z.size, bool)
        top = np.maximum(va, vb)
        while True:
            vz = va[todo] + (vb[todo] - va[todo]) * (out[todo] - a[todo]) / (b[todo] - a[todo])
            acc = rng.random(vz.size) * top[todo] <= vz
            idx = np.flatnonzero(todo)
            todo[idx[acc]] = False
            if not todo.any():
                return out
            out[todo] = self._trunc_exp(rng, a[todo], b[todo])

    def _in_tail(self, rng: Generator, count: int):
        lam, t = self.lam, self.table
        g, v = t.grid, t.values
        top = g[-1]
        if t.step_mode:
            h = g[-1] - g[-2]
            q = math.exp(-lam * h)
            delta = t.slope * h
            w_geo = v[-1] / (1.0 - q)
            w_lin = delta * q / (1.0 - q) ** 2
            geo = rng.random(count) * (w_geo + w_lin) < w_geo
            j = np.where(geo, rng.geometric(1.0 - q, count) - 1,
                         1 + rng.negative_binomial(2, 1.0 - q, count))
            a = top + j * h
            return self._trunc_exp(rng, a, a + h)
        w_exp = v[-1] / lam
        w_gam = t.slope / lam**2
        pick = rng.random(count) * (w_exp + w_gam) < w_exp
        return top + np.where(pick, rng.exponential(1.0 / lam, count),
                              rng.gamma(2.0, 1.0 / lam, count))


def mu_sampler(table: RenewalTable, lam: float, rng: Generator, size=None):
    """Draw from the normalised measure ``exp(-lam x) V(x) dx``."""
    return MuMeasure(table, lam).sample(rng, size)


def expected_tau_minus(model: StepModel, start: float, nsim: int, cap: int,
                       rng: Generator | int | None = None, workers: int = 1) -> Estimate:
    """Monte Carlo ``E_x[tau_0^-]`` with the censoring rate in ``info``."""
    hit, _ = tau_minus_batch(model, start, cap, nsim, rng, workers)
    cens = float((hit < 0).mean())
    times = np.where(hit < 0, cap, hit).astype(float)
    return Estimate.from_samples(times, "mc-first-passage", censored_fraction=cens)
