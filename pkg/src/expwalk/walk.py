"""Random-walk paths, their functionals, and exact small-instance oracles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.random import Generator
from scipy.special import logsumexp

from . import _batch, _kernels
from .steps import StepModel, as_lattice, encode

__all__ = [
    "PathSample",
    "LadderSample",
    "DPTable",
    "simulate_path",
    "simulate_tau_minus",
    "tau_minus_batch",
    "ladder_height_samples",
    "exact_lattice_dp",
    "enumerate_paths",
    "log_exponential_functional",
]


@dataclass(frozen=True)
class PathSample:
    """Functionals of one simulated trajectory ``S_0, ..., S_n``.

    ``tau0_minus`` / ``tau0_plus`` are ``None`` when censored at ``n``;
    ``big_jump_index`` is ``None`` when no step exceeds the threshold.
    """

    n: int
    path: np.ndarray
    s_final: float
    i_n_log: float
    l_n: float
    m_n: float
    sigma_minus: int
    sigma_plus: int
    tau0_minus: Optional[int]
    tau0_plus: Optional[int]
    big_jump_index: Optional[int] = None

    @property
    def log_terms(self) -> np.ndarray:
        return -self.path[1:]


@dataclass(frozen=True)
class LadderSample:
    heights: np.ndarray
    censored_fraction: float
    requested: int


def log_exponential_functional(paths: np.ndarray) -> np.ndarray:
    """``log sum_{k>=1} exp(-S_k)`` along the last axis (column 0 is ``S_0``)."""
    paths = np.asarray(paths, dtype=float)
    return logsumexp(-paths[..., 1:], axis=-1)


def simulate_path(model: StepModel, n: int, start: float = 0.0,
                  big_jump_threshold: float | None = None,
                  rng: Generator | None = None) -> PathSample:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    steps = np.asarray(model.sample(rng, n), dtype=float)
    path = np.empty(n + 1)
    path[0] = start
    np.cumsum(steps, out=path[1:])
    path[1:] += start
    i_log = float(np.logaddexp.reduce(-path[1:]))
    below = np.flatnonzero(path[1:] < 0.0)
    above = np.flatnonzero(path[1:] > 0.0)
    jump = None
    if big_jump_threshold is not None:
        big = np.flatnonzero(steps > big_jump_threshold)
        jump = int(big[0]) + 1 if big.size else None
    return PathSample(
        n=n,
        path=path,
        s_final=float(path[-1]),
        i_n_log=i_log,
        l_n=float(path[1:].min()),
        m_n=float(path[1:].max()),
        sigma_minus=int(np.argmin(path)),
        sigma_plus=int(np.argmax(path)),
        tau0_minus=int(below[0]) + 1 if below.size else None,
        tau0_plus=int(above[0]) + 1 if above.size else None,
        big_jump_index=jump,
    )


def tau_minus_batch(model: StepModel, start: float, cap: int, count: int,
                    rng: Generator | int | None = None, workers: int = 1,
                    level: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """First-passage times below ``level`` (-1 when censored) and the positions there."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    enc = encode(model)
    master = _batch.master_seed(rng)

    def job(c, seed):
        return _kernels.first_passage(*enc, float(start), float(level), int(cap), c, seed)

    parts = _batch.run(job, count, master, workers)
    return (_batch.concat([p[0] for p in parts]), _batch.concat([p[1] for p in parts]))


def simulate_tau_minus(model: StepModel, start: float, cap: int,
                       rng: Generator | None = None) -> Optional[int]:
    """First ``k >= 1`` with ``S_k < 0`` from ``S_0 = start``; None if censored at ``cap``."""
    if start < 0:
        raise ValueError("start must be nonnegative")
    hit, _ = tau_minus_batch(model, start, cap, 1, rng)
    return None if hit[0] < 0 else int(hit[0])


def ladder_height_samples(model: StepModel, count: int, cap: int,
                          rng: Generator | int | None = None, workers: int = 1) -> LadderSample:
    """Magnitudes of the first strict descending ladder height, censored chains dropped."""
    hit, pos = tau_minus_batch(model, 0.0, cap, count, rng, workers)
    ok = hit >= 0
    censored = 1.0 - ok.mean() if count else 0.0
    if censored > 0.5:
        raise RuntimeError(
            f"{censored:.1%} of ladder chains censored at cap={cap}; the walk likely drifts to +inf")
    return LadderSample(heights=-pos[ok], censored_fraction=float(censored), requested=count)


# ---------------------------------------------------------------------------
# exact oracles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DPTable:
    """Exact law of a lattice walk on ``spacing * (index - origin)``.

    ``table`` (rows ``k = 0..n``) is kept only when small enough; the
    summaries are always available.
    """

    spacing: float
    origin: int
    floor: str
    row_mass: np.ndarray
    p_ge0: np.ndarray
    p_gt0: np.ndarray
    final: np.ndarray
    table: Optional[np.ndarray]

    def support(self) -> np.ndarray:
        return self.spacing * (np.arange(self.final.size) - self.origin)

    def survival(self, n: int) -> float:
        """Surviving mass after ``n`` steps (``P(tau_0^- > n)`` for the floored table)."""
        return float(self.row_mass[n])


def exact_lattice_dp(model: StepModel, n: int, floor_at_zero: bool = False, *,
                     strict: bool = False, start_index: int = 0,
                     max_states: int = 1 << 16, keep_table: int = 5_000_000) -> DPTable:
    """Dynamic programme over the lattice.

    With ``floor_at_zero`` mass is killed on entering ``(-inf, 0)`` (or
    ``(-inf, 0]`` with ``strict``), so ``row_mass[k]`` is ``P(tau_0^- > k)``
    (resp. ``P(L_k > 0)``).  Accumulation is in ``np.longdouble``.
    """
    lat = as_lattice(model)
    if lat is None:
        raise TypeError("exact_lattice_dp needs a lattice model")
    offsets = np.asarray(lat.offsets)
    probs = np.asarray(lat.probs, dtype=np.longdouble)
    lo, hi = int(offsets.min()), int(offsets.max())
    down = max(0, -lo) * n
    up = max(0, hi) * n
    origin = down + max(0, -start_index)
    width = origin + start_index + up + 1
    if floor_at_zero:
        origin = max(0, -start_index) if start_index < 0 else 0
        width = start_index + up + 1
    if width > max_states:
        raise OverflowError(f"DP state space {width} exceeds max_states={max_states}")
    row = np.zeros(width, dtype=np.longdouble)
    row[origin + start_index] = 1.0
    keep = (n + 1) * width <= keep_table
    table = np.zeros((n + 1, width), dtype=np.longdouble) if keep else None
    if keep:
        table[0] = row
    row_mass = np.empty(n + 1, dtype=np.longdouble)
    p_ge0 = np.empty(n + 1, dtype=np.longdouble)
    p_gt0 = np.empty(n + 1, dtype=np.longdouble)

    def summarize(k, r):
        row_mass[k] = r.sum()
        p_ge0[k] = r[origin:].sum()
        p_gt0[k] = r[origin + 1:].sum()

    summarize(0, row)
    for k in range(1, n + 1):
        new = np.zeros_like(row)
        for o, p in zip(offsets, probs):
            if p == 0:
                continue
            if o >= 0:
                new[o:] += p * row[:width - o]
            else:
                new[:width + o] += p * row[-o:]
        if floor_at_zero:
            new[:origin + (1 if strict else 0)] = 0.0
        row = new
        summarize(k, row)
        if keep:
            table[k] = row
    return DPTable(
        spacing=lat.spacing,
        origin=origin,
        floor=("strict" if strict else "weak") if floor_at_zero else "none",
        row_mass=row_mass,
        p_ge0=p_ge0,
        p_gt0=p_gt0,
        final=row,
        table=table,
    )


def enumerate_paths(model: StepModel, n: int, weight: Callable[[np.ndarray], np.ndarray],
                    start: float = 0.0, guard: int = 10**7, chunk: int = 1 << 18) -> float:
    """Exact ``E[weight(S)]`` by summing over every path of length ``n``.

    ``weight`` receives an ``(N, n + 1)`` array of paths (column 0 is
    ``S_0 = start``) and returns ``N`` weights.
    """
    lat = as_lattice(model)
    if lat is None:
        raise TypeError("enumerate_paths needs a lattice model")
    values, probs = lat.atoms()
    keep = probs > 0
    values, probs = values[keep], probs[keep].astype(np.longdouble)
    a = values.size
    total_paths = a**n
    if total_paths > guard:
        raise OverflowError(f"{a}^{n} = {total_paths} paths exceeds guard {guard}")
    log_p = np.log(probs)
    acc = np.longdouble(0.0)
    for first in range(0, total_paths, chunk):
        ids = np.arange(first, min(first + chunk, total_paths), dtype=np.int64)
        digits = np.empty((ids.size, n), dtype=np.int64)
        rest = ids.copy()
        for j in range(n - 1, -1, -1):
            digits[:, j] = rest % a
            rest //= a
        steps = values[digits]
        paths = np.empty((ids.size, n + 1))
        paths[:, 0] = start
        np.cumsum(steps, axis=1, out=paths[:, 1:])
        paths[:, 1:] += start
        w = np.asarray(weight(paths), dtype=np.longdouble)
        pr = np.exp(log_p[digits].sum(axis=1))
        acc += np.sum(pr * w)
    return float(acc)

