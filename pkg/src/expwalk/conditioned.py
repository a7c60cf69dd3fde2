"""Walks conditioned to stay nonnegative (Doob h-transforms) and their functionals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

from . import _batch, _kernels
from .renewal import RenewalTable
from .steps import StepModel, as_lattice, encode, negate

__all__ = [
    "ROW_TOL",
    "IUpSample",
    "RejectionSample",
    "up_row",
    "step_up",
    "step_down",
    "simulate_up_path",
    "simulate_I_up",
    "conditioned_by_rejection",
]

ROW_TOL = 1e-3
WINDOW = 256
# continuous steps above this quantile are not covered by the rejection envelope
_ENVELOPE_TAIL = 1e-12


@dataclass(frozen=True)
class IUpSample:
    """Draws of ``I_up = sum_{j>=1} exp(-S_up_j)`` with their truncation flags."""

    values: np.ndarray
    truncated: np.ndarray

    @property
    def truncation_rate(self) -> float:
        return float(self.truncated.mean())


@dataclass(frozen=True)
class RejectionSample:
    paths: np.ndarray
    attempts: int

    @property
    def acceptance(self) -> float:
        return self.paths.shape[0] / self.attempts


def _lattice_index(x: float, spacing: float) -> int:
    m = x / spacing
    idx = int(round(m))
    if abs(m - idx) > 1e-9 * max(1.0, abs(m)):
        raise ValueError(f"{x} is not on the lattice of spacing {spacing}")
    return idx


def up_row(x: float, model: StepModel, v_table: RenewalTable) -> tuple[np.ndarray, np.ndarray]:
    """Targets ``y`` and probabilities ``V(y) P(x + X = y) / V(x)`` of a lattice row.

    The returned probabilities are unnormalised, so their sum measures how
    harmonic the table is at ``x``.
    """
    lat = as_lattice(model)
    if lat is None:
        raise TypeError("exact rows need a lattice model")
    values, probs = lat.atoms()
    y = x + values
    vx = v_table(x)
    if vx <= 0:
        raise ValueError("V(x) must be positive")
    w = np.where(y >= -1e-12, probs * v_table(np.maximum(y, 0.0)) / vx, 0.0)
    return y, w


def _envelope_reach(model: StepModel) -> float:
    if hasattr(model, "ppf"):
        return float(max(0.0, model.ppf(1.0 - _ENVELOPE_TAIL)))
    lo, hi = 0.0, 1.0
    while model.tail_prob(hi) > _ENVELOPE_TAIL:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            return hi
    return hi


def step_up(x: float, model: StepModel, v_table: RenewalTable, rng: Generator) -> float:
    """One transition of the walk conditioned to stay nonnegative.

    Lattice rows are computed exactly and sampled by inverse transform
    after renormalisation (rejected if the raw row sum is off by more than
    ``ROW_TOL``).  Continuous steps use rejection from the step law with
    the constant envelope ``V(x + b)``, ``b`` the ``1 - 1e-12`` quantile.
    """
    if x < 0:
        raise ValueError("state must be nonnegative")
    if as_lattice(model) is not None:
        y, w = up_row(x, model, v_table)
        tot = w.sum()
        if abs(tot - 1.0) > ROW_TOL:
            raise RuntimeError(f"row sum {tot:.6g} at x={x}; V table too noisy")
        return float(max(0.0, y[rng.choice(y.size, p=w / tot)]))
    env = v_table(x + _envelope_reach(model))
    while True:
        y = x + model.sample(rng)
        if y < 0:
            continue
        vy = v_table(y)
        if rng.random() * max(env, vy) <= vy:
            return float(y)


def step_down(x: float, model: StepModel, vhat_table: RenewalTable, rng: Generator) -> float:
    """One transition of the walk conditioned to stay nonpositive, reflected to ``[0, inf)``.

    ``p_down(x, dy) = V_hat(y) / V_hat(x) P(x - X in dy)``.
    """
    return step_up(x, negate(model), vhat_table, rng)


def _lattice_args(lat, v_table: RenewalTable):
    offsets = np.asarray(lat.offsets, dtype=np.int64)
    probs = np.asarray(lat.probs, dtype=float)
    keep = probs > 0
    return (offsets[keep], probs[keep], float(lat.spacing)) + v_table.kernel_args()


def simulate_up_path(model: StepModel, v_table: RenewalTable, start: float, n_steps: int,
                     count: int, rng: Generator | int | None = None, workers: int = 1
                     ) -> np.ndarray:
    """``(count, n_steps + 1)`` array of conditioned-walk paths from ``start``."""
    master = _batch.master_seed(rng)
    lat = as_lattice(model)
    if lat is not None:
        args = _lattice_args(lat, v_table)
        idx0 = _lattice_index(start, lat.spacing)

        def job(c, seed):
            return _kernels.up_lattice(*args, idx0, int(n_steps), c, seed)

        parts = _batch.run(job, count, master, workers)
        worst = max(p[1] for p in parts)
        if worst > ROW_TOL:
            raise RuntimeError(f"row sum deviation {worst:.3g} exceeds {ROW_TOL}")
        return _batch.concat([p[0] for p in parts]) * lat.spacing
    enc = encode(model)
    reach = _envelope_reach(model)

    def job(c, seed):
        return _kernels.up_continuous(*enc, reach, *v_table.kernel_args(), float(start),
                                      int(n_steps), c, seed)

    return _batch.concat(_batch.run(job, count, master, workers))


def simulate_I_up(model: StepModel, v_table: RenewalTable, start: float = 0.0,
                  eps: float = 1e-6, horizon_cap: int = 100_000, rng: Generator | int | None = None,
                  count: int = 1, workers: int = 1, window: int = WINDOW) -> IUpSample:
    """Draws of the exponential functional of the conditioned walk from ``start``.

    Accumulation stops once the last ``window`` terms add less than ``eps``
    times the running sum; hitting ``horizon_cap`` first sets the flag.
    """
    if start < 0 or eps <= 0 or horizon_cap < 1:
        raise ValueError("need start >= 0, eps > 0 and horizon_cap >= 1")
    master = _batch.master_seed(rng)
    lat = as_lattice(model)
    if lat is not None:
        args = _lattice_args(lat, v_table)
        idx0 = _lattice_index(start, lat.spacing)

        def job(c, seed):
            return _kernels.i_up_lattice(*args, idx0, float(eps), int(window), int(horizon_cap),
                                         c, seed)

        parts = _batch.run(job, count, master, workers)
        worst = max(p[2] for p in parts)
        if worst > ROW_TOL:
            raise RuntimeError(f"row sum deviation {worst:.3g} exceeds {ROW_TOL}")
    else:
        enc = encode(model)
        reach = _envelope_reach(model)

        def job(c, seed):
            return _kernels.i_up_continuous(*enc, reach, *v_table.kernel_args(), float(start),
                                            float(eps), int(window), int(horizon_cap), c, seed)

        parts = _batch.run(job, count, master, workers)
    return IUpSample(_batch.concat([p[0] for p in parts]), _batch.concat([p[1] for p in parts]))


def conditioned_by_rejection(model: StepModel, k: int, n: int, rng: Generator,
                             count: int = 1, start: float = 0.0, chunk: int = 1 << 14,
                             min_acceptance: float = 1e-6) -> RejectionSample:
    """Exact draws of ``(S_1, ..., S_k)`` given ``tau_0^- > n`` by rejection.

    Raises when the acceptance rate looks smaller than ``min_acceptance``.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    accepted = []
    got = attempts = 0
    budget = int(10.0 / min_acceptance)
    while got < count:
        steps = np.asarray(model.sample(rng, (chunk, n)), dtype=float)
        paths = start + np.cumsum(steps, axis=1)
        ok = paths.min(axis=1) >= 0.0
        attempts += chunk
        take = paths[ok, :k][: count - got]
        accepted.append(take)
        got += take.shape[0]
        if got < 10 and attempts >= budget:
            raise RuntimeError(
                f"acceptance below {min_acceptance:g} ({got} of {attempts} accepted)")
    # attempts counts whole chunks; trim to the path that delivered the last draw
    if got and accepted[-1].shape[0]:
        last_ok = np.flatnonzero(ok)
        used = int(last_ok[accepted[-1].shape[0] - 1]) + 1
        attempts -= chunk - used
    return RejectionSample(np.concatenate(accepted, axis=0), attempts)

