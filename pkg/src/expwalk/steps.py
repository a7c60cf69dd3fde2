"""Step distributions for random walks.

Every model is an immutable dataclass exposing sampling, the Laplace
transform ``E[exp(lam * X)]`` (extended-real valued), tail and distribution
functions, and inverse-transform conditional sampling.  Models can also be
encoded into flat arrays consumed by the compiled path kernels.

Variants
--------
* :class:`Lattice` -- atoms at ``spacing * offsets``.
* :class:`Gaussian` -- ``N(mu, sigma**2)``.
* :class:`TwoPoint` -- ``up`` with probability ``p_up``, else ``down``.
* :class:`ShiftedPareto` -- ``scale * (Pareto(beta) - 1) + shift`` so that
  ``P(X > x) = (1 + (x - shift) / scale) ** -beta`` for ``x >= shift``.

Two wrappers complete the family: :class:`ExpTilted` (an exponentially
tilted base law, used for tilts that have no closed form) and
:class:`Reflected` (the law of ``-X``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

import numpy as np
from numpy.random import Generator
from scipy import integrate, special, stats

__all__ = [
    "Lattice",
    "Gaussian",
    "TwoPoint",
    "ShiftedPareto",
    "ExpTilted",
    "Reflected",
    "StepModel",
    "sample_step",
    "laplace",
    "tail_prob",
    "step_mean",
    "sample_step_conditional_tail",
    "negate",
    "as_lattice",
    "encode",
    "KIND_ATOMS",
    "KIND_GAUSSIAN",
    "KIND_PARETO",
    "KIND_TILTED_PARETO",
]

KIND_ATOMS = 0
KIND_GAUSSIAN = 1
KIND_PARETO = 2
KIND_TILTED_PARETO = 3

_PROB_TOL = 1e-12
_LAPLACE_ABS_TOL = 1e-10


def _check_probs(probs: tuple[float, ...]) -> None:
    if any(p < 0 for p in probs):
        raise ValueError("probabilities must be nonnegative")
    if abs(math.fsum(probs) - 1.0) > _PROB_TOL:
        raise ValueError(f"probabilities sum to {math.fsum(probs)!r}, not 1")


def _atom_laplace(values: np.ndarray, probs: np.ndarray, lam: float) -> float:
    keep = probs > 0
    if lam == 0.0:
        return 1.0
    log_l = special.logsumexp(lam * values[keep], b=probs[keep])
    if log_l > 709.0:
        return math.inf
    return float(math.exp(log_l))


class _AtomMixin:
    """Shared behaviour of finitely supported laws."""

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    heavy_tail = False

    def sample(self, rng: Generator, size=None):
        values, probs = self.atoms()
        idx = rng.choice(len(values), size=size, p=probs)
        return values[idx] if size is not None else float(values[idx])

    def laplace(self, lam: float) -> float:
        values, probs = self.atoms()
        return _atom_laplace(values, probs, lam)

    def tail_prob(self, x: float) -> float:
        values, probs = self.atoms()
        return float(min(1.0, math.fsum(probs[values >= x - 1e-12 * max(1.0, abs(x))])))

    def cdf(self, x: float) -> float:
        values, probs = self.atoms()
        return float(min(1.0, math.fsum(probs[values <= x + 1e-12 * max(1.0, abs(x))])))

    def mean(self) -> float:
        values, probs = self.atoms()
        return float(math.fsum(values * probs))

    def sample_conditional_tail(self, x: float, rng: Generator, size=None):
        values, probs = self.atoms()
        mask = values >= x - 1e-12 * max(1.0, abs(x)) if math.isfinite(x) else np.ones_like(values, bool)
        mass = probs[mask].sum()
        if mass <= 0:
            raise ValueError(f"P(X >= {x}) = 0; cannot condition")
        sub_v, sub_p = values[mask], probs[mask] / mass
        idx = rng.choice(len(sub_v), size=size, p=sub_p)
        return sub_v[idx] if size is not None else float(sub_v[idx])

    def is_symmetric(self) -> bool:
        values, probs = self.atoms()
        order = np.argsort(values)
        v, p = values[order], probs[order]
        return bool(np.allclose(v, -v[::-1], atol=1e-12) and np.allclose(p, p[::-1], atol=1e-12))


@dataclass(frozen=True)
class Lattice(_AtomMixin):
    """Law supported on ``spacing * offsets`` with the given probabilities."""

    spacing: float
    offsets: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        if len(self.offsets) != len(self.probs) or not self.offsets:
            raise ValueError("offsets and probs must be non-empty and of equal length")
        if len(set(self.offsets)) != len(self.offsets):
            raise ValueError("offsets must be distinct")
        _check_probs(self.probs)

    def atoms(self):
        return (self.spacing * np.asarray(self.offsets, dtype=float),
                np.asarray(self.probs, dtype=float))

    def laplace_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class TwoPoint(_AtomMixin):
    """``up`` with probability ``p_up`` and ``down`` otherwise."""

    up: float
    down: float
    p_up: float

    def __post_init__(self):
        if self.up <= 0 or self.down >= 0:
            raise ValueError("TwoPoint needs up > 0 and down < 0")
        if not 0.0 <= self.p_up <= 1.0:
            raise ValueError("p_up must be a probability")

    def atoms(self):
        return (np.array([self.down, self.up], dtype=float),
                np.array([1.0 - self.p_up, self.p_up], dtype=float))

    def laplace_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float
    heavy_tail = False

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def sample(self, rng: Generator, size=None):
        return rng.normal(self.mu, self.sigma, size=size)

    def laplace(self, lam: float) -> float:
        expo = self.mu * lam + 0.5 * self.sigma**2 * lam**2
        return math.inf if expo > 709.0 else math.exp(expo)

    def laplace_domain(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    def tail_prob(self, x: float) -> float:
        return float(stats.norm.sf(x, self.mu, self.sigma))

    def cdf(self, x: float) -> float:
        return float(stats.norm.cdf(x, self.mu, self.sigma))

    def ppf(self, u):
        return self.mu + self.sigma * special.ndtri(u)

    def mean(self) -> float:
        return float(self.mu)

    def is_symmetric(self) -> bool:
        return self.mu == 0.0

    def sample_conditional_tail(self, x: float, rng: Generator, size=None):
        # Rejection from N(mu, sigma^2) near the bulk; exponential envelope
        # (Robert 1995) once the threshold is half a sigma above the mean.
        if self.tail_prob(x) <= 0.0:
            raise ValueError(f"P(X >= {x}) = 0; cannot condition")
        count = 1 if size is None else int(np.prod(size))
        z0 = -math.inf if not math.isfinite(x) else (x - self.mu) / self.sigma
        out = np.empty(count)
        filled = 0
        if z0 < 0.5:
            while filled < count:
                need = count - filled
                batch = rng.standard_normal(max(2 * need, 16))
                batch = batch[batch >= z0][:need]
                out[filled:filled + batch.size] = batch
                filled += batch.size
        else:
            rate = 0.5 * (z0 + math.sqrt(z0 * z0 + 4.0))
            while filled < count:
                need = count - filled
                m = max(2 * need, 16)
                z = z0 + rng.exponential(1.0 / rate, m)
                accept = rng.random(m) <= np.exp(-0.5 * (z - rate) ** 2)
                z = z[accept][:need]
                out[filled:filled + z.size] = z
                filled += z.size
        out = self.mu + self.sigma * out
        if size is None:
            return float(out[0])
        return out.reshape(size)


@dataclass(frozen=True)
class ShiftedPareto:
    """Regularly varying right tail with index ``beta`` and constant slowly varying factor."""

    beta: float
    scale: float
    shift: float
    heavy_tail = True

    def __post_init__(self):
        if self.beta <= 1:
            raise ValueError("ShiftedPareto needs beta > 1 (finite mean)")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def tail_index(self) -> float:
        return self.beta

    def _from_survival(self, v):
        return self.shift + self.scale * (np.power(v, -1.0 / self.beta) - 1.0)

    def sample(self, rng: Generator, size=None):
        v = 1.0 - rng.random(size)  # in (0, 1]
        out = self._from_survival(v)
        return float(out) if size is None else out

    def laplace(self, lam: float) -> float:
        if lam > 0:
            return math.inf
        if lam == 0:
            return 1.0
        b, s = self.beta, self.scale

        def integrand(t):
            return math.exp(lam * s * (t - 1.0)) * b * t ** (-b - 1.0)

        val, _ = integrate.quad(integrand, 1.0, math.inf, epsabs=_LAPLACE_ABS_TOL * 1e-2,
                                epsrel=1e-12, limit=200)
        return math.exp(lam * self.shift) * val

    def laplace_domain(self) -> tuple[float, float]:
        return (-math.inf, 0.0)

    def tail_prob(self, x: float) -> float:
        if x <= self.shift:
            return 1.0
        return float((1.0 + (x - self.shift) / self.scale) ** (-self.beta))

    def cdf(self, x: float) -> float:
        return 1.0 - self.tail_prob(x)

    def ppf(self, u):
        return self._from_survival(1.0 - np.asarray(u))

    def mean(self) -> float:
        return self.shift + self.scale / (self.beta - 1.0)

    def is_symmetric(self) -> bool:
        return False

    def sample_conditional_tail(self, x: float, rng: Generator, size=None):
        t = self.tail_prob(x) if math.isfinite(x) else 1.0
        if t <= 0.0:
            raise ValueError(f"P(X >= {x}) = 0; cannot condition")
        v = (1.0 - rng.random(size)) * t
        out = self._from_survival(v)
        return float(out) if size is None else out

    def sample_conditional_below(self, x: float, rng: Generator, size=None):
        """Draw from the law of X given X <= x by inverse transform."""
        c = self.cdf(x)
        if c <= 0.0:
            raise ValueError(f"P(X <= {x}) = 0; cannot condition")
        u = rng.random(size) * c
        out = self.ppf(u)
        return float(out) if size is None else out


@dataclass(frozen=True)
class ExpTilted:
    """``base`` reweighted by ``exp(lam * x) / L_base(lam)``.

    Only bases whose support is bounded below are supported, with
    ``lam <= 0``, so that the density ratio is bounded and sampling by
    rejection from ``base`` is exact.
    """

    base: ShiftedPareto
    lam: float
    _norm: float = field(init=False, repr=False, compare=False)
    heavy_tail = False

    def __post_init__(self):
        if not isinstance(self.base, ShiftedPareto):
            raise TypeError("ExpTilted supports ShiftedPareto bases only")
        if self.lam > 0:
            raise ValueError("positive tilts of a Pareto base have infinite Laplace transform")
        object.__setattr__(self, "_norm", self.base.laplace(self.lam))

    def _weighted(self, g, lo: float) -> float:
        b = self.base
        lo = max(lo, b.shift)

        def integrand(t):
            y = b.shift + b.scale * (t - 1.0)
            return g(y) * math.exp(self.lam * (y - b.shift)) * b.beta * t ** (-b.beta - 1.0)

        t0 = 1.0 + (lo - b.shift) / b.scale
        val, _ = integrate.quad(integrand, t0, math.inf, epsabs=1e-13, epsrel=1e-11, limit=200)
        return val * math.exp(self.lam * b.shift) / self._norm

    def sample(self, rng: Generator, size=None):
        return self._reject(rng, size, -math.inf)

    def _reject(self, rng: Generator, size, x: float):
        count = 1 if size is None else int(np.prod(size))
        out = np.empty(count)
        filled = 0
        lo = max(x, self.base.shift)
        while filled < count:
            need = count - filled
            m = max(2 * need, 16)
            y = np.asarray(self.base.sample_conditional_tail(x, rng, m))
            keep = rng.random(m) <= np.exp(self.lam * (y - lo))
            y = y[keep][:need]
            out[filled:filled + y.size] = y
            filled += y.size
        return float(out[0]) if size is None else out.reshape(size)

    def laplace(self, lam: float) -> float:
        top = self.base.laplace(self.lam + lam)
        return top / self._norm if math.isfinite(top) else math.inf

    def laplace_domain(self) -> tuple[float, float]:
        return (-math.inf, -self.lam)

    def tail_prob(self, x: float) -> float:
        if x <= self.base.shift:
            return 1.0
        return min(1.0, self._weighted(lambda y: 1.0, x))

    def cdf(self, x: float) -> float:
        return 1.0 - self.tail_prob(x)

    def mean(self) -> float:
        return self._weighted(lambda y: y, -math.inf)

    def is_symmetric(self) -> bool:
        return False

    def sample_conditional_tail(self, x: float, rng: Generator, size=None):
        if self.tail_prob(x) <= 0.0:
            raise ValueError(f"P(X >= {x}) = 0; cannot condition")
        return self._reject(rng, size, x)


@dataclass(frozen=True)
class Reflected:
    """Law of ``-X`` for a base model without a closed-form reflection."""

    base: Union[ShiftedPareto, ExpTilted]
    heavy_tail = False

    def sample(self, rng: Generator, size=None):
        out = self.base.sample(rng, size)
        return -out

    def laplace(self, lam: float) -> float:
        return self.base.laplace(-lam)

    def laplace_domain(self) -> tuple[float, float]:
        lo, hi = self.base.laplace_domain()
        return (-hi, -lo)

    def tail_prob(self, x: float) -> float:
        return self.base.cdf(-x)

    def cdf(self, x: float) -> float:
        return self.base.tail_prob(-x)

    def mean(self) -> float:
        return -self.base.mean()

    def is_symmetric(self) -> bool:
        return False

    def sample_conditional_tail(self, x: float, rng: Generator, size=None):
        if not hasattr(self.base, "sample_conditional_below"):
            raise NotImplementedError(f"no lower-tail sampler for {self.base!r}")
        out = self.base.sample_conditional_below(-x, rng, size)
        return -out


StepModel = Union[Lattice, Gaussian, TwoPoint, ShiftedPareto, ExpTilted, Reflected]


def sample_step(model: StepModel, rng: Generator, size=None):
    """Draw ``size`` steps (a float when ``size`` is None)."""
    return model.sample(rng, size)


def laplace(model: StepModel, lam: float) -> float:
    """``E[exp(lam * X)]``, ``math.inf`` outside the finite domain."""
    return model.laplace(lam)


def tail_prob(model: StepModel, x: float) -> float:
    """``P(X >= x)``."""
    return model.tail_prob(x)


def step_mean(model: StepModel) -> float:
    m = model.mean()
    if not math.isfinite(m):
        raise ValueError("step mean is not finite")
    return m


def sample_step_conditional_tail(model: StepModel, x: float, rng: Generator, size=None):
    """Draw from the law of X given ``X >= x``."""
    return model.sample_conditional_tail(x, rng, size)


def negate(model: StepModel) -> StepModel:
    """Model of ``-X``."""
    if isinstance(model, Lattice):
        return Lattice(model.spacing, tuple(-o for o in model.offsets), model.probs)
    if isinstance(model, Gaussian):
        return Gaussian(-model.mu, model.sigma)
    if isinstance(model, TwoPoint):
        return TwoPoint(up=-model.down, down=-model.up, p_up=1.0 - model.p_up)
    if isinstance(model, Reflected):
        return model.base
    return Reflected(model)


def as_lattice(model: StepModel) -> Lattice | None:
    """Lattice representation of a finitely supported model, or None."""
    if isinstance(model, Lattice):
        return model
    if not isinstance(model, TwoPoint):
        return None
    ratio = Fraction(model.up / -model.down).limit_denominator(1000)
    if abs(float(ratio) - model.up / -model.down) > 1e-12:
        return None
    spacing = -model.down / ratio.denominator
    offsets, probs = [-ratio.denominator], [1.0 - model.p_up]
    offsets.append(ratio.numerator)
    probs.append(model.p_up)
    return Lattice(spacing, tuple(offsets), tuple(probs))


def encode(model: StepModel):
    """Flatten a model into ``(kind, sign, params, values, cdf)`` for the kernels."""
    sign = 1.0
    if isinstance(model, Reflected):
        sign, model = -1.0, model.base
    empty = np.zeros(1)
    if isinstance(model, (Lattice, TwoPoint)):
        values, probs = model.atoms()
        keep = probs > 0
        values, probs = values[keep], probs[keep]
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        return KIND_ATOMS, sign, empty, values.astype(float), cdf
    if isinstance(model, Gaussian):
        return KIND_GAUSSIAN, sign, np.array([model.mu, model.sigma]), empty, empty
    if isinstance(model, ShiftedPareto):
        return KIND_PARETO, sign, np.array([model.beta, model.scale, model.shift]), empty, empty
    if isinstance(model, ExpTilted):
        b = model.base
        return (KIND_TILTED_PARETO, sign, np.array([b.beta, b.scale, b.shift, model.lam]),
                empty, empty)
    raise TypeError(f"cannot encode {model!r}")
