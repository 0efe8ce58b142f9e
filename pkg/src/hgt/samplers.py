"""Seedable random streams, elementary variate generators and a scalar slice sampler.

Every stochastic routine in the package draws from a :class:`RandomStream`.
A stream is identified by ``(seed, stream_id)``; two streams with the same
identity produce the same sequence bit for bit, and streams with different
ids are independent (they are spawned from one ``SeedSequence`` tree).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RandomStream",
    "SliceConfig",
    "SliceError",
    "sample_normal",
    "sample_gamma",
    "sample_log_gamma",
    "sample_beta",
    "sample_logit_beta",
    "sample_inverse_gamma",
    "sample_poisson",
    "slice_sample",
]

POISSON_NORMAL_THRESHOLD = 1e6


class SliceError(RuntimeError):
    """Raised when the slice sampler cannot complete a transition."""

    def __init__(self, message, **state):
        self.state = state
        detail = ", ".join(f"{k}={v!r}" for k, v in state.items())
        super().__init__(f"{message} ({detail})" if detail else message)


@dataclass
class RandomStream:
    """A reproducible stream of random numbers.

    Parameters
    ----------
    seed : int
        64-bit seed shared by all streams of one run.
    stream_id : int
        Identifier of this stream (one per chain, or per purpose).
    """

    seed: int
    stream_id: int = 0
    _path: tuple = field(default=(), repr=False)
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *self._path))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, key: int) -> "RandomStream":
        """Deterministic sub-stream, independent of this stream and its siblings."""
        return RandomStream(self.seed, self.stream_id, (*self._path, int(key)))

    def uniform(self, size=None):
        return self.generator.random(size)


def _check_positive(**params):
    for name, value in params.items():
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError(f"{name} must be positive and finite, got {value!r}")


def sample_normal(stream: RandomStream, mean, variance, size=None):
    """Draw from Normal(mean, variance)."""
    _check_positive(variance=variance)
    return stream.generator.normal(mean, np.sqrt(variance), size)


def sample_gamma(stream: RandomStream, shape, rate, size=None):
    """Draw from Gamma(shape, rate); the mean is ``shape / rate``."""
    _check_positive(shape=shape, rate=rate)
    return stream.generator.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size)


def sample_log_gamma(stream: RandomStream, shape, rate, size=None):
    """Draw ``log(X)`` for X ~ Gamma(shape, rate) without underflow.

    For shape < 1 the draw uses ``log G(a + 1) + log(U) / a`` so that very
    small shapes still give finite values.
    """
    _check_positive(shape=shape, rate=rate)
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if size is None:
        size = np.broadcast(shape, rate).shape
    boost = shape < 1.0
    g = stream.generator.gamma(np.where(boost, shape + 1.0, shape), 1.0, size)
    u = stream.generator.random(size)
    out = np.log(g) + np.where(boost, np.log1p(-u) / shape, 0.0) - np.log(rate)
    return out if out.ndim else float(out)


def sample_beta(stream: RandomStream, a, b, size=None):
    """Draw from Beta(a, b)."""
    _check_positive(a=a, b=b)
    return stream.generator.beta(a, b, size)


def sample_logit_beta(stream: RandomStream, a, b, size=None):
    """Draw ``log(W / (1 - W))`` for W ~ Beta(a, b), computed as a difference of log-gammas.

    The ratio form stays finite when W would round to 0 or 1 in double precision.
    """
    _check_positive(a=a, b=b)
    return sample_log_gamma(stream, a, 1.0, size) - sample_log_gamma(stream, b, 1.0, size)


def sample_inverse_gamma(stream: RandomStream, shape, rate, size=None):
    """Draw from IG(shape, rate), i.e. the reciprocal of a Gamma(shape, rate) draw."""
    _check_positive(shape=shape, rate=rate)
    return 1.0 / stream.generator.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size)


def sample_poisson(stream: RandomStream, rate, size=None):
    """Poisson draws; rates above 1e6 use a rounded normal approximation floored at 0."""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 0) or not np.all(np.isfinite(rate)):
        raise ValueError("Poisson rate must be finite and non-negative")
    if size is not None:
        rate = np.broadcast_to(rate, size)
    big = rate > POISSON_NORMAL_THRESHOLD
    small_rate = np.where(big, 0.0, rate)
    out = stream.generator.poisson(small_rate).astype(float)
    z = stream.generator.standard_normal(rate.shape)
    approx = np.maximum(np.rint(rate + np.sqrt(rate) * z), 0.0)
    out = np.where(big, approx, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SliceConfig:
    """Tuning of the stepping-out / shrinkage slice sampler."""

    initial_width: float = 1.0
    max_stepout: int = 50
    max_shrink: int = 100

    def __post_init__(self):
        if not self.initial_width > 0:
            raise ValueError("initial_width must be positive")
        if int(self.max_stepout) < 1 or int(self.max_shrink) < 1:
            raise ValueError("max_stepout and max_shrink must be positive integers")


def slice_sample(stream, log_density, current, support=(-math.inf, math.inf), config=None):
    """One univariate slice-sampling transition (stepping out, then shrinkage).

    Parameters
    ----------
    stream : RandomStream
    log_density : callable
        Unnormalised log density; may return ``-inf`` outside its support.
    current : float
        Current state; must lie in ``support`` with finite log density.
    support : (float, float)
        Closed interval bounding the variable; either end may be infinite.
    config : SliceConfig, optional

    Returns
    -------
    float
        The new state, inside ``support``.
    """
    config = config or SliceConfig()
    lo, hi = float(support[0]), float(support[1])
    x0 = float(current)
    if lo > hi:
        raise ValueError(f"empty support {support}")
    if lo == hi:
        return lo
    if not lo <= x0 <= hi:
        raise SliceError("current state outside support", current=x0, support=(lo, hi))

    def logf(x):
        if x < lo or x > hi:
            return -math.inf
        return float(log_density(x))

    f0 = logf(x0)
    if math.isnan(f0):
        raise SliceError("log density is NaN at the current state", current=x0)
    if not math.isfinite(f0):
        raise SliceError("log density is not finite at the current state", current=x0, value=f0)

    rng = stream.generator
    level = f0 + math.log1p(-rng.random())
    w = config.initial_width
    left = x0 - w * rng.random()
    right = left + w
    # Stepping out (Neal 2003, fig. 3), the step budget split at random.
    j = int(rng.random() * config.max_stepout)
    k = config.max_stepout - 1 - j
    while j > 0 and left > lo and logf(left) > level:
        left -= w
        j -= 1
    while k > 0 and right < hi and logf(right) > level:
        right += w
        k -= 1
    left, right = max(left, lo), min(right, hi)

    for _ in range(config.max_shrink):
        x1 = left + (right - left) * rng.random()
        f1 = logf(x1)
        if math.isnan(f1):
            raise SliceError("log density returned NaN", x=x1)
        if f1 > level:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1
    raise SliceError(
        "shrinkage exhausted",
        current=x0,
        interval=(left, right),
        level=level,
        max_shrink=config.max_shrink,
    )
