"""Composite sampler, validation-link fitting and forecasting.

* :func:`run_algorithm1` alternates the conjugate transformation layer
  (draw ``h`` given ``gamma``, then refresh ``gamma``) with one transition of
  a preferred model for continuous data.
* :func:`run_algorithm2` fits a linear recalibration of the link function,
  ``mean = c * g^{-1}(kappa_j0 + kappa_j1 * Y*)``, on held-out validation data.
* :func:`run_algorithm3` draws next-period data from the predictive
  distribution using stored draws and the recalibrated link.

Random numbers are drawn from per-purpose child streams of
``RandomStream(seed, chain_id)``: child 0 for the transformation layer,
1 for the preferred model, 2 for validation and 3 for forecasting. Swapping
the preferred model therefore leaves the transformation draws unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from .data import MultiResponseDataset, ResponseKind
from .samplers import (
    RandomStream,
    SliceConfig,
    SliceError,
    sample_normal,
    sample_poisson,
    slice_sample,
)
from .transform import (
    HYPER_NAMES,
    TransformHyper,
    TransformHyperPrior,
    inverse_link_by_kind,
    sample_h,
    update_hyperparameters,
)

TRANSFORM_STREAM, PREFERRED_STREAM, VALIDATION_STREAM, FORECAST_STREAM = range(4)
KAPPA_NAMES = ("kappa10", "kappa20", "kappa30", "kappa11", "kappa21", "kappa31")


class EngineError(RuntimeError):
    """A stage of the sampler failed; the message names where."""


class PreferredModel(Protocol):
    """What the composite sampler needs from a model for continuous data."""

    def init(self, stream: RandomStream):
        """Return an initial (opaque) state."""

    def draw(self, h: np.ndarray, state, stream: RandomStream):
        """One MCMC transition targeting f(y, theta | h); returns ``(y, theta, state)``."""

    def predict(self, theta: dict, design, stream: RandomStream) -> np.ndarray:
        """A fresh latent draw at new design rows given one stored parameter record."""


class IdentityModel:
    """Trivial preferred model: ``y = h`` and no parameters."""

    def init(self, stream):
        return None

    def draw(self, h, state, stream):
        return np.array(h, dtype=float), {}, state

    def predict(self, theta, design, stream):
        raise EngineError("the identity model cannot predict at new rows")


@dataclass(frozen=True)
class ChainConfig:
    """Iterations ``B``, burn-in ``b0`` (draws with ``b > b0`` are kept) and thinning."""

    iterations: int = 2000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    chains: int = 1

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1 or self.chains < 1:
            raise ValueError("iterations, thin and chains must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError(f"burn_in must lie in 0..{self.iterations - 1}, got {self.burn_in}")

    @property
    def n_stored(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def keeps(self, b: int) -> bool:
        return b > self.burn_in and (b - self.burn_in) % self.thin == 0


@dataclass
class ChainOutput:
    """Stored post-burn-in draws of one chain (arrays have the draw index first)."""

    h: np.ndarray
    gamma: np.ndarray
    y: np.ndarray
    theta: dict
    iterations: np.ndarray
    fingerprint: str
    config: ChainConfig
    kinds: np.ndarray
    multiplier: np.ndarray
    chain_id: int = 0

    def __len__(self):
        return len(self.iterations)

    def theta_at(self, d: int) -> dict:
        return {k: v[d] for k, v in self.theta.items()}

    def hyper_at(self, d: int) -> TransformHyper:
        return TransformHyper.from_array(self.gamma[d])

    def data_scale_means(self) -> np.ndarray:
        """``c * g^{-1}(Y)`` for every stored draw."""
        return self.multiplier * inverse_link_by_kind(self.kinds, self.y)


def run_algorithm1(data: MultiResponseDataset, preferred: PreferredModel, config: ChainConfig,
                   hyper_init: TransformHyper = None, prior: TransformHyperPrior = None,
                   slice_cfg: SliceConfig = None, chain_id: int = 0) -> ChainOutput:
    """Run the composite sampler for ``config.iterations`` iterations.

    Each iteration draws ``h`` given the previous hyperparameters, refreshes
    the hyperparameters given ``h``, then advances the preferred model given
    ``h``.
    """
    if len(data) == 0:
        raise EngineError("training data is empty")
    hyper = hyper_init or TransformHyper()
    base = RandomStream(config.seed, chain_id)
    ts, ps = base.child(TRANSFORM_STREAM), base.child(PREFERRED_STREAM)
    state = preferred.init(ps)

    D, n = config.n_stored, len(data)
    h_out, y_out = np.empty((D, n)), np.empty((D, n))
    gamma_out = np.empty((D, len(HYPER_NAMES)))
    iters = np.empty(D, dtype=np.int64)
    theta_rows = []
    d = 0
    for b in range(1, config.iterations + 1):
        try:
            h = sample_h(ts, data, hyper)
            hyper = update_hyperparameters(ts, h, data, hyper, prior, slice_cfg)
        except (ValueError, SliceError) as exc:
            raise EngineError(f"transformation step failed at iteration {b}: {exc}") from exc
        try:
            y, theta, state = preferred.draw(h, state, ps)
        except Exception as exc:
            raise EngineError(f"preferred model failed at iteration {b}: {exc}") from exc
        if config.keeps(b):
            h_out[d], y_out[d], gamma_out[d], iters[d] = h, y, hyper.as_array(), b
            theta_rows.append({k: np.array(v, dtype=float, copy=True) for k, v in theta.items()})
            d += 1
    theta_out = {k: np.stack([row[k] for row in theta_rows]) for k in (theta_rows[0] if theta_rows else {})}
    return ChainOutput(h_out, gamma_out, y_out, theta_out, iters, data.fingerprint(), config,
                       data.kind.copy(), data.multiplier, chain_id)


def run_chains(data, model_factory, config: ChainConfig, **kwargs) -> list:
    """Run ``config.chains`` independent chains (stream ids 0, 1, ...)."""
    return [run_algorithm1(data, model_factory(), config, chain_id=k, **kwargs) for k in range(config.chains)]


@dataclass
class ValidationLink:
    """Draws of the link recalibration ``kappa`` in the order of :data:`KAPPA_NAMES`."""

    draws: np.ndarray
    mode: str = "linear"
    active: tuple = (True, True, True)

    @classmethod
    def identity(cls):
        return cls(np.array([[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]]), "identity", (False, False, False))

    def __post_init__(self):
        self.draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if self.mode not in ("identity", "linear"):
            raise ValueError(f"unknown link mode {self.mode!r}")
        if self.mode == "identity" and not np.all(self.draws == [0, 0, 0, 1, 1, 1]):
            raise ValueError("identity mode requires kappa = (0, 0, 0, 1, 1, 1)")

    def intercept_slope(self, d, kinds):
        """Per-row intercept and slope for draw ``d`` given response kinds."""
        row = self.draws[d]
        j = np.asarray(kinds, dtype=np.int64) - 1
        return row[j], row[3 + j]

    def posterior_mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)


def _log_lik(kind, z, trials, eta, v):
    """Log likelihood (up to constants) of data given the link-scale mean ``eta``."""
    if kind == ResponseKind.GAUSSIAN:
        r = z - eta
        return -0.5 * float(r @ r) / v
    if kind == ResponseKind.BINOMIAL:
        return float(z @ eta - trials @ np.logaddexp(0.0, eta))
    with np.errstate(over="ignore"):
        rate = np.exp(eta)
    total = float(z @ eta - rate.sum())
    return total if math.isfinite(total) else -math.inf


def run_algorithm2(data: MultiResponseDataset, chain: ChainOutput, preferred: PreferredModel, design,
                   config: ChainConfig, slice_cfg: SliceConfig = None, min_observations: int = 10,
                   chain_id: int = 0) -> ValidationLink:
    """Posterior draws of the link recalibration from validation data.

    Every iteration picks a stored draw at random, forms ``Y*`` at the
    validation rows with ``preferred.predict``, then updates each active
    ``(kappa_j0, kappa_j1)`` by one slice move apiece under a flat prior.
    Kinds with fewer than ``min_observations`` validation rows stay at (0, 1).
    """
    if len(data) == 0:
        raise EngineError("validation data is empty")
    if len(chain) == 0:
        raise EngineError("chain has no stored draws")
    stream = RandomStream(config.seed, chain_id).child(VALIDATION_STREAM)
    kappa = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    kinds = [k for k in ResponseKind if np.sum(data.kind == k) >= min_observations]
    masks = {k: data.kind == k for k in kinds}
    out = np.empty((config.n_stored, 6))
    d_out = 0
    for b in range(1, config.iterations + 1):
        d = int(stream.generator.integers(len(chain)))
        y_star = preferred.predict(chain.theta_at(d), design, stream)
        v = chain.gamma[d, 0]
        for k in kinds:
            m = masks[k]
            z, trials, y = data.value[m], data.trials[m].astype(float), y_star[m]
            j = int(k) - 1
            for slot, name in ((j, KAPPA_NAMES[j]), (3 + j, KAPPA_NAMES[3 + j])):
                def logpost(x, slot=slot):
                    trial = kappa.copy()
                    trial[slot] = x
                    return _log_lik(k, z, trials, trial[j] + trial[3 + j] * y, v)

                try:
                    kappa[slot] = slice_sample(stream, logpost, kappa[slot], config=slice_cfg)
                except SliceError as exc:
                    raise EngineError(f"slice update of {name} failed at iteration {b}: {exc}") from exc
        if config.keeps(b):
            out[d_out] = kappa
            d_out += 1
    return ValidationLink(out, "linear", tuple(k in kinds for k in ResponseKind))


@dataclass
class Forecast:
    """Predictive draws at the test rows with their per-cell mean and variance."""

    draws: np.ndarray
    kinds: np.ndarray
    trials: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def mean(self):
        return self.draws.mean(axis=0)

    @property
    def variance(self):
        return self.draws.var(axis=0, ddof=1) if len(self.draws) > 1 else np.zeros(self.draws.shape[1])


def draw_data(stream, kinds, trials, eta, v) -> np.ndarray:
    """Draw data given link-scale values: Normal(eta, v), Binomial(b, logistic(eta)) or Poisson(exp(eta))."""
    kinds = np.asarray(kinds)
    z = np.empty(len(kinds))
    g, b, p = (kinds == k for k in ResponseKind)
    if g.any():
        z[g] = sample_normal(stream, eta[g], v)
    if b.any():
        prob = inverse_link_by_kind(np.full(b.sum(), int(ResponseKind.BINOMIAL)), eta[b])
        z[b] = stream.generator.binomial(trials[b], prob)
    if p.any():
        with np.errstate(over="ignore"):
            rate = np.exp(eta[p])
        if not np.all(np.isfinite(rate)):
            raise EngineError("Poisson rate overflowed; the latent draw is too large")
        z[p] = sample_poisson(stream, rate)
    return z


def run_algorithm3(data: MultiResponseDataset, chain: ChainOutput, preferred: PreferredModel, design,
                   link: ValidationLink = None, n_draws: int = None, seed: int = None,
                   chain_id: int = 0) -> Forecast:
    """Predictive draws of the data at the test rows.

    Each draw takes a random stored parameter record (for ``Y**``) and a
    random ``kappa`` draw, then samples the data from the recalibrated model.
    """
    if len(chain) == 0:
        raise EngineError("chain has no stored draws")
    link = link or ValidationLink.identity()
    seed = chain.config.seed if seed is None else seed
    stream = RandomStream(seed, chain_id).child(FORECAST_STREAM)
    n_draws = n_draws or len(chain)
    trials = data.trials.astype(np.int64)
    out = np.empty((n_draws, len(data)))
    for b in range(n_draws):
        d = int(stream.generator.integers(len(chain)))
        k = int(stream.generator.integers(len(link.draws)))
        y = preferred.predict(chain.theta_at(d), design, stream)
        intercept, slope = link.intercept_slope(k, data.kind)
        out[b] = draw_data(stream, data.kind, trials, intercept + slope * y, chain.gamma[d, 0])
    return Forecast(out, data.kind.copy(), trials)


def cross_covariance(chain: ChainOutput, i: int, m: int) -> float:
    """Monte Carlo covariance (divisor D - 1) of the data-scale means at cells ``i`` and ``m``."""
    means = chain.data_scale_means()
    if len(means) < 2:
        return 0.0
    return float(np.cov(means[:, i], means[:, m])[0, 1])


def _fmt(values) -> str:
    return "[" + ",".join(format(float(x), ".17g") for x in np.ravel(values)) + "]"


def write_chain_dump(chain: ChainOutput, path):
    """Write one JSON object per stored iteration.

    Field order is fixed: ``iteration``, ``h``, ``gamma`` (ordered as
    ``v, alpha2, kappa2, alpha3, kappa3``), ``y``, then ``theta.<name>`` for
    each parameter block in insertion order. Every block is a flat array and
    floats carry 17 significant digits.
    """
    with Path(path).open("w", newline="\n") as fh:
        for d in range(len(chain)):
            parts = [f'"iteration":{int(chain.iterations[d])}', f'"h":{_fmt(chain.h[d])}',
                     f'"gamma":{_fmt(chain.gamma[d])}', f'"y":{_fmt(chain.y[d])}']
            parts += [f'"theta.{k}":{_fmt(v[d])}' for k, v in chain.theta.items()]
            fh.write("{" + ",".join(parts) + "}\n")


def save_chain(chain: ChainOutput, path):
    """Store a chain as a compressed ``.npz`` archive."""
    cfg = chain.config
    arrays = {f"theta.{k}": v for k, v in chain.theta.items()}
    np.savez_compressed(
        path, h=chain.h, gamma=chain.gamma, y=chain.y, iterations=chain.iterations, kinds=chain.kinds,
        multiplier=chain.multiplier, fingerprint=np.array(chain.fingerprint), chain_id=np.array(chain.chain_id),
        config=np.array([cfg.iterations, cfg.burn_in, cfg.thin, cfg.seed, cfg.chains]), **arrays,
    )


def load_chain(path) -> ChainOutput:
    with np.load(path) as f:
        theta = {k.split(".", 1)[1]: f[k] for k in f.files if k.startswith("theta.")}
        it, burn, thin, seed, chains = (int(x) for x in f["config"])
        return ChainOutput(f["h"], f["gamma"], f["y"], theta, f["iterations"], str(f["fingerprint"]),
                           ChainConfig(it, burn, thin, seed, chains), f["kinds"], f["multiplier"],
                           int(f["chain_id"]))
