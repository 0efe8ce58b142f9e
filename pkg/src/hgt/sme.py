"""Spatio-temporal mixed effects model for transformed data.

The model is::

    h | beta, eta, xi   ~ Normal(X beta + S eta + xi, sigma2 I)
    eta | sigma2_eta    ~ Normal(0, sigma2_eta I_r)
    xi  | sigma2_xi     ~ Normal(0, sigma2_xi I_n)
    beta                ~ Normal(0, sigma2_beta I_p)
    sigma2, sigma2_eta, sigma2_xi ~ inverse gamma

and the latent process handed back to the composite sampler is
``Y = X beta + S eta + xi``. All full conditionals are conjugate, so one
sweep is a sequence of Gaussian and inverse-gamma draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .diagnostics import percentile
from .samplers import RandomStream, sample_inverse_gamma

VARIANCES = ("sigma2", "sigma2_eta", "sigma2_xi")


class SmeError(RuntimeError):
    """Numerical failure inside a Gibbs sweep."""


@dataclass(frozen=True)
class SmePriors:
    """Prior constants; inverse-gamma priors use (shape, rate)."""

    sigma2_beta: float = 100.0
    a_v: float = 1.0
    b_v: float = 1.0
    a_eta: float = 1.0
    b_eta: float = 1.0
    a_xi: float = 1.0
    b_xi: float = 1.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")


@dataclass
class SmeState:
    beta: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    sigma2: float = 1.0
    sigma2_eta: float = 1.0
    sigma2_xi: float = 1.0

    def __post_init__(self):
        for name in VARIANCES:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @classmethod
    def zeros(cls, p, r, n, **variances):
        return cls(np.zeros(p), np.zeros(r), np.zeros(n), **variances)

    def copy(self):
        return replace(self, beta=self.beta.copy(), eta=self.eta.copy(), xi=self.xi.copy())


@dataclass
class Gram:
    """Cached cross products ``X'X`` and ``S'S`` for repeated sweeps."""

    XtX: np.ndarray
    StS: np.ndarray

    @classmethod
    def of(cls, X, S):
        return cls(X.T @ X, S.T @ S)


def _draw_gaussian(stream, precision, linear, name):
    """Draw from Normal(Q^{-1} b, Q^{-1}) given precision Q and linear term b."""
    try:
        factor = scipy.linalg.cho_factor(precision, lower=True)
    except np.linalg.LinAlgError:
        cond = np.linalg.cond(precision)
        raise SmeError(f"{name} precision is not positive definite (condition number {cond:.3g})") from None
    mean = scipy.linalg.cho_solve(factor, linear)
    z = stream.generator.standard_normal(len(linear))
    L = np.tril(factor[0])
    return mean + scipy.linalg.solve_triangular(L.T, z, lower=False)


def _check_dims(h, X, S, state):
    n = len(h)
    if X.shape[0] != n or S.shape[0] != n:
        raise ValueError(f"X has {X.shape[0]} rows and S has {S.shape[0]} rows; expected {n}")
    if len(state.beta) != X.shape[1] or len(state.eta) != S.shape[1] or len(state.xi) != n:
        raise ValueError("state dimensions do not conform to X, S and h")


def gibbs_sweep(stream: RandomStream, h, X, S, state: SmeState, priors: SmePriors = None,
                fixed=(), gram: Gram = None) -> SmeState:
    """One full scan: beta, eta, xi, sigma2, sigma2_eta, sigma2_xi.

    Parameters
    ----------
    stream : RandomStream
    h : (n,) array
        Current transformed data.
    X, S : arrays of shape (n, p) and (n, r)
    state : SmeState
        Current state; not modified.
    priors : SmePriors, optional
    fixed : iterable of str
        Variance names (from ``sigma2``, ``sigma2_eta``, ``sigma2_xi``) held at
        their current values instead of being redrawn.
    gram : Gram, optional
        Precomputed ``X'X`` and ``S'S``.

    Returns
    -------
    SmeState
    """
    priors = priors or SmePriors()
    h = np.asarray(h, dtype=float)
    _check_dims(h, X, S, state)
    unknown = set(fixed) - set(VARIANCES)
    if unknown:
        raise ValueError(f"cannot fix {sorted(unknown)}; choose from {VARIANCES}")
    gram = gram or Gram.of(X, S)
    s = state.copy()
    n, p, r = len(h), X.shape[1], S.shape[1]

    prec = gram.XtX / s.sigma2 + np.eye(p) / priors.sigma2_beta
    s.beta = _draw_gaussian(stream, prec, X.T @ (h - S @ s.eta - s.xi) / s.sigma2, "beta")
    xb = X @ s.beta

    if r:
        prec = gram.StS / s.sigma2 + np.eye(r) / s.sigma2_eta
        s.eta = _draw_gaussian(stream, prec, S.T @ (h - xb - s.xi) / s.sigma2, "eta")
    se = S @ s.eta

    var_xi = 1.0 / (1.0 / s.sigma2 + 1.0 / s.sigma2_xi)
    s.xi = var_xi * (h - xb - se) / s.sigma2 + np.sqrt(var_xi) * stream.generator.standard_normal(n)

    if "sigma2" not in fixed:
        resid = h - xb - se - s.xi
        s.sigma2 = float(sample_inverse_gamma(stream, n / 2 + priors.a_v, resid @ resid / 2 + priors.b_v))
    if "sigma2_eta" not in fixed:
        s.sigma2_eta = float(sample_inverse_gamma(stream, r / 2 + priors.a_eta, s.eta @ s.eta / 2 + priors.b_eta))
    if "sigma2_xi" not in fixed:
        s.sigma2_xi = float(sample_inverse_gamma(stream, n / 2 + priors.a_xi, s.xi @ s.xi / 2 + priors.b_xi))
    return s


def latent_y(state: SmeState, X, S) -> np.ndarray:
    """``X beta + S eta + xi``."""
    return X @ state.beta + S @ state.eta + state.xi


def shared_effect_summary(eta_draws, S, days, columns=None, q=(2.5, 97.5)):
    """Per-day posterior summaries of ``sum_{i: t_i = t} S_i' eta``.

    Parameters
    ----------
    eta_draws : (D, r) array
        Stored draws of ``eta``.
    S : (n, r) array
    days : (n,) array of day indices
    columns : slice or index array, optional
        Restrict to a block of ``S`` (for example the shared block).
    q : percentiles reported alongside the mean

    Returns
    -------
    dict
        ``day`` (sorted unique days), ``mean`` and one array per percentile,
        keyed ``p2.5`` and so on.
    """
    eta_draws = np.atleast_2d(np.asarray(eta_draws, dtype=float))
    if eta_draws.shape[0] == 0:
        raise ValueError("no stored draws to summarise")
    S = np.asarray(S, dtype=float)
    if columns is not None:
        S, eta_draws = S[:, columns], eta_draws[:, columns]
    days = np.asarray(days)
    unique = np.unique(days)
    # (days x n) indicator times S gives per-day summed basis rows
    summed = (days[None, :] == unique[:, None]).astype(float) @ S
    values = eta_draws @ summed.T
    out = {"day": unique, "mean": values.mean(axis=0)}
    for level in q:
        out[f"p{level:g}"] = percentile(values, level, axis=0)
    return out


@dataclass
class SmeModel:
    """The mixed effects model packaged for the composite sampler.

    ``draw`` performs one Gibbs sweep given ``h`` and returns the latent
    process, the parameter record and the new state. ``predict`` produces a
    latent value at new design rows from one stored parameter record, with a
    fresh ``xi`` drawn from ``Normal(0, sigma2_xi)``.
    """

    X: np.ndarray
    S: np.ndarray
    priors: SmePriors = field(default_factory=SmePriors)
    fixed: tuple = ()
    initial_variances: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.S = np.asarray(self.S, dtype=float)
        if self.X.shape[0] != self.S.shape[0]:
            raise ValueError("X and S must have the same number of rows")
        self._gram = Gram.of(self.X, self.S)

    @property
    def n(self):
        return self.X.shape[0]

    def init(self, stream: RandomStream) -> SmeState:
        return SmeState.zeros(self.X.shape[1], self.S.shape[1], self.n, **self.initial_variances)

    def draw(self, h, state: SmeState, stream: RandomStream):
        state = gibbs_sweep(stream, h, self.X, self.S, state, self.priors, self.fixed, self._gram)
        theta = {
            "beta": state.beta,
            "eta": state.eta,
            "sigma2": state.sigma2,
            "sigma2_eta": state.sigma2_eta,
            "sigma2_xi": state.sigma2_xi,
        }
        return latent_y(state, self.X, self.S), theta, state

    def predict(self, theta: dict, design, stream: RandomStream) -> np.ndarray:
        X_new, S_new = design
        mean = np.asarray(X_new) @ theta["beta"] + np.asarray(S_new) @ theta["eta"]
        return mean + np.sqrt(theta["sigma2_xi"]) * stream.generator.standard_normal(len(mean))
