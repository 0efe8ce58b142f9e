"""Simulation designs and the replication harness.

* The Friedman multi-response design: ``h(x) = 10 sin(pi x1 x2) + 20 (x3 - .5)^2
  + 10 x4 + 5 x5`` on ten Uniform(0, 1) covariates, observed through Normal(h, 1),
  Binomial(300, logistic(h)) and Poisson(exp(h)) data.
* A synthetic multi-series panel shaped like a daily regional count study
  (Gaussian and binomial daily series plus regional cases, deaths and
  recoveries), generated from the mixed effects model class itself.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import IndicatorDesign, JointBasisLayout, block_expand, knn_adjacency, morans_basis
from .data import MultiResponseDataset, ResponseKind
from .diagnostics import percentile, residual_intervals, rmse
from .engine import ChainConfig, run_algorithm1
from .samplers import RandomStream, sample_poisson
from .sme import SmeModel, SmePriors
from .transform import data_scale_posterior_mean, inverse_link_by_kind

METHODS = ("hgt-sme", "saturated", "truth")
BENCHMARK_HEADER = ("replicate", "method", "rmse", "containment_fraction", "wall_seconds")
DATA_STREAM = 100


def friedman_h(x):
    """Friedman surface on the last axis of ``x`` (only the first five entries matter)."""
    x = np.asarray(x, dtype=float)
    x1, x2, x3, x4, x5 = (x[..., k] for k in range(5))
    return 10 * np.sin(np.pi * x1 * x2) + 20 * (x3 - 0.5) ** 2 + 10 * x4 + 5 * x5


@dataclass(frozen=True)
class FriedmanConfig:
    """Sizes and fitting budget of the Friedman study.

    ``I`` latent cells exist for every response kind; the first ``I_j`` cells of
    kind ``j`` are observed.
    """

    I: int = 1000
    I1: int = 350
    I2: int = 350
    I3: int = 200
    trials: int = 300
    replicates: int = 20
    seed: int = 0
    hide_x2: bool = True
    n_covariates: int = 10
    iterations: int = 2000
    burn_in: int = 1000
    r: int = 500
    neighbours: int = 10
    methods: tuple = ("hgt-sme", "saturated")

    def __post_init__(self):
        if max(self.I1, self.I2, self.I3) > self.I:
            raise ValueError("each I_j must be at most I")
        if self.I1 + self.I2 + self.I3 == 0:
            raise ValueError("at least one observation is required")
        if self.n_covariates < 5:
            raise ValueError("the surface needs at least five covariates")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; available: {', '.join(METHODS)}")

    @property
    def sizes(self):
        return {ResponseKind.GAUSSIAN: self.I1, ResponseKind.BINOMIAL: self.I2, ResponseKind.POISSON: self.I3}

    @property
    def fitted_columns(self):
        return [k for k in range(self.n_covariates) if not (self.hide_x2 and k == 1)]


@dataclass
class SimulatedData:
    """Observed dataset plus the latent-cell truth kept for scoring.

    Latent cells are ordered kind by kind (all ``I`` Gaussian cells, then
    binomial, then Poisson); ``observed`` indexes the cells that carry data,
    in dataset order.
    """

    dataset: MultiResponseDataset
    x: np.ndarray
    cell_kind: np.ndarray
    h: np.ndarray
    observed: np.ndarray

    @property
    def truth(self) -> np.ndarray:
        """``g^{-1}(h)`` at the observed cells (a probability for binomial cells)."""
        return inverse_link_by_kind(self.cell_kind[self.observed], self.h[self.observed])


def generate_multiresponse(config: FriedmanConfig, stream: RandomStream) -> SimulatedData:
    """Draw covariates and data for one replicate of the Friedman design."""
    kinds = np.repeat([int(k) for k in ResponseKind], config.I)
    x = stream.uniform((3 * config.I, config.n_covariates))
    h = friedman_h(x)
    observed = np.concatenate([pos * config.I + np.arange(config.sizes[k]) for pos, k in enumerate(ResponseKind)])
    k_obs, h_obs = kinds[observed], h[observed]
    z = np.empty(len(observed))
    g, b, p = (k_obs == k for k in ResponseKind)
    z[g] = h_obs[g] + stream.generator.standard_normal(g.sum())
    z[b] = stream.generator.binomial(config.trials, inverse_link_by_kind(k_obs[b], h_obs[b]))
    z[p] = sample_poisson(stream, np.exp(h_obs[p]))
    n = len(observed)
    data = MultiResponseDataset(
        kind=k_obs, value=z, trials=np.where(b, config.trials, 1), region=[""] * n, day=np.ones(n, dtype=int),
        death_flag=np.zeros(n, dtype=int), recovery_flag=np.zeros(n, dtype=int),
        covariates=x[observed][:, config.fitted_columns],
    )
    return SimulatedData(data, x, kinds, h, observed)


def friedman_design(sim: SimulatedData, config: FriedmanConfig):
    """Block-expanded X and Moran basis over all latent cells, restricted to observed rows.

    The adjacency is a k-nearest-neighbour graph on the fitted covariates.
    """
    xf = sim.x[:, config.fitted_columns]
    X = block_expand(xf, sim.cell_kind)
    W = knn_adjacency(xf, config.neighbours)
    r = min(config.r, len(sim.cell_kind) - X.X.shape[1])
    S = morans_basis(X, W, r).S
    return X.X[sim.observed], S[sim.observed]


def quadratic_r2(x, y) -> float:
    """Coefficient of determination of a least-squares quadratic fit of ``y`` on ``x``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    A = np.column_stack([np.ones_like(x), x, x * x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    total = y - y.mean()
    return float(1 - resid @ resid / (total @ total))


@dataclass
class ReplicateResult:
    replicate: int
    rows: list
    x2_r2: float = float("nan")
    error: str = ""


def run_replicate(config: FriedmanConfig, replicate: int) -> ReplicateResult:
    """Generate one dataset, fit every requested method and score it."""
    stream = RandomStream(config.seed, replicate).child(DATA_STREAM)
    sim = generate_multiresponse(config, stream)
    truth = sim.truth
    rows = []
    result = ReplicateResult(replicate, rows)
    chain = None
    start = time.perf_counter()
    if "hgt-sme" in config.methods or "saturated" in config.methods:
        X, S = friedman_design(sim, config)
        chain = run_algorithm1(sim.dataset, SmeModel(X, S, SmePriors()),
                               ChainConfig(config.iterations, config.burn_in, seed=config.seed), chain_id=replicate)
    fit_seconds = time.perf_counter() - start
    if "hgt-sme" in config.methods:
        estimate = inverse_link_by_kind(chain.kinds, chain.y).mean(axis=0)
        report = residual_intervals(chain)
        rows.append((replicate, "hgt-sme", rmse(estimate, truth), report.fraction, fit_seconds))
        if config.hide_x2:
            median_delta = percentile(chain.h - chain.y, 50.0)
            result.x2_r2 = quadratic_r2(sim.x[sim.observed, 1], median_delta)
    if "saturated" in config.methods:
        t0 = time.perf_counter()
        mult = sim.dataset.multiplier
        estimate = np.mean([data_scale_posterior_mean(sim.dataset, chain.hyper_at(d)) for d in range(len(chain))],
                           axis=0) / mult
        rows.append((replicate, "saturated", rmse(estimate, truth), float("nan"), time.perf_counter() - t0))
    if "truth" in config.methods:
        rows.append((replicate, "truth", rmse(truth, truth), float("nan"), 0.0))
    return result


def run_benchmark(config: FriedmanConfig, replicates=None, progress=None) -> list:
    """Run every replicate; a failing replicate is recorded and the harness moves on."""
    results = []
    for rep in range(config.replicates if replicates is None else replicates):
        try:
            res = run_replicate(config, rep)
        except Exception as exc:  # recorded per replicate by design
            res = ReplicateResult(rep, [], error=f"{type(exc).__name__}: {exc}")
        results.append(res)
        if progress:
            progress(res)
    return results


def write_benchmark_csv(results, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCHMARK_HEADER)
        for res in results:
            for row in res.rows:
                w.writerow([row[0], row[1]] + [f"{v:.17g}" for v in row[2:]])


def write_residual_csv(results, path):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("replicate", "containment_fraction", "x2_quadratic_r2", "error"))
        for res in results:
            frac = next((row[3] for row in res.rows if row[1] == "hgt-sme"), float("nan"))
            w.writerow((res.replicate, f"{frac:.17g}", f"{res.x2_r2:.17g}", res.error))


@dataclass(frozen=True)
class PanelConfig:
    """A daily multi-series panel: one Gaussian and one binomial series, and per region
    daily cases, deaths and recoveries (Poisson)."""

    n_regions: int = 20
    n_days: int = 78
    trials: int = 100
    region_knots: int = 10
    shared_knots: int = 25
    sigma2_eta: float = 1.0
    sigma2_xi: float = 0.02
    gaussian_v: float = 0.05
    intercepts: tuple = (0.0, 0.0, 3.0)
    flag_effects: tuple = (-2.0, -1.0)


@dataclass
class PanelTruth:
    beta: np.ndarray
    eta: np.ndarray
    y: np.ndarray
    layout: JointBasisLayout
    design: IndicatorDesign
    extra: dict = field(default_factory=dict)


def generate_panel(config: PanelConfig, stream: RandomStream):
    """Simulate the panel from the mixed effects model class.

    ``Y = X beta + S eta + xi`` with ``eta ~ Normal(0, sigma2_eta)`` and
    ``xi ~ Normal(0, sigma2_xi)``; data follow Normal(Y, v), Binomial(b,
    logistic(Y)) and Poisson(exp(Y)).
    """
    kinds, regions, days, death, recovery = [], [], [], [], []
    for t in range(1, config.n_days + 1):
        kinds += [int(ResponseKind.GAUSSIAN), int(ResponseKind.BINOMIAL)]
        regions += ["", ""]
        days += [t, t]
        death += [0, 0]
        recovery += [0, 0]
        for a in range(config.n_regions):
            for d_flag, u_flag in ((0, 0), (1, 0), (0, 1)):
                kinds.append(int(ResponseKind.POISSON))
                regions.append(f"region{a:03d}")
                days.append(t)
                death.append(d_flag)
                recovery.append(u_flag)
    n = len(kinds)
    kinds = np.array(kinds)
    skeleton = MultiResponseDataset(kind=kinds, value=np.zeros(n), trials=np.where(kinds == 2, config.trials, 1),
                                    region=regions, day=days, death_flag=death, recovery_flag=recovery,
                                    n_days=config.n_days)
    layout = JointBasisLayout.from_dataset(skeleton, config.region_knots, config.shared_knots)
    design = IndicatorDesign.from_dataset(skeleton)
    X = design.matrix(skeleton).X
    S = layout.matrix(skeleton).S
    beta = np.array([*config.intercepts, *config.flag_effects])
    eta = np.sqrt(config.sigma2_eta) * stream.generator.standard_normal(S.shape[1])
    y = X @ beta + S @ eta + np.sqrt(config.sigma2_xi) * stream.generator.standard_normal(n)
    g, b, p = (kinds == k for k in ResponseKind)
    z = np.empty(n)
    z[g] = y[g] + np.sqrt(config.gaussian_v) * stream.generator.standard_normal(g.sum())
    z[b] = stream.generator.binomial(config.trials, inverse_link_by_kind(kinds[b], y[b]))
    z[p] = sample_poisson(stream, np.exp(y[p]))
    skeleton.value = z
    skeleton.validate()
    return skeleton, PanelTruth(beta, eta, y, layout, design)
