"""Posterior summaries, residual checks, RMSE, R-hat and predictive coverage.

Percentiles use the nearest-rank rule on sorted draws (numpy's
``inverted_cdf`` method), so reported quantiles are always actual draws.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_PERCENTILES = (2.5, 50.0, 97.5)


def percentile(draws, q, axis=0):
    """Nearest-rank percentile(s) of ``draws`` along ``axis``."""
    return np.percentile(np.asarray(draws, dtype=float), q, axis=axis, method="inverted_cdf")


def _nonempty(draws, what="chain"):
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 0 or draws.shape[0] == 0:
        raise ValueError(f"{what} has no stored draws")
    return draws


def summarize(draws, q=DEFAULT_PERCENTILES) -> dict:
    """Mean and percentiles over the first (draw) axis.

    Parameters
    ----------
    draws : array of shape (D, ...)
    q : sequence of percentiles in [0, 100]

    Returns
    -------
    dict
        ``mean`` plus one entry ``p<q>`` per requested percentile.
    """
    draws = _nonempty(draws)
    out = {"mean": draws.mean(axis=0)}
    for level in q:
        out[f"p{level:g}"] = percentile(draws, level)
    return out


@dataclass
class IntervalReport:
    """Per-cell residual credible intervals and the share of them containing zero."""

    lower: np.ndarray
    upper: np.ndarray
    alpha: float

    @property
    def contains_zero(self) -> np.ndarray:
        return (self.lower <= 0.0) & (0.0 <= self.upper)

    @property
    def fraction(self) -> float:
        return float(np.mean(self.contains_zero))


def residual_draws(h_draws, y_draws) -> np.ndarray:
    """``delta = h - Y`` for every stored draw."""
    if h_draws is None or y_draws is None:
        raise ValueError("residuals need stored draws of both h and y")
    h_draws, y_draws = np.asarray(h_draws, dtype=float), np.asarray(y_draws, dtype=float)
    if h_draws.shape != y_draws.shape:
        raise ValueError(f"h draws {h_draws.shape} and y draws {y_draws.shape} differ in shape")
    return h_draws - y_draws


def residual_intervals(chain, alpha=0.05) -> IntervalReport:
    """Equal-tailed ``1 - alpha`` intervals of the residuals, one per cell."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    delta = _nonempty(residual_draws(getattr(chain, "h", None), getattr(chain, "y", None)))
    lower, upper = percentile(delta, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return IntervalReport(lower, upper, alpha)


def residual_vs_covariate(chain, covariate) -> np.ndarray:
    """Rows of (covariate value, posterior median residual), sorted by covariate."""
    delta = _nonempty(residual_draws(chain.h, chain.y))
    covariate = np.asarray(covariate, dtype=float)
    if covariate.shape != delta.shape[1:]:
        raise ValueError("one covariate value per cell is required")
    table = np.column_stack([covariate, percentile(delta, 50.0)])
    return table[np.argsort(table[:, 0], kind="stable")]


def rmse(estimate, truth) -> float:
    """Root mean squared difference.

    Differences are scaled by the largest one before squaring, so very large
    errors (exponentiated latent values) do not overflow.
    """
    estimate, truth = np.asarray(estimate, dtype=float), np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"length mismatch: {estimate.shape} vs {truth.shape}")
    diff = np.abs(estimate - truth)
    scale = diff.max(initial=0.0)
    if scale == 0.0 or not np.isfinite(scale):
        return float(scale)
    return float(scale * np.sqrt(np.mean((diff / scale) ** 2)))


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor for a scalar monitored over several chains.

    Uses ``R^2 = Vhat / W0`` with ``Vhat = W0 + B / n``, where ``W0`` is the
    average within-chain variance with divisor ``n`` and ``B / n`` the variance
    of the chain means. The classic between/within decomposition is unchanged;
    the divisor choice makes identical chains give exactly 1.

    Parameters
    ----------
    chains : (m, n) array
        ``m >= 2`` chains of equal length ``n >= 10``.
    """
    chains = np.asarray(chains, dtype=float)
    if chains.ndim != 2 or chains.shape[0] < 2:
        raise ValueError("at least two chains are required")
    m, n = chains.shape
    if n < 10:
        raise ValueError("chains must hold at least 10 draws")
    w0 = chains.var(axis=1).mean()
    b_over_n = chains.mean(axis=1).var(ddof=1)
    if w0 == 0:
        return 1.0 if b_over_n == 0 else float("inf")
    return float(np.sqrt(1.0 + b_over_n / w0))


def predictive_coverage(forecast_draws, held_out, alpha=0.05, forecast_cells=None, held_out_cells=None) -> float:
    """Share of held-out values inside their per-cell ``1 - alpha`` predictive interval.

    When cell identifiers are supplied they must match one to one, and the
    held-out values are reordered to the forecast order.
    """
    draws = _nonempty(forecast_draws, "forecast")
    held_out = np.asarray(held_out, dtype=float)
    if forecast_cells is not None or held_out_cells is not None:
        fc = [str(c) for c in (forecast_cells if forecast_cells is not None else range(draws.shape[1]))]
        hc = [str(c) for c in (held_out_cells if held_out_cells is not None else range(len(held_out)))]
        unmatched = sorted(set(fc) ^ set(hc))
        if unmatched:
            raise ValueError(f"forecast and held-out cells do not align; unmatched: {unmatched}")
        pos = {c: i for i, c in enumerate(hc)}
        held_out = held_out[[pos[c] for c in fc]]
    if draws.shape[1:] != held_out.shape:
        raise ValueError(f"forecast covers {draws.shape[1:]} cells but {held_out.shape} values are held out")
    lower, upper = percentile(draws, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(np.mean((lower <= held_out) & (held_out <= upper)))


def write_report_csv(path, rows, header=("cell", "statistic", "value")):
    """Write ``rows`` under ``header``; floats use 17 significant digits."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])


def summary_rows(name, summary: dict):
    """Flatten a :func:`summarize` result into (cell, statistic, value) rows."""
    for stat, values in summary.items():
        for i, v in enumerate(np.atleast_1d(values)):
            yield (f"{name}[{i}]", stat, float(v))
