"""End-to-end fit, recalibration and forecast for day-indexed multi-series data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import IndicatorDesign, JointBasisLayout
from .data import MultiResponseDataset
from .diagnostics import IntervalReport, predictive_coverage, residual_intervals
from .engine import (
    ChainConfig,
    ChainOutput,
    Forecast,
    ValidationLink,
    run_algorithm1,
    run_algorithm2,
    run_algorithm3,
)
from .sme import SmeModel, SmePriors


@dataclass(frozen=True)
class PipelineConfig:
    region_knots: int = 10
    shared_knots: int = 25
    link_mode: str = "linear"
    min_validation: int = 10
    chain: ChainConfig = ChainConfig()
    priors: SmePriors = SmePriors()

    def __post_init__(self):
        if self.link_mode not in ("identity", "linear"):
            raise ValueError(f"link mode must be identity or linear, got {self.link_mode!r}")


@dataclass
class PipelineResult:
    chain: ChainOutput
    model: SmeModel
    layout: JointBasisLayout
    design: IndicatorDesign
    link: ValidationLink
    forecast: Forecast | None
    residuals: IntervalReport
    coverage: float | None

    def rows_for(self, dataset):
        """(X, S) for new rows under the training layout."""
        return self.design.matrix(dataset).X, self.layout.matrix(dataset).S


class StageError(RuntimeError):
    """Raised with the name of the pipeline stage that failed."""


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(f"stage '{name}' failed: {exc}") from exc


def run_pipeline(train: MultiResponseDataset, validation: MultiResponseDataset | None,
                 test: MultiResponseDataset | None, config: PipelineConfig = PipelineConfig(),
                 chain_id: int = 0) -> PipelineResult:
    """Basis assembly, composite sampling, optional link recalibration and forecasting."""
    layout = _stage("basis", JointBasisLayout.from_dataset, train, config.region_knots, config.shared_knots)
    design = IndicatorDesign.from_dataset(train)
    X = _stage("basis", design.matrix, train).X
    S = _stage("basis", layout.matrix, train).S
    model = SmeModel(X, S, config.priors)
    chain = _stage("fit", run_algorithm1, train, model, config.chain, chain_id=chain_id)
    residuals = _stage("diagnostics", residual_intervals, chain)

    def rows(data):
        return design.matrix(data).X, layout.matrix(data).S

    link = ValidationLink.identity()
    if config.link_mode == "linear" and validation is not None and len(validation):
        link = _stage("validate", lambda: run_algorithm2(validation, chain, model, rows(validation), config.chain,
                                                         min_observations=config.min_validation,
                                                         chain_id=chain_id))
    forecast, coverage = None, None
    if test is not None and len(test):
        forecast = _stage("forecast", lambda: run_algorithm3(test, chain, model, rows(test), link, chain_id=chain_id))
        coverage = predictive_coverage(forecast.draws, test.value)
    return PipelineResult(chain, model, layout, design, link, forecast, residuals, coverage)


def fitted_vs_observed(result: PipelineResult, train: MultiResponseDataset) -> np.ndarray:
    """Rows (day, kind, observed, posterior mean of the data-scale mean) for every training cell."""
    fitted = result.chain.data_scale_means().mean(axis=0)
    return np.column_stack([train.day, train.kind, train.value, fitted])
