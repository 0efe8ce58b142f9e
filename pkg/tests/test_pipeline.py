import numpy as np
import pytest

from hgt.engine import ChainConfig
from hgt.pipeline import PipelineConfig, StageError, fitted_vs_observed, run_pipeline
from hgt.samplers import RandomStream
from hgt.sim import PanelConfig, generate_panel


@pytest.fixture(scope="module")
def splits():
    data, _ = generate_panel(PanelConfig(n_regions=2, n_days=12, region_knots=3, shared_knots=5), RandomStream(2, 0))
    return data.split_by_day(10, [11], [12])


def config(**kw):
    return PipelineConfig(region_knots=3, shared_knots=5, chain=ChainConfig(40, 20, seed=1), min_validation=1, **kw)


class TestPipeline:
    def test_full_run(self, splits):
        train, val, test = splits
        res = run_pipeline(train, val, test, config())
        assert res.link.mode == "linear"
        assert res.forecast.draws.shape[1] == len(test)
        assert 0.0 <= res.coverage <= 1.0
        assert len(res.residuals.lower) == len(train)
        table = fitted_vs_observed(res, train)
        assert table.shape == (len(train), 4)
        assert np.array_equal(table[:, 2], train.value)

    def test_identity_skips_validation(self, splits):
        train, val, test = splits
        res = run_pipeline(train, val, test, config(link_mode="identity"))
        assert res.link.mode == "identity"

    def test_no_test_days(self, splits):
        train, val, _ = splits
        res = run_pipeline(train, val, None, config())
        assert res.forecast is None and res.coverage is None

    def test_stage_named_on_failure(self, splits):
        train, val, test = splits
        stray = test.subset(np.ones(len(test), dtype=bool))
        stray.region = np.array(["elsewhere" if k == 3 else r for k, r in zip(stray.kind, stray.region)], dtype=object)
        with pytest.raises(StageError, match="stage 'forecast'"):
            run_pipeline(train, val, stray, config(link_mode="identity"))

    def test_bad_link_mode(self):
        with pytest.raises(ValueError):
            PipelineConfig(link_mode="cubic")
