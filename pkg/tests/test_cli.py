import pytest

from hgt.cli import main
from hgt.data import write_csv
from hgt.samplers import RandomStream
from hgt.sim import PanelConfig, generate_panel

RUN = """\
data.path = {data}
split.train_end = 10
split.validation_days = 11
split.test_days = 12
basis.region_knots = 3
basis.shared_knots = 5
chain.iterations = 30
chain.burn_in = 10
link.mode = {link}
link.min_observations = 1
"""


@pytest.fixture
def panel_config(tmp_path):
    data, _ = generate_panel(PanelConfig(n_regions=2, n_days=12, region_knots=3, shared_knots=5), RandomStream(5, 0))
    write_csv(data, tmp_path / "panel.csv")

    def make(link="linear"):
        path = tmp_path / f"{link}.cfg"
        path.write_text(RUN.format(data=tmp_path / "panel.csv", link=link))
        return path

    return make


def status(out):
    return (out / "status.txt").read_text().splitlines()


class TestFit:
    def test_outputs_and_headers(self, panel_config, tmp_path):
        out = tmp_path / "out"
        assert main(["fit", "--config", str(panel_config()), "--out", str(out), "--chains", "2"]) == 0
        assert status(out)[0] == "ok"
        expected = {
            "summary.csv": "cell,statistic,value,iterations",
            "residuals.csv": "chain,cell,lower,upper,contains_zero",
            "gelman_rubin.csv": "parameter,rhat",
            "fitted_vs_observed.csv": "day,kind,observed,fitted_mean",
            "shared_effect.csv": "day,mean,p2.5,p97.5",
            "link.csv": "parameter,mode,posterior_mean",
            "forecast.csv": "cell,kind,region,day,mean,variance,p2.5,p97.5,observed",
            "coverage.csv": "cells,coverage_95",
        }
        for name, header in expected.items():
            assert (out / name).read_text().splitlines()[0] == header
        assert (out / "chain_1.jsonl").exists() and (out / "chain_1.npz").exists()

    def test_rerun_is_byte_identical(self, panel_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["fit", "--config", str(panel_config()), "--out", str(out), "--seed", "42"]) == 0
        assert (a / "chain_0.jsonl").read_bytes() == (b / "chain_0.jsonl").read_bytes()

    def test_seed_changes_chain(self, panel_config, tmp_path):
        for seed in ("1", "2"):
            main(["fit", "--config", str(panel_config()), "--out", str(tmp_path / seed), "--seed", seed])
        assert (tmp_path / "1" / "chain_0.jsonl").read_bytes() != (tmp_path / "2" / "chain_0.jsonl").read_bytes()

    def test_identity_link_skips_validation(self, panel_config, tmp_path, monkeypatch):
        import hgt.pipeline

        def fail(*args, **kwargs):
            raise AssertionError("validation should be skipped")

        monkeypatch.setattr(hgt.pipeline, "run_algorithm2", fail)
        out = tmp_path / "out"
        assert main(["fit", "--config", str(panel_config("identity")), "--out", str(out)]) == 0
        assert "identity" in (out / "link.csv").read_text()

    def test_forecast_and_diagnose_reuse_chains(self, panel_config, tmp_path):
        out = tmp_path / "out"
        cfg = str(panel_config())
        assert main(["fit", "--config", cfg, "--out", str(out), "--chains", "2"]) == 0
        (out / "forecast.csv").unlink()
        assert main(["forecast", "--config", cfg, "--out", str(out), "--chains", "2"]) == 0
        assert (out / "forecast.csv").exists()
        assert main(["diagnose", "--config", cfg, "--out", str(out), "--chains", "2"]) == 0

    def test_threads_from_environment(self, panel_config, tmp_path, monkeypatch):
        monkeypatch.setenv("HGT_THREADS", "1")
        assert main(["fit", "--config", str(panel_config()), "--out", str(tmp_path / "o")]) == 0
        monkeypatch.setenv("HGT_THREADS", "lots")
        assert main(["fit", "--config", str(panel_config()), "--out", str(tmp_path / "o")]) == 1


class TestFailures:
    def test_missing_data_names_stage(self, tmp_path):
        cfg = tmp_path / "m.cfg"
        cfg.write_text(f"data.path = {tmp_path / 'nope.csv'}\n")
        out = tmp_path / "out"
        assert main(["fit", "--config", str(cfg), "--out", str(out)]) == 1
        assert status(out)[:2] == ["failed", "stage: ingest"]

    def test_invalid_rows_rejected(self, tmp_path):
        data = tmp_path / "bad.csv"
        data.write_text("series,value,trials,region,day,death_flag,recovery_flag\nbinomial,101,100,,1,,\n")
        cfg = tmp_path / "b.cfg"
        cfg.write_text(f"data.path = {data}\n")
        assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert ":2:" in status(tmp_path / "o")[2]

    def test_forecast_without_fit(self, panel_config, tmp_path):
        out = tmp_path / "out"
        assert main(["forecast", "--config", str(panel_config()), "--out", str(out)]) == 1
        assert status(out)[1] == "stage: load chains"

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("chain.iteratons = 3\n")
        assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "unknown key" in capsys.readouterr().err

    def test_unknown_method_lists_available(self, tmp_path):
        cfg = tmp_path / "s.cfg"
        cfg.write_text("sim.methods = hgt-sme, bogus\n")
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 1
        assert "available: hgt-sme, saturated, truth" in status(out)[2]

    def test_moran_rejected_for_fit(self, panel_config, tmp_path):
        cfg = panel_config()
        cfg.write_text(cfg.read_text() + "basis.kind = moran\n")
        assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1


class TestOtherCommands:
    def test_export_basis(self, panel_config, tmp_path):
        out = tmp_path / "out"
        assert main(["export-basis", "--config", str(panel_config()), "--out", str(out)]) == 0
        lines = (out / "basis.csv").read_text().splitlines()
        assert lines[0] == "row,col,value" and len(lines) > 1
        labels = (out / "basis_columns.csv").read_text().splitlines()
        # 5 shared + 2 regions x 3 + 5 gaussian + 5 binomial
        assert len(labels) == 1 + 5 + 6 + 5 + 5

    @pytest.mark.slow
    def test_simulate_smoke(self, tmp_path):
        import time

        cfg = tmp_path / "s.cfg"
        cfg.write_text("sim.replicates = 1\nchain.iterations = 10\nchain.burn_in = 5\n")
        out = tmp_path / "out"
        start = time.perf_counter()
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        assert time.perf_counter() - start < 60
        rows = (out / "benchmark.csv").read_text().splitlines()
        assert rows[0] == "replicate,method,rmse,containment_fraction,wall_seconds" and len(rows) == 3
