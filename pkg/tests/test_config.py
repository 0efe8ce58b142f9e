import pytest

from hgt.config import DEFAULTS, ConfigError, RunConfig


class TestParse:
    def test_defaults(self):
        cfg = RunConfig.parse("")
        assert cfg.values == DEFAULTS

    def test_typed_values_and_comments(self):
        cfg = RunConfig.parse(
            "# comment\n\nchain.iterations = 50\nsim.hide_x2 = false\nsplit.test_days = 9, 10\n"
            "sim.methods = saturated\nlink.mode = linear\n"
        )
        assert cfg["chain.iterations"] == 50
        assert cfg["sim.hide_x2"] is False
        assert cfg["split.test_days"] == (9, 10)
        assert cfg["sim.methods"] == ("saturated",)
        assert cfg["link.mode"] == "linear"

    def test_inline_comments(self):
        cfg = RunConfig.parse("link.mode = identity   # skip validation\nsim.methods = truth  # control")
        assert cfg["link.mode"] == "identity" and cfg["sim.methods"] == ("truth",)

    def test_readme_example_parses(self):
        from pathlib import Path

        readme = (Path(__file__).parents[1] / "README.md").read_text()
        block = readme.split("### Configuration file", 1)[1].split("```", 2)[1]
        cfg = RunConfig.parse(block).validate()
        assert cfg["split.test_days"] == (78,) and cfg["sim.methods"] == ("hgt-sme", "saturated")

    def test_later_entry_wins(self):
        assert RunConfig.parse("chain.seed = 1\nchain.seed = 2")["chain.seed"] == 2

    def test_unknown_key_names_line(self):
        with pytest.raises(ConfigError, match=r"x.cfg:2: unknown key 'chain.iteratons'"):
            RunConfig.parse("chain.seed = 1\nchain.iteratons = 3", "x.cfg")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="chain.iterations"):
            RunConfig.parse("chain.iterations = many")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match=":1:"):
            RunConfig.parse("chain.iterations 5")

    def test_load(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("basis.r = 7\n")
        assert RunConfig.load(path)["basis.r"] == 7


class TestValidate:
    @pytest.mark.parametrize("text", [
        "chain.iterations = 10\nchain.burn_in = 10",
        "basis.r = 0",
        "basis.kind = wavelet",
        "link.mode = cubic",
        "split.train_end = 5\nsplit.validation_days = 5",
        "split.train_end = 5\nsplit.validation_days = 7\nsplit.test_days = 6",
    ])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            RunConfig.parse(text).validate()

    def test_accepts_ordered_split(self):
        cfg = RunConfig.parse("split.train_end = 76\nsplit.validation_days = 77\nsplit.test_days = 78")
        assert cfg.validate() is cfg
