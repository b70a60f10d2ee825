import pytest

from domainfusion import config
from domainfusion.errors import ConfigError


class TestParse:
    def test_defaults_roundtrip(self):
        cfg = config.default_config()
        text = config.render_config(cfg)
        assert config.parse_config(text) == cfg

    def test_comments_and_blanks_ignored(self):
        text = config.render_config(config.default_config())
        noisy = "# leading comment\n\n" + text.replace(
            "[gan]", "# about gans\n[gan]"
        )
        assert config.parse_config(noisy) == config.default_config()

    def test_missing_key_named(self):
        text = config.render_config(config.default_config())
        broken = "\n".join(
            line for line in text.splitlines() if not line.startswith("alpha")
        )
        with pytest.raises(ConfigError, match="alpha"):
            config.parse_config(broken)

    def test_missing_section_named(self):
        text = config.render_config(config.default_config())
        lines = text.splitlines()
        start = lines.index("[drs]")
        end = lines.index("[augment]")
        with pytest.raises(ConfigError, match=r"\[drs\]"):
            config.parse_config("\n".join(lines[:start] + lines[end:]))

    def test_unknown_key_rejected(self):
        text = config.render_config(config.default_config())
        with pytest.raises(ConfigError, match="mystery"):
            config.parse_config(text.replace("[gan]", "[gan]\nmystery = 1"))

    def test_unknown_section_rejected(self):
        text = config.render_config(config.default_config())
        with pytest.raises(ConfigError, match=r"\[extra\]"):
            config.parse_config(text + "\n[extra]\nx = 1\n")

    def test_bad_type_rejected(self):
        text = config.render_config(config.default_config())
        with pytest.raises(ConfigError, match="batch"):
            config.parse_config(text.replace("batch = 64", "batch = sixty-four"))

    def test_bad_bool_rejected(self):
        text = config.render_config(config.default_config())
        with pytest.raises(ConfigError, match="spectral_norm"):
            config.parse_config(
                text.replace("spectral_norm = true", "spectral_norm = yes")
            )

    def test_key_outside_section(self):
        with pytest.raises(ConfigError, match="outside"):
            config.parse_config("side = 16\n")

    def test_duplicate_key_rejected(self):
        text = config.render_config(config.default_config())
        with pytest.raises(ConfigError, match="duplicate"):
            config.parse_config(text.replace("alpha = 0.5", "alpha = 0.5\nalpha = 0.7"))

    def test_strlist_parsing(self):
        text = config.render_config(config.default_config())
        text = text.replace(
            "outer_kinds = outline-shapes,striped-noise",
            "outer_kinds = striped-noise , outline-shapes",
        )
        cfg = config.parse_config(text)
        assert cfg["data"]["outer_kinds"] == ["striped-noise", "outline-shapes"]


class TestSemantics:
    def replace(self, old, new):
        text = config.render_config(config.default_config())
        return text.replace(old, new)

    def test_bad_mode(self):
        with pytest.raises(ConfigError, match="mode"):
            config.parse_config(self.replace("mode = df", "mode = wgan"))

    def test_alpha_range(self):
        with pytest.raises(ConfigError, match="alpha"):
            config.parse_config(self.replace("alpha = 0.5", "alpha = 1.5"))

    def test_split_budget_checked(self):
        with pytest.raises(ConfigError, match="n_target"):
            config.parse_config(self.replace("n_target = 500", "n_target = 400"))

    def test_class_divisibility(self):
        with pytest.raises(ConfigError, match="divisible"):
            config.parse_config(self.replace("n_outer = 2000", "n_outer = 2001"))
