"""
Tests for the run configuration file format, overrides and validation.
"""

import pytest

from lesionnet.exceptions import ConfigValidationException
from lesionnet.run_config import RunConfig


def test_defaults():
    """Without a file every section takes its defaults."""
    config = RunConfig.load(None)
    assert config.arch.block_sizes == (6, 12, 11)
    assert config.arch.freeze_boundary == (3, 6)
    assert config.loss.lambda_ == 0.8
    assert config.optim.max_iter == 75000
    assert config.data.split_ratio == 0.8
    assert config.run.seed == 0


def test_file_and_overrides(tmp_path):
    """Command-line overrides win over file values."""
    path = tmp_path / "run.cfg"
    path.write_text(
        "# tiny run\n"
        "arch.block_sizes = 1,2\n"
        "arch.growth_rate = 4   # k\n"
        "arch.freeze_boundary = none\n"
        "loss.lambda = 0.5\n"
        "\n"
        "run.seed = 7\n"
    )
    config = RunConfig.load(str(path), ["run.seed=9", "optim.batch_size = 8"])
    assert config.arch.block_sizes == (1, 2)
    assert config.arch.growth_rate == 4
    assert config.arch.stem_channels == 8
    assert config.arch.freeze_boundary is None
    assert config.loss.lambda_ == 0.5
    assert config.run.seed == 9
    assert config.optim.batch_size == 8
    assert config.source == str(path)


def test_environment_names_the_config_file(tmp_path, monkeypatch):
    """LESIONNET_CONFIG is read when no path is given."""
    path = tmp_path / "env.cfg"
    path.write_text("run.seed = 3\n")
    monkeypatch.setenv("LESIONNET_CONFIG", str(path))
    assert RunConfig.load().run.seed == 3


def test_bool_values():
    """Booleans accept the usual spellings."""
    assert RunConfig.from_values({"run.reinitialize": "no"}).run.reinitialize is False
    assert RunConfig.from_values({"run.reinitialize": "On"}).run.reinitialize is True
    with pytest.raises(ConfigValidationException):
        RunConfig.from_values({"run.reinitialize": "maybe"})


def test_problems_are_collected_across_sections():
    """Unknown keys, unparsable and invalid values are reported together."""
    with pytest.raises(ConfigValidationException) as exc:
        RunConfig.from_values(
            {
                "arch.depth": "121",
                "nosuch.key": "1",
                "optim.batch_size": "many",
                "loss.alpha": "2.0",
                "data.split_ratio": "0",
            }
        )
    problems = exc.value.problems
    assert len(problems) == 5
    text = "\n".join(problems)
    assert "'arch.depth'" in text
    assert "'nosuch.key'" in text
    assert "optim.batch_size" in text
    assert "loss.alpha" in text
    assert "data.split_ratio" in text


def test_malformed_lines(tmp_path):
    """Lines without '=' are reported with their position."""
    path = tmp_path / "bad.cfg"
    path.write_text("run.seed = 1\njust words\n")
    with pytest.raises(ConfigValidationException) as exc:
        RunConfig.load(str(path), ["novalue"])
    assert len(exc.value.problems) == 2
    assert f"{path}:2" in exc.value.problems[0]
    with pytest.raises(ConfigValidationException):
        RunConfig.load(str(tmp_path / "missing.cfg"))


def test_resolved_text_round_trips(tmp_path):
    """The resolved file loads back into an identical configuration."""
    config = RunConfig.from_values({"arch.block_sizes": "6,12,8", "loss.lambda": "0.25", "run.dtype": "float64"})
    path = config.write_resolved(tmp_path / "resolved.cfg")
    again = RunConfig.load(str(path))
    assert again.resolved_text() == config.resolved_text()
    assert again.digest() == config.digest()
    assert "loss.lambda = 0.25\n" in config.resolved_text()
    assert "arch.freeze_boundary = 3,6\n" in config.resolved_text()


def test_digest_tracks_values():
    """Any changed value changes the digest."""
    a = RunConfig.from_values({})
    b = RunConfig.from_values({"optim.base_lr": "0.02"})
    assert len(a.digest()) == 32
    assert a.digest() != b.digest()
    assert a.to_metadata()["optim.base_lr"] == "0.01"


def test_digest_ignores_locations_and_resume():
    """Paths and the resume checkpoint change neither the digest nor the metadata."""
    a = RunConfig.from_values({})
    b = RunConfig.from_values(
        {"paths.work_dir": "elsewhere", "paths.log_file": "other.log", "run.resume": "work/iter_0000002.dckp"}
    )
    assert a.digest() == b.digest()
    assert a.to_metadata() == b.to_metadata()
    assert "run.resume" not in a.to_metadata()
    assert not any(k.startswith("paths.") for k in a.to_metadata())
    assert a.resolved_text() != b.resolved_text()


def test_describe_keys_lists_every_key():
    """Every key appears once with its help text."""
    text = RunConfig.describe_keys()
    keys = [k for k, _ in RunConfig().items()]
    for key in keys:
        assert f"  {key} = " in text
    assert len(text.splitlines()) == len(keys)
    assert "center-loss weight" in text


if __name__ == "__main__":
    pytest.main([__file__])
