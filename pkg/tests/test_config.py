import pytest

from deadoil.config import TEMPLATE, parse_config, parse_text, parse_spec
from deadoil.errors import ConfigError


def test_template_parses():
    cfg = parse_text(TEMPLATE)
    assert cfg.get_float("domain", "T") == 0.1
    assert cfg.get_spec("coefficients", "g") == ("constant", {"c": 0.0})


def test_duplicate_key_names_line():
    text = TEMPLATE.replace("beta2 = 1", "beta1 = 2\nbeta2 = 1")
    with pytest.raises(ConfigError) as exc:
        parse_text(text)
    line = text.splitlines().index("beta1 = 2") + 1
    assert f"line {line}" in str(exc.value)
    assert "beta1" in str(exc.value)


def test_unknown_section_and_key():
    with pytest.raises(ConfigError, match=r"unknown section \[mesh\].*line 1"):
        parse_text("[mesh]\nn = 3\n")
    with pytest.raises(ConfigError, match="unknown key 'dx'.*line 2"):
        parse_text("[domain]\ndx = 3\n")


def test_malformed_number_reports_line():
    cfg = parse_text(TEMPLATE.replace("T = 0.1", "T = 0.1x"))
    with pytest.raises(ConfigError, match="key 'T', line 4"):
        cfg.get_float("domain", "T")


def test_scientific_notation_full_precision():
    cfg = parse_text(TEMPLATE.replace("beta1 = 1", "beta1 = 1.2345678901234567e-7"))
    assert cfg.get("cost", "beta1") == "1.2345678901234567e-7"
    assert cfg.get_float("cost", "beta1") == 1.2345678901234567e-7


def test_missing_file_names_path(tmp_path):
    path = tmp_path / "absent.cfg"
    with pytest.raises(ConfigError, match="absent.cfg"):
        parse_config(str(path))


def test_parse_spec():
    assert parse_spec("rational a=0.5 b=1e-3") == ("rational", {"a": 0.5, "b": 1e-3})
    with pytest.raises(ConfigError, match="k=v"):
        parse_spec("rational 0.5")


def test_inline_comments_are_ignored():
    cfg = parse_text("[cost]\nbeta1 = 2  # weight\n")
    assert cfg.get_float("cost", "beta1") == 2.0
