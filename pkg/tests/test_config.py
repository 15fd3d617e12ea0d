from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airy_biphoton.config import (
    CAMPAIGNS,
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_config,
    serialize_config,
    validate_config,
)

SAMPLE = """\
[experiment]
pump_wavelength = 405e-9
wavelength = 810e-9
seed = 7

[grid]
n = 512
dx = 2e-5

[source]
sigma_plus = 3000
sigma_minus = 9000

[campaign.crystal_face_airy]
z = 0, 4

[oracle]
checks = quadrature, gaussian_beam
"""


def test_defaults_are_valid():
    validate_config(ExperimentConfig())
    assert load_config(None) == ExperimentConfig()


def test_parse_sample():
    c = parse_config(SAMPLE)
    assert c.seed == 7 and c.grid.n == 512
    assert c.campaigns == {"crystal_face_airy": (0.0, 4.0)}
    assert c.oracle_checks == ("quadrature", "gaussian_beam")
    assert c.mask == ExperimentConfig().mask


def test_round_trip_idempotent():
    c = parse_config(SAMPLE)
    text = serialize_config(c)
    again = parse_config(text)
    assert again == c
    assert serialize_config(again) == text


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**64 - 1),
    ratio=st.floats(1.0, 3.0),
    a=st.floats(0, 1),
    aperture=st.one_of(st.none(), st.floats(0.5, 10)),
    zs=st.lists(st.floats(0, 20), min_size=1, max_size=5),
    checks=st.lists(st.sampled_from(["quadrature", "airy_ballistics"]), max_size=2, unique=True),
)
def test_round_trip_property(seed, ratio, a, aperture, zs, checks):
    c = ExperimentConfig().with_seed(seed).with_ratio(ratio)
    c = replace(c, mask=replace(c.mask, a=a, aperture=aperture),
                campaigns={"propagated_plane_airy": tuple(zs)}, oracle_checks=tuple(checks))
    assert parse_config(serialize_config(c)) == c


def test_wavelength_mismatch_points_at_line():
    text = SAMPLE.replace("wavelength = 810e-9", "wavelength = 800e-9")
    with pytest.raises(ConfigError) as info:
        parse_config(text, "exp.ini")
    assert info.value.line == 3
    assert str(info.value).startswith("exp.ini:3:")
    assert "2 x pump_wavelength" in str(info.value)


@pytest.mark.parametrize(
    "old, new, line, match",
    [
        ("n = 512", "n = 1000", 7, "power of two"),
        ("sigma_minus = 9000", "sigma_minus = 1e6", 12, "not resolved"),
        ("seed = 7", "seed = -1", 4, "64-bit"),
        ("z = 0, 4", "z = 0, -4", 15, ">= 0"),
        ("seed = 7", "seed = 7\ncolour = red", 5, "unknown key"),
        ("[grid]", "[lattice]", 6, "unknown section"),
        ("[campaign.crystal_face_airy]", "[campaign.tilted]", 14, "unknown campaign"),
        ("checks = quadrature, gaussian_beam", "checks = magic", 18, "unknown oracle check"),
        ("dx = 2e-5", "dx = fine", 8, "dx"),
    ],
)
def test_invalid_entries(old, new, line, match):
    with pytest.raises(ConfigError, match=match) as info:
        parse_config(SAMPLE.replace(old, new))
    assert info.value.line == line


def test_malformed_file():
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("seed = 1\n[experiment]\n")
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("[grid]\nn = 8\n[grid]\nn = 16\n")


def test_empty_oracle_list():
    c = parse_config(SAMPLE.replace("quadrature, gaussian_beam", "none"))
    assert c.oracle_checks == ()
    assert "checks = none" in serialize_config(c)


def test_campaign_names_match_constant():
    assert set(ExperimentConfig().campaigns) == set(CAMPAIGNS)


def test_validate_without_text_has_no_line():
    bad = replace(ExperimentConfig(), grid=replace(ExperimentConfig().grid, n=3))
    with pytest.raises(ConfigError) as info:
        validate_config(bad)
    assert info.value.line is None
    assert str(info.value).startswith("<config>:")


def test_efficiency_and_points():
    c = ExperimentConfig()
    with pytest.raises(ConfigError, match="efficiency"):
        validate_config(replace(c, detectors=replace(c.detectors, efficiency=0.0)))
    with pytest.raises(ConfigError, match="points"):
        validate_config(replace(c, scan=replace(c.scan, points=4)))


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")
    p = tmp_path / "c.ini"
    p.write_text(SAMPLE)
    assert load_config(p) == parse_config(SAMPLE)
