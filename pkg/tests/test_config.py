"""Tests for JSON configuration parsing and validation errors."""

import json
import math

import pytest

from app.bodies import Box, Dilate, EuclideanBall, LpBall, SymmetricPolytope
from app.config import load_measure, load_run_config, parse_body, parse_grid, parse_measure, parse_phi, read_json
from app.errors import ConfigError
from app.measure import NormMeasure, UniformMeasure
from app.phi import GaussianNormalized, Linear, PiecewiseQuadratic, Power


def _write(tmp_path, name, content):
    path = tmp_path / name
    path.write_text(content if isinstance(content, str) else json.dumps(content, indent=2))
    return str(path)


def test_parse_bodies():
    """Test each body type."""
    assert parse_body({"type": "ball", "dim": 3}) == EuclideanBall(3)
    assert parse_body({"type": "box", "half_widths": [1, 2]}) == Box((1.0, 2.0))
    assert parse_body({"type": "lpball", "p": 1.5, "semi_axes": [1, 1]}) == LpBall(1.5, (1.0, 1.0))
    nested = parse_body({"type": "dilate", "factor": 2, "body": {"type": "ball", "dim": 2, "radius": 0.5}})
    assert nested == Dilate(EuclideanBall(2, 0.5), 2.0)


def test_parse_polytopes():
    """Test vertex and facet descriptions of polytopes."""
    square = parse_body({"type": "polytope", "vertices": [[1, 1], [1, -1], [-1, 1], [-1, -1]]})
    assert isinstance(square, SymmetricPolytope)
    slabs = parse_body({"type": "polytope", "directions": [[1, 0], [0, 1]], "offsets": [1, 1]})
    assert len(slabs.normals) == 2
    with pytest.raises(ConfigError):
        parse_body({"type": "polytope", "directions": [[1, 0], [0, 1]]})


def test_parse_profiles():
    """Test each profile type."""
    assert parse_phi({"type": "power", "p": 3}) == Power(p=3.0)
    assert parse_phi({"type": "linear", "slope": 2, "offset": 1}) == Linear(2.0, 1.0)
    assert parse_phi({"type": "gaussian", "n": 2}) == GaussianNormalized(2)
    pathological = parse_phi({"type": "pathological", "k_max": 2})
    assert isinstance(pathological, PiecewiseQuadratic)
    assert len(pathological.knots) == 2


def test_parse_measures():
    """Test norm-density and uniform measures."""
    mu = parse_measure({"phi": {"type": "gaussian", "n": 2}, "L": {"type": "ball", "dim": 2}})
    assert mu == NormMeasure(GaussianNormalized(2), EuclideanBall(2))
    uniform = parse_measure({"uniform_on": {"type": "box", "half_widths": [math.pi / 2, 0.5]}})
    assert isinstance(uniform, UniformMeasure)


def test_measure_needs_consistent_fields():
    """Test that a measure is either uniform or a (phi, L) pair."""
    with pytest.raises(ConfigError):
        parse_measure({"phi": {"type": "gaussian", "n": 2}})
    with pytest.raises(ConfigError):
        parse_measure({"uniform_on": {"type": "ball", "dim": 2}, "phi": {"type": "power"}})


def test_error_points_at_field_and_line():
    """Test that a schema violation names the field and its line."""
    text = '{\n  "type": "ball",\n  "dim": 2,\n  "radius": -1\n}'
    with pytest.raises(ConfigError) as caught:
        parse_body(json.loads(text), text)
    assert caught.value.field == "body.radius"
    assert caught.value.line == 4
    assert str(caught.value).startswith("line 4, field 'body.radius': ")


def test_unknown_fields_rejected():
    """Test that unknown fields are errors."""
    with pytest.raises(ConfigError) as caught:
        parse_body({"type": "ball", "dim": 2, "colour": "red"})
    assert caught.value.field == "body.colour"


def test_unknown_type():
    """Test that unknown type tags are reported on the type field."""
    with pytest.raises(ConfigError) as caught:
        parse_phi({"type": "cubic"})
    assert caught.value.field == "phi.type"


def test_geometry_errors_become_config_errors():
    """Test that invalid bodies surface as configuration errors."""
    with pytest.raises(ConfigError) as caught:
        parse_body({"type": "box", "half_widths": [1, -1]})
    assert caught.value.field == "body"


def test_schema_version(tmp_path):
    """Test that only schema 1 is accepted."""
    path = _write(tmp_path, "ball.json", {"schema": 2, "type": "ball", "dim": 2})
    with pytest.raises(ConfigError) as caught:
        read_json(path)
    assert caught.value.field == "schema"
    assert caught.value.line == 2
    data, _ = read_json(_write(tmp_path, "ok.json", {"schema": 1, "type": "ball", "dim": 2}))
    assert "schema" not in data


def test_invalid_json(tmp_path):
    """Test that malformed JSON reports its line."""
    path = _write(tmp_path, "broken.json", '{\n  "type": "ball",\n  "dim": \n}')
    with pytest.raises(ConfigError) as caught:
        read_json(path)
    assert caught.value.line == 4


def test_missing_file(tmp_path):
    """Test that an unreadable file is a configuration error."""
    with pytest.raises(ConfigError):
        read_json(str(tmp_path / "missing.json"))


def test_load_measure(tmp_path):
    """Test loading a measure file."""
    path = _write(
        tmp_path, "mu.json", {"schema": 1, "phi": {"type": "gaussian", "n": 3}, "L": {"type": "ball", "dim": 3}}
    )
    assert load_measure(path) == NormMeasure(GaussianNormalized(3), EuclideanBall(3))


def test_load_run_config(tmp_path):
    """Test run config defaults and validation."""
    config = load_run_config(_write(tmp_path, "run.json", {"schema": 1, "grid": "1:2:3", "seed": 4}))
    assert config.seed == 4
    assert config.budget == 200_000
    assert config.format == "csv"
    with pytest.raises(ConfigError) as caught:
        load_run_config(_write(tmp_path, "bad.json", {"budget": 0}))
    assert caught.value.field == "budget"


def test_parse_grid():
    """Test linear, logarithmic and single-point grids."""
    assert parse_grid("1:3:3") == [1.0, 2.0, 3.0]
    assert parse_grid("1:100:3", log=True) == pytest.approx([1.0, 10.0, 100.0])
    assert parse_grid("5:9:1") == [5.0]


@pytest.mark.parametrize("text", ["1:2", "a:2:3", "1:2:0"])
def test_parse_grid_errors(text):
    """Test malformed grid specifications."""
    with pytest.raises(ConfigError):
        parse_grid(text)


def test_log_grid_needs_positive_ends():
    """Test that log grids cannot start at zero."""
    with pytest.raises(ConfigError):
        parse_grid("0:10:3", log=True)
