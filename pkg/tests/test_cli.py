import asyncio
import json
import os

import numpy as np
import numpy.testing as npt
import pytest
from PIL import Image
from pydantic import ValidationError

import handler
from errors import ConfigError, NumericalError, categorize
from models.schemas import RunConfig, load_config, parse_config, serialize_config
from services.dump_service import HEADER, MAGIC, decode_dump, encode_dump, read_dump, write_dump
from services.render_service import dump_scalar, render_scalar_field, to_grayscale

EXAMPLE_CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs", "example.ini")

EVOLVE_CONFIG = """
[perturbation]
kind = none

[evolve]
lx1 = 20.0
lx2 = 20.0
n1 = 32
n2 = 32
dt = 0.05
final_time = 0.2
cadence = 2
linear_only = true
initial = edge_packet
width = 3.0
"""


# ============================================================================
# HNY1 DUMPS
# ============================================================================
def test_dump_header_layout():
    fields = np.arange(3 * 4 * 2, dtype=complex).reshape(3, 4, 2)
    raw = encode_dump(fields, "maxwell")
    magic, version, kind, nx, ny, ncomp = HEADER.unpack_from(raw)
    assert (magic, version, kind, nx, ny, ncomp) == (MAGIC, 1, 0, 4, 2, 3)
    assert len(raw) == HEADER.size + 24 * 16
    # payload is component-major with x fastest
    first = np.frombuffer(raw, dtype="<c16", offset=HEADER.size, count=4)
    npt.assert_array_equal(first, fields[0, :, 0])


def test_dump_decode(tmp_path):
    alpha = np.random.default_rng(3).standard_normal((2, 8, 4)) + 0j
    dump = read_dump(write_dump(str(tmp_path / "alpha.hny"), alpha, "spinor"))
    assert dump.kind_name == "spinor"
    npt.assert_array_equal(dump.fields, alpha)


@pytest.mark.parametrize("mutate", [
    lambda raw: raw[:10],
    lambda raw: b"XXXX" + raw[4:],
    lambda raw: raw[:4] + (2).to_bytes(4, "little") + raw[8:],
    lambda raw: raw[:HEADER.size - 1] + bytes([3]) + raw[HEADER.size:],
    lambda raw: raw[:-16],
])
def test_corrupt_dumps_are_rejected(mutate):
    raw = encode_dump(np.ones((2, 4, 4), dtype=complex), "spinor")
    with pytest.raises(ConfigError):
        decode_dump(mutate(raw))


def test_dump_component_mismatch():
    with pytest.raises(ConfigError):
        encode_dump(np.ones((2, 4, 4)), "maxwell")
    with pytest.raises(ConfigError):
        encode_dump(np.ones((4, 4)), "vector")
    assert decode_dump(encode_dump(np.ones((4, 4)), "scalar")).fields.shape == (1, 4, 4)


def test_missing_dump(tmp_path):
    with pytest.raises(ConfigError):
        read_dump(str(tmp_path / "absent.hny"))


# ============================================================================
# RENDERING
# ============================================================================
def test_zero_field_renders_black(tmp_path):
    assert not np.any(to_grayscale(np.zeros((6, 4))))
    path = render_scalar_field(np.zeros((6, 4)), str(tmp_path / "zero.png"))
    with Image.open(path) as image:
        assert image.mode == "L"
        assert image.size == (6, 4)
        assert image.getextrema() == (0, 0)


def test_grayscale_orientation():
    field = np.zeros((3, 2))
    field[2, 1] = -4.0
    field[0, 0] = 2.0
    pixels = to_grayscale(field)
    # y grows upwards: the top row is the last iy
    assert pixels[0, 2] == 255
    assert pixels[1, 0] == 128


def test_render_rejects_bad_fields():
    with pytest.raises(ConfigError):
        to_grayscale(np.zeros((2, 2, 2)))
    with pytest.raises(ConfigError):
        to_grayscale(np.full((2, 2), np.nan))


def test_dump_scalar():
    fields = np.zeros((3, 2, 2), dtype=complex)
    fields[0] = 3.0
    fields[2] = 4j
    dump = decode_dump(encode_dump(fields, "maxwell"))
    assert np.allclose(dump_scalar(dump), 5.0)
    assert np.allclose(dump_scalar(dump, "component", 2), 4j)
    with pytest.raises(ConfigError):
        dump_scalar(dump, "component", 3)
    with pytest.raises(ConfigError):
        dump_scalar(dump, "phase")


# ============================================================================
# CONFIG FILES
# ============================================================================
def test_example_config_round_trip():
    config = load_config(EXAMPLE_CONFIG)
    assert config.discretization.truncation == 10
    assert config.dirac.phase == 1 + 0j
    assert config.bands.path == ["Gamma", "K", "M", "Gamma"]
    assert config.gap_sweep.deltas == RunConfig().gap_sweep.deltas == [0.01, 0.02, 0.04, 0.06, 0.08, 0.1]
    assert config.low_contrast.epsilons == RunConfig().low_contrast.epsilons == [0.02, 0.01, 0.005]
    assert config.compare == RunConfig().compare
    assert (config.compare.delta, config.compare.final_time, config.compare.refinement) == (0.1, 5.0, "halve")
    assert parse_config(serialize_config(config)) == config


def test_custom_values_round_trip():
    config = parse_config(
        "[weight]\nkind = low_contrast\nepsilon = 0.1\n"
        "[evolve]\nmass = curved_edge\npreset = polyline\nvertices = -5 0; 0 2.5; 5 0\ncenter = 1.5, -2\n"
        "[render]\ninput = alpha_final.hny\nquantity = component\ncomponent = 1\n"
    )
    assert config.evolve.vertices == [(-5.0, 0.0), (0.0, 2.5), (5.0, 0.0)]
    assert config.evolve.center == (1.5, -2.0)
    assert parse_config(serialize_config(config)) == config
    assert parse_config(serialize_config(RunConfig())) == RunConfig()


def test_config_errors():
    with pytest.raises(ConfigError):
        parse_config("[mystery]\nvalue = 1\n")
    with pytest.raises(ConfigError):
        parse_config("no section header\n")
    with pytest.raises(ValidationError):
        parse_config("[compare]\nn2 = 10\n")
    with pytest.raises(ValidationError):
        parse_config("[evolve]\nn1 = 100\n")
    with pytest.raises(ValidationError):
        parse_config("[discretization]\ntruncation = 4\nunknown = 1\n")
    with pytest.raises(ValidationError):
        parse_config("[weight]\nkind = fourier\n")
    with pytest.raises(ValidationError):
        parse_config("[compare]\nr1 = 5\n")
    with pytest.raises(ValidationError):
        parse_config("[bands]\nmode = grid\n")
    assert parse_config("[compare]\nr1 = 5\nrefinement = none\n").compare.r1 == 5
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.ini")


def test_categories():
    assert categorize(ConfigError("x")) == "CONFIG"
    assert categorize(NumericalError("x")) == "NUMERIC"
    assert categorize(KeyError("x")) == "INTERNAL"
    try:
        parse_config("[compare]\nn2 = 10\n")
    except ValidationError as e:
        assert categorize(e) == "CONFIG"


# ============================================================================
# SUBCOMMANDS AND EXIT CODES
# ============================================================================
def test_exit_codes():
    assert handler.exit_code({"status": "success"}) == 0
    assert handler.exit_code({"status": "error", "category": "CONFIG"}) == 2
    assert handler.exit_code({"status": "error", "category": "NUMERIC"}) == 3
    assert handler.exit_code({"status": "error", "category": "INTERNAL"}) == 1


def test_bad_config_exit(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[discretization]\ntruncation = 0\n")
    code = handler.main(["dirac", "--config", str(path), "--output-dir", str(tmp_path)])
    assert code == 2
    result = json.loads((tmp_path / "result.json").read_text())
    assert result["status"] == "error"
    assert result["category"] == "CONFIG"


def test_unknown_subcommand(tmp_path):
    result = asyncio.run(handler.run("bogus", RunConfig(), str(tmp_path)))
    assert result["status"] == "error"
    assert handler.exit_code(result) == 2


def test_render_without_section(tmp_path):
    result = asyncio.run(handler.run("render", RunConfig(), str(tmp_path)))
    assert result["category"] == "CONFIG"
    assert result["subcommand"] == "render"


def test_render_subcommand(tmp_path):
    fields = np.zeros((1, 5, 3), dtype=complex)
    fields[0, 2, 1] = 1.0
    write_dump(str(tmp_path / "peak.hny"), fields, "scalar")
    config = parse_config(f"[render]\ninput = {tmp_path / 'peak.hny'}\noutput = peak.png\n")
    result = asyncio.run(handler.run("render", config, str(tmp_path)))
    assert result["status"] == "success"
    with Image.open(tmp_path / "peak.png") as image:
        assert image.size == (5, 3)
        assert image.getextrema() == (0, 255)


def test_evolve_then_render(tmp_path):
    config_path = tmp_path / "evolve.ini"
    config_path.write_text(EVOLVE_CONFIG)
    assert handler.main(["evolve", "--config", str(config_path), "--output-dir", str(tmp_path)]) == 0

    result = json.loads((tmp_path / "result.json").read_text())
    assert result["status"] == "success"
    assert result["norm_drift"] < 1e-6
    assert result["coefficients"]["source"] == "linear"
    dump = read_dump(str(tmp_path / "alpha_final.hny"))
    assert dump.kind_name == "spinor"
    assert dump.fields.shape == (2, 32, 32)
    rows = (tmp_path / "observables.csv").read_text().strip().splitlines()
    assert rows[0] == "T,norm,cx,cy,edge_fraction"
    assert len(rows) == 1 + 3

    render_path = tmp_path / "render.ini"
    render_path.write_text(f"[render]\ninput = {tmp_path / 'alpha_final.hny'}\nquantity = component\ncomponent = 0\n")
    assert handler.main(["render", "--config", str(render_path), "--output-dir", str(tmp_path)]) == 0
    assert os.path.exists(tmp_path / "field.png")


def test_band_surface(tmp_path):
    config = parse_config(
        "[weight]\nkind = low_contrast\nepsilon = 0.1\n"
        "[discretization]\ntruncation = 4\n"
        "[bands]\nmode = surface\nextent = 0.5\npoints = 3\ncount = 2\n"
    )
    result = asyncio.run(handler.run("bands", config, str(tmp_path)))
    assert result["status"] == "success"
    assert result["mode"] == "surface"
    assert result["points"] == 9
    rows = (tmp_path / "bands.csv").read_text().strip().splitlines()
    assert rows[0] == "kx,ky,band_index,omega"
    assert len(rows) == 1 + 9 * 2
    # row-major over kx, then ky
    kx, ky, band, _ = rows[3].split(",")
    assert (float(kx), float(ky), int(band)) == (-0.5, 0.0, 1)
