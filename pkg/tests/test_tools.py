from __future__ import annotations

import numpy as np
import pytest

from astrodiag.astrosight.fits import write_fits
from astrodiag.astrosight.tools import (
    FITS_HEADER,
    ToolDescriptor,
    ToolObservation,
    ToolRegistry,
    default_registry,
)


@pytest.fixture
def image(tmp_path):
    p = tmp_path / "m31.fits"
    write_fits(p, np.zeros((4, 4), dtype=np.int64), bitpix=16, extra=[("EXPTIME", 300.0, "s"), ("OBJECT", "M31", "")])
    return p


def test_fits_header_facts(image):
    obs = default_registry().invoke("fits-header", image)
    assert not obs.failed
    assert obs.facts["EXPTIME"] == 300.0 and obs.facts["OBJECT"] == "M31"
    assert obs.facts["NAXIS1"] == 4 and obs.facts["BITPIX"] == 16
    assert list(obs.facts) == sorted(obs.facts)


def test_pixel_stats_on_blank_image(image):
    obs = default_registry().invoke("pixel-stats", image)
    assert obs.facts["mean"] == 0 and obs.facts["max"] == 0 and obs.facts["clipped_fraction"] == 0


def test_pixel_stats_matches_numpy(tmp_path):
    pix = np.array([[0, 10, 32767], [5, 5, 32767]])
    p = tmp_path / "a.fits"
    write_fits(p, pix, bitpix=16)
    f = default_registry().invoke("pixel-stats", p).facts
    assert f["mean"] == pytest.approx(pix.mean())
    assert f["median"] == pytest.approx(np.median(pix))
    assert f["std"] == pytest.approx(pix.std())
    assert f["clipped_fraction"] == pytest.approx(2 / 6)


def test_unregistered_tool(image):
    obs = default_registry().invoke("astrometry", image)
    assert obs.failed and "unknown tool" in obs.facts["error"]


def test_unsupported_suffix(tmp_path):
    p = tmp_path / "shot.jpg"
    p.write_bytes(b"\xff\xd8")
    obs = default_registry().invoke("fits-header", p)
    assert obs.failed and ".jpg" in obs.facts["error"]


def test_unreadable_file_becomes_error(tmp_path):
    obs = default_registry().invoke("fits-header", tmp_path / "missing.fits")
    assert obs.failed


def test_malformed_fits_becomes_error(tmp_path):
    p = tmp_path / "bad.fits"
    p.write_bytes(b"NOT A FITS FILE".ljust(2880))
    obs = default_registry().invoke("fits-header", p)
    assert obs.failed


def test_duplicate_registration():
    reg = ToolRegistry([FITS_HEADER])
    with pytest.raises(ValueError):
        reg.register(FITS_HEADER)


def test_custom_tool_plugin(tmp_path):
    reg = ToolRegistry()
    reg.register(ToolDescriptor("size", "file size", (), lambda p: ToolObservation("size", {"bytes": p.stat().st_size})))
    f = tmp_path / "x.bin"
    f.write_bytes(b"abc")
    assert reg.invoke("size", f).facts == {"bytes": 3}
    assert "size" in reg and reg.tool_ids == ["size"]


def test_observation_rejects_non_finite():
    with pytest.raises(ValueError):
        ToolObservation("t", {"x": float("nan")})
