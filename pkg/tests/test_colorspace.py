import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from olivesynth.colorspace import (
    convert_directory, convert_image_iga, rgb_array_to_iga, rgb_to_iga, sweep_all_rgb,
)
from olivesynth.errors import FormatError, ParameterError
from olivesynth.pngio import read_png, write_png

from oracles import iga_pixel

byte = st.integers(0, 255)


@pytest.mark.parametrize("rgb,iga", [
    ((100, 150, 200), (150, 150, 150)),
    ((255, 0, 0), (85, 0, 128)),
    ((0, 255, 0), (85, 255, 0)),
    ((0, 0, 0), (0, 0, 0)),
    ((255, 255, 255), (255, 255, 255)),
    ((1, 0, 0), (0, 0, 1)),
    ((2, 0, 0), (1, 0, 1)),
])
def test_known_pixels(rgb, iga):
    assert rgb_to_iga(rgb) == iga


@given(byte, byte, byte)
def test_matches_rational_oracle(r, g, b):
    assert rgb_to_iga((r, g, b)) == iga_pixel(r, g, b)


@given(byte, byte, byte, st.sampled_from(["mean", "max", "luma709"]))
def test_green_preserved_and_in_range(r, g, b, strategy):
    i, g2, a = rgb_to_iga((r, g, b), strategy)
    assert g2 == g
    assert min(r, g, b) <= i <= max(r, g, b)
    assert min(r, b) <= a <= max(r, b)


@given(byte, st.sampled_from(["mean", "max", "luma709"]))
def test_gray_is_fixed_point(v, strategy):
    assert rgb_to_iga((v, v, v), strategy) == (v, v, v)


def test_other_strategies():
    assert rgb_to_iga((10, 20, 200), "max") == (200, 20, 105)
    assert rgb_to_iga((255, 0, 0), "luma709") == (54, 0, 128)
    with pytest.raises(ParameterError):
        rgb_to_iga((1, 2, 3), "hue")


def test_sweep_covers_every_triple_once():
    first = next(sweep_all_rgb(chunk_bits=12))[0]
    assert first.shape == (4096, 3)
    assert first[0].tolist() == [0, 0, 0] and first[-1].tolist() == [0, 15, 255]
    n = sum(len(rgb) for rgb, _ in sweep_all_rgb(chunk_bits=22))
    assert n == 1 << 24


def test_image_conversion_shape_and_errors():
    img = np.random.default_rng(0).integers(0, 256, (5, 7, 3), dtype=np.uint8)
    out = convert_image_iga(img)
    assert out.shape == img.shape and out.dtype == np.uint8
    assert out[2, 3].tolist() == list(rgb_to_iga(img[2, 3]))
    with pytest.raises(FormatError):
        convert_image_iga(img[..., :2])
    with pytest.raises(FormatError):
        convert_image_iga(img.astype(np.float32))
    with pytest.raises(FormatError):
        rgb_array_to_iga(np.array([[256, 0, 0]]))


def test_convert_directory_copies_masks(tmp_path):
    src, dst = tmp_path / "in", tmp_path / "out"
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (4, 4, 3), dtype=np.uint8)
    mask = np.where(rng.random((4, 4)) > 0.5, 255, 0).astype(np.uint8)
    write_png(src / "images" / "a.png", img, {"k": "v"})
    write_png(src / "masks" / "a_mask.png", mask)
    written = convert_directory(src, dst, workers=2)
    assert [p.relative_to(dst).as_posix() for p in written] == ["images/a.png", "masks/a_mask.png"]
    assert (dst / "masks" / "a_mask.png").read_bytes() == (src / "masks" / "a_mask.png").read_bytes()
    out, text = read_png(dst / "images" / "a.png")
    np.testing.assert_array_equal(out, convert_image_iga(img))
    assert text["colorspace"] == "iga" and text["k"] == "v"
    with pytest.raises(FormatError):
        convert_directory(tmp_path / "missing", dst)


def test_png_roundtrip(tmp_path):
    arr = np.arange(48, dtype=np.uint8).reshape(4, 4, 3)
    write_png(tmp_path / "x.png", arr, {"b": "2", "a": "1"})
    back, text = read_png(tmp_path / "x.png")
    np.testing.assert_array_equal(back, arr)
    assert text == {"a": "1", "b": "2"}
    assert not list(tmp_path.glob(".*.tmp"))
    with pytest.raises(FormatError):
        write_png(tmp_path / "y.png", arr.astype(np.int16))
