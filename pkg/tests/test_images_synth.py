import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from cmfd_cs.errors import DimensionError, ImageFormatError, ValidationError
from cmfd_cs.images import as_gray, jpeg_roundtrip, load_grayscale, save_pgm, save_png, textured_image
from cmfd_cs.synth import (
    ForgerySpec,
    GaussianNoise,
    GroundTruth,
    JpegCompress,
    Plain,
    Scale,
    attack_from_dict,
    attack_to_dict,
    random_forgery_spec,
    synthesize_forgery,
)


@pytest.mark.parametrize("rgb,expected", [((255, 255, 255), 1.0), ((0, 0, 0), 0.0), ((255, 0, 0), 0.299)])
def test_luma_examples(tmp_path, rgb, expected):
    path = tmp_path / "px.png"
    Image.new("RGB", (3, 2), rgb).save(path)
    img = load_grayscale(path)
    assert img.shape == (2, 3)
    np.testing.assert_allclose(img, expected, atol=1e-12)


def test_pgm_16bit_roundtrip(tmp_path, rng):
    img = rng.random((17, 23))
    save_pgm(tmp_path / "a.pgm", img)
    back = load_grayscale(tmp_path / "a.pgm")
    assert np.max(np.abs(back - img)) <= 1 / 65535


def test_pgm_8bit_and_comment(tmp_path):
    data = b"P5\n# comment\n3 1\n255\n" + bytes([0, 128, 255])
    (tmp_path / "c.pgm").write_bytes(data)
    np.testing.assert_allclose(load_grayscale(tmp_path / "c.pgm"), [[0, 128 / 255, 1]])


def test_png_gray_roundtrip(tmp_path, rng):
    img = np.round(rng.random((8, 9)) * 255) / 255
    save_png(tmp_path / "g.png", img)
    np.testing.assert_allclose(load_grayscale(tmp_path / "g.png"), img, atol=1e-12)


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_grayscale(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not an image at all")
    with pytest.raises(ImageFormatError):
        load_grayscale(tmp_path / "junk.png")
    (tmp_path / "short.pgm").write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(ImageFormatError):
        load_grayscale(tmp_path / "short.pgm")


def test_as_gray_validation():
    with pytest.raises(DimensionError):
        as_gray(np.zeros((2, 2, 3)))
    with pytest.raises(DimensionError):
        as_gray(np.full((2, 2), 1.5))


def test_textured_image_range_and_seed():
    a = textured_image(np.random.default_rng(1), 64)
    b = textured_image(np.random.default_rng(1), 64)
    assert a.shape == (64, 64) and a.min() >= 0 and a.max() <= 1
    assert a.tobytes() == b.tobytes()


def test_jpeg_roundtrip_quality(rng):
    img = textured_image(rng, 64)
    err_hi = np.abs(jpeg_roundtrip(img, 100) - img).mean()
    err_lo = np.abs(jpeg_roundtrip(img, 20) - img).mean()
    assert err_hi < err_lo


@pytest.fixture
def base(rng):
    return textured_image(rng, 128)


SPEC = ForgerySpec((10, 12, 30, 20), (70, 80))


def test_plain_copy_exact(base):
    forged, gt = synthesize_forgery(base, SPEC)
    np.testing.assert_array_equal(forged[80:100, 70:100], base[12:32, 10:40])
    diff = forged != base
    outside = np.ones_like(diff)
    outside[80:100, 70:100] = False
    assert not diff[outside].any()
    assert gt.shift == (60, 68)
    assert gt.mask.sum() == 2 * 600


def test_degenerate_attacks_equal_plain(base):
    plain, _ = synthesize_forgery(base, SPEC, seed=3)
    noisy, _ = synthesize_forgery(base, ForgerySpec(SPEC.source_rect, SPEC.target_origin, GaussianNoise(0.0)), 3)
    scaled, _ = synthesize_forgery(base, ForgerySpec(SPEC.source_rect, SPEC.target_origin, Scale(100)), 3)
    assert plain.tobytes() == noisy.tobytes() == scaled.tobytes()


def test_noise_only_on_target(base):
    spec = ForgerySpec(SPEC.source_rect, SPEC.target_origin, GaussianNoise(0.05))
    forged, _ = synthesize_forgery(base, spec, seed=1)
    delta = forged[80:100, 70:100] - base[12:32, 10:40]
    assert 0.03 < delta.std() < 0.06
    assert forged.min() >= 0 and forged.max() <= 1
    forged[80:100, 70:100] = base[80:100, 70:100]
    np.testing.assert_array_equal(forged, base)


def test_scale_and_jpeg(base):
    forged, gt = synthesize_forgery(base, ForgerySpec(SPEC.source_rect, SPEC.target_origin, Scale(150)))
    assert gt.mask[80:110, 70:115].all()
    forged, _ = synthesize_forgery(base, ForgerySpec(SPEC.source_rect, SPEC.target_origin, JpegCompress(50)))
    assert np.all(np.abs(forged * 255 - np.round(forged * 255)) < 1e-9)


def test_seed_reproducible(base):
    spec = ForgerySpec(SPEC.source_rect, SPEC.target_origin, GaussianNoise(0.1))
    a, _ = synthesize_forgery(base, spec, seed=42)
    b, _ = synthesize_forgery(base, spec, seed=42)
    assert a.tobytes() == b.tobytes()


@pytest.mark.parametrize(
    "spec",
    [
        ForgerySpec((100, 12, 30, 20), (0, 0)),
        ForgerySpec((10, 12, 30, 20), (110, 0)),
        ForgerySpec((10, 12, 0, 20), (50, 50)),
        ForgerySpec((10, 12, 30, 20), (70, 70), Scale(200)),
    ],
)
def test_out_of_bounds(base, spec):
    with pytest.raises(ValidationError):
        synthesize_forgery(base, spec)


@pytest.mark.parametrize("bad", [lambda: GaussianNoise(-0.1), lambda: JpegCompress(10), lambda: Scale(30)])
def test_attack_validation(bad):
    with pytest.raises(ValidationError):
        bad()


@pytest.mark.parametrize("attack", [Plain(), GaussianNoise(0.04), JpegCompress(70), Scale(180)])
def test_attack_serialization(attack):
    assert attack_from_dict(json.loads(json.dumps(attack_to_dict(attack)))) == attack


def test_ground_truth_persistence(tmp_path, base):
    forged, gt = synthesize_forgery(base, SPEC)
    gt.save(tmp_path / "m.png", tmp_path / "m.json", SPEC, 7)
    back, spec, seed = GroundTruth.load(tmp_path / "m.png", tmp_path / "m.json")
    np.testing.assert_array_equal(back.mask, gt.mask)
    assert (back.shift, spec, seed) == (gt.shift, SPEC, 7)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([Plain(), Scale(40), Scale(200), Scale(140)]))
def test_random_spec_valid(seed, attack):
    rng = np.random.default_rng(seed)
    spec = random_forgery_spec(rng, (256, 256), attack)
    spec.validate((256, 256))
    dx, dy = spec.shift()
    assert dx % 2 == 0 and dy % 2 == 0
    x, y, w, h = spec.source_rect
    assert 48 <= w <= 64 and 48 <= h <= 64
