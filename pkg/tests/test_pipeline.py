import numpy as np
import pytest

from cmfd_cs.cuckoo import CsConfig, decode, random_positions
from cmfd_cs.errors import DimensionError
from cmfd_cs.images import textured_image, to_uint8
from cmfd_cs.matching import DetectionParams
from cmfd_cs.pipeline import DetectorConfig, ElementalDetector, StageError, detect_auto, elemental_detect
from cmfd_cs.synth import ForgerySpec, synthesize_forgery

from conftest import small_forgery


def same_shift(found, truth):
    """Pairs are stored in raster order, so the shift sign is not fixed."""
    want = (truth[0] // 2, truth[1] // 2)
    return found in (want, (-want[0], -want[1]))


@pytest.fixture(scope="module")
def forged_128():
    rng = np.random.default_rng(21)
    img = to_uint8(textured_image(rng, 128)) / 255
    return synthesize_forgery(img, ForgerySpec((6, 10, 48, 48), (66, 70)))


@pytest.fixture(scope="module")
def authentic_128():
    return to_uint8(textured_image(np.random.default_rng(22), 128)) / 255


def test_fixed_params_dominant_shift(forged_128):
    img, truth = forged_128
    result = elemental_detect(img, DetectionParams(8, 16.0, 0.6))
    assert same_shift(result.fitness.dominant_shift, truth.shift)
    assert result.fitness.tmb >= 20
    iou = (result.map.mask & truth.mask).sum() / (result.map.mask | truth.mask).sum()
    assert iou >= 0.5


def test_authentic_mid_range_not_detected(authentic_128):
    config = DetectorConfig()
    for params in [DetectionParams(8, 16.0, 0.6), DetectionParams(6, 25.0, 0.7), DetectionParams(12, 20.0, 0.5)]:
        assert not config.decide(elemental_detect(authentic_128, params).fitness)


def test_elemental_is_pure(forged_128):
    img, _ = forged_128
    before = img.copy()
    a = elemental_detect(img, DetectionParams(5, 12.0, 0.65))
    b = elemental_detect(img, DetectionParams(5, 12.0, 0.65))
    assert np.array_equal(img, before)
    assert a.fitness == b.fitness
    assert a.map.q.tobytes() == b.map.q.tobytes()
    assert a.matches.oi.tobytes() == b.matches.oi.tobytes()
    assert a.matches.verified.tobytes() == b.matches.verified.tobytes()


def test_map_only_covers_tmb_pairs(forged_128):
    img, _ = forged_128
    result = elemental_detect(img, DetectionParams(4, 12.0, 0.5))
    assert result.fitness.mmb > 0 or result.fitness.tmb > 0
    # q is built from TMB pairs; each contributes at least one R x R footprint
    assert result.map.q.sum() >= 16 * (result.fitness.tmb > 0)


@pytest.mark.parametrize("which", ["forged", "authentic"])
def test_fast_path_equals_slow_path(which, forged_128, authentic_128):
    img = forged_128[0] if which == "forged" else authentic_128
    detector = ElementalDetector(img)
    rng = np.random.default_rng(0)
    params = [decode(p) for p in random_positions(rng, 40)]
    params += [DetectionParams(r, 10.0, 0.001) for r in (4, 9)] + [DetectionParams(4, 40.0, 0.9)]
    for p in params:
        assert detector.evaluate(p) == elemental_detect(img, p).fitness, p


def test_too_small_image():
    with pytest.raises(DimensionError):
        elemental_detect(np.zeros((12, 40)), DetectionParams(8, 16.0, 0.6))


def test_stage_error_names_stage(monkeypatch, forged_128):
    from cmfd_cs import pipeline
    from cmfd_cs.errors import NumericalError

    def boom(*args, **kwargs):
        raise NumericalError("no convergence")

    monkeypatch.setattr(pipeline, "block_features", boom)
    with pytest.raises(StageError) as info:
        elemental_detect(forged_128[0], DetectionParams(8, 16.0, 0.6))
    assert info.value.stage == "features"


def test_flat_image_not_detected():
    report = detect_auto(np.full((64, 64), 0.5), CsConfig(max_evals=200))
    assert not report.detected
    assert not report.map.mask.any()


def test_detect_auto_beats_random_draws():
    img, truth = small_forgery(11, size=96, region=32, shift=(34, 30))
    report = detect_auto(img, CsConfig(seed=3))
    detector = ElementalDetector(img)
    draws = [detector.p_match(decode(p)) for p in random_positions(np.random.default_rng(3), 50)]
    assert report.fitness.p_match > np.median(draws)
    assert report.detected
    assert same_shift(report.fitness.dominant_shift, truth.shift)
    assert report.fitness == elemental_detect(img, report.best_params).fitness
    assert report.evals_used <= 1500


def test_detect_auto_deterministic():
    img, _ = small_forgery(12, size=64, region=24)
    a = detect_auto(img, CsConfig(seed=5, max_evals=300))
    b = detect_auto(img, CsConfig(seed=5, max_evals=300))
    assert a.to_dict(include_timing=False) == b.to_dict(include_timing=False)
    assert a.map.mask.tobytes() == b.map.mask.tobytes()
    assert [(t.best_fitness, t.best_params) for t in a.trace] == [(t.best_fitness, t.best_params) for t in b.trace]


def test_detected_consistent_with_rule(authentic_128):
    report = detect_auto(authentic_128, CsConfig(seed=1, max_evals=300))
    assert report.detected == DetectorConfig().decide(report.fitness)
    p = report.best_params
    assert 4 <= p.R <= 20 and 10 <= p.D <= 40 and 0.001 <= p.T <= 0.9
