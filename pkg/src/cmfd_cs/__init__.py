"""Copy-move forgery detection with SVD block features and Cuckoo Search tuning."""

from .blocks import BlockGrid, block_features, svd_features, tile_blocks
from .cuckoo import CsConfig, CsResult, levy_step, optimize
from .errors import (
    CmfdError,
    ConfigError,
    DimensionError,
    ImageFormatError,
    NumericalError,
    ParameterError,
    ValidationError,
)
from .fitness import FitnessReport, CorpusScore, p_match, score_corpus, shift_filter
from .images import load_grayscale, textured_image
from .matching import DetectionParams, DuplicateMap, MatchSet, build_map, find_matches, verify_neighborhoods
from .pipeline import DetectionReport, DetectorConfig, ElementalDetector, detect_auto, elemental_detect
from .synth import ForgerySpec, GaussianNoise, GroundTruth, JpegCompress, Plain, Scale, synthesize_forgery
from .wavelet import WaveletPyramid, dwt2_haar, idwt2_haar

__version__ = "0.1.0"

__all__ = [
    "BlockGrid",
    "CmfdError",
    "ConfigError",
    "CorpusScore",
    "CsConfig",
    "CsResult",
    "DetectionParams",
    "DetectionReport",
    "DetectorConfig",
    "DimensionError",
    "DuplicateMap",
    "ElementalDetector",
    "FitnessReport",
    "ForgerySpec",
    "GaussianNoise",
    "GroundTruth",
    "ImageFormatError",
    "JpegCompress",
    "MatchSet",
    "NumericalError",
    "ParameterError",
    "Plain",
    "Scale",
    "ValidationError",
    "WaveletPyramid",
    "block_features",
    "build_map",
    "detect_auto",
    "dwt2_haar",
    "elemental_detect",
    "find_matches",
    "idwt2_haar",
    "levy_step",
    "load_grayscale",
    "optimize",
    "p_match",
    "score_corpus",
    "shift_filter",
    "svd_features",
    "synthesize_forgery",
    "textured_image",
    "tile_blocks",
    "verify_neighborhoods",
]
