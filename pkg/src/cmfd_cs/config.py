"""Flat ``key = value`` configuration files.

Blank lines and lines starting with ``#`` or ``;`` are ignored. Keys:

==================  ====================================================
n_nests             Cuckoo Search population (int)
p_a                 abandonment fraction (float)
alpha               per-dimension step scale "aR, aD, aT" (floats)
lam                 Levy exponent (float, 1 < lam <= 3)
max_evals           objective evaluation budget (int)
max_generations     generation cap, empty for none (int)
variant             ``unbiased`` or ``biased``
seed                optimizer seed (int; --seed overrides)
levels              wavelet levels (int)
window              sort-window width (int)
quorum              neighbor passes required out of 16 (int)
offsets             neighbor offsets "dr:dc dr:dc ..." (ints)
sv_floor            singular value floor before the log (float)
cluster_min         minimum shift-cluster population (int)
cluster_fraction    relative shift-cluster population (float)
decision_p_match    detection floor on P_match (float)
decision_tmb        detection floor on TMB (int)
early_stop_tmb      TMB needed for an early stop at P_match 1 (int)
flat_std            blocks with a lower intensity std never match (float)
==================  ====================================================
"""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path

from .cuckoo import CsConfig
from .errors import CmfdError, ConfigError
from .pipeline import DetectorConfig

_CS_KEYS = {
    "n_nests": int,
    "p_a": float,
    "alpha": lambda s: tuple(float(v) for v in s.replace(",", " ").split()),
    "lam": float,
    "max_evals": int,
    "max_generations": lambda s: int(s) if s else None,
    "variant": str,
    "seed": int,
}


def _offsets(text: str) -> tuple:
    out = []
    for item in text.replace(",", " ").split():
        dr, dc = item.split(":")
        out.append((int(dr), int(dc)))
    return tuple(out)


_DETECTOR_KEYS = {
    "levels": int,
    "window": int,
    "quorum": int,
    "offsets": _offsets,
    "sv_floor": float,
    "cluster_min": int,
    "cluster_fraction": float,
    "decision_p_match": float,
    "decision_tmb": int,
    "early_stop_tmb": int,
    "flat_std": float,
}


def parse_config(text: str) -> tuple[dict, dict]:
    """Split ``text`` into (CsConfig kwargs, DetectorConfig kwargs)."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    try:
        parser.read_string("[cmfd]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    cs, det = {}, {}
    for key, raw in parser["cmfd"].items():
        if key in _CS_KEYS:
            target, conv = cs, _CS_KEYS[key]
        elif key in _DETECTOR_KEYS:
            target, conv = det, _DETECTOR_KEYS[key]
        else:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            target[key] = conv(raw.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return cs, det


def build_configs(cs_kwargs: dict, det_kwargs: dict) -> tuple[CsConfig, DetectorConfig]:
    """Construct validated configs; any validation failure is a ConfigError."""
    try:
        cs = CsConfig(**cs_kwargs)
        det = DetectorConfig(**det_kwargs)
    except (CmfdError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if det.levels < 1 or det.window < 1 or not 0 <= det.quorum <= len(det.offsets):
        raise ConfigError("levels and window must be >= 1 and quorum within the offset count")
    return cs, det


def load_config(path=None, **overrides) -> tuple[CsConfig, DetectorConfig]:
    """Read ``path`` (optional) and apply ``overrides`` (None values ignored)."""
    cs_kwargs, det_kwargs = {}, {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cs_kwargs, det_kwargs = parse_config(text)
    for key, value in overrides.items():
        if value is None:
            continue
        if key in _CS_KEYS:
            cs_kwargs[key] = value
        elif key in _DETECTOR_KEYS:
            det_kwargs[key] = value
        else:
            raise ConfigError(f"unknown override {key!r}")
    return build_configs(cs_kwargs, det_kwargs)


def config_to_dict(cs: CsConfig, det: DetectorConfig) -> dict:
    d = {k: v for k, v in dataclasses.asdict(cs).items()}
    d.update(dataclasses.asdict(det))
    d["offsets"] = [list(o) for o in det.offsets]
    return d
