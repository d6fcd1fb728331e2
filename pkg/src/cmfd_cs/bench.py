"""Corpus synthesis and robustness benchmarking.

A corpus directory holds ``manifest.json`` plus ``images/``, ``masks/`` and
``truth/`` subdirectories. Every random choice is seeded from the master seed
and the position of the image in the corpus, so corpora and benchmark outputs
are byte-reproducible whatever the worker count.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import multiprocessing
import time
from pathlib import Path

import numpy as np

from .config import config_to_dict
from .cuckoo import CsConfig
from .errors import ValidationError
from .fitness import mask_iou, score_corpus
from .images import load_grayscale, load_mask_png, save_png, textured_image
from .pipeline import DetectorConfig, detect_auto
from .synth import (
    JPEG_QUALITIES,
    NOISE_SIGMAS,
    SCALE_FACTORS,
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

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_HEADER = (
    "attack",
    "level",
    "n_forged",
    "n_authentic",
    "tp",
    "fp",
    "fn",
    "tn",
    "precision",
    "recall",
    "mean_iou",
)
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".pgm", ".tif", ".tiff", ".bmp"}

_NOISE = tuple(GaussianNoise(s) for s in NOISE_SIGMAS)
_JPEG = tuple(JpegCompress(q) for q in JPEG_QUALITIES)
_SCALE = tuple(Scale(f) for f in SCALE_FACTORS)

# preset name -> (attacks per source, include the untouched source as an authentic image)
PRESETS = {
    "full": ((Plain(),) + _NOISE + _JPEG + _SCALE, True),
    "plain": ((Plain(),), True),
    "attacks": (_NOISE + _JPEG + _SCALE, False),
    "noise": (_NOISE, False),
    "jpeg": (_JPEG, False),
    "scale": (_SCALE, False),
}


def derive_seed(master: int, *keys: int) -> int:
    """Independent 32-bit seed for ``keys`` under ``master``."""
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1)[0])


def attack_label(attack) -> tuple[str, str]:
    """(attack name, level string) as written to manifests and CSV."""
    level = attack.level()
    return attack.name, "" if level is None else f"{level:g}"


def write_textures(out_dir, count: int, size: int = 256, seed: int = 0) -> list[Path]:
    """Write ``count`` seeded 8-bit textured PNGs to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(count):
        img = textured_image(np.random.default_rng(derive_seed(seed, k)), size)
        path = out / f"texture_{k:03d}.png"
        save_png(path, img)
        paths.append(path)
    return paths


def list_sources(source_dir) -> list[Path]:
    src = Path(source_dir)
    if not src.is_dir():
        raise ValidationError(f"source directory {src} does not exist")
    paths = sorted(p for p in src.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
    if not paths:
        raise ValidationError(f"no source images in {src}")
    stems = [p.stem for p in paths]
    if len(set(stems)) != len(stems):
        raise ValidationError("source images must have distinct file stems")
    return paths


def _dump_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def synth_corpus(
    source_dir,
    out_dir,
    preset: str = "full",
    master_seed: int = 0,
    min_size: int = 48,
    max_size: int = 64,
    limit: int | None = None,
) -> dict:
    """Synthesize forged variants of every source image and write a manifest.

    Noise and JPEG variants of a source reuse one placement so that attack
    levels are compared on the same duplication; scaled variants draw their
    own placement because the pasted size changes.
    """
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    attacks, with_authentic = PRESETS[preset]
    sources = list_sources(source_dir)[:limit]
    out = Path(out_dir)
    for sub in ("images", "masks", "truth"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    entries = []
    for k, path in enumerate(sources):
        img = load_grayscale(path)
        base = random_forgery_spec(np.random.default_rng(derive_seed(master_seed, k, 0)), img.shape, Plain(), min_size, max_size)
        for v, attack in enumerate(attacks, start=1):
            seed = derive_seed(master_seed, k, v)
            if isinstance(attack, Scale):
                spec = random_forgery_spec(np.random.default_rng(seed), img.shape, attack, min_size, max_size)
            else:
                spec = ForgerySpec(base.source_rect, base.target_origin, attack)
            forged, truth = synthesize_forgery(img, spec, seed)
            name, level = attack_label(attack)
            ident = f"{path.stem}__{name}" + (f"_{level}" if level else "")
            save_png(out / "images" / f"{ident}.png", forged)
            truth.save(out / "masks" / f"{ident}.png", out / "truth" / f"{ident}.json", spec, seed)
            entries.append(
                {
                    "id": ident,
                    "source": path.name,
                    "forged": True,
                    "attack": attack_to_dict(attack),
                    "image": f"images/{ident}.png",
                    "mask": f"masks/{ident}.png",
                    "truth": f"truth/{ident}.json",
                    "seed": seed,
                }
            )
        if with_authentic:
            ident = f"{path.stem}__authentic"
            save_png(out / "images" / f"{ident}.png", img)
            entries.append(
                {"id": ident, "source": path.name, "forged": False, "attack": None, "image": f"images/{ident}.png"}
            )

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "preset": preset,
        "master_seed": int(master_seed),
        "n_sources": len(sources),
        "entries": entries,
    }
    _dump_json(out / "manifest.json", manifest)
    return manifest


def load_manifest(corpus_dir) -> dict:
    """Read and cross-check a corpus manifest against the files on disk."""
    root = Path(corpus_dir)
    path = root / "manifest.json"
    if not path.is_file():
        raise ValidationError(f"no manifest.json in {root}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"unreadable manifest: {exc}") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(f"unsupported manifest schema {manifest.get('schema_version')!r}")
    entries = manifest.get("entries") or []
    if not entries:
        raise ValidationError("corpus is empty")
    ids = [e["id"] for e in entries]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate ids in manifest")
    for e in entries:
        needed = ["image"] + (["mask", "truth"] if e["forged"] else [])
        for key in needed:
            if not (root / e[key]).is_file():
                raise ValidationError(f"manifest mismatch: {e[key]} listed for {e['id']} is missing")
    return manifest


def _detect_one(task) -> dict:
    root, entry, cs, det = task
    started = time.perf_counter()
    img = load_grayscale(root / entry["image"])
    report = detect_auto(img, cs, det)
    record = {
        "id": entry["id"],
        "forged": bool(entry["forged"]),
        "attack": entry["attack"],
        "seed": cs.seed,
        **report.to_dict(include_timing=False),
        "iou": None,
    }
    if entry["forged"]:
        record["iou"] = mask_iou(report.map.mask, load_mask_png(root / entry["mask"]))
    log.info(
        "%s detected=%s p_match=%.3f (%.1fs)",
        entry["id"],
        record["detected"],
        report.fitness.p_match,
        time.perf_counter() - started,
    )
    return record


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def aggregate(records: list[dict]) -> list[dict]:
    """One row per (attack, level), scored against every authentic image."""
    authentic = [r for r in records if not r["forged"]]
    fp = sum(r["detected"] for r in authentic)
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in records:
        if r["forged"]:
            key = attack_label(attack_from_dict(r["attack"]))
            groups.setdefault(key, []).append(r)
    rows = []
    for (name, level), members in groups.items():
        tp = sum(r["detected"] for r in members)
        fn = len(members) - tp
        rows.append(
            {
                "attack": name,
                "level": level,
                "n_forged": len(members),
                "n_authentic": len(authentic),
                "tp": tp,
                "fp": fp,
                "fn": fn,
                "tn": len(authentic) - fp,
                "precision": _ratio(tp, tp + fp),
                "recall": _ratio(tp, tp + fn),
                "mean_iou": float(np.mean([r["iou"] for r in members])),
            }
        )
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(
            [f"{row[k]:.6f}" if isinstance(row[k], float) else row[k] for k in CSV_HEADER]
        )
    return buf.getvalue()


def read_bench_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValidationError(f"unexpected bench CSV header {reader.fieldnames}")
        rows = []
        for row in reader:
            for k in CSV_HEADER[2:8]:
                row[k] = int(row[k])
            for k in CSV_HEADER[8:]:
                row[k] = float(row[k])
            rows.append(row)
        return rows


def run_bench(
    corpus_dir,
    out_dir,
    master_seed: int = 0,
    cs: CsConfig | None = None,
    det: DetectorConfig | None = None,
    jobs: int = 1,
) -> dict:
    """Run detect_auto on every corpus image and write results, CSV and summary.

    Outputs in ``out_dir``: ``results/<id>.json`` per image, ``bench.csv``
    (one row per attack level, header row always present) and
    ``summary.json``. Timing is logged but never written, so two runs with
    the same master seed produce identical bytes.
    """
    root = Path(corpus_dir)
    manifest = load_manifest(root)
    cs = cs or CsConfig()
    det = det or DetectorConfig()
    tasks = [
        (root, entry, dataclasses.replace(cs, seed=derive_seed(master_seed, idx)), det)
        for idx, entry in enumerate(manifest["entries"])
    ]
    started = time.perf_counter()
    if jobs > 1:
        with multiprocessing.get_context("fork").Pool(jobs) as pool:
            records = pool.map(_detect_one, tasks, chunksize=1)
    else:
        records = [_detect_one(t) for t in tasks]
    log.info("bench finished %d images in %.1fs", len(records), time.perf_counter() - started)

    out = Path(out_dir)
    (out / "results").mkdir(parents=True, exist_ok=True)
    for r in records:
        _dump_json(out / "results" / f"{r['id']}.json", r)
    rows = aggregate(records)
    (out / "bench.csv").write_text(rows_to_csv(rows))

    overall = score_corpus(
        (r["detected"], r["forged"], r["iou"] if r["forged"] else None) for r in records
    )
    authentic = [r for r in records if not r["forged"]]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "csv_header": list(CSV_HEADER),
        "master_seed": int(master_seed),
        "preset": manifest.get("preset"),
        "n_images": len(records),
        "n_forged": len(records) - len(authentic),
        "n_authentic": len(authentic),
        "authentic_flagged": sum(r["detected"] for r in authentic),
        "overall": overall.to_dict(),
        "by_attack": rows,
        "config": config_to_dict(cs, det),
    }
    _dump_json(out / "summary.json", summary)
    return summary


def load_truth(corpus_dir, entry: dict) -> GroundTruth:
    root = Path(corpus_dir)
    truth, _, _ = GroundTruth.load(root / entry["mask"], root / entry["truth"])
    return truth


__all__ = [
    "CSV_HEADER",
    "PRESETS",
    "SCHEMA_VERSION",
    "aggregate",
    "derive_seed",
    "list_sources",
    "load_manifest",
    "load_truth",
    "read_bench_csv",
    "run_bench",
    "synth_corpus",
    "write_textures",
]
