import json

import numpy as np
import pytest

from cmfd_cs import blocks
from cmfd_cs.bench import derive_seed, read_bench_csv, CSV_HEADER
from cmfd_cs.cli import main
from cmfd_cs.images import save_png

from conftest import small_forgery

SMALL = "max_evals = 60\nn_nests = 10\n"


@pytest.fixture
def forged_png(tmp_path):
    img, _ = small_forgery(5, size=96, region=32, shift=(34, 30))
    path = tmp_path / "forged.png"
    save_png(path, img)
    return path


@pytest.fixture(scope="module")
def textures(tmp_path_factory):
    out = tmp_path_factory.mktemp("tex")
    assert main(["textures", "--count", "10", "--seed", "4", "--out", str(out)]) == 0
    return out


def test_detect_fixed_params(tmp_path, forged_png, capsys):
    out = tmp_path / "out"
    rc = main(["detect", "--params", "R=8,D=16,T=0.6", str(forged_png), "--out", str(out), "--emit-pairs"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["mode"] == "fixed" and report["evals_used"] == 0
    assert report["best_params"] == {"R": 8, "D": 16.0, "T": 0.6}
    assert (out / "mask.png").is_file() and (out / "overlay.png").is_file() and (out / "pairs.json").is_file()
    assert "detected=" in capsys.readouterr().out


def test_detect_auto_and_tune(tmp_path, forged_png):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("# tiny budget\n" + SMALL)
    assert main(["detect", "--auto", str(forged_png), "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["mode"] == "auto" and 0 < report["evals_used"] <= 60
    assert not (tmp_path / "a" / "trace.csv").exists()
    assert main(["tune", str(forged_png), "--config", str(cfg), "--seed", "2", "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "t" / "trace.csv").read_text().startswith("generation,evals_used,best_fitness")


def test_detect_missing_file_leaves_no_outputs(tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["detect", str(tmp_path / "missing.png"), "--out", str(out)]) == 2
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_detect_undecodable_file(tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"garbage")
    assert main(["detect", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_detect_bad_params(tmp_path, forged_png):
    assert main(["detect", "--params", "R=3,D=16,T=0.6", str(forged_png), "--out", str(tmp_path / "o")]) == 2
    assert main(["detect", "--params", "R=8", str(forged_png), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("text", ["lam = 5\n", "bogus = 1\n", "n_nests = many\n", "quorum = 40\n", "no delimiter\n"])
def test_invalid_config_exit_4(tmp_path, forged_png, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    assert main(["detect", str(forged_png), "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4


def test_missing_config_exit_4(tmp_path, forged_png):
    assert main(["detect", str(forged_png), "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path / "o")]) == 4


def test_numerical_failure_exit_3(tmp_path, forged_png, monkeypatch):
    def fail(*args, **kwargs):
        raise np.linalg.LinAlgError("SVD did not converge")

    monkeypatch.setattr(blocks.np.linalg, "svd", fail)
    assert main(["detect", "--params", "R=8,D=16,T=0.6", str(forged_png), "--out", str(tmp_path / "o")]) == 3


def test_log_env(tmp_path, forged_png, monkeypatch):
    monkeypatch.setenv("CMFD_LOG", "debug")
    assert main(["detect", "--params", "R=8,D=16,T=0.6", str(forged_png), "--out", str(tmp_path / "o")]) == 0


def test_synth_full_preset_counts(tmp_path, textures):
    out = tmp_path / "corpus"
    assert main(["synth", str(textures), "--preset", "full", "--seed", "1", "--out", str(out)]) == 0
    entries = json.loads((out / "manifest.json").read_text())["entries"]
    counts = {}
    for e in entries:
        key = e["attack"]["type"] if e["forged"] else "authentic"
        counts[key] = counts.get(key, 0) + 1
    assert counts == {"plain": 10, "noise": 50, "jpeg": 90, "scale": 80, "authentic": 10}
    for e in entries:
        assert (out / e["image"]).is_file()


def test_synth_seed_replay(tmp_path, textures):
    def build(tag):
        out = tmp_path / tag
        assert main(["synth", str(textures), "--preset", "noise", "--seed", "9", "--limit", "3", "--out", str(out)]) == 0
        return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}

    a, b = build("a"), build("b")
    assert a == b and len(a) == 3 * 5 * 3 + 1


def test_synth_errors(tmp_path, textures):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["synth", str(empty), "--out", str(tmp_path / "c")]) == 2
    assert main(["synth", str(textures), "--min-size", "0", "--out", str(tmp_path / "c")]) == 2


def test_bench_small_corpus(tmp_path, textures):
    corpus = tmp_path / "corpus"
    assert main(["synth", str(textures), "--preset", "plain", "--limit", "2", "--out", str(corpus)]) == 0
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL)
    out = tmp_path / "res"
    assert main(["bench", str(corpus), "--config", str(cfg), "--seed", "7", "--out", str(out)]) == 0
    rows = read_bench_csv(out / "bench.csv")
    assert [r["attack"] for r in rows] == ["plain"]
    assert rows[0]["n_forged"] == 2 and rows[0]["n_authentic"] == 2
    summary = json.loads((out / "summary.json").read_text())
    assert summary["csv_header"] == list(CSV_HEADER)
    assert summary["n_images"] == 4
    result = json.loads((out / "results" / "texture_000__authentic.json").read_text())
    assert result["seed"] == derive_seed(7, 1)
    assert "wall_time" not in result


def test_bench_errors(tmp_path, textures):
    corpus = tmp_path / "corpus"
    assert main(["synth", str(textures), "--preset", "plain", "--limit", "1", "--out", str(corpus)]) == 0
    (corpus / "images" / "texture_000__plain.png").unlink()
    assert main(["bench", str(corpus), "--out", str(tmp_path / "r")]) == 2
    manifest = json.loads((corpus / "manifest.json").read_text())
    manifest["entries"] = []
    (corpus / "manifest.json").write_text(json.dumps(manifest))
    assert main(["bench", str(corpus), "--out", str(tmp_path / "r")]) == 2
    assert main(["bench", str(tmp_path / "nowhere"), "--out", str(tmp_path / "r")]) == 2
