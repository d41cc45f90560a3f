import json
import subprocess
import sys

import numpy as np
import pytest

from trace_forge import cli, raster_io


def _run(*argv):
    return cli.main([str(a) for a in argv])


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("c") / "corpus"
    assert _run("generate", "--synthetic", 3, "--size", 96, "--kinds", "jpeggrid,noise",
                "--masks", "endo,exo", "--seed", 7, "--out", out) == 0
    return out


def test_generate_is_repeatable(corpus, tmp_path):
    again = tmp_path / "again"
    assert _run("generate", "--synthetic", 3, "--size", 96, "--kinds", "jpeggrid,noise",
                "--seed", 7, "--out", again, "--workers", 2) == 0
    assert _tree(corpus) == _tree(again)


def test_generate_usage_errors(tmp_path, capsys):
    for argv in (["generate", "--out", tmp_path, "--seed", 1],
                 ["generate", "--synthetic", 2, "--out", tmp_path, "--seed", 1, "--kinds", "bogus"],
                 ["generate", "--synthetic", 2, "--out", tmp_path, "--seed", 1, "--masks", "inner"],
                 ["generate", "--synthetic", 0, "--out", tmp_path, "--seed", 1]):
        with pytest.raises(SystemExit) as exc:
            _run(*argv)
        assert exc.value.code == 2


def test_kinds_all_alias():
    parser = cli.build_parser()
    assert [k.value for k in cli._parse_kinds("all", parser)] == [
        "noise", "cfagrid", "cfaalgo", "jpeggrid", "jpegquality", "hybrid"]


def test_generate_from_raw_directory(tmp_path):
    src = tmp_path / "raws"
    src.mkdir()
    rng = np.random.default_rng(0)
    for i in range(2):
        scene = np.kron(rng.uniform(20, 230, size=(6, 6)), np.ones((16, 16)))
        raster_io.write_pgm16(scene + rng.normal(0, 2, scene.shape), src / f"r{i}.pgm")
    assert _run("generate", "--input", src, "--native-cfa", "0,1", "--kinds", "cfagrid",
                "--masks", "endo", "--seed", 1, "--out", tmp_path / "o") == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert raster_io.read_ppm8(tmp_path / "o" / manifest["records"][0]["forged_file"]).shape == (48, 48, 3)


def test_generate_raw_without_layout_is_data_error(tmp_path):
    src = tmp_path / "raws"
    src.mkdir()
    raster_io.write_pgm16(np.zeros((16, 16)), src / "r.pgm")
    assert _run("generate", "--input", src, "--seed", 1, "--out", tmp_path / "o") == 1


def _write_heatmaps(corpus, root, fn):
    manifest = json.loads((corpus / "manifest.json").read_text())
    for rec in manifest["records"]:
        mask = raster_io.read_mask_pgm(corpus / rec["mask_file"])
        path = root / f"{rec['id']}.pfm"
        path.parent.mkdir(parents=True, exist_ok=True)
        raster_io.write_heatmap_pfm(fn(mask), path)
    return manifest


def test_evaluate_perfect_and_constant(corpus, tmp_path):
    _write_heatmaps(corpus, tmp_path / "perfect", lambda m: m.astype(float))
    _write_heatmaps(corpus, tmp_path / "flat", lambda m: np.full(m.shape, 0.3))
    assert _run("evaluate", "--heatmaps", tmp_path / "perfect", "--manifest", corpus / "manifest.json",
                "--out", tmp_path / "p.json", "--csv", tmp_path / "p.csv") == 0
    assert _run("evaluate", "--heatmaps", tmp_path / "flat", "--manifest", corpus / "manifest.json",
                "--out", tmp_path / "f.json") == 0
    perfect = json.loads((tmp_path / "p.json").read_text())
    flat = json.loads((tmp_path / "f.json").read_text())
    assert perfect["mcc_variant"] == "soft-v1"
    assert len(perfect["aggregate"]) == 4
    assert all(row["mean"] == pytest.approx(1.0, abs=1e-12) for row in perfect["aggregate"])
    assert all(row["mean"] == pytest.approx(0.0, abs=1e-12) for row in flat["aggregate"])
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "kind,mask_kind,mean,std,n"


def test_evaluate_missing_and_order_independent(corpus, tmp_path):
    manifest = _write_heatmaps(corpus, tmp_path / "h", lambda m: m.astype(float))
    victim = manifest["records"][0]["id"]
    (tmp_path / "h" / f"{victim}.pfm").unlink()
    assert _run("evaluate", "--heatmaps", tmp_path / "h", "--manifest", corpus / "manifest.json",
                "--out", tmp_path / "r1.json") == 0
    r1 = json.loads((tmp_path / "r1.json").read_text())
    assert r1["missing"] == 1
    entry = next(e for e in r1["per_image"] if e["id"] == victim)
    assert entry["status"] == "missing" and entry["mcc"] is None
    assert sum(row["n"] for row in r1["aggregate"]) == len(manifest["records"]) - 1
    # rewriting the files in reverse order must not change the result
    for rec in reversed(manifest["records"][1:]):
        p = tmp_path / "h" / f"{rec['id']}.pfm"
        data = p.read_bytes()
        p.unlink()
        p.write_bytes(data)
    assert _run("evaluate", "--heatmaps", tmp_path / "h", "--manifest", corpus / "manifest.json",
                "--out", tmp_path / "r2.json") == 0
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()


def test_inspect_ok_tampered_missing(corpus, tmp_path, capsys):
    record = corpus / "jpeggrid" / "endo" / "syn000.json"
    assert _run("inspect", record) == 0
    out = capsys.readouterr().out
    assert "residual-support: OK" in out and "jpeg" in out and "mask area fraction" in out

    copy = tmp_path / "copy"
    copy.mkdir()
    for rel, data in _tree(corpus).items():
        (copy / rel).parent.mkdir(parents=True, exist_ok=True)
        (copy / rel).write_bytes(data)
    rec = json.loads(record.read_text())
    forged = raster_io.read_ppm8(copy / rec["forged_file"])
    mask = raster_io.read_mask_pgm(copy / rec["mask_file"])
    y, x = np.argwhere(mask == 0)[0]
    forged[y, x, 0] = (forged[y, x, 0] + 1) % 256
    raster_io.write_ppm8(forged, copy / rec["forged_file"])
    assert _run("inspect", copy / "jpeggrid" / "endo" / "syn000.json") == 1
    assert "residual-support: FAIL" in capsys.readouterr().out

    assert _run("inspect", tmp_path / "nope.json") == 1
    assert "nope.json" in capsys.readouterr().err


def test_probe_single_image(corpus, tmp_path, capsys):
    rec = json.loads((corpus / "jpeggrid" / "exo" / "syn001.json").read_text())
    out = tmp_path / "h.pfm"
    assert _run("probe", "--method", "zero", "--image", corpus / rec["forged_file"], "--out", out) == 0
    assert capsys.readouterr().out.startswith("estimate: ")
    assert raster_io.read_heatmap_pfm(out).shape == (96, 96)


def test_probe_manifest_then_evaluate(corpus, tmp_path):
    assert _run("probe", "--method", "noise", "--manifest", corpus / "manifest.json",
                "--kinds", "noise", "--out", tmp_path / "h") == 0
    assert _run("evaluate", "--heatmaps", tmp_path / "h", "--manifest", corpus / "manifest.json",
                "--out", tmp_path / "r.json") == 0
    r = json.loads((tmp_path / "r.json").read_text())
    assert {row["kind"] for row in r["aggregate"]} == {"noise"}


def test_probe_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        _run("probe", "--method", "zero")
    assert exc.value.code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "trace_forge", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "generate" in res.stdout
