"""``trace-forge`` command line: generate, probe, evaluate, inspect.

Exit codes: 0 success (possibly with warnings), 1 data failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import forgery, metrics, probes, raster_io
from .cfa import CFAPattern
from .forgery import ALL_KINDS, DatasetKind, ForgeryRecord, MaskKind
from .pipeline import stream
from .raw_model import half_sample
from .synthetic import synthetic_scene

log = logging.getLogger("trace_forge")

EXIT_OK, EXIT_DATA, EXIT_USAGE = 0, 1, 2


def _parse_kinds(text: str, parser) -> List[DatasetKind]:
    if text.strip() == "all":
        return list(ALL_KINDS)
    out = []
    for item in text.split(","):
        try:
            kind = DatasetKind(item.strip())
        except ValueError:
            parser.error(f"unknown dataset kind {item!r}; choose from "
                         f"{', '.join(k.value for k in ALL_KINDS)} or 'all'")
        if kind not in out:
            out.append(kind)
    return out


def _parse_mask_kinds(text: str, parser) -> List[MaskKind]:
    out = []
    for item in text.split(","):
        try:
            mk = MaskKind(item.strip())
        except ValueError:
            parser.error(f"unknown mask kind {item!r}; choose from endo, exo")
        if mk not in out:
            out.append(mk)
    return out


def _parse_pattern(text: str, parser) -> CFAPattern:
    try:
        dx, dy = (int(v) for v in text.split(","))
        return CFAPattern(dx, dy)
    except ValueError:
        parser.error(f"--native-cfa expects 'dx,dy' with values in {{0,1}}, got {text!r}")


# --- generate ----------------------------------------------------------------

def synthetic_references(n: int, seed: int, size: int = 512):
    """``n`` seeded synthetic scenes named ``syn000``, ``syn001``, ..."""
    refs = []
    for i in range(n):
        image_id = f"syn{i:03d}"
        refs.append((image_id, synthetic_scene(stream(seed, image_id, "scene"), size=(size, size))))
    return refs


def load_references(input_dir: Path, native_cfa: Optional[CFAPattern]):
    """Raw ``.pgm`` Bayer planes (half-sampled) and clean ``.ppm`` references."""
    refs = []
    for path in sorted(input_dir.iterdir()):
        suffix = path.suffix.lower()
        if suffix == ".pgm":
            raw = raster_io.read_pgm16(path, native_cfa=native_cfa)
            refs.append((path.stem, half_sample(raw)))
        elif suffix == ".ppm":
            refs.append((path.stem, raster_io.read_ppm8(path).astype(np.float64)))
    return refs


def cmd_generate(args, parser) -> int:
    kinds = _parse_kinds(args.kinds, parser)
    mask_kinds = _parse_mask_kinds(args.masks, parser)
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    if args.synthetic is not None:
        if args.synthetic < 1:
            parser.error("--synthetic must be >= 1")
        refs = synthetic_references(args.synthetic, args.seed, args.size)
    else:
        input_dir = Path(args.input)
        if not input_dir.is_dir():
            parser.error(f"--input {input_dir} is not a directory")
        native = _parse_pattern(args.native_cfa, parser) if args.native_cfa else None
        try:
            refs = load_references(input_dir, native)
        except (raster_io.RasterFormatError, raster_io.RasterValidationError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DATA
        if not refs:
            print(f"error: no .pgm or .ppm images in {input_dir}", file=sys.stderr)
            return EXIT_DATA
    image_masks, skipped = forgery.prepare_masks(refs, args.seed, workers=args.workers)
    manifest = forgery.generate_corpus(refs, image_masks, kinds, args.seed, args.out,
                                       mask_kinds=mask_kinds, workers=args.workers, skipped=skipped)
    print(f"wrote {len(manifest['records'])} forgeries to {args.out} "
          f"({manifest['skip_count']} images skipped)")
    return EXIT_OK


# --- probe -------------------------------------------------------------------

def run_probe(method: str, image: np.ndarray):
    """Returns ``(estimate or None, heatmap)``."""
    if method == "zero":
        return probes.zero_grid_probe(image)
    if method == "cfa":
        return probes.cfa_probe(image)
    return None, probes.noise_probe(image)


def _format_estimate(method: str, estimate) -> str:
    if method == "noise":
        return "n/a"
    if estimate is None:
        return "none"
    return f"{estimate[0]},{estimate[1]}"


def cmd_probe(args, parser) -> int:
    if (args.image is None) == (args.manifest is None):
        parser.error("give exactly one of --image or --manifest")
    if args.image is not None:
        try:
            image = raster_io.read_ppm8(args.image).astype(np.float64)
            estimate, heat = run_probe(args.method, image)
        except (OSError, raster_io.RasterFormatError, ValueError) as exc:
            print(f"error: {args.image}: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"estimate: {_format_estimate(args.method, estimate)}")
        if args.out:
            raster_io.write_heatmap_pfm(heat, args.out)
        return EXIT_OK
    if not args.out:
        parser.error("--manifest mode needs --out DIR")
    manifest_path = Path(args.manifest)
    manifest = json.loads(manifest_path.read_text())
    root = manifest_path.parent
    out = Path(args.out)
    kinds = {k.value for k in _parse_kinds(args.kinds, parser)}
    for rec in manifest["records"]:
        if rec["kind"] not in kinds:
            continue
        image = raster_io.read_ppm8(root / rec["forged_file"]).astype(np.float64)
        _, heat = run_probe(args.method, image)
        target = out / f"{rec['id']}.pfm"
        target.parent.mkdir(parents=True, exist_ok=True)
        raster_io.write_heatmap_pfm(heat, target)
    return EXIT_OK


# --- evaluate ----------------------------------------------------------------

def evaluate_manifest(heatmap_dir: Path, manifest_path: Path) -> dict:
    """Score ``{heatmap_dir}/{kind}/{mask_kind}/{image_id}.pfm`` against the manifest masks."""
    manifest = json.loads(Path(manifest_path).read_text())
    root = Path(manifest_path).parent
    per_image, scores = [], []
    for rec in sorted(manifest["records"], key=lambda r: r["id"]):
        entry = {"id": rec["id"], "image_id": rec["image_id"],
                 "kind": rec["kind"], "mask_kind": rec["mask_kind"], "mcc": None}
        path = Path(heatmap_dir) / f"{rec['id']}.pfm"
        if not path.exists():
            entry["status"] = "missing"
            per_image.append(entry)
            continue
        try:
            heat = raster_io.read_heatmap_pfm(path)
            mask = raster_io.read_mask_pgm(root / rec["mask_file"])
            entry["mcc"] = metrics.weighted_mcc(metrics.normalize_heatmap(heat), mask)
            entry["status"] = "ok"
            scores.append((rec["kind"], rec["mask_kind"], entry["mcc"]))
        except (raster_io.RasterFormatError, raster_io.RasterValidationError, ValueError) as exc:
            entry["status"] = f"error: {exc}"
        per_image.append(entry)
    grid = [{"kind": k, "mask_kind": m, "mean": a.mean, "std": a.std, "n": a.n}
            for (k, m), a in metrics.aggregate(scores).items()]
    return {
        "mcc_variant": metrics.MCC_VARIANT,
        "per_image": per_image,
        "aggregate": grid,
        "missing": sum(e["status"] == "missing" for e in per_image),
        "errors": sum(e["status"].startswith("error") for e in per_image),
    }


def cmd_evaluate(args, parser) -> int:
    if not Path(args.manifest).is_file():
        print(f"error: manifest not found: {args.manifest}", file=sys.stderr)
        return EXIT_DATA
    results = evaluate_manifest(Path(args.heatmaps), Path(args.manifest))
    forgery.dump_json(results, args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "mask_kind", "mean", "std", "n"])
            for row in results["aggregate"]:
                writer.writerow([row["kind"], row["mask_kind"],
                                 f"{row['mean']:.6f}", f"{row['std']:.6f}", row["n"]])
    if results["missing"]:
        log.warning("%d manifest entries have no heatmap", results["missing"])
    for row in results["aggregate"]:
        print(f"{row['kind']:>12} {row['mask_kind']:>4}  MCC {row['mean']:.3f} "
              f"+- {row['std']:.3f}  (n={row['n']})")
    return EXIT_OK


# --- inspect -----------------------------------------------------------------

def config_diff(cfg0: dict, cfg1: dict) -> List[str]:
    lines = []
    for key in sorted(set(cfg0) | set(cfg1)):
        v0, v1 = cfg0.get(key, "-"), cfg1.get(key, "-")
        if v0 != v1:
            lines.append(f"  {key}: {json.dumps(v0, sort_keys=True)} -> {json.dumps(v1, sort_keys=True)}")
    return lines


def cmd_inspect(args, parser) -> int:
    path = Path(args.record)
    if not path.is_file():
        print(f"error: no such record: {path}", file=sys.stderr)
        return EXIT_DATA
    rec = ForgeryRecord.from_json(json.loads(path.read_text()))
    root = Path(args.root) if args.root else path.parent.parent.parent
    print(f"record: {rec.record_id}")
    print("differing stages:")
    for line in config_diff(rec.cfg0.to_json(), rec.cfg1.to_json()):
        print(line)
    try:
        forged = raster_io.read_ppm8(root / rec.forged_file)
        authentic = raster_io.read_ppm8(root / rec.authentic_file)
        mask = raster_io.read_mask_pgm(root / rec.mask_file)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except raster_io.RasterFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(f"mask area fraction: {mask.mean():.4f}")
    outside = mask == 0
    ok = forged.shape == authentic.shape and np.array_equal(forged[outside], authentic[outside])
    print(f"residual-support: {'OK' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_DATA


# --- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trace-forge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="render a forgery corpus")
    src = gen.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="directory of raw .pgm planes and/or clean .ppm references")
    src.add_argument("--synthetic", type=int, metavar="N", help="use N seeded synthetic scenes")
    gen.add_argument("--native-cfa", metavar="DX,DY", help="Bayer layout of the raw .pgm inputs")
    gen.add_argument("--size", type=int, default=512, help="synthetic scene side (default 512)")
    gen.add_argument("--out", required=True)
    gen.add_argument("--kinds", default="all", help="comma list of dataset kinds, or 'all'")
    gen.add_argument("--masks", default="endo,exo", help="comma list of endo,exo")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--workers", type=int, default=forgery.default_workers(),
                     help="worker processes (default: $TRACE_FORGE_WORKERS or 1)")

    prb = sub.add_parser("probe", help="run a trace probe")
    prb.add_argument("--method", choices=("zero", "cfa", "noise"), required=True)
    prb.add_argument("--image", help="P6 image to analyse")
    prb.add_argument("--manifest", help="probe every forged image of a corpus")
    prb.add_argument("--kinds", default="all", help="with --manifest: dataset kinds to probe")
    prb.add_argument("--out", help="PFM heatmap (with --image) or output directory (with --manifest)")

    ev = sub.add_parser("evaluate", help="score heatmaps against a corpus")
    ev.add_argument("--heatmaps", required=True, help="directory of {kind}/{mask_kind}/{id}.pfm")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--out", required=True, help="results.json path")
    ev.add_argument("--csv", help="also write the aggregate grid as CSV")

    ins = sub.add_parser("inspect", help="explain one forgery record")
    ins.add_argument("record", help="sidecar .json of a forgery")
    ins.add_argument("--root", help="corpus root (default: three levels above the record)")
    return parser


COMMANDS = {"generate": cmd_generate, "probe": cmd_probe,
            "evaluate": cmd_evaluate, "inspect": cmd_inspect}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return COMMANDS[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
