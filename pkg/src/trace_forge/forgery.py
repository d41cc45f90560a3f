"""Dataset recipes, forgery merging and corpus generation."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import cfa, jpeg_sim, masks, raster_io, raw_model
from .pipeline import CommonParams, PipelineConfig, SeedScheme, run_pipeline, sample_image_params

log = logging.getLogger(__name__)

VERSIONS = {
    "demosaic_family": "builtin-v1",
    "quant_law": "ijg",
    "segmenter": "graph-v1",
}
MANIFEST_VERSION = 1


class DatasetKind(str, enum.Enum):
    NOISE_LEVEL = "noise"
    CFA_GRID = "cfagrid"
    CFA_ALGO = "cfaalgo"
    JPEG_GRID = "jpeggrid"
    JPEG_QUALITY = "jpegquality"
    HYBRID = "hybrid"


class MaskKind(str, enum.Enum):
    ENDO = "endo"
    EXO = "exo"


ALL_KINDS = tuple(DatasetKind)
ALL_MASK_KINDS = tuple(MaskKind)


def merge(p0: np.ndarray, p1: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Forgery: ``p1`` where the mask is set, ``p0`` elsewhere."""
    p0 = np.asarray(p0)
    p1 = np.asarray(p1)
    mask = np.asarray(mask)
    if p0.shape != p1.shape or p0.shape[:2] != mask.shape:
        raise ValueError(f"shape mismatch: {p0.shape}, {p1.shape}, mask {mask.shape}")
    sel = mask != 0
    if p0.ndim == 3:
        sel = sel[..., None]
    return np.where(sel, p1, p0)


# --- recipes -----------------------------------------------------------------

def _other_pattern(rng, pattern):
    others = [p for p in cfa.ALL_PATTERNS if p != pattern]
    return others[int(rng.integers(len(others)))]


def _other_algo(rng, algo):
    others = [a for a in cfa.ALL_ALGOS if a != algo]
    return others[int(rng.integers(len(others)))]


def _modify_noise(cfg0, cfg1, rng):
    n0, n1 = raw_model.sample_noise_pair(rng)
    return (cfg0.with_(noise=n0, noise_label="noise0"),
            cfg1.with_(noise=n1, noise_label="noise1"))


def _modify_cfa(cfg0, cfg1, rng, splice: bool):
    if splice:
        return cfg0, cfg1.with_(demosaic=_other_algo(rng, cfg0.demosaic),
                                cfa_pattern=cfa.sample_pattern(rng))
    return cfg0, cfg1.with_(cfa_pattern=_other_pattern(rng, cfg0.cfa_pattern))


def _modify_jpeg(cfg0, cfg1, rng, splice: bool):
    if splice:
        q0 = jpeg_sim.sample_quality(rng)
        q1 = jpeg_sim.sample_quality(rng, exclude=q0)
        j0 = jpeg_sim.JpegParams(q0, jpeg_sim.sample_grid(rng))
        j1 = jpeg_sim.JpegParams(q1, jpeg_sim.sample_grid(rng))
    else:
        j0 = jpeg_sim.sample_jpeg(rng)
        j1 = jpeg_sim.sample_jpeg(rng, force_new_grid=j0)
    return cfg0.with_(jpeg=j0), cfg1.with_(jpeg=j1)


def sample_pair(kind: DatasetKind, common: CommonParams,
                rng: np.random.Generator) -> Tuple[PipelineConfig, PipelineConfig]:
    kind = DatasetKind(kind)
    base = common.base_config()
    if kind is DatasetKind.NOISE_LEVEL:
        return _modify_noise(base, base, rng)
    if kind is DatasetKind.CFA_GRID:
        return _modify_cfa(base, base, rng, splice=False)
    if kind is DatasetKind.CFA_ALGO:
        return _modify_cfa(base, base, rng, splice=True)
    if kind is DatasetKind.JPEG_GRID:
        return _modify_jpeg(base, base, rng, splice=False)
    if kind is DatasetKind.JPEG_QUALITY:
        return _modify_jpeg(base, base, rng, splice=True)
    return sample_hybrid(common, rng)


HYBRID_STEPS = ("noise", "cfa", "jpeg")


def sample_hybrid_plan(rng: np.random.Generator) -> Tuple[Tuple[str, ...], bool]:
    """Which steps to modify, and whether CFA/JPEG changes are splicing-style."""
    if rng.random() < 0.5:
        steps = HYBRID_STEPS
    else:
        skip = HYBRID_STEPS[int(rng.integers(3))]
        steps = tuple(s for s in HYBRID_STEPS if s != skip)
    splice = bool(rng.random() < 0.5)
    return steps, splice


def sample_hybrid(common: CommonParams,
                  rng: np.random.Generator) -> Tuple[PipelineConfig, PipelineConfig]:
    steps, splice = sample_hybrid_plan(rng)
    cfg0 = cfg1 = common.base_config()
    if "noise" in steps:
        cfg0, cfg1 = _modify_noise(cfg0, cfg1, rng)
    if "cfa" in steps:
        cfg0, cfg1 = _modify_cfa(cfg0, cfg1, rng, splice)
    if "jpeg" in steps:
        cfg0, cfg1 = _modify_jpeg(cfg0, cfg1, rng, splice)
    return cfg0, cfg1


def differing_stages(cfg0: PipelineConfig, cfg1: PipelineConfig) -> List[str]:
    s0, s1 = cfg0.stages(), cfg1.stages()
    return [k for k in s0 if s0[k] != s1[k]]


# --- records -----------------------------------------------------------------

@dataclass
class ForgeryRecord:
    image_id: str
    kind: DatasetKind
    mask_kind: MaskKind
    mask_file: str
    forged_file: str
    authentic_file: str
    cfg0: PipelineConfig
    cfg1: PipelineConfig
    seed: int
    versions: Dict[str, str] = field(default_factory=lambda: dict(VERSIONS))
    extra: Dict[str, object] = field(default_factory=dict)

    @property
    def record_id(self) -> str:
        return f"{self.kind.value}/{self.mask_kind.value}/{self.image_id}"

    def to_json(self) -> dict:
        d = {
            "image_id": self.image_id,
            "kind": self.kind.value,
            "mask_kind": self.mask_kind.value,
            "mask_file": self.mask_file,
            "forged_file": self.forged_file,
            "authentic_file": self.authentic_file,
            "cfg0": self.cfg0.to_json(),
            "cfg1": self.cfg1.to_json(),
            "seed": self.seed,
            "versions": dict(self.versions),
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "ForgeryRecord":
        known = {"image_id", "kind", "mask_kind", "mask_file", "forged_file",
                 "authentic_file", "cfg0", "cfg1", "seed", "versions"}
        return cls(
            image_id=d["image_id"],
            kind=DatasetKind(d["kind"]),
            mask_kind=MaskKind(d["mask_kind"]),
            mask_file=d["mask_file"],
            forged_file=d["forged_file"],
            authentic_file=d["authentic_file"],
            cfg0=PipelineConfig.from_json(d["cfg0"]),
            cfg1=PipelineConfig.from_json(d["cfg1"]),
            seed=int(d["seed"]),
            versions=dict(d.get("versions", {})),
            extra={k: v for k, v in d.items() if k not in known},
        )


def dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# --- masks for a corpus ------------------------------------------------------

@dataclass
class ImageMasks:
    endo: np.ndarray
    exo: np.ndarray
    exo_source: str


def _endomask_task(args):
    image_id, reference, master_seed, seg_kwargs, min_frac = args
    try:
        labels = masks.segment(reference, **seg_kwargs)
        rng = SeedScheme(master_seed, image_id).rng("endomask")
        return image_id, masks.pick_endomask(labels, rng, min_frac=min_frac), None
    except masks.NoAdmissibleRegion as exc:
        return image_id, None, str(exc)


def prepare_masks(references: Sequence[Tuple[str, np.ndarray]], master_seed: int,
                  workers: int = 1, seg_kwargs: Optional[dict] = None,
                  min_frac: float = masks.DEFAULT_MIN_FRACTION):
    """Segment, pick endomasks and pair exomasks.

    Returns ``(masks_by_id, skipped)`` where ``skipped`` lists
    ``(image_id, reason)`` for images without an admissible region.
    """
    tasks = [(iid, ref, master_seed, seg_kwargs or {}, min_frac) for iid, ref in references]
    endo = {}
    skipped = []
    for image_id, mask, reason in _map(_endomask_task, tasks, workers):
        if mask is None:
            log.warning("skipping %s: %s", image_id, reason)
            skipped.append((image_id, reason))
        else:
            endo[image_id] = mask
    out = {}
    if len(endo) >= 2:
        pairs = masks.assign_exomasks([(iid, int(m.sum())) for iid, m in endo.items()])
        for image_id, source in pairs:
            exo = masks.resize_mask(endo[source], endo[image_id].shape)
            out[image_id] = ImageMasks(endo[image_id], exo, source)
    else:
        for image_id in endo:
            skipped.append((image_id, "exomask assignment needs at least two images"))
    return out, skipped


# --- corpus ------------------------------------------------------------------

def _map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def render_pair(reference, cfg0, cfg1, scheme: SeedScheme):
    """Render both pipelines; pipelines with equal noise labels share noise."""
    prov0, prov1 = {}, {}
    p0 = run_pipeline(reference, cfg0, scheme.rng(cfg0.noise_label), prov0)
    p1 = run_pipeline(reference, cfg1, scheme.rng(cfg1.noise_label), prov1)
    return p0, p1, prov0.get("gamma_clamped", 0), prov1.get("gamma_clamped", 0)


def _corpus_task(args):
    image_id, reference, image_masks, kinds, mask_kinds, master_seed, out_dir = args
    out = Path(out_dir)
    scheme = SeedScheme(master_seed, image_id)
    common = sample_image_params(scheme.rng("params"))
    artifacts = {}
    records = []

    def emit(rel, writer, payload):
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        writer(payload, path)
        artifacts[rel] = sha256_file(path)

    mask_files = {}
    for mk in mask_kinds:
        rel = f"masks/{image_id}_{mk.value}.pgm"
        mask = image_masks.endo if mk is MaskKind.ENDO else image_masks.exo
        emit(rel, raster_io.write_mask_pgm, mask)
        mask_files[mk] = rel

    for kind in kinds:
        cfg0, cfg1 = sample_pair(kind, common, scheme.rng(f"pair/{kind.value}"))
        p0, p1, clamp0, clamp1 = render_pair(reference, cfg0, cfg1, scheme)
        authentic_rel = f"{kind.value}/authentic/{image_id}.ppm"
        emit(authentic_rel, raster_io.write_ppm8, p0)
        for mk in mask_kinds:
            mask = image_masks.endo if mk is MaskKind.ENDO else image_masks.exo
            forged_rel = f"{kind.value}/{mk.value}/{image_id}.ppm"
            emit(forged_rel, raster_io.write_ppm8, merge(p0, p1, mask))
            extra = {
                "differing_stages": differing_stages(cfg0, cfg1),
                "mask_area_fraction": float(mask.mean()),
                "gamma_clamped": {"p0": clamp0, "p1": clamp1},
            }
            if mk is MaskKind.EXO:
                extra["exomask_source"] = image_masks.exo_source
            rec = ForgeryRecord(image_id, kind, mk, mask_files[mk], forged_rel, authentic_rel,
                                cfg0, cfg1, master_seed, extra=extra)
            sidecar_rel = f"{kind.value}/{mk.value}/{image_id}.json"
            emit(sidecar_rel, dump_json, rec.to_json())
            records.append({
                "id": rec.record_id,
                "image_id": image_id,
                "kind": kind.value,
                "mask_kind": mk.value,
                "sidecar": sidecar_rel,
                "forged_file": forged_rel,
                "mask_file": mask_files[mk],
                "authentic_file": authentic_rel,
            })
    return records, artifacts


def _safe_corpus_task(args):
    try:
        return _corpus_task(args) + (None,)
    except Exception as exc:  # one bad image must not abort the corpus
        log.exception("image %s failed", args[0])
        return [], {}, f"{type(exc).__name__}: {exc}"


def generate_corpus(references: Sequence[Tuple[str, np.ndarray]], image_masks: Dict[str, ImageMasks],
                    kinds: Iterable[DatasetKind], master_seed: int, out_dir,
                    mask_kinds: Iterable[MaskKind] = ALL_MASK_KINDS, workers: int = 1,
                    skipped: Sequence[Tuple[str, str]] = ()) -> dict:
    """Render every (image, kind, mask kind) forgery and write ``manifest.json``."""
    kinds = [DatasetKind(k) for k in kinds]
    mask_kinds = [MaskKind(m) for m in mask_kinds]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    skipped = list(skipped)
    tasks = [(iid, ref, image_masks[iid], kinds, mask_kinds, int(master_seed), str(out))
             for iid, ref in references if iid in image_masks]
    records, artifacts = [], {}
    for task, (recs, arts, error) in zip(tasks, _map(_safe_corpus_task, tasks, workers)):
        if error is not None:
            skipped.append((task[0], error))
            continue
        records += recs
        artifacts.update(arts)
    images = [{
        "image_id": iid,
        "endomask_area": int(image_masks[iid].endo.sum()),
        "exomask_area": int(image_masks[iid].exo.sum()),
        "exomask_source": image_masks[iid].exo_source,
    } for iid, _ in references if iid in image_masks]
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "master_seed": int(master_seed),
        "kinds": [k.value for k in kinds],
        "mask_kinds": [m.value for m in mask_kinds],
        "versions": dict(VERSIONS),
        "images": images,
        "records": sorted(records, key=lambda r: r["id"]),
        "artifacts": dict(sorted(artifacts.items())),
        "skipped": [{"image_id": i, "reason": r} for i, r in sorted(skipped)],
        "skip_count": len(skipped),
    }
    dump_json(manifest, out / "manifest.json")
    return manifest


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("TRACE_FORGE_WORKERS", "1")))
    except ValueError:
        return 1
