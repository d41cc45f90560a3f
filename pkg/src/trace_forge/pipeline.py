"""Full camera chain: mosaic, raw noise, demosaic, white balance, gamma, JPEG."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from . import cfa, jpeg_sim, raw_model, tone
from .cfa import CFAPattern, DemosaicAlgo
from .jpeg_sim import JpegParams
from .raw_model import NoiseParams
from .tone import ToneParams


def stream(master_seed: int, image_id: str, purpose: str) -> np.random.Generator:
    """Independent generator for one (seed, image, purpose) triple.

    Streams are keyed by a hash of all three parts, so adding a new purpose
    never shifts the draws of an existing one.
    """
    key = f"{int(master_seed)}\x1f{image_id}\x1f{purpose}".encode()
    digest = hashlib.sha256(key).digest()
    words = np.frombuffer(digest, dtype="<u4")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words.tolist())))


@dataclass(frozen=True)
class SeedScheme:
    master_seed: int
    image_id: str

    def rng(self, purpose: str) -> np.random.Generator:
        return stream(self.master_seed, self.image_id, purpose)


@dataclass(frozen=True)
class PipelineConfig:
    cfa_pattern: CFAPattern
    demosaic: DemosaicAlgo
    tone: ToneParams
    noise: Optional[NoiseParams] = None
    jpeg: Optional[JpegParams] = None
    # RNG purpose label for the noise realization; equal labels give equal noise
    noise_label: str = "noise"

    def with_(self, **changes) -> "PipelineConfig":
        return replace(self, **changes)

    def stages(self) -> dict:
        """Stage-wise comparable view (what must match when a stage is common)."""
        return {
            "noise": (self.noise, self.noise_label if self.noise else None),
            "cfa_pattern": self.cfa_pattern,
            "demosaic": self.demosaic,
            "tone": self.tone,
            "jpeg": self.jpeg,
        }

    def to_json(self) -> dict:
        d = {}
        if self.noise is not None:
            d["noise"] = self.noise.to_json()
            d["noise_label"] = self.noise_label
        d["cfa_pattern"] = self.cfa_pattern.to_json()
        d["demosaic"] = self.demosaic.value
        d["wb"] = list(self.tone.wb_gains)
        d["gamma"] = self.tone.gamma
        d["k"] = self.tone.k
        if self.jpeg is not None:
            d["jpeg"] = self.jpeg.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PipelineConfig":
        return cls(
            cfa_pattern=CFAPattern.from_json(d["cfa_pattern"]),
            demosaic=DemosaicAlgo(d["demosaic"]),
            tone=ToneParams(tuple(float(g) for g in d["wb"]), float(d["gamma"]), float(d.get("k", 1.0))),
            noise=NoiseParams.from_json(d["noise"]) if "noise" in d else None,
            jpeg=JpegParams.from_json(d["jpeg"]) if "jpeg" in d else None,
            noise_label=d.get("noise_label", "noise"),
        )


def run_pipeline(reference: np.ndarray, cfg: PipelineConfig,
                 rng: Optional[np.random.Generator] = None,
                 provenance: Optional[dict] = None) -> np.ndarray:
    """Render a clean RGB reference through the configured chain.

    ``rng`` feeds the raw noise stage and is required whenever ``cfg.noise``
    is set.
    """
    m = cfa.mosaic(reference, cfg.cfa_pattern)
    if cfg.noise is not None:
        if rng is None:
            raise ValueError("a random generator is required when noise is configured")
        m = raw_model.add_raw_noise(m, cfg.noise, rng)
    img = cfa.demosaic(m, cfg.cfa_pattern, cfg.demosaic)
    img = tone.white_balance(img, cfg.tone.wb_gains)
    img = tone.gamma_correct(img, cfg.tone.gamma, cfg.tone.k, provenance)
    if cfg.jpeg is not None:
        img, _ = jpeg_sim.compress_decompress(img, cfg.jpeg)
    return img


@dataclass(frozen=True)
class CommonParams:
    """Per-image parameters shared by every dataset kind."""

    cfa_pattern: CFAPattern
    demosaic: DemosaicAlgo
    gamma: float
    wb_gains: Tuple[float, float, float]
    noise: NoiseParams

    @property
    def tone(self) -> ToneParams:
        return ToneParams(self.wb_gains, self.gamma)

    def base_config(self) -> PipelineConfig:
        return PipelineConfig(self.cfa_pattern, self.demosaic, self.tone, noise=self.noise)


def sample_common_params(rng: np.random.Generator) -> Tuple[CFAPattern, DemosaicAlgo, float]:
    pattern = cfa.sample_pattern(rng)
    algo = cfa.ALL_ALGOS[int(rng.integers(len(cfa.ALL_ALGOS)))]
    gamma = float(rng.uniform(*tone.GAMMA_RANGE))
    return pattern, algo, gamma


def sample_image_params(rng: np.random.Generator) -> CommonParams:
    """Common triple plus the shared white balance and baseline noise law."""
    pattern, algo, gamma = sample_common_params(rng)
    gains = tone.sample_wb_gains(rng)
    noise = raw_model.sample_noise_params(rng)
    return CommonParams(pattern, algo, gamma, gains, noise)
