"""Experiment configuration: a validated YAML schema mirrored as a dataclass.

Desk-scale defaults (cutoff 60, rank 4, 5 repetitions, 10^4 shots) keep
everything runnable on one machine; the full-scale values from the
reference hardware parameters (cutoff 196, rank 12) remain valid settings.
At cutoff 60 the finite-energy states lose ~2e-7 of their norm to the
truncation, so the default norm-loss tolerance is 1e-6 there; tighten it
when using larger cutoffs.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .gkp import GkpParams, NoiseParams

KINDS = (
    "stab_only",
    "repeated_meas",
    "two_qubit_code",
    "surface_memory",
    "extract_models",
    "build_basis",
)

_ALLOWED_KEYS = {
    "kind",
    "delta",
    "cutoff",
    "rank",
    "gauge",
    "noise",
    "noise_scale",
    "shots",
    "seed",
    "basis_seed",
    "repetitions",
    "rounds",
    "distance",
    "decoders",
    "backends",
    "sbs_schedule",
    "init_basis",
    "models_dir",
    "output_dir",
    "per_gauge_models",
    "norm_loss_tol",
}

_NOISE_KEYS = {"t1_mode", "tphi_mode", "t1_tls", "tphi_tls", "t_ecd"}


@dataclass
class ExperimentConfig:
    kind: str = "two_qubit_code"
    delta: float = 0.36
    cutoff: int = 60
    rank: int = 4
    gauge: tuple[int, int] = (0, 0)
    noise: NoiseParams = field(default_factory=NoiseParams)
    noise_scale: float = 1.0
    shots: int = 10_000
    seed: int = 0
    basis_seed: int = 0
    repetitions: int = 5
    rounds: int = 5
    distance: int = 3
    decoders: tuple[str, ...] = ("autonomous", "concatenated", "full_info")
    backends: tuple[str, ...] = ("trajectory", "ptm_plus", "bp_plus")
    sbs_schedule: tuple[str, ...] = ("q", "p", "q", "p")
    init_basis: str = "X"
    models_dir: str = "models"
    output_dir: str = "results"
    per_gauge_models: bool = False
    norm_loss_tol: float = 1e-6

    def gkp_params(self) -> GkpParams:
        return GkpParams(delta=self.delta, dim=self.cutoff, gauge=tuple(self.gauge))

    def noise_params(self) -> NoiseParams:
        if self.noise_scale == 1.0:
            return self.noise
        return self.noise.scaled_rates(self.noise_scale)

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        self.gkp_params()  # raises on bad delta/cutoff/gauge
        self.noise_params()
        if self.shots < 1:
            raise ValueError("shots must be positive")
        if self.rank < 0:
            raise ValueError("rank must be non-negative")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be positive")
        if self.distance < 3 or self.distance % 2 == 0:
            raise ValueError("distance must be odd and >= 3")
        if self.init_basis not in ("X", "Z"):
            raise ValueError("init_basis must be 'X' or 'Z'")
        for q in self.sbs_schedule:
            if q not in ("q", "p"):
                raise ValueError(f"bad sbs_schedule entry {q!r}")
        for d in self.decoders:
            if d not in ("autonomous", "concatenated", "full_info"):
                raise ValueError(f"unknown decoder {d!r}")
        for b in self.backends:
            if b not in ("trajectory", "ptm_plus", "bp_plus"):
                raise ValueError(f"unknown backend {b!r}")
        if not (0 < self.norm_loss_tol < 1):
            raise ValueError("norm_loss_tol must be in (0, 1)")
        return self


def load_config(path) -> ExperimentConfig:
    doc = yaml.safe_load(Path(path).read_text()) or {}
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> ExperimentConfig:
    unknown = set(doc) - _ALLOWED_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(doc)
    if "noise" in kwargs:
        noise_doc = kwargs.pop("noise") or {}
        bad = set(noise_doc) - _NOISE_KEYS
        if bad:
            raise ValueError(f"unknown noise keys: {sorted(bad)}")
        noise_doc = {
            k: (math.inf if v in ("inf", ".inf", None) else float(v))
            for k, v in noise_doc.items()
        }
        kwargs["noise"] = NoiseParams(**noise_doc)
    for tuple_key in ("gauge", "decoders", "backends", "sbs_schedule"):
        if tuple_key in kwargs:
            kwargs[tuple_key] = tuple(kwargs[tuple_key])
    return ExperimentConfig(**kwargs).validate()


def config_to_yaml(config: ExperimentConfig) -> str:
    doc = asdict(config)
    doc["noise"] = {
        k: ("inf" if math.isinf(v) else v) for k, v in doc["noise"].items()
    }
    for tuple_key in ("gauge", "decoders", "backends", "sbs_schedule"):
        doc[tuple_key] = list(doc[tuple_key])
    return yaml.safe_dump(doc, sort_keys=False)


def worker_count() -> int | None:
    """Worker count from the environment (BLAS/thread parallelism cap)."""
    raw = os.environ.get("BPPLUS_WORKERS")
    if raw is None:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError("BPPLUS_WORKERS must be >= 1")
    return n


def check_model_artifacts(config: ExperimentConfig, models_dir=None) -> None:
    """Verify that referenced model artifacts match the configuration."""
    import json

    directory = Path(models_dir or config.models_dir)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no model manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    noise = config.noise_params()
    expected = {
        "delta": config.delta,
        "dim": config.cutoff,
        "rank": config.rank,
    }
    for key, val in expected.items():
        if manifest.get(key) != val:
            raise ValueError(
                f"model set {directory} has {key}={manifest.get(key)}, config wants {val}"
            )
    for key in _NOISE_KEYS:
        have = manifest["noise"].get(key)
        want = getattr(noise, key)
        if not (have == want or (math.isinf(have) and math.isinf(want))):
            raise ValueError(
                f"model set {directory} noise {key}={have} does not match config {want}"
            )
