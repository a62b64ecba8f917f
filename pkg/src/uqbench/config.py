"""Pipeline configuration: a single JSON file validated at load.

Unknown keys are rejected rather than ignored, and the canonical content hash
of the raw document is recorded in every stage manifest, so artifacts can be
traced back to the exact configuration that produced them.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .providers import ProviderConfig


class ConfigError(ValueError):
    """Invalid configuration; maps to process exit code 2."""


TOP_LEVEL_KEYS = {
    "dataset_dir",
    "artifacts_dir",
    "cache_dir",
    "seed",
    "complexities",
    "window_sizes",
    "variants",
    "variants_per_complexity",
    "concurrency",
    "server_bind",
    "taxonomy_overrides",
    "pooled_acc_p",
    "judge_answerable_rate",
    "providers",
}

PROVIDER_ROLES = ("ocr", "captioner", "ner", "layout", "judge", "refiner", "standardizer")
PROVIDER_KEYS = {
    "name",
    "endpoint",
    "api_key_env",
    "max_output_tokens",
    "requests_per_minute",
    "max_retries",
    "timeout",
    "image_scaling",
}


@dataclass
class ProviderSet:
    ocr: Optional[ProviderConfig] = None
    captioner: Optional[ProviderConfig] = None
    ner: Optional[ProviderConfig] = None
    layout: Optional[ProviderConfig] = None
    judge: Optional[ProviderConfig] = None
    refiner: Optional[ProviderConfig] = None
    standardizer: Optional[ProviderConfig] = None
    models: tuple[ProviderConfig, ...] = ()

    def require(self, role: str) -> ProviderConfig:
        cfg = getattr(self, role, None)
        if cfg is None:
            raise ConfigError(f"no provider configured for role {role!r}")
        return cfg


@dataclass
class PipelineConfig:
    dataset_dir: Path
    artifacts_dir: Path
    cache_dir: Optional[Path] = None
    seed: int = 0
    complexities: tuple[int, ...] = (1, 2, 3)
    window_sizes: tuple[int, ...] = (1, 2, 3)
    variants: tuple[str, ...] = ("base", "ocr", "explicit", "ocr_explicit")
    variants_per_complexity: int = 1
    concurrency: int = 4
    server_bind: str = "127.0.0.1:8765"
    taxonomy_overrides: dict[str, float] = field(default_factory=dict)
    pooled_acc_p: bool = False
    judge_answerable_rate: float = 0.25
    providers: ProviderSet = field(default_factory=ProviderSet)
    config_hash: str = ""


def _parse_provider(raw: dict, where: str) -> ProviderConfig:
    unknown = set(raw) - PROVIDER_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown provider keys {sorted(unknown)}")
    try:
        scaling = raw.get("image_scaling")
        return ProviderConfig(
            name=raw["name"],
            endpoint=raw["endpoint"],
            api_key_env=raw.get("api_key_env", ""),
            max_output_tokens=raw.get("max_output_tokens", 1024),
            requests_per_minute=raw.get("requests_per_minute", 60),
            max_retries=raw.get("max_retries", 3),
            timeout=raw.get("timeout", 120.0),
            image_scaling=tuple(scaling) if scaling else None,
        )
    except KeyError as exc:
        raise ConfigError(f"{where}: missing provider field {exc}") from exc


def _parse_providers(raw: dict) -> ProviderSet:
    unknown = set(raw) - set(PROVIDER_ROLES) - {"models"}
    if unknown:
        raise ConfigError(f"providers: unknown roles {sorted(unknown)}")
    kwargs = {}
    for role in PROVIDER_ROLES:
        if raw.get(role) is not None:
            kwargs[role] = _parse_provider(raw[role], f"providers.{role}")
    models = tuple(
        _parse_provider(m, f"providers.models[{i}]") for i, m in enumerate(raw.get("models", []))
    )
    return ProviderSet(models=models, **kwargs)


def load_config(path: Path) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
        raw = json.loads(text)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    unknown = set(raw) - TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    for required in ("dataset_dir", "artifacts_dir"):
        if required not in raw:
            raise ConfigError(f"{path}: missing required key {required!r}")

    base = Path(path).resolve().parent

    def _resolve(p: Optional[str]) -> Optional[Path]:
        if p is None:
            return None
        candidate = Path(p)
        return candidate if candidate.is_absolute() else base / candidate

    complexities = tuple(raw.get("complexities", (1, 2, 3)))
    if any(not 1 <= c <= 3 for c in complexities):
        raise ConfigError(f"complexities must lie in 1..3: {complexities}")
    window_sizes = tuple(raw.get("window_sizes", (1, 2, 3)))
    if any(w < 1 for w in window_sizes):
        raise ConfigError(f"window sizes must be >= 1: {window_sizes}")
    variants = tuple(raw.get("variants", ("base", "ocr", "explicit", "ocr_explicit")))
    from .evaluation import VARIANTS

    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown prompt variants: {bad}")

    overrides = dict(raw.get("taxonomy_overrides", {}))
    for fine_type, value in overrides.items():
        if not 0.0 < float(value) <= 1.0:
            raise ConfigError(f"taxonomy override for {fine_type!r} out of (0,1]: {value}")

    config_hash = hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()

    return PipelineConfig(
        dataset_dir=_resolve(raw["dataset_dir"]),
        artifacts_dir=_resolve(raw["artifacts_dir"]),
        cache_dir=_resolve(raw.get("cache_dir")),
        seed=int(raw.get("seed", 0)),
        complexities=complexities,
        window_sizes=window_sizes,
        variants=variants,
        variants_per_complexity=int(raw.get("variants_per_complexity", 1)),
        concurrency=int(raw.get("concurrency", 4)),
        server_bind=raw.get("server_bind", "127.0.0.1:8765"),
        taxonomy_overrides={k: float(v) for k, v in overrides.items()},
        pooled_acc_p=bool(raw.get("pooled_acc_p", False)),
        judge_answerable_rate=float(raw.get("judge_answerable_rate", 0.25)),
        providers=_parse_providers(raw.get("providers", {})),
        config_hash=config_hash,
    )


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
