"""Flat `section.key = value` experiment configs.

The text format is diff-friendly and hashable: comments start with '#', every
non-blank line must be `key = value` with a known key. The config fingerprint
is 64-bit FNV-1a over the canonicalized (sorted, normalized) effective text,
so a seed override changes the fingerprint and lands in fresh artifacts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from ..degrade import DegradationSpec
from ..hashing import fnv1a64


class ConfigError(Exception):
    """Unparseable or invalid experiment config (CLI exit code 2)."""


DEFAULTS: dict[str, str] = {
    "recipe.name": "",
    "corpus.seed": "11",
    "corpus.count": "200",
    "corpus.size": "64x64",
    "corpus.classes": "0",
    "eval.seed": "101",
    "eval.count": "100",
    "eval.classes": "0",
    "eval.degradation_seed": "7",
    "eval.cross": "",
    "eval.intra": "",
    "train.models": "",
    "train.steps": "3000",
    "train.batch": "8",
    "train.crop": "32",
    "train.scale": "4",
    "train.blocks": "8",
    "train.channels": "16",
    "train.lr": "2e-4",
    "train.adv_weight": "5e-3",
    "train.seed": "1",
    "classifier.steps": "800",
    "classifier.batch": "16",
    "classifier.blocks": "4",
    "classifier.channels": "16",
    "probe.taps": "Conv1,deepest",
    "probe.pooling": "gap",
    "probe.dumps": "",
    "probe.dump_top_k": "8",
    "embed.perplexity": "30",
    "embed.iterations": "1000",
    "embed.pca_dims": "50",
    "embed.seeds": "0,1,2,3,4",
    "score.groupings": "kind",
    "table.enabled": "0",
    "out.dir": "",
}

KNOWN_KEYS = set(DEFAULTS)

_SEED_KEYS = ("corpus.seed", "eval.seed", "eval.degradation_seed", "train.seed")

MODEL_TOKENS = ("srresnet_wgr", "srresnet_wogr", "srgan_wgr", "srgan_wogr", "classifier")


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def canonical_text(values: dict[str, str]) -> str:
    effective = dict(DEFAULTS)
    effective.update(values)
    return "\n".join(f"{k}={effective[k]}" for k in sorted(effective))


def config_hash(values: dict[str, str]) -> str:
    return f"{fnv1a64(canonical_text(values).encode('utf-8')):016x}"


def parse_degradation(token: str, seed: int = 0, source: str = "<config>") -> DegradationSpec:
    """"clean" | "blur:2:4" | "blur:4" | "noise:5:30" | "noise:20"."""
    parts = token.split(":")
    kind = parts[0]
    try:
        if kind == "clean":
            if len(parts) != 1:
                raise ValueError("clean takes no degree")
            return DegradationSpec("clean")
        if kind == "blur":
            if len(parts) == 2:
                return DegradationSpec("blur", blur_width=float(parts[1]), seed=seed)
            if len(parts) == 3:
                return DegradationSpec(
                    "blur", sample_range=(float(parts[1]), float(parts[2])), seed=seed
                )
        if kind == "noise":
            if len(parts) == 2:
                return DegradationSpec("noise", noise_sigma=float(parts[1]), seed=seed)
            if len(parts) == 3:
                return DegradationSpec(
                    "noise", sample_range=(float(parts[1]), float(parts[2])), seed=seed
                )
        raise ValueError("unrecognized form")
    except ValueError as exc:
        raise ConfigError(f"{source}: bad degradation token {token!r}: {exc}") from exc


@dataclass(frozen=True)
class ModelJob:
    """One trainable model instance: architecture token + training degradation."""

    token: str  # e.g. "srgan_wgr+noise:20"
    arch: str  # e.g. "srgan_wgr"
    train_degradation: str  # degradation token, "clean" if absent

    @property
    def name(self) -> str:
        """Filesystem-safe artifact name."""
        return self.token.replace("+", "_").replace(":", "").replace(".", "p").replace(",", "_")


class ExperimentConfig:
    """Validated view over the flat key/value config."""

    def __init__(self, values: dict[str, str], source: str = "<config>"):
        self.values = dict(values)
        self.source = source
        self.hash = config_hash(values)
        if not self.get("recipe.name"):
            raise ConfigError(f"{source}: recipe.name is required")
        for job in self.model_jobs():
            if job.arch not in MODEL_TOKENS:
                raise ConfigError(f"{source}: unknown model {job.arch!r} in train.models")
            parse_degradation(job.train_degradation, source=source)
        for token in self.cross_tokens():
            parse_degradation(token, source=source)
        for kind, degrees in self.intra_sets():
            if kind not in ("noise", "blur"):
                raise ConfigError(f"{source}: intra sets must be noise or blur, got {kind!r}")
            if len(degrees) < 2:
                raise ConfigError(f"{source}: intra set needs >= 2 degrees, got {degrees}")
        if self.get("probe.pooling") not in ("gap", "flatten"):
            raise ConfigError(f"{source}: probe.pooling must be gap or flatten")
        for grouping in self.groupings():
            if grouping not in ("kind", "class"):
                raise ConfigError(f"{source}: score.groupings entries must be kind or class")
        if not self.seeds():
            raise ConfigError(f"{source}: embed.seeds must be non-empty")

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(parse_config(text, str(path)), str(path))

    def get(self, key: str) -> str:
        return self.values.get(key, DEFAULTS[key])

    def get_int(self, key: str) -> int:
        try:
            return int(self.get(key))
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {key} must be an integer") from exc

    def get_float(self, key: str) -> float:
        try:
            return float(self.get(key))
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {key} must be a number") from exc

    def corpus_size(self) -> tuple[int, int]:
        try:
            h, w = self.get("corpus.size").split("x")
            return int(h), int(w)
        except ValueError as exc:
            raise ConfigError(f"{self.source}: corpus.size must look like 64x64") from exc

    def _list(self, key: str) -> list[str]:
        raw = self.get(key)
        return [t.strip() for t in raw.split(",") if t.strip()] if raw else []

    def model_jobs(self) -> list[ModelJob]:
        jobs = []
        for token in self._list("train.models"):
            arch, _, degradation = token.partition("+")
            jobs.append(ModelJob(token, arch, degradation or "clean"))
        return jobs

    def cross_tokens(self) -> list[str]:
        return self._list("eval.cross")

    def intra_sets(self) -> list[tuple[str, list[float]]]:
        raw = self.get("eval.intra")
        sets = []
        if not raw:
            return sets
        for part in raw.split("|"):
            part = part.strip()
            if not part:
                continue
            kind, _, degrees = part.partition(":")
            try:
                values = [float(d) for d in degrees.split(",") if d.strip()]
            except ValueError as exc:
                raise ConfigError(f"{self.source}: bad intra set {part!r}") from exc
            sets.append((kind.strip(), values))
        return sets

    def tap_tokens(self) -> list[str]:
        return self._list("probe.taps")

    def dump_tokens(self) -> list[str]:
        return self._list("probe.dumps")

    def seeds(self) -> list[int]:
        try:
            return [int(s) for s in self._list("embed.seeds")]
        except ValueError as exc:
            raise ConfigError(f"{self.source}: embed.seeds must be integers") from exc

    def groupings(self) -> list[str]:
        return self._list("score.groupings")

    def with_seed_override(self, offset: int) -> "ExperimentConfig":
        """Shift every seed (and each embed seed) by ``offset``."""
        values = dict(self.values)
        for key in _SEED_KEYS:
            values[key] = str(int(self.values.get(key, DEFAULTS[key])) + offset)
        seeds = [str(s + offset) for s in self.seeds()]
        values["embed.seeds"] = ",".join(seeds)
        return ExperimentConfig(values, self.source)
