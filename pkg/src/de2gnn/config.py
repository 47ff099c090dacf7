"""Declarative experiment configuration (JSON file + ``key=value`` overrides)."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .gcn import TrainConfig

VARIANTS = ("full", "no_hetero", "no_homo", "no_knn", "no_attn", "gcn", "jaccard")
ABLATIONS = ("full", "no_hetero", "no_homo", "no_knn", "no_attn")
ATTACK_KINDS = ("none", "heuristic", "file")
_TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name != "seed")


class ConfigError(ValueError):
    pass


def _train_dict(tc: TrainConfig) -> dict:
    d = asdict(tc)
    d.pop("seed")
    return d


@dataclass(frozen=True)
class PipelineConfig:
    dataset: str = "data/cora/dataset.json"
    t1: float = 0.0
    t2: float = 0.8
    p: int = 3
    k: int = 5
    tail_bound: int = 5
    similarity: str = "auto"
    knn_similarity: str = "cosine"
    tail_reference: str = "input"
    surrogate: TrainConfig = field(default_factory=TrainConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    attack: dict = field(default_factory=lambda: {"kind": "none"})
    variant: str = "full"
    repeats: int = 10
    seed: int = 0
    out: str = "runs/out"
    ablations: tuple = ABLATIONS
    sweep: dict = field(default_factory=lambda: {"parameter": "k", "values": [3, 5, 8, 10]})

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0 <= self.t1 <= 1:
            raise ConfigError("t1 must lie in [0, 1]")
        if not 0 < self.t2 < 1:
            raise ConfigError("t2 must lie in (0, 1)")
        if self.p < 1 or self.k < 1:
            raise ConfigError("p and k must be >= 1")
        if self.tail_bound < 0:
            raise ConfigError("tail_bound must be >= 0")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.tail_reference not in ("input", "purified"):
            raise ConfigError("tail_reference must be 'input' or 'purified'")
        if self.similarity not in ("auto", "jaccard", "cosine"):
            raise ConfigError(f"unknown similarity {self.similarity!r}")
        if self.knn_similarity not in ("jaccard", "cosine"):
            raise ConfigError(f"unknown knn_similarity {self.knn_similarity!r}")
        kind = self.attack.get("kind")
        if kind not in ATTACK_KINDS:
            raise ConfigError(f"attack.kind must be one of {ATTACK_KINDS}")
        if kind == "heuristic" and not float(self.attack.get("rate", -1)) >= 0:
            raise ConfigError("heuristic attack needs a non-negative 'rate'")
        if kind == "file" and not self.attack.get("path"):
            raise ConfigError("file attack needs a 'path'")
        for v in self.ablations:
            if v not in VARIANTS:
                raise ConfigError(f"unknown ablation variant {v!r}")
        if self.sweep.get("parameter") not in ("p", "k") or not self.sweep.get("values"):
            raise ConfigError("sweep needs parameter in {p, k} and non-empty values")

    def to_dict(self, include_out: bool = True) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["surrogate"] = _train_dict(self.surrogate)
        d["train"] = _train_dict(self.train)
        d["attack"] = dict(self.attack)
        d["ablations"] = list(self.ablations)
        d["sweep"] = {"parameter": self.sweep["parameter"], "values": list(self.sweep["values"])}
        if not include_out:
            d.pop("out")
        return d

    @property
    def hash(self) -> str:
        """Digest of everything except the output directory."""
        blob = json.dumps(self.to_dict(include_out=False), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def attack_descriptor(self) -> str:
        kind = self.attack["kind"]
        if kind == "heuristic":
            return f"heuristic(rate={float(self.attack['rate'])})"
        if kind == "file":
            return f"file({self.attack['path']})"
        return "none"

    def replace(self, **overrides) -> PipelineConfig:
        d = self.to_dict()
        d.update(overrides)
        return from_dict(d)


def from_dict(raw: dict) -> PipelineConfig:
    raw = copy.deepcopy(raw)
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        for key in ("surrogate", "train"):
            if key in raw:
                if isinstance(raw[key], TrainConfig):
                    continue
                bad = set(raw[key]) - set(_TRAIN_KEYS)
                if bad:
                    raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
                raw[key] = TrainConfig(**raw[key])
        if "ablations" in raw:
            raw["ablations"] = tuple(raw["ablations"])
        return PipelineConfig(**raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, assignments) -> dict:
    """Apply ``dotted.key=value`` strings; values are parsed as JSON when possible."""
    raw = copy.deepcopy(raw)
    for item in assignments or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        target = raw
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"cannot set {key}: {part} is not an object")
        target[parts[-1]] = _parse_value(value)
    return raw


def load_config(path=None, overrides=()) -> PipelineConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        # file paths in a config file are relative to that file
        base = Path(path).parent
        if "dataset" in raw and not Path(raw["dataset"]).is_absolute():
            raw["dataset"] = str((base / raw["dataset"]).resolve())
        attack = raw.get("attack")
        if isinstance(attack, dict) and attack.get("path") and not Path(attack["path"]).is_absolute():
            attack["path"] = str((base / attack["path"]).resolve())
    return from_dict(apply_overrides(raw, overrides))
