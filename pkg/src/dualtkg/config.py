"""Training configuration, dataset presets and ablation switches."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

PRESETS = {
    "icews14s": {"mu": 0.2, "temperature": 0.3, "gat_layers": 3, "cap_n": 10},
    "icews18": {"mu": 0.01, "temperature": 0.03, "gat_layers": 2, "cap_n": 8},
    "icews05-15": {"mu": 0.15, "temperature": 0.2, "gat_layers": 2, "cap_n": 10},
    "gdelt": {"mu": 0.3, "temperature": 0.25, "gat_layers": 2, "cap_n": 8},
}

ABLATIONS = {
    "full": {},
    "wo-gd": {"use_dynamics": False},
    "wo-ge": {"use_evidence": False},
    "wo-coa": {"use_coa": False, "mu": 0.0},
    "wo-coa-red": {"use_coa": False, "use_red": False, "mu": 0.0},
}


@dataclass(frozen=True)
class TrainConfig:
    embedding_dim: int = 200
    lr: float = 0.001
    weight_decay: float = 1e-5
    max_epochs: int = 50
    patience: int = 5
    dropout: float = 0.2
    history_len: int = 3
    gcn_layers: int = 2
    gat_layers: int = 2
    cap_n: int = 10
    alpha: float = 0.7
    mu: float = 0.2
    temperature: float = 0.3
    use_dynamics: bool = True
    use_evidence: bool = True
    use_coa: bool = True
    use_red: bool = True
    composition_kernels: int = 2
    decoder_kernels: int = 50
    grad_clip: float = 1.0
    min_support: int = 3
    max_rules_per_head: int = 50
    seed: int = 0
    ablation: str = "full"

    def __post_init__(self):
        if not (self.use_dynamics or self.use_evidence):
            raise ValueError("at least one of use_dynamics / use_evidence must be on")
        for name in ("lr", "weight_decay", "dropout", "mu", "grad_clip"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")

    @property
    def effective_mu(self) -> float:
        both = self.use_dynamics and self.use_evidence
        return self.mu if (self.use_coa and both) else 0.0

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    @classmethod
    def from_file(cls, path: str) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def preset(name: str, **overrides) -> TrainConfig:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return TrainConfig(**{**PRESETS[name], **overrides})


def with_ablation(config: TrainConfig, name: str) -> TrainConfig:
    if name not in ABLATIONS:
        raise KeyError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
    return config.replace(ablation=name, **ABLATIONS[name])
