"""Experiment configuration: schema, defaults and the seed policy."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

EXPERIMENTS = (
    "noise-stats", "renorm", "eigen", "weyl", "sandwich", "lq-slopes",
    "strichartz-schrodinger", "strichartz-wave", "nls", "wave", "gamma-diagnostics",
    "contraction",
)

_MASK64 = (1 << 64) - 1

SCHEMA = {
    "type": "object",
    "required": ["experiment"],
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "N": {"type": "integer", "minimum": 4, "multipleOf": 2},
        "eps": {"type": ["number", "null"], "exclusiveMinimum": 0, "maximum": 1},
        "s": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "K": {"type": ["integer", "null"], "minimum": 1},
        "seeds": {
            "type": "object",
            "required": ["base", "count"],
            "additionalProperties": False,
            "properties": {
                "base": {"type": "integer", "minimum": 0},
                "count": {"type": "integer", "minimum": 0},
            },
        },
        "p": {"type": "number", "minimum": 1},
        "q": {"type": "number", "minimum": 1},
        "scales": {"type": "array", "items": {"type": "integer", "minimum": -1}},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "T": {"type": "number", "minimum": 0},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number"}},
        "params": {"type": "object"},
        "output_dir": {"type": "string"},
    },
}


def splitmix64(x: int) -> int:
    """One round of the SplitMix64 finalizer, used as the index hash of the seed policy."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def realization_seed(base: int, index: int) -> int:
    """Seed of realization ``index``: ``base XOR splitmix64(index)``.

    Each realization is reproducible on its own, independently of how many
    others a run contains or in which order workers pick them up.
    """
    return (int(base) ^ splitmix64(int(index))) & _MASK64


@dataclass
class ExperimentConfig:
    experiment: str
    N: int = 32
    eps: float | None = None
    s: float = 1.0 / 16
    K: int | None = None
    seeds: dict = field(default_factory=lambda: {"base": 0, "count": 1})
    p: float = 4.0
    q: float = 4.0
    scales: list = field(default_factory=lambda: [2, 3, 4])
    dt: float = 1e-3
    T: float = 1.0
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output_dir: str = "runs/out"

    @property
    def eps_value(self) -> float:
        """Mollification parameter; defaults to ``2/N`` (noise resolved down to the grid scale)."""
        return float(self.eps) if self.eps is not None else 2.0 / self.N

    def seed_list(self) -> list[int]:
        base, count = int(self.seeds["base"]), int(self.seeds["count"])
        return [realization_seed(base, i) for i in range(count)]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        validate_config(data)
        return cls(**data)


def validate_config(data: dict) -> None:
    """Raise :class:`ValueError` with the schema message if ``data`` is malformed."""
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ValueError(f"invalid config at {where}: {exc.message}") from None
    exp = data["experiment"]
    if exp.startswith("strichartz") and len(set(data.get("scales", [2, 3, 4]))) < 3:
        raise ValueError("invalid config at scales: at least 3 distinct blocks are required")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    return ExperimentConfig.from_dict(data)
