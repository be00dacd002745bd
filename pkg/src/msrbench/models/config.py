from __future__ import annotations

from dataclasses import dataclass, field

# Kind-specific option names and their defaults. A config must carry exactly
# the options of its kind.
KIND_OPTIONS: dict[str, dict] = {
    "single_tower": {},
    "shared_bottom": {"bottom_dim": 128},
    "mmoe": {"experts": 4, "expert_dim": 128},
    "ple": {"shared_experts": 2, "specific_experts": 1, "expert_dim": 128, "cgc_layers": 1},
    "star": {"aux_dim": 16},
    "sar_net": {"shared_experts": 2, "specific_experts": 1, "expert_dim": 128},
    "m2m": {"experts": 4, "meta_dims": 64, "ff_dim": 128, "enc_layers": 1, "dec_layers": 2},
    "adasparse": {"alpha": 1.0, "beta": 2.0},
    "adl": {"clusters": 4, "rep_dim": 128, "momentum": 0.1},
    "epnet": {"gate_hidden": 64},
    "ppnet": {"gate_hidden": 64},
    "hamur": {"hyper_hidden": 64, "hyper_matrix": 35},
    "m3oe": {"n_experts_m3oe": 4, "expert_dim": 128},
}
KINDS = tuple(KIND_OPTIONS)

# Presets for the tower stack.
TOWER_DEFAULT = (256, 128, 64)
TOWER_SWEEP = (64, 32)


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    kind: str
    embed_dim: int = 16
    tower_dims: tuple = TOWER_DEFAULT
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tower_dims = tuple(int(x) for x in self.tower_dims)
        self.validate()

    def validate(self) -> None:
        if self.kind not in KIND_OPTIONS:
            raise ConfigError(f"unknown model kind {self.kind!r}; valid kinds: {', '.join(KINDS)}")
        wanted = KIND_OPTIONS[self.kind]
        missing = [k for k in wanted if k not in self.options]
        if missing:
            raise ConfigError(f"model kind {self.kind!r} requires field {missing[0]!r}")
        extra = [k for k in self.options if k not in wanted]
        if extra:
            raise ConfigError(f"field {extra[0]!r} is not used by model kind {self.kind!r}")
        if self.embed_dim < 1 or not self.tower_dims or min(self.tower_dims) < 1:
            raise ConfigError("embed_dim and tower_dims must be positive")
        for k, v in self.options.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool) and v <= 0:
                raise ConfigError(f"field {k!r} must be positive, got {v}")
        if self.kind == "ple" and self.options["cgc_layers"] not in (1, 2):
            raise ConfigError("ple cgc_layers must be 1 or 2")
        if self.kind == "adasparse" and self.options["beta"] < 1:
            raise ConfigError("adasparse beta must be >= 1")
        if self.kind == "adl" and self.options["clusters"] < 2:
            raise ConfigError("adl needs at least two clusters")

    def opt(self, name: str):
        return self.options[name]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "embed_dim": self.embed_dim,
                "tower_dims": list(self.tower_dims), "options": dict(self.options)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        if "kind" not in d:
            raise ConfigError("model config needs a 'kind'")
        return cls(kind=d["kind"], embed_dim=d.get("embed_dim", 16),
                   tower_dims=tuple(d.get("tower_dims", TOWER_DEFAULT)),
                   options=dict(d.get("options", {})))


def make_config(kind: str, embed_dim: int = 16, tower_dims=TOWER_DEFAULT, **options) -> ModelConfig:
    """Config for ``kind`` with defaults filled in; keyword overrides replace them."""
    if kind not in KIND_OPTIONS:
        raise ConfigError(f"unknown model kind {kind!r}; valid kinds: {', '.join(KINDS)}")
    return ModelConfig(kind, embed_dim, tuple(tower_dims), {**KIND_OPTIONS[kind], **options})
