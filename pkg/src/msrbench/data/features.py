from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

KINDS = ("sparse", "dense", "scenario")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    """One input column.

    ``vocab_size`` counts the reserved out-of-vocabulary index 0. A dense
    feature with ``buckets`` (boundary list, or an int asking for that many
    train-split quantile buckets) is encoded as a sparse field.
    """
    name: str
    kind: str
    vocab_size: int | None = None
    buckets: tuple | int | None = None
    column: str | None = None
    first_of: str | None = None
    oov_index: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ManifestError(f"feature {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")
        if self.vocab_size is not None and self.vocab_size < 1:
            raise ManifestError(f"feature {self.name!r}: vocab_size must be positive")
        if isinstance(self.buckets, list):
            object.__setattr__(self, "buckets", tuple(self.buckets))
        if isinstance(self.buckets, tuple) and list(self.buckets) != sorted(self.buckets):
            raise ManifestError(f"feature {self.name!r}: bucket boundaries must be ascending")

    @property
    def source(self) -> str:
        return self.column or self.name

    @property
    def bucketized(self) -> bool:
        return self.kind == "dense" and self.buckets is not None

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpec":
        known = {k: d[k] for k in ("name", "kind", "vocab_size", "buckets", "column", "first_of") if k in d}
        return cls(**known)

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if v is not None and k != "oov_index"}
        if isinstance(out.get("buckets"), tuple):
            out["buckets"] = list(out["buckets"])
        return out


@dataclass
class FeatureSpace:
    """Resolved model inputs: embedded sparse fields, raw dense columns, the scenario field."""
    sparse: list[FeatureSpec]
    dense: list[FeatureSpec]
    scenario: FeatureSpec
    id_features: tuple = ()
    user_feature: str | None = None
    item_feature: str | None = None

    @property
    def n_scenarios(self) -> int:
        return int(self.scenario.vocab_size)

    @property
    def sparse_names(self) -> list[str]:
        return [f.name for f in self.sparse]

    @property
    def dense_names(self) -> list[str]:
        return [f.name for f in self.dense]

    def index(self, name: str) -> int:
        return self.sparse_names.index(name)

    def with_scenarios(self, n: int) -> "FeatureSpace":
        return replace(self, scenario=replace(self.scenario, vocab_size=n))

    def to_dict(self) -> dict:
        return {"sparse": [f.to_dict() for f in self.sparse],
                "dense": [f.to_dict() for f in self.dense],
                "scenario": self.scenario.to_dict(),
                "id_features": list(self.id_features),
                "user_feature": self.user_feature,
                "item_feature": self.item_feature}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSpace":
        return cls(sparse=[FeatureSpec.from_dict(f) for f in d["sparse"]],
                   dense=[FeatureSpec.from_dict(f) for f in d["dense"]],
                   scenario=FeatureSpec.from_dict(d["scenario"]),
                   id_features=tuple(d.get("id_features", ())),
                   user_feature=d.get("user_feature"),
                   item_feature=d.get("item_feature"))


@dataclass
class DatasetManifest:
    name: str
    features: list[FeatureSpec]
    label_rule: dict
    scenario_feature: str
    scenario_map: dict
    split: str = "ratio_811"
    format: str = "table"
    sources: list = field(default_factory=list)
    joins: list = field(default_factory=list)
    user_feature: str | None = None
    item_feature: str | None = None
    id_features: tuple = ()

    def __post_init__(self):
        scen = [f for f in self.features if f.kind == "scenario"]
        if len(scen) != 1:
            raise ManifestError(f"manifest {self.name!r}: exactly one scenario feature required, found {len(scen)}")
        if scen[0].name != self.scenario_feature:
            raise ManifestError(f"manifest {self.name!r}: scenario_feature {self.scenario_feature!r} "
                                f"does not match scenario-kind feature {scen[0].name!r}")
        self.scenario_map = {str(k): int(v) for k, v in self.scenario_map.items()}
        ids = sorted(set(self.scenario_map.values()))
        if ids != list(range(len(ids))) or len(ids) < 2:
            raise ManifestError(f"manifest {self.name!r}: scenario ids must be contiguous 0..S-1 with S >= 2, got {ids}")
        rule = self.label_rule.get("type")
        if rule not in ("threshold", "binary"):
            raise ManifestError(f"manifest {self.name!r}: label_rule type must be 'threshold' or 'binary'")
        if self.split not in ("ratio_811", "predefined_folds"):
            raise ManifestError(f"manifest {self.name!r}: split must be 'ratio_811' or 'predefined_folds'")

    @property
    def n_scenarios(self) -> int:
        return len(set(self.scenario_map.values()))

    @property
    def scenario_spec(self) -> FeatureSpec:
        return next(f for f in self.features if f.kind == "scenario")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        missing = [k for k in ("name", "features", "label_rule", "scenario_feature", "scenario_map") if k not in d]
        if missing:
            raise ManifestError(f"manifest missing fields: {missing}")
        return cls(name=d["name"], features=[FeatureSpec.from_dict(f) for f in d["features"]],
                   label_rule=d["label_rule"], scenario_feature=d["scenario_feature"],
                   scenario_map=d["scenario_map"], split=d.get("split", "ratio_811"),
                   format=d.get("format", "table"), sources=d.get("sources", []),
                   joins=d.get("joins", []), user_feature=d.get("user_feature"),
                   item_feature=d.get("item_feature"), id_features=tuple(d.get("id_features", ())))

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: invalid JSON ({exc})") from None

    def to_dict(self) -> dict:
        return {"name": self.name, "format": self.format, "features": [f.to_dict() for f in self.features],
                "label_rule": self.label_rule, "scenario_feature": self.scenario_feature,
                "scenario_map": self.scenario_map, "split": self.split, "sources": self.sources,
                "joins": self.joins, "user_feature": self.user_feature,
                "item_feature": self.item_feature, "id_features": list(self.id_features)}


def builtin_manifest(name: str) -> DatasetManifest:
    """Load one of the packaged manifests (``movielens``, ``douban``, ``amazon``, ...)."""
    path = Path(__file__).resolve().parent.parent / "manifests" / f"{name}.json"
    if not path.exists():
        raise ManifestError(f"no built-in manifest named {name!r}")
    return DatasetManifest.load(path)


def declared_feature_space(manifest: DatasetManifest) -> FeatureSpace:
    """Feature space from the manifest's declared vocab sizes alone (no data needed)."""
    sparse, dense = [], []
    for f in manifest.features:
        if f.kind == "sparse" or f.bucketized:
            if f.vocab_size is None and not isinstance(f.buckets, (tuple, int)):
                raise ManifestError(f"feature {f.name!r} has no declared vocab_size")
            size = f.vocab_size
            if size is None:
                size = (len(f.buckets) + 2) if isinstance(f.buckets, tuple) else f.buckets + 1
            sparse.append(replace(f, kind="sparse", vocab_size=size))
        elif f.kind == "dense":
            dense.append(f)
    scen = replace(manifest.scenario_spec, vocab_size=manifest.n_scenarios)
    return FeatureSpace(sparse, dense, scen, manifest.id_features,
                        manifest.user_feature, manifest.item_feature)
