from __future__ import annotations

import numpy as np

from ..core import ParameterStore, ad
from ..core.autodiff import Tensor, _sigmoid_np
from ..data.dataset import Batch
from ..data.features import FeatureSpace
from .config import ModelConfig
from .layers import Routing

Layer = tuple  # (W, b)


class Model:
    """Common plumbing: embeddings, MLP helpers, routing, prediction.

    Subclasses build their parameters in ``build`` and return one logit per
    example from ``logits``.
    """

    uses_scenario = True

    def __init__(self, config: ModelConfig, feature_space: FeatureSpace, n_scenarios: int, seed: int = 0):
        config.validate()
        if self.uses_scenario and n_scenarios < 2:
            raise ValueError(f"{config.kind} needs at least two scenarios, got {n_scenarios}")
        self.config = config
        self.feature_space = feature_space
        self.n_scenarios = int(n_scenarios)
        self.seed = int(seed)
        self.params = ParameterStore(seed)
        self.training = True
        d = config.embed_dim
        self.d = d
        self.n_fields = len(feature_space.sparse)
        self.n_dense = len(feature_space.dense)
        self.tables = [self.params.create(f"emb/{f.name}", (f.vocab_size, d), "embedding")
                       for f in feature_space.sparse]
        self.scenario_table = (self.params.create("emb/__scenario__", (n_scenarios, d), "embedding")
                               if self.uses_scenario else None)
        self.build()

    # ------------------------------------------------------------ structure
    def build(self) -> None:
        raise NotImplementedError

    @property
    def input_dim(self) -> int:
        return (self.n_fields + (1 if self.uses_scenario else 0)) * self.d + self.n_dense

    def linear(self, path: str, n_in: int, n_out: int, bias: bool = True) -> Layer:
        W = self.params.create(f"{path}/W", (n_in, n_out), "dense")
        b = self.params.create(f"{path}/b", (n_out,), "zeros") if bias else None
        return W, b

    def mlp(self, path: str, n_in: int, dims) -> list[Layer]:
        layers = []
        for i, n_out in enumerate(dims):
            layers.append(self.linear(f"{path}/l{i}", n_in, n_out))
            n_in = n_out
        return layers

    def tower(self, path: str, n_in: int, dims=None) -> list[Layer]:
        """Hidden stack plus a scalar head."""
        dims = self.config.tower_dims if dims is None else dims
        return self.mlp(path, n_in, dims) + [self.linear(f"{path}/head", dims[-1] if dims else n_in, 1)]

    @staticmethod
    def run_mlp(x: Tensor, layers: list[Layer], activation: str = "relu") -> Tensor:
        for W, b in layers:
            x = ad.dense_layer(x, W, b, activation)
        return x

    def run_tower(self, x: Tensor, layers: list[Layer]) -> Tensor:
        x = self.run_mlp(x, layers[:-1])
        W, b = layers[-1]
        return ad.reshape(ad.dense_layer(x, W, b), (x.shape[0],))

    # ---------------------------------------------------------------- inputs
    def field_embeddings(self, batch: Batch) -> list[Tensor]:
        return [ad.embedding_lookup(t, batch.sparse[:, i], f.name)
                for i, (t, f) in enumerate(zip(self.tables, self.feature_space.sparse))]

    def scenario_embedding(self, batch: Batch) -> Tensor:
        return ad.embedding_lookup(self.scenario_table, batch.scenario, "scenario")

    def dense_input(self, batch: Batch) -> Tensor:
        return Tensor(batch.dense)

    def inputs(self, batch: Batch, fields: list[Tensor] | None = None) -> Tensor:
        parts = list(fields if fields is not None else self.field_embeddings(batch))
        if self.n_dense:
            parts.append(self.dense_input(batch))
        if self.uses_scenario:
            parts.append(self.scenario_embedding(batch))
        return ad.concat(parts, axis=-1)

    def routing(self, batch: Batch) -> Routing:
        return Routing(batch.scenario, self.n_scenarios)

    # ------------------------------------------------------------ interface
    def logits(self, batch: Batch) -> Tensor:
        raise NotImplementedError

    def forward(self, batch: Batch) -> Tensor:
        if batch.sparse.shape[1] != self.n_fields or batch.dense.shape[1] != self.n_dense:
            raise ValueError(f"batch has {batch.sparse.shape[1]} sparse / {batch.dense.shape[1]} dense "
                             f"columns, model expects {self.n_fields} / {self.n_dense}")
        sc = np.asarray(batch.scenario)
        if sc.size and (sc.min() < 0 or sc.max() >= self.n_scenarios):
            raise ValueError(f"scenario id {int(sc.max())} out of range for {self.n_scenarios} scenarios")
        return self.logits(batch)

    def loss(self, batch: Batch) -> Tensor:
        return ad.bce_with_logits(self.forward(batch), batch.label)

    def predict(self, batch: Batch) -> np.ndarray:
        was = self.training
        self.training = False
        try:
            z = self.forward(batch).data.astype(np.float64)
        finally:
            self.training = was
        p = _sigmoid_np(z)
        return np.clip(p, np.finfo(np.float64).tiny, np.nextafter(1.0, 0.0))

    def train(self) -> "Model":
        self.training = True
        return self

    def eval(self) -> "Model":
        self.training = False
        return self

    def param_count(self) -> int:
        return self.params.count()

    def zero_output_head(self) -> None:
        """Zero every parameter that feeds the logit directly."""
        for path, t in self.params.items():
            if "/head/" in path:
                t.data[...] = 0
