"""The thirteen architectures behind the common ``Model`` interface."""
from __future__ import annotations

import numpy as np

from ..core import ad
from ..core.autodiff import Tensor
from ..data.dataset import Batch
from .base import Model
from .layers import (Routing, adasparse_factors, adl_route, adl_update, gate_nu, hamur_adapter,
                     meta_generate, moe_mix, star_combine)


def _routed(model: Model, batch: Batch, x: Tensor, fn) -> Tensor:
    """Apply ``fn(s, rows_of_x)`` per scenario group and restore batch order."""
    r = model.routing(batch)
    return r.scatter([fn(s, r.gather(x, idx)) for s, idx in r.groups])


class SingleTower(Model):
    """Scenario-blind control: one MLP over all non-scenario features."""
    uses_scenario = False

    def __init__(self, config, feature_space, n_scenarios=1, seed=0):
        super().__init__(config, feature_space, n_scenarios, seed)

    def build(self):
        self.net = self.tower("tower", self.input_dim)

    def logits(self, batch):
        return self.run_tower(self.inputs(batch), self.net)


class SharedBottom(Model):
    def build(self):
        h = self.config.opt("bottom_dim")
        self.bottom = self.mlp("bottom", self.input_dim, [h])
        self.towers = [self.tower(f"tower{s}", h) for s in range(self.n_scenarios)]

    def logits(self, batch):
        shared = self.run_mlp(self.inputs(batch), self.bottom)
        return _routed(self, batch, shared, lambda s, x: self.run_tower(x, self.towers[s]))


class MMoE(Model):
    def build(self):
        k, h = self.config.opt("experts"), self.config.opt("expert_dim")
        D = self.input_dim
        self.experts = [self.mlp(f"expert{e}", D, [h]) for e in range(k)]
        self.gates = [self.linear(f"gate{s}", D, k) for s in range(self.n_scenarios)]
        self.towers = [self.tower(f"tower{s}", h) for s in range(self.n_scenarios)]

    def logits(self, batch):
        x = self.inputs(batch)
        outs = [self.run_mlp(x, e) for e in self.experts]
        r = self.routing(batch)
        parts = []
        for s, idx in r.groups:
            xs = r.gather(x, idx)
            mixed = moe_mix([r.gather(o, idx) for o in outs], ad.dense_layer(xs, *self.gates[s]))
            parts.append(self.run_tower(mixed, self.towers[s]))
        return r.scatter(parts)


class PLE(Model):
    """Customized gate control levels; non-final levels keep every scenario path."""

    def build(self):
        o = self.config.options
        ks, kp, h, L = o["shared_experts"], o["specific_experts"], o["expert_dim"], o["cgc_layers"]
        S = self.n_scenarios
        self.levels = []
        n_in = self.input_dim
        for lv in range(L):
            last = lv == L - 1
            level = {
                "shared": [self.mlp(f"cgc{lv}/shared{e}", n_in, [h]) for e in range(ks)],
                "specific": [[self.mlp(f"cgc{lv}/s{s}/expert{e}", n_in, [h]) for e in range(kp)]
                             for s in range(S)],
                "gates": [self.linear(f"cgc{lv}/s{s}/gate", n_in, ks + kp) for s in range(S)],
                "shared_gate": None if last else self.linear(f"cgc{lv}/shared_gate", n_in, ks + S * kp),
            }
            self.levels.append(level)
            n_in = h
        self.towers = [self.tower(f"tower{s}", h) for s in range(S)]

    def logits(self, batch):
        x = self.inputs(batch)
        S = self.n_scenarios
        shared_in, spec_in = x, [x] * S
        for level in self.levels[:-1]:
            sh = [self.run_mlp(shared_in, e) for e in level["shared"]]
            sp = [[self.run_mlp(spec_in[s], e) for e in level["specific"][s]] for s in range(S)]
            new_spec = [moe_mix(sh + sp[s], ad.dense_layer(spec_in[s], *level["gates"][s])) for s in range(S)]
            pool = sh + [e for group in sp for e in group]
            shared_in = moe_mix(pool, ad.dense_layer(shared_in, *level["shared_gate"]))
            spec_in = new_spec
        level = self.levels[-1]
        r = self.routing(batch)
        parts = []
        for s, idx in r.groups:
            sh_in, sp_in = r.gather(shared_in, idx), r.gather(spec_in[s], idx)
            experts = ([self.run_mlp(sh_in, e) for e in level["shared"]]
                       + [self.run_mlp(sp_in, e) for e in level["specific"][s]])
            mixed = moe_mix(experts, ad.dense_layer(sp_in, *level["gates"][s]))
            parts.append(self.run_tower(mixed, self.towers[s]))
        return r.scatter(parts)


class STAR(Model):
    """Star topology: per-layer weights are shared times scenario-specific."""

    def build(self):
        D = self.input_dim
        self.shared = self.tower("star/shared", D)
        self.scen = []
        for s in range(self.n_scenarios):
            layers = []
            for (W, b), path in zip(self.shared, self._paths(f"star/scen{s}")):
                layers.append((self.params.create(f"{path}/W", W.shape, "ones"),
                               self.params.create(f"{path}/b", b.shape, "zeros")))
            self.scen.append(layers)
        a = self.config.opt("aux_dim")
        self.aux = self.tower("aux", D, [a])

    def _paths(self, prefix):
        return [f"{prefix}/l{i}" for i in range(len(self.config.tower_dims))] + [f"{prefix}/head"]

    def combined(self, s: int):
        return [star_combine(Ws, bs, Wp, bp) for (Ws, bs), (Wp, bp) in zip(self.shared, self.scen[s])]

    def logits(self, batch):
        x = self.inputs(batch)
        main = _routed(self, batch, x, lambda s, xs: self.run_tower(xs, self.combined(s)))
        return ad.add(main, self.run_tower(x, self.aux))


class SARNet(Model):
    """Scenario-conditioned field reweighting, then shared/specific experts with scenario gates."""

    def build(self):
        o = self.config.options
        ks, kp, h = o["shared_experts"], o["specific_experts"], o["expert_dim"]
        D, S = self.input_dim, self.n_scenarios
        self.attn = self.linear("field_attn", self.d, self.n_fields)
        self.shared = [self.mlp(f"shared{e}", D, [h]) for e in range(ks)]
        self.specific = [[self.mlp(f"s{s}/expert{e}", D, [h]) for e in range(kp)] for s in range(S)]
        self.gates = [self.linear(f"s{s}/gate", D, ks + kp) for s in range(S)]
        self.net = self.tower("tower", h)

    def logits(self, batch):
        fields = self.field_embeddings(batch)
        z = self.scenario_embedding(batch)
        n = z.shape[0]
        weights = ad.dense_layer(z, *self.attn, "sigmoid")                     # n x F
        stacked = ad.stack(fields, axis=1)                                     # n x F x d
        scaled = ad.mul(stacked, ad.reshape(weights, (n, self.n_fields, 1)))
        x = self.inputs(batch, [ad.reshape(scaled, (n, self.n_fields * self.d))])
        sh = [self.run_mlp(x, e) for e in self.shared]
        r = self.routing(batch)
        parts = []
        for s, idx in r.groups:
            xs = r.gather(x, idx)
            experts = [r.gather(o, idx) for o in sh] + [self.run_mlp(xs, e) for e in self.specific[s]]
            parts.append(moe_mix(experts, ad.dense_layer(xs, *self.gates[s])))
        return self.run_tower(r.scatter(parts), self.net)


class M2M(Model):
    """Field self-attention encoder, experts, and a meta unit generating attention and tower weights."""

    def build(self):
        o = self.config.options
        d, h, k = self.d, o["meta_dims"], o["experts"]
        self.n_tokens = self.n_fields + (1 if self.n_dense else 0)
        self.dense_proj = self.linear("dense_token", self.n_dense, d) if self.n_dense else None
        self.enc = []
        for i in range(o["enc_layers"]):
            p = f"enc{i}"
            self.enc.append({
                "Q": self.params.create(f"{p}/Q", (d, d)), "K": self.params.create(f"{p}/K", (d, d)),
                "V": self.params.create(f"{p}/V", (d, d)),
                "ln1": (self.params.create(f"{p}/ln1/gamma", (d,), "ones"),
                        self.params.create(f"{p}/ln1/beta", (d,), "zeros")),
                "ff": self.mlp(f"{p}/ff", d, [o["ff_dim"], d]),
                "ln2": (self.params.create(f"{p}/ln2/gamma", (d,), "ones"),
                        self.params.create(f"{p}/ln2/beta", (d,), "zeros")),
            })
        self.experts = [self.mlp(f"expert{e}", self.n_tokens * d, [h]) for e in range(k)]
        self.att_meta = self._meta("meta_att", h)
        self.att_v = self.params.create("meta_att/v", (h, 1))
        self.dec = [self._meta(f"meta_tower{i}", h) for i in range(o["dec_layers"])]
        self.head = self.linear("tower/head", h, 1)

    def _meta(self, p, h):
        d = self.d
        return {"V": self.params.create(f"{p}/V", (d, h * h)), "c": self.params.create(f"{p}/c", (h * h,), "zeros"),
                "U": self.params.create(f"{p}/U", (d, h)), "e": self.params.create(f"{p}/e", (h,), "zeros")}

    def encode(self, batch):
        tokens = self.field_embeddings(batch)
        if self.dense_proj is not None:
            tokens.append(ad.dense_layer(self.dense_input(batch), *self.dense_proj))
        x = ad.stack(tokens, axis=1)                                           # n x T x d
        scale = 1.0 / np.sqrt(self.d)
        for blk in self.enc:
            q, k, v = (ad.matmul(x, blk[m]) for m in ("Q", "K", "V"))
            att = ad.softmax(ad.mul(ad.matmul(q, ad.transpose(k)), scale))
            x = ad.layer_norm(ad.add(x, ad.matmul(att, v)), *blk["ln1"])
            x = ad.layer_norm(ad.add(x, self._ffn(x, blk["ff"])), *blk["ln2"])
        return ad.reshape(x, (x.shape[0], self.n_tokens * self.d))

    def _ffn(self, x, layers):
        return ad.dense_layer(self.run_mlp(x, layers[:-1]), *layers[-1])

    def logits(self, batch):
        rep = self.encode(batch)
        outs = [self.run_mlp(rep, e) for e in self.experts]
        h = self.config.opt("meta_dims")
        r = self.routing(batch)

        def scenario_path(s, idx_rows):
            z = ad.take_rows(self.scenario_table, np.array([s]))               # 1 x d
            W, b = meta_generate(z, self.att_meta["V"], self.att_meta["c"], self.att_meta["U"],
                                 self.att_meta["e"], (h, h))
            W, b = ad.reshape(W, (h, h)), ad.reshape(b, (h,))
            experts = [r.gather(o, idx_rows) for o in outs]
            scores = [ad.matmul(ad.tanh(ad.dense_layer(e, W, b)), self.att_v) for e in experts]
            mixed = moe_mix(experts, ad.concat(scores, axis=-1))
            for meta in self.dec:
                Wl, bl = meta_generate(z, meta["V"], meta["c"], meta["U"], meta["e"], (h, h))
                mixed = ad.add(mixed, ad.dense_layer(mixed, ad.reshape(Wl, (h, h)), ad.reshape(bl, (h,)), "relu"))
            out = ad.dense_layer(mixed, *self.head)
            return ad.reshape(out, (out.shape[0],))

        return r.scatter([scenario_path(s, idx) for s, idx in r.groups])


class AdaSparse(Model):
    """Backbone MLP whose hidden activations are scaled by scenario-adaptive pruning factors."""

    def build(self):
        D, d = self.input_dim, self.d
        self.net = self.tower("backbone", D)
        self.pruners = []
        n_in = D
        for i, w in enumerate(self.config.tower_dims):
            self.pruners.append((*self.linear(f"pruner{i}/u", d + n_in, w), *self.linear(f"pruner{i}/v", d + n_in, w)))
            n_in = w

    def logits(self, batch):
        z = self.scenario_embedding(batch)
        x = self.inputs(batch)
        a, b = self.config.opt("alpha"), self.config.opt("beta")
        for (W, bias), pr in zip(self.net[:-1], self.pruners):
            pi = adasparse_factors(z, x, *pr, a, b)
            x = ad.mul(ad.dense_layer(x, W, bias, "relu"), pi)
        out = ad.dense_layer(x, *self.net[-1])
        return ad.reshape(out, (out.shape[0],))


class ADL(Model):
    """Shared representation routed to distribution clusters by cosine similarity."""

    def build(self):
        o = self.config.options
        rep, K = o["rep_dim"], o["clusters"]
        self.rep = self.mlp("shared_fc", self.input_dim, [rep])
        self.shared = self.tower("shared_tower", rep)
        self.clusters = [self.tower(f"cluster{k}", rep) for k in range(K)]
        self.centroids = self.params.create("centroids", (K, rep), "unit_rows", trainable=False)
        self.last_assignment = None

    def logits(self, batch):
        rep = self.run_mlp(self.inputs(batch), self.rep)
        reps = rep.data.astype(np.float64)
        cents = self.centroids.data.astype(np.float64)
        ids = adl_route(reps, cents)
        self.last_assignment = ids
        if self.training:
            self.centroids.data = adl_update(cents, reps, ids, self.config.opt("momentum")).astype(
                self.centroids.data.dtype)
        r = Routing(ids, len(self.clusters))
        cluster = r.scatter([self.run_tower(r.gather(rep, idx), self.clusters[k]) for k, idx in r.groups])
        return ad.add(self.run_tower(rep, self.shared), cluster)


class _Gated(Model):
    # Gate inputs are gradient-stopped. Finite-difference checks of the whole
    # graph switch this off, since a stop-gradient is invisible to them.
    stop_gate_gradient = True

    def _gate_view(self, x: Tensor) -> Tensor:
        return ad.detach(x) if self.stop_gate_gradient else x


class EPNet(_Gated):
    """Gate NU over (scenario embedding, detached field embeddings) rescales the field embeddings."""

    def build(self):
        d, F, g = self.d, self.n_fields, self.config.opt("gate_hidden")
        self.gate = (*self.linear("gate/l0", d + F * d, g), *self.linear("gate/l1", g, F * d))
        self.net = self.tower("tower", self.input_dim)

    def gate_input(self, z: Tensor, agnostic: Tensor) -> Tensor:
        return ad.concat([z, self._gate_view(agnostic)], axis=-1)

    def logits(self, batch):
        fields = ad.concat(self.field_embeddings(batch), axis=-1)
        z = self.scenario_embedding(batch)
        factors = gate_nu(self.gate_input(z, fields), *self.gate)
        return self.run_tower(self.inputs(batch, [ad.mul(fields, factors)]), self.net)


class PPNet(_Gated):
    """One Gate NU per hidden layer fed by ID embeddings and the detached input; per-scenario heads."""

    def id_fields(self):
        ids = [self.feature_space.index(n) for n in self.feature_space.id_features]
        return ids or list(range(self.n_fields))

    def build(self):
        g, D = self.config.opt("gate_hidden"), self.input_dim
        gin = len(self.id_fields()) * self.d + D
        self.backbone = self.mlp("backbone", D, self.config.tower_dims)
        self.gates = [(*self.linear(f"gate{i}/l0", gin, g), *self.linear(f"gate{i}/l1", g, w))
                      for i, w in enumerate(self.config.tower_dims)]
        last = self.config.tower_dims[-1]
        self.heads = [self.linear(f"s{s}/head", last, 1) for s in range(self.n_scenarios)]

    def logits(self, batch):
        fields = self.field_embeddings(batch)
        x = self.inputs(batch, fields)
        gin = ad.concat([fields[i] for i in self.id_fields()] + [self._gate_view(x)], axis=-1)
        for (W, b), gate in zip(self.backbone, self.gates):
            x = ad.mul(ad.dense_layer(x, W, b, "relu"), gate_nu(gin, *gate))

        def head(s, xs):
            out = ad.dense_layer(xs, *self.heads[s])
            return ad.reshape(out, (out.shape[0],))
        return _routed(self, batch, x, head)


class HAMUR(Model):
    """Backbone MLP with a hyper-network-generated adapter after every hidden layer."""

    def build(self):
        o = self.config.options
        hh, m, d = o["hyper_hidden"], o["hyper_matrix"], self.d
        self.m = m
        self.net = self.tower("backbone", self.input_dim)
        self.adapters = []
        for i, w in enumerate(self.config.tower_dims):
            p = f"adapter{i}"
            H1, b1 = self.linear(f"{p}/hyper/l0", d, hh)
            H2, b2 = self.linear(f"{p}/hyper/l1", hh, 2 * m * m)
            self.adapters.append({
                "H1": H1, "b1": b1, "H2": H2, "b2": b2,
                "U": self.params.create(f"{p}/U", (w, m)), "V": self.params.create(f"{p}/V", (m, w)),
                "gamma": self.params.create(f"{p}/gamma", (w,), "ones"),
                "beta": self.params.create(f"{p}/beta", (w,), "zeros"),
            })

    def zero_hyper(self) -> None:
        for a in self.adapters:
            for k in ("H2", "b2"):
                a[k].data[...] = 0

    def logits(self, batch):
        x = self.inputs(batch)

        def path(s, xs):
            z = ad.take_rows(self.scenario_table, np.array([s]))
            for (W, b), adapter in zip(self.net[:-1], self.adapters):
                xs = hamur_adapter(ad.dense_layer(xs, W, b, "relu"), z, adapter, self.m)
            out = ad.dense_layer(xs, *self.net[-1])
            return ad.reshape(out, (out.shape[0],))
        return _routed(self, batch, x, path)


class M3oE(Model):
    """Shared, domain and task mixtures fused by two levels of learned softmax weights."""

    def build(self):
        k, h = self.config.opt("n_experts_m3oe"), self.config.opt("expert_dim")
        D, S = self.input_dim, self.n_scenarios
        self.pools = {name: [self.mlp(f"{name}/expert{e}", D, [h]) for e in range(k)]
                      for name in ("shared", "domain", "task")}
        self.shared_gate = self.linear("shared/gate", D, k)
        self.domain_gates = [self.linear(f"domain/gate{s}", D, k) for s in range(S)]
        self.task_gate = self.linear("task/gate", D, k)
        self.fuse1 = self.params.create("fuse/domain", (S, 2), "zeros")
        self.fuse2 = self.params.create("fuse/global", (1, 2), "zeros")
        self.net = self.tower("tower", h)

    def logits(self, batch):
        x = self.inputs(batch)
        n = x.shape[0]
        outs = {name: [self.run_mlp(x, e) for e in pool] for name, pool in self.pools.items()}
        shared = moe_mix(outs["shared"], ad.dense_layer(x, *self.shared_gate))
        task = moe_mix(outs["task"], ad.dense_layer(x, *self.task_gate))
        r = self.routing(batch)
        domain = r.scatter([moe_mix([r.gather(o, idx) for o in outs["domain"]],
                                    ad.dense_layer(r.gather(x, idx), *self.domain_gates[s]))
                            for s, idx in r.groups])
        w1 = ad.softmax(ad.embedding_lookup(self.fuse1, batch.scenario, "scenario"))   # n x 2
        level1 = moe_mix([shared, domain], w1)
        w2 = ad.take_rows(self.fuse2, np.zeros(n, dtype=np.int64))
        level2 = moe_mix([level1, task], w2)
        return self.run_tower(level2, self.net)


MODEL_CLASSES = {
    "single_tower": SingleTower, "shared_bottom": SharedBottom, "mmoe": MMoE, "ple": PLE,
    "star": STAR, "sar_net": SARNet, "m2m": M2M, "adasparse": AdaSparse, "adl": ADL,
    "epnet": EPNet, "ppnet": PPNet, "hamur": HAMUR, "m3oe": M3oE,
}
