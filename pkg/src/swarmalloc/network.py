"""Shared actor/critic architecture.

Per team step the network:

1. embeds every consumer with a permutation-invariant sum over its resource
   slots, and every agent from its own position and supplies;
2. mixes agent embeddings over the communication graph (one-hop filter) and
   adds the pooled consumer embedding;
3. scores consumers per agent with an attention row-softmax that also sees
   the current consensus state;
4. gates the consensus cell with the embedding of each agent's top-scored
   consumer: ``x' = x + dt * (-(tau + f) * x - S x A + f * drive)``, clamped
   to [-1, 1] so the state stays in its invariant box;
5. concatenates state, attention-weighted consumer features, mixed input and
   position into the output MLP.

Agents sharing a top consumer and a constant-row-sum neighborhood see the
same gate and coupling, so their states contract toward a common trajectory:
the per-consumer clusters the rest of the stack relies on.

All parameters live in a flat name -> Tensor dict; every function here works
on single team steps (N, ...) or on stacked batches (B, N, ...).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import NetConfig
from .errors import NonFiniteState, ShapeMismatch


def softplus_inverse(y: float) -> float:
    return float(np.log(np.expm1(y)))


def _glorot(rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _add_mlp(params: dict, rng, name: str, sizes: list[int]):
    for k in range(len(sizes) - 1):
        params[f"{name}.w{k}"] = ad.parameter(_glorot(rng, sizes[k], sizes[k + 1]))
        params[f"{name}.b{k}"] = ad.parameter(np.zeros(sizes[k + 1]))


def _mlp(params: dict, name: str, x):
    k = 0
    while f"{name}.w{k+1}" in params:
        x = ad.tanh(ad.matmul(x, params[f"{name}.w{k}"]) + params[f"{name}.b{k}"])
        k += 1
    return ad.matmul(x, params[f"{name}.w{k}"]) + params[f"{name}.b{k}"]


def init_params(cfg: NetConfig, dim: int, n_resources: int, out_dim: int,
                seed: int) -> dict:
    """Fresh parameter dict; deterministic for a fixed seed."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    g, f = cfg.embed, cfg.state
    params: dict[str, Tensor] = {}
    _add_mlp(params, rng, "enc_cons.per_resource", [dim + 2, g, g])
    _add_mlp(params, rng, "enc_cons.combine", [g, g, g])
    _add_mlp(params, rng, "enc_agent", [dim + 2 * n_resources, g, g])
    params["mix.hop0"] = ad.parameter(_glorot(rng, g, g))
    params["mix.hop1"] = ad.parameter(_glorot(rng, g, g))
    params["mix.bias"] = ad.parameter(np.zeros(g))
    params["att.hop0"] = ad.parameter(_glorot(rng, f, g))
    params["att.hop1"] = ad.parameter(_glorot(rng, f, g))
    params["att.bias"] = ad.parameter(np.zeros(g))
    params["gate.w"] = ad.parameter(_glorot(rng, g, f))
    params["gate.b"] = ad.parameter(np.zeros(f))
    params["cell.tau_raw"] = ad.parameter(np.full(f, softplus_inverse(1.0)))
    params["cell.coupling_raw"] = ad.parameter(rng.standard_normal((f, f)) * 0.1 / np.sqrt(f))
    params["cell.drive"] = ad.parameter(rng.uniform(-0.5, 0.5, size=f))
    _add_mlp(params, rng, "head", [f + g + g + dim, *cfg.head, out_dim])
    # small last layer keeps early outputs near zero
    last = sum(1 for k in params if k.startswith("head.w")) - 1
    params[f"head.w{last}"].val *= 0.01
    return params


def state_width(params: dict) -> int:
    return params["cell.tau_raw"].shape[0]


def initial_state(n_agents: int, params: dict) -> np.ndarray:
    return np.zeros((n_agents, state_width(params)))


# observation packing --------------------------------------------------------


def team_inputs(observations) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(consumer inputs (M, r, dim+2), agent inputs (N, .), positions (N, dim)).

    Consumer data is identical in every observation, so it is taken from the
    first agent's view.
    """
    first = observations[0]
    m, r = first.consumer_demands.shape
    cons = np.concatenate(
        [
            np.repeat(first.consumer_positions[:, None, :], r, axis=1),
            first.consumer_demands[:, :, None],
            first.consumer_kinds[:, :, None].astype(np.float64),
        ],
        axis=-1,
    )
    agents = np.stack(
        [
            np.concatenate([o.own_position, o.own_supply, o.own_kinds.astype(np.float64)])
            for o in observations
        ]
    )
    positions = np.stack([o.own_position for o in observations])
    return cons, agents, positions


# forward pieces -------------------------------------------------------------


def encode_consumers(params: dict, cons_in) -> Tensor:
    """Order-free consumer embedding: sum per-resource encodings, re-encode."""
    per_resource = _mlp(params, "enc_cons.per_resource", ad.wrap(cons_in))
    pooled = ad.tsum(per_resource, axis=-2)
    return _mlp(params, "enc_cons.combine", pooled)


def encode_agents(params: dict, agent_in) -> Tensor:
    return _mlp(params, "enc_agent", ad.wrap(agent_in))


def mix_features(params: dict, agent_feat, cons_feat, support) -> Tensor:
    """One-hop graph filter on agent features plus the pooled consumer sum."""
    agent_feat, cons_feat = ad.wrap(agent_feat), ad.wrap(cons_feat)
    support = ad.wrap(support)
    if agent_feat.shape[-1] != params["mix.hop0"].shape[0]:
        raise ShapeMismatch(
            f"agent features of width {agent_feat.shape[-1]} do not match "
            f"filter width {params['mix.hop0'].shape[0]}"
        )
    hop0 = ad.matmul(agent_feat, params["mix.hop0"])
    hop1 = ad.matmul(ad.matmul(support, agent_feat), params["mix.hop1"])
    pooled = ad.tsum(cons_feat, axis=-2, keepdims=True)
    return hop0 + hop1 + pooled + params["mix.bias"]


def attention_weights(params: dict, mixed, x, cons_feat, support) -> Tensor:
    """Row-softmax consumer scores from the mixed input and current state."""
    mixed, x = ad.wrap(mixed), ad.wrap(x)
    cons_feat, support = ad.wrap(cons_feat), ad.wrap(support)
    z = (
        mixed
        + ad.matmul(x, params["att.hop0"])
        + ad.matmul(ad.matmul(support, x), params["att.hop1"])
        + params["att.bias"]
    )
    logits = ad.matmul(ad.tanh(z), ad.swapaxes(cons_feat, -1, -2))
    return ad.softmax(logits, axis=-1)


def top_consumer(attn) -> np.ndarray:
    """Per-agent index of the highest-scored consumer; ties pick the lowest."""
    val = attn.val if isinstance(attn, Tensor) else np.asarray(attn)
    return np.argmax(val, axis=-1)


def consumer_gate(params: dict, attn, cons_feat) -> Tensor:
    """Non-negative gate from the top-scored consumer's embedding.

    The selection index is treated as a constant; gradients flow through the
    chosen embedding row and the gate weights only.
    """
    chosen = ad.take_rows(ad.wrap(cons_feat), top_consumer(attn))
    return ad.relu(ad.matmul(chosen, params["gate.w"]) + params["gate.b"])


def coupling_matrix(params: dict) -> Tensor:
    """PSD feature coupling R^T R, keeping the stability condition by shape."""
    raw = params["cell.coupling_raw"]
    return ad.matmul(ad.swapaxes(raw, -1, -2), raw)


def cell_derivative(params: dict, x, gate, support) -> Tensor:
    """Consensus cell dynamics: leaky gated decay, graph coupling, gated drive."""
    x, gate, support = ad.wrap(x), ad.wrap(gate), ad.wrap(support)
    tau = ad.softplus(params["cell.tau_raw"])
    coupling = coupling_matrix(params)
    return (
        (tau + gate) * -1.0 * x
        - ad.matmul(ad.matmul(support, x), coupling)
        + gate * params["cell.drive"]
    )


def cell_step(params: dict, x, gate, support, dt: float) -> Tensor:
    """Explicit Euler step, clamped to the invariant box [-1, 1]."""
    x = ad.wrap(x)
    x_new = ad.clip(x + cell_derivative(params, x, gate, support) * dt, -1.0, 1.0)
    if not np.all(np.isfinite(x_new.val)):
        raise NonFiniteState("consensus state update produced non-finite entries")
    return x_new


def output_features(x_new, attn, cons_feat, mixed, positions) -> Tensor:
    """Concatenate state, attention-weighted consumer features, mixed input
    and own position, per agent."""
    weighted = ad.matmul(ad.wrap(attn), ad.wrap(cons_feat))
    return ad.concat([ad.wrap(x_new), weighted, ad.wrap(mixed), ad.wrap(positions)], axis=-1)


@dataclass
class ForwardResult:
    out: Tensor       # (..., N, out_dim)
    x_new: Tensor     # (..., N, F)
    attn: Tensor      # (..., N, M)
    gate: Tensor      # (..., N, F)
    mixed: Tensor     # (..., N, G)
    cons_feat: Tensor  # (..., M, G)


def forward(params: dict, cons_in, agent_in, positions, support, x,
            dt: float) -> ForwardResult:
    cons_feat = encode_consumers(params, cons_in)
    agent_feat = encode_agents(params, agent_in)
    mixed = mix_features(params, agent_feat, cons_feat, support)
    attn = attention_weights(params, mixed, x, cons_feat, support)
    gate = consumer_gate(params, attn, cons_feat)
    x_new = cell_step(params, x, gate, support, dt)
    feats = output_features(x_new, attn, cons_feat, mixed, positions)
    out = _mlp(params, "head", feats)
    return ForwardResult(out, x_new, attn, gate, mixed, cons_feat)


# checkpoints ----------------------------------------------------------------

_MAGIC = b"SWALLOC1"


def save_checkpoint(path, params: dict, meta: dict | None = None):
    """Named-tensor container; loads back bit-exactly."""
    names = sorted(params)
    tensors = []
    payload = b""
    for name in names:
        arr = params[name].val if isinstance(params[name], Tensor) else np.asarray(params[name])
        arr = np.ascontiguousarray(arr)
        tensors.append({"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)})
        payload += arr.tobytes()
    manifest = json.dumps(
        {"format_version": 1, "meta": meta or {}, "tensors": tensors},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(manifest).to_bytes(8, "little"))
        fh.write(manifest)
        fh.write(payload)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns ({name: ndarray}, meta)."""
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        size = int.from_bytes(fh.read(8), "little")
        manifest = json.loads(fh.read(size).decode())
        if manifest["format_version"] != 1:
            raise ValueError(f"unsupported checkpoint version {manifest['format_version']}")
        arrays = {}
        for entry in manifest["tensors"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            buf = fh.read(count * dtype.itemsize)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(entry["shape"]).copy()
    return arrays, manifest["meta"]


def params_from_arrays(arrays: dict) -> dict:
    return {name: ad.parameter(arr) for name, arr in arrays.items()}
