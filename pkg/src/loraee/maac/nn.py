"""
Small numpy networks with hand-written backward passes.

Parameters live in plain dicts of arrays, stacked over agents on the leading
axis where each agent owns its own weights (actors, embeddings, critic heads).
The attention projections Wq, Wk and V are shared by every agent of a group.

Shapes: B batch, n agents, d observation size, A actions, E embedding width,
H heads, k = E / H per-head width, F critic hidden width.
"""

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from loraee.typing import FloatArray, IntArray

Params = dict[str, FloatArray]
Attention = Literal["learned", "uniform"]


# -------------------------------------------------------------------
#  Elementwise pieces
# -------------------------------------------------------------------


def leaky_relu(x: FloatArray, slope: float) -> FloatArray:
    return np.where(x > 0, x, slope * x)


def leaky_relu_grad(x: FloatArray, slope: float) -> FloatArray:
    return np.where(x > 0, 1.0, slope)


def softmax(x: FloatArray, axis: int = -1) -> FloatArray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x: FloatArray, axis: int = -1) -> FloatArray:
    shifted = x - x.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def one_hot(indices: IntArray, size: int) -> FloatArray:
    return np.eye(size)[np.asarray(indices, dtype=np.int64)]


def sample_categorical(rng: np.random.Generator, probs: FloatArray) -> IntArray:
    """One draw per row of the last axis."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,))
    picks = (u > cdf).sum(axis=-1)
    return np.minimum(picks, probs.shape[-1] - 1).astype(np.int64)


def _uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> FloatArray:
    limit = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


# -------------------------------------------------------------------
#  Actors: per-agent MLP, observation -> action logits
# -------------------------------------------------------------------


def init_actor(
    rng: np.random.Generator, n: int, obs_dim: int, hidden: tuple[int, ...], action_count: int
) -> Params:
    sizes = [obs_dim, *hidden, action_count]
    params: Params = {}
    for layer, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:], strict=False)):
        params[f"W{layer}"] = _uniform(rng, fan_in, (n, fan_out, fan_in))
        params[f"b{layer}"] = np.zeros((n, fan_out))
    return params


def _actor_depth(params: Params) -> int:
    return sum(1 for key in params if key.startswith("W"))


@dataclass
class ActorCache:
    inputs: list[FloatArray]
    pre_activations: list[FloatArray]


def actor_forward(params: Params, obs: FloatArray, slope: float) -> tuple[FloatArray, ActorCache]:
    """obs (B, n, d) -> logits (B, n, A)."""
    depth = _actor_depth(params)
    x = obs
    inputs: list[FloatArray] = []
    pres: list[FloatArray] = []
    for layer in range(depth):
        inputs.append(x)
        z = np.einsum("noi,bni->bno", params[f"W{layer}"], x) + params[f"b{layer}"][None]
        if layer < depth - 1:
            pres.append(z)
            x = leaky_relu(z, slope)
        else:
            x = z
    return x, ActorCache(inputs=inputs, pre_activations=pres)


def actor_backward(params: Params, cache: ActorCache, dlogits: FloatArray, slope: float) -> Params:
    depth = _actor_depth(params)
    grads: Params = {}
    g = dlogits
    for layer in reversed(range(depth)):
        x = cache.inputs[layer]
        grads[f"W{layer}"] = np.einsum("bno,bni->noi", g, x)
        grads[f"b{layer}"] = g.sum(axis=0)
        if layer > 0:
            g = np.einsum("noi,bno->bni", params[f"W{layer}"], g) * leaky_relu_grad(
                cache.pre_activations[layer - 1], slope
            )
    return grads


def agent_logits(params: Params, agent: int, obs_i: FloatArray, slope: float) -> FloatArray:
    """Logits of one agent from its own observation (d,) only."""
    depth = _actor_depth(params)
    x = obs_i
    for layer in range(depth):
        x = params[f"W{layer}"][agent] @ x + params[f"b{layer}"][agent]
        if layer < depth - 1:
            x = leaky_relu(x, slope)
    return x


# -------------------------------------------------------------------
#  Attention critic
# -------------------------------------------------------------------


def init_critic(
    rng: np.random.Generator,
    n: int,
    obs_dim: int,
    action_count: int,
    embed_dim: int,
    heads: int,
    hidden: int,
) -> Params:
    head_dim = embed_dim // heads
    in_dim = obs_dim + action_count
    z_dim = embed_dim + heads * head_dim
    return {
        "We": _uniform(rng, in_dim, (n, embed_dim, in_dim)),
        "be": np.zeros((n, embed_dim)),
        "Wq": _uniform(rng, embed_dim, (heads, head_dim, embed_dim)),
        "Wk": _uniform(rng, embed_dim, (heads, head_dim, embed_dim)),
        "V": _uniform(rng, embed_dim, (heads, head_dim, embed_dim)),
        "W1": _uniform(rng, z_dim, (n, hidden, z_dim)),
        "b1": np.zeros((n, hidden)),
        "W2": _uniform(rng, hidden, (n, 1, hidden)),
        "b2": np.zeros((n, 1)),
    }


@dataclass
class CriticCache:
    inp: FloatArray
    pre_embed: FloatArray
    embed: FloatArray
    query: FloatArray
    key: FloatArray
    pre_value: FloatArray
    value: FloatArray
    attention: FloatArray
    z: FloatArray
    pre_hidden: FloatArray
    hidden: FloatArray


def _attention_weights(query: FloatArray, key: FloatArray, mode: Attention) -> FloatArray:
    """(B, H, n, n) weights over j != i; all-zero when an agent has no peers."""
    b, h, n, _ = query.shape
    if n == 1:
        return np.zeros((b, h, 1, 1))
    off_diag = ~np.eye(n, dtype=bool)
    if mode == "uniform":
        return np.broadcast_to(off_diag / (n - 1), (b, h, n, n)).astype(float)
    logits = np.einsum("bhik,bhjk->bhij", query, key)
    logits = np.where(off_diag, logits, -np.inf)
    return softmax(logits, axis=-1)


def critic_forward(
    params: Params, obs: FloatArray, actions: IntArray, slope: float, attention: Attention = "learned"
) -> tuple[FloatArray, CriticCache]:
    """
    Q_i(o, a) for every agent i: obs (B, n, d), actions (B, n) -> (B, n).

    Each agent's (o_j, a_j) is embedded by its own one-layer encoder; agent i
    attends over the other agents' embeddings per head and feeds its embedding
    and the concatenated head outputs to its own two-layer head.
    """
    action_count = params["We"].shape[2] - obs.shape[2]
    b, n, _ = obs.shape
    inp = np.concatenate([obs, one_hot(actions, action_count)], axis=-1)
    pre_embed = np.einsum("nei,bni->bne", params["We"], inp) + params["be"][None]
    embed = leaky_relu(pre_embed, slope)

    query = np.einsum("hke,bne->bhnk", params["Wq"], embed)
    key = np.einsum("hke,bne->bhnk", params["Wk"], embed)
    pre_value = np.einsum("hke,bne->bhnk", params["V"], embed)
    value = leaky_relu(pre_value, slope)
    rho = _attention_weights(query, key, attention)
    x = np.einsum("bhij,bhjk->bhik", rho, value)
    x_cat = x.transpose(0, 2, 1, 3).reshape(b, n, -1)

    z = np.concatenate([embed, x_cat], axis=-1)
    pre_hidden = np.einsum("nfz,bnz->bnf", params["W1"], z) + params["b1"][None]
    hidden = leaky_relu(pre_hidden, slope)
    q = np.einsum("nf,bnf->bn", params["W2"][:, 0, :], hidden) + params["b2"][:, 0][None]

    cache = CriticCache(
        inp=inp,
        pre_embed=pre_embed,
        embed=embed,
        query=query,
        key=key,
        pre_value=pre_value,
        value=value,
        attention=rho,
        z=z,
        pre_hidden=pre_hidden,
        hidden=hidden,
    )
    return q, cache


def critic_backward(
    params: Params, cache: CriticCache, dq: FloatArray, slope: float, attention: Attention = "learned"
) -> Params:
    """Gradients of sum(dq * Q) with respect to every critic parameter."""
    b, n, embed_dim = cache.embed.shape
    heads, head_dim, _ = params["V"].shape

    d_w2 = np.einsum("bn,bnf->nf", dq, cache.hidden)[:, None, :]
    d_b2 = dq.sum(axis=0)[:, None]
    d_pre_hidden = dq[..., None] * params["W2"][None, :, 0, :] * leaky_relu_grad(cache.pre_hidden, slope)
    d_w1 = np.einsum("bnf,bnz->nfz", d_pre_hidden, cache.z)
    d_b1 = d_pre_hidden.sum(axis=0)
    dz = np.einsum("nfz,bnf->bnz", params["W1"], d_pre_hidden)

    d_embed = dz[..., :embed_dim].copy()
    dx = dz[..., embed_dim:].reshape(b, n, heads, head_dim).transpose(0, 2, 1, 3)

    rho = cache.attention
    d_rho = np.einsum("bhik,bhjk->bhij", dx, cache.value)
    d_value = np.einsum("bhij,bhik->bhjk", rho, dx)
    d_pre_value = d_value * leaky_relu_grad(cache.pre_value, slope)
    d_v = np.einsum("bhnk,bne->hke", d_pre_value, cache.embed)
    d_embed += np.einsum("hke,bhnk->bne", params["V"], d_pre_value)

    if attention == "learned" and n > 1:
        d_logits = rho * (d_rho - (rho * d_rho).sum(axis=-1, keepdims=True))
        d_query = np.einsum("bhij,bhjk->bhik", d_logits, cache.key)
        d_key = np.einsum("bhij,bhik->bhjk", d_logits, cache.query)
        d_wq = np.einsum("bhnk,bne->hke", d_query, cache.embed)
        d_wk = np.einsum("bhnk,bne->hke", d_key, cache.embed)
        d_embed += np.einsum("hke,bhnk->bne", params["Wq"], d_query)
        d_embed += np.einsum("hke,bhnk->bne", params["Wk"], d_key)
    else:
        d_wq = np.zeros_like(params["Wq"])
        d_wk = np.zeros_like(params["Wk"])

    d_pre_embed = d_embed * leaky_relu_grad(cache.pre_embed, slope)
    return {
        "We": np.einsum("bne,bni->nei", d_pre_embed, cache.inp),
        "be": d_pre_embed.sum(axis=0),
        "Wq": d_wq,
        "Wk": d_wk,
        "V": d_v,
        "W1": d_w1,
        "b1": d_b1,
        "W2": d_w2,
        "b2": d_b2,
    }


def q_all_actions(
    params: Params, obs: FloatArray, actions: IntArray, agent: int, slope: float, attention: Attention = "learned"
) -> FloatArray:
    """
    Q_agent(o, (a', a_-agent)) for every own action a': (B, A).

    Only the agent's own embedding, query and head are recomputed per action;
    the other agents' keys and values are shared.
    """
    b, n, obs_dim = obs.shape
    action_count = params["We"].shape[2] - obs_dim
    heads, head_dim, _ = params["V"].shape
    w_embed = params["We"][agent]

    inp = np.concatenate([obs, one_hot(actions, action_count)], axis=-1)
    embed = leaky_relu(np.einsum("nei,bni->bne", params["We"], inp) + params["be"][None], slope)

    base = obs[:, agent] @ w_embed[:, :obs_dim].T + params["be"][agent]  # (B, E)
    own = leaky_relu(base[:, None, :] + w_embed[:, obs_dim:].T[None], slope)  # (B, A, E)

    if n > 1:
        others = embed[:, [j for j in range(n) if j != agent]]
        value = leaky_relu(np.einsum("hke,bje->bhjk", params["V"], others), slope)
        if attention == "learned":
            query = np.einsum("hke,bae->bhak", params["Wq"], own)
            key = np.einsum("hke,bje->bhjk", params["Wk"], others)
            rho = softmax(np.einsum("bhak,bhjk->bhaj", query, key), axis=-1)
        else:
            rho = np.full((b, heads, action_count, n - 1), 1.0 / (n - 1))
        x = np.einsum("bhaj,bhjk->bhak", rho, value).transpose(0, 2, 1, 3).reshape(b, action_count, -1)
    else:
        x = np.zeros((b, action_count, heads * head_dim))

    z = np.concatenate([own, x], axis=-1)
    hidden = leaky_relu(np.einsum("fz,baz->baf", params["W1"][agent], z) + params["b1"][agent], slope)
    return np.asarray(hidden @ params["W2"][agent, 0] + params["b2"][agent, 0])


# -------------------------------------------------------------------
#  Optimisation helpers
# -------------------------------------------------------------------


def global_norm(grads: Params) -> float:
    return float(math.sqrt(sum(float(np.sum(g**2)) for g in grads.values())))


def clip_by_global_norm(grads: Params, max_norm: float) -> float:
    """Scales all gradients in place so their joint norm is at most max_norm; returns the pre-clip norm."""
    norm = global_norm(grads)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def sgd_step(params: Params, grads: Params, lr: float) -> None:
    for name, g in grads.items():
        params[name] -= lr * g


def all_finite(*trees: Params) -> bool:
    return all(np.all(np.isfinite(a)) for tree in trees for a in tree.values())
