"""Minimal numerical kernel: per-channel embeddings, a one-layer LSTM,
linear projection to four 129-way softmax heads, exact backpropagation
through time, and ADAM.

Everything is plain numpy. The batched entry points operate on padded token
arrays [B, T, 4]; the single-sequence wrappers match one-sequence use. All
gate math uses the parameter dtype, float32 for trained models and float64
in gradient tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VOCAB = 129  # 128 midi pitches + "unassigned"
N_CHANNELS = 4
TENSOR_ORDER = ("embed", "w_x", "w_h", "b", "w_out", "b_out")


class NumericalError(ArithmeticError):
    """Raised when activations or losses go non-finite."""


@dataclass
class ModelParams:
    embed: np.ndarray  # [4, 129, E]
    w_x: np.ndarray  # [4E, 4H], gate order i|f|g|o
    w_h: np.ndarray  # [H, 4H]
    b: np.ndarray  # [4H]
    w_out: np.ndarray  # [H, 4*129]
    b_out: np.ndarray  # [4*129]
    dropout_rate: float = 0.2

    @property
    def embed_dim(self) -> int:
        return self.embed.shape[2]

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[0]

    @property
    def dtype(self):
        return self.w_x.dtype

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_ORDER}

    def copy(self) -> "ModelParams":
        return ModelParams(
            **{k: v.copy() for k, v in self.tensors().items()},
            dropout_rate=self.dropout_rate,
        )

    def check_finite(self):
        for name, t in self.tensors().items():
            if not np.isfinite(t).all():
                raise NumericalError(f"parameter tensor {name} has non-finite entries")


def init_params(
    embed_dim: int = 32,
    hidden_dim: int = 128,
    dropout_rate: float = 0.2,
    seed: int = 0,
    dtype=np.float32,
) -> ModelParams:
    """Fan-scaled uniform init; forget-gate bias starts at +1."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=shape).astype(dtype)

    e, h = embed_dim, hidden_dim
    b = np.zeros(4 * h, dtype=dtype)
    b[h : 2 * h] = 1.0
    return ModelParams(
        embed=rng.uniform(-np.sqrt(3.0 / e), np.sqrt(3.0 / e), size=(N_CHANNELS, VOCAB, e)).astype(dtype),
        w_x=uniform((4 * e, 4 * h), 4 * e, 4 * h),
        w_h=uniform((h, 4 * h), h, 4 * h),
        b=b,
        w_out=uniform((h, N_CHANNELS * VOCAB), h, N_CHANNELS * VOCAB),
        b_out=np.zeros(N_CHANNELS * VOCAB, dtype=dtype),
        dropout_rate=dropout_rate,
    )


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.tensors().items()}


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class BatchCache:
    inputs: np.ndarray  # [S, B, 4] int
    targets: np.ndarray  # [S, B, 4] int
    mask: np.ndarray  # [S, B] float, 1 where step predicts a real frame
    u: np.ndarray  # [S, B, 4E]
    gates: np.ndarray  # [S, B, 4H] post-activation i|f|g|o
    c: np.ndarray  # [S, B, H]
    tanh_c: np.ndarray  # [S, B, H]
    h: np.ndarray  # [S, B, H] raw recurrent output
    h_drop: np.ndarray  # [S, B, H] projection input (dropped in train mode)
    drop_mask: np.ndarray | None
    logits: np.ndarray  # [S, B, 4, 129]
    h0: np.ndarray
    c0: np.ndarray
    h_last: np.ndarray
    c_last: np.ndarray


def forward_batch(
    params: ModelParams,
    tokens: np.ndarray,
    lengths: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    h0: np.ndarray | None = None,
    c0: np.ndarray | None = None,
) -> BatchCache:
    """Run the model over a padded batch; step s predicts frame s+1.

    `lengths` are the true frame counts; steps at or past a sequence's end
    are masked out of the loss. Hidden state may be threaded between calls
    for truncated BPTT (gradients never cross call boundaries).
    """
    dtype = params.dtype
    b_sz, t_len, _ = tokens.shape
    s_len = t_len - 1
    if s_len < 1:
        raise ValueError("need at least 2 frames to predict")
    e, h_dim = params.embed_dim, params.hidden_dim

    inputs = np.ascontiguousarray(np.swapaxes(tokens[:, :-1, :], 0, 1))  # [S,B,4]
    targets = np.ascontiguousarray(np.swapaxes(tokens[:, 1:, :], 0, 1))
    steps = np.arange(s_len)[:, None]
    mask = (steps + 1 < np.asarray(lengths)[None, :]).astype(dtype)

    u = np.empty((s_len, b_sz, N_CHANNELS * e), dtype=dtype)
    for ch in range(N_CHANNELS):
        u[:, :, ch * e : (ch + 1) * e] = params.embed[ch][inputs[:, :, ch]]

    zx = u.reshape(s_len * b_sz, -1) @ params.w_x
    zx = zx.reshape(s_len, b_sz, 4 * h_dim) + params.b

    if h0 is None:
        h0 = np.zeros((b_sz, h_dim), dtype=dtype)
    if c0 is None:
        c0 = np.zeros((b_sz, h_dim), dtype=dtype)

    gates = np.empty((s_len, b_sz, 4 * h_dim), dtype=dtype)
    c_all = np.empty((s_len, b_sz, h_dim), dtype=dtype)
    tanh_c = np.empty_like(c_all)
    h_all = np.empty_like(c_all)

    h, c = h0, c0
    for s in range(s_len):
        z = zx[s] + h @ params.w_h
        i = _sigmoid(z[:, :h_dim])
        f = _sigmoid(z[:, h_dim : 2 * h_dim])
        g = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
        o = _sigmoid(z[:, 3 * h_dim :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[s, :, :h_dim] = i
        gates[s, :, h_dim : 2 * h_dim] = f
        gates[s, :, 2 * h_dim : 3 * h_dim] = g
        gates[s, :, 3 * h_dim :] = o
        c_all[s] = c
        tanh_c[s] = tc
        h_all[s] = h

    if train_mode and params.dropout_rate > 0:
        if rng is None:
            raise ValueError("train_mode dropout needs an rng")
        keep = 1.0 - params.dropout_rate
        drop_mask = (rng.random(h_all.shape) < keep).astype(dtype) / keep
        h_drop = h_all * drop_mask
    else:
        drop_mask = None
        h_drop = h_all

    logits = h_drop.reshape(s_len * b_sz, h_dim) @ params.w_out + params.b_out
    logits = logits.reshape(s_len, b_sz, N_CHANNELS, VOCAB)

    if not np.isfinite(h).all() or not np.isfinite(logits[-1]).all():
        raise NumericalError("non-finite activations in forward pass")

    return BatchCache(
        inputs=inputs,
        targets=targets,
        mask=mask,
        u=u,
        gates=gates,
        c=c_all,
        tanh_c=tanh_c,
        h=h_all,
        h_drop=h_drop,
        drop_mask=drop_mask,
        logits=logits,
        h0=h0,
        c0=c0,
        h_last=h,
        c_last=c,
    )


def nll_batch(cache: BatchCache) -> np.ndarray:
    """Per-step negative log likelihood [S, B], channels summed, padding masked."""
    logits = cache.logits
    m = logits.max(axis=3, keepdims=True)
    lse = m[..., 0] + np.log(np.exp(logits - m).sum(axis=3))
    picked = np.take_along_axis(logits, cache.targets[:, :, :, None], axis=3)[..., 0]
    return (lse - picked).sum(axis=2) * cache.mask


def backward_batch(params: ModelParams, cache: BatchCache, grad_scale: float = 1.0) -> dict:
    """Exact gradients of `grad_scale * sum(nll_batch(cache))` w.r.t. params."""
    s_len, b_sz, _, _ = cache.logits.shape
    e, h_dim = params.embed_dim, params.hidden_dim

    m = cache.logits.max(axis=3, keepdims=True)
    expl = np.exp(cache.logits - m)
    probs = expl / expl.sum(axis=3, keepdims=True)
    dlogits = probs
    np.put_along_axis(
        dlogits,
        cache.targets[:, :, :, None],
        np.take_along_axis(dlogits, cache.targets[:, :, :, None], axis=3) - 1.0,
        axis=3,
    )
    dlogits *= cache.mask[:, :, None, None] * grad_scale
    dlogits = dlogits.reshape(s_len * b_sz, N_CHANNELS * VOCAB)

    hd_flat = cache.h_drop.reshape(s_len * b_sz, h_dim)
    grads = zero_grads(params)
    grads["w_out"] = hd_flat.T @ dlogits
    grads["b_out"] = dlogits.sum(axis=0)

    dh_proj = (dlogits @ params.w_out.T).reshape(s_len, b_sz, h_dim)
    if cache.drop_mask is not None:
        dh_proj = dh_proj * cache.drop_mask

    dz_all = np.empty((s_len, b_sz, 4 * h_dim), dtype=params.dtype)
    dh_rec = np.zeros((b_sz, h_dim), dtype=params.dtype)
    dc_rec = np.zeros_like(dh_rec)
    for s in range(s_len - 1, -1, -1):
        i = cache.gates[s, :, :h_dim]
        f = cache.gates[s, :, h_dim : 2 * h_dim]
        g = cache.gates[s, :, 2 * h_dim : 3 * h_dim]
        o = cache.gates[s, :, 3 * h_dim :]
        c_prev = cache.c[s - 1] if s > 0 else cache.c0
        tc = cache.tanh_c[s]

        dh = dh_proj[s] + dh_rec
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_rec
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_rec = dc * f

        dz = dz_all[s]
        dz[:, :h_dim] = di * i * (1.0 - i)
        dz[:, h_dim : 2 * h_dim] = df * f * (1.0 - f)
        dz[:, 2 * h_dim : 3 * h_dim] = dg * (1.0 - g * g)
        dz[:, 3 * h_dim :] = do * o * (1.0 - o)
        dh_rec = dz @ params.w_h.T

    dz_flat = dz_all.reshape(s_len * b_sz, 4 * h_dim)
    u_flat = cache.u.reshape(s_len * b_sz, N_CHANNELS * e)
    grads["w_x"] = u_flat.T @ dz_flat
    grads["b"] = dz_flat.sum(axis=0)

    h_prev = np.concatenate([cache.h0[None], cache.h[:-1]], axis=0)
    grads["w_h"] = h_prev.reshape(s_len * b_sz, h_dim).T @ dz_flat

    du = (dz_flat @ params.w_x.T).reshape(s_len * b_sz, N_CHANNELS, e)
    idx = cache.inputs.reshape(s_len * b_sz, N_CHANNELS)
    for ch in range(N_CHANNELS):
        np.add.at(grads["embed"][ch], idx[:, ch], du[:, ch, :])
    return grads


# --------------------------------------------------------------------------
# Single-sequence wrappers (the shape the segmenter consumes)
# --------------------------------------------------------------------------


def _tokens_of(seq) -> np.ndarray:
    arr = seq.tokens if hasattr(seq, "tokens") else np.asarray(seq)
    return arr.astype(np.int64)


def forward(params: ModelParams, seq, train_mode: bool = False, rng_seed: int = 0):
    """Logits [T-1, 4, 129] for one sequence plus the activation cache;
    logits[t] predict frame t+1."""
    tokens = _tokens_of(seq)[None, :, :]
    rng = np.random.default_rng(rng_seed) if train_mode else None
    cache = forward_batch(
        params, tokens, np.array([tokens.shape[1]]), train_mode=train_mode, rng=rng
    )
    return cache.logits[:, 0], cache


def nll(logits_or_cache, targets=None) -> np.ndarray:
    """Per-frame loss [T-1]; entry t is the cost of predicting frame t+1."""
    if isinstance(logits_or_cache, BatchCache):
        return nll_batch(logits_or_cache)[:, 0]
    logits = np.asarray(logits_or_cache)
    tok = _tokens_of(targets)[1:]
    m = logits.max(axis=2, keepdims=True)
    lse = m[..., 0] + np.log(np.exp(logits - m).sum(axis=2))
    picked = np.take_along_axis(logits, tok[:, :, None], axis=2)[..., 0]
    return (lse - picked).sum(axis=1)


def backward(params: ModelParams, cache: BatchCache, targets=None) -> dict:
    """Gradients of the summed sequence NLL. `targets` is accepted for
    symmetry but the cache already pins the target frames."""
    if targets is not None:
        tok = np.ascontiguousarray(np.swapaxes(_tokens_of(targets)[None, 1:, :], 0, 1))
        if not np.array_equal(tok, cache.targets):
            raise ValueError("targets disagree with the cached forward pass")
    return backward_batch(params, cache, grad_scale=1.0)


# --------------------------------------------------------------------------
# ADAM
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: ModelParams, learning_rate: float, **kw) -> AdamState:
    state = AdamState(learning_rate=learning_rate, **kw)
    state.m = zero_grads(params)
    state.v = zero_grads(params)
    return state


def adam_step(params: ModelParams, grads: dict, state: AdamState):
    """One bias-corrected ADAM update; parameters are updated in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, tensor in params.tensors().items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        tensor -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state
