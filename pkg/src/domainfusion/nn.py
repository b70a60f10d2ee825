"""Dense-tensor feed-forward core.

Small fully-connected networks with hand-derived reverse-mode gradients,
bias-corrected Adam, a linear learning-rate schedule, optional spectral
normalization by power iteration, and a binary checkpoint format. Training
runs in float32; a float64 mode exists for finite-difference checking.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    DegenerateWeightError,
    DimensionError,
    LabelError,
    ShapeError,
    TruncatedFileError,
)
from .rng import substream

ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "tanh", "identity")
LEAKY_SLOPE = 0.1

DFCK_MAGIC = b"DFCK"
DFCK_VERSION = 1


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function without overflow for large |x|."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) computed as logaddexp(0, x)."""
    return np.logaddexp(np.zeros_like(np.asarray(x)), x)


@dataclass(frozen=True)
class LayerSpec:
    in_width: int
    out_width: int
    activation: str = "identity"
    spectral_norm: bool = False

    def __post_init__(self):
        if self.in_width < 1 or self.out_width < 1:
            raise ShapeError(f"layer widths must be positive, got {self}")
        if self.activation not in ACTIVATIONS:
            raise ShapeError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NetworkSpec:
    """Layer chain plus an optional class-embedding table.

    When ``num_classes`` > 0 the embedding of each sample's label is
    concatenated to its input row before the first layer (generator-style
    conditioning), so layer 0 consumes data_width + embed_dim values.
    """

    layers: tuple[LayerSpec, ...]
    num_classes: int = 0
    embed_dim: int = 0

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_width != b.in_width:
                raise ShapeError(
                    f"layer widths do not chain: {a.out_width} -> {b.in_width}"
                )
        if self.num_classes < 0 or self.embed_dim < 0:
            raise ShapeError("num_classes and embed_dim must be >= 0")
        if self.num_classes > 0 and self.embed_dim == 0:
            raise ShapeError("conditioning requires embed_dim > 0")
        if self.num_classes > 0 and self.layers[0].in_width <= self.embed_dim:
            raise ShapeError("first layer narrower than the embedding")

    @property
    def data_width(self) -> int:
        if self.num_classes > 0:
            return self.layers[0].in_width - self.embed_dim
        return self.layers[0].in_width

    @property
    def out_width(self) -> int:
        return self.layers[-1].out_width


class ParamSet:
    """Mapping from unique tensor name to array; iteration is lexicographic."""

    __slots__ = ("_data",)

    def __init__(self, items=None):
        self._data: dict[str, np.ndarray] = {}
        if items is not None:
            pairs = items.items() if hasattr(items, "items") else items
            for name, arr in pairs:
                self[name] = arr

    def __setitem__(self, name: str, arr) -> None:
        self._data[name] = np.asarray(arr)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __contains__(self, name) -> bool:
        return name in self._data

    def __len__(self) -> int:
        return len(self._data)

    def __iter__(self):
        return iter(sorted(self._data))

    def names(self) -> list[str]:
        return sorted(self._data)

    def items(self):
        for name in sorted(self._data):
            yield name, self._data[name]

    def copy(self) -> "ParamSet":
        return ParamSet((name, arr.copy()) for name, arr in self.items())

    def astype(self, dtype) -> "ParamSet":
        return ParamSet((name, arr.astype(dtype)) for name, arr in self.items())

    def zeros_like(self) -> "ParamSet":
        return ParamSet((name, np.zeros_like(arr)) for name, arr in self.items())

    def aligned_with(self, other: "ParamSet") -> bool:
        if self.names() != other.names():
            return False
        return all(self[n].shape == other[n].shape for n in self.names())


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    m: ParamSet
    v: ParamSet
    t: int = 0

    @classmethod
    def init_like(cls, params: ParamSet) -> "AdamState":
        return cls(m=params.zeros_like(), v=params.zeros_like(), t=0)


def he_uniform(rng: np.random.Generator, out_width: int, in_width: int, dtype):
    bound = np.sqrt(6.0 / in_width)
    return rng.uniform(-bound, bound, size=(out_width, in_width)).astype(dtype)


def embed_normal(rng: np.random.Generator, rows: int, dim: int, dtype):
    return rng.normal(0.0, 0.01, size=(rows, dim)).astype(dtype)


def init_params(
    spec: NetworkSpec,
    seed: int,
    dtype=np.float32,
    embed_blocks: list[tuple[int, str]] | None = None,
    stream_tag: str = "",
) -> ParamSet:
    """He-uniform weights, zero biases, N(0, 0.01^2) embeddings.

    Each tensor draws from its own (seed, stream_tag, name) substream, so
    adding or removing tensors never perturbs the others. ``embed_blocks``
    splits the embedding table into row blocks drawn from
    (seed, stream_tag, name, block_key) substreams; runs that share a block
    key share those rows bit for bit.
    """
    params = ParamSet()
    for i, layer in enumerate(spec.layers):
        wname = f"layer{i}.weight"
        rng = substream(seed, stream_tag, wname)
        params[wname] = he_uniform(rng, layer.out_width, layer.in_width, dtype)
        params[f"layer{i}.bias"] = np.zeros(layer.out_width, dtype=dtype)
    if spec.num_classes > 0:
        name = "embed.weight"
        if embed_blocks is None:
            embed_blocks = [(spec.num_classes, "")]
        total = sum(rows for rows, _ in embed_blocks)
        if total != spec.num_classes:
            raise ShapeError(
                f"embed blocks cover {total} rows, spec has {spec.num_classes}"
            )
        blocks = []
        for rows, key in embed_blocks:
            rng = substream(seed, stream_tag, name, key)
            blocks.append(embed_normal(rng, rows, spec.embed_dim, dtype))
        params[name] = np.concatenate(blocks, axis=0)
    return params


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if kind == "sigmoid":
        return stable_sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activate_grad(kind: str, z: np.ndarray, post: np.ndarray) -> np.ndarray:
    one = z.dtype.type(1)
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "leaky_relu":
        return np.where(z > 0, one, z.dtype.type(LEAKY_SLOPE))
    if kind == "sigmoid":
        return post * (one - post)
    if kind == "tanh":
        return one - post * post
    return np.ones_like(z)


@dataclass
class ForwardCache:
    """Activation record produced by forward; consumed once by backward."""

    acts: list[np.ndarray]
    preacts: list[np.ndarray]
    labels: np.ndarray | None
    data_width: int
    w_used: list[np.ndarray]
    sn_terms: dict[int, tuple[np.ndarray, np.ndarray, float]] = field(
        default_factory=dict
    )


def prepare_sn_vectors(
    spec: NetworkSpec,
    params: ParamSet,
    sn_state: dict[str, np.ndarray],
    advance: bool = True,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Frozen (u, v) pairs for every spectral-norm layer.

    With ``advance`` the power iteration runs one step and the persistent u
    estimate is updated in place; otherwise the stored u is used as is. The
    returned vectors are treated as constants by forward/backward, which is
    what makes the analytic SN gradient exact.
    """
    vectors = {}
    for i, layer in enumerate(spec.layers):
        if not layer.spectral_norm:
            continue
        name = f"layer{i}.weight"
        w = params[name]
        u = sn_state[name]
        if advance:
            _, u_new, _ = spectral_normalize(w, u)
            sn_state[name] = u_new
            wt_u = w.T @ u_new
        else:
            u_new = u
            wt_u = w.T @ u
        norm = float(np.linalg.norm(wt_u))
        if norm < 1e-12:
            raise DegenerateWeightError(f"degenerate weight matrix {name}")
        v = (wt_u / norm).astype(w.dtype)
        vectors[name] = (u_new, v)
    return vectors


def forward(
    spec: NetworkSpec,
    params: ParamSet,
    x: np.ndarray,
    labels: np.ndarray | None = None,
    sn_vectors: dict[str, tuple[np.ndarray, np.ndarray]] | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Run the network on a batch of rows.

    x: (N, data_width). When the spec is conditioned, ``labels`` selects the
    embedding rows concatenated to x. ``sn_vectors`` supplies frozen power
    iteration pairs for spectral-norm layers; without them those layers use
    their raw weights.
    """
    x = np.atleast_2d(np.asarray(x))
    if x.shape[1] != spec.data_width:
        raise ShapeError(
            f"input width {x.shape[1]} != spec data width {spec.data_width}"
        )
    if spec.num_classes > 0:
        if labels is None:
            raise LabelError("conditioned network called without labels")
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != x.shape[0]:
            raise ShapeError("labels length != batch size")
        if labels.min(initial=0) < 0 or labels.max(initial=-1) >= spec.num_classes:
            raise LabelError(
                f"label outside [0, {spec.num_classes}): {labels.min()}..{labels.max()}"
            )
        emb = params["embed.weight"][labels]
        a = np.concatenate([x.astype(emb.dtype), emb], axis=1)
    else:
        labels = None
        a = x.astype(params[spec_first_weight(spec)].dtype)

    acts = [a]
    preacts = []
    w_used = []
    sn_terms: dict[int, tuple[np.ndarray, np.ndarray, float]] = {}
    for i, layer in enumerate(spec.layers):
        w = params[f"layer{i}.weight"]
        b = params[f"layer{i}.bias"]
        name = f"layer{i}.weight"
        if layer.spectral_norm and sn_vectors is not None and name in sn_vectors:
            u, v = sn_vectors[name]
            sigma = float(u @ w @ v)
            if abs(sigma) < 1e-12:
                raise DegenerateWeightError(f"sigma underflow on {name}")
            w_eff = w / w.dtype.type(sigma)
            sn_terms[i] = (u, v, sigma)
        else:
            w_eff = w
        z = a @ w_eff.T + b
        a = _activate(layer.activation, z)
        preacts.append(z)
        w_used.append(w_eff)
        acts.append(a)
    cache = ForwardCache(
        acts=acts,
        preacts=preacts,
        labels=labels,
        data_width=spec.data_width,
        w_used=w_used,
        sn_terms=sn_terms,
    )
    return acts[-1], cache


def spec_first_weight(spec: NetworkSpec) -> str:
    return "layer0.weight"


def backward(
    spec: NetworkSpec,
    params: ParamSet,
    cache: ForwardCache,
    out_grad: np.ndarray,
) -> tuple[ParamSet, np.ndarray]:
    """Exact reverse-mode gradients of forward.

    Returns gradients for every parameter of the spec plus the gradient with
    respect to the raw (pre-embedding) input rows. Embedding gradients are
    accumulated per label.
    """
    n_layers = len(spec.layers)
    if len(cache.preacts) != n_layers:
        raise ShapeError("cache does not match spec")
    g = np.asarray(out_grad)
    if g.shape != cache.acts[-1].shape:
        raise ShapeError(
            f"out_grad shape {g.shape} != output shape {cache.acts[-1].shape}"
        )
    grads = ParamSet()
    for i in reversed(range(n_layers)):
        layer = spec.layers[i]
        z = cache.preacts[i]
        post = cache.acts[i + 1]
        a_prev = cache.acts[i]
        dz = g * _activate_grad(layer.activation, z, post)
        g_what = dz.T @ a_prev
        grads[f"layer{i}.bias"] = dz.sum(axis=0)
        if i in cache.sn_terms:
            u, v, sigma = cache.sn_terms[i]
            w_hat = cache.w_used[i]
            inner = float((g_what * w_hat).sum())
            g_w = (g_what - inner * np.outer(u, v).astype(g_what.dtype)) / g_what.dtype.type(sigma)
            grads[f"layer{i}.weight"] = g_w
        else:
            grads[f"layer{i}.weight"] = g_what
        g = dz @ cache.w_used[i]
    if spec.num_classes > 0:
        g_embed = np.zeros_like(params["embed.weight"])
        np.add.at(g_embed, cache.labels, g[:, cache.data_width :])
        grads["embed.weight"] = g_embed
        input_grad = g[:, : cache.data_width]
    else:
        input_grad = g
    return grads, input_grad


def adam_step(
    params: ParamSet,
    grads: ParamSet,
    state: AdamState,
    lr: float,
    beta1: float = 0.0,
    beta2: float = 0.9,
    eps: float = 1e-8,
) -> tuple[ParamSet, AdamState]:
    """Bias-corrected Adam update, in place. Single-writer contract."""
    if not params.aligned_with(grads):
        raise ShapeError("params and grads are not update-compatible")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    state.t += 1
    t = state.t
    for name, p in params.items():
        dt = p.dtype.type
        g = grads[name].astype(p.dtype, copy=False)
        m = state.m[name]
        v = state.v[name]
        m *= dt(beta1)
        m += dt(1.0 - beta1) * g
        v *= dt(beta2)
        v += dt(1.0 - beta2) * (g * g)
        m_hat = m / dt(1.0 - beta1**t)
        v_hat = v / dt(1.0 - beta2**t)
        p -= dt(lr) * m_hat / (np.sqrt(v_hat) + dt(eps))
    return params, state


def lr_schedule(iteration: int, total_iters: int, base_lr: float) -> float:
    """Linear decay from base_lr at iteration 0 to 0 at total_iters."""
    if iteration < 0 or iteration > total_iters:
        raise ValueError(f"iteration {iteration} outside [0, {total_iters}]")
    if total_iters <= 0:
        return base_lr
    return base_lr * (1.0 - iteration / total_iters)


def spectral_normalize(
    weight: np.ndarray, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """One power-iteration step; returns (weight / sigma, new u, sigma).

    v <- W^T u / ||.||, u <- W v / ||.||, sigma = u^T W v. Raises on an
    effectively zero matrix.
    """
    w = np.asarray(weight)
    if w.ndim != 2:
        raise ShapeError("spectral_normalize expects a rank-2 weight")
    u = np.asarray(u, dtype=w.dtype).reshape(-1)
    if u.shape[0] != w.shape[0]:
        raise ShapeError("u length must equal weight rows")
    wt_u = w.T @ u
    n1 = float(np.linalg.norm(wt_u))
    if n1 < 1e-12:
        raise DegenerateWeightError("power iteration hit a zero direction")
    v = wt_u / w.dtype.type(n1)
    wv = w @ v
    n2 = float(np.linalg.norm(wv))
    if n2 < 1e-12:
        raise DegenerateWeightError("power iteration hit a zero direction")
    u_new = wv / w.dtype.type(n2)
    sigma = float(u_new @ w @ v)
    if sigma < 1e-12:
        raise DegenerateWeightError("estimated sigma underflow")
    return w / w.dtype.type(sigma), u_new, sigma


# ---------------------------------------------------------------------------
# Loss heads used by the finite-difference harness.

def loss_and_grad(kind: str, y: np.ndarray, target) -> tuple[float, np.ndarray]:
    """Scalar loss plus dL/dy for a batch of network outputs."""
    n = y.shape[0]
    if kind == "squared":
        t = np.asarray(target, dtype=y.dtype)
        diff = y - t
        return float(0.5 * (diff * diff).sum() / n), diff / n
    if kind == "sigmoid_bce":
        t = np.asarray(target, dtype=y.dtype)
        loss = float((softplus(y) - t * y).sum() / n)
        return loss, (stable_sigmoid(y) - t) / n
    if kind == "softmax_ce":
        labels = np.asarray(target, dtype=np.int64).reshape(-1)
        shifted = y - y.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_z
        loss = float(-log_probs[np.arange(n), labels].sum() / n)
        grad = np.exp(log_probs)
        grad[np.arange(n), labels] -= 1.0
        return loss, grad / n
    raise ValueError(f"unknown loss kind {kind!r}")


def finite_diff_check(
    spec: NetworkSpec,
    params: ParamSet,
    x: np.ndarray,
    loss_kind: str,
    labels: np.ndarray | None = None,
    target=None,
    h: float = 1e-5,
    sn_vectors=None,
) -> float:
    """Max relative error of backward vs central differences.

    Runs in double precision over every parameter entry. Spectral-norm
    vectors, when given, are held fixed across all evaluations so the
    compared map is deterministic in the parameters alone.
    """
    params64 = params.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)

    def eval_loss(ps: ParamSet) -> float:
        y, _ = forward(spec, ps, x, labels, sn_vectors=sn_vectors)
        return loss_and_grad(loss_kind, y, target)[0]

    y, cache = forward(spec, params64, x, labels, sn_vectors=sn_vectors)
    _, dy = loss_and_grad(loss_kind, y, target)
    grads, _ = backward(spec, params64, cache, dy)

    worst = 0.0
    for name, p in params64.items():
        flat = p.reshape(-1)
        gflat = grads[name].reshape(-1)
        for idx in range(flat.shape[0]):
            keep = flat[idx]
            flat[idx] = keep + h
            up = eval_loss(params64)
            flat[idx] = keep - h
            down = eval_loss(params64)
            flat[idx] = keep
            fd = (up - down) / (2.0 * h)
            a = gflat[idx]
            err = abs(a - fd) / max(1.0, abs(a), abs(fd))
            if err > worst:
                worst = err
    return float(worst)


# ---------------------------------------------------------------------------
# DFCK checkpoint format.

def save_dfck(tensors, path) -> None:
    """Write named tensors as a DFCK file (float32, little-endian)."""
    items = sorted(tensors.items() if hasattr(tensors, "items") else tensors)
    with open(path, "wb") as fh:
        fh.write(DFCK_MAGIC)
        fh.write(struct.pack("<B", DFCK_VERSION))
        fh.write(struct.pack("<I", len(items)))
        for name, arr in items:
            data = np.ascontiguousarray(arr, dtype="<f4")
            raw_name = name.encode("utf-8")
            if len(raw_name) > 0xFFFF:
                raise DimensionError(f"tensor name too long: {name!r}")
            if data.ndim > 0xFF:
                raise DimensionError(f"tensor rank too large: {data.ndim}")
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.tobytes())


def load_dfck(path) -> dict[str, np.ndarray]:
    """Read a DFCK file back into a name -> float32 array dict."""
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    if len(view) < 4 or bytes(view[:4]) != DFCK_MAGIC:
        raise BadMagicError(f"not a DFCK file: {path}")
    if len(view) < 9:
        raise TruncatedFileError(f"truncated DFCK header: {path}")
    version = view[4]
    if version != DFCK_VERSION:
        raise DimensionError(f"unsupported DFCK version {version}")
    (count,) = struct.unpack_from("<I", view, 5)
    offset = 9
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        if offset + 2 > len(view):
            raise TruncatedFileError(f"truncated tensor header: {path}")
        (name_len,) = struct.unpack_from("<H", view, offset)
        offset += 2
        if offset + name_len + 1 > len(view):
            raise TruncatedFileError(f"truncated tensor name: {path}")
        name = bytes(view[offset : offset + name_len]).decode("utf-8")
        offset += name_len
        rank = view[offset]
        offset += 1
        if offset + 4 * rank > len(view):
            raise TruncatedFileError(f"truncated dims for {name!r}: {path}")
        dims = struct.unpack_from(f"<{rank}I", view, offset) if rank else ()
        offset += 4 * rank
        total = 1
        for dim in dims:
            total *= dim
        nbytes = total * 4
        if offset + nbytes > len(view):
            raise TruncatedFileError(f"truncated data for {name!r}: {path}")
        arr = np.frombuffer(blob, dtype="<f4", count=total, offset=offset)
        out[name] = arr.reshape(dims).copy()
        offset += nbytes
    return out
