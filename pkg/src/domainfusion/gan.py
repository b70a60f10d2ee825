"""Conditional GAN losses and the three training regimes.

The discriminator is a feature trunk plus a linear head and a class
projection: logit(x, y) = psi(f(x)) + <proj_y, f(x)>. The generator takes
noise concatenated with a class embedding and ends in a sigmoid over
pixels. Training regimes: single-domain (cgan_train), pretrain-then-
finetune (tgan_train), and simultaneous two-domain training with
alpha-weighted losses (df_train).

Every stream of randomness is keyed by (seed, dataset name, purpose), so
a two-domain run consumes, per domain, exactly the draws a single-domain
run on that dataset would. With alpha at 0 or 1 the parameter trajectories
collapse bitwise onto the corresponding single-domain run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics, nn
from .data import DomainPair, LabeledImageSet
from .errors import ConfigError, DivergenceError, LabelError, ShapeError
from .rng import substream


@dataclass
class GanModel:
    """Generator + projection-discriminator parameter bundle."""

    gen_spec: nn.NetworkSpec
    disc_spec: nn.NetworkSpec
    theta: nn.ParamSet
    phi: nn.ParamSet
    z_dim: int
    num_classes: int
    image_shape: tuple[int, int, int]
    sn_state: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "GanModel":
        return GanModel(
            gen_spec=self.gen_spec,
            disc_spec=self.disc_spec,
            theta=self.theta.copy(),
            phi=self.phi.copy(),
            z_dim=self.z_dim,
            num_classes=self.num_classes,
            image_shape=self.image_shape,
            sn_state={k: v.copy() for k, v in self.sn_state.items()},
        )


@dataclass(frozen=True)
class GanBuildConfig:
    z_dim: int = 32
    embed_dim: int = 16
    hidden: int = 256
    spectral_norm: bool = True


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.5
    batch_size: int = 64
    disc_steps: int = 1
    lr_g: float = 1e-4
    lr_d: float = 4e-4
    beta1: float = 0.0
    beta2: float = 0.9
    total_iters: int = 3000
    eval_interval: int = 250
    patience: int = 5
    seed: int = 0
    spectral_norm: bool = True
    fresh_noise: bool = True
    is_samples: int = 1024
    adam_eps: float = 1e-8
    check_isolation: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0,1], got {self.alpha}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.disc_steps < 1:
            raise ConfigError("disc_steps must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.total_iters < 0 or self.eval_interval < 0:
            raise ConfigError("iteration counts must be >= 0")


@dataclass(frozen=True)
class EarlyStopState:
    best: float = -math.inf
    count: int = 0
    stopped: bool = False


def early_stop_update(
    state: EarlyStopState, is_value: float, patience: int
) -> EarlyStopState:
    """Reset the drop counter on a new best, else count; stop at patience."""
    if not math.isfinite(is_value):
        raise ValueError(f"IS value must be finite, got {is_value}")
    if is_value > state.best:
        return EarlyStopState(best=is_value, count=0, stopped=False)
    count = min(state.count + 1, patience)
    return EarlyStopState(best=state.best, count=count, stopped=count >= patience)


@dataclass(frozen=True)
class TrainLogRecord:
    iteration: int
    loss_d: float
    loss_d_target: float
    loss_d_outer: float | None
    loss_g: float
    loss_g_target: float
    loss_g_outer: float | None
    lr_g: float
    lr_d: float
    is_value: float | None


TRAIN_LOG_HEADER = "iter,loss_d,loss_d_t,loss_d_o,loss_g,loss_g_t,loss_g_o,lr_g,lr_d,is"


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def write_train_log(records: list[TrainLogRecord], path) -> None:
    lines = [TRAIN_LOG_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [
                    str(r.iteration),
                    _fmt(r.loss_d),
                    _fmt(r.loss_d_target),
                    _fmt(r.loss_d_outer),
                    _fmt(r.loss_g),
                    _fmt(r.loss_g_target),
                    _fmt(r.loss_g_outer),
                    _fmt(r.lr_g),
                    _fmt(r.lr_d),
                    _fmt(r.is_value),
                ]
            )
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Model construction.

def build_gan(
    target: LabeledImageSet,
    outer: LabeledImageSet | None = None,
    build: GanBuildConfig = GanBuildConfig(),
    seed: int = 0,
    dtype=np.float32,
) -> GanModel:
    """Fresh model; class tables sized for target plus optional outer labels.

    Embedding and projection rows are initialized per domain block keyed by
    the dataset name, so the rows a dataset contributes are identical
    whether it is trained alone or as part of a pair.
    """
    c, h, w = target.image_shape
    n_pixels = c * h * w
    k_target = target.num_classes
    if outer is not None:
        k_total = outer.num_classes  # already offset past the target range
        blocks = [(k_target, target.name), (k_total - k_target, outer.name)]
    else:
        k_total = k_target
        blocks = [(k_target, target.name)]
    gen_spec = nn.NetworkSpec(
        layers=(
            nn.LayerSpec(build.z_dim + build.embed_dim, build.hidden, "relu"),
            nn.LayerSpec(build.hidden, build.hidden, "relu"),
            nn.LayerSpec(build.hidden, n_pixels, "sigmoid"),
        ),
        num_classes=k_total,
        embed_dim=build.embed_dim,
    )
    disc_spec = nn.NetworkSpec(
        layers=(
            nn.LayerSpec(n_pixels, build.hidden, "leaky_relu", build.spectral_norm),
            nn.LayerSpec(build.hidden, build.hidden, "leaky_relu", build.spectral_norm),
        )
    )
    theta = nn.init_params(gen_spec, seed, dtype, embed_blocks=blocks, stream_tag="gen")
    phi = nn.init_params(disc_spec, seed, dtype, stream_tag="disc")
    head_rng = substream(seed, "disc", "head.weight")
    bound = np.sqrt(6.0 / build.hidden)
    phi["head.weight"] = head_rng.uniform(-bound, bound, size=build.hidden).astype(dtype)
    phi["head.bias"] = np.zeros((), dtype=dtype)
    proj_parts = []
    for rows, key in blocks:
        proj_rng = substream(seed, "disc", "proj.weight", key)
        proj_parts.append(nn.embed_normal(proj_rng, rows, build.hidden, dtype))
    phi["proj.weight"] = np.concatenate(proj_parts, axis=0)
    sn_state = {}
    if build.spectral_norm:
        for i, layer in enumerate(disc_spec.layers):
            if layer.spectral_norm:
                name = f"layer{i}.weight"
                u_rng = substream(seed, "disc", name, "sn_u")
                u = u_rng.normal(size=layer.out_width)
                sn_state[name] = (u / np.linalg.norm(u)).astype(dtype)
    return GanModel(
        gen_spec=gen_spec,
        disc_spec=disc_spec,
        theta=theta,
        phi=phi,
        z_dim=build.z_dim,
        num_classes=k_total,
        image_shape=(c, h, w),
        sn_state=sn_state,
    )


def advance_sn(model: GanModel):
    """One power-iteration step per flagged weight; frozen (u, v) pairs."""
    if not model.sn_state:
        return None
    return nn.prepare_sn_vectors(model.disc_spec, model.phi, model.sn_state, advance=True)


def frozen_sn(model: GanModel):
    """Current (u, v) pairs without touching the persistent state."""
    if not model.sn_state:
        return None
    return nn.prepare_sn_vectors(model.disc_spec, model.phi, model.sn_state, advance=False)


# ---------------------------------------------------------------------------
# Discriminator logit and losses.

def d_logit(
    model: GanModel, x_rows: np.ndarray, labels: np.ndarray, sn_vectors=None
) -> np.ndarray:
    """Projection logit psi(f(x)) + <proj_y, f(x)> for a batch."""
    logits, _ = _disc_forward(model, np.atleast_2d(x_rows), labels, sn_vectors)
    return logits


def _disc_forward(model, x_rows, labels, sn_vectors):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= model.num_classes):
        raise LabelError(f"label outside [0, {model.num_classes})")
    f, trunk_cache = nn.forward(model.disc_spec, model.phi, x_rows, sn_vectors=sn_vectors)
    hw = model.phi["head.weight"]
    hb = model.phi["head.bias"]
    proj = model.phi["proj.weight"]
    logits = f @ hw + hb + (proj[labels] * f).sum(axis=1)
    return logits, (f, trunk_cache, labels)


def _disc_backward(model, disc_cache, d_logits):
    f, trunk_cache, labels = disc_cache
    hw = model.phi["head.weight"]
    proj = model.phi["proj.weight"]
    grads = nn.ParamSet()
    grads["head.weight"] = f.T @ d_logits
    grads["head.bias"] = np.asarray(d_logits.sum(), dtype=f.dtype)
    g_proj = np.zeros_like(proj)
    np.add.at(g_proj, labels, d_logits[:, None] * f)
    grads["proj.weight"] = g_proj
    df = d_logits[:, None] * (hw[None, :] + proj[labels])
    trunk_grads, dx = nn.backward(model.disc_spec, model.phi, trunk_cache, df)
    for name, g in trunk_grads.items():
        grads[name] = g
    return grads, dx


def _accumulate(into: nn.ParamSet, extra: nn.ParamSet) -> nn.ParamSet:
    for name, g in extra.items():
        into[name] = into[name] + g
    return into


def _check_finite(loss: float, what: str, iteration: int | None):
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite {what} loss", iteration=iteration)


def discriminator_loss(
    model: GanModel,
    real_rows: np.ndarray,
    real_labels: np.ndarray,
    fake_rows: np.ndarray,
    fake_labels: np.ndarray,
    sn_vectors=None,
    iteration: int | None = None,
) -> tuple[float, nn.ParamSet]:
    """Non-saturating cGAN discriminator loss and its phi gradients.

    loss = -mean log sigmoid(logit_real) - mean log(1 - sigmoid(logit_fake)),
    evaluated through softplus for stability.
    """
    if len(real_rows) == 0 or len(fake_rows) == 0:
        raise ShapeError("batches must be non-empty")
    n_real = real_rows.shape[0]
    n_fake = fake_rows.shape[0]
    logits_r, cache_r = _disc_forward(model, real_rows, real_labels, sn_vectors)
    logits_f, cache_f = _disc_forward(model, fake_rows, fake_labels, sn_vectors)
    with np.errstate(invalid="ignore"):
        loss = float(nn.softplus(-logits_r).mean() + nn.softplus(logits_f).mean())
    _check_finite(loss, "discriminator", iteration)
    dl_r = (nn.stable_sigmoid(logits_r) - 1.0) / n_real
    dl_f = nn.stable_sigmoid(logits_f) / n_fake
    grads, _ = _disc_backward(model, cache_r, dl_r.astype(logits_r.dtype))
    grads_f, _ = _disc_backward(model, cache_f, dl_f.astype(logits_f.dtype))
    return loss, _accumulate(grads, grads_f)


def generator_loss(
    model: GanModel,
    z_batch: np.ndarray,
    labels: np.ndarray,
    sn_vectors=None,
    iteration: int | None = None,
) -> tuple[float, nn.ParamSet]:
    """Non-saturating generator loss; gradients flow through theta only."""
    x_rows, gen_cache = nn.forward(model.gen_spec, model.theta, z_batch, labels)
    logits, disc_cache = _disc_forward(model, x_rows, labels, sn_vectors)
    with np.errstate(invalid="ignore"):
        loss = float(nn.softplus(-logits).mean())
    _check_finite(loss, "generator", iteration)
    dl = ((nn.stable_sigmoid(logits) - 1.0) / logits.shape[0]).astype(logits.dtype)
    _, dx = _disc_backward(model, disc_cache, dl)
    theta_grads, _ = nn.backward(model.gen_spec, model.theta, gen_cache, dx)
    return loss, theta_grads


def _combine(alpha: float, main: nn.ParamSet, other: nn.ParamSet | None) -> nn.ParamSet:
    # exact at the endpoints so single-domain collapse is bitwise
    if other is None or alpha == 1.0:
        return main
    if alpha == 0.0:
        return other
    out = nn.ParamSet()
    for name, g in main.items():
        dt = g.dtype.type
        out[name] = dt(alpha) * g + dt(1.0 - alpha) * other[name]
    return out


# ---------------------------------------------------------------------------
# Sampling helpers.

def generate_images(model: GanModel, labels: np.ndarray, rng) -> np.ndarray:
    """Class-conditional byte images from seeded noise."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    z = rng.standard_normal((labels.shape[0], model.z_dim), dtype=np.float32)
    rows, _ = nn.forward(model.gen_spec, model.theta, z, labels)
    c, h, w = model.image_shape
    pixels = np.clip(np.floor(rows * 255.0 + 0.5), 0, 255).astype(np.uint8)
    return pixels.reshape(labels.shape[0], c, h, w)


def _eval_is(model, k_target, n_samples, rng, extractor) -> float:
    per_class = max(1, n_samples // k_target)
    labels = np.repeat(np.arange(k_target, dtype=np.int64), per_class)
    pixels = generate_images(model, labels, rng)
    sample_set = LabeledImageSet(
        pixels=pixels,
        labels=labels.astype(np.uint16),
        num_classes=k_target,
        name="is-eval",
    )
    return metrics.inception_score(sample_set, extractor)


# ---------------------------------------------------------------------------
# Training loops.

@dataclass
class _DomainStreams:
    batch: np.random.Generator
    d_noise: np.random.Generator
    g_noise: np.random.Generator
    g_label: np.random.Generator


def _streams(seed: int, name: str) -> _DomainStreams:
    return _DomainStreams(
        batch=substream(seed, name, "batch"),
        d_noise=substream(seed, name, "dnoise"),
        g_noise=substream(seed, name, "gnoise"),
        g_label=substream(seed, name, "glabel"),
    )


@dataclass
class _Domain:
    rows: np.ndarray
    labels: np.ndarray
    label_base: int
    label_count: int
    streams: _DomainStreams
    last_z: np.ndarray | None = None


def _make_domain(dataset: LabeledImageSet, label_base: int, seed: int) -> _Domain:
    return _Domain(
        rows=dataset.as_float_rows(),
        labels=dataset.labels.astype(np.int64),
        label_base=label_base,
        label_count=dataset.num_classes - label_base,
        streams=_streams(seed, dataset.name),
    )


def _train_loop(
    target: LabeledImageSet,
    outer: LabeledImageSet | None,
    cfg: TrainConfig,
    build: GanBuildConfig,
    extractor=None,
    init_model: GanModel | None = None,
) -> tuple[GanModel, list[TrainLogRecord]]:
    if init_model is not None:
        model = init_model.copy()
        expected_k = outer.num_classes if outer is not None else target.num_classes
        if model.num_classes != expected_k:
            raise ShapeError(
                f"init model has {model.num_classes} classes, data needs {expected_k}"
            )
    else:
        model = build_gan(target, outer, build, cfg.seed)
    adam_theta = nn.AdamState.init_like(model.theta)
    adam_phi = nn.AdamState.init_like(model.phi)
    domains = [_make_domain(target, 0, cfg.seed)]
    if outer is not None:
        domains.append(_make_domain(outer, target.num_classes, cfg.seed))
    eval_rng = substream(cfg.seed, target.name, "eval")
    use_sn = cfg.spectral_norm and bool(model.sn_state)
    early = EarlyStopState()
    records: list[TrainLogRecord] = []
    b = cfg.batch_size

    for it in range(cfg.total_iters):
        cur_lr_d = nn.lr_schedule(it, cfg.total_iters, cfg.lr_d)
        cur_lr_g = nn.lr_schedule(it, cfg.total_iters, cfg.lr_g)
        theta_before = model.theta.copy() if cfg.check_isolation else None

        d_losses = [0.0, 0.0]
        for _ in range(cfg.disc_steps):
            sn_vectors = advance_sn(model) if use_sn else None
            grad_parts: list[nn.ParamSet] = []
            for di, dom in enumerate(domains):
                idx = dom.streams.batch.integers(0, dom.rows.shape[0], size=b)
                x = dom.rows[idx]
                y = dom.labels[idx]
                z = dom.streams.d_noise.standard_normal(
                    (b, model.z_dim), dtype=np.float32
                )
                fake_rows, _ = nn.forward(model.gen_spec, model.theta, z, y)
                loss, grads = discriminator_loss(
                    model, x, y, fake_rows, y, sn_vectors, iteration=it
                )
                d_losses[di] = loss
                grad_parts.append(grads)
                dom.last_z = z
            combined = _combine(
                cfg.alpha, grad_parts[0], grad_parts[1] if outer is not None else None
            )
            nn.adam_step(
                model.phi, combined, adam_phi, cur_lr_d,
                cfg.beta1, cfg.beta2, cfg.adam_eps,
            )

        if cfg.check_isolation:
            for name, arr in model.theta.items():
                assert np.array_equal(arr, theta_before[name]), (
                    f"discriminator step touched generator tensor {name}"
                )
            phi_before = model.phi.copy()

        sn_vectors = advance_sn(model) if use_sn else None
        g_losses = [0.0, 0.0]
        g_parts: list[nn.ParamSet] = []
        for di, dom in enumerate(domains):
            y = dom.streams.g_label.integers(0, dom.label_count, size=b) + dom.label_base
            if cfg.fresh_noise or dom.last_z is None:
                z = dom.streams.g_noise.standard_normal(
                    (b, model.z_dim), dtype=np.float32
                )
            else:
                z = dom.last_z
            loss, grads = generator_loss(model, z, y, sn_vectors, iteration=it)
            g_losses[di] = loss
            g_parts.append(grads)
        combined = _combine(
            cfg.alpha, g_parts[0], g_parts[1] if outer is not None else None
        )
        nn.adam_step(
            model.theta, combined, adam_theta, cur_lr_g,
            cfg.beta1, cfg.beta2, cfg.adam_eps,
        )

        if cfg.check_isolation:
            for name, arr in model.phi.items():
                assert np.array_equal(arr, phi_before[name]), (
                    f"generator step touched discriminator tensor {name}"
                )

        if outer is not None:
            loss_d = cfg.alpha * d_losses[0] + (1.0 - cfg.alpha) * d_losses[1]
            loss_g = cfg.alpha * g_losses[0] + (1.0 - cfg.alpha) * g_losses[1]
            d_outer, g_outer = d_losses[1], g_losses[1]
        else:
            loss_d, loss_g = d_losses[0], g_losses[0]
            d_outer = g_outer = None

        is_value = None
        if (
            cfg.eval_interval > 0
            and extractor is not None
            and (it + 1) % cfg.eval_interval == 0
        ):
            is_value = _eval_is(
                model, target.num_classes, cfg.is_samples, eval_rng, extractor
            )
            early = early_stop_update(early, is_value, cfg.patience)

        records.append(
            TrainLogRecord(
                iteration=it,
                loss_d=loss_d,
                loss_d_target=d_losses[0],
                loss_d_outer=d_outer,
                loss_g=loss_g,
                loss_g_target=g_losses[0],
                loss_g_outer=g_outer,
                lr_g=cur_lr_g,
                lr_d=cur_lr_d,
                is_value=is_value,
            )
        )
        if early.stopped:
            break
    return model, records


def cgan_train(
    dataset: LabeledImageSet,
    cfg: TrainConfig,
    build: GanBuildConfig = GanBuildConfig(),
    extractor=None,
    init_model: GanModel | None = None,
) -> tuple[GanModel, list[TrainLogRecord]]:
    """Single-domain conditional GAN training."""
    return _train_loop(dataset, None, cfg, build, extractor, init_model)


def df_train(
    pair: DomainPair,
    cfg: TrainConfig,
    build: GanBuildConfig = GanBuildConfig(),
    extractor=None,
) -> tuple[GanModel, list[TrainLogRecord]]:
    """Simultaneous two-domain training with alpha-weighted losses.

    Per iteration: disc_steps discriminator updates, each stepping phi by
    the alpha-weighted combination of per-domain gradients, then one
    generator update with per-domain fresh noise and labels. The quality
    score for early stopping is evaluated on generated target-class samples.
    """
    return _train_loop(pair.target, pair.outer, cfg, build, extractor)


# parameters whose rows are tied to a label space; everything else transfers
_CLASS_TABLES_GEN = ("embed.weight",)
_CLASS_TABLES_DISC = ("proj.weight",)


def tgan_train(
    target: LabeledImageSet,
    outer: LabeledImageSet,
    cfg_pre: TrainConfig,
    cfg_fine: TrainConfig,
    build: GanBuildConfig = GanBuildConfig(),
    extractor=None,
) -> tuple[GanModel, tuple[list[TrainLogRecord], list[TrainLogRecord]]]:
    """Pretrain on the outer dataset, then fine-tune on the target.

    Class tables (generator embedding, discriminator projection) are
    re-initialized for the target label space at hand-off; trunk, head, and
    all hidden weights transfer, as does the spectral-norm state.
    """
    pre_model, pre_logs = cgan_train(outer, cfg_pre, build, extractor)
    fine_model = build_gan(target, None, build, cfg_fine.seed)
    for name, arr in pre_model.theta.items():
        if name not in _CLASS_TABLES_GEN:
            fine_model.theta[name] = arr.copy()
    for name, arr in pre_model.phi.items():
        if name not in _CLASS_TABLES_DISC:
            fine_model.phi[name] = arr.copy()
    fine_model.sn_state = {k: v.copy() for k, v in pre_model.sn_state.items()}
    final_model, fine_logs = cgan_train(
        target, cfg_fine, build, extractor, init_model=fine_model
    )
    return final_model, (pre_logs, fine_logs)


# ---------------------------------------------------------------------------
# Checkpoint io (DFCK tensors + JSON sidecar).

def _spec_to_dict(spec: nn.NetworkSpec) -> dict:
    return {
        "layers": [
            {
                "in": l.in_width,
                "out": l.out_width,
                "activation": l.activation,
                "spectral_norm": l.spectral_norm,
            }
            for l in spec.layers
        ],
        "num_classes": spec.num_classes,
        "embed_dim": spec.embed_dim,
    }


def _spec_from_dict(d: dict) -> nn.NetworkSpec:
    return nn.NetworkSpec(
        layers=tuple(
            nn.LayerSpec(l["in"], l["out"], l["activation"], l["spectral_norm"])
            for l in d["layers"]
        ),
        num_classes=d["num_classes"],
        embed_dim=d["embed_dim"],
    )


def sidecar_path(path) -> str:
    return str(path) + ".json"


def save_gan(model: GanModel, path, metadata: dict | None = None) -> None:
    """DFCK checkpoint with gen./disc./sn. prefixes plus a JSON sidecar."""
    tensors = {}
    for name, arr in model.theta.items():
        tensors[f"gen.{name}"] = arr
    for name, arr in model.phi.items():
        tensors[f"disc.{name}"] = arr
    for name, arr in model.sn_state.items():
        tensors[f"sn.{name}"] = arr
    nn.save_dfck(tensors, path)
    meta = {
        "gen_spec": _spec_to_dict(model.gen_spec),
        "disc_spec": _spec_to_dict(model.disc_spec),
        "z_dim": model.z_dim,
        "num_classes": model.num_classes,
        "image_shape": list(model.image_shape),
        "meta": metadata or {},
    }
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_gan(path) -> tuple[GanModel, dict]:
    tensors = nn.load_dfck(path)
    with open(sidecar_path(path), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    theta = nn.ParamSet()
    phi = nn.ParamSet()
    sn_state = {}
    for name, arr in tensors.items():
        if name.startswith("gen."):
            theta[name[4:]] = arr
        elif name.startswith("disc."):
            phi[name[5:]] = arr
        elif name.startswith("sn."):
            sn_state[name[3:]] = arr
    model = GanModel(
        gen_spec=_spec_from_dict(meta["gen_spec"]),
        disc_spec=_spec_from_dict(meta["disc_spec"]),
        theta=theta,
        phi=phi,
        z_dim=meta["z_dim"],
        num_classes=meta["num_classes"],
        image_shape=tuple(meta["image_shape"]),
        sn_state=sn_state,
    )
    return model, meta["meta"]
