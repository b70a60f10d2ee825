"""Augmented-dataset construction and downstream classifier evaluation.

Generated class-conditional samples are appended to the real target set
(labels stay in the target range), a small dense classifier is trained on
the result, and accuracy is compared against the unaugmented baseline,
optionally per class group.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import drs as drs_mod
from . import gan, nn
from .data import LabeledImageSet
from .errors import ConfigError, ShapeError
from .rng import substream


@dataclass(frozen=True)
class AugmentPlan:
    """How many samples to add, how to obtain them, how reals are split."""

    gen_per_class: int = 200
    use_drs: bool = True
    n_real_train: int = 400
    n_real_val: int = 100

    def __post_init__(self):
        if self.gen_per_class < 0:
            raise ConfigError("gen_per_class must be >= 0")
        if self.n_real_train < 0 or self.n_real_val < 0:
            raise ConfigError("split sizes must be >= 0")

    def total_train_size(self, num_classes: int) -> int:
        return self.n_real_train + num_classes * self.gen_per_class


@dataclass
class AugmentedSet:
    """Real-prefix-plus-generated training set with provenance counts."""

    images: LabeledImageSet
    n_real: int
    n_generated: int
    records: list[drs_mod.AcceptanceRecord]

    def provenance(self) -> np.ndarray:
        """True for real rows; reals always precede generated rows."""
        flags = np.zeros(len(self.images), dtype=bool)
        flags[: self.n_real] = True
        return flags


def build_augmented(
    target: LabeledImageSet,
    model: gan.GanModel,
    plan: AugmentPlan,
    head: drs_mod.CalibrationHead | None = None,
    state: drs_mod.DrsState | None = None,
    seed: int = 0,
) -> AugmentedSet:
    """Append generated samples (filtered or plain) to the real target set.

    Labels come only from the target range even when the model was trained
    with extra outer classes.
    """
    k = target.num_classes
    if model.num_classes < k:
        raise ShapeError(
            f"model knows {model.num_classes} classes, target has {k}"
        )
    if plan.gen_per_class == 0:
        images = LabeledImageSet(
            pixels=target.pixels.copy(),
            labels=target.labels.copy(),
            num_classes=k,
            name=target.name,
        )
        return AugmentedSet(images=images, n_real=len(target), n_generated=0, records=[])
    records: list[drs_mod.AcceptanceRecord] = []
    if plan.use_drs:
        if head is None or state is None:
            raise ConfigError("use_drs requires a calibration head and state")
        parts, labels = [], []
        for y in range(k):
            pixels, state, record = drs_mod.drs_sample(
                model, head, state, y, plan.gen_per_class, seed=seed
            )
            parts.append(pixels)
            labels.append(np.full(plan.gen_per_class, y, dtype=np.uint16))
            records.append(record)
        gen_pixels = np.concatenate(parts, axis=0)
        gen_labels = np.concatenate(labels)
    else:
        generated = drs_mod.plain_sample(model, range(k), plan.gen_per_class, seed=seed)
        gen_pixels = generated.pixels
        gen_labels = generated.labels
    images = LabeledImageSet(
        pixels=np.concatenate([target.pixels, gen_pixels], axis=0),
        labels=np.concatenate([target.labels, gen_labels]).astype(np.uint16),
        num_classes=k,
        name=f"{target.name}+gen",
    )
    return AugmentedSet(
        images=images,
        n_real=len(target),
        n_generated=int(gen_labels.shape[0]),
        records=records,
    )


# ---------------------------------------------------------------------------
# Conventional data augmentation transforms.

@dataclass(frozen=True)
class CdaConfig:
    """Flip / expand / rotate, applied in that order at batch-load time."""

    flip: bool = True
    flip_prob: float = 0.5
    expand: bool = True
    expand_lo: float = 1.0
    expand_hi: float = 4.0
    rotate: bool = True
    rotate_lo: float = 0.0
    rotate_hi: float = 15.0

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigError("flip_prob must be in [0,1]")
        if self.expand_lo < 1.0 or self.expand_hi < self.expand_lo:
            raise ConfigError("expand range must satisfy 1 <= lo <= hi")
        if self.rotate_lo < 0.0 or self.rotate_hi < self.rotate_lo:
            raise ConfigError("rotation range must satisfy 0 <= lo <= hi")


def _rotate_bilinear(img: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate (C,H,W) float plane stack about the center, edge-clamped."""
    c, h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dy = yy - cy
    dx = xx - cx
    src_x = cos_t * dx + sin_t * dy + cx
    src_y = -sin_t * dx + cos_t * dy + cy
    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    fx = src_x - x0
    fy = src_y - y0
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    out = np.empty_like(img)
    for ch in range(c):
        plane = img[ch]
        top = (1 - fx) * plane[y0c, x0c] + fx * plane[y0c, x1c]
        bot = (1 - fx) * plane[y1c, x0c] + fx * plane[y1c, x1c]
        out[ch] = (1 - fy) * top + fy * bot
    return out


def conventional_augment(
    image: np.ndarray, config: CdaConfig, seed: int
) -> np.ndarray:
    """Random flip, expand-and-crop-back, rotation; deterministic in seed.

    Disabled transforms draw nothing from the stream. Degenerate draws
    (ratio exactly 1, angle exactly 0) leave the image bytes untouched.
    """
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim != 3:
        raise ShapeError(f"expected (C,H,W), got {img.shape}")
    rng = substream(seed, "cda")
    c, h, w = img.shape
    if config.flip and rng.uniform() < config.flip_prob:
        img = img[:, :, ::-1].copy()
    if config.expand:
        ratio = float(rng.uniform(config.expand_lo, config.expand_hi))
        if ratio != 1.0:
            ch_, cw_ = int(round(ratio * h)), int(round(ratio * w))
            canvas = np.zeros((c, ch_, cw_), dtype=np.uint8)
            oy = int(rng.integers(0, ch_ - h + 1))
            ox = int(rng.integers(0, cw_ - w + 1))
            canvas[:, oy : oy + h, ox : ox + w] = img
            y0 = (ch_ - h) // 2
            x0 = (cw_ - w) // 2
            img = canvas[:, y0 : y0 + h, x0 : x0 + w].copy()
    if config.rotate:
        angle = float(rng.uniform(config.rotate_lo, config.rotate_hi))
        if angle != 0.0:
            rotated = _rotate_bilinear(img.astype(np.float64), angle)
            img = np.clip(np.floor(rotated + 0.5), 0, 255).astype(np.uint8)
    return img


# ---------------------------------------------------------------------------
# Downstream classifier.

@dataclass(frozen=True)
class ClassifierConfig:
    hidden1: int = 128
    hidden2: int = 64
    steps: int = 1500
    batch: int = 64
    lr: float = 2e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eval_every: int = 100
    seed: int = 0


@dataclass
class Classifier:
    spec: nn.NetworkSpec
    params: nn.ParamSet
    num_classes: int

    def logits(self, images: LabeledImageSet) -> np.ndarray:
        out, _ = nn.forward(self.spec, self.params, images.as_float_rows())
        return np.asarray(out, dtype=np.float64)


def train_classifier(
    train: LabeledImageSet,
    val: LabeledImageSet,
    cfg: ClassifierConfig,
    cda: CdaConfig | None = None,
) -> Classifier:
    """Adam + softmax cross-entropy; returns the best-on-validation params.

    Conventional augmentation, when configured, is applied per image as
    batches are assembled. Ties on validation accuracy keep the earlier
    checkpoint. With steps = 0 the initial parameters come back.
    """
    if int(val.labels.max()) >= train.num_classes:
        raise ShapeError("validation labels outside the training label space")
    k = train.num_classes
    n_pixels = int(np.prod(train.image_shape))
    spec = nn.NetworkSpec(
        layers=(
            nn.LayerSpec(n_pixels, cfg.hidden1, "relu"),
            nn.LayerSpec(cfg.hidden1, cfg.hidden2, "relu"),
            nn.LayerSpec(cfg.hidden2, k, "identity"),
        )
    )
    params = nn.init_params(spec, cfg.seed, stream_tag="classifier")
    state = nn.AdamState.init_like(params)
    clf = Classifier(spec=spec, params=params, num_classes=k)
    if cfg.steps == 0:
        return clf
    labels_all = train.labels.astype(np.int64)
    batch_rng = substream(cfg.seed, "classifier", "batch")
    cda_rng = substream(cfg.seed, "classifier", "cda")
    best_params = params.copy()
    best_acc = -1.0
    val_labels = val.labels.astype(np.int64)
    for step in range(1, cfg.steps + 1):
        idx = batch_rng.integers(0, len(train), size=cfg.batch)
        if cda is not None:
            imgs = np.stack(
                [
                    conventional_augment(
                        train.pixels[i], cda, int(cda_rng.integers(0, 2**62))
                    )
                    for i in idx
                ]
            )
            x = imgs.reshape(cfg.batch, -1).astype(np.float32) / np.float32(255.0)
        else:
            x = train.pixels[idx].reshape(cfg.batch, -1).astype(np.float32)
            x /= np.float32(255.0)
        y = labels_all[idx]
        out, cache = nn.forward(spec, params, x)
        _, dy = nn.loss_and_grad("softmax_ce", out, y)
        grads, _ = nn.backward(spec, params, cache, dy.astype(out.dtype))
        lr = nn.lr_schedule(step - 1, cfg.steps, cfg.lr)
        nn.adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2)
        if step % cfg.eval_every == 0 or step == cfg.steps:
            logits, _ = nn.forward(spec, params, val.as_float_rows())
            acc = float((np.argmax(logits, axis=1) == val_labels).mean())
            if acc > best_acc:
                best_acc = acc
                best_params = params.copy()
    clf.params = best_params
    return clf


@dataclass(frozen=True)
class EvalReport:
    """Top-1 / top-k accuracy plus the per-class breakdown."""

    top1: float
    topk: float
    k: int
    per_class_acc: np.ndarray
    per_class_n: np.ndarray

    def __post_init__(self):
        if not (0.0 <= self.top1 <= 1.0 and 0.0 <= self.topk <= 1.0):
            raise ShapeError("accuracies must lie in [0, 1]")
        if self.topk + 1e-12 < self.top1:
            raise ShapeError("top-k accuracy cannot be below top-1")

    @property
    def n(self) -> int:
        return int(self.per_class_n.sum())


def evaluate(classifier: Classifier, test: LabeledImageSet, k: int = 5) -> EvalReport:
    """Score a classifier; argmax ties resolve to the lowest class id."""
    if len(test) == 0:
        raise ShapeError("test set is empty")
    logits = classifier.logits(test)
    labels = test.labels.astype(np.int64)
    pred = np.argmax(logits, axis=1)
    top1_hits = pred == labels
    order = np.argsort(-logits, axis=1, kind="stable")
    k_eff = min(k, classifier.num_classes)
    topk_hits = (order[:, :k_eff] == labels[:, None]).any(axis=1)
    kc = classifier.num_classes
    per_n = np.bincount(labels, minlength=kc)
    per_correct = np.bincount(labels[top1_hits], minlength=kc)
    with np.errstate(invalid="ignore"):
        per_acc = np.where(per_n > 0, per_correct / np.maximum(per_n, 1), 0.0)
    return EvalReport(
        top1=float(top1_hits.mean()),
        topk=float(topk_hits.mean()),
        k=k,
        per_class_acc=per_acc,
        per_class_n=per_n,
    )


@dataclass(frozen=True)
class GroupRate:
    group: str
    with_acc: float
    without_acc: float
    rate: float | None  # None marks an undefined (0-baseline) rate


def improvement_rate(
    with_da: EvalReport,
    without_da: EvalReport,
    groups: dict[str, list[int]],
) -> list[GroupRate]:
    """Per-group (with accuracy) / (without accuracy), sorted descending.

    Group accuracy pools member-class predictions. A zero baseline yields
    an undefined marker rather than infinity; undefined groups sort last.
    """
    kc = with_da.per_class_acc.shape[0]
    if without_da.per_class_acc.shape[0] != kc:
        raise ShapeError("reports cover different class spaces")
    if not groups:
        raise ConfigError("group map is empty")
    out = []
    for name, members in groups.items():
        if len(members) == 0:
            raise ConfigError(f"group {name!r} has no member classes")
        members = list(members)
        if min(members) < 0 or max(members) >= kc:
            raise ConfigError(f"group {name!r} references an unknown class")

        def pooled(report: EvalReport) -> float:
            n = report.per_class_n[members].sum()
            correct = (report.per_class_acc[members] * report.per_class_n[members]).sum()
            return float(correct / n) if n > 0 else 0.0

        w = pooled(with_da)
        wo = pooled(without_da)
        rate = (w / wo) if wo > 0 else None
        out.append(GroupRate(group=name, with_acc=w, without_acc=wo, rate=rate))
    out.sort(key=lambda g: (g.rate is None, -(g.rate if g.rate is not None else 0.0)))
    return out


# ---------------------------------------------------------------------------
# Report files.

EVAL_HEADER = "run_id,mode,top1,topk,n_train_real,n_train_gen,seed"
EVAL_CLASS_HEADER = "run_id,class,accuracy,n"


def write_eval_row(
    path, run_id: str, mode: str, report: EvalReport,
    n_train_real: int, n_train_gen: int, seed: int,
) -> None:
    new_file = not os.path.exists(path)
    with open(path, "a", encoding="ascii") as fh:
        if new_file:
            fh.write(EVAL_HEADER + "\n")
        fh.write(
            f"{run_id},{mode},{report.top1!r},{report.topk!r},"
            f"{n_train_real},{n_train_gen},{seed}\n"
        )


def write_eval_classes(path, run_id: str, report: EvalReport) -> None:
    new_file = not os.path.exists(path)
    with open(path, "a", encoding="ascii") as fh:
        if new_file:
            fh.write(EVAL_CLASS_HEADER + "\n")
        for cls in range(report.per_class_acc.shape[0]):
            fh.write(
                f"{run_id},{cls},{float(report.per_class_acc[cls])!r},"
                f"{int(report.per_class_n[cls])}\n"
            )
