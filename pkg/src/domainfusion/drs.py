"""Class-conditional discriminator rejection sampling.

After GAN training the discriminator still knows which samples look
broken. A per-class affine calibration head is trained on top of the
frozen logit, a burn-in pass estimates each class's maximum density
ratio, and sampling then accepts each candidate with probability
sigmoid(F) where

    F = (log r - log M) - log(1 - exp(log r - log M - eps)) - gamma.

Everything runs in the log domain so confident discriminators cannot
overflow the ratio exp(D~*(x, y)).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import gan, nn
from .data import LabeledImageSet
from .errors import ConfigError, InsufficientClassError, ShapeError, StarvationError
from .rng import substream

DEFAULT_EPS = 1e-14
DEFAULT_TAU = 1000
DEFAULT_MAX_ATTEMPT_FACTOR = 200


@dataclass
class CalibrationHead:
    """Per-class affine on the frozen discriminator logit."""

    scale: np.ndarray  # (K,) a_y
    shift: np.ndarray  # (K,) b_y

    @classmethod
    def identity(cls, num_classes: int) -> "CalibrationHead":
        return cls(
            scale=np.ones(num_classes, dtype=np.float64),
            shift=np.zeros(num_classes, dtype=np.float64),
        )

    @property
    def num_classes(self) -> int:
        return self.scale.shape[0]


@dataclass
class DrsState:
    """Per-class log density-ratio maxima plus the sampling constants."""

    log_m_bar: np.ndarray  # (K,)
    gamma: np.ndarray      # (K,)
    eps: float
    tau: int
    attempts: np.ndarray   # (K,) int64
    accepted: np.ndarray   # (K,) int64

    @classmethod
    def fresh(
        cls, num_classes: int, eps: float = DEFAULT_EPS, tau: int = DEFAULT_TAU
    ) -> "DrsState":
        return cls(
            log_m_bar=np.full(num_classes, -np.inf),
            gamma=np.zeros(num_classes),
            eps=eps,
            tau=tau,
            attempts=np.zeros(num_classes, dtype=np.int64),
            accepted=np.zeros(num_classes, dtype=np.int64),
        )


@dataclass(frozen=True)
class AcceptanceRecord:
    class_id: int
    accepted: int
    attempts: int
    rate: float
    log_m_bar: float


ACCEPTANCE_HEADER = "class,accepted,attempts,rate,log_m_bar"


def write_acceptance_records(records: list[AcceptanceRecord], path) -> None:
    new_file = not os.path.exists(path)
    with open(path, "a", encoding="ascii") as fh:
        if new_file:
            fh.write(ACCEPTANCE_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.class_id},{r.accepted},{r.attempts},{r.rate!r},{r.log_m_bar!r}\n"
            )


# ---------------------------------------------------------------------------
# Calibrated log density ratio.

def _rows_from_images(model: gan.GanModel, images: np.ndarray) -> np.ndarray:
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    n = images.shape[0]
    if images.shape[1:] != model.image_shape:
        raise ShapeError(
            f"image shape {images.shape[1:]} != model shape {model.image_shape}"
        )
    return images.reshape(n, -1).astype(np.float32) / np.float32(255.0)


def log_density_ratio(
    model: gan.GanModel,
    head: CalibrationHead,
    images: np.ndarray,
    labels: np.ndarray,
    sn_vectors=None,
) -> np.ndarray:
    """Calibrated logit D~*(x, y) = a_y * logit(x, y) + b_y, log of the ratio."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    rows = _rows_from_images(model, images)
    if sn_vectors is None:
        sn_vectors = gan.frozen_sn(model)
    logits = gan.d_logit(model, rows, labels, sn_vectors).astype(np.float64)
    return head.scale[labels] * logits + head.shift[labels]


def density_ratio(
    model: gan.GanModel,
    head: CalibrationHead,
    images: np.ndarray,
    labels: np.ndarray,
    sn_vectors=None,
) -> np.ndarray:
    """exp of the calibrated logit; may overflow to inf, use the log form."""
    with np.errstate(over="ignore"):
        return np.exp(log_density_ratio(model, head, images, labels, sn_vectors))


# ---------------------------------------------------------------------------
# KeepTraining: per-class calibration of the frozen discriminator.

def keep_training(
    model: gan.GanModel,
    target: LabeledImageSet,
    steps: int = 1000,
    lr: float = 1e-2,
    seed: int = 0,
    batch: int = 32,
) -> CalibrationHead:
    """Fit (a_y, b_y) per class by BCE on real-vs-generated streams.

    The base model is frozen; only the two scalars per class move. With
    steps = 0 the head is the identity calibration.
    """
    k = target.num_classes
    head = CalibrationHead.identity(k)
    if steps == 0:
        return head
    sn_vectors = gan.frozen_sn(model)
    rows_all = target.as_float_rows()
    beta1, beta2, eps_adam = 0.0, 0.9, 1e-8
    for y in range(k):
        members = target.class_indices(y)
        if members.size == 0:
            raise InsufficientClassError(f"class {y} has no real samples")
        rng = substream(seed, "drs-head", y)
        a, b = 1.0, 0.0
        m_a = v_a = m_b = v_b = 0.0
        labels = np.full(batch, y, dtype=np.int64)
        for t in range(1, steps + 1):
            idx = rng.integers(0, members.size, size=batch)
            real_rows = rows_all[members[idx]]
            fake_imgs = gan.generate_images(model, labels, rng)
            fake_rows = _rows_from_images(model, fake_imgs)
            lr_real = gan.d_logit(model, real_rows, labels, sn_vectors).astype(np.float64)
            lr_fake = gan.d_logit(model, fake_rows, labels, sn_vectors).astype(np.float64)
            logits = np.concatenate([lr_real, lr_fake])
            targets = np.concatenate([np.ones(batch), np.zeros(batch)])
            cal = a * logits + b
            resid = _sigmoid64(cal) - targets
            g_a = float((resid * logits).mean())
            g_b = float(resid.mean())
            m_a = beta1 * m_a + (1 - beta1) * g_a
            v_a = beta2 * v_a + (1 - beta2) * g_a * g_a
            m_b = beta1 * m_b + (1 - beta1) * g_b
            v_b = beta2 * v_b + (1 - beta2) * g_b * g_b
            bc1 = 1 - beta1**t
            bc2 = 1 - beta2**t
            a -= lr * (m_a / bc1) / (math.sqrt(v_a / bc2) + eps_adam)
            b -= lr * (m_b / bc1) / (math.sqrt(v_b / bc2) + eps_adam)
        head.scale[y] = a
        head.shift[y] = b
    return head


def _sigmoid64(x: np.ndarray) -> np.ndarray:
    return nn.stable_sigmoid(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# Burn-in and acceptance.

def _burn_in_log_ratios(model, head, y: int, tau: int, seed: int) -> np.ndarray:
    if tau < 1:
        raise ConfigError("tau must be >= 1")
    rng = substream(seed, "drs-burnin", y)
    sn_vectors = gan.frozen_sn(model)
    labels = np.full(tau, y, dtype=np.int64)
    imgs = gan.generate_images(model, labels, rng)
    return log_density_ratio(model, head, imgs, labels, sn_vectors)


def burn_in(model, head, y: int, tau: int, seed: int) -> float:
    """Max log density ratio over tau generated class-y samples."""
    return float(_burn_in_log_ratios(model, head, y, tau, seed).max())


def acceptance_prob(
    log_ratio: float, log_m_bar: float, eps: float = DEFAULT_EPS, gamma: float = 0.0
) -> float:
    """sigmoid(F) with F = d - log(1 - exp(d - eps)) - gamma, d = log r - log M.

    Requires d <= 0 (the maximum is updated before this is called); a small
    positive d from float noise is tolerated and clamped.
    """
    d = log_ratio - log_m_bar
    if d > 1e-9:
        raise ShapeError(
            f"log ratio exceeds the running maximum by {d:.3e}; update M first"
        )
    d = min(d, 0.0)
    inner = -math.expm1(d - eps)  # 1 - exp(d - eps), accurately for tiny eps
    f_hat = d - math.log(inner) - gamma
    return float(_sigmoid64(np.float64(f_hat)))


def init_drs_state(
    model: gan.GanModel,
    head: CalibrationHead,
    classes: list[int] | range,
    seed: int = 0,
    eps: float = DEFAULT_EPS,
    tau: int = DEFAULT_TAU,
    gamma: float = 0.0,
    gamma_percentile: float | None = None,
) -> DrsState:
    """Burn-in every class; optionally set gamma per class from the burn-in.

    With ``gamma_percentile`` the per-class gamma becomes that percentile of
    the burn-in F values (gamma = 0 while collecting them), which pins the
    burn-in acceptance rate near (100 - q) percent.
    """
    k = head.num_classes
    state = DrsState.fresh(k, eps=eps, tau=tau)
    state.gamma[:] = gamma
    for y in classes:
        ratios = _burn_in_log_ratios(model, head, y, tau, seed)
        log_m = float(ratios.max())
        state.log_m_bar[y] = log_m
        if gamma_percentile is not None:
            d = np.minimum(ratios - log_m, 0.0)
            with np.errstate(divide="ignore"):
                f_vals = d - np.log(-np.expm1(d - eps))
            state.gamma[y] = float(np.percentile(f_vals, gamma_percentile))
    return state


def drs_sample(
    model: gan.GanModel,
    head: CalibrationHead,
    state: DrsState,
    y: int,
    n: int,
    seed: int = 0,
    max_attempts: int | None = None,
) -> tuple[np.ndarray, DrsState, AcceptanceRecord]:
    """Accept n class-y samples by filtered generation.

    Per candidate: generate, score, raise the class maximum, accept with
    probability sigmoid(F) against a seeded uniform draw. Exceeding the
    attempt budget raises a starvation error carrying the empirical rate.
    """
    if not math.isfinite(state.log_m_bar[y]):
        raise ConfigError(f"class {y} has no burn-in; run init_drs_state first")
    if max_attempts is None:
        max_attempts = DEFAULT_MAX_ATTEMPT_FACTOR * max(n, 1)
    c, h, w = model.image_shape
    out = np.empty((n, c, h, w), dtype=np.uint8)
    if n == 0:
        return out, state, AcceptanceRecord(y, 0, 0, 0.0, float(state.log_m_bar[y]))
    rng = substream(seed, "drs-sample", y)
    sn_vectors = gan.frozen_sn(model)
    label_one = np.array([y], dtype=np.int64)
    accepted = 0
    attempts = 0
    while accepted < n:
        if attempts >= max_attempts:
            rate = accepted / attempts
            raise StarvationError(
                f"class {y}: accepted {accepted}/{attempts} "
                f"(rate {rate:.4f}) before reaching n={n}",
                class_id=y,
                attempts=attempts,
                rate=rate,
            )
        attempts += 1
        img = gan.generate_images(model, label_one, rng)
        log_r = float(
            log_density_ratio(model, head, img, label_one, sn_vectors)[0]
        )
        if log_r > state.log_m_bar[y]:
            state.log_m_bar[y] = log_r
        p = acceptance_prob(
            log_r, float(state.log_m_bar[y]), state.eps, float(state.gamma[y])
        )
        psi = rng.uniform()
        if psi <= p:
            out[accepted] = img[0]
            accepted += 1
    state.attempts[y] += attempts
    state.accepted[y] += accepted
    record = AcceptanceRecord(
        class_id=y,
        accepted=accepted,
        attempts=attempts,
        rate=accepted / attempts,
        log_m_bar=float(state.log_m_bar[y]),
    )
    return out, state, record


def save_head_state(head: CalibrationHead, state: DrsState, path) -> None:
    """Persist the calibration head and sampling state as sorted JSON."""
    import json

    payload = {
        "scale": [float(v) for v in head.scale],
        "shift": [float(v) for v in head.shift],
        "log_m_bar": [float(v) for v in state.log_m_bar],
        "gamma": [float(v) for v in state.gamma],
        "eps": state.eps,
        "tau": state.tau,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_head_state(path) -> tuple[CalibrationHead, DrsState]:
    import json

    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    head = CalibrationHead(
        scale=np.asarray(payload["scale"], dtype=np.float64),
        shift=np.asarray(payload["shift"], dtype=np.float64),
    )
    k = head.num_classes
    state = DrsState.fresh(k, eps=payload["eps"], tau=payload["tau"])
    state.log_m_bar = np.asarray(payload["log_m_bar"], dtype=np.float64)
    state.gamma = np.asarray(payload["gamma"], dtype=np.float64)
    return head, state


def plain_sample(
    model: gan.GanModel, y_list, n_per_class: int, seed: int = 0
) -> LabeledImageSet:
    """Unfiltered class-conditional sampling, n_per_class each."""
    y_list = list(y_list)
    if any(y < 0 or y >= model.num_classes for y in y_list):
        raise ShapeError("label outside the model's class range")
    parts = []
    labels = []
    for y in y_list:
        rng = substream(seed, "plain-sample", y)
        batch_labels = np.full(n_per_class, y, dtype=np.int64)
        parts.append(gan.generate_images(model, batch_labels, rng))
        labels.append(batch_labels)
    return LabeledImageSet(
        pixels=np.concatenate(parts, axis=0),
        labels=np.concatenate(labels).astype(np.uint16),
        num_classes=int(max(y_list)) + 1,
        name="generated",
    )
