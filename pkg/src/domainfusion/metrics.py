"""Sample-quality metrics and outer-dataset selection.

Fréchet distance between Gaussian feature fits, an Inception-Score
analogue over a reference classifier's class posteriors, multi-scale
structural similarity, mean pairwise similarity as an (inverse) diversity
score, and their product: the selection metric for candidate outer
datasets (relevance times diversity weight; lower is better).

The matrix square root inside the Fréchet distance uses the symmetric
similarity form Tr sqrt(A^1/2 B A^1/2) with a cyclic Jacobi
eigendecomposition, so no external linear-algebra routines are involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels, nn
from .data import LabeledImageSet
from .errors import ConfigError, EigenSolverError, ShapeError
from .rng import substream

LUMA_COEFFS = (0.299, 0.587, 0.114)

# per-scale exponents from the original multi-scale similarity work,
# truncated to the first M scales and renormalized to sum 1
STANDARD_SCALE_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

EXHAUSTIVE_PAIR_LIMIT = 512

_EIG_ERROR_FLOOR = -1e-8
_FID_NEG_FLOOR = -1e-6
_JACOBI_TOL = 1e-10
_JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class FeatureStats:
    """Mean vector and unbiased covariance of extracted features."""

    mu: np.ndarray
    sigma: np.ndarray
    n: int

    def __post_init__(self):
        if self.sigma.shape != (self.mu.shape[0], self.mu.shape[0]):
            raise ShapeError("sigma must be square and match mu")
        if self.n < 2:
            raise ShapeError("need at least two samples for covariance")
        asym = float(np.abs(self.sigma - self.sigma.T).max())
        if asym > 1e-9:
            raise ShapeError(f"sigma asymmetric by {asym}")


# ---------------------------------------------------------------------------
# Feature extractors.

class RawPixelExtractor:
    """Features are the flattened [0,1] pixels; posteriors are uniform.

    Exists for oracle tests where feature statistics must have a closed
    form; the trained reference extractor is the production path.
    """

    def __init__(self, num_classes: int = 1):
        self.num_classes = num_classes
        self.feature_dim = None  # depends on image size

    def embed(self, images: LabeledImageSet) -> np.ndarray:
        return images.as_float_rows().astype(np.float64)

    def class_probs(self, images: LabeledImageSet) -> np.ndarray:
        n = len(images)
        return np.full((n, self.num_classes), 1.0 / self.num_classes)


@dataclass
class ReferenceExtractor:
    """Small trained classifier; penultimate activations are the features."""

    spec: nn.NetworkSpec
    params: nn.ParamSet
    num_classes: int
    feature_dim: int

    def _forward(self, images: LabeledImageSet):
        rows = images.as_float_rows()
        out, cache = nn.forward(self.spec, self.params, rows)
        return out, cache

    def embed(self, images: LabeledImageSet) -> np.ndarray:
        _, cache = self._forward(images)
        return cache.acts[-2].astype(np.float64)

    def class_probs(self, images: LabeledImageSet) -> np.ndarray:
        logits, _ = self._forward(images)
        logits = logits.astype(np.float64)
        shifted = logits - logits.max(axis=1, keepdims=True)
        ez = np.exp(shifted)
        return ez / ez.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class ExtractorConfig:
    hidden: int = 128
    feature_dim: int = 64
    steps: int = 3000
    batch: int = 128
    lr: float = 1e-3
    beta1: float = 0.0
    beta2: float = 0.9


def union_datasets(sets: list[LabeledImageSet], name: str = "union") -> LabeledImageSet:
    """Concatenate sets with each set's labels offset into a fresh range."""
    if not sets:
        raise ConfigError("need at least one dataset")
    shape = sets[0].image_shape
    pixels, labels = [], []
    offset = 0
    for ds in sets:
        if ds.image_shape != shape:
            raise ShapeError("datasets have differing image shapes")
        pixels.append(ds.pixels)
        labels.append(ds.labels.astype(np.int64) + offset)
        offset += ds.num_classes
    return LabeledImageSet(
        pixels=np.concatenate(pixels, axis=0),
        labels=np.concatenate(labels).astype(np.uint16),
        num_classes=offset,
        name=name,
    )


def train_reference_extractor(
    full_sets: list[LabeledImageSet],
    seed: int,
    cfg: ExtractorConfig = ExtractorConfig(),
) -> ReferenceExtractor:
    """Train the shared feature/posterior source on the domain union.

    Fixed step budget, softmax cross-entropy, Adam; deterministic in seed
    and frozen afterwards.
    """
    union = union_datasets(full_sets)
    if union.num_classes < 2:
        raise ConfigError("extractor training needs at least two classes")
    n_pixels = int(np.prod(union.image_shape))
    spec = nn.NetworkSpec(
        layers=(
            nn.LayerSpec(n_pixels, cfg.hidden, "relu"),
            nn.LayerSpec(cfg.hidden, cfg.feature_dim, "relu"),
            nn.LayerSpec(cfg.feature_dim, union.num_classes, "identity"),
        )
    )
    params = nn.init_params(spec, seed, stream_tag="extractor")
    state = nn.AdamState.init_like(params)
    rows = union.as_float_rows()
    labels = union.labels.astype(np.int64)
    batch_rng = substream(seed, "extractor", "batch")
    for step in range(cfg.steps):
        idx = batch_rng.integers(0, rows.shape[0], size=cfg.batch)
        x = rows[idx]
        y = labels[idx]
        out, cache = nn.forward(spec, params, x)
        _, dy = nn.loss_and_grad("softmax_ce", out, y)
        grads, _ = nn.backward(spec, params, cache, dy.astype(out.dtype))
        lr = nn.lr_schedule(step, cfg.steps, cfg.lr)
        nn.adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2)
    return ReferenceExtractor(
        spec=spec,
        params=params,
        num_classes=union.num_classes,
        feature_dim=cfg.feature_dim,
    )


def save_extractor(extractor: ReferenceExtractor, path) -> None:
    nn.save_dfck(dict(extractor.params.items()), path)
    meta = {
        "spec": {
            "layers": [
                {
                    "in": l.in_width,
                    "out": l.out_width,
                    "activation": l.activation,
                    "spectral_norm": l.spectral_norm,
                }
                for l in extractor.spec.layers
            ]
        },
        "num_classes": extractor.num_classes,
        "feature_dim": extractor.feature_dim,
    }
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_extractor(path) -> ReferenceExtractor:
    tensors = nn.load_dfck(path)
    with open(str(path) + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    spec = nn.NetworkSpec(
        layers=tuple(
            nn.LayerSpec(l["in"], l["out"], l["activation"], l["spectral_norm"])
            for l in meta["spec"]["layers"]
        )
    )
    return ReferenceExtractor(
        spec=spec,
        params=nn.ParamSet(tensors),
        num_classes=meta["num_classes"],
        feature_dim=meta["feature_dim"],
    )


# ---------------------------------------------------------------------------
# Fréchet distance.

def feature_stats(images: LabeledImageSet, extractor) -> FeatureStats:
    """Sample mean and unbiased covariance (divisor n-1) of features."""
    feats = np.asarray(extractor.embed(images), dtype=np.float64)
    n = feats.shape[0]
    if n < 2:
        raise ShapeError("need at least two images for feature statistics")
    mu = feats.mean(axis=0)
    centered = feats - mu
    sigma = centered.T @ centered / (n - 1)
    sigma = (sigma + sigma.T) / 2.0
    return FeatureStats(mu=mu, sigma=sigma, n=n)


def _sym_eigh(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scale = max(1.0, float(np.linalg.norm(mat)))
    vals, vecs, off = kernels.jacobi_eigh(mat, _JACOBI_TOL * scale, _JACOBI_MAX_SWEEPS)
    if off > _JACOBI_TOL * scale:
        raise EigenSolverError(
            f"Jacobi did not converge: off-diagonal {off:.3e} after "
            f"{_JACOBI_MAX_SWEEPS} sweeps"
        )
    return vals, vecs


def _clamp_spectrum(vals: np.ndarray, what: str) -> np.ndarray:
    low = float(vals.min())
    if low < _EIG_ERROR_FLOOR:
        raise EigenSolverError(f"significantly negative eigenvalue {low:.3e} in {what}")
    return np.maximum(vals, 0.0)


def fid_from_stats(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)).

    The cross term is evaluated as Tr sqrt(Sa^1/2 Sb Sa^1/2) via two
    symmetric eigendecompositions; tiny negative eigenvalues are clamped,
    larger ones are errors.
    """
    if a.mu.shape != b.mu.shape:
        raise ShapeError("feature dimensions differ")
    vals_a, vecs_a = _sym_eigh(a.sigma)
    vals_a = _clamp_spectrum(vals_a, "covariance A")
    a_half = (vecs_a * np.sqrt(vals_a)) @ vecs_a.T
    inner = a_half @ b.sigma @ a_half
    inner = (inner + inner.T) / 2.0
    vals_m, _ = _sym_eigh(inner)
    vals_m = _clamp_spectrum(vals_m, "similarity form")
    trace_sqrt = float(np.sqrt(vals_m).sum())
    delta = a.mu - b.mu
    value = float(delta @ delta) + float(np.trace(a.sigma)) + float(
        np.trace(b.sigma)
    ) - 2.0 * trace_sqrt
    if value < _FID_NEG_FLOOR:
        raise EigenSolverError(f"Fréchet distance came out negative: {value:.3e}")
    return max(value, 0.0)


def fid(x_a: LabeledImageSet, x_b: LabeledImageSet, extractor) -> float:
    return fid_from_stats(feature_stats(x_a, extractor), feature_stats(x_b, extractor))


# ---------------------------------------------------------------------------
# Inception-Score analogue.

def inception_score_from_probs(probs: np.ndarray) -> float:
    """exp(mean KL(p(y|x) || mean posterior)); zero entries contribute 0."""
    probs = np.asarray(probs, dtype=np.float64)
    marginal = probs.mean(axis=0)
    log_marginal = np.where(marginal > 0, np.log(np.where(marginal > 0, marginal, 1.0)), 0.0)
    log_probs = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    kl_terms = np.where(probs > 0, probs * (log_probs - log_marginal), 0.0)
    return float(np.exp(kl_terms.sum(axis=1).mean()))


def inception_score(images: LabeledImageSet, extractor) -> float:
    if len(images) < 2:
        raise ShapeError("need at least two images")
    return inception_score_from_probs(extractor.class_probs(images))


# ---------------------------------------------------------------------------
# Multi-scale structural similarity.

@dataclass(frozen=True)
class MsSsimConfig:
    scales: int = 3
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if not 1 <= self.scales <= len(STANDARD_SCALE_WEIGHTS):
            raise ConfigError(
                f"scales must be in [1, {len(STANDARD_SCALE_WEIGHTS)}]"
            )
        if self.window_size % 2 != 1 or self.window_size < 3:
            raise ConfigError("window_size must be odd and >= 3")

    @property
    def weights(self) -> np.ndarray:
        w = np.array(STANDARD_SCALE_WEIGHTS[: self.scales], dtype=np.float64)
        return w / w.sum()

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2.0

    def window(self) -> np.ndarray:
        half = self.window_size // 2
        xs = np.arange(self.window_size) - half
        k = np.exp(-(xs * xs) / (2.0 * self.window_sigma**2))
        return k / k.sum()


def luma_plane(image: np.ndarray) -> np.ndarray:
    """(C,H,W) or (H,W) byte/float image to a float64 luma plane."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim != 3:
        raise ShapeError(f"expected (C,H,W) or (H,W), got {img.shape}")
    if img.shape[0] == 1:
        return img[0]
    if img.shape[0] == 3:
        r, g, b = LUMA_COEFFS
        return r * img[0] + g * img[1] + b * img[2]
    raise ShapeError(f"channel count must be 1 or 3, got {img.shape[0]}")


def _combine_components(comps: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Exponent-weighted product; negative c/s floored at 0, result in [0,1]."""
    m = weights.shape[0]
    lum = np.clip(comps[:, 0], 0.0, None)
    value = lum ** weights[m - 1]
    for scale in range(m):
        c = np.clip(comps[:, 1 + scale], 0.0, None)
        s = np.clip(comps[:, 1 + m + scale], 0.0, None)
        value = value * (c ** weights[scale]) * (s ** weights[scale])
    return np.clip(value, 0.0, 1.0)


def ms_ssim(x_img, y_img, config: MsSsimConfig = MsSsimConfig()) -> float:
    """Multi-scale similarity of two images, in [0, 1]."""
    xp = luma_plane(x_img)
    yp = luma_plane(y_img)
    if xp.shape != yp.shape:
        raise ShapeError(f"image shapes differ: {xp.shape} vs {yp.shape}")
    comps = kernels.msssim_components(
        np.ascontiguousarray(xp[None]),
        np.ascontiguousarray(yp[None]),
        config.window(),
        config.c1,
        config.c2,
        config.c3,
        config.scales,
    )
    return float(_combine_components(comps, config.weights)[0])


def _pairwise_mean(
    images: LabeledImageSet,
    config: MsSsimConfig,
    pair_budget: int,
    seed: int,
    chunk: int = 512,
) -> tuple[float, int]:
    """Mean similarity over ordered pairs i != j; returns (mean, pairs used).

    Exhaustive (all n^2 - n ordered pairs) up to the exhaustive limit,
    otherwise a seeded uniform sample of pair_budget ordered pairs.
    """
    n = len(images)
    if n < 2:
        raise ShapeError("need at least two images to measure diversity")
    planes = np.stack([luma_plane(img) for img in images.pixels])
    if n <= EXHAUSTIVE_PAIR_LIMIT:
        grid_i, grid_j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        mask = grid_i != grid_j
        idx_i = grid_i[mask]
        idx_j = grid_j[mask]
    else:
        rng = substream(seed, "msssim-pairs")
        idx_i = rng.integers(0, n, size=pair_budget)
        idx_j = rng.integers(0, n, size=pair_budget)
        clash = idx_i == idx_j
        while clash.any():
            idx_j[clash] = rng.integers(0, n, size=int(clash.sum()))
            clash = idx_i == idx_j
    total = 0.0
    count = idx_i.shape[0]
    window = config.window()
    weights = config.weights
    for start in range(0, count, chunk):
        sel_i = idx_i[start : start + chunk]
        sel_j = idx_j[start : start + chunk]
        comps = kernels.msssim_components(
            np.ascontiguousarray(planes[sel_i]),
            np.ascontiguousarray(planes[sel_j]),
            window,
            config.c1,
            config.c2,
            config.c3,
            config.scales,
        )
        total += float(_combine_components(comps, weights).sum())
    return total / count, count


def mean_ms_ssim(
    images: LabeledImageSet,
    config: MsSsimConfig = MsSsimConfig(),
    pair_budget: int = 100_000,
    seed: int = 0,
) -> float:
    """Dataset diversity score: mean pairwise similarity (1 = no diversity)."""
    value, _ = _pairwise_mean(images, config, pair_budget, seed)
    return value


# ---------------------------------------------------------------------------
# Outer-dataset selection.

@dataclass(frozen=True)
class MetricReport:
    candidate: str
    fid: float
    ssim_bar: float
    metric_m: float
    pairs: int
    seed: int

    def __post_init__(self):
        if abs(self.metric_m - self.fid * self.ssim_bar) > 1e-9:
            raise ShapeError("metric_m must equal fid * ssim_bar")


def combine_metric(fid_value: float, ssim_bar: float) -> float:
    """Relevance-times-diversity composition; lower is a better candidate."""
    return fid_value * ssim_bar


def metric_m(
    target: LabeledImageSet,
    candidate: LabeledImageSet,
    extractor,
    config: MsSsimConfig = MsSsimConfig(),
    pair_budget: int = 100_000,
    seed: int = 0,
) -> MetricReport:
    """Score one candidate; note the diversity term uses the candidate only."""
    fid_value = fid(target, candidate, extractor)
    ssim_bar, pairs = _pairwise_mean(candidate, config, pair_budget, seed)
    return MetricReport(
        candidate=candidate.name,
        fid=fid_value,
        ssim_bar=ssim_bar,
        metric_m=combine_metric(fid_value, ssim_bar),
        pairs=pairs,
        seed=seed,
    )


def select_outer(
    target: LabeledImageSet,
    candidates: list[LabeledImageSet],
    extractor,
    config: MsSsimConfig = MsSsimConfig(),
    pair_budget: int = 100_000,
    seed: int = 0,
) -> list[MetricReport]:
    """Rank candidates ascending by score; head of the list is the pick."""
    if not candidates:
        raise ConfigError("candidate list is empty")
    reports = [
        metric_m(target, cand, extractor, config, pair_budget, seed)
        for cand in candidates
    ]
    reports.sort(key=lambda r: (r.metric_m, r.candidate))
    return reports


METRIC_REPORT_HEADER = "candidate,fid,ssim_bar,metric_m,pairs,seed"


def write_metric_reports(reports: list[MetricReport], path) -> None:
    """Append rows to the report file, writing the header when new."""
    import os

    new_file = not os.path.exists(path)
    with open(path, "a", encoding="ascii") as fh:
        if new_file:
            fh.write(METRIC_REPORT_HEADER + "\n")
        for r in reports:
            fh.write(
                f"{r.candidate},{r.fid!r},{r.ssim_bar!r},{r.metric_m!r},"
                f"{r.pairs},{r.seed}\n"
            )
