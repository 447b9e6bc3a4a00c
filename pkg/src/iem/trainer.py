"""Desk-scale differentiable segmentation model and the incremental loop.

The model is a per-pixel logistic classifier over four local features:
raw intensity, 3x3 local mean, 3x3 local std, and a constant bias input.
It exists so the mining loop can be exercised and verified end to end at
desk scale; the loop itself only needs forward passes and SGD updates, so
any richer model with the same two entry points can be substituted.

Checkpoints are text: a header line, the feature count, then one weight
per line with 17 significant digits.
"""

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .errors import DataError, NumericError
from .kernels import local_mean_std
from .pgm import ImageCache
from .pool import add_chunk, record_training_update, refresh_errors
from .selection import partition_number_for, select_subset

MODEL_FORMAT = "iem-model/1"
N_FEATURES = 4

# keeps sigmoid output strictly inside (0,1) in float64
_LOGIT_CLIP = 35.0


@dataclass(eq=False)
class ModelParams:
    """Weights over (raw, local mean, local std, bias); version counts SGD steps."""

    weights: np.ndarray
    version: int = 0


def init_params():
    return ModelParams(weights=np.zeros(N_FEATURES), version=0)


@dataclass(frozen=True)
class AugmentRecipe:
    """Which views an example can present during training and error refresh."""

    horizontal_flip: bool = True
    vertical_flip: bool = True
    jitter: float = 0.1  # max absolute global intensity offset; 0 disables

    def __post_init__(self):
        if self.jitter < 0:
            raise ValueError("jitter amplitude must be >= 0")

    @property
    def n_views(self):
        return 1 + self.horizontal_flip + self.vertical_flip + (self.jitter > 0)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    epochs_per_iteration: int = 1
    recipe: AugmentRecipe = field(default_factory=AugmentRecipe)

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs_per_iteration < 1:
            raise ValueError("epochs_per_iteration must be >= 1")


def featurize(img):
    """Per-pixel feature stack (H, W, 4): raw, 3x3 mean, 3x3 std, constant 1."""
    img = np.asarray(img, dtype=np.float64)
    mean, std = local_mean_std(img)
    feats = np.empty(img.shape + (N_FEATURES,))
    feats[..., 0] = img
    feats[..., 1] = mean
    feats[..., 2] = std
    feats[..., 3] = 1.0
    return feats


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -_LOGIT_CLIP, _LOGIT_CLIP)))


def forward(params, img):
    """Probability map sigmoid(w . features), strictly inside (0,1)."""
    return _sigmoid(featurize(img) @ params.weights)


def forward_features(params, feats):
    return _sigmoid(feats @ params.weights)


def gradient(params, img, mask):
    """Gradient of the mean pixel cross-entropy w.r.t. the weights.

    Closed form (1/HW) * sum over pixels of (p - y) * feature.
    """
    mask = np.asarray(mask, dtype=np.bool_)
    feats = featurize(img)
    p = forward_features(params, feats)
    residual = p - mask
    return (residual[..., None] * feats).sum(axis=(0, 1)) / residual.size


def augment(img, mask, recipe, rng, j):
    """The j-th augmented view of an image/mask pair, j >= 1.

    Views are ordered identity, horizontal flip, vertical flip, jitter,
    restricted to those the recipe enables; j wraps modulo the view
    count. Flips transform image and mask identically; jitter adds one
    rng-drawn global offset to the image only, clamped to [0,1].
    """
    if j < 1:
        raise ValueError(f"view index must be >= 1, got {j}")
    views = ["identity"]
    if recipe.horizontal_flip:
        views.append("hflip")
    if recipe.vertical_flip:
        views.append("vflip")
    if recipe.jitter > 0:
        views.append("jitter")
    view = views[(j - 1) % len(views)]
    if view == "hflip":
        return np.fliplr(img).copy(), np.fliplr(mask).copy()
    if view == "vflip":
        return np.flipud(img).copy(), np.flipud(mask).copy()
    if view == "jitter":
        delta = rng.uniform(-recipe.jitter, recipe.jitter)
        return np.clip(img + delta, 0.0, 1.0), mask.copy()
    return img.copy(), mask.copy()


def train_on_subset(params, examples, cfg, rng):
    """SGD over (image, mask) pairs, one rng-chosen view per example per epoch.

    Examples are visited in a fresh shuffled order each epoch. Raises
    NumericError if an update produces non-finite weights (learning rate
    too high for the data).
    """
    if not examples:
        raise ValueError("training subset must be nonempty")
    n_views = cfg.recipe.n_views
    for _ in range(cfg.epochs_per_iteration):
        order = rng.permutation(len(examples))
        for idx in order:
            img, mask = examples[idx]
            j = int(rng.integers(1, n_views + 1))
            aug_img, aug_mask = augment(img, mask, cfg.recipe, rng, j)
            params.weights = params.weights - cfg.learning_rate * gradient(
                params, aug_img, aug_mask
            )
            params.version += 1
            if not np.all(np.isfinite(params.weights)):
                raise NumericError(
                    "non-finite weights after SGD step "
                    f"{params.version} (learning rate {cfg.learning_rate} too high)"
                )
    return params


def augmented_error_terms(params, img, mask, selcfg, recipe, rng):
    """Error term of each of the t augmented views under the current model."""
    errors = []
    for j in range(1, selcfg.t + 1):
        aug_img, aug_mask = augment(img, mask, recipe, rng, j)
        breakdown = metrics.evaluate_example(
            forward(params, aug_img), aug_mask,
            tau=selcfg.tau, variant=selcfg.variant,
            threshold=selcfg.binarize_threshold,
            weights=selcfg.error_weights,
        )
        errors.append(breakdown.E)
    return errors


def example_rng(seed, stage, iteration, example_id):
    """Stream used for one example's augmented error views.

    Derived from stable indices only, so the errors behind any recorded E
    can be recomputed offline from the saved model and the trace.
    """
    return np.random.default_rng(
        [seed, stage, iteration, zlib.crc32(example_id.encode())]
    )


def incremental_step(pool, params, selcfg, traincfg, new_chunk, cache=None,
                     trace=None):
    """Run one full incremental stage for a newly arrived chunk.

    Ingests the chunk, sets K to its positive count, refreshes E over the
    whole pool with the incoming model, then runs iterations_per_step
    rounds of select / train / per-example error update. Per-example
    updates commit in id order. ``trace``, when given, is called with
    (stage, iteration, subset) after each round.
    """
    if cache is None:
        cache = ImageCache()
    stage = 0 if not pool.records else pool.stage + 1
    K = partition_number_for(selcfg, new_chunk)
    add_chunk(pool, new_chunk, stage)
    refresh_errors(pool, lambda img: forward(params, img), selcfg, cache)
    rng = np.random.default_rng([selcfg.seed, stage])
    for iteration in range(selcfg.iterations_per_step):
        subset = select_subset(pool, K, rng)
        ids = subset.all_ids()
        if ids:
            examples = [
                cache.pair(pool.record_for(i).image_ref,
                           pool.record_for(i).mask_ref)
                for i in ids
            ]
            params = train_on_subset(params, examples, traincfg, rng)
            for example_id in sorted(ids):
                record = pool.record_for(example_id)
                img, mask = cache.pair(record.image_ref, record.mask_ref)
                errors = augmented_error_terms(
                    params, img, mask, selcfg, traincfg.recipe,
                    example_rng(selcfg.seed, stage, iteration, example_id),
                )
                record_training_update(pool, example_id, errors, selcfg.d)
        if trace is not None:
            trace(stage, iteration, subset)
    return pool, params


def save_params(params, path):
    lines = [MODEL_FORMAT, str(len(params.weights))]
    lines.extend(f"{w:.17g}" for w in params.weights)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(lines) < 2 or lines[0] != MODEL_FORMAT:
        raise DataError(f"{path}: bad checkpoint header")
    try:
        count = int(lines[1])
        weights = np.array([float(v) for v in lines[2 : 2 + count]])
    except ValueError as exc:
        raise DataError(f"{path}: bad checkpoint value") from exc
    if len(weights) != count:
        raise DataError(f"{path}: truncated checkpoint")
    return ModelParams(weights=weights, version=0)
