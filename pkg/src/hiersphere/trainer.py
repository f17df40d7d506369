"""Training loops: the two-stage pipeline and single-loss baselines.

Stage 1 fits the encoder plus a sub-class anchor matrix under the adaptive
cosine classification loss; stage 2 fine-tunes the encoder alone with the
thresholded pairwise cosine loss. Baselines run one stage with triplet,
plain scaled-softmax, cosface, arcface, or adacos objectives so the
two-stage result has something to beat.
"""

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .encoder import (
    EncoderConfig,
    EncoderParams,
    OptimizerConfig,
    adam_step_array,
    encoder_backward_step,
    encoder_forward_batch,
    init_params,
)
from .errors import (
    BatchTooSmallError,
    DatasetTooSmallError,
    InvalidClassCountError,
    InvalidConfigError,
    NoValidTripletsError,
)
from .labels import HierLabel
from .losses import (
    AdaCosState,
    LossOutput,
    adacos_loss,
    angular_margin_loss,
    pairwise_cosine_loss,
)
from .rng import STREAM_CLASSIFIER_INIT, STREAM_SHUFFLE, make_rng

LOSS_KINDS = ("adacos", "softmax", "cosface", "arcface", "triplet")

MARGIN_SCALE = 30.0
DEFAULT_MARGINS = {"softmax": 0.0, "cosface": 0.35, "arcface": 0.5}

# stage-2 epochs use shuffle streams disjoint from stage 1 regardless of
# how many stage-1 epochs actually ran
STAGE2_SHUFFLE_OFFSET = 1_000_000


@dataclass(frozen=True)
class TrainConfig:
    stage1_epochs: int = 20
    stage2_epochs: int = 20
    batch_size: int = 32
    t: float = 0.3
    loss_kind: str = "adacos"
    triplet_margin: float = 1.0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    stage2_learning_rate: float | None = None
    seed: int = 0
    shuffle: bool = True
    encoder: EncoderConfig | None = None
    same_class_neutral_pair_positive: bool = False

    def __post_init__(self):
        if self.stage1_epochs < 0 or self.stage2_epochs < 0:
            raise InvalidConfigError("epoch counts must be >= 0")
        if self.batch_size < 2:
            raise InvalidConfigError("batch_size must be >= 2")
        # t = 1 is allowed as the degenerate saturated band
        if not 0.0 <= self.t <= 1.0:
            raise InvalidConfigError(f"t must lie in [0, 1], got {self.t}")
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidConfigError(f"loss_kind must be one of {LOSS_KINDS}")
        if self.triplet_margin < 0:
            raise InvalidConfigError("triplet_margin must be non-negative")
        if self.stage2_learning_rate is not None and self.stage2_learning_rate <= 0:
            raise InvalidConfigError("stage2_learning_rate must be positive")

    def stage2_optimizer(self) -> OptimizerConfig:
        lr = self.stage2_learning_rate
        if lr is None:
            lr = self.optimizer.learning_rate / 10.0
        return replace(self.optimizer, learning_rate=lr)

    def to_dict(self) -> dict:
        return {
            "stage1_epochs": self.stage1_epochs,
            "stage2_epochs": self.stage2_epochs,
            "batch_size": self.batch_size,
            "t": self.t,
            "loss_kind": self.loss_kind,
            "triplet_margin": self.triplet_margin,
            "optimizer": {
                "learning_rate": self.optimizer.learning_rate,
                "beta1": self.optimizer.beta1,
                "beta2": self.optimizer.beta2,
                "epsilon": self.optimizer.epsilon,
            },
            "stage2_learning_rate": self.stage2_learning_rate,
            "seed": self.seed,
            "shuffle": self.shuffle,
            "encoder": None
            if self.encoder is None
            else {
                "input_dim": self.encoder.input_dim,
                "hidden_dims": list(self.encoder.hidden_dims),
                "output_dim": self.encoder.output_dim,
                "activation": self.encoder.activation,
            },
            "same_class_neutral_pair_positive": self.same_class_neutral_pair_positive,
        }


@dataclass
class TrainReport:
    stage1_epoch_losses: list[float] = field(default_factory=list)
    stage2_epoch_losses: list[float] = field(default_factory=list)
    scale_trajectory: list[float] = field(default_factory=list)
    wall_time_seconds: float = 0.0
    config: dict = field(default_factory=dict)
    steps: int = 0
    skipped_batches: int = 0
    model_tag: str = ""

    def to_dict(self, include_wall_time: bool = False) -> dict:
        """Wall time is off by default so reports stay run-to-run identical."""
        doc = {
            "model_tag": self.model_tag,
            "stage1_epoch_losses": self.stage1_epoch_losses,
            "stage2_epoch_losses": self.stage2_epoch_losses,
            "scale_trajectory": self.scale_trajectory,
            "steps": self.steps,
            "skipped_batches": self.skipped_batches,
            "config": self.config,
        }
        if include_wall_time:
            doc["wall_time_seconds"] = self.wall_time_seconds
        return doc


def make_batches(
    dataset,
    batch_size: int,
    seed: int,
    shuffle: bool = True,
    *,
    epoch: int = 0,
    merge_trailing_singleton: bool = False,
) -> list[np.ndarray]:
    """Seeded permutation cut into contiguous chunks of batch_size indices.

    With merge_trailing_singleton a final size-1 chunk is appended to the
    previous batch, since pair losses need at least two samples.
    """
    n = dataset if isinstance(dataset, int) else len(dataset)
    if n < 2:
        raise DatasetTooSmallError(f"need at least 2 samples, got {n}")
    if batch_size < 2:
        raise InvalidConfigError("batch_size must be >= 2")

    order = np.arange(n)
    if shuffle:
        make_rng(seed, STREAM_SHUFFLE, epoch).shuffle(order)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if merge_trailing_singleton and len(batches) > 1 and batches[-1].size == 1:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def _resolve_encoder_config(dataset: Dataset, config: TrainConfig) -> EncoderConfig:
    # the train seed is the single seed source; an explicit encoder config
    # contributes architecture only
    if config.encoder is None:
        return EncoderConfig(input_dim=dataset.input_dim, seed=config.seed)
    if config.encoder.input_dim != dataset.input_dim:
        raise InvalidConfigError(
            f"encoder input_dim {config.encoder.input_dim} != dataset dim {dataset.input_dim}"
        )
    return replace(config.encoder, seed=config.seed)


def _require_trainable(dataset: Dataset) -> None:
    if len(dataset) < 2:
        raise DatasetTooSmallError(f"need at least 2 samples, got {len(dataset)}")
    if 3 * dataset.num_classes < 2:
        raise InvalidClassCountError("need at least one class")


class _AnchorAdam:
    """Adam buffers for a standalone anchor matrix (class weights)."""

    def __init__(self, shape: tuple[int, ...]):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray, opt: OptimizerConfig) -> None:
        self.t += 1
        adam_step_array(theta, grad, self.m, self.v, self.t, opt)


def triplet_batch_loss(
    embeddings: np.ndarray,
    labels: list[HierLabel],
    margin: float,
) -> tuple[LossOutput, int]:
    """Mean hinge over every valid in-batch triplet, with its gradient.

    Valid: anchor and positive distinct samples of one sub-class, negative
    from any other sub-class. Returns the triplet count; raises
    NoValidTriplets when no sub-class has two members.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    b = emb.shape[0]
    sub = np.asarray([lb.subclass_index for lb in labels], dtype=np.int64)
    same = sub[:, None] == sub[None, :]
    eye = np.eye(b, dtype=bool)

    diff = emb[:, None, :] - emb[None, :, :]
    dist = np.sqrt(np.maximum((diff * diff).sum(axis=2), 0.0))

    # mask[a, p, n]: hinge strictly positive on a valid triplet
    valid = (same & ~eye)[:, :, None] & (~same)[None, :, :]
    # broadcasting: hinge[a, p, n] = d(a,p) - d(a,n) + margin
    hinge = dist[:, :, None] - dist[:, None, :] + margin
    if not valid.any():
        raise NoValidTripletsError("no sub-class in this batch has two members")
    num_triplets = int(valid.sum())

    active = valid & (hinge > 0.0)
    value = float(hinge[active].sum() / num_triplets)

    # dL/d dist as a matrix: +1/T at (a,p), -1/T at (a,n) per active triplet
    w = np.zeros((b, b))
    pos_counts = active.sum(axis=2)
    neg_counts = active.sum(axis=1)
    w += pos_counts / num_triplets
    w -= neg_counts / num_triplets

    # distance is symmetric in its two rows; fold both orientations, then
    # d dist_ij / d e_i = (e_i - e_j)/dist_ij with zero at coincident points
    s = w + w.T
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(dist > 0.0, 1.0 / dist, 0.0)
    coeff = s * inv
    grad = coeff.sum(axis=1, keepdims=True) * emb - coeff @ emb
    return LossOutput(value=value, grad_embeddings=grad), num_triplets


def train_stage1(dataset: Dataset, config: TrainConfig):
    """Encoder + adaptive-cosine anchors on the 3K flattened sub-classes.

    Anchor rows are re-normalized to unit length after every optimizer step.
    Returns (EncoderParams, AdaCosState, TrainReport).
    """
    _require_trainable(dataset)
    num_subclasses = 3 * dataset.num_classes
    if num_subclasses < 2:
        raise InvalidClassCountError("need at least 2 sub-classes")

    enc_cfg = _resolve_encoder_config(dataset, config)
    params = init_params(enc_cfg)
    state = AdaCosState.initialize(
        num_subclasses,
        enc_cfg.output_dim,
        make_rng(config.seed, STREAM_CLASSIFIER_INIT),
        dynamic=True,
    )

    x = dataset.feature_matrix()
    labels = dataset.labels()
    anchor_opt = _AnchorAdam(state.weights.shape)
    report = TrainReport(config=config.to_dict(), model_tag="adacos")

    start = time.perf_counter()
    for epoch in range(config.stage1_epochs):
        batches = make_batches(
            dataset, config.batch_size, config.seed, config.shuffle, epoch=epoch
        )
        batch_losses = []
        for idx in batches:
            bx = x[idx]
            emb = encoder_forward_batch(params, bx)
            out = adacos_loss(state, emb, [labels[i] for i in idx])
            params = encoder_backward_step(params, bx, out.grad_embeddings, config.optimizer)
            anchor_opt.step(state.weights, out.grad_weights, config.optimizer)
            state.renormalize_weights()
            batch_losses.append(out.value)
            report.steps += 1
        report.stage1_epoch_losses.append(float(np.mean(batch_losses)))
        report.scale_trajectory.append(state.scale)
    report.wall_time_seconds = time.perf_counter() - start
    return params, state, report


def train_stage2(dataset: Dataset, params: EncoderParams, config: TrainConfig):
    """Pairwise cosine fine-tuning of the encoder only.

    Normally follows stage 1, but accepts any starting parameters (fresh ones
    give the from-scratch ablation). Returns (EncoderParams, TrainReport).
    """
    _require_trainable(dataset)
    x = dataset.feature_matrix()
    labels = dataset.labels()
    opt = config.stage2_optimizer()
    params = params.copy()
    report = TrainReport(config=config.to_dict(), model_tag="two-stage")

    start = time.perf_counter()
    for epoch in range(config.stage2_epochs):
        batches = make_batches(
            dataset,
            config.batch_size,
            config.seed,
            config.shuffle,
            epoch=STAGE2_SHUFFLE_OFFSET + epoch,
            merge_trailing_singleton=True,
        )
        batch_losses = []
        for idx in batches:
            if idx.size < 2:
                raise BatchTooSmallError("pair loss needs at least 2 samples per batch")
            bx = x[idx]
            emb = encoder_forward_batch(params, bx)
            out = pairwise_cosine_loss(
                emb,
                [labels[i] for i in idx],
                t=config.t,
                same_class_neutral_pair_positive=config.same_class_neutral_pair_positive,
            )
            params = encoder_backward_step(params, bx, out.grad_embeddings, opt)
            batch_losses.append(out.value)
            report.steps += 1
        report.stage2_epoch_losses.append(float(np.mean(batch_losses)))
    report.wall_time_seconds = time.perf_counter() - start
    return params, report


def train_two_stage(dataset: Dataset, config: TrainConfig):
    """Stage 1 then stage 2; the merged report carries both loss curves."""
    params, state, r1 = train_stage1(dataset, config)
    params, r2 = train_stage2(dataset, params, config)
    report = TrainReport(
        stage1_epoch_losses=r1.stage1_epoch_losses,
        stage2_epoch_losses=r2.stage2_epoch_losses,
        scale_trajectory=r1.scale_trajectory,
        wall_time_seconds=r1.wall_time_seconds + r2.wall_time_seconds,
        config=config.to_dict(),
        steps=r1.steps + r2.steps,
        skipped_batches=r1.skipped_batches + r2.skipped_batches,
        model_tag="two-stage",
    )
    return params, state, report


def train_baseline(dataset: Dataset, config: TrainConfig):
    """Single-stage training with config.loss_kind.

    Returns (EncoderParams, AdaCosState | None, TrainReport); the state is
    present only for the adacos kind, where this is definitionally stage 1.
    """
    if config.loss_kind == "adacos":
        params, state, report = train_stage1(dataset, config)
        return params, state, report

    _require_trainable(dataset)
    enc_cfg = _resolve_encoder_config(dataset, config)
    params = init_params(enc_cfg)
    x = dataset.feature_matrix()
    labels = dataset.labels()
    report = TrainReport(config=config.to_dict(), model_tag=config.loss_kind)

    num_subclasses = 3 * dataset.num_classes
    weights = None
    anchor_opt = None
    if config.loss_kind in ("softmax", "cosface", "arcface"):
        raw = make_rng(config.seed, STREAM_CLASSIFIER_INIT).standard_normal(
            (num_subclasses, enc_cfg.output_dim)
        )
        weights = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        anchor_opt = _AnchorAdam(weights.shape)
        margin = DEFAULT_MARGINS[config.loss_kind]

    start = time.perf_counter()
    for epoch in range(config.stage1_epochs):
        batches = make_batches(
            dataset, config.batch_size, config.seed, config.shuffle, epoch=epoch
        )
        batch_losses = []
        for idx in batches:
            bx = x[idx]
            batch_labels = [labels[i] for i in idx]
            emb = encoder_forward_batch(params, bx)
            if config.loss_kind == "triplet":
                try:
                    out, _ = triplet_batch_loss(emb, batch_labels, config.triplet_margin)
                except NoValidTripletsError:
                    warnings.warn("batch without any valid triplet skipped", stacklevel=2)
                    report.skipped_batches += 1
                    continue
            else:
                targets = np.asarray([lb.subclass_index for lb in batch_labels])
                out = angular_margin_loss(
                    emb, weights, targets, config.loss_kind, MARGIN_SCALE, margin
                )
            params = encoder_backward_step(params, bx, out.grad_embeddings, config.optimizer)
            if out.grad_weights is not None:
                anchor_opt.step(weights, out.grad_weights, config.optimizer)
                weights /= np.linalg.norm(weights, axis=1, keepdims=True)
            batch_losses.append(out.value)
            report.steps += 1
        # an epoch where every batch was skipped has no mean loss; None keeps
        # the serialized report valid JSON
        report.stage1_epoch_losses.append(
            float(np.mean(batch_losses)) if batch_losses else None
        )
    report.wall_time_seconds = time.perf_counter() - start
    return params, None, report
