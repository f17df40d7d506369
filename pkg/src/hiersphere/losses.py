"""Training objectives with analytic gradients.

Classifier-style objectives (softmax cross-entropy, CosFace, ArcFace, AdaCos)
operate on cosines between unit embeddings and unit class-anchor rows; the
two-stage pipeline adds a thresholded pairwise cosine-similarity objective
whose targets come from the label hierarchy. Every gradient here is checked
against central finite differences in the test suite.
"""

import math
import warnings
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from .errors import (
    BatchTooSmallError,
    DimensionMismatchError,
    IndexOutOfRangeError,
    InvalidClassCountError,
    InvalidConfigError,
    NonFiniteError,
)
from .labels import HierLabel, Polarity

EXP_ARG_MAX = 80.0  # overflow protection inside the adaptive-scale statistic
SCALE_FLOOR = 1.0  # degenerate two-class fixed scale is floored here
ARCCOS_GUARD = 1e-7


@dataclass
class LossOutput:
    """Scalar loss plus gradients for whatever inputs the loss depends on."""

    value: float
    grad_embeddings: np.ndarray
    grad_weights: np.ndarray | None = None


class PairTarget(IntEnum):
    SAME = 1
    OPPOSITE = -1
    UNRELATED = 0


def _as_batch(logits: Sequence[float] | np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise DimensionMismatchError(f"logits must be 1-D or 2-D, got shape {arr.shape}")


def _softmax_ce(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean -log softmax(logits)[target]; gradient wrt logits."""
    n, c = logits.shape
    shift = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shift)
    denom = exp.sum(axis=1, keepdims=True)
    # logsumexp form keeps the value finite even for extreme logits
    lse = np.log(denom[:, 0]) + logits.max(axis=1)
    value = float(np.mean(lse - logits[np.arange(n), targets]))
    grad = exp / denom
    grad[np.arange(n), targets] -= 1.0
    grad /= n
    return value, grad


def softmax_ce_loss(logits: Sequence[float] | np.ndarray, targets) -> LossOutput:
    """Softmax cross-entropy averaged over the batch.

    Accepts a single logit row with a scalar target or an N x C batch with N
    targets. grad_embeddings holds the gradient with respect to the logits.
    """
    arr, squeeze = _as_batch(logits)
    tgt = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, c = arr.shape
    if c < 2:
        raise InvalidClassCountError(f"need at least 2 classes, got {c}")
    if tgt.shape != (n,):
        raise DimensionMismatchError(f"expected {n} targets, got shape {tgt.shape}")
    if np.any(tgt < 0) or np.any(tgt >= c):
        raise IndexOutOfRangeError(f"targets must lie in [0, {c})")
    value, grad = _softmax_ce(arr, tgt)
    return LossOutput(value=value, grad_embeddings=grad[0] if squeeze else grad)


def triplet_loss(
    anchor: np.ndarray,
    positive: np.ndarray,
    negative: np.ndarray,
    margin: float = 1.0,
) -> LossOutput:
    """Euclidean hinge max(0, ||a-p|| - ||a-n|| + margin).

    Intended for unit-normalized embeddings. grad_embeddings stacks the
    gradients for (anchor, positive, negative); the subgradient at the hinge
    corner and at coincident points is zero.
    """
    a = np.asarray(anchor, dtype=np.float64)
    p = np.asarray(positive, dtype=np.float64)
    n = np.asarray(negative, dtype=np.float64)
    if not (a.shape == p.shape == n.shape) or a.ndim != 1:
        raise DimensionMismatchError("anchor/positive/negative must share one dimension")
    if margin < 0:
        raise InvalidConfigError("margin must be non-negative")

    diff_p = a - p
    diff_n = a - n
    dist_p = float(np.linalg.norm(diff_p))
    dist_n = float(np.linalg.norm(diff_n))
    value = dist_p - dist_n + margin

    grads = np.zeros((3, a.size))
    if value <= 0.0:
        return LossOutput(value=0.0, grad_embeddings=grads)
    if dist_p > 0.0:
        unit_p = diff_p / dist_p
        grads[0] += unit_p
        grads[1] = -unit_p
    if dist_n > 0.0:
        unit_n = diff_n / dist_n
        grads[0] -= unit_n
        grads[2] = unit_n
    return LossOutput(value=value, grad_embeddings=grads)


def margin_logit_transform(
    cosines: Sequence[float] | np.ndarray,
    target: int,
    kind: str,
    scale: float,
    margin: float,
) -> np.ndarray:
    """Scaled logits with an additive angular margin on the target entry.

    cosface subtracts the margin from the target cosine; arcface adds it to
    the target angle. With margin 0 both reduce to plain scaled cosines.
    """
    cos = np.asarray(cosines, dtype=np.float64)
    if cos.ndim != 1:
        raise DimensionMismatchError("cosines must be 1-D")
    if not 0 <= target < cos.size:
        raise IndexOutOfRangeError(f"target {target} outside [0, {cos.size})")
    if kind not in ("cosface", "arcface"):
        raise InvalidConfigError(f"kind must be cosface or arcface, got {kind!r}")
    if scale <= 0 or margin < 0:
        raise InvalidConfigError("scale must be positive and margin non-negative")

    out = scale * cos
    if kind == "cosface":
        out[target] = scale * (cos[target] - margin)
    else:
        theta = math.acos(float(np.clip(cos[target], -1.0, 1.0)))
        out[target] = scale * math.cos(theta + margin)
    return out


def _margin_cos_derivative(cos_target: np.ndarray, kind: str, margin: float) -> np.ndarray:
    """d(target logit)/d(target cosine), without the scale factor."""
    if kind in ("cosface", "softmax") or margin == 0.0:
        return np.ones_like(cos_target)
    # arcface: d cos(theta + m)/d cos(theta) = sin(theta + m) / sin(theta)
    c = np.clip(cos_target, -1.0 + ARCCOS_GUARD, 1.0 - ARCCOS_GUARD)
    theta = np.arccos(c)
    return np.sin(theta + margin) / np.sin(theta)


def angular_margin_loss(
    embeddings: np.ndarray,
    weights: np.ndarray,
    targets: np.ndarray,
    kind: str,
    scale: float,
    margin: float,
) -> LossOutput:
    """Cosine-classifier cross-entropy with an optional angular margin.

    kind 'softmax' is the zero-margin scaled baseline; 'cosface' and 'arcface'
    apply their margins to each row's target entry. Embeddings and weight rows
    are taken as unit vectors, so cosines are plain dot products.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if emb.ndim != 2 or w.ndim != 2 or emb.shape[1] != w.shape[1]:
        raise DimensionMismatchError("embeddings and weights must be 2-D with equal width")
    if kind not in ("softmax", "cosface", "arcface"):
        raise InvalidConfigError(f"unknown kind {kind!r}")
    tgt = np.asarray(targets, dtype=np.int64)
    n, c = emb.shape[0], w.shape[0]
    if np.any(tgt < 0) or np.any(tgt >= c):
        raise IndexOutOfRangeError(f"targets must lie in [0, {c})")

    cos = emb @ w.T
    logits = scale * cos
    rows = np.arange(n)
    if kind == "cosface" and margin != 0.0:
        logits[rows, tgt] = scale * (cos[rows, tgt] - margin)
    elif kind == "arcface" and margin != 0.0:
        clipped = np.clip(cos[rows, tgt], -1.0, 1.0)
        logits[rows, tgt] = scale * np.cos(np.arccos(clipped) + margin)

    value, dlogits = _softmax_ce(logits, tgt)
    dcos = scale * dlogits
    dcos[rows, tgt] *= _margin_cos_derivative(cos[rows, tgt], kind, margin)
    return LossOutput(value=value, grad_embeddings=dcos @ w, grad_weights=dcos.T @ emb)


def adacos_init_scale(num_subclasses: int) -> float:
    """Fixed initial logit scale sqrt(2) * ln(C - 1)."""
    if num_subclasses < 2:
        raise InvalidClassCountError(f"need at least 2 classes, got {num_subclasses}")
    return math.sqrt(2.0) * math.log(num_subclasses - 1)


@dataclass
class AdaCosState:
    """Unit-row class anchors plus the adaptive logit scale."""

    weights: np.ndarray
    scale: float
    dynamic: bool = True

    @property
    def num_subclasses(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def initialize(
        cls,
        num_subclasses: int,
        dim: int,
        rng: np.random.Generator,
        dynamic: bool = True,
    ) -> "AdaCosState":
        scale = adacos_init_scale(num_subclasses)
        if scale < SCALE_FLOOR:
            warnings.warn(
                f"initial scale {scale:.3f} for {num_subclasses} classes is degenerate; "
                f"flooring at {SCALE_FLOOR}",
                stacklevel=2,
            )
            scale = SCALE_FLOOR
        raw = rng.standard_normal((num_subclasses, dim))
        weights = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        return cls(weights=weights, scale=scale, dynamic=dynamic)

    def renormalize_weights(self) -> None:
        norms = np.linalg.norm(self.weights, axis=1, keepdims=True)
        self.weights /= norms


def adacos_update_scale(
    state: AdaCosState,
    batch_cosines: np.ndarray,
    targets: np.ndarray,
) -> float:
    """Adaptive scale step: s = ln(B_avg) / cos(min(pi/4, median target angle)).

    B_avg averages the non-target exponential mass under the pre-update scale;
    the result replaces state.scale.
    """
    cos = np.asarray(batch_cosines, dtype=np.float64)
    tgt = np.asarray(targets, dtype=np.int64)
    n, c = cos.shape
    if n < 1:
        raise BatchTooSmallError("need at least one sample")

    rows = np.arange(n)
    exp_arg = np.minimum(state.scale * cos, EXP_ARG_MAX)
    mass = np.exp(exp_arg)
    mass[rows, tgt] = 0.0
    b_avg = float(mass.sum() / n)
    if not np.isfinite(b_avg) or b_avg <= 0.0:
        raise NonFiniteError(f"non-target mass degenerate: {b_avg}")

    theta_med = float(np.median(np.arccos(np.clip(cos[rows, tgt], -1.0, 1.0))))
    new_scale = math.log(b_avg) / math.cos(min(math.pi / 4.0, theta_med))
    if not math.isfinite(new_scale):
        raise NonFiniteError("adaptive scale update produced a non-finite value")
    if new_scale <= 0.0:
        # keeps the state invariant scale > 0; only reachable when the
        # non-target mass collapses below 1, which desk-scale runs never hit
        new_scale = 1e-3
    state.scale = new_scale
    return new_scale


def adacos_loss(
    state: AdaCosState,
    embeddings: np.ndarray,
    labels: Sequence[HierLabel],
) -> LossOutput:
    """Sub-class classification loss over scaled embedding/anchor cosines.

    With a dynamic state the adaptive scale is refreshed from this batch's
    cosines before the loss is evaluated; the scale is treated as a constant
    during backprop.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[1] != state.weights.shape[1]:
        raise DimensionMismatchError("embeddings must be 2-D and match anchor width")
    targets = np.asarray([lb.subclass_index for lb in labels], dtype=np.int64)
    if targets.shape[0] != emb.shape[0]:
        raise DimensionMismatchError("one label per embedding required")
    if np.any(targets >= state.num_subclasses):
        raise IndexOutOfRangeError("label sub-class index exceeds anchor count")

    cos = emb @ state.weights.T
    if state.dynamic:
        adacos_update_scale(state, cos, targets)

    value, dlogits = _softmax_ce(state.scale * cos, targets)
    dcos = state.scale * dlogits
    return LossOutput(
        value=value,
        grad_embeddings=dcos @ state.weights,
        grad_weights=dcos.T @ emb,
    )


def pair_target(
    a: HierLabel,
    b: HierLabel,
    same_class_neutral_pair_positive: bool = False,
) -> PairTarget:
    """Supervision target for a sentence pair.

    Different classes give 0; a neutral member gives 0; same polarity gives
    +1, opposite polarities -1. A same-class neutral-neutral pair is 0 by
    default; the switch flips that overlap case to +1.
    """
    if a.class_id != b.class_id:
        return PairTarget.UNRELATED
    both_neutral = a.polarity is Polarity.NEUTRAL and b.polarity is Polarity.NEUTRAL
    if both_neutral:
        return PairTarget.SAME if same_class_neutral_pair_positive else PairTarget.UNRELATED
    if a.polarity is Polarity.NEUTRAL or b.polarity is Polarity.NEUTRAL:
        return PairTarget.UNRELATED
    return PairTarget.SAME if a.polarity is b.polarity else PairTarget.OPPOSITE


def pair_target_matrix(
    labels: Sequence[HierLabel],
    same_class_neutral_pair_positive: bool = False,
) -> np.ndarray:
    """B x B matrix of pair targets (diagonal zero)."""
    class_ids = np.asarray([lb.class_id for lb in labels], dtype=np.int64)
    neutral = np.asarray([lb.polarity is Polarity.NEUTRAL for lb in labels], dtype=bool)
    ordinals = np.asarray([lb.polarity.ordinal for lb in labels], dtype=np.int64)

    same_class = class_ids[:, None] == class_ids[None, :]
    same_pol = ordinals[:, None] == ordinals[None, :]
    either_neutral = neutral[:, None] | neutral[None, :]
    both_neutral = neutral[:, None] & neutral[None, :]

    positive = same_class & same_pol & ~either_neutral
    if same_class_neutral_pair_positive:
        positive |= same_class & both_neutral
    negative = same_class & ~same_pol & ~either_neutral

    targets = np.zeros((len(labels), len(labels)), dtype=np.float64)
    targets[positive] = 1.0
    targets[negative] = -1.0
    np.fill_diagonal(targets, 0.0)
    return targets


def pairwise_cosine_loss(
    embeddings: np.ndarray,
    labels: Sequence[HierLabel],
    t: float = 0.3,
    same_class_neutral_pair_positive: bool = False,
) -> LossOutput:
    """Squared cosine-residual loss over all unordered in-batch pairs.

    Each pair (i < j) contributes (cos_ij - y_ij)^2 with y from pair_target,
    except that target-0 pairs with |cos| < t are null: zero loss and zero
    gradient. The total is divided by the number of comparisons B(B-1)/2,
    nulled pairs included. t = 1 saturates the band: every target-0 pair is
    null and only polar pairs contribute.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise DimensionMismatchError("embeddings must be a B x d batch")
    b = emb.shape[0]
    if b < 2:
        raise BatchTooSmallError(f"need at least 2 samples, got {b}")
    if len(labels) != b:
        raise DimensionMismatchError("one label per embedding required")
    if not 0.0 <= t <= 1.0:
        raise InvalidConfigError(f"threshold t must lie in [0, 1], got {t}")

    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    unit = emb / norms
    cos = np.clip(unit @ unit.T, -1.0, 1.0)
    targets = pair_target_matrix(labels, same_class_neutral_pair_positive)

    null = (targets == 0.0) & (np.abs(cos) < t)
    active = ~null
    np.fill_diagonal(active, False)

    residual = np.where(active, cos - targets, 0.0)
    num_pairs = b * (b - 1) // 2
    iu = np.triu_indices(b, k=1)
    value = float(np.sum(residual[iu] ** 2) / num_pairs)

    # dL/dcos_ij, symmetric; each unordered pair counted once in the value
    dcos = 2.0 * residual / num_pairs
    coeff = (dcos * cos).sum(axis=1, keepdims=True)
    grad = (dcos @ unit - coeff * unit) / norms
    return LossOutput(value=value, grad_embeddings=grad)
