"""Identity loss, enhanced squared-difference loss and their sum."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from csl_reid.numerics import ops
from csl_reid.numerics.tensor import Tensor

logger = logging.getLogger(__name__)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def stable_softplus(x: np.ndarray) -> np.ndarray:
    """``log(1 + exp(x))`` without overflow."""
    return np.logaddexp(0.0, x)


def phi(delta: np.ndarray) -> np.ndarray:
    """Signed square: ``delta**2`` above zero, ``-delta**2`` below."""
    return delta * np.abs(delta)


def delta_gradient(delta: np.ndarray) -> np.ndarray:
    """Derivative of ``softplus(phi(delta))`` with respect to ``delta``."""
    delta = np.asarray(delta, dtype=np.float64)
    return _sigmoid(phi(delta)) * 2.0 * np.abs(delta)


@dataclass
class TripletContext:
    """Pairwise distances and label masks of one batch."""

    features: Optional[Tensor]
    labels: np.ndarray
    dist: Tensor
    pos_mask: np.ndarray
    neg_mask: np.ndarray

    @classmethod
    def from_distances(cls, dist, labels: Sequence[int], features: Optional[Tensor] = None) -> "TripletContext":
        """Build the masks for ``dist`` and check the sampler contract.

        Raises:
            ValueError: If an anchor has no positive or no negative.
        """
        dist = ops.as_tensor(dist)
        labels = np.asarray(labels, dtype=np.int64)
        n = labels.shape[0]
        if dist.shape != (n, n):
            raise ValueError(f"Distance matrix {dist.shape} does not match {n} labels")
        same = labels[:, None] == labels[None, :]
        off_diagonal = ~np.eye(n, dtype=bool)
        pos_mask = same & off_diagonal
        neg_mask = ~same
        lonely = np.flatnonzero(~pos_mask.any(axis=1) | ~neg_mask.any(axis=1))
        if lonely.size:
            raise ValueError(
                f"Anchors {lonely.tolist()} lack a positive or a negative (labels {labels.tolist()}); "
                "the PK sampler contract is violated"
            )
        return cls(features, labels, dist, pos_mask, neg_mask)

    @classmethod
    def from_features(cls, features: Tensor, labels: Sequence[int]) -> "TripletContext":
        return cls.from_distances(distance_matrix(features), labels, features=features)


@dataclass
class LossReport:
    l_id: float
    l_sq: float
    l_total: float
    per_anchor_delta: List[float] = field(default_factory=list)

    @property
    def mean_delta(self) -> float:
        return float(np.mean(self.per_anchor_delta)) if self.per_anchor_delta else 0.0


def distance_matrix(features) -> Tensor:
    """Pairwise Euclidean distances between the rows of ``features``.

    Uses the expanded squared form clamped at zero; the result is exactly
    symmetric with a zero diagonal.
    """
    features = ops.as_tensor(features)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError(f"distance_matrix needs an N x D matrix with N >= 2, got {features.shape}")
    f = features.data
    squared = (f * f).sum(axis=1)
    d2 = squared[:, None] + squared[None, :] - 2.0 * (f @ f.T)
    d2 = 0.5 * (d2 + d2.T)
    np.fill_diagonal(d2, 0.0)
    dist = np.sqrt(np.maximum(d2, 0.0))

    def backward(grad):
        both = grad + grad.T
        safe = np.where(dist > 1e-12, dist, 1.0)
        coef = np.where(dist > 1e-12, both / safe, 0.0)
        np.fill_diagonal(coef, 0.0)
        features.accumulate(coef.sum(axis=1)[:, None] * f - coef @ f)

    return ops._result(dist, [features], backward, "distance_matrix")


def _masked_softmax(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    shifted = np.where(mask, values, -np.inf)
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    weights = np.where(mask, np.exp(shifted), 0.0)
    return weights / weights.sum(axis=1, keepdims=True)


def sq_loss(ctx: TripletContext, neg_weight_sign: int = 1, printed_sign: bool = False) -> Tuple[Tensor, np.ndarray]:
    """Enhanced squared-difference loss over every anchor of the batch.

    Per anchor ``i``: positive weights are the softmax of its positive
    distances, negative weights the softmax of ``neg_weight_sign`` times its
    negative distances; ``delta_i`` is the weighted positive distance minus
    the weighted negative distance and the anchor contributes
    ``softplus(phi(delta_i))``.

    Args:
        ctx: Distances and masks of the batch.
        neg_weight_sign: ``+1`` weights far negatives up, ``-1`` weights
            near negatives up.
        printed_sign: Return the negated mean (the literal leading-minus
            form). Unbounded below; never use it for training.

    Returns:
        tuple: ``(loss, per_anchor_delta)``.
    """
    if neg_weight_sign not in (1, -1):
        raise ValueError(f"neg_weight_sign must be +1 or -1, got {neg_weight_sign}")
    d = ctx.dist.data
    n = d.shape[0]
    w_pos = _masked_softmax(d, ctx.pos_mask)
    w_neg = _masked_softmax(neg_weight_sign * d, ctx.neg_mask)
    pos_term = (w_pos * d).sum(axis=1)
    neg_term = (w_neg * d).sum(axis=1)
    delta = pos_term - neg_term
    per_anchor = stable_softplus(phi(delta))
    sign = -1.0 if printed_sign else 1.0
    loss = np.asarray(sign * per_anchor.mean(), dtype=d.dtype)

    def backward(grad):
        coef = sign * grad * delta_gradient(delta) / n
        d_pos = w_pos * (1.0 + (d - pos_term[:, None]))
        d_neg = -w_neg * (1.0 + neg_weight_sign * (d - neg_term[:, None]))
        ctx.dist.accumulate((coef[:, None] * (d_pos + d_neg)).astype(d.dtype, copy=False))

    return ops._result(loss, [ctx.dist], backward, "sq_loss"), delta


def id_loss(logits, labels: Sequence[int]) -> Tensor:
    """Identity classification loss; RGB and IR rows share one label space."""
    return ops.softmax_cross_entropy(logits, labels)


def total_loss(l_id: Tensor, l_sq: Tensor) -> Tensor:
    """Unweighted sum of the two losses.

    Raises:
        FloatingPointError: If either input is not finite.
    """
    for name, value in (("l_id", l_id), ("l_sq", l_sq)):
        if not np.all(np.isfinite(ops.as_tensor(value).data)):
            raise FloatingPointError(f"{name} is not finite")
    return ops.add(l_id, l_sq)


def compute_losses(
    features: Tensor, logits: Tensor, labels: Sequence[int], neg_weight_sign: int = 1
) -> Tuple[Tensor, LossReport]:
    """Full training objective of one batch and its report."""
    l_id = id_loss(logits, labels)
    l_sq, delta = sq_loss(TripletContext.from_features(features, labels), neg_weight_sign=neg_weight_sign)
    l_total = total_loss(l_id, l_sq)
    report = LossReport(
        l_id=l_id.item(),
        l_sq=l_sq.item(),
        l_total=l_total.item(),
        per_anchor_delta=[float(v) for v in delta],
    )
    return l_total, report
