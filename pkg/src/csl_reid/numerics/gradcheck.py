"""Central-difference oracle for the hand-written backward passes."""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from csl_reid.numerics.tensor import ParamTensor, Tensor

logger = logging.getLogger(__name__)


def _evaluate(f: Callable[[], Tensor]) -> float:
    value = f().item()
    if not np.isfinite(value):
        raise FloatingPointError(f"grad_check: loss is not finite ({value})")
    return value


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[ParamTensor],
    h: float = 1e-3,
    max_entries: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Compare reverse-mode gradients against central differences.

    ``f`` rebuilds the graph on every call and must be deterministic. Batch
    norm in train mode qualifies since its output ignores the running
    statistics it updates.

    Args:
        f: Zero-argument callable returning a scalar Tensor.
        params: 64-bit parameters to perturb.
        h: Finite-difference step.
        max_entries: If given, check at most this many (seeded) entries per
            parameter instead of all of them.
        seed: Seed for the entry subsample.

    Returns:
        float: Maximum relative error over all checked entries, with
        denominator ``max(|analytic|, |numeric|, 1e-8)``.

    Raises:
        ValueError: If a parameter is not 64-bit or ``f`` is not deterministic.
        FloatingPointError: If the loss is not finite.
    """
    for param in params:
        if param.data.dtype != np.float64:
            raise ValueError(f"grad_check needs float64 parameters, {param.name} is {param.data.dtype}")
    for param in params:
        param.zero_grad()
    loss = f()
    base = loss.item()
    if not np.isfinite(base):
        raise FloatingPointError(f"grad_check: loss is not finite ({base})")
    loss.backward()
    if _evaluate(f) != base:
        raise ValueError("grad_check: f returned different losses for identical parameters")
    analytic = {param.name: param.grad.copy() for param in params}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for param in params:
        flat = param.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        grad = analytic[param.name].reshape(-1)
        for index in entries:
            original = flat[index]
            flat[index] = original + h
            plus = _evaluate(f)
            flat[index] = original - h
            minus = _evaluate(f)
            flat[index] = original
            numeric = (plus - minus) / (2.0 * h)
            denom = max(abs(grad[index]), abs(numeric), 1e-8)
            error = abs(grad[index] - numeric) / denom
            if error > worst:
                logger.debug("grad_check %s[%d]: analytic=%g numeric=%g", param.name, index, grad[index], numeric)
                worst = error
    return worst
