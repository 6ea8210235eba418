from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, no_grad


def grad_check(f: Callable[..., Tensor], point: Sequence[np.ndarray] | np.ndarray,
               step: float = 1e-4) -> float:
    """Largest elementwise relative error between ``backward`` and central differences.

    ``f`` takes one tensor per entry of ``point`` and returns a scalar tensor.
    The relative error uses ``max(|analytic|, |numeric|, 1e-8)`` as denominator.
    """
    arrays = [np.array(point, dtype=np.float64)] if isinstance(point, np.ndarray) \
        else [np.array(p, dtype=np.float64) for p in point]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    grads = backward(f(*leaves), leaves)

    worst = 0.0
    for k, leaf in enumerate(leaves):
        analytic = grads[leaf].ravel()
        base = arrays[k].ravel()
        for i in range(base.size):
            def at(delta):
                moved = base.copy()
                moved[i] += delta
                args = [Tensor(moved.reshape(arrays[k].shape)) if j == k else Tensor(arrays[j])
                        for j in range(len(arrays))]
                with no_grad():
                    return f(*args).item()
            numeric = (at(step) - at(-step)) / (2.0 * step)
            denom = max(abs(analytic[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst
