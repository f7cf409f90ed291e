"""Central finite-difference verification of analytic gradients.

Intended for double precision and tiny models: the cost is two loss
evaluations per scalar parameter.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autograd import Tensor

# Coordinates where both gradients are below this scale are compared on an
# absolute scale instead, so vanishing gradients do not inflate the ratio.
_REL_FLOOR = 1e-4


def grad_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor], eps: float = 1e-3) -> float:
    """Worst relative error between analytic and finite-difference gradients.

    loss_fn must rebuild the forward graph from the current parameter values
    on every call (and be deterministic). The step is relative to each
    coordinate: eps * (|theta| + eps), so sub-unit parameters get a
    proportionally small probe and the h^2 truncation term stays negligible
    in double precision.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {}
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} received no gradient")
        analytic[name] = p.grad.copy()
        p.grad = None

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        ga_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            h = eps * (abs(old) + eps)
            flat[i] = old + h
            f_plus = float(loss_fn().data)
            flat[i] = old - h
            f_minus = float(loss_fn().data)
            flat[i] = old
            fd = (f_plus - f_minus) / (2.0 * h)
            ga = float(ga_flat[i])
            err = abs(ga - fd) / max(abs(ga), abs(fd), _REL_FLOOR)
            if err > worst:
                worst = err
    return worst
