"""Adam with decoupled weight decay."""

import numpy as np


class AdamState:
    """First/second moment buffers plus step counter for one parameter set."""

    def __init__(self, params):
        self.step = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8,
              weight_decay=0.0):
    """One in-place update. `grads` maps name -> ndarray; names missing from
    it (or mapped to None) are skipped. Weight decay is decoupled: an
    additive lr*wd*param shrink applied after the moment update."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        p.data -= lr * update
        if weight_decay:
            p.data -= lr * weight_decay * p.data
    return params, state
