"""Adam parameter updates with bias correction.

Moments live in a per-parameter dict keyed like the network's parameter
dict; the learning rate is mutable so plateau callbacks can lower it
mid-training.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """One Adam update over every parameter that has a gradient.

    Updates params in place and returns (params, state). Moment tensors are
    lazily created shape-congruent with their parameters.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for key, g in grads.items():
        p = params[key]
        m = state.first_moment.get(key)
        if m is None:
            m = state.first_moment[key] = np.zeros_like(p)
        v = state.second_moment.get(key)
        if v is None:
            v = state.second_moment[key] = np.zeros_like(p)
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
    return params, state
