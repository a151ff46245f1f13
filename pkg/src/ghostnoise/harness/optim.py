"""SGD with momentum and coupled weight decay, plus a warmup + cosine schedule."""

import math


def sgd_step(params: dict, grads: dict, velocity: dict, lr: float, momentum: float,
             weight_decay: float, decayed=lambda name: True):
    """One momentum step: ``v = momentum * v + g + wd * w``; ``w = w - lr * v``.

    Returns new ``(params, velocity)`` dicts; inputs are left untouched.
    ``decayed(name)`` selects the parameters that receive weight decay.
    """
    new_params, new_velocity = {}, {}
    for name, w in params.items():
        g = grads[name]
        if weight_decay and decayed(name):
            g = g + weight_decay * w
        v = velocity.get(name)
        v = g if v is None else momentum * v + g
        new_velocity[name] = v
        new_params[name] = w - lr * v
    return new_params, new_velocity


def cosine_lr(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warmup from 0 to ``base_lr``, then cosine decay towards 0 at ``total_steps``."""
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    progress = (step - warmup_steps) / max(1, total_steps - warmup_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * min(progress, 1.0)))
