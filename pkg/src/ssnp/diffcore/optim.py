"""Bias-corrected adaptive-moment optimizer over a ParameterStore."""

from __future__ import annotations

import numpy as np

from .params import ParameterStore


def adam_step(
    store: ParameterStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One update over every parameter group holding a nonzero gradient.

    Groups are the store's packed namespaces; a group whose gradient is
    identically zero is left untouched (value and moments both), so a step
    that never touched a subnetwork cannot move it. Gradients are cleared
    and the step counter advances.
    """
    store.step += 1
    c1 = 1.0 - beta1 ** store.step
    c2 = 1.0 - beta2 ** store.step
    for block in store.blocks().values():
        g = block["grad"]
        if not np.any(g):
            continue
        m = block["m"]
        v = block["v"]
        scr = block.get("scratch")
        if scr is None:
            scr = block["scratch"] = np.empty_like(g)
        np.multiply(m, beta1, out=m)
        np.multiply(g, 1.0 - beta1, out=scr)
        np.add(m, scr, out=m)
        np.multiply(v, beta2, out=v)
        np.multiply(g, g, out=scr)
        np.multiply(scr, 1.0 - beta2, out=scr)
        np.add(v, scr, out=v)
        np.divide(v, c2, out=scr)
        np.sqrt(scr, out=scr)
        np.add(scr, eps, out=scr)
        np.divide(m, scr, out=scr)
        np.multiply(scr, lr / c1, out=scr)
        np.subtract(block["value"], scr, out=block["value"])
        g[...] = 0.0
