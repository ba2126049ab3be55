"""Streaming relighter with the two temporal smoothing mechanisms.

De-lit feature pyramids are exponentially smoothed across frames (the
previous *smoothed* pyramid is the history term), and the source monitor
light is averaged over a short geometric-weight window. Both mechanisms are
identity on their first frame and individually switchable.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import image_to_tensor, tensor_to_image
from .nn import Tensor, no_grad

DEFAULT_ALPHA = 0.7
DEFAULT_BETA = 0.6
DEFAULT_WINDOW = 3


class TemporalError(RuntimeError):
    pass


@dataclass
class SmootherState:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    window: int = DEFAULT_WINDOW
    feature_ema: bool = True
    light_avg: bool = True
    prev_delit: list = None
    light_ring: deque = field(default_factory=deque)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise TemporalError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.beta <= 1.0:
            raise TemporalError(f"beta must be in (0, 1], got {self.beta}")
        if self.window < 1:
            raise TemporalError(f"window must be >= 1, got {self.window}")


def reset(state):
    """Clear history (scene change); smoothing flags are preserved."""
    state.prev_delit = None
    state.light_ring.clear()
    return state


def ema_features(state, pyramid):
    """Recursive EMA of a de-lit pyramid: alpha*current + (1-alpha)*previous
    smoothed, per level. First frame passes through unchanged."""
    pyramid = [np.asarray(f) for f in pyramid]
    if state.prev_delit is None:
        state.prev_delit = [f.copy() for f in pyramid]
        return pyramid
    if len(state.prev_delit) != len(pyramid) or any(
            p.shape != f.shape for p, f in zip(state.prev_delit, pyramid)):
        raise TemporalError("pyramid shape changed mid-stream; call reset()")
    a = state.alpha
    smoothed = [a * f + (1.0 - a) * p
                for f, p in zip(pyramid, state.prev_delit)]
    state.prev_delit = [s.copy() for s in smoothed]
    return smoothed


def avg_light(state, light):
    """Geometric-weight average over the last `window` source lights,
    most recent first: sum(beta^i * L_{t-i}) / sum(beta^i)."""
    light = np.asarray(light, dtype=np.float32)
    if state.light_ring and state.light_ring[0].shape != light.shape:
        raise TemporalError("monitor light shape changed; call reset()")
    while len(state.light_ring) >= state.window:
        state.light_ring.pop()
    state.light_ring.appendleft(light.copy())
    weights = np.array([state.beta ** i
                        for i in range(len(state.light_ring))])
    acc = np.zeros_like(light, dtype=np.float64)
    for w, past in zip(weights, state.light_ring):
        acc += w * past
    return (acc / weights.sum()).astype(np.float32)


def stream_step(state, gen, frame, l_src, l_trg):
    """Relight one video frame, applying the enabled smoothers.

    l_src may be None: the predicted source light then drives de-lighting
    (and, when enabled, the light average)."""
    with no_grad():
        x = image_to_tensor(frame, gen.dtype)
        pyr = gen.encode(x)
        if l_src is None:
            pred, _ = gen.predict_source_light(pyr)
            light = tensor_to_image(pred)
        else:
            light = np.asarray(l_src, dtype=np.float32)
        if state.light_avg:
            light = avg_light(state, light)
        e_src = gen.embed_light(image_to_tensor(light, gen.dtype))
        delit = gen.delight(pyr, e_src)
        if state.feature_ema:
            arrays = ema_features(state, [t.numpy() for t in delit])
            delit = [Tensor(a.astype(gen.dtype)) for a in arrays]
        e_trg = gen.embed_light(image_to_tensor(l_trg, gen.dtype))
        out = gen.decode(delit, e_trg)
    return tensor_to_image(out)
