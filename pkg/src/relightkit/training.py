"""Losses, the cycle pass, and the alternating GAN training loop.

The generator objective combines L1, a perceptual proxy, a cycle term (the
relit image relit back to the source light must recover the source image),
and a least-squares adversarial term. A separate monitor objective supervises
source-light prediction, including the cycle pass's light prediction. One
train step = one discriminator update followed by one generator update.
"""

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import imaging
from .model import (init_discriminator, init_generator, load_checkpoint,
                    restore_adam, restore_discriminator, restore_generator,
                    save_checkpoint)
from .nn import Adam, Tensor, conv2d, l1


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    pass


@dataclass(frozen=True)
class LossWeights:
    l1: float = 1.0
    perceptual: float = 1.0
    cycle: float = 0.5
    adversarial: float = 0.05
    monitor: float = 1.0

    def validate(self):
        for name, v in vars(self).items():
            if not np.isfinite(v) or v < 0:
                raise TrainingError(f"loss weight {name} must be finite >= 0")
        return self


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_every: int = 1000
    perceptual_metric: str = "pyramid_l1"

    def validate(self):
        if self.steps < 0 or self.batch_size < 1:
            raise TrainingError("steps must be >= 0, batch_size >= 1")
        if self.lr < 0:
            raise TrainingError("learning rate must be >= 0")
        self.weights.validate()
        return self


# --- perceptual metric -------------------------------------------------------

_BINOMIAL5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
_BLUR_KERNEL = np.outer(_BINOMIAL5, _BINOMIAL5)[None, None]


def _blur_downsample(t):
    """One Gaussian-pyramid step: 5x5 binomial blur (zero pad), stride-2 take."""
    n, c, h, w = t.shape
    k = Tensor(_BLUR_KERNEL.astype(t.dtype))
    out = conv2d(t.reshape(n * c, 1, h, w), k, None, stride=1, pad=2)
    out = out[:, :, ::2, ::2]
    return out.reshape(n, c, out.shape[2], out.shape[3])


def pyramid_l1(a, b, levels=4):
    """Mean L1 across a Gaussian blur/downsample pyramid (differentiable)."""
    total = l1(a, b)
    for _ in range(levels - 1):
        a = _blur_downsample(a)
        b = _blur_downsample(b)
        total = total + l1(a, b)
    return total * (1.0 / levels)


class PyramidL1Metric:
    """Built-in perceptual proxy. Not comparable to published LPIPS/DISTS
    numbers; it exists so the repo needs no pretrained weights."""

    name = "pyramid_l1"
    differentiable = True

    def __init__(self, levels=4):
        self.levels = levels

    def loss(self, a, b):
        return pyramid_l1(a, b, self.levels)

    def distance(self, a_img, b_img):
        ta = Tensor(np.ascontiguousarray(
            np.asarray(a_img, dtype=np.float64).transpose(2, 0, 1))[None])
        tb = Tensor(np.ascontiguousarray(
            np.asarray(b_img, dtype=np.float64).transpose(2, 0, 1))[None])
        return float(self.loss(ta, tb).item())


_PERCEPTUAL = {}


def register_perceptual_metric(metric, name=None):
    """Register a pluggable perceptual metric.

    A metric needs .distance(a_img, b_img) -> float on (H, W, 3) rasters;
    metrics usable as a training loss also provide .loss(a, b) on tensors
    and set .differentiable = True.
    """
    _PERCEPTUAL[name or metric.name] = metric
    return metric


def get_perceptual_metric(name):
    try:
        return _PERCEPTUAL[name]
    except KeyError:
        raise TrainingError(
            f"unknown perceptual metric {name!r}; registered: "
            f"{sorted(_PERCEPTUAL)}") from None


register_perceptual_metric(PyramidL1Metric())


def perceptual_distance(a, b, metric="pyramid_l1"):
    """Perceptual distance between two equal-size images."""
    a = imaging.validate_image(a, "first image")
    b = imaging.validate_image(b, "second image")
    if a.shape != b.shape:
        raise TrainingError(f"shape mismatch: {a.shape} vs {b.shape}")
    return get_perceptual_metric(metric).distance(a, b)


# --- losses --------------------------------------------------------------

def forward_pass(gen, batch):
    """Relight + cycle pass; returns every prediction the losses need."""
    i_src, l_src, i_trg, l_trg = batch
    i_hat_trg, l_hat_src = gen.relight(i_src, l_src, l_trg)
    i_hat_src_c, l_hat_trg_c = gen.relight(i_hat_trg, l_trg, l_src)
    return {"i_hat_trg": i_hat_trg, "l_hat_src": l_hat_src,
            "i_hat_src_c": i_hat_src_c, "l_hat_trg_c": l_hat_trg_c}


def _perceptual_loss_fn(metric_name):
    metric = get_perceptual_metric(metric_name)
    if not getattr(metric, "differentiable", False):
        raise TrainingError(f"perceptual metric {metric_name!r} cannot be "
                            "used for training (no differentiable loss)")
    return metric.loss


def generator_loss(gen, disc, batch, w, preds=None, perceptual="pyramid_l1"):
    """Relit-image objective; returns (total, per-term breakdown)."""
    i_src, l_src, i_trg, l_trg = batch
    if preds is None:
        preds = forward_pass(gen, batch)
    lp = _perceptual_loss_fn(perceptual)
    term_l1 = l1(i_trg, preds["i_hat_trg"])
    term_p = lp(i_trg, preds["i_hat_trg"])
    term_c = l1(i_src, preds["i_hat_src_c"])
    score = disc(preds["i_hat_trg"])
    term_adv = ((score - 1.0) ** 2).mean()
    total = (w.l1 * term_l1 + w.perceptual * term_p + w.cycle * term_c +
             w.adversarial * term_adv)
    terms = {"l1": term_l1.item(), "perceptual": term_p.item(),
             "cycle": term_c.item(), "adversarial": term_adv.item()}
    return total, terms


def discriminator_loss(disc, i_trg, i_hat_trg):
    """Least-squares patch loss: real scores to 1, fake scores to 0."""
    real = disc(i_trg)
    fake = disc(i_hat_trg)
    return ((real - 1.0) ** 2).mean() + (fake ** 2).mean()


def monitor_loss(l_src, l_hat_src, l_trg, l_hat_trg_c, w,
                 perceptual="pyramid_l1"):
    """Source-light reconstruction + cycle-pass light consistency."""
    lp = _perceptual_loss_fn(perceptual)
    term_l1 = l1(l_src, l_hat_src)
    term_p = lp(l_src, l_hat_src)
    term_c = l1(l_trg, l_hat_trg_c)
    total = w.l1 * term_l1 + w.perceptual * term_p + w.cycle * term_c
    terms = {"l1": term_l1.item(), "perceptual": term_p.item(),
             "cycle": term_c.item()}
    return total, terms


def total_objective(gen, disc, batch, w, perceptual="pyramid_l1"):
    """The combined minimization target (generator + discriminator + monitor
    objectives summed), as one differentiable scalar. Used by the gradient
    verification; the training loop optimizes the same terms alternately."""
    preds = forward_pass(gen, batch)
    g_total, _ = generator_loss(gen, disc, batch, w, preds=preds,
                                perceptual=perceptual)
    d_total = discriminator_loss(disc, batch[2], preds["i_hat_trg"])
    m_total, _ = monitor_loss(batch[1], preds["l_hat_src"], batch[3],
                              preds["l_hat_trg_c"], w, perceptual=perceptual)
    return g_total + d_total + w.monitor * m_total


# --- training loop -------------------------------------------------------

class TrainState:
    def __init__(self, gen, disc, cfg):
        self.gen = gen
        self.disc = disc
        self.cfg = cfg
        self.opt_g = Adam(gen.named_parameters(), lr=cfg.lr, beta1=cfg.beta1,
                          beta2=cfg.beta2)
        self.opt_d = Adam(disc.named_parameters(), lr=cfg.lr, beta1=cfg.beta1,
                          beta2=cfg.beta2)
        self.step = 0


def train_step(state, batch):
    """One D update on the detached fake, then one G update; returns the log
    record for this step."""
    cfg = state.cfg
    w = cfg.weights
    t0 = time.perf_counter()
    i_src, l_src, i_trg, l_trg = batch

    preds = forward_pass(state.gen, batch)

    fake_detached = Tensor(preds["i_hat_trg"].data.copy())
    d_loss = discriminator_loss(state.disc, i_trg, fake_detached)
    state.disc.zero_grad()
    d_loss.backward()
    state.opt_d.step()

    g_total, g_terms = generator_loss(state.gen, state.disc, batch, w,
                                      preds=preds,
                                      perceptual=cfg.perceptual_metric)
    m_total, m_terms = monitor_loss(l_src, preds["l_hat_src"], l_trg,
                                    preds["l_hat_trg_c"], w,
                                    perceptual=cfg.perceptual_metric)
    objective = g_total + w.monitor * m_total
    state.gen.zero_grad()
    state.disc.zero_grad()
    objective.backward()
    state.opt_g.step()
    state.disc.zero_grad()

    record = {"step": state.step, "g_total": g_total.item(),
              "d_loss": d_loss.item(), "m_total": m_total.item()}
    record.update({f"g_{k}": v for k, v in g_terms.items()})
    record.update({f"m_{k}": v for k, v in m_terms.items()})
    bad = [k for k, v in record.items() if k != "step" and not np.isfinite(v)]
    if bad:
        raise TrainingDiverged(f"non-finite loss at step {state.step}: "
                               f"{ {k: record[k] for k in bad} }")
    state.step += 1
    record["wall_time"] = time.perf_counter() - t0
    return record


class FrameStore:
    """Caches dataset rasters as NCHW float32 arrays keyed by frame id."""

    def __init__(self, manifest, root):
        self.manifest = manifest
        self.root = root
        self.records = {r.id: r for r in manifest.records}
        self._cache = {}

    def get(self, frame_id):
        hit = self._cache.get(frame_id)
        if hit is None:
            rec = self.records[frame_id]
            img = imaging.load_image(os.path.join(self.root, rec.image))
            light = imaging.load_image(os.path.join(self.root, rec.light))
            hit = (np.ascontiguousarray(img.transpose(2, 0, 1)),
                   np.ascontiguousarray(light.transpose(2, 0, 1)))
            self._cache[frame_id] = hit
        return hit


def make_batch(store, pair_list, indices, dtype=np.float32):
    i_src, l_src, i_trg, l_trg = [], [], [], []
    for i in indices:
        src_id, trg_id = pair_list[i][0], pair_list[i][1]
        si, sl = store.get(src_id)
        ti, tl = store.get(trg_id)
        i_src.append(si)
        l_src.append(sl)
        i_trg.append(ti)
        l_trg.append(tl)
    return tuple(Tensor(np.stack(arrs).astype(dtype))
                 for arrs in (i_src, l_src, i_trg, l_trg))


def batch_indices(seed, step, n_pairs, batch_size):
    """Stateless per-step sampling; resume reproduces the trajectory."""
    rng = np.random.default_rng([seed, step])
    return rng.integers(0, n_pairs, size=batch_size)


def fit(arch_cfg, train_cfg, manifest, pairs, data_root, out_dir,
        resume_from=None, progress=None):
    """Run the training loop; returns the final checkpoint path.

    Logs one JSON record per step to <out_dir>/train_log.jsonl (appended when
    resuming). Checkpoints land in out_dir every checkpoint_every steps and
    at the end.
    """
    train_cfg.validate()
    if not pairs.entries:
        raise TrainingError("empty pair index")
    os.makedirs(out_dir, exist_ok=True)

    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt["arch"].to_dict() != arch_cfg.to_dict():
            raise TrainingError("checkpoint ArchConfig does not match")
        gen = restore_generator(ckpt)
        disc = restore_discriminator(ckpt)
        state = TrainState(gen, disc, train_cfg)
        state.opt_g = restore_adam(ckpt, "g", gen.named_parameters())
        state.opt_d = restore_adam(ckpt, "d", disc.named_parameters())
        state.step = ckpt["step"]
    else:
        gen = init_generator(arch_cfg, seed=train_cfg.seed)
        disc = init_discriminator(arch_cfg, seed=train_cfg.seed + 1)
        state = TrainState(gen, disc, train_cfg)

    store = FrameStore(manifest, data_root)
    pair_list = pairs.entries
    log_path = os.path.join(out_dir, "train_log.jsonl")
    final_path = os.path.join(out_dir, "checkpoint_final.rlkc")

    def save(path):
        save_checkpoint(path, gen, disc, step=state.step,
                        opt_g=state.opt_g, opt_d=state.opt_d)

    with open(log_path, "a" if resume_from else "w") as log:
        while state.step < train_cfg.steps:
            idx = batch_indices(train_cfg.seed, state.step, len(pair_list),
                                train_cfg.batch_size)
            batch = make_batch(store, pair_list, idx)
            record = train_step(state, batch)
            log.write(json.dumps(record, sort_keys=True) + "\n")
            if progress is not None:
                progress(record)
            if train_cfg.checkpoint_every and \
                    state.step % train_cfg.checkpoint_every == 0 and \
                    state.step < train_cfg.steps:
                save(os.path.join(out_dir,
                                  f"checkpoint_step{state.step:06d}.rlkc"))
    save(final_path)
    return final_path
