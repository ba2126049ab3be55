import numpy as np
import pytest

from relightkit.model import ArchConfig
from relightkit.synthstage import DatasetManifest, GenConfig, gen_dataset

# small architecture used across unit tests (fast on CPU)
TINY_ARCH = ArchConfig(
    input_resolution=16, n_levels=3, widths=(6, 8, 12), strides=(1, 2, 2),
    light_embed_dim=10, monitor_h=4, monitor_w=8, mlp_hidden=(12,),
    pred_grid=(2, 4), pred_min_level=2, pred_channels=6,
    disc_channels=(8, 8))

# the tiny gradient-check configuration: 8x8 images, 3 levels, monitor 4x8
GRADCHECK_ARCH = ArchConfig(
    input_resolution=8, n_levels=3, widths=(6, 8, 12), strides=(1, 2, 2),
    light_embed_dim=10, monitor_h=4, monitor_w=8, mlp_hidden=(12,),
    pred_grid=(2, 4), pred_min_level=2, pred_channels=6,
    disc_channels=(8, 8))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Shared small synthetic dataset: 3 smooth sequences + the 9x9 grid."""
    root = tmp_path_factory.mktemp("smallset")
    cfg = GenConfig(seed=11, n_sequences=3, frames_per_sequence=16,
                    resolution=16, monitor_h=4, monitor_w=8)
    manifest = gen_dataset(cfg, str(root))
    return str(root), manifest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def fd_gradcheck(objective, params, n_coords=6, h=1e-6, seed=123):
    """Compare analytic gradients of `objective()` (a Tensor scalar) against
    central finite differences at sampled coordinates of each parameter.

    Returns (n_checked, n_failed, worst_rel_err)."""
    loss = objective()
    loss.backward()
    grads = {id(p): (p.grad.copy() if p.grad is not None
                     else np.zeros_like(p.data)) for p in params}
    rng = np.random.default_rng(seed)
    n_checked = n_failed = 0
    worst = 0.0
    for p in params:
        flat = p.data.reshape(-1)
        gflat = grads[id(p)].reshape(-1)
        take = min(n_coords, flat.size)
        for idx in rng.choice(flat.size, size=take, replace=False):
            old = flat[idx]
            flat[idx] = old + h
            fp = objective().item()
            flat[idx] = old - h
            fm = objective().item()
            flat[idx] = old
            fd = (fp - fm) / (2 * h)
            an = gflat[idx]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
            worst = max(worst, rel)
            n_checked += 1
            if rel > 1e-3:
                n_failed += 1
    return n_checked, n_failed, worst
