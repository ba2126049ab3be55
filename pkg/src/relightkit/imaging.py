"""Image and monitor-light rasters, file I/O, resampling, env-map conversion.

An image is a float32 (H, W, 3) array with values in [0, 1]; monitor lights
are the same raster type at monitor resolution. Environment maps are
equirectangular (H, 2H, 3) float arrays with nonnegative values, stored in a
small binary format (see load_envmap).
"""

import struct

import numpy as np
from PIL import Image as PILImage

from .nn import backend

ENVF_MAGIC = b"ENVF"


class ImagingError(ValueError):
    pass


def validate_image(img, what="image"):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImagingError(f"{what} must be (H, W, 3), got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ImagingError(f"{what} must have positive dimensions")
    if not np.all(np.isfinite(img)):
        raise ImagingError(f"{what} contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ImagingError(f"{what} values outside [0, 1]: "
                           f"[{img.min():.4g}, {img.max():.4g}]")
    return img


def validate_envmap(env):
    env = np.asarray(env)
    if env.ndim != 3 or env.shape[2] != 3:
        raise ImagingError(f"env map must be (H, W, 3), got {env.shape}")
    if env.shape[0] < 1 or env.shape[1] != 2 * env.shape[0]:
        raise ImagingError(f"env map width must be 2x height, got {env.shape}")
    if not np.all(np.isfinite(env)):
        raise ImagingError("env map contains non-finite values")
    if env.min() < 0.0:
        raise ImagingError("env map contains negative values")
    return env


def load_image(path):
    """Load an 8-bit RGB file to float32 in [0, 1]."""
    try:
        with PILImage.open(path) as im:
            if im.mode != "RGB":
                raise ImagingError(f"{path}: expected RGB, got mode {im.mode!r}")
            arr = np.asarray(im, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except ImagingError:
        raise
    except Exception as exc:
        raise ImagingError(f"{path}: cannot decode ({exc})") from exc
    return (arr.astype(np.float32) / 255.0)


def save_image(img, path):
    """Save to 8-bit PNG; round trip is exact to within 1/510 per pixel."""
    img = validate_image(img)
    q = np.round(np.asarray(img, dtype=np.float64) * 255.0).astype(np.uint8)
    PILImage.fromarray(q, mode="RGB").save(path, format="PNG")


def resize_bilinear(img, h, w):
    """Bilinear resample (align-corners-false) to (h, w)."""
    img = validate_image(img)
    if h < 1 or w < 1:
        raise ImagingError(f"target dims must be positive, got {h}x{w}")
    out = backend.resize_hwc(img.astype(np.float32, copy=False), h, w)
    return np.clip(out, 0.0, 1.0)


def load_envmap(path):
    """Read the ENVF container: magic 'ENVF', u32 h, u32 w, float32 RGB rows.

    Little-endian throughout; width must equal 2*height.
    """
    with open(path, "rb") as f:
        head = f.read(12)
        if len(head) != 12 or head[:4] != ENVF_MAGIC:
            raise ImagingError(f"{path}: not an ENVF file")
        h, w = struct.unpack("<II", head[4:])
        payload = f.read(h * w * 3 * 4)
    if len(payload) != h * w * 3 * 4:
        raise ImagingError(f"{path}: truncated ENVF payload")
    env = np.frombuffer(payload, dtype="<f4").reshape(h, w, 3).astype(np.float32)
    return validate_envmap(env)


def save_envmap(env, path):
    env = validate_envmap(env).astype("<f4")
    with open(path, "wb") as f:
        f.write(ENVF_MAGIC)
        f.write(struct.pack("<II", env.shape[0], env.shape[1]))
        f.write(np.ascontiguousarray(env).tobytes())


def fov_column_range(width, fov_deg):
    """Column span of a horizontal crop of `fov_deg` centered on forward."""
    if not 0.0 < fov_deg <= 360.0:
        raise ImagingError(f"fov must be in (0, 360], got {fov_deg}")
    span = width * (fov_deg / 360.0)
    center = width / 2.0
    lo = int(round(center - span / 2.0))
    hi = int(round(center + span / 2.0))
    lo = max(0, lo)
    hi = min(width, max(hi, lo + 1))
    return lo, hi


def env_to_monitor(env, fov_deg, out_h, out_w, clip_percentile=99.0,
                   normalize=True):
    """Crop the frontal region of an equirectangular map to a monitor light.

    The crop spans `fov_deg` horizontally centered on the forward direction
    and the central half of latitude rows. HDR values are clipped at the
    given percentile of the crop and scaled to [0, 1] (with normalize=False
    values are clipped to [0, 1] unscaled), then resampled to out_h x out_w.
    """
    env = validate_envmap(env)
    h, w = env.shape[:2]
    lo, hi = fov_column_range(w, fov_deg)
    r_lo = h // 4
    r_hi = max(h - h // 4, r_lo + 1)
    crop = env[r_lo:r_hi, lo:hi].astype(np.float64)
    if normalize:
        peak = float(np.percentile(crop, clip_percentile))
        if peak <= 0.0:
            ldr = np.zeros_like(crop)
        else:
            ldr = np.clip(crop, 0.0, peak) / peak
    else:
        ldr = np.clip(crop, 0.0, 1.0)
    out = backend.resize_hwc(ldr.astype(np.float32), out_h, out_w)
    return np.clip(out, 0.0, 1.0)
