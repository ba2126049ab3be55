"""Analytic face-proxy renderer and paired-dataset generator.

The proxy is a superellipsoid head with an expression-driven mouth bulge,
lit by a planar monitor in front of it. Every monitor pixel acts as a point
emitter, so shading is an explicit sum that is exactly linear in the monitor
image before clipping -- which makes the renderer usable as a ground-truth
oracle for relighting: any two lights yield pixel-aligned image pairs under
identical pose.

Dataset layout written by gen_dataset:

    <root>/<seq_id>/frame_%06d.png
    <root>/<seq_id>/light_%06d.png
    <root>/manifest            (header line + one JSON record per frame)
"""

import json
import os
import tempfile
from dataclasses import dataclass, field, asdict

import numpy as np

from . import imaging
from .nn import backend

# head frame: x right, y up, z toward the camera/monitor; units ~ head radii
HEAD_RADII = np.array([0.72, 0.95, 0.78])
HEAD_EXPONENT = 2.6
BUMP_CENTER = np.array([0.0, -0.50, 0.60])
BUMP_SIGMA = 0.20
BUMP_AMP = 0.55

VIEW_HALF = 1.15          # orthographic half-width of the camera window
RAY_Z = (1.15, -1.15)     # march range along z
N_MARCH = 72
N_BISECT = 30

MONITOR_Z = 2.1           # monitor plane in front of the face
MONITOR_W = 2.8
MONITOR_H = 1.4
PEAK_DIFFUSE = 0.8        # white-monitor peak diffuse after normalization

YAW_RANGE = (-0.6, 0.6)
PITCH_RANGE = (-0.4, 0.4)

# (x, y) head-frame landmark anchors; z is solved on the surface
LANDMARKS_XY = np.array([
    [0.00, 0.55],            # forehead
    [-0.30, 0.38], [0.30, 0.38],    # brows
    [-0.28, 0.22], [0.28, 0.22],    # eye centers
    [-0.46, 0.24], [0.46, 0.24],    # eye outer corners
    [0.00, -0.02],           # nose tip
    [0.00, -0.18],           # nose base
    [-0.48, -0.10], [0.48, -0.10],  # cheeks
    [-0.26, -0.46], [0.26, -0.46],  # mouth corners
    [0.00, -0.38],           # mouth top
    [0.00, -0.62],           # mouth bottom
    [0.00, -0.82],           # chin
])
MIRROR_INDEX = [0, 2, 1, 4, 3, 6, 5, 7, 8, 10, 9, 12, 11, 13, 14, 15]
N_LANDMARKS = len(LANDMARKS_XY)


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class PoseParams:
    yaw: float = 0.0
    pitch: float = 0.0
    expression: float = 0.0

    def validate(self):
        if not YAW_RANGE[0] <= self.yaw <= YAW_RANGE[1]:
            raise SynthError(f"yaw {self.yaw} outside {YAW_RANGE}")
        if not PITCH_RANGE[0] <= self.pitch <= PITCH_RANGE[1]:
            raise SynthError(f"pitch {self.pitch} outside {PITCH_RANGE}")
        if not 0.0 <= self.expression <= 1.0:
            raise SynthError(f"expression {self.expression} outside [0, 1]")
        return self


@dataclass
class MaterialParams:
    albedo: np.ndarray = None          # (H, W, 3) texture in [0, 1]
    specular_strength: float = 0.18
    shininess: float = 24.0
    ambient: tuple = (0.05, 0.05, 0.06)

    def __post_init__(self):
        if self.albedo is None:
            self.albedo = default_albedo()
        if self.specular_strength < 0:
            raise SynthError("specular_strength must be >= 0")
        if self.shininess < 1:
            raise SynthError("shininess must be >= 1")
        amb = np.asarray(self.ambient, dtype=np.float64)
        if amb.shape != (3,) or amb.min() < 0 or amb.max() > 1:
            raise SynthError("ambient must be an RGB triple in [0, 1]")


def default_albedo(res=64, rng=None):
    """Procedural face texture: skin base, eye/brow/lip features.

    With an rng, the base tone is jittered (stands in for day-to-day
    appearance changes between capture sequences).
    """
    base = np.array([0.82, 0.64, 0.52])
    if rng is not None:
        base = np.clip(base + rng.uniform(-0.08, 0.08, 3), 0.05, 0.95)
    tex = np.ones((res, res, 3)) * base
    yy, xx = np.mgrid[0:res, 0:res]
    u = xx / (res - 1) * 2 - 1      # head-frame x/rx
    v = 1 - yy / (res - 1) * 2      # head-frame y/ry

    def blob(cx, cy, sx, sy):
        return np.exp(-(((u - cx) / sx) ** 2 + ((v - cy) / sy) ** 2))

    eyes = blob(-0.39, 0.23, 0.13, 0.07) + blob(0.39, 0.23, 0.13, 0.07)
    brows = blob(-0.42, 0.40, 0.16, 0.04) + blob(0.42, 0.40, 0.16, 0.04)
    lips = blob(0.0, -0.52, 0.33, 0.08)
    tex *= (1.0 - 0.75 * np.clip(eyes, 0, 1)[..., None])
    tex *= (1.0 - 0.55 * np.clip(brows, 0, 1)[..., None])
    tex = tex * (1 - 0.5 * np.clip(lips, 0, 1)[..., None]) + \
        0.5 * np.clip(lips, 0, 1)[..., None] * np.array([0.55, 0.25, 0.25])
    return np.clip(tex, 0.0, 1.0).astype(np.float32)


def rotation(pose):
    """World-from-head rotation: yaw about y, then pitch about x."""
    cy, sy = np.cos(pose.yaw), np.sin(pose.yaw)
    cp, sp = np.cos(pose.pitch), np.sin(pose.pitch)
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    return rx @ ry


def implicit(q, expression):
    """Signed field of the head surface; negative inside, zero on surface."""
    u = q / HEAD_RADII
    base = (np.abs(u) ** HEAD_EXPONENT).sum(axis=-1) - 1.0
    d = q - BUMP_CENTER
    bump = np.exp(-(d * d).sum(axis=-1) / (2.0 * BUMP_SIGMA ** 2))
    return base - expression * BUMP_AMP * bump


def implicit_grad(q, expression):
    u = q / HEAD_RADII
    g = (HEAD_EXPONENT / HEAD_RADII) * np.sign(u) * \
        np.abs(u) ** (HEAD_EXPONENT - 1.0)
    d = q - BUMP_CENTER
    bump = np.exp(-(d * d).sum(axis=-1, keepdims=True) /
                  (2.0 * BUMP_SIGMA ** 2))
    g += expression * BUMP_AMP * bump * d / (BUMP_SIGMA ** 2)
    return g


def _march_front(xy_world, rot_t, expression):
    """Front surface z for rays along -z through the given world (x, y).

    Returns (hit mask, z values). Coarse march brackets the first outside->
    inside crossing, bisection refines it.
    """
    n = xy_world.shape[0]
    z_hi, z_lo = RAY_Z
    zs = np.linspace(z_hi, z_lo, N_MARCH)
    p = np.empty((n, 3))
    p[:, 0] = xy_world[:, 0]
    p[:, 1] = xy_world[:, 1]
    prev_f = np.full(n, np.inf)
    lo = np.full(n, np.nan)
    hi = np.full(n, np.nan)
    found = np.zeros(n, dtype=bool)
    for k, z in enumerate(zs):
        p[:, 2] = z
        f = implicit(p @ rot_t.T, expression)
        cross = (~found) & (prev_f > 0) & (f <= 0)
        if cross.any():
            hi[cross] = zs[k - 1]
            lo[cross] = z
            found[cross] = True
        prev_f = f
    if not found.any():
        return found, np.full(n, np.nan)
    a = hi[found].copy()
    b = lo[found].copy()
    pf = np.empty((found.sum(), 3))
    pf[:, 0] = xy_world[found, 0]
    pf[:, 1] = xy_world[found, 1]
    for _ in range(N_BISECT):
        mid = 0.5 * (a + b)
        pf[:, 2] = mid
        fm = implicit(pf @ rot_t.T, expression)
        pos = fm > 0
        a = np.where(pos, mid, a)
        b = np.where(pos, b, mid)
    z = np.full(n, np.nan)
    z[found] = 0.5 * (a + b)
    return found, z


def _emitters(light):
    """Monitor pixel centers and their radiances; pixel (0,0) is top-left."""
    mh, mw = light.shape[:2]
    xs = (np.arange(mw) + 0.5) / mw * MONITOR_W - MONITOR_W / 2
    ys = MONITOR_H / 2 - (np.arange(mh) + 0.5) / mh * MONITOR_H
    ex, ey = np.meshgrid(xs, ys)
    pos = np.stack([ex, ey, np.full_like(ex, MONITOR_Z)], axis=-1)
    return pos.reshape(-1, 3), light.reshape(-1, 3).astype(np.float64)


def _diffuse_sum(points, normals, epos):
    """Sum_i max(0, n.w_i)/d_i^2 per emitter; (P, K) geometry matrix."""
    delta = epos[None, :, :] - points[:, None, :]
    d2 = (delta * delta).sum(-1)
    w = delta / np.sqrt(d2)[..., None]
    ndotw = np.maximum(0.0, (normals[:, None, :] * w).sum(-1))
    return ndotw / d2, w, d2


def _pow(x, p):
    """x**p, with squaring-based evaluation for integer exponents."""
    if not float(p).is_integer():
        return x ** p
    n = int(p)
    result = None
    base = x
    while n:
        if n & 1:
            result = base if result is None else result * base
        n >>= 1
        if n:
            base = base * base
    return result


_KNORM_CACHE = {}


def shading_norm(mh, mw):
    """Normalization constant: white monitor -> peak diffuse PEAK_DIFFUSE.

    Evaluated once per monitor grid on a frontal neutral pose at a fixed
    internal resolution; deterministic.
    """
    key = (mh, mw)
    if key in _KNORM_CACHE:
        return _KNORM_CACHE[key]
    aux = _surface_points(PoseParams(), res=64)
    epos, _ = _emitters(np.ones((mh, mw, 3)))
    geom, _, _ = _diffuse_sum(aux["points"], aux["normals"], epos)
    peak = geom.sum(axis=1).max()
    k = PEAK_DIFFUSE / peak
    _KNORM_CACHE[key] = k
    return k


def _pixel_grid(res):
    ij = (np.arange(res) + 0.5) / res
    x = ij * 2 * VIEW_HALF - VIEW_HALF
    y = VIEW_HALF - ij * 2 * VIEW_HALF
    xx, yy = np.meshgrid(x, y)
    return np.stack([xx.ravel(), yy.ravel()], axis=-1)


def _surface_points(pose, res):
    """Ray-march the proxy for every pixel; world points, normals, mask, uv."""
    pose.validate()
    rot = rotation(pose)
    xy = _pixel_grid(res)
    mask, z = _march_front(xy, rot, pose.expression)
    pts = np.concatenate([xy[mask], z[mask, None]], axis=1)
    q = pts @ rot          # head-frame coords (rot^T pts)
    grad = implicit_grad(q, pose.expression)
    n_world = grad @ rot.T
    n_world /= np.linalg.norm(n_world, axis=1, keepdims=True)
    uv = np.stack([(q[:, 0] / HEAD_RADII[0] + 1) / 2,
                   (1 - q[:, 1] / HEAD_RADII[1]) / 2], axis=-1)
    return {"mask": mask.reshape(res, res), "points": pts, "normals": n_world,
            "uv": np.clip(uv, 0.0, 1.0), "head_q": q}


def _sample_texture(tex, uv):
    h, w = tex.shape[:2]
    fx = uv[:, 0] * (w - 1)
    fy = uv[:, 1] * (h - 1)
    x0 = np.clip(np.floor(fx).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(fy).astype(int), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (fx - x0)[:, None]
    ay = (fy - y0)[:, None]
    return ((tex[y0, x0] * (1 - ax) + tex[y0, x1] * ax) * (1 - ay) +
            (tex[y1, x0] * (1 - ax) + tex[y1, x1] * ax) * ay)


def render_proxy(pose, light, mat, res, clip=True, return_aux=False):
    """Render the proxy under a monitor light; background stays black.

    color = ambient*albedo
          + albedo * sum_i L_i max(0, n.w_i)/d_i^2 * k_norm
          + specular_strength * sum_i L_i max(0, n.h_i)^shininess * k_norm
    """
    light = imaging.validate_image(light, "monitor light")
    aux = _surface_points(pose, res)
    pts, normals = aux["points"], aux["normals"]
    epos, erad = _emitters(light)
    k = shading_norm(*light.shape[:2])
    geom, w, _ = _diffuse_sum(pts, normals, epos)
    albedo = _sample_texture(np.asarray(mat.albedo, dtype=np.float64),
                             aux["uv"])
    diffuse = albedo * (geom @ erad) * k

    half = w + np.array([0.0, 0.0, 1.0])    # view direction is +z
    half /= np.linalg.norm(half, axis=-1, keepdims=True)
    ndoth = np.maximum(0.0, (normals[:, None, :] * half).sum(-1))
    spec = mat.specular_strength * (_pow(ndoth, mat.shininess) @ erad) * k

    color = np.asarray(mat.ambient) * albedo + diffuse + spec
    if clip:
        color = np.clip(color, 0.0, 1.0)
    img = np.zeros((res, res, 3))
    img[aux["mask"]] = color
    img = img.astype(np.float32)
    if clip:
        img = np.clip(img, 0.0, 1.0)
    if return_aux:
        return img, aux
    return img


def keypoints_of(pose):
    """Project head-frame landmarks to normalized [0, 1]^2 coordinates.

    Mouth anchors move with expression (opening), everything else is rigid."""
    pose.validate()
    rot = rotation(pose)
    pts = np.zeros((N_LANDMARKS, 3))
    pts[:, :2] = LANDMARKS_XY
    e = pose.expression
    pts[11, 0] -= 0.03 * e          # mouth corners widen and drop
    pts[12, 0] += 0.03 * e
    pts[11:13, 1] -= 0.03 * e
    pts[13, 1] += 0.04 * e          # mouth top/bottom separate
    pts[14, 1] -= 0.08 * e
    # solve the surface z for each (x, y) anchor by bisection along +z
    lo = np.zeros(N_LANDMARKS)
    hi = np.full(N_LANDMARKS, 1.2)
    q = pts.copy()
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        q[:, 2] = mid
        inside = implicit(q, pose.expression) <= 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    pts[:, 2] = 0.5 * (lo + hi)
    world = pts @ rot.T
    u = (world[:, 0] + VIEW_HALF) / (2 * VIEW_HALF)
    v = (VIEW_HALF - world[:, 1]) / (2 * VIEW_HALF)
    return np.clip(np.stack([u, v], axis=-1), 0.0, 1.0)


# --- procedural monitor lights ---------------------------------------------

def light_solid(mh, mw, color):
    return np.clip(np.ones((mh, mw, 3)) * np.asarray(color, dtype=np.float64),
                   0, 1).astype(np.float32)


def light_disk(mh, mw, center_uv, radius, color, bg=0.02):
    """Bright soft-edged disk; center_uv in [0,1]^2 (x, y from top-left)."""
    yy, xx = np.mgrid[0:mh, 0:mw]
    u = (xx + 0.5) / mw
    v = (yy + 0.5) / mh
    d = np.sqrt((u - center_uv[0]) ** 2 + ((v - center_uv[1]) *
                                           (mh / mw) * 2) ** 2)
    t = np.clip((radius - d) / (0.35 * radius), 0.0, 1.0)
    t = t * t * (3 - 2 * t)
    img = bg + t[..., None] * (np.asarray(color, dtype=np.float64) - bg)
    return np.clip(img, 0, 1).astype(np.float32)


def light_noise(mh, mw, rng, cells=(4, 8), lo=0.0, hi=1.0):
    """Low-frequency noise: a coarse random grid upsampled bilinearly."""
    coarse = rng.uniform(lo, hi, size=(cells[0], cells[1], 3))
    return np.clip(backend.resize_hwc(coarse.astype(np.float32), mh, mw),
                   0, 1).astype(np.float32)


# --- dataset generation ------------------------------------------------------

@dataclass
class GenConfig:
    seed: int = 0
    n_sequences: int = 8
    frames_per_sequence: int = 60
    resolution: int = 64
    monitor_h: int = 16
    monitor_w: int = 32
    grid_poses: int = 9
    grid_lights: int = 9
    ambient_presets: tuple = ((0.05, 0.05, 0.06), (0.10, 0.09, 0.08),
                              (0.03, 0.03, 0.03), (0.08, 0.06, 0.05))
    env_maps: tuple = ()         # ENVF paths; crops join the light rotation
    env_fov_deg: float = 180.0

    def validate(self):
        if self.n_sequences < 1 or self.frames_per_sequence < 1:
            raise SynthError("need at least one sequence and one frame")
        if self.resolution < 8:
            raise SynthError("resolution too small")
        if not 0.0 < self.env_fov_deg <= 360.0:
            raise SynthError("env_fov_deg must be in (0, 360]")
        return self


@dataclass
class FrameRecord:
    id: int
    seq: str
    t: int
    split: str
    image: str
    light: str
    pose: PoseParams
    keypoints: np.ndarray

    def to_json(self):
        return json.dumps({
            "id": self.id, "seq": self.seq, "t": self.t, "split": self.split,
            "image": self.image, "light": self.light,
            "pose": [round(self.pose.yaw, 6), round(self.pose.pitch, 6),
                     round(self.pose.expression, 6)],
            "keypoints": [round(float(v), 6)
                          for v in self.keypoints.ravel()],
        }, sort_keys=True)

    @staticmethod
    def from_json(line):
        d = json.loads(line)
        kp = np.asarray(d["keypoints"], dtype=np.float64).reshape(-1, 2)
        return FrameRecord(
            id=d["id"], seq=d["seq"], t=d["t"], split=d["split"],
            image=d["image"], light=d["light"],
            pose=PoseParams(*d["pose"]), keypoints=kp)


@dataclass
class DatasetManifest:
    header: dict
    records: list

    def by_split(self, split):
        return [r for r in self.records if r.split == split]

    def save(self, path):
        # single atomic step: write sibling temp file, then rename
        d = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".manifest-")
        try:
            with os.fdopen(fd, "w") as f:
                f.write(json.dumps(self.header, sort_keys=True) + "\n")
                for r in self.records:
                    f.write(r.to_json() + "\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @staticmethod
    def load(path):
        with open(path) as f:
            lines = f.read().splitlines()
        if not lines:
            raise SynthError(f"{path}: empty manifest")
        header = json.loads(lines[0])
        records = [FrameRecord.from_json(ln) for ln in lines[1:] if ln]
        ts = {}
        for r in records:
            if r.seq in ts and r.t <= ts[r.seq]:
                raise SynthError(f"{path}: timestamps not increasing in {r.seq}")
            ts[r.seq] = r.t
        return DatasetManifest(header, records)


def _smooth_pose_track(rng, n):
    """Random smooth pose trajectory: sum of low-frequency sinusoids."""
    t = np.arange(n) / max(n - 1, 1)

    def track(amp):
        f1, f2 = rng.uniform(0.5, 1.5), rng.uniform(1.5, 3.0)
        p1, p2 = rng.uniform(0, 2 * np.pi, 2)
        a = rng.uniform(0.3, 1.0) * amp
        return a * (0.7 * np.sin(2 * np.pi * f1 * t + p1) +
                    0.3 * np.sin(2 * np.pi * f2 * t + p2))

    yaw = np.clip(track(0.5), *YAW_RANGE)
    pitch = np.clip(track(0.3), *PITCH_RANGE)
    expr = np.clip(0.5 + track(0.5), 0.0, 1.0)
    return [PoseParams(float(a), float(b), float(c))
            for a, b, c in zip(yaw, pitch, expr)]


def _env_crop_track(rng, n, mh, mw, env, fov_deg):
    """Pan an equirectangular map horizontally and crop it as the monitor."""
    from . import imaging as im
    w = env.shape[1]
    f, p = rng.uniform(0.3, 0.8), rng.uniform(0, 2 * np.pi)
    t = np.arange(n) / max(n - 1, 1)
    shifts = (0.5 * np.sin(2 * np.pi * f * t + p) * w).astype(int)
    return [im.env_to_monitor(np.roll(env, int(s), axis=1), fov_deg, mh, mw)
            for s in shifts]


def _smooth_light_track(rng, n, mh, mw, env_maps=(), env_fov_deg=180.0):
    """Smoothly varying monitor content: moving disk, color drift, noise, or
    a panning environment-map crop when maps are supplied.

    A slow brightness envelope sweeps each track through dim and bright
    phases, so mined pairs cover large lighting changes (including toward
    near-darkness) rather than only neighboring video frames."""
    kind = rng.integers(0, 4 if env_maps else 3)
    if kind == 3:
        env = env_maps[rng.integers(0, len(env_maps))]
        return _env_crop_track(rng, n, mh, mw, env, env_fov_deg)
    t = np.arange(n) / max(n - 1, 1)
    fe, pe = rng.uniform(0.4, 1.0), rng.uniform(0, 2 * np.pi)
    envelope = 0.06 + 0.94 * (0.5 + 0.5 * np.sin(2 * np.pi * fe * t + pe)) ** 1.5
    if kind == 0:
        color = rng.uniform(0.5, 1.0, 3)
        bg = rng.uniform(0.0, 0.15)
        fx, fy = rng.uniform(0.5, 1.5, 2)
        px, py = rng.uniform(0, 2 * np.pi, 2)
        radius = rng.uniform(0.22, 0.45)
        frames = [light_disk(mh, mw,
                             (0.5 + 0.42 * np.sin(2 * np.pi * fx * tt + px),
                              0.5 + 0.42 * np.sin(2 * np.pi * fy * tt + py)),
                             radius, color, bg=bg) for tt in t]
    elif kind == 1:
        c0 = rng.uniform(0.02, 1.0, 3)
        c1 = rng.uniform(0.02, 1.0, 3)
        frames = [light_solid(mh, mw, (1 - tt) * c0 + tt * c1) for tt in t]
    else:
        a = light_noise(mh, mw, rng)
        b = light_noise(mh, mw, rng)
        frames = [np.clip((1 - tt) * a + tt * b, 0, 1).astype(np.float32)
                  for tt in t]
    return [np.clip(f * e, 0, 1).astype(np.float32)
            for f, e in zip(frames, envelope)]


def grid_poses(n=9):
    """Well-separated pose-expression combinations for the test grid."""
    yaws = [-0.45, 0.0, 0.45]
    pitches = [-0.25, 0.0, 0.25]
    exprs = [0.0, 0.5, 1.0]
    out = []
    for i in range(n):
        out.append(PoseParams(yaws[i % 3], pitches[(i // 3) % 3],
                              exprs[(i * 2) % 3]))
    return out


def grid_lights(mh, mw, n=9, rng=None):
    """Diverse, well-separated monitor lights for the test grid."""
    rng = rng or np.random.default_rng(12345)
    fixed = [
        light_solid(mh, mw, (1.0, 1.0, 1.0)),
        light_solid(mh, mw, (0.9, 0.55, 0.25)),
        light_solid(mh, mw, (0.25, 0.45, 0.95)),
        light_disk(mh, mw, (0.18, 0.5), 0.32, (1.0, 0.95, 0.9)),
        light_disk(mh, mw, (0.82, 0.5), 0.32, (1.0, 0.95, 0.9)),
        light_disk(mh, mw, (0.5, 0.15), 0.34, (0.9, 1.0, 0.9)),
        light_disk(mh, mw, (0.5, 0.85), 0.34, (1.0, 0.8, 0.8)),
        light_solid(mh, mw, (0.12, 0.12, 0.12)),
        light_noise(mh, mw, rng, cells=(3, 6), lo=0.1, hi=1.0),
    ]
    return fixed[:n] if n <= len(fixed) else fixed + [
        light_noise(mh, mw, rng) for _ in range(n - len(fixed))]


def gen_dataset(cfg, out_dir):
    """Render sequences + the pose/light test grid; returns the manifest.

    Training/holdout sequences vary pose and light smoothly; the last smooth
    sequence is the held-out one. The grid sequence enumerates grid_poses x
    grid_lights pose-major and is tagged split="test".
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    os.makedirs(out_dir, exist_ok=True)
    env_maps = tuple(imaging.load_envmap(p) for p in cfg.env_maps)
    records = []
    fid = 0

    def emit(seq, t, split, pose, light, mat):
        nonlocal fid
        img = render_proxy(pose, light, mat, cfg.resolution)
        seq_dir = os.path.join(out_dir, seq)
        os.makedirs(seq_dir, exist_ok=True)
        ipath = f"{seq}/frame_{t:06d}.png"
        lpath = f"{seq}/light_{t:06d}.png"
        imaging.save_image(img, os.path.join(out_dir, ipath))
        imaging.save_image(light, os.path.join(out_dir, lpath))
        records.append(FrameRecord(fid, seq, t, split, ipath, lpath, pose,
                                   keypoints_of(pose)))
        fid += 1

    for s in range(cfg.n_sequences):
        seq = f"seq_{s:03d}"
        split = "holdout" if s == cfg.n_sequences - 1 else "train"
        ambient = cfg.ambient_presets[s % len(cfg.ambient_presets)]
        mat = MaterialParams(albedo=default_albedo(rng=rng), ambient=ambient)
        poses = _smooth_pose_track(rng, cfg.frames_per_sequence)
        lights = _smooth_light_track(rng, cfg.frames_per_sequence,
                                     cfg.monitor_h, cfg.monitor_w,
                                     env_maps=env_maps,
                                     env_fov_deg=cfg.env_fov_deg)
        for t, (pose, light) in enumerate(zip(poses, lights)):
            emit(seq, t, split, pose, light, mat)

    mat = MaterialParams(albedo=default_albedo(),
                         ambient=cfg.ambient_presets[0])
    t = 0
    for pose in grid_poses(cfg.grid_poses):
        for light in grid_lights(cfg.monitor_h, cfg.monitor_w,
                                 cfg.grid_lights):
            emit("grid", t, "test", pose, light, mat)
            t += 1

    manifest = DatasetManifest(
        header={"kind": "relightkit-dataset", "version": 1,
                "resolution": cfg.resolution, "monitor_h": cfg.monitor_h,
                "monitor_w": cfg.monitor_w, "seed": cfg.seed,
                "n_landmarks": N_LANDMARKS,
                "n_sequences": cfg.n_sequences,
                "grid": [cfg.grid_poses, cfg.grid_lights]},
        records=records)
    manifest.save(os.path.join(out_dir, "manifest"))
    return manifest
