"""Relighting generator and patch discriminator.

The generator is a U-Net whose skip features are de-lit by AdaIN conditioned
on a source-light embedding and re-lit in the decoder by AdaIN conditioned on
a target-light embedding. Source lighting is additionally predicted from
intermediate encoder features via confidence-weighted fusion, so the model
can relight images whose true source lighting is unknown.

All forward methods are batched on (N, C, H, W) tensors; relight_image wraps
a single (H, W, 3) raster for CLI/eval use.
"""

import io
import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .nn import Adam, Conv2d, Linear, Module, Tensor, concat, no_grad, softmax_over

ADAIN_EPS = 1e-5

CKPT_MAGIC = b"RLKC"
CKPT_VERSION = 1


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ArchConfig:
    input_resolution: int = 128
    n_levels: int = 7
    widths: tuple = (16, 32, 64, 128, 256, 256, 256)
    strides: tuple = (1, 2, 2, 2, 2, 2, 2)
    light_embed_dim: int = 256
    monitor_h: int = 16
    monitor_w: int = 32
    mlp_hidden: tuple = (256, 256)
    pred_grid: tuple = (8, 16)
    pred_channels: int = 32
    pred_min_level: int = 3
    disc_channels: tuple = (32, 64, 128, 256)
    leaky_slope: float = 0.2
    use_lcfn: bool = True
    use_light_prediction: bool = True

    def validate(self):
        if self.n_levels < 2:
            raise ModelError("n_levels must be >= 2")
        if len(self.widths) != self.n_levels or len(self.strides) != self.n_levels:
            raise ModelError("widths/strides must have n_levels entries")
        if any(s not in (1, 2) for s in self.strides):
            raise ModelError("strides must be 1 or 2")
        stride_prod = int(np.prod(self.strides))
        if self.input_resolution % stride_prod:
            raise ModelError(f"resolution {self.input_resolution} not divisible "
                             f"by stride product {stride_prod}")
        if self.light_embed_dim < 1:
            raise ModelError("light_embed_dim must be >= 1")
        return self

    def level_dims(self):
        """Spatial size of each pyramid level."""
        dims, d = [], self.input_resolution
        for s in self.strides:
            d //= s
            dims.append(d)
        return dims

    def pred_level_indices(self):
        lo = min(self.pred_min_level, self.n_levels) - 1
        return list(range(lo, self.n_levels))

    def disc_map_dim(self):
        return self.input_resolution // (2 ** len(self.disc_channels))

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def from_dict(d):
        d = dict(d)
        for key in ("widths", "strides", "mlp_hidden", "pred_grid",
                    "disc_channels"):
            if key in d:
                d[key] = tuple(d[key])
        return ArchConfig(**d)


def adain(f, embedding, head, eps=ADAIN_EPS):
    """Instance-normalize f, then scale/shift per channel from the embedding.

    The head maps the embedding to 2C values; scale is parameterized as
    1 + delta so zero-initialized heads start as pure instance norm.
    """
    n, c = f.shape[0], f.shape[1]
    stats = head(embedding)
    gamma = 1.0 + stats[:, :c].reshape(n, c, 1, 1)
    beta = stats[:, c:].reshape(n, c, 1, 1)
    mu = f.mean(axis=(2, 3), keepdims=True)
    var = ((f - mu) ** 2).mean(axis=(2, 3), keepdims=True)
    return gamma * ((f - mu) / ((var + eps).sqrt())) + beta


class LightEncoder(Module):
    """MLP from a flattened monitor raster to the light embedding."""

    def __init__(self, cfg, rng, dtype):
        fin = cfg.monitor_h * cfg.monitor_w * 3
        dims = [fin, *cfg.mlp_hidden, cfg.light_embed_dim]
        self.layers = [Linear(a, b, rng, dtype=dtype)
                       for a, b in zip(dims[:-1], dims[1:])]
        self.slope = cfg.leaky_slope

    def __call__(self, light):
        n = light.shape[0]
        x = light.reshape(n, -1)
        for layer in self.layers[:-1]:
            x = layer(x).leaky_relu(self.slope)
        return self.layers[-1](x)


class LightDecoder(Module):
    """Source-light prediction from intermediate encoder features.

    Each tapped level is resampled to a fixed grid, projected to a common
    width, and scored by a per-level confidence map; a per-cell softmax over
    levels fuses the projections, and two convs + sigmoid map the fused grid
    to the monitor raster.
    """

    def __init__(self, cfg, rng, dtype):
        self.cfg = cfg
        taps = cfg.pred_level_indices()
        self.proj = [Conv2d(cfg.widths[i], cfg.pred_channels, 1, rng,
                            dtype=dtype) for i in taps]
        self.conf = [Conv2d(cfg.pred_channels, 1, 1, rng, dtype=dtype)
                     for _ in taps]
        self.head1 = Conv2d(cfg.pred_channels, cfg.pred_channels, 3, rng,
                            dtype=dtype)
        self.head2 = Conv2d(cfg.pred_channels, 3, 3, rng, dtype=dtype)

    def __call__(self, pyramid):
        cfg = self.cfg
        gh, gw = cfg.pred_grid
        projs, logits = [], []
        for proj, conf, idx in zip(self.proj, self.conf,
                                   cfg.pred_level_indices()):
            g = pyramid[idx].resize_bilinear(gh, gw)
            p = proj(g).leaky_relu(cfg.leaky_slope)
            projs.append(p)
            logits.append(conf(p))
        weights = softmax_over(logits)
        fused = weights[0] * projs[0]
        for w, p in zip(weights[1:], projs[1:]):
            fused = fused + w * p
        x = self.head1(fused).leaky_relu(cfg.leaky_slope)
        x = x.resize_bilinear(cfg.monitor_h, cfg.monitor_w)
        light = self.head2(x).sigmoid()
        conf_maps = [w.detach().numpy() for w in weights]
        return light, conf_maps


class Generator(Module):
    def __init__(self, cfg, rng, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        d = cfg.light_embed_dim
        chans = cfg.widths
        enc, cin = [], 3
        for c, s in zip(chans, cfg.strides):
            enc.append(Conv2d(cin, c, 3, rng, stride=s, dtype=dtype))
            cin = c
        self.encoder = enc
        self.light_encoder = LightEncoder(cfg, rng, dtype)
        self.light_decoder = LightDecoder(cfg, rng, dtype)
        # zero-initialized affine heads: identity normalization at step 0
        self.delight_heads = [Linear(d, 2 * c, rng, dtype=dtype,
                                     zero_init=True) for c in chans]
        self.relight_heads = [Linear(d, 2 * c, rng, dtype=dtype,
                                     zero_init=True) for c in chans[:-1]]
        self.decoder = [Conv2d(chans[i + 1] + chans[i], chans[i], 3, rng,
                               dtype=dtype) for i in range(cfg.n_levels - 1)]
        self.to_rgb = Conv2d(chans[0], 3, 3, rng, dtype=dtype)
        self.dtype = dtype

    # -- stages ---------------------------------------------------------------

    def encode(self, image):
        if image.shape[2] != self.cfg.input_resolution:
            raise ModelError(f"expected {self.cfg.input_resolution}px input, "
                             f"got {image.shape[2]}")
        pyr, x = [], image
        for conv in self.encoder:
            x = conv(x).leaky_relu(self.cfg.leaky_slope)
            pyr.append(x)
        return pyr

    def embed_light(self, light):
        if light.shape[2] != self.cfg.monitor_h or \
                light.shape[3] != self.cfg.monitor_w:
            raise ModelError(f"monitor light must be "
                             f"{self.cfg.monitor_h}x{self.cfg.monitor_w}")
        return self.light_encoder(light)

    def delight(self, pyramid, e_src):
        if not self.cfg.use_lcfn:
            return list(pyramid)
        return [adain(f, e_src, head)
                for f, head in zip(pyramid, self.delight_heads)]

    def predict_source_light(self, pyramid):
        if not self.cfg.use_light_prediction:
            n = pyramid[0].shape[0]
            flat = np.full((n, 3, self.cfg.monitor_h, self.cfg.monitor_w),
                           0.5, dtype=pyramid[0].dtype)
            n_taps = len(self.cfg.pred_level_indices())
            gh, gw = self.cfg.pred_grid
            conf = [np.full((n, 1, gh, gw), 1.0 / n_taps,
                            dtype=pyramid[0].dtype)] * n_taps
            return Tensor(flat), conf
        return self.light_decoder(pyramid)

    def decode(self, delit, e_trg):
        cfg = self.cfg
        dims = cfg.level_dims()
        x = delit[-1]
        for i in range(cfg.n_levels - 2, -1, -1):
            x = x.resize_bilinear(dims[i], dims[i])
            x = concat([x, delit[i]], axis=1)
            x = self.decoder[i](x).leaky_relu(cfg.leaky_slope)
            x = adain(x, e_trg, self.relight_heads[i])
        return self.to_rgb(x).sigmoid()

    def relight(self, i_src, l_src, l_trg):
        """Full pass: returns (relit image, predicted source light).

        l_src may be None; the predicted source light then conditions the
        de-lighting stage.
        """
        pyr = self.encode(i_src)
        l_hat, _ = self.predict_source_light(pyr)
        e_src = self.embed_light(l_src if l_src is not None else l_hat)
        e_trg = self.embed_light(l_trg)
        out = self.decode(self.delight(pyr, e_src), e_trg)
        return out, l_hat


class Discriminator(Module):
    """PatchGAN: stride-2 conv stack to a real-valued patch score map."""

    def __init__(self, cfg, rng, dtype=np.float32):
        self.cfg = cfg
        convs, cin = [], 3
        for c in cfg.disc_channels:
            convs.append(Conv2d(cin, c, 4, rng, stride=2, pad=1, dtype=dtype))
            cin = c
        self.convs = convs
        self.score = Conv2d(cin, 1, 3, rng, dtype=dtype)

    def __call__(self, image):
        if image.shape[2] != self.cfg.input_resolution:
            raise ModelError(f"expected {self.cfg.input_resolution}px input, "
                             f"got {image.shape[2]}")
        x = image
        for conv in self.convs:
            x = conv(x).leaky_relu(self.cfg.leaky_slope)
        return self.score(x)


def init_generator(cfg, seed, dtype=np.float32):
    return Generator(cfg, np.random.default_rng(seed), dtype=dtype)


def init_discriminator(cfg, seed, dtype=np.float32):
    return Discriminator(cfg, np.random.default_rng(seed), dtype=dtype)


# -- single-image wrappers ------------------------------------------------

def image_to_tensor(img, dtype=np.float32):
    arr = np.asarray(img, dtype=dtype)
    if arr.ndim == 3:
        arr = arr[None]
    return Tensor(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


def tensor_to_image(t):
    arr = t.numpy() if isinstance(t, Tensor) else t
    out = np.clip(arr.transpose(0, 2, 3, 1), 0.0, 1.0).astype(np.float32)
    return out[0] if out.shape[0] == 1 else out


def relight_image(gen, img, l_src, l_trg):
    """Relight one (H, W, 3) image; returns (relit image, predicted light)."""
    with no_grad():
        out, l_hat = gen.relight(
            image_to_tensor(img, gen.dtype),
            None if l_src is None else image_to_tensor(l_src, gen.dtype),
            image_to_tensor(l_trg, gen.dtype))
    return tensor_to_image(out), tensor_to_image(l_hat)


def predict_light_image(gen, img):
    with no_grad():
        pyr = gen.encode(image_to_tensor(img, gen.dtype))
        light, conf = gen.predict_source_light(pyr)
    return tensor_to_image(light), conf


# -- checkpoint container ------------------------------------------------
#
# Binary layout (little-endian):
#   magic "RLKC" | u32 version | u32 header_len | header JSON
#   u32 n_tensors | per tensor: u16 name_len, name, u8 dtype, u8 ndim,
#                               u32 dims..., raw payload
# Header carries the ArchConfig echo, step counter, and optimizer scalars.
# Loading requires an exact ArchConfig match.

_DTYPES = {0: np.float32, 1: np.float64}
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def _write_tensor(f, name, arr):
    arr = np.ascontiguousarray(arr)
    code = _DTYPE_CODES[arr.dtype]
    name_b = name.encode()
    f.write(struct.pack("<H", len(name_b)))
    f.write(name_b)
    f.write(struct.pack("<BB", code, arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def _read_tensor(f):
    (nlen,) = struct.unpack("<H", f.read(2))
    name = f.read(nlen).decode()
    code, ndim = struct.unpack("<BB", f.read(2))
    shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
    dt = np.dtype(_DTYPES[code]).newbyteorder("<")
    n = int(np.prod(shape)) if ndim else 1
    arr = np.frombuffer(f.read(n * dt.itemsize), dtype=dt).reshape(shape)
    return name, arr.astype(_DTYPES[code])


def save_checkpoint(path, gen, disc=None, step=0, opt_g=None, opt_d=None):
    tensors = {}
    for name, p in gen.named_parameters():
        tensors[f"gen.{name}"] = p.data
    if disc is not None:
        for name, p in disc.named_parameters():
            tensors[f"disc.{name}"] = p.data
    header = {"arch": gen.cfg.to_dict(), "step": int(step),
              "has_disc": disc is not None, "opt": {}}
    for tag, opt in (("g", opt_g), ("d", opt_d)):
        if opt is None:
            continue
        header["opt"][tag] = {"t": opt.t, "lr": opt.lr, "beta1": opt.beta1,
                              "beta2": opt.beta2, "eps": opt.eps}
        for key, arr in opt.state_dict().items():
            if key == "t":
                continue
            tensors[f"opt_{tag}.{key}"] = arr
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    head_b = json.dumps(header, sort_keys=True).encode()
    buf.write(struct.pack("<II", CKPT_VERSION, len(head_b)))
    buf.write(head_b)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        _write_tensor(buf, name, tensors[name])
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    with open(path, "rb") as f:
        if f.read(4) != CKPT_MAGIC:
            raise ModelError(f"{path}: not a relightkit checkpoint")
        version, hlen = struct.unpack("<II", f.read(8))
        if version != CKPT_VERSION:
            raise ModelError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode())
        (n,) = struct.unpack("<I", f.read(4))
        tensors = dict(_read_tensor(f) for _ in range(n))
    return {"arch": ArchConfig.from_dict(header["arch"]),
            "step": header["step"], "opt": header.get("opt", {}),
            "tensors": tensors}


def _strip(tensors, prefix):
    return {k[len(prefix):]: v for k, v in tensors.items()
            if k.startswith(prefix)}


def restore_generator(ckpt, dtype=np.float32):
    gen = init_generator(ckpt["arch"], seed=0, dtype=dtype)
    gen.load_state_dict(_strip(ckpt["tensors"], "gen."))
    return gen


def restore_discriminator(ckpt, dtype=np.float32):
    disc = init_discriminator(ckpt["arch"], seed=0, dtype=dtype)
    disc.load_state_dict(_strip(ckpt["tensors"], "disc."))
    return disc


def restore_adam(ckpt, tag, named_params):
    opt_cfg = ckpt["opt"][tag]
    opt = Adam(named_params, lr=opt_cfg["lr"], beta1=opt_cfg["beta1"],
               beta2=opt_cfg["beta2"], eps=opt_cfg["eps"])
    state = {"t": opt_cfg["t"]}
    state.update(_strip(ckpt["tensors"], f"opt_{tag}."))
    opt.load_state_dict(state)
    return opt


def generator_from_checkpoint(path, dtype=np.float32):
    ckpt = load_checkpoint(path)
    return restore_generator(ckpt, dtype=dtype), ckpt
