import dataclasses

import numpy as np
import pytest

from relightkit import model as M
from relightkit.nn import Linear, Tensor, no_grad

from conftest import GRADCHECK_ARCH, TINY_ARCH, fd_gradcheck


def _params_equal(a, b):
    pa, pb = dict(a.named_parameters()), dict(b.named_parameters())
    return set(pa) == set(pb) and all(
        np.array_equal(pa[k].data, pb[k].data) for k in pa)


def expected_param_count(cfg):
    """Closed-form parameter count from the architecture config."""
    total = 0
    cin = 3
    for c in cfg.widths:
        total += cin * c * 9 + c                      # encoder 3x3 convs
        cin = c
    dims = [cfg.monitor_h * cfg.monitor_w * 3, *cfg.mlp_hidden,
            cfg.light_embed_dim]
    for a, b in zip(dims[:-1], dims[1:]):
        total += a * b + b                            # light MLP
    d = cfg.light_embed_dim
    for c in cfg.widths:
        total += d * 2 * c + 2 * c                    # de-light AdaIN heads
    for c in cfg.widths[:-1]:
        total += d * 2 * c + 2 * c                    # re-light AdaIN heads
    for i in range(cfg.n_levels - 1):                 # decoder 3x3 convs
        total += (cfg.widths[i + 1] + cfg.widths[i]) * cfg.widths[i] * 9 \
            + cfg.widths[i]
    total += cfg.widths[0] * 3 * 9 + 3                # to-RGB conv
    pc = cfg.pred_channels
    for i in cfg.pred_level_indices():                # light decoder
        total += cfg.widths[i] * pc * 1 + pc          # 1x1 projection
        total += pc * 1 * 1 + 1                       # confidence head
    total += pc * pc * 9 + pc                         # fused-grid conv
    total += pc * 3 * 9 + 3                           # to-monitor conv
    return total


class TestConfig:
    def test_default_validates(self):
        M.ArchConfig().validate()

    def test_rejects_bad_configs(self):
        with pytest.raises(M.ModelError):
            M.ArchConfig(n_levels=1, widths=(8,), strides=(1,)).validate()
        with pytest.raises(M.ModelError):
            M.ArchConfig(input_resolution=100).validate()  # not divisible
        with pytest.raises(M.ModelError):
            M.ArchConfig(strides=(1, 2, 3, 2, 2, 2, 2)).validate()

    def test_round_trip_dict(self):
        cfg = TINY_ARCH
        assert M.ArchConfig.from_dict(cfg.to_dict()) == cfg


class TestGenerator:
    def test_init_deterministic(self):
        a = M.init_generator(TINY_ARCH, seed=3)
        b = M.init_generator(TINY_ARCH, seed=3)
        assert _params_equal(a, b)
        c = M.init_generator(TINY_ARCH, seed=4)
        assert not _params_equal(a, c)

    def test_param_count_matches_closed_form(self):
        for cfg in (TINY_ARCH, M.ArchConfig()):
            gen = M.init_generator(cfg, seed=0)
            assert gen.param_count() == expected_param_count(cfg)

    def test_pyramid_dims_default_config(self):
        gen = M.init_generator(M.ArchConfig(), seed=0)
        img = Tensor(np.zeros((1, 3, 128, 128), np.float32))
        with no_grad():
            pyr = gen.encode(img)
        assert [p.shape[2] for p in pyr] == [128, 64, 32, 16, 8, 4, 2]

    def test_encode_deterministic_and_rejects_bad_res(self, rng):
        gen = M.init_generator(TINY_ARCH, seed=0)
        x = Tensor(rng.random((2, 3, 16, 16)).astype(np.float32))
        with no_grad():
            a = gen.encode(x)
            b = gen.encode(x)
        assert all(np.array_equal(p.numpy(), q.numpy()) for p, q in zip(a, b))
        with pytest.raises(M.ModelError):
            gen.encode(Tensor(np.zeros((1, 3, 8, 8), np.float32)))

    def test_zero_image_zero_pyramid_at_init(self):
        gen = M.init_generator(TINY_ARCH, seed=0)   # biases start at zero
        with no_grad():
            pyr = gen.encode(Tensor(np.zeros((1, 3, 16, 16), np.float32)))
        for p in pyr:
            assert np.all(p.numpy() == 0.0)

    def test_embedding_dim_default_256(self, rng):
        gen = M.init_generator(M.ArchConfig(), seed=0)
        light = Tensor(rng.random((1, 3, 16, 32)).astype(np.float32))
        with no_grad():
            e = gen.embed_light(light)
        assert e.shape == (1, 256)

    def test_identical_lights_identical_embeddings(self, rng):
        gen = M.init_generator(TINY_ARCH, seed=0)
        light = Tensor(rng.random((1, 3, 4, 8)).astype(np.float32))
        with no_grad():
            assert np.array_equal(gen.embed_light(light).numpy(),
                                  gen.embed_light(light).numpy())

    def test_zero_light_zero_embedding_at_init(self):
        gen = M.init_generator(TINY_ARCH, seed=0)
        with no_grad():
            e = gen.embed_light(Tensor(np.zeros((1, 3, 4, 8), np.float32)))
        assert np.all(e.numpy() == 0.0)


class TestAdain:
    def test_fresh_head_is_pure_instance_norm(self, rng):
        head = Linear(6, 8, rng, dtype=np.float64, zero_init=True)
        f = Tensor(rng.standard_normal((2, 4, 8, 8)))
        e = Tensor(rng.standard_normal((2, 6)))
        out = M.adain(f, e, head).numpy()
        np.testing.assert_allclose(out.mean(axis=(2, 3)), 0.0, atol=1e-4)
        np.testing.assert_allclose(out.var(axis=(2, 3)), 1.0, atol=1e-4)

    def test_head_statistics_mean3_std2(self, rng):
        # head output: delta-gamma = 1 (scale 2), beta = 3
        head = Linear(5, 8, rng, dtype=np.float64, zero_init=True)
        head.bias.data[:4] = 1.0
        head.bias.data[4:] = 3.0
        f = Tensor(rng.standard_normal((3, 4, 16, 16)) * 2.5 + 1.0)
        e = Tensor(rng.standard_normal((3, 5)))
        out = M.adain(f, e, head).numpy()
        np.testing.assert_allclose(out.mean(axis=(2, 3)), 3.0, atol=1e-4)
        np.testing.assert_allclose(out.std(axis=(2, 3)), 2.0, atol=1e-4)

    def test_per_channel_affine_inputs_normalize_identically(self, rng):
        head = Linear(5, 6, rng, dtype=np.float64, zero_init=True)
        f = rng.standard_normal((1, 3, 12, 12))
        scale = rng.uniform(0.5, 2.0, (1, 3, 1, 1))
        shift = rng.uniform(-1.0, 1.0, (1, 3, 1, 1))
        e = Tensor(rng.standard_normal((1, 5)))
        a = M.adain(Tensor(f), e, head).numpy()
        b = M.adain(Tensor(f * scale + shift), e, head).numpy()
        # variance changes by scale^2, so eps introduces a tiny mismatch only
        np.testing.assert_allclose(a, b, atol=1e-4)

    def test_channel_mismatch_raises(self, rng):
        head = Linear(5, 6, rng, zero_init=True)   # 2*3 channels
        f = Tensor(rng.standard_normal((1, 4, 8, 8)).astype(np.float32))
        e = Tensor(rng.standard_normal((1, 5)).astype(np.float32))
        with pytest.raises(Exception):
            M.adain(f, e, head)


class TestDelight:
    def test_ablation_flag_returns_input_unchanged(self, rng):
        cfg = dataclasses.replace(TINY_ARCH, use_lcfn=False)
        gen = M.init_generator(cfg, seed=0)
        x = Tensor(rng.random((1, 3, 16, 16)).astype(np.float32))
        light = Tensor(rng.random((1, 3, 4, 8)).astype(np.float32))
        with no_grad():
            pyr = gen.encode(x)
            e = gen.embed_light(light)
            d = gen.delight(pyr, e)
        assert all(np.array_equal(a.numpy(), b.numpy())
                   for a, b in zip(pyr, d))

    def test_fresh_params_instance_normalize_each_level(self, rng):
        gen = M.init_generator(TINY_ARCH, seed=0, dtype=np.float64)
        x = Tensor(rng.random((2, 3, 16, 16)))
        light = Tensor(rng.random((2, 3, 4, 8)))
        with no_grad():
            d = gen.delight(gen.encode(x), gen.embed_light(light))
        for level in d:
            arr = level.numpy()
            np.testing.assert_allclose(arr.mean(axis=(2, 3)), 0.0, atol=1e-3)
            # low-variance channels are pulled slightly below unit variance
            # by eps; bound rather than pin
            assert np.all(arr.var(axis=(2, 3)) < 1.0 + 1e-3)


class TestPredictSourceLight:
    def test_confidence_weights_sum_to_one(self, rng):
        gen = M.init_generator(TINY_ARCH, seed=0)
        x = Tensor(rng.random((2, 3, 16, 16)).astype(np.float32))
        with no_grad():
            _, confs = gen.predict_source_light(gen.encode(x))
        total = np.stack(confs).sum(axis=0)
        np.testing.assert_allclose(total, 1.0, atol=1e-6)

    def test_output_in_unit_range_and_monitor_shape(self, rng):
        gen = M.init_generator(TINY_ARCH, seed=0)
        x = Tensor(rng.random((2, 3, 16, 16)).astype(np.float32))
        with no_grad():
            light, _ = gen.predict_source_light(gen.encode(x))
        assert light.shape == (2, 3, 4, 8)
        assert light.numpy().min() >= 0.0 and light.numpy().max() <= 1.0

    def test_ablation_flag_gives_constant_half(self, rng):
        cfg = dataclasses.replace(TINY_ARCH, use_light_prediction=False)
        gen = M.init_generator(cfg, seed=0)
        x = Tensor(rng.random((1, 3, 16, 16)).astype(np.float32))
        with no_grad():
            light, confs = gen.predict_source_light(gen.encode(x))
        assert np.all(light.numpy() == 0.5)
        total = np.stack(confs).sum(axis=0)
        np.testing.assert_allclose(total, 1.0, atol=1e-6)


class TestDecodeAndRelight:
    def test_decode_restores_input_resolution_and_range(self, rng):
        gen = M.init_generator(TINY_ARCH, seed=0)
        x = Tensor(rng.random((2, 3, 16, 16)).astype(np.float32))
        light = Tensor(rng.random((2, 3, 4, 8)).astype(np.float32))
        with no_grad():
            out, _ = gen.relight(x, light, light)
        assert out.shape == (2, 3, 16, 16)
        assert out.numpy().min() >= 0.0 and out.numpy().max() <= 1.0

    def test_target_light_changes_output(self, rng):
        gen = M.init_generator(TINY_ARCH, seed=0)
        # nudge one decoder AdaIN head off its zero init
        gen.relight_heads[0].weight.data += 0.3
        x = Tensor(rng.random((1, 3, 16, 16)).astype(np.float32))
        la = Tensor(rng.random((1, 3, 4, 8)).astype(np.float32))
        lb = Tensor(rng.random((1, 3, 4, 8)).astype(np.float32))
        with no_grad():
            a, _ = gen.relight(x, la, la)
            b, _ = gen.relight(x, la, lb)
        assert np.abs(a.numpy() - b.numpy()).max() > 0.0

    def test_relight_deterministic(self, rng):
        gen = M.init_generator(TINY_ARCH, seed=0)
        img = rng.random((16, 16, 3)).astype(np.float32)
        light = rng.random((4, 8, 3)).astype(np.float32)
        a = M.relight_image(gen, img, light, light)
        b = M.relight_image(gen, img, light, light)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_absent_source_equals_explicit_predicted(self, rng):
        gen = M.init_generator(TINY_ARCH, seed=0)
        img = rng.random((16, 16, 3)).astype(np.float32)
        l_trg = rng.random((4, 8, 3)).astype(np.float32)
        out_auto, l_hat = M.relight_image(gen, img, None, l_trg)
        out_explicit, _ = M.relight_image(gen, img, l_hat, l_trg)
        np.testing.assert_allclose(out_auto, out_explicit, atol=1e-6)


class TestDiscriminator:
    def test_map_dims_default_stack(self):
        disc = M.init_discriminator(M.ArchConfig(), seed=0)
        x = Tensor(np.zeros((1, 3, 128, 128), np.float32))
        with no_grad():
            s = disc(x)
        assert s.shape == (1, 1, 8, 8)    # 128 / 2^4

    def test_deterministic(self, rng):
        disc = M.init_discriminator(TINY_ARCH, seed=0)
        x = Tensor(rng.random((1, 3, 16, 16)).astype(np.float32))
        with no_grad():
            assert np.array_equal(disc(x).numpy(), disc(x).numpy())

    def test_input_gradient_matches_finite_differences(self, rng):
        disc = M.init_discriminator(GRADCHECK_ARCH, seed=0, dtype=np.float64)
        x = Tensor(rng.random((1, 3, 8, 8)), requires_grad=True)

        def f():
            return disc(x).mean()

        n, bad, worst = fd_gradcheck(f, [x], n_coords=20)
        assert bad == 0, worst


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path, rng):
        gen = M.init_generator(TINY_ARCH, seed=1)
        disc = M.init_discriminator(TINY_ARCH, seed=2)
        path = tmp_path / "ck.rlkc"
        M.save_checkpoint(path, gen, disc, step=17)
        ckpt = M.load_checkpoint(path)
        assert ckpt["step"] == 17
        assert ckpt["arch"] == TINY_ARCH
        gen2 = M.restore_generator(ckpt)
        disc2 = M.restore_discriminator(ckpt)
        assert _params_equal(gen, gen2)
        assert _params_equal(disc, disc2)

    def test_rejects_non_checkpoint(self, tmp_path):
        p = tmp_path / "bogus.rlkc"
        p.write_bytes(b"garbage data")
        with pytest.raises(M.ModelError):
            M.load_checkpoint(p)

    def test_state_dict_shape_mismatch_rejected(self):
        gen = M.init_generator(TINY_ARCH, seed=1)
        state = gen.state_dict()
        key = next(iter(state))
        state[key] = np.zeros((1, 2, 3))
        with pytest.raises(ValueError):
            gen.load_state_dict(state)
