import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relightkit import evalkit as ek
from relightkit import imaging
from relightkit.pairing import PairIndex, PairingConfig, build_pairs
from relightkit.synthstage import DatasetManifest, FrameRecord, PoseParams


class TestRmse:
    def test_identical_zero(self, rng):
        a = rng.random((4, 4, 3))
        assert ek.rmse(a, a) == 0.0

    def test_zero_vs_one_255_scale(self):
        a = np.zeros((4, 4, 3))
        b = np.ones((4, 4, 3))
        assert ek.rmse(a, b, scale=255) == pytest.approx(255.0)
        assert ek.rmse(a, b) == pytest.approx(1.0)

    def test_matches_direct_summation(self, rng):
        a, b = rng.random((5, 7, 3)), rng.random((5, 7, 3))
        total = 0.0
        for i in range(5):
            for j in range(7):
                for c in range(3):
                    total += (a[i, j, c] - b[i, j, c]) ** 2
        assert ek.rmse(a, b) == pytest.approx(np.sqrt(total / (5 * 7 * 3)))

    def test_dim_mismatch(self, rng):
        with pytest.raises(ek.EvalError):
            ek.rmse(rng.random((4, 4, 3)), rng.random((4, 5, 3)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_metric_properties(self, seed):
        r = np.random.default_rng(seed)
        a, b, c = (r.random((3, 3, 3)) for _ in range(3))
        assert ek.rmse(a, b) == pytest.approx(ek.rmse(b, a))
        assert ek.rmse(a, a) == 0.0
        assert ek.rmse(a, c) <= ek.rmse(a, b) + ek.rmse(b, c) + 1e-12


class TestMaeLight:
    def test_examples(self, rng):
        a = rng.random((4, 8, 3))
        assert ek.mae_light(a, a) == 0.0
        assert ek.mae_light(np.zeros((2, 2, 3)),
                            np.ones((2, 2, 3))) == pytest.approx(1.0)

    def test_matches_direct(self, rng):
        a, b = rng.random((4, 8, 3)), rng.random((4, 8, 3))
        want = float(np.abs(a - b).sum() / a.size)
        assert ek.mae_light(a, b) == pytest.approx(want)

    def test_dim_mismatch(self, rng):
        with pytest.raises(ek.EvalError):
            ek.mae_light(rng.random((4, 8, 3)), rng.random((4, 4, 3)))


class TestTemporalConsistency:
    def test_constant_video(self):
        frames = [np.full((4, 4, 3), 0.3)] * 5
        rep = ek.temporal_consistency(frames)
        assert rep.mean_rmse == 0.0
        assert all(v == 0.0 for v in rep.rates.values())

    def test_uniform_half_step(self):
        frames = [np.zeros((4, 4, 3)), np.full((4, 4, 3), 0.5)]
        rep = ek.temporal_consistency(frames)
        assert rep.mean_rmse == pytest.approx(0.5)
        assert rep.rates[0.2] == rep.rates[0.3] == rep.rates[0.4] == 100.0

    def test_matches_bruteforce_on_long_sequence(self, rng):
        frames = [rng.random((6, 6, 3)) * (0.2 + 0.8 * rng.random())
                  for _ in range(100)]
        rep = ek.temporal_consistency(frames)
        diffs = [np.sqrt(((frames[i] - frames[i + 1]) ** 2).mean())
                 for i in range(99)]
        assert rep.n_adjacent == 99
        assert rep.mean_rmse == pytest.approx(np.mean(diffs))
        for t in (0.2, 0.3, 0.4):
            want = 100.0 * np.mean([d > t for d in diffs])
            assert rep.rates[t] == pytest.approx(want)

    def test_rates_monotone_in_threshold(self, rng):
        frames = [rng.random((6, 6, 3)) for _ in range(30)]
        rep = ek.temporal_consistency(frames, thresholds=(0.1, 0.2, 0.3, 0.4))
        vals = [rep.rates[t] for t in (0.1, 0.2, 0.3, 0.4)]
        assert all(a >= b for a, b in zip(vals[:-1], vals[1:]))

    def test_needs_two_frames(self):
        with pytest.raises(ek.EvalError):
            ek.temporal_consistency([np.zeros((4, 4, 3))])


class TestEvalPairs:
    def test_identity_stub_zero_error_when_src_equals_trg(self, tmp_path, rng):
        # two frames with identical image content, different lights
        img = rng.random((8, 8, 3)).astype(np.float32)
        lights = [np.zeros((2, 4, 3), np.float32),
                  np.ones((2, 4, 3), np.float32)]
        records = []
        for i in range(2):
            ip, lp = f"img_{i}.png", f"light_{i}.png"
            imaging.save_image(img, tmp_path / ip)
            imaging.save_image(lights[i], tmp_path / lp)
            records.append(FrameRecord(i, "s0", i, "test", ip, lp,
                                       PoseParams(), np.zeros((4, 2))))
        manifest = DatasetManifest({}, records)
        pairs = PairIndex([(0, 1, 0.0), (1, 0, 0.0)], {})
        report = ek.eval_pairs(None, pairs, manifest, tmp_path,
                               relight_fn=lambda im, ls, lt: im)
        assert report.n_unordered == 1
        assert report.aggregates["rmse"] <= 1.0 / 255   # quantization only

    def test_grid_scores_exactly_324_pairs(self, small_dataset):
        root, manifest = small_dataset
        pairs = build_pairs(manifest, root,
                            PairingConfig(tau=10.0, min_light_rmse=0.01),
                            splits={"test"})
        report = ek.eval_pairs(None, pairs, manifest, root,
                               relight_fn=lambda im, ls, lt: im)
        assert report.n_unordered == 324
        assert np.isfinite(report.aggregates["rmse"])
        assert report.aggregates["rmse"] == \
            pytest.approx(report.aggregates["copy_rmse"], abs=1e-6)

    def test_deterministic(self, small_dataset):
        root, manifest = small_dataset
        pairs = build_pairs(manifest, root,
                            PairingConfig(tau=10.0, min_light_rmse=0.01),
                            splits={"test"})
        sub = PairIndex(pairs.entries[:20], {})
        f = lambda im, ls, lt: np.clip(im * 0.5, 0, 1)
        a = ek.eval_pairs(None, sub, manifest, root, relight_fn=f)
        b = ek.eval_pairs(None, sub, manifest, root, relight_fn=f)
        assert a.aggregates == b.aggregates

    def test_report_round_trip(self, small_dataset, tmp_path):
        root, manifest = small_dataset
        pairs = build_pairs(manifest, root,
                            PairingConfig(tau=10.0, min_light_rmse=0.01),
                            splits={"test"})
        sub = PairIndex(pairs.entries[:10], {})
        rep = ek.eval_pairs(None, sub, manifest, root,
                            relight_fn=lambda im, ls, lt: im)
        path = tmp_path / "report.jsonl"
        rep.save(path)
        back = ek.PairReport.load(path)
        assert back.aggregates == rep.aggregates
        assert back.n_unordered == rep.n_unordered
        assert len(back.records) == len(rep.records)


class TestAblationCompare:
    def _report(self, value):
        return ek.PairReport([], {"pyramid_l1": value, "rmse": value * 2},
                             1, {})

    def test_pairwise_ordering(self):
        summary = ek.ablation_compare([("a", self._report(0.3)),
                                       ("b", self._report(0.1))])
        assert [r["name"] for r in summary["ranking"]] == ["b", "a"]
        assert summary["ties"] == []

    def test_equal_metrics_declared_tie(self):
        summary = ek.ablation_compare([("a", self._report(0.2)),
                                       ("b", self._report(0.2))])
        assert ("a", "b") in summary["ties"] or ("b", "a") in summary["ties"]

    def test_four_way_ranking(self):
        reports = [("base", self._report(0.4)), ("lcfn", self._report(0.2)),
                   ("lsrc", self._report(0.3)), ("full", self._report(0.1))]
        summary = ek.ablation_compare(reports)
        assert [r["name"] for r in summary["ranking"]] == \
            ["full", "lcfn", "lsrc", "base"]
        text = ek.format_ranking(summary)
        assert "full" in text and "pyramid_l1" in text

    def test_requires_two_reports(self):
        with pytest.raises(ek.EvalError):
            ek.ablation_compare([("a", self._report(0.1))])

    def test_missing_metric_rejected(self):
        with pytest.raises(ek.EvalError, match="lacks metric"):
            ek.ablation_compare([("a", self._report(0.1)),
                                 ("b", ek.PairReport([], {}, 1, {}))])
