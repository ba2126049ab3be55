import numpy as np
import pytest

from relightkit import imaging
from relightkit.pairing import (PairIndex, PairingConfig, PairingError,
                                build_pairs, keypoint_distance)
from relightkit.synthstage import (DatasetManifest, FrameRecord, PoseParams,
                                   light_solid)


def test_distance_identity():
    kp = np.random.default_rng(0).random((16, 2))
    assert keypoint_distance(kp, kp) == 0.0


def test_distance_three_four_five():
    a = np.array([[0.0, 0.0]])
    b = np.array([[3.0, 4.0]])
    assert keypoint_distance(a, b) == pytest.approx(5.0)


def test_distance_matches_bruteforce(rng):
    a = rng.random((10, 2))
    b = rng.random((10, 2))
    total = 0.0
    for k in range(10):
        total += (a[k, 0] - b[k, 0]) ** 2 + (a[k, 1] - b[k, 1]) ** 2
    assert keypoint_distance(a, b) == pytest.approx(np.sqrt(total / 10))


def test_distance_symmetric(rng):
    a, b = rng.random((8, 2)), rng.random((8, 2))
    assert keypoint_distance(a, b) == keypoint_distance(b, a)


def test_distance_length_mismatch():
    with pytest.raises(PairingError):
        keypoint_distance(np.zeros((3, 2)), np.zeros((4, 2)))


def _make_manifest(tmp_path, keypoints, lights, seq="s0", split="train"):
    """Write light PNGs and fabricate a manifest around given keypoints."""
    records = []
    for i, (kp, light) in enumerate(zip(keypoints, lights)):
        lp = f"{seq}_light_{i:06d}.png"
        imaging.save_image(light, tmp_path / lp)
        records.append(FrameRecord(id=i, seq=seq, t=i, split=split,
                                   image=lp, light=lp,
                                   pose=PoseParams(), keypoints=kp))
    return DatasetManifest({"kind": "test"}, records)


def test_single_shared_light_yields_no_pairs(tmp_path, rng):
    kps = [rng.random((4, 2)) * 0.001 for _ in range(6)]
    lights = [light_solid(2, 4, (0.5, 0.5, 0.5))] * 6
    man = _make_manifest(tmp_path, kps, lights)
    idx = build_pairs(man, tmp_path, PairingConfig(tau=1.0,
                                                   min_light_rmse=0.05))
    assert idx.entries == []


def test_grid_produces_648_directed_pairs(small_dataset):
    root, manifest = small_dataset
    idx = build_pairs(manifest, root,
                      PairingConfig(tau=10.0, min_light_rmse=0.01,
                                    max_pairs_per_frame=8),
                      splits={"test"})
    assert len(idx.entries) == 648
    unordered = {(min(s, t), max(s, t)) for s, t, _ in idx.entries}
    assert len(unordered) == 324


def test_matches_bruteforce_oracle(tmp_path, rng):
    n = 14
    kps = [rng.random((4, 2)) for _ in range(n)]
    lights = [(rng.random((2, 4, 3)) * 0.999).astype(np.float32)
              for _ in range(n)]
    man = _make_manifest(tmp_path, kps, lights)
    cfg = PairingConfig(tau=0.45, min_light_rmse=0.15, max_pairs_per_frame=3)
    idx = build_pairs(man, tmp_path, cfg)

    # independent quadratic reimplementation of the selection contract
    loaded = [imaging.load_image(tmp_path / man.records[i].light)
              for i in range(n)]
    expected = set()
    for a in range(n):
        cands = []
        for b in range(n):
            if b == a:
                continue
            kd = keypoint_distance(kps[a], kps[b])
            ld = np.sqrt(((loaded[a].astype(np.float64) -
                           loaded[b].astype(np.float64)) ** 2).mean())
            if kd <= cfg.tau and ld >= cfg.min_light_rmse:
                cands.append((kd, abs(a - b), b))
        cands.sort()
        for kd, _, b in cands[:cfg.max_pairs_per_frame]:
            expected.add((a, b, round(kd, 12)))
            expected.add((b, a, round(kd, 12)))
    got = {(s, t, round(d, 12)) for s, t, d in idx.entries}
    assert got == expected


def test_shrinking_tau_yields_subset(small_dataset):
    root, manifest = small_dataset
    wide = build_pairs(manifest, root,
                       PairingConfig(tau=0.2, min_light_rmse=0.02),
                       splits={"train"})
    narrow = build_pairs(manifest, root,
                         PairingConfig(tau=0.05, min_light_rmse=0.02),
                         splits={"train"})
    wide_set = {(s, t) for s, t, _ in wide.entries}
    narrow_set = {(s, t) for s, t, _ in narrow.entries}
    assert narrow_set <= wide_set


def test_emitted_pairs_satisfy_thresholds(small_dataset):
    root, manifest = small_dataset
    cfg = PairingConfig(tau=0.08, min_light_rmse=0.05)
    idx = build_pairs(manifest, root, cfg, splits={"train"})
    assert idx.entries, "expected some pairs"
    by_id = {r.id: r for r in manifest.records}
    for s, t, d in idx.entries:
        assert s != t
        kd = keypoint_distance(by_id[s].keypoints, by_id[t].keypoints)
        assert kd == pytest.approx(d, abs=1e-9)
        assert kd <= cfg.tau
        la = imaging.load_image(f"{root}/{by_id[s].light}").astype(np.float64)
        lb = imaging.load_image(f"{root}/{by_id[t].light}").astype(np.float64)
        assert np.sqrt(((la - lb) ** 2).mean()) >= cfg.min_light_rmse


def test_both_directions_emitted(small_dataset):
    root, manifest = small_dataset
    idx = build_pairs(manifest, root,
                      PairingConfig(tau=0.08, min_light_rmse=0.05),
                      splits={"train"})
    pairs = {(s, t) for s, t, _ in idx.entries}
    assert all((t, s) in pairs for s, t in pairs)


def test_deterministic(small_dataset):
    root, manifest = small_dataset
    cfg = PairingConfig(tau=0.08, min_light_rmse=0.03)
    a = build_pairs(manifest, root, cfg, splits={"train"})
    b = build_pairs(manifest, root, cfg, splits={"train"})
    assert a.entries == b.entries


def test_pairs_stay_within_sequence_by_default(small_dataset):
    root, manifest = small_dataset
    idx = build_pairs(manifest, root,
                      PairingConfig(tau=0.5, min_light_rmse=0.02),
                      splits={"train"})
    seq_of = {r.id: r.seq for r in manifest.records}
    assert all(seq_of[s] == seq_of[t] for s, t, _ in idx.entries)


def test_empty_manifest_rejected(tmp_path):
    man = DatasetManifest({"kind": "test"}, [])
    with pytest.raises(PairingError):
        build_pairs(man, tmp_path, PairingConfig())


def test_index_save_load_round_trip(tmp_path, small_dataset):
    root, manifest = small_dataset
    idx = build_pairs(manifest, root,
                      PairingConfig(tau=0.08, min_light_rmse=0.03),
                      splits={"train"})
    p = tmp_path / "pairs.txt"
    idx.save(p)
    back = PairIndex.load(p)
    assert len(back.entries) == len(idx.entries)
    for (s1, t1, d1), (s2, t2, d2) in zip(idx.entries, back.entries):
        assert (s1, t1) == (s2, t2)
        assert d1 == pytest.approx(d2, abs=1e-8)
    assert back.params["tau"] == "0.08"
