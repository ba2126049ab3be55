"""Training-pair construction: similar pose (keypoints), different lighting.

Casually captured frames are not pixel aligned across lighting changes, so
pairs are mined: two frames qualify when their keypoint distance is at most
tau and their monitor lights differ by at least min_light_rmse. Pairing stays
within a capture sequence by default (appearance constancy across days).
"""

import os
from dataclasses import dataclass

import numpy as np

from . import imaging


class PairingError(ValueError):
    pass


@dataclass(frozen=True)
class PairingConfig:
    tau: float = 0.02
    min_light_rmse: float = 0.05
    max_pairs_per_frame: int = 8
    cross_sequence: bool = False

    def validate(self):
        if self.tau <= 0:
            raise PairingError("tau must be > 0")
        if self.min_light_rmse < 0 or self.max_pairs_per_frame < 1:
            raise PairingError("invalid pairing thresholds")
        return self


@dataclass
class PairIndex:
    entries: list                # [(src_id, trg_id, keypoint_distance), ...]
    params: dict

    def save(self, path):
        with open(path, "w") as f:
            f.write("# relightkit-pairs v1\n")
            f.write("# " + " ".join(f"{k}={v}"
                                    for k, v in sorted(self.params.items()))
                    + "\n")
            for src, trg, dist in self.entries:
                f.write(f"{src} {trg} {dist:.8f}\n")

    @staticmethod
    def load(path):
        entries, params = [], {}
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for tok in line[1:].split():
                        if "=" in tok:
                            k, v = tok.split("=", 1)
                            params[k] = v
                    continue
                src, trg, dist = line.split()
                entries.append((int(src), int(trg), float(dist)))
        return PairIndex(entries, params)


def keypoint_distance(a, b):
    """Root-mean-square Euclidean distance over corresponding landmarks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise PairingError(f"keypoint shape mismatch: {a.shape} vs {b.shape}")
    d2 = ((a - b) ** 2).reshape(a.shape[0], -1).sum(axis=1)
    return float(np.sqrt(d2.mean()))


def _light_matrix(manifest, data_root):
    lights = []
    for rec in manifest.records:
        arr = imaging.load_image(os.path.join(data_root, rec.light))
        lights.append(arr.astype(np.float64).ravel())
    return np.stack(lights)


def build_pairs(manifest, data_root, cfg=PairingConfig(), splits=None):
    """Exhaustive scan per group; keeps, per source frame, the
    max_pairs_per_frame candidates with smallest keypoint distance (ties:
    smaller frame-id gap, then lower target id), then emits both directions
    of every selected pair.
    """
    cfg.validate()
    if not manifest.records:
        raise PairingError("empty manifest")
    lights = _light_matrix(manifest, data_root)
    kps = np.stack([r.keypoints for r in manifest.records])
    ids = np.array([r.id for r in manifest.records])

    groups = {}
    for row, rec in enumerate(manifest.records):
        if splits is not None and rec.split not in splits:
            continue
        key = rec.split if cfg.cross_sequence else (rec.split, rec.seq)
        groups.setdefault(key, []).append(row)

    selected = set()
    k = kps.shape[1]
    for rows in groups.values():
        rows = np.asarray(rows)
        kp = kps[rows].reshape(len(rows), -1)
        lg = lights[rows]
        # pairwise RMS keypoint distance and RMS light distance
        kd = np.sqrt(((kp[:, None, :] - kp[None, :, :]) ** 2)
                     .sum(-1) / k)
        ld = np.sqrt(((lg[:, None, :] - lg[None, :, :]) ** 2).mean(-1))
        for a in range(len(rows)):
            ok = (kd[a] <= cfg.tau) & (ld[a] >= cfg.min_light_rmse)
            ok[a] = False
            cand = np.nonzero(ok)[0]
            if cand.size == 0:
                continue
            gap = np.abs(ids[rows[cand]] - ids[rows[a]])
            order = np.lexsort((ids[rows[cand]], gap, kd[a][cand]))
            for b in cand[order][:cfg.max_pairs_per_frame]:
                d = kd[a][b]
                selected.add((int(ids[rows[a]]), int(ids[rows[b]]), float(d)))
                selected.add((int(ids[rows[b]]), int(ids[rows[a]]), float(d)))

    entries = sorted(selected)
    params = {"tau": cfg.tau, "min_light_rmse": cfg.min_light_rmse,
              "max_pairs_per_frame": cfg.max_pairs_per_frame,
              "cross_sequence": str(cfg.cross_sequence).lower()}
    if splits is not None:
        params["splits"] = ",".join(sorted(splits))
    return PairIndex(entries, params)
