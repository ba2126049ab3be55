"""Metrics and evaluation reports.

Covers paired relighting error against oracle ground truth (with the
copy-the-input baseline computed in the same run), source-light prediction
error against the dataset-mean-light baseline, adjacent-frame temporal
consistency with threshold exceedance rates, and ablation orderings.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import imaging
from .model import relight_image
from .training import get_perceptual_metric


class EvalError(ValueError):
    pass


def rmse(a, b, scale="unit"):
    """Root mean squared difference over all pixels and channels.

    scale="unit" reports on [0,1] values; scale=255 multiplies by 255 (the
    convention used for published portrait-relighting RMSE numbers).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EvalError(f"shape mismatch: {a.shape} vs {b.shape}")
    val = float(np.sqrt(((a - b) ** 2).mean()))
    if scale == 255:
        return val * 255.0
    if scale == "unit":
        return val
    raise EvalError(f"unknown scale {scale!r}")


def mae_light(a, b):
    """Mean absolute difference between two monitor lights, in [0,1] units."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EvalError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


@dataclass
class TemporalReport:
    mean_rmse: float          # unit scale
    mean_rmse_255: float      # same values on the 0..255 scale
    rates: dict               # threshold -> percent of adjacent pairs above
    n_adjacent: int

    def to_dict(self):
        return {"mean_rmse": self.mean_rmse,
                "mean_rmse_255": self.mean_rmse_255,
                "rates": {str(k): v for k, v in self.rates.items()},
                "n_adjacent": self.n_adjacent}


def temporal_consistency(frames, thresholds=(0.2, 0.3, 0.4)):
    """Adjacent-frame RMSE statistics over a relit sequence.

    Rates are percentages of adjacent pairs whose unit-scale RMSE exceeds
    each threshold; they are monotone non-increasing in the threshold.
    """
    frames = list(frames)
    if len(frames) < 2:
        raise EvalError("need at least 2 frames")
    diffs = np.array([rmse(a, b) for a, b in zip(frames[:-1], frames[1:])])
    rates = {float(t): float((diffs > t).mean() * 100.0) for t in thresholds}
    return TemporalReport(mean_rmse=float(diffs.mean()),
                          mean_rmse_255=float(diffs.mean() * 255.0),
                          rates=rates, n_adjacent=len(diffs))


@dataclass
class PairReport:
    records: list
    aggregates: dict
    n_unordered: int
    params: dict

    def to_header(self):
        return {"aggregates": self.aggregates, "n_unordered": self.n_unordered,
                "params": self.params}

    def save(self, path):
        with open(path, "w") as f:
            f.write(json.dumps(self.to_header(), sort_keys=True) + "\n")
            for rec in self.records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    @staticmethod
    def load(path):
        with open(path) as f:
            lines = [ln for ln in f.read().splitlines() if ln]
        head = json.loads(lines[0])
        records = [json.loads(ln) for ln in lines[1:]]
        return PairReport(records, head["aggregates"], head["n_unordered"],
                          head.get("params", {}))


def _load_frame(root, rec):
    img = imaging.load_image(os.path.join(root, rec.image))
    light = imaging.load_image(os.path.join(root, rec.light))
    return img, light


def eval_pairs(gen, pairs, manifest, data_root, perceptual=("pyramid_l1",),
               predict_source=False, relight_fn=None):
    """Score relighting on a pair index against oracle ground truth.

    Each unordered pair is scored once in canonical (low id -> high id)
    direction: relight the source frame with the target's light and compare
    to the target frame. The copy-input baseline is scored alongside.
    """
    if relight_fn is None:
        def relight_fn(img, l_src, l_trg):
            return relight_image(gen, img, l_src, l_trg)[0]
    by_id = {r.id: r for r in manifest.records}
    unordered = sorted({(min(s, t), max(s, t)) for s, t, _ in pairs.entries})
    if not unordered:
        raise EvalError("pair index is empty")
    metrics = [(name, get_perceptual_metric(name)) for name in perceptual]
    cache = {}

    def frame(fid):
        if fid not in cache:
            cache[fid] = _load_frame(data_root, by_id[fid])
        return cache[fid]

    records = []
    for src_id, trg_id in unordered:
        src_img, src_light = frame(src_id)
        trg_img, trg_light = frame(trg_id)
        out = relight_fn(src_img, None if predict_source else src_light,
                         trg_light)
        rec = {"src": src_id, "trg": trg_id,
               "rmse": rmse(out, trg_img),
               "rmse_255": rmse(out, trg_img, scale=255),
               "copy_rmse": rmse(src_img, trg_img)}
        for name, metric in metrics:
            rec[name] = metric.distance(out, trg_img)
            rec[f"copy_{name}"] = metric.distance(src_img, trg_img)
        records.append(rec)

    keys = [k for k in records[0] if k not in ("src", "trg")]
    aggregates = {k: float(np.mean([r[k] for r in records])) for k in keys}
    aggregates["beat_copy_fraction"] = float(np.mean(
        [r["rmse"] < r["copy_rmse"] for r in records]))
    return PairReport(records=records, aggregates=aggregates,
                      n_unordered=len(unordered),
                      params={"predict_source": predict_source,
                              "perceptual": list(perceptual)})


def light_prediction_report(gen, manifest, data_root, split="holdout",
                            baseline_split="train", predict_fn=None):
    """MAE of predicted source lights on a split, next to the constant
    mean-light baseline (mean over the baseline split)."""
    from .model import predict_light_image
    if predict_fn is None:
        def predict_fn(img):
            return predict_light_image(gen, img)[0]
    eval_recs = manifest.by_split(split)
    base_recs = manifest.by_split(baseline_split)
    if not eval_recs or not base_recs:
        raise EvalError(f"no frames for splits {split!r}/{baseline_split!r}")
    mean_light = np.mean(
        [imaging.load_image(os.path.join(data_root, r.light))
         for r in base_recs], axis=0)
    model_err, base_err = [], []
    for r in eval_recs:
        img, light = _load_frame(data_root, r)
        model_err.append(mae_light(predict_fn(img), light))
        base_err.append(mae_light(mean_light, light))
    return {"split": split, "n_frames": len(eval_recs),
            "mae_model": float(np.mean(model_err)),
            "mae_mean_light_baseline": float(np.mean(base_err))}


def ablation_compare(named_reports, metric="pyramid_l1"):
    """Order configurations by an aggregate metric (lower is better).

    Returns the ranking plus explicit tie flags so directional comparisons
    against published orderings stay honest."""
    if len(named_reports) < 2:
        raise EvalError("need at least two reports to compare")
    rows = []
    for name, report in named_reports:
        if metric not in report.aggregates:
            raise EvalError(f"report {name!r} lacks metric {metric!r}")
        rows.append({"name": name, "value": float(report.aggregates[metric])})
    ranking = sorted(rows, key=lambda r: r["value"])
    ties = [(a["name"], b["name"])
            for a, b in zip(ranking[:-1], ranking[1:])
            if abs(a["value"] - b["value"]) < 1e-12]
    return {"metric": metric, "ranking": ranking, "ties": ties}


def format_ranking(summary):
    lines = [f"ranking by {summary['metric']} (lower is better):"]
    for i, row in enumerate(summary["ranking"], 1):
        lines.append(f"  {i}. {row['name']}: {row['value']:.6f}")
    for a, b in summary["ties"]:
        lines.append(f"  tie: {a} == {b}")
    return "\n".join(lines)
