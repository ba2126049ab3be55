"""Command-line entry point.

Subcommands: synth gen, pair build, train, relight image|video,
predict-light, eval pairs|temporal|light|ablation, bench. Every command is
deterministic given the config file (--config) plus -o key=value overrides.
"""

import json
import os
import sys
import time

import click
import numpy as np

from . import evalkit, imaging, pairing, synthstage, temporal, training
from .config import ConfigError, load_config
from .model import (generator_from_checkpoint, predict_light_image,
                    relight_image)
from .nn import backend


def _cfg(config, overrides):
    try:
        return load_config(config, overrides)
    except (ConfigError, OSError) as exc:
        raise click.ClickException(str(exc))


_config_opts = [
    click.option("--config", type=click.Path(exists=True, dir_okay=False),
                 default=None, help="YAML config file."),
    click.option("-o", "--override", "overrides", multiple=True,
                 metavar="KEY=VALUE", help="Config override, repeatable."),
]


def config_options(fn):
    for opt in reversed(_config_opts):
        fn = opt(fn)
    return fn


def _load_manifest(data_dir):
    path = os.path.join(data_dir, "manifest")
    if not os.path.exists(path):
        raise click.ClickException(f"no manifest found in {data_dir}")
    return synthstage.DatasetManifest.load(path)


def _load_generator(ckpt_path):
    try:
        return generator_from_checkpoint(ckpt_path)
    except Exception as exc:
        raise click.ClickException(f"cannot load checkpoint: {exc}")


def _sorted_frames(directory, pattern=".png"):
    names = sorted(n for n in os.listdir(directory) if n.endswith(pattern))
    if not names:
        raise click.ClickException(f"no {pattern} files in {directory}")
    return [os.path.join(directory, n) for n in names]


@click.group()
def main():
    """Personalized portrait relighting with a monitor as the light source."""


# -- synth -----------------------------------------------------------------

@main.group()
def synth():
    """Synthetic dataset oracle."""


@synth.command("gen")
@config_options
@click.option("--out", required=True, type=click.Path(file_okay=False))
def synth_gen(config, overrides, out):
    """Render paired sequences plus the pose/light test grid."""
    cfg = _cfg(config, overrides)
    manifest = synthstage.gen_dataset(cfg.synth, out)
    splits = {}
    for rec in manifest.records:
        splits[rec.split] = splits.get(rec.split, 0) + 1
    click.echo(f"wrote {len(manifest.records)} frames to {out} "
               f"({', '.join(f'{k}={v}' for k, v in sorted(splits.items()))})")


# -- pair ------------------------------------------------------------------

@main.group()
def pair():
    """Source/target pair mining."""


@pair.command("build")
@config_options
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--splits", default="train",
              help="Comma-separated split names (default: train).")
def pair_build(config, overrides, data, out, splits):
    """Scan a dataset manifest for pose-matched, light-separated pairs."""
    cfg = _cfg(config, overrides)
    manifest = _load_manifest(data)
    split_set = {s.strip() for s in splits.split(",") if s.strip()} or None
    index = pairing.build_pairs(manifest, data, cfg.pairing, splits=split_set)
    index.save(out)
    click.echo(f"wrote {len(index.entries)} directed pairs to {out}")


# -- train -----------------------------------------------------------------

@main.command()
@config_options
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--pairs", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--resume", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Checkpoint to resume from.")
@click.option("--quiet", is_flag=True, default=False)
def train(config, overrides, data, pairs, out, resume, quiet):
    """Train the relighting model on mined pairs."""
    cfg = _cfg(config, overrides)
    manifest = _load_manifest(data)
    index = pairing.PairIndex.load(pairs)

    def progress(rec):
        if not quiet and rec["step"] % 100 == 0:
            click.echo(f"step {rec['step']}: g={rec['g_total']:.4f} "
                       f"d={rec['d_loss']:.4f} m={rec['m_total']:.4f}")

    try:
        ckpt = training.fit(cfg.arch, cfg.train, manifest, index, data, out,
                            resume_from=resume, progress=progress)
    except training.TrainingError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"final checkpoint: {ckpt}")


# -- relight ---------------------------------------------------------------

@main.group()
def relight():
    """Apply a trained model."""


@relight.command("image")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--target-light", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--source-light", type=click.Path(exists=True, dir_okay=False),
              default=None)
@click.option("--predict-source", is_flag=True, default=False,
              help="Condition de-lighting on the predicted source light.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--save-predicted-light", type=click.Path(dir_okay=False),
              default=None)
def relight_image_cmd(ckpt, input_path, target_light, source_light,
                      predict_source, out, save_predicted_light):
    """Relight a single portrait image under a target monitor light."""
    if source_light is None and not predict_source:
        raise click.UsageError("provide --source-light or --predict-source")
    if source_light is not None and predict_source:
        raise click.UsageError("--source-light and --predict-source conflict")
    gen, _ = _load_generator(ckpt)
    img = imaging.load_image(input_path)
    l_trg = imaging.load_image(target_light)
    l_src = imaging.load_image(source_light) if source_light else None
    relit, l_hat = relight_image(gen, img, l_src, l_trg)
    imaging.save_image(relit, out)
    if save_predicted_light:
        imaging.save_image(l_hat, save_predicted_light)
    click.echo(f"wrote {out}")


@relight.command("video")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--frames", "frames_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--target-light", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--lights", "lights_dir", type=click.Path(exists=True, file_okay=False),
              default=None, help="Directory of per-frame source lights.")
@click.option("--predict-source", is_flag=True, default=False)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--feature-ema/--no-feature-ema", default=True)
@click.option("--light-avg/--no-light-avg", default=True)
@click.option("--alpha", default=temporal.DEFAULT_ALPHA, show_default=True)
@click.option("--beta", default=temporal.DEFAULT_BETA, show_default=True)
@click.option("--window", default=temporal.DEFAULT_WINDOW, show_default=True)
@click.option("--timing-report", type=click.Path(dir_okay=False), default=None)
def relight_video(ckpt, frames_dir, target_light, lights_dir, predict_source,
                  out, feature_ema, light_avg, alpha, beta, window,
                  timing_report):
    """Stream-relight a directory of numbered frames to one target light."""
    if lights_dir is None and not predict_source:
        raise click.UsageError("provide --lights or --predict-source")
    gen, _ = _load_generator(ckpt)
    frame_paths = _sorted_frames(frames_dir)
    light_paths = None
    if lights_dir is not None:
        light_paths = _sorted_frames(lights_dir)
        if len(light_paths) != len(frame_paths):
            raise click.ClickException(
                f"{len(frame_paths)} frames but {len(light_paths)} lights")
    l_trg = imaging.load_image(target_light)
    state = temporal.SmootherState(alpha=alpha, beta=beta, window=window,
                                   feature_ema=feature_ema,
                                   light_avg=light_avg)
    os.makedirs(out, exist_ok=True)
    times = []
    for i, fp in enumerate(frame_paths):
        frame = imaging.load_image(fp)
        l_src = (imaging.load_image(light_paths[i])
                 if light_paths is not None else None)
        t0 = time.perf_counter()
        relit = temporal.stream_step(state, gen, frame, l_src, l_trg)
        times.append(time.perf_counter() - t0)
        imaging.save_image(relit, os.path.join(out, f"relit_{i:06d}.png"))
    mean_t = float(np.mean(times))
    report = {"n_frames": len(times), "mean_step_seconds": mean_t,
              "fps": 1.0 / mean_t if mean_t > 0 else float("inf"),
              "feature_ema": feature_ema, "light_avg": light_avg}
    if timing_report:
        with open(timing_report, "w") as f:
            json.dump(report, f, sort_keys=True)
    click.echo(f"relit {len(times)} frames at {report['fps']:.2f} fps -> {out}")


@main.command("predict-light")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def predict_light(ckpt, input_path, out):
    """Predict the source monitor lighting of an image."""
    gen, _ = _load_generator(ckpt)
    light, _ = predict_light_image(gen, imaging.load_image(input_path))
    imaging.save_image(light, out)
    click.echo(f"wrote {out}")


# -- eval ------------------------------------------------------------------

@main.group(name="eval")
def eval_group():
    """Metrics and reports."""


@eval_group.command("pairs")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--pairs", "pairs_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--report", type=click.Path(dir_okay=False), default=None)
@click.option("--predict-source", is_flag=True, default=False)
def eval_pairs_cmd(ckpt, data, pairs_path, report, predict_source):
    """Score relighting on a pair index against ground-truth targets."""
    gen, _ = _load_generator(ckpt)
    manifest = _load_manifest(data)
    index = pairing.PairIndex.load(pairs_path)
    rep = evalkit.eval_pairs(gen, index, manifest, data,
                             predict_source=predict_source)
    if report:
        rep.save(report)
    click.echo(f"{rep.n_unordered} pairs scored")
    for key, val in sorted(rep.aggregates.items()):
        click.echo(f"  {key}: {val:.6f}")


@eval_group.command("temporal")
@click.option("--frames", "frames_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--thresholds", default="0.2,0.3,0.4", show_default=True)
@click.option("--report", type=click.Path(dir_okay=False), default=None)
def eval_temporal(frames_dir, thresholds, report):
    """Adjacent-frame RMSE statistics over a relit frame directory."""
    frames = [imaging.load_image(p) for p in _sorted_frames(frames_dir)]
    thr = tuple(float(t) for t in thresholds.split(","))
    rep = evalkit.temporal_consistency(frames, thr)
    if report:
        with open(report, "w") as f:
            json.dump(rep.to_dict(), f, sort_keys=True)
    click.echo(f"mean adjacent RMSE: {rep.mean_rmse:.6f} "
               f"({rep.mean_rmse_255:.3f} on the 255 scale)")
    for t, r in sorted(rep.rates.items()):
        click.echo(f"  rate >{t}: {r:.2f}%")


@eval_group.command("light")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--split", default="holdout", show_default=True)
@click.option("--report", type=click.Path(dir_okay=False), default=None)
def eval_light(ckpt, data, split, report):
    """Source-light prediction MAE vs the mean-light baseline."""
    gen, _ = _load_generator(ckpt)
    manifest = _load_manifest(data)
    rep = evalkit.light_prediction_report(gen, manifest, data, split=split)
    if report:
        with open(report, "w") as f:
            json.dump(rep, f, sort_keys=True)
    click.echo(f"MAE model: {rep['mae_model']:.6f}  "
               f"mean-light baseline: {rep['mae_mean_light_baseline']:.6f}")


@eval_group.command("ablation")
@click.argument("reports", nargs=-1, required=True, metavar="NAME=REPORT...")
@click.option("--metric", default="pyramid_l1", show_default=True)
def eval_ablation(reports, metric):
    """Order saved pair reports by a metric (lower is better)."""
    named = []
    for item in reports:
        if "=" not in item:
            raise click.UsageError(f"expected NAME=REPORT, got '{item}'")
        name, _, path = item.partition("=")
        if not os.path.exists(path):
            raise click.ClickException(f"{path}: no such report")
        named.append((name, evalkit.PairReport.load(path)))
    try:
        summary = evalkit.ablation_compare(named, metric=metric)
    except evalkit.EvalError as exc:
        raise click.ClickException(str(exc))
    click.echo(evalkit.format_ranking(summary))


# -- bench -------------------------------------------------------------------

@main.command()
@config_options
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Time a trained model (otherwise fresh weights).")
@click.option("--frames", default=60, show_default=True)
@click.option("--compare-backends", is_flag=True, default=False,
              help="Run the stream on both kernel backends.")
@click.option("--report", type=click.Path(dir_okay=False), default=None)
def bench(config, overrides, ckpt, frames, compare_backends, report):
    """Throughput of the streaming relight step, frames/sec.

    Published real-time figures (~45 fps on accelerator hardware) are
    reference context; this reports what the current machine does.
    """
    if ckpt is not None:
        gen, _ = _load_generator(ckpt)
    else:
        cfg = _cfg(config, overrides)
        from .model import init_generator
        gen = init_generator(cfg.arch, seed=cfg.seed)
    acfg = gen.cfg

    # short oracle-rendered clip with moving pose and light, cycled
    mat = synthstage.MaterialParams()
    clip = []
    for i in range(8):
        pose = synthstage.PoseParams(0.3 * np.sin(i * 0.7),
                                     0.2 * np.sin(i * 0.9 + 1.0),
                                     0.5 + 0.5 * np.sin(i * 0.5))
        light = synthstage.light_disk(acfg.monitor_h, acfg.monitor_w,
                                      (0.5 + 0.4 * np.sin(i * 0.8), 0.5),
                                      0.35, (1.0, 0.95, 0.9))
        clip.append((synthstage.render_proxy(pose, light, mat,
                                             acfg.input_resolution), light))
    l_trg = synthstage.light_solid(acfg.monitor_h, acfg.monitor_w,
                                   (0.9, 0.85, 0.8))

    backends = ["numpy", "cython"] if compare_backends else [backend.backend_name()]
    results = {}
    active = backend.backend_name()
    try:
        for name in backends:
            try:
                backend.use(name)
            except ImportError:
                click.echo(f"backend {name} unavailable, skipping")
                continue
            state = temporal.SmootherState()
            temporal.stream_step(state, gen, *clip[0], l_trg)  # warmup
            t0 = time.perf_counter()
            for i in range(frames):
                frame, l_src = clip[i % len(clip)]
                temporal.stream_step(state, gen, frame, l_src, l_trg)
            dt = (time.perf_counter() - t0) / frames
            results[name] = {"mean_step_seconds": dt, "fps": 1.0 / dt}
            click.echo(f"{name}: {1.0 / dt:.2f} fps "
                       f"({dt * 1e3:.1f} ms/frame, {frames} frames, "
                       f"{acfg.input_resolution}px)")
    finally:
        backend.use(active)
    if report:
        with open(report, "w") as f:
            json.dump({"resolution": acfg.input_resolution,
                       "frames": frames, "results": results}, f, sort_keys=True)


if __name__ == "__main__":
    sys.exit(main())
