"""Command-line entry point: ``nerp render|dataset|gradcheck|oracle-diff|phantom``."""

from __future__ import annotations

import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from .camera import Camera, Pose, ProximityParams, generate_rays
from .gradients import grad_check
from .images import write_mask, write_radiograph
from .phantoms import RADIANCE_PHANTOMS, chest_spec, make_phantom, sphere_spec
from .pipeline import RenderConfig, VolumeSource, generate_dataset, phantom_sources
from .projector import Mode, project_labels, render
from .radiance import load_transfer, map_fields, preset
from .siddon import siddon_project_raw
from .volume import load_segmentation, load_volume, normalize_hu, save_volume

EXIT_FATAL = 1
EXIT_TOLERANCE = 2

log = logging.getLogger("nerp")


def _load_config(ctx, param, value):
    if value is None:
        return None
    try:
        data = json.loads(Path(value).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise click.BadParameter(f"cannot read config {value}: {exc}") from exc
    # top-level scalars feed the global options, nested objects the subcommands
    defaults = {k.replace("-", "_"): v for k, v in data.items() if not isinstance(v, dict)}
    if "out" in defaults:
        defaults["out_dir"] = defaults.pop("out")
    for name, section in data.items():
        if isinstance(section, dict):
            defaults[name] = {k.replace("-", "_"): v for k, v in section.items()}
    ctx.default_map = defaults
    return value


@click.group()
@click.option("--config", type=click.Path(dir_okay=False), callback=_load_config, is_eager=True,
              expose_value=False, help="JSON file of option defaults; flags override it.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="out", show_default=True)
@click.option("--threads", type=int, default=1, show_default=True, help="Worker processes for dataset runs.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, seed, out_dir, threads, verbose):
    """Render radiographs and label masks from CT volumes."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    ctx.obj = {"seed": seed, "out": Path(out_dir), "threads": max(1, threads)}


def _transfer(tf_path, tf_preset):
    return load_transfer(tf_path) if tf_path else preset(tf_preset)


def _camera(fov, image_size, yaw, pitch, roll, distance):
    return Camera(Pose(yaw=yaw, pitch=pitch, roll=roll, distance=distance), fov, tuple(image_size))


camera_options = [
    click.option("--fov", type=float, default=20.0, show_default=True, help="Vertical field of view, degrees."),
    click.option("--image-size", nargs=2, type=int, default=(256, 256), show_default=True, metavar="R C"),
    click.option("--yaw", type=float, default=0.0),
    click.option("--pitch", type=float, default=0.0),
    click.option("--roll", type=float, default=0.0),
    click.option("--distance", type=float, default=1000.0, show_default=True, help="Source to target, mm."),
    click.option("--samples", type=int, default=512, show_default=True, help="Samples per ray."),
]
transfer_options = [
    click.option("--tf", "tf_path", type=click.Path(exists=True, dir_okay=False), help="Transfer function JSON."),
    click.option("--tf-preset", type=click.Choice(["bone", "soft-tissue", "flat"]), default="soft-tissue", show_default=True),
    click.option("--window", nargs=2, type=float, default=(-1024.0, 3071.0), show_default=True, metavar="LO HI"),
]


def _apply(options):
    def deco(f):
        for opt in reversed(options):
            f = opt(f)
        return f
    return deco


@main.command("render")
@click.option("--volume", type=click.Path(exists=True, dir_okay=False), help="Raw int16 CT with .json sidecar.")
@click.option("--seg", type=click.Path(exists=True, dir_okay=False), help="Raw label volume with sidecar.")
@click.option("--phantom", type=click.Choice(["chest", "sphere"]), default=None, help="Use a procedural phantom.")
@click.option("--mode", type=click.Choice([m.value for m in Mode]), default="ea", show_default=True)
@click.option("--all-modes", is_flag=True, help="Render EA, AIP and MIP side by side for comparison.")
@click.option("--scale", type=float, default=1.0, show_default=True, help="Linear tone-map scale.")
@click.option("--tau", type=float, default=0.0, show_default=True, help="Mask occupancy threshold.")
@_apply(camera_options)
@_apply(transfer_options)
@click.pass_obj
def render_cmd(obj, volume, seg, phantom, mode, all_modes, scale, tau, fov, image_size, yaw, pitch, roll,
               distance, samples, tf_path, tf_preset, window):
    """Render one view of a volume (and its mask, if a segmentation is given)."""
    if volume:
        ct = load_volume(volume)
        segv = load_segmentation(seg) if seg else None
        name = Path(volume).stem
    else:
        spec = sphere_spec() if phantom == "sphere" else chest_spec()
        ct, segv = make_phantom(spec)
        name = phantom or "chest"
    rv = map_fields(normalize_hu(ct, tuple(window)), *_transfer(tf_path, tf_preset))
    cam = _camera(fov, image_size, yaw, pitch, roll, distance)
    out = obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    modes = list(Mode) if all_modes else [Mode(mode)]
    for m in modes:
        t0 = time.perf_counter()
        img = render(rv, cam, m, samples, scale)
        path = write_radiograph(out / f"{name}_{m.value}.png", img.pixels)
        click.echo(f"{m.value:>3}: {path}  mean={img.pixels.mean():.4f} max={img.pixels.max():.4f} "
                   f"({time.perf_counter() - t0:.2f}s)")
    if segv is not None:
        mask = project_labels(segv, rv, cam, samples, tau)
        path = write_mask(out / f"{name}_mask.png", mask.labels)
        click.echo(f"mask: {path}  labels={sorted(set(np.unique(mask.labels).tolist()) - {0})}")


@main.command("dataset")
@click.option("--volume", "volumes", multiple=True, type=click.Path(dir_okay=False),
              help="Raw CT file; repeatable. A sibling '<stem>.seg.raw' is used as its mask source.")
@click.option("--phantoms", type=int, default=0, help="Add this many procedural chest phantoms.")
@click.option("--phantom-dims", type=int, default=48, show_default=True)
@click.option("--views", type=int, default=10, show_default=True, help="Projections per volume.")
@click.option("--prox", default="10,10,5,0.1,5", show_default=True, help="yaw,pitch,roll,dist,fov half-widths.")
@click.option("--mode", type=click.Choice([m.value for m in Mode]), default="ea", show_default=True)
@click.option("--tau", type=float, default=0.0, show_default=True)
@_apply(camera_options)
@_apply(transfer_options)
@click.pass_obj
def dataset_cmd(obj, volumes, phantoms, phantom_dims, views, prox, mode, tau, fov, image_size, yaw, pitch, roll,
                distance, samples, tf_path, tf_preset, window):
    """Generate sampled views of every volume plus a JSONL manifest."""
    sources = []
    for v in volumes:
        p = Path(v)
        seg = p.with_name(p.stem + ".seg" + p.suffix)
        sources.append(VolumeSource(p.stem, p, seg if seg.exists() else None))
    sources += phantom_sources(phantoms, obj["seed"], dims=(phantom_dims,) * 3, spacing=288.0 / phantom_dims)
    if not sources:
        raise click.UsageError("give at least one --volume or --phantoms N")
    config = RenderConfig(
        camera=_camera(fov, image_size, yaw, pitch, roll, distance),
        proximity=ProximityParams.parse(prox),
        samples=samples,
        mode=Mode(mode),
        window=tuple(window),
        transfer=_transfer(tf_path, tf_preset),
        tau=tau,
    )
    t0 = time.perf_counter()
    try:
        manifest = generate_dataset(sources, obj["out"], views, obj["seed"], config, obj["threads"])
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_FATAL)
    click.echo(f"{len(manifest.images)} images from {len(sources)} volumes "
               f"({len(manifest.errors)} skipped) in {time.perf_counter() - t0:.1f}s -> {manifest.path}")


@main.command("gradcheck")
@click.option("--phantom", type=click.Choice(sorted(RADIANCE_PHANTOMS)), default="random", show_default=True)
@click.option("--probes", type=int, default=100, show_default=True)
@click.option("--h", "step", type=float, default=1e-4, show_default=True)
@click.option("--samples", type=int, default=64, show_default=True)
@click.option("--tol-mu", type=float, default=1e-4, show_default=True)
@click.option("--tol-gamma", type=float, default=1e-3, show_default=True)
@click.pass_obj
def gradcheck_cmd(obj, phantom, probes, step, samples, tol_mu, tol_gamma):
    """Compare analytic pixel gradients with central finite differences."""
    rv = RADIANCE_PHANTOMS[phantom]()
    cam = Camera(Pose(yaw=17.0, pitch=11.0, distance=400.0), fov=25.0, image_size=(32, 32))
    bundle = generate_rays(cam, rv.bounds)
    rng = np.random.default_rng(obj["seed"])
    hits = np.argwhere(bundle.hit)
    picks = hits[rng.choice(len(hits), size=min(probes, len(hits)), replace=len(hits) < probes)]
    rays = [bundle.ray(int(r), int(c)) for r, c in picks]
    report = grad_check(rv, rays, step, samples, seed=obj["seed"])
    click.echo(report.format())
    ok = report.passes(tol_mu, tol_gamma)
    click.echo("PASS" if ok else "FAIL")
    sys.exit(0 if ok else EXIT_TOLERANCE)


@main.command("oracle-diff")
@click.option("--phantom", type=click.Choice(sorted(RADIANCE_PHANTOMS)), default="blob", show_default=True)
@click.option("--samples", type=int, default=512, show_default=True)
@click.option("--image-size", nargs=2, type=int, default=(256, 256), show_default=True, metavar="R C")
@click.option("--fov", type=float, default=8.0, show_default=True)
@click.option("--max-tol", type=float, default=0.02, show_default=True)
@click.option("--mean-tol", type=float, default=0.005, show_default=True)
def oracle_diff_cmd(phantom, samples, image_size, fov, max_tol, mean_tol):
    """Per-pixel |EA - Siddon| statistics for a radiance phantom."""
    rv = RADIANCE_PHANTOMS[phantom]()
    cam = Camera(Pose(distance=1000.0), fov, tuple(image_size))
    ea = render(rv, cam, Mode.EA, samples).raw
    ref, _ = siddon_project_raw(rv, cam)
    diff = np.abs(ea - ref)
    stats = {"max": diff.max(), "mean": diff.mean(), "p99": np.percentile(diff, 99)}
    click.echo(f"phantom={phantom} samples={samples} pixels={diff.size}")
    for k, v in stats.items():
        click.echo(f"{k:>4}: {v:.6e}")
    ok = stats["max"] <= max_tol and stats["mean"] <= mean_tol
    click.echo("PASS" if ok else "FAIL")
    sys.exit(0 if ok else EXIT_TOLERANCE)


@main.command("phantom")
@click.option("--kind", type=click.Choice(["chest", "sphere"]), default="chest", show_default=True)
@click.option("--dims", type=int, default=64, show_default=True)
@click.option("--spacing", type=float, default=4.5, show_default=True)
@click.option("--name", default=None, help="Output file stem (default: the kind).")
@click.pass_obj
def phantom_cmd(obj, kind, dims, spacing, name):
    """Write a procedural CT phantom and its labels as raw int16 + sidecar."""
    spec = sphere_spec(dims, spacing) if kind == "sphere" else chest_spec((dims,) * 3, spacing)
    ct, seg = make_phantom(spec)
    out = obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    stem = name or kind
    save_volume(out / f"{stem}.raw", ct)
    save_volume(out / f"{stem}.seg.raw", seg)
    click.echo(f"wrote {out / (stem + '.raw')} and {out / (stem + '.seg.raw')} dims={ct.dims}")


if __name__ == "__main__":  # pragma: no cover
    main()
