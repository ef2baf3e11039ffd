"""Command-line entry points: data generation, training, inference,
region extraction, metrics, and the web service."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import dataset as ds
from . import metrics as mx
from .geometry import export_mesh, load_volume, parse_mesh, save_volume
from .networks import DiscriminatorSpec
from .pipeline import estimate_volume, extract_region, to_model_units
from .training import TrainConfig, load_generator, train


@click.group(context_settings={"auto_envvar_prefix": "S2S"})
def main():
    """Surface-to-structure translation toolkit."""


@main.command("gen-data")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--count", default=512, show_default=True)
@click.option("--res", "resolution", default=64, show_default=True)
@click.option("--seed", default=7, show_default=True)
def gen_data(out_dir: Path, count: int, resolution: int, seed: int):
    """Write a synthetic phantom corpus (PGM pairs + manifest)."""
    ds.generate_corpus(out_dir, count=count, resolution=resolution, seed=seed)
    click.echo(f"wrote {count} pairs at {resolution}x{resolution} to {out_dir}")


def parse_disc_spec(text: str) -> list[DiscriminatorSpec]:
    specs = []
    for part in text.split(","):
        patch, _, weight = part.partition(":")
        specs.append(DiscriminatorSpec(int(patch), float(weight)))
    return specs


@main.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--disc", "disc_spec", default="6:0.25,126:0.75", show_default=True,
              help="comma-separated patch:weight pairs")
@click.option("--lambda", "lam", default=100.0, show_default=True,
              help="weight of the L1 reconstruction term")
@click.option("--epochs", default=20, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--lr", default=2e-4, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--test-fraction", default=0.2, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
def train_cmd(data_dir: Path, disc_spec: str, lam: float, epochs: int,
              batch_size: int, lr: float, seed: int, test_fraction: float,
              out_dir: Path):
    """Train the translator on a phantom corpus directory."""
    manifest = ds.read_manifest(data_dir)
    config = TrainConfig(discriminators=parse_disc_spec(disc_spec), lam=lam,
                         resolution=manifest["resolution"], epochs=epochs,
                         batch_size=batch_size, lr=lr, seed=seed)
    config.validate()
    if test_fraction > 0:
        train_idx, test_idx = ds.split_dataset(manifest["count"], test_fraction, seed)
    else:
        train_idx = np.arange(manifest["count"])
        test_idx = np.array([], dtype=np.int64)
    click.echo(f"training on {len(train_idx)} pairs, holding out {len(test_idx)}")
    data = ds.load_pairs(data_dir, train_idx)
    gen, discs, report = train(config, data, out_dir=out_dir)
    click.echo(f"done in {report.wall_time:.1f}s, {len(report.records)} steps; "
               f"checkpoint in {out_dir}")
    if len(test_idx):
        from .tensor import Tensor, no_grad
        y_test, x_test = ds.load_pairs(data_dir, test_idx)
        gen.eval()
        with no_grad():
            pred = gen(Tensor(y_test)).data
        l1 = float(np.mean(np.abs(pred - x_test)))
        psnr_vals = [mx.psnr(ds.to_unit(pred[i, 0]), ds.to_unit(x_test[i, 0]))
                     for i in range(len(test_idx))]
        click.echo(f"test L1 {l1:.4f}, test PSNR {np.mean(psnr_vals):.2f} dB")


@main.command("infer")
@click.option("--mesh", "mesh_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--axis", default="z", show_default=True)
@click.option("--res", "resolution", default=None, type=int,
              help="slice count / image resolution; defaults to the checkpoint's")
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
def infer(mesh_path: Path, ckpt_path: Path, axis: str, resolution, out_path: Path):
    """Slice a mesh, translate every contour, and write the volume."""
    mesh = parse_mesh(mesh_path.read_bytes(), "auto")
    gen = load_generator(ckpt_path)
    resolution = resolution or gen.resolution

    def on_progress(done, total):
        click.echo(f"\r{done}/{total} slices", nl=False)

    volume, transform = estimate_volume(mesh, gen, axis=axis,
                                        resolution=resolution,
                                        progress=on_progress)
    click.echo("")
    save_volume(out_path, to_model_units(volume, transform))
    click.echo(f"wrote {out_path}")


@main.command("extract")
@click.option("--vol", "vol_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(path_type=Path))
def extract(vol_path: Path, threshold: float, out_path: Path):
    """Extract the threshold region from a volume as a mesh file."""
    volume = load_volume(vol_path)
    mesh = extract_region(volume, threshold)
    fmt = "obj" if out_path.suffix.lower() == ".obj" else "stl_binary"
    out_path.write_bytes(export_mesh(mesh, fmt))
    click.echo(f"wrote {out_path} ({len(mesh.triangles)} triangles)")


@main.command("metrics")
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--truth", "truth_dir", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", default=None, type=click.Path(path_type=Path),
              help="also write line-delimited per-item records")
def metrics_cmd(pred_dir: Path, truth_dir: Path, out_path):
    """PSNR/SSIM between two directories of identically named PGM images."""
    names = sorted(p.name for p in pred_dir.glob("*.pgm"))
    if not names:
        click.echo("no .pgm files in --pred", err=True)
        sys.exit(1)
    report = mx.MetricReport(count=len(names))
    for name in names:
        truth_file = truth_dir / name
        if not truth_file.exists():
            click.echo(f"missing {truth_file}", err=True)
            sys.exit(1)
        a = ds.read_pgm(pred_dir / name)
        b = ds.read_pgm(truth_file)
        report.psnr_per_slice.append(mx.psnr(a, b))
        report.ssim_per_slice.append(mx.ssim(a, b))
    uncapped = [v for v in report.psnr_per_slice if v < mx.PSNR_CAP]
    report.capped_slices = report.count - len(uncapped)
    report.psnr_mean = float(np.mean(uncapped)) if uncapped else mx.PSNR_CAP
    report.ssim_mean = float(np.mean(report.ssim_per_slice))
    click.echo(mx.format_metric_table({"pred-vs-truth": report}))
    if report.capped_slices:
        click.echo(f"(PSNR mean excludes {report.capped_slices} identical images)")
    if out_path:
        report.to_jsonl(out_path)


@main.command("serve")
@click.option("--port", default=8080, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--ckpt-dir", default="ckpt", show_default=True, type=click.Path(path_type=Path))
@click.option("--artifact-dir", default="artifacts", show_default=True,
              type=click.Path(path_type=Path))
@click.option("--workers", default=1, show_default=True)
@click.option("--upload-limit", default=64 * 1024 * 1024, show_default=True)
def serve(port: int, host: str, ckpt_dir: Path, artifact_dir: Path,
          workers: int, upload_limit: int):
    """Run the upload/estimate/extract HTTP service."""
    from .service import ServiceConfig, run_server

    config = ServiceConfig(artifact_dir=artifact_dir, checkpoint_dir=ckpt_dir,
                           workers=workers, upload_limit=upload_limit)
    run_server(config, host=host, port=port)


if __name__ == "__main__":
    main()
