"""Command-line surface.

Subcommands cover the full pipeline: corpus generation (gen/noise/
split), network training and inference (train/infer), classical
inversion (invert), pulse-sequence optimization (optimize), and metric
reports (eval).  Exit codes: 0 success, 2 validation error, 3 numerical
failure.
"""

import json
import os
import sys

import click
import numpy as np

from . import dataset as ds
from .errors import NumericalError, ValidationError
from .grids import FrequencyGrid, TimeGrid
from .inversion import alvarez_suter, default_tau_grid, delta_inversion
from .metrics import build_report, log_curve_error, spectrum_error, write_report
from .network import CurveDenoiser, SpectrumRegressor
from .network.checkpoint import load_checkpoint
from .network.core import Head
from .optimize import OptimizationProblem, optimize_pulses
from .sequences import SequenceFamily
from .simulate import CoherenceCurve
from .spectra import NoiseSpectrum


def _parse_pair(text, name):
    parts = text.split(",")
    if len(parts) != 2:
        raise ValidationError(f"{name} must be 'lo,hi', got {text!r}")
    try:
        lo, hi = (float(p) for p in parts)
    except ValueError as exc:
        raise ValidationError(f"{name} must be numeric, got {text!r}") from exc
    return lo, hi


@click.group()
def cli():
    """Qubit noise spectroscopy toolkit."""


@cli.command()
@click.option("--family", "family", required=True, type=click.Choice(ds.FAMILIES))
@click.option("--count", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--t2-window", "t2_window", default="120e-6,600e-6", show_default=True)
@click.option("--sequence", default="hahn", show_default=True, help="hahn or cpmg:N")
@click.option("--out", "out_path", required=True, type=click.Path())
def gen(family, count, seed, t2_window, sequence, out_path):
    """Generate a reproducible corpus of (spectrum, curve) records."""
    lo, hi = _parse_pair(t2_window, "--t2-window")
    grid_config = ds.GridConfig.for_window(lo, hi)
    records = ds.generate(family, count, seed, grid_config, sequence)
    ds.save(
        records,
        out_path,
        extra={
            "global_seed": seed,
            "t2_window_s": [lo, hi],
            "sequence_family": sequence,
            "grid_s": [grid_config.t_min, grid_config.t_max],
        },
    )
    click.echo(f"wrote {len(records)} records to {out_path}")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def noise(in_path, seed, out_path):
    """Attach +-5% synthetic measurement noise to every record."""
    records = ds.load(in_path)
    noisy = [ds.add_measurement_noise(r, seed) for r in records]
    ds.save(noisy, out_path, extra={"noise_seed": seed})
    click.echo(f"wrote {len(noisy)} noisy records to {out_path}")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--ratios", default="0.8,0.1,0.1", show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--out-dir", "out_dir", required=True, type=click.Path())
def split(in_path, ratios, seed, out_dir):
    """Stratified train/validation/test split of a corpus."""
    parts = ratios.split(",")
    if len(parts) != 3:
        raise ValidationError(f"--ratios must be 'a,b,c', got {ratios!r}")
    try:
        ratio_values = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ValidationError(f"--ratios must be numeric, got {ratios!r}") from exc
    records = ds.load(in_path)
    tranches = ds.split(records, ratio_values, seed)
    os.makedirs(out_dir, exist_ok=True)
    for name, tranche in zip(("train", "validation", "test"), tranches):
        path = os.path.join(out_dir, f"{name}.jsonl")
        ds.save(tranche, path, extra={"tranche": name, "split_seed": seed})
        click.echo(f"{name}: {len(tranche)} records -> {path}")


@cli.command()
@click.option("--task", required=True, type=click.Choice(["spectrum", "denoise"]))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--hidden", default=128, show_default=True, type=int)
@click.option("--epochs", default=150, show_default=True, type=int)
@click.option("--max-lr", "max_lr", default=2e-2, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
def train(task, data_dir, hidden, epochs, max_lr, seed, ckpt_path):
    """Train the spectrum regressor or the curve denoiser on a split dir."""
    train_records = ds.load(os.path.join(data_dir, "train.jsonl"))
    val_records = ds.load(os.path.join(data_dir, "validation.jsonl"))
    if task == "spectrum":
        x_tr, y_tr = ds.curves_matrix(train_records), ds.spectra_matrix(train_records)
        x_va, y_va = ds.curves_matrix(val_records), ds.spectra_matrix(val_records)
        est = SpectrumRegressor(
            hidden_dim=hidden, epochs=epochs, max_lr=max_lr, seed=seed
        )
    else:
        x_tr = ds.curves_matrix(train_records, noisy=True)
        y_tr = ds.curves_matrix(train_records)
        x_va = ds.curves_matrix(val_records, noisy=True)
        y_va = ds.curves_matrix(val_records)
        est = CurveDenoiser(hidden_dim=hidden, epochs=epochs, max_lr=max_lr, seed=seed)
    est.fit(x_tr, y_tr, validation_data=(x_va, y_va))
    est.save(ckpt_path)
    best = min(h["val_mape"] for h in est.history_)
    click.echo(f"checkpoint -> {ckpt_path} (best validation MAPE {best:.3f}%)")


@cli.command()
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def infer(ckpt_path, in_path, out_path):
    """Run a checkpoint over a corpus; writes {id, values} JSON lines."""
    params, manifest = load_checkpoint(ckpt_path)
    records = ds.load(in_path)
    if params.head is Head.EXPONENTIAL:
        est = SpectrumRegressor.from_checkpoint(ckpt_path)
        x = ds.curves_matrix(records)
        kind = "spectrum"
    else:
        est = CurveDenoiser.from_checkpoint(ckpt_path)
        x = ds.curves_matrix(records, noisy=True)
        kind = "coherence"
    values = est.predict(x)
    tmp = out_path + ".tmp"
    with open(tmp, "w") as fh:
        for rec, row in zip(records, values):
            fh.write(
                json.dumps({"id": rec.id, "kind": kind, "values": list(map(float, row))})
                + "\n"
            )
    os.replace(tmp, out_path)
    click.echo(f"wrote {len(records)} predictions to {out_path}")


@cli.command()
@click.option("--method", required=True, type=click.Choice(["delta", "as"]))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--as-kmax", "as_kmax", default=7, show_default=True, type=int)
@click.option(
    "--as-taus",
    "as_taus",
    default=None,
    help="lo,hi,count for the log-spaced delay grid (defaults to the record band)",
)
@click.option("--out", "out_path", required=True, type=click.Path())
def invert(method, in_path, as_kmax, as_taus, out_path):
    """Classical spectrum reconstruction for every record of a corpus."""
    records = ds.load(in_path)
    rows = []
    for rec in records:
        if method == "delta":
            family = SequenceFamily.parse(rec.sequence_family)
            spec = delta_inversion(rec.curve(), family.n_pulses)
        else:
            grid = FrequencyGrid(rec.freq_grid)
            if as_taus is None:
                taus = default_tau_grid(grid)
            else:
                parts = as_taus.split(",")
                if len(parts) != 3:
                    raise ValidationError("--as-taus must be 'lo,hi,count'")
                taus = np.geomspace(float(parts[0]), float(parts[1]), int(parts[2]))
            spec = alvarez_suter(
                rec.noise_spectrum(), tau_grid=taus, k_max=as_kmax, requested_grid=grid
            )
        rows.append({"id": rec.id, "kind": "spectrum", "values": list(map(float, spec.values))})
    tmp = out_path + ".tmp"
    with open(tmp, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    os.replace(tmp, out_path)
    click.echo(f"wrote {len(rows)} reconstructions to {out_path}")


@cli.command()
@click.option("--spectrum", "spectrum_path", required=True, type=click.Path(exists=True))
@click.option("--n", "n_pulses", default=32, show_default=True, type=int)
@click.option("--t", "target_time", required=True, type=float)
@click.option("--tau-pi", "tau_pi", default=1e-7, show_default=True, type=float)
@click.option("--out", "out_path", required=True, type=click.Path())
def optimize(spectrum_path, n_pulses, target_time, tau_pi, out_path):
    """Optimize pulse positions for a spectrum JSON file.

    The input carries {"freq_grid_rad_s": [...], "spectrum": [...]}; the
    output records the optimized sequence and the coherence comparison.
    """
    with open(spectrum_path) as fh:
        obj = json.load(fh)
    try:
        grid = FrequencyGrid(np.asarray(obj["freq_grid_rad_s"], dtype=float))
        values = np.asarray(obj["spectrum"], dtype=float)
    except KeyError as exc:
        raise ValidationError(f"spectrum file missing field {exc}") from exc
    spec = NoiseSpectrum(grid=grid, values=values)
    problem = OptimizationProblem(
        spectrum=spec, n_pulses=n_pulses, target_time=target_time, tau_pi=tau_pi
    )
    result = optimize_pulses(problem)
    payload = {
        "sequence": json.loads(result.sequence.to_json()),
        "c_init": result.c_init,
        "c_udd": result.c_udd,
        "c_opt": result.c_opt,
        "absolute_enhancement": result.absolute_enhancement,
        "iterations": result.iterations,
        "converged": result.converged,
    }
    tmp = out_path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, out_path)
    click.echo(
        f"C: evenly-spaced {result.c_init:.4f} -> optimized {result.c_opt:.4f} "
        f"(uhrig {result.c_udd:.4f})"
    )


@cli.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--truth", "truth_path", required=True, type=click.Path(exists=True))
@click.option("--metric", required=True, type=click.Choice(["spectrum", "logc"]))
@click.option("--report", "report_dir", required=True, type=click.Path())
def eval_cmd(pred_path, truth_path, metric, report_dir):
    """Score predictions against a truth corpus and emit CSV reports."""
    records = {r.id: r for r in ds.load(truth_path)}
    ids, families, errors = [], [], []
    with open(pred_path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            rec = records.get(obj["id"])
            if rec is None:
                raise ValidationError(f"prediction id {obj['id']!r} not in truth corpus")
            values = np.asarray(obj["values"], dtype=float)
            if metric == "spectrum":
                pred_spec = NoiseSpectrum(FrequencyGrid(rec.freq_grid), np.maximum(values, 0))
                err = spectrum_error(pred_spec, rec.noise_spectrum())
            else:
                grid = TimeGrid(rec.time_grid)
                pred_curve = CoherenceCurve(
                    grid=grid, coherence=np.clip(values, 1e-12, 1.0)
                )
                err = log_curve_error(pred_curve, rec.curve())
            ids.append(rec.id)
            families.append(rec.family)
            errors.append(err)
    if not ids:
        raise ValidationError("no predictions found")
    report = build_report(ids, families, np.asarray(errors))
    paths = write_report(report, report_dir)
    for family, (mean, sd, count, mx) in sorted(report.family_stats.items()):
        click.echo(f"{family}: mean {mean:.3f}% sd {sd:.3f}% max {mx:.3f}% (n={count})")
    click.echo(f"report -> {paths['summary']}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        return 130
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
