"""Command-line harness for the simulation studies."""

from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path

import click

from . import experiments as ex
from .config import ExperimentConfig, load_config
from .dataset import collect_sim, load_csv, save_csv
from .mlp import load_model, save_model
from .trainer import finetune, train_offline


class Ctx:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out


def _fail(exc: Exception):
    msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
    raise click.ClickException(msg)


def _write_json(path: Path, data: dict):
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _latent_rows(latents, grid):
    rows = []
    for k in sorted(latents):
        label = grid[k].label() if k < len(grid) else ("", "", "")
        rows.append([k, *map(float, latents[k]), *label])
    return rows


def _save_training(ctx: Ctx, result, stem: str):
    dim = result.model.latent_dim
    save_model(ctx.out / f"{stem}.tbnpb", result.model, result.latents)
    ex.write_csv(ctx.out / f"{stem}_loss.csv", ["epoch", "mse"], result.history)
    ex.write_csv(ctx.out / f"{stem}_latents.csv",
                 ["grasp_id", *[f"p_{i + 1}" for i in range(dim)], "l_tool", "phi_tool", "psi_tool"],
                 _latent_rows(result.latents, ctx.cfg.grid))


def _load(path):
    if not Path(path).is_file():
        raise click.ClickException(f"model file not found: {path}")
    try:
        return load_model(path)
    except ValueError as exc:
        _fail(exc)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="INI experiment configuration.")
@click.option("--seed", type=int, default=None, help="Override the configured seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".",
              help="Directory for output artifacts.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, seed, out_dir, verbose):
    """Tool-tip model experiments on the built-in arm simulator."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(config_path)
    except (OSError, ValueError, KeyError) as exc:
        _fail(exc)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx.obj = Ctx(cfg, out)


@main.command("gen-data")
@click.option("--name", default="data.csv", show_default=True)
@click.option("--n-per-grasp", type=int, default=None)
@click.option("--noise-mm", type=float, default=None, help="Gaussian tip noise sigma.")
@click.pass_obj
def gen_data(ctx: Ctx, name, n_per_grasp, noise_mm):
    """Sample random commands for every grasp of the grid and simulate the tips."""
    cfg = ctx.cfg
    ds = collect_sim(cfg.arm, cfg.tool, cfg.grid, n_per_grasp or cfg.n_per_grasp, cfg.seed,
                     cfg.data_noise_mm if noise_mm is None else noise_mm, cfg.train.latent_dim)
    save_csv(ds, ctx.out / name)
    click.echo(f"wrote {len(ds)} samples in {len(ds.groups)} grasp groups to {ctx.out / name}")


@main.command()
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--epochs", type=int, default=None)
@click.option("--name", default="model", show_default=True, help="Output file stem.")
@click.pass_obj
def train(ctx: Ctx, data_path, epochs, name):
    """Jointly fit network weights and per-grasp latent codes."""
    cfg = ctx.cfg
    tc = cfg.train if epochs is None else replace(cfg.train, epochs=epochs)
    try:
        result = train_offline(load_csv(data_path, tc.latent_dim), tc)
    except (ValueError, FloatingPointError) as exc:
        _fail(exc)
    _save_training(ctx, result, name)
    click.echo(f"trained {tc.epochs} epochs: mse {result.initial_mse:.6g} -> {result.final_mse:.6g}")


@main.command("finetune")
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--epochs", type=int, default=None)
@click.option("--refit-normalization", is_flag=True, default=None)
@click.option("--name", default="finetuned", show_default=True)
@click.pass_obj
def finetune_cmd(ctx: Ctx, model_path, data_path, epochs, refit_normalization, name):
    """Retrain a model on new data with latents restarted from zero."""
    cfg = ctx.cfg
    model, _ = _load(model_path)
    tc = cfg.finetune if epochs is None else replace(cfg.finetune, epochs=epochs)
    refit = cfg.finetune_refit_normalization if refit_normalization is None else refit_normalization
    try:
        result = finetune(model, load_csv(data_path, model.latent_dim), tc, refit)
    except (ValueError, FloatingPointError) as exc:
        _fail(exc)
    _save_training(ctx, result, name)
    click.echo(f"fine-tuned {tc.epochs} epochs: mse {result.initial_mse:.6g} -> {result.final_mse:.6g}")


@main.command("adapt-run")
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--scenario", required=True, help=f"One of {sorted(ex.SCENARIOS)}.")
@click.pass_obj
def adapt_run(ctx: Ctx, model_path, scenario):
    """Online latent adaptation while the simulated grasp switches mid-run."""
    if scenario not in ex.SCENARIOS:
        raise click.ClickException(
            f"unknown scenario {scenario!r}; choose from {', '.join(sorted(ex.SCENARIOS))}")
    model, latents = _load(model_path)
    try:
        log = ex.adapt_run(model, latents, ctx.cfg, scenario)
    except (KeyError, ValueError, RuntimeError) as exc:
        _fail(exc)
    ex.write_csv(ctx.out / f"adapt_{scenario}.csv", log.header, log.rows)
    _write_json(ctx.out / f"adapt_{scenario}_summary.json", log.summary)
    s = log.summary
    click.echo(f"scenario {scenario}: windowed error {s['adapted_window_mean_mm']:.1f} mm "
               f"(frozen latent {s['frozen_window_mean_mm']:.1f} mm)")


@main.command("control-run")
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.option("--mode", type=click.Choice(ex.CONTROL_MODES), required=True)
@click.pass_obj
def control_run(ctx: Ctx, model_path, mode):
    """Closed-loop tip control with the chosen online updater, then a replay."""
    model, latents = _load(model_path)
    try:
        log, solves = ex.control_run(model, latents, ctx.cfg, mode, return_solves=True)
    except (KeyError, ValueError, RuntimeError) as exc:
        _fail(exc)
    ex.write_csv(ctx.out / f"control_{mode}.csv", log.header, log.rows)
    ex.write_csv(ctx.out / f"control_{mode}_solves.csv",
                 ["phase", "step", "epoch", "chosen_gamma", "loss", "position_error_mm"], solves)
    _write_json(ctx.out / f"control_{mode}_summary.json", log.summary)
    s = log.summary
    click.echo(f"{mode}: adaptation window {s['adapt_window_mean_mm']:.1f} mm, "
               f"replay {s['replay_mean_mm']:.1f} mm")


@main.command("pb-map")
@click.option("--model", "model_path", type=click.Path(), required=True)
@click.pass_obj
def pb_map(ctx: Ctx, model_path):
    """PCA map of the learned latent codes with grasp labels."""
    _, latents = _load(model_path)
    if len(latents) < 2:
        raise click.ClickException("model file holds fewer than 2 latent codes")
    log = ex.pb_map(latents, ctx.cfg.grid)
    ex.write_csv(ctx.out / "pb_map.csv", log.header, log.rows)
    click.echo(f"wrote {len(log.rows)} latent codes to {ctx.out / 'pb_map.csv'}")


if __name__ == "__main__":
    main()
