"""Command-line orchestration of the two-stage pipeline.

Subcommands: train-snn, train-ae, finetune-decoder, prototypes, explain,
eval. A YAML config file carries the experiment description; flags override
individual values. Existing artifacts are never overwritten without
--overwrite."""

from __future__ import annotations

import copy
import json
import os
import sys

import click
import numpy as np
import yaml

from . import architectures, autoencoder, siamese
from .explain import PerturbationConfig, compute_prototypes
from .explain import explain as explain_one
from .checkpoint import (checkpoint_config, load_checkpoint, load_prototypes,
                         save_checkpoint, save_prototypes)
from .data import (Dataset, _atomic_write, gen_synthetic, load_idx_dataset,
                   parse_idx, write_mask_images)
from .optim import OptimizerConfig

DEFAULT_CONFIG = {
    "seed": 0,
    "out": "runs/out",
    "dataset": {
        "kind": "synthetic",
        "synthetic": {"kind": "gaussian_blobs",
                      "params": {"m": 8, "n": 200, "classes": 2}},
        "idx": {"images": None, "labels": None, "limit": None},
    },
    "snn": {
        "architecture": "dense",
        "hidden": [64],
        "embedding_dim": 2,
        "tau": 1.0,
        "mu_reg": 0.0,
        "pairs_per_anchor": 5,
        "epochs": 100,
        "batch_size": 64,
        "optimizer": {"method": "adam", "lr": 1e-3},
    },
    "autoencoder": {
        "architecture": "dense",
        "hidden": [64],
        "gamma": 1.0,
        "mu_close": 1.0,
        "lambda_reg": 1e-4,
        "epochs": 100,
        "finetune_epochs": 10,
        "batch_size": 64,
        "optimizer": {"method": "adam", "lr": 1e-3},
    },
    "explain": {
        "s": None,
        "q": None,
        "n_samples": 5000,
        "sigma_factor": 0.1,
        "sigma_floor": 1e-6,
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        # dataset params belong to one generator kind; replace, never merge
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path) -> dict:
    cfg = DEFAULT_CONFIG
    if path:
        with open(path) as f:
            user = yaml.safe_load(f) or {}
        if not isinstance(user, dict):
            raise click.ClickException(f"{path} does not hold a mapping")
        unknown = set(user) - set(DEFAULT_CONFIG)
        if unknown:
            raise click.ClickException(
                f"unknown config keys: {sorted(unknown)}")
        cfg = _merge(cfg, user)
    return cfg


def load_dataset(cfg: dict) -> Dataset:
    ds = cfg["dataset"]
    if ds["kind"] == "synthetic":
        spec = ds["synthetic"]
        return gen_synthetic(spec["kind"], spec.get("params", {}), cfg["seed"])
    if ds["kind"] == "idx":
        idx = ds["idx"]
        if not idx.get("images") or not idx.get("labels"):
            raise click.ClickException("idx dataset needs images and labels paths")
        for p in (idx["images"], idx["labels"]):
            if not os.path.exists(p):
                raise click.ClickException(f"dataset file not found: {p}")
        return load_idx_dataset(idx["images"], idx["labels"], idx.get("limit"))
    raise click.ClickException(f"unknown dataset kind {ds['kind']!r}")


def _opt(section: dict, seed: int) -> OptimizerConfig:
    return OptimizerConfig(method=section["method"], lr=float(section["lr"]),
                           seed=seed)


def _guard_output(path: str, overwrite: bool) -> None:
    if os.path.exists(path) and not overwrite:
        raise click.ClickException(
            f"{path} already exists; pass --overwrite to replace it")


def _prepare_out(out: str) -> str:
    os.makedirs(out, exist_ok=True)
    return out


config_opt = click.option("--config", "config_path",
                          type=click.Path(exists=True), default=None,
                          help="YAML experiment config.")
seed_opt = click.option("--seed", type=int, default=None,
                        help="Override the config seed.")
out_opt = click.option("--out", type=click.Path(), default=None,
                       help="Output directory (overrides config).")
overwrite_opt = click.option("--overwrite", is_flag=True,
                             help="Replace existing artifacts.")


def _resolve(config_path, seed, out):
    cfg = load_config(config_path)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = out
    return cfg


@click.group()
def main():
    """Siamese-network explanations via an embedding-aligned autoencoder."""


@main.command("train-snn")
@config_opt
@seed_opt
@out_opt
@overwrite_opt
def train_snn_cmd(config_path, seed, out, overwrite):
    """Train the Siamese embedder and write snn.ckpt."""
    cfg = _resolve(config_path, seed, out)
    target = os.path.join(cfg["out"], "snn.ckpt")
    _guard_output(target, overwrite)
    data = load_dataset(cfg)
    s = cfg["snn"]
    side = data.spatial_shape[0] if data.spatial_shape else 0
    specs = architectures.build_snn_specs(s["architecture"],
                                          s["embedding_dim"], s["hidden"], side)
    pairs = siamese.build_pair_set(data.labels, s["pairs_per_anchor"],
                                   cfg["seed"])
    params = siamese.ContrastiveParams(tau=float(s["tau"]),
                                       mu_reg=float(s["mu_reg"]))
    model, history = siamese.train_snn(
        data.inputs, pairs, specs, params, _opt(s["optimizer"], cfg["seed"]),
        s["epochs"], s["batch_size"], init_seed=cfg["seed"])
    _prepare_out(cfg["out"])
    save_checkpoint(model, target, config={"snn": s, "seed": cfg["seed"]},
                    seed=cfg["seed"])
    click.echo(f"wrote {target} (final loss {history.epoch_loss[-1]:.6g}, "
               f"converged={history.converged})")


def _load_snn(path):
    if not path or not os.path.exists(path):
        raise click.ClickException(f"SNN checkpoint not found: {path}")
    return load_checkpoint(path, expect_role="snn")


def _load_ae(path):
    if not path or not os.path.exists(path):
        raise click.ClickException(f"autoencoder checkpoint not found: {path}")
    return load_checkpoint(path, expect_role="autoencoder")


@main.command("train-ae")
@config_opt
@seed_opt
@out_opt
@overwrite_opt
@click.option("--snn", "snn_path", type=click.Path(), required=True,
              help="Trained SNN checkpoint.")
def train_ae_cmd(config_path, seed, out, overwrite, snn_path):
    """Train the embedding-aligned autoencoder and write autoencoder.ckpt."""
    cfg = _resolve(config_path, seed, out)
    target = os.path.join(cfg["out"], "autoencoder.ckpt")
    _guard_output(target, overwrite)
    snn = _load_snn(snn_path)
    data = load_dataset(cfg)
    a = cfg["autoencoder"]
    d = snn.embedding_dim
    spec_enc, spec_dec = architectures.build_ae_specs(
        a["architecture"], data.n_features, d, a["hidden"])
    h = siamese.embed(snn, data.inputs)
    weights = autoencoder.AutoencoderLossWeights(
        gamma=float(a["gamma"]), mu_close=float(a["mu_close"]),
        lambda_reg=float(a["lambda_reg"]))
    model, history = autoencoder.train_autoencoder(
        data.inputs, h, spec_enc, spec_dec, weights,
        _opt(a["optimizer"], cfg["seed"]), a["epochs"], a["batch_size"],
        init_seed=cfg["seed"])
    _prepare_out(cfg["out"])
    save_checkpoint(model, target,
                    config={"autoencoder": a, "seed": cfg["seed"]},
                    seed=cfg["seed"])
    click.echo(f"wrote {target} (alignment {history.align_final:.6g} / "
               f"initial {history.align_initial:.6g}, "
               f"converged={history.converged})")


@main.command("finetune-decoder")
@config_opt
@seed_opt
@out_opt
@overwrite_opt
@click.option("--snn", "snn_path", type=click.Path(), required=True)
@click.option("--ae", "ae_path", type=click.Path(), required=True)
def finetune_decoder_cmd(config_path, seed, out, overwrite, snn_path, ae_path):
    """Fine-tune only the decoder; writes autoencoder_finetuned.ckpt."""
    cfg = _resolve(config_path, seed, out)
    target = os.path.join(cfg["out"], "autoencoder_finetuned.ckpt")
    _guard_output(target, overwrite)
    snn = _load_snn(snn_path)
    ae = _load_ae(ae_path)
    if ae.code_dim != snn.embedding_dim:
        raise click.ClickException(
            f"autoencoder code length {ae.code_dim} does not match "
            f"SNN embedding length {snn.embedding_dim}")
    data = load_dataset(cfg)
    a = cfg["autoencoder"]
    h = siamese.embed(snn, data.inputs)
    ae = autoencoder.finetune_decoder(ae, h, data.inputs,
                                      _opt(a["optimizer"], cfg["seed"]),
                                      a["finetune_epochs"], a["batch_size"])
    _prepare_out(cfg["out"])
    save_checkpoint(ae, target, config=checkpoint_config(ae_path),
                    seed=cfg["seed"])
    click.echo(f"wrote {target}")


@main.command("prototypes")
@config_opt
@seed_opt
@out_opt
@overwrite_opt
@click.option("--snn", "snn_path", type=click.Path(), required=True)
def prototypes_cmd(config_path, seed, out, overwrite, snn_path):
    """Compute per-class embedding prototypes; writes prototypes.json."""
    cfg = _resolve(config_path, seed, out)
    target = os.path.join(cfg["out"], "prototypes.json")
    _guard_output(target, overwrite)
    snn = _load_snn(snn_path)
    data = load_dataset(cfg)
    h = siamese.embed(snn, data.inputs)
    protos = compute_prototypes(h, data.labels)
    _prepare_out(cfg["out"])
    save_prototypes(protos, target)
    click.echo(f"wrote {target} ({len(protos)} classes)")


def _report_record(index, result):
    return {
        "index": index,
        "target_class": int(result.target_class),
        "important_features": [int(i) for i in result.important],
        "sigma": float(result.sigma),
        "n_samples": int(result.config.n_samples),
        "seed": int(result.config.seed),
        "mean_change": [float(v) for v in result.mean_change],
        "mask_indices": [int(i) for i in np.flatnonzero(result.mask)],
    }


@main.command("explain")
@config_opt
@seed_opt
@out_opt
@overwrite_opt
@click.option("--snn", "snn_path", type=click.Path(), required=True)
@click.option("--ae", "ae_path", type=click.Path(), required=True)
@click.option("--protos", "protos_path", type=click.Path(), required=True)
@click.option("--index", "indices", type=int, multiple=True,
              help="Dataset index to explain (repeatable).")
@click.option("--input", "input_path", type=click.Path(exists=True),
              default=None, help=".npy or IDX image file of inputs to explain.")
@click.option("--s", "s_override", type=int, default=None)
@click.option("--q", "q_override", type=int, default=None)
@click.option("--n-samples", type=int, default=None)
def explain_cmd(config_path, seed, out, overwrite, snn_path, ae_path,
                protos_path, indices, input_path, s_override, q_override,
                n_samples):
    """Explain examples; writes report.jsonl plus PGM image quadruples."""
    cfg = _resolve(config_path, seed, out)
    target = os.path.join(cfg["out"], "report.jsonl")
    _guard_output(target, overwrite)
    snn = _load_snn(snn_path)
    ae = _load_ae(ae_path)
    if not os.path.exists(protos_path):
        raise click.ClickException(f"prototype file not found: {protos_path}")
    protos = load_prototypes(protos_path)
    if ae.code_dim != snn.embedding_dim or \
            protos.prototypes.shape[1] != snn.embedding_dim:
        raise click.ClickException("embedding dimensions of the SNN, "
                                   "autoencoder and prototypes disagree")

    spatial = None
    if input_path:
        if input_path.endswith(".npy"):
            x = np.load(input_path)
            inputs = np.atleast_2d(np.asarray(x, dtype=np.float64))
        else:
            with open(input_path, "rb") as f:
                imgs = parse_idx(f.read())
            if imgs.ndim != 3:
                raise click.ClickException(f"{input_path} is not an image file")
            spatial = imgs.shape[1:]
            inputs = imgs.reshape(len(imgs), -1)
        chosen = list(indices) if indices else list(range(len(inputs)))
    else:
        if not indices:
            raise click.ClickException("give --index or --input")
        data = load_dataset(cfg)
        spatial = data.spatial_shape
        inputs = data.inputs
        chosen = list(indices)
    for i in chosen:
        if not 0 <= i < len(inputs):
            raise click.ClickException(f"index {i} out of range 0..{len(inputs) - 1}")

    e = cfg["explain"]
    d = snn.embedding_dim
    m = inputs.shape[1]
    s_val = s_override or e["s"] or max(1, d // 2)
    q_val = q_override or e["q"] or -(-m * 5 // 100)
    pcfg = PerturbationConfig(
        s=s_val, q=q_val, n_samples=n_samples or e["n_samples"],
        sigma_factor=float(e["sigma_factor"]),
        sigma_floor=float(e["sigma_floor"]), seed=cfg["seed"])

    _prepare_out(cfg["out"])
    lines = []
    for i in chosen:
        x = inputs[i]
        result = explain_one(x, snn, ae, protos, pcfg)
        lines.append(json.dumps(_report_record(i, result), sort_keys=True))
        if spatial is not None:
            recon = autoencoder.decode(ae, siamese.embed(snn, x))
            write_mask_images(x, recon, result.mask, spatial,
                              os.path.join(cfg["out"], f"explain_{i:05d}"))
    _atomic_write(target, ("\n".join(lines) + "\n").encode())
    click.echo(f"wrote {target} ({len(lines)} examples)")


@main.command("eval")
@click.option("--only", type=int, multiple=True,
              help="Run only these criterion numbers.")
@click.option("--mnist-dir", type=click.Path(), default=None,
              help="Directory with MNIST IDX files for the smoke run.")
def eval_cmd(only, mnist_dir):
    """Run the acceptance suite; prints one pass/fail line per criterion."""
    from .acceptance import run_all
    results = run_all(numbers=only or None, mnist_dir=mnist_dir)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        click.echo(f"[{status}] criterion {r.number:2d} {r.title}: {r.detail}")
        failed += not r.passed
    if failed:
        raise click.ClickException(f"{failed} criterion(s) failed")
    click.echo(f"all {len(results)} criteria passed")


if __name__ == "__main__":
    main()
