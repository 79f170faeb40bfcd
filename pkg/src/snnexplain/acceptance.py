"""Acceptance suite: ten verifiable criteria covering gradients, loss
identities, prototype math, the desk-scale fidelity experiment, sampling
statistics, the digit smoke run, and format/determinism contracts.

Each criterion returns a CriterionResult; the `eval` CLI subcommand and the
pytest suite both run these functions."""

from __future__ import annotations

import functools
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import architectures as arch
from .autoencoder import (AEModel, AutoencoderLossWeights,
                          batch_loss_and_grads, embedding_reconstruction_error,
                          finetune_decoder, train_autoencoder, decode)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import gen_synthetic, parse_idx, serialize_idx
from .explain import (PerturbationConfig, compute_prototypes, explain,
                      nearest_prototype, perturbation_sigma,
                      sample_perturbations, select_important_features)
from .layers import LayerSpec
from .network import build_network, forward, grad_check, max_rel_err_vs_fd
from .optim import OptimizerConfig
from .siamese import (ContrastiveParams, build_pair_set, contrastive_loss,
                      embed, pair_loss_and_grads, train_snn)

logging.getLogger("snnexplain").setLevel(logging.ERROR)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str


def _result(number, title, checks, elapsed=None, limit=None):
    """checks: list of (ok, message); runtime limit folded in when given."""
    if elapsed is not None and limit is not None:
        checks = checks + [(elapsed < limit,
                            f"runtime {elapsed:.1f}s (limit {limit:.0f}s)")]
    passed = all(ok for ok, _ in checks)
    detail = "; ".join(msg for _, msg in checks)
    return CriterionResult(number, title, passed, detail)


def _all_kind_net(seed):
    """Every layer kind of the implemented set in one small network."""
    return build_network([
        LayerSpec("Reshape", target_shape=(4, 4, 1)),
        LayerSpec("Conv2D", filters=2), LayerSpec("ReLU"),
        LayerSpec("MaxPool2D"),
        LayerSpec("Conv2D", filters=2, kernel=(2, 2), padding="valid"),
        LayerSpec("ReLU"), LayerSpec("UpSample2D"),
        LayerSpec("Flatten"), LayerSpec("Dense", units=5),
        LayerSpec("Sigmoid"), LayerSpec("Dense", units=3),
    ], (16,), seed)


def criterion_1() -> CriterionResult:
    t0 = time.time()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        net = _all_kind_net(seed)
        x = rng.uniform(size=16)
        target = rng.uniform(size=3)
        worst = max(worst, grad_check(
            net, lambda o: float(np.sum((o - target) ** 2)), x, 1e-5))

        # contrastive loss through a shared subnet
        subnet = build_network(arch.dense_subnet(3, (6,)), (5,), seed + 10)
        xi = rng.uniform(size=(4, 5))
        xj = rng.uniform(size=(4, 5))
        z = np.array([0, 1, 0, 1])
        cparams = ContrastiveParams(tau=1.0, mu_reg=0.1)
        _, grads = pair_loss_and_grads(subnet, xi, xj, z, cparams)
        worst = max(worst, max_rel_err_vs_fd(
            subnet, lambda: pair_loss_and_grads(subnet, xi, xj, z, cparams)[0],
            grads, 1e-5, atol=1e-8))

        # combined autoencoder loss through conv encoder + dense decoder
        enc = _all_kind_net(seed + 20)
        dec = build_network(arch.dense_decoder(16, (6,)), (3,), seed + 30)
        ae = AEModel(enc, dec)
        xb = rng.uniform(size=(3, 16))
        hb = rng.uniform(size=(3, 3))
        w = AutoencoderLossWeights(gamma=1.0, mu_close=0.7, lambda_reg=0.01)
        _, eg, dg = batch_loss_and_grads(ae, xb, hb, w)
        obj = lambda: batch_loss_and_grads(ae, xb, hb, w)[0]
        worst = max(worst, max_rel_err_vs_fd(enc, obj, eg, 1e-5, atol=1e-8))
        worst = max(worst, max_rel_err_vs_fd(dec, obj, dg, 1e-5, atol=1e-8))
    return _result(1, "gradient correctness",
                   [(worst <= 1e-4, f"max relative error {worst:.3g}")],
                   time.time() - t0, 60)


def criterion_2() -> CriterionResult:
    checks = []
    v, *_ = contrastive_loss([1.0, 2.0], [1.0, 2.0], 0, 1.0)
    checks.append((v == 0.0, f"z=0 coincident pair gives {v}"))
    v, gi, gj = contrastive_loss([0.0, 0.0], [3.0, 0.0], 1, 2.0)
    checks.append((v == 0.0 and not gi.any() and not gj.any(),
                   "inactive hinge gives zero value and gradients"))
    v1, *_ = contrastive_loss([0.0, 0.0], [1.0, 0.0], 1, 2.0)
    checks.append((abs(v1 - 1.0) <= 1e-12, f"hand case z=1 gives {v1}"))
    v2, *_ = contrastive_loss([0.0, 0.0], [1.0, 1.0], 0, 1.0)
    checks.append((abs(v2 - 2.0) <= 1e-12, f"hand case z=0 gives {v2}"))
    rng = np.random.default_rng(0)
    sym = True
    for _ in range(50):
        a, b = rng.normal(size=4), rng.normal(size=4)
        z = int(rng.integers(2))
        va, *_ = contrastive_loss(a, b, z, 1.0)
        vb, *_ = contrastive_loss(b, a, z, 1.0)
        sym &= abs(va - vb) <= 1e-12 and va >= 0
    checks.append((sym, "symmetric and nonnegative on 50 random pairs"))
    return _result(2, "contrastive loss identities", checks)


def criterion_3() -> CriterionResult:
    rng = np.random.default_rng(1)
    worst = 0.0
    proto_ok = True
    for _ in range(20):
        n = int(rng.integers(4, 101))
        d = int(rng.integers(2, 17))
        c = int(rng.integers(2, 5))
        h = rng.normal(size=(n, d))
        labels = np.concatenate([np.arange(c), rng.integers(0, c, n - c)])
        protos = compute_prototypes(h, labels)
        for k in range(c):
            naive = np.zeros(d)
            cnt = 0
            for hi, yi in zip(h, labels):
                if yi == k:
                    naive += hi
                    cnt += 1
            worst = max(worst, float(np.max(np.abs(
                protos.prototype_for(k) - naive / cnt))))
            proto_ok &= nearest_prototype(protos.prototype_for(k), protos) == k
    return _result(3, "prototype oracle equivalence",
                   [(worst <= 1e-12, f"max deviation from naive mean {worst:.3g}"),
                    (proto_ok, "nearest_prototype(c_k) == k")])


TOY_OPT = OptimizerConfig(method="adam", lr=1e-3, seed=0)


@functools.lru_cache(maxsize=1)
def _toy_run():
    t0 = time.time()
    ds = gen_synthetic("gaussian_blobs",
                       {"m": 8, "n": 200, "classes": 2,
                        "separation": 0.2, "noise": 0.05}, seed=0)
    n_train = 150
    x_tr, y_tr = ds.inputs[:n_train], ds.labels[:n_train]
    x_te, y_te = ds.inputs[n_train:], ds.labels[n_train:]
    pairs = build_pair_set(y_tr, 5, 0)
    snn, hist = train_snn(x_tr, pairs, arch.dense_subnet(2, (64,)),
                          ContrastiveParams(), TOY_OPT, epochs=100)
    h_tr = embed(snn, x_tr)
    ae, ae_hist = train_autoencoder(x_tr, h_tr, arch.dense_encoder(2, (64,)),
                                    arch.dense_decoder(8, (64,)),
                                    AutoencoderLossWeights(), TOY_OPT,
                                    epochs=150)
    return dict(ds=ds, x_tr=x_tr, y_tr=y_tr, x_te=x_te, y_te=y_te, snn=snn,
                hist=hist, h_tr=h_tr, ae=ae, ae_hist=ae_hist,
                elapsed=time.time() - t0)


def criterion_4() -> CriterionResult:
    run = _toy_run()
    h, y = run["h_tr"], run["y_tr"]
    diff = h[:, None, :] - h[None, :, :]
    dist = np.sqrt(np.sum(diff ** 2, axis=-1))
    same = y[:, None] == y[None, :]
    upper = np.triu(np.ones_like(dist, dtype=bool), 1)
    intra = float(dist[same & upper].mean())
    inter = float(dist[~same & upper].mean())
    protos = compute_prototypes(h, y)
    h_te = embed(run["snn"], run["x_te"])
    acc = float(np.mean([nearest_prototype(hi, protos) == yi
                         for hi, yi in zip(h_te, run["y_te"])]))
    return _result(4, "toy embedding separation",
                   [(intra < 0.5 * inter,
                     f"intra {intra:.3f} vs inter {inter:.3f}"),
                    (acc >= 0.9, f"held-out accuracy {acc:.2f}")],
                   run["elapsed"], 120)


def criterion_5() -> CriterionResult:
    run = _toy_run()
    hist = run["ae_hist"]
    ratio = hist.align_final / hist.align_initial
    ae = AEModel(run["ae"].encoder.copy(), run["ae"].decoder.copy())
    before_enc = [p.copy() for p in ae.encoder.flat_params()]
    before = embedding_reconstruction_error(ae, run["x_tr"], run["h_tr"])
    ae = finetune_decoder(ae, run["h_tr"], run["x_tr"], TOY_OPT, epochs=10)
    after = embedding_reconstruction_error(ae, run["x_tr"], run["h_tr"])
    enc_same = all((a == b).all() for a, b in
                   zip(before_enc, ae.encoder.flat_params()))
    return _result(5, "autoencoder alignment",
                   [(ratio <= 0.2, f"alignment ratio {ratio:.4f}"),
                    (enc_same, "encoder bit-identical after fine-tuning"),
                    (after <= before,
                     f"psi error {before:.4f} -> {after:.4f}")])


def criterion_6() -> CriterionResult:
    rng = np.random.default_rng(5)
    d = 10
    h = rng.normal(size=d)
    c_k = h + rng.normal(size=d)
    important = select_important_features(h, c_k, 5)
    sigma = perturbation_sigma(h, c_k, 0.1, 1e-6)
    deltas = sample_perturbations(important, sigma, h, c_k, 5000, seed=11)
    half_normal_mean = sigma * np.sqrt(2.0 / np.pi)
    means = np.mean(np.abs(deltas[:, important]), axis=0)
    rel = np.max(np.abs(means - half_normal_mean)) / half_normal_mean
    off = np.delete(deltas, important, axis=1)
    sign = np.where(c_k[important] >= h[important], 1.0, -1.0)
    directed = bool(np.all(deltas[:, important] * sign >= 0))
    return _result(6, "perturbation statistics",
                   [(rel <= 0.05,
                     f"max |mean| deviation {rel:.3%} of sigma*sqrt(2/pi)"),
                    (not off.any(), "off-support coordinates exactly zero"),
                    (directed, "all samples signed toward the prototype")])


@functools.lru_cache(maxsize=1)
def _planted_run():
    t0 = time.time()
    ds = gen_synthetic("planted_block",
                       {"height": 8, "width": 8, "n": 400,
                        "block": (1, 1, 3, 3)}, seed=1)
    n_train = 380
    x_tr, y_tr = ds.inputs[:n_train], ds.labels[:n_train]
    pairs = build_pair_set(y_tr, 3, 0)
    snn, _ = train_snn(x_tr, pairs, arch.dense_subnet(4, (32,)),
                       ContrastiveParams(mu_reg=1e-4), TOY_OPT, epochs=40)
    h_tr = embed(snn, x_tr)
    protos = compute_prototypes(h_tr, y_tr)
    ae, _ = train_autoencoder(x_tr, h_tr, arch.dense_encoder(4, (64,)),
                              arch.dense_decoder(64, (64,)),
                              AutoencoderLossWeights(lambda_reg=1e-3),
                              TOY_OPT, epochs=200)
    ae = finetune_decoder(ae, h_tr, x_tr, TOY_OPT, epochs=20)
    return dict(ds=ds, snn=snn, ae=ae, protos=protos,
                elapsed=time.time() - t0)


def criterion_7() -> CriterionResult:
    run = _planted_run()
    ds = run["ds"]
    block = set(ds.block.tolist())
    q = len(block)
    cfg = PerturbationConfig(s=2, q=q, n_samples=5000, seed=7)
    fractions = []
    for i in range(380, 400):
        res = explain(ds.inputs[i], run["snn"], run["ae"], run["protos"], cfg)
        hit = len(set(np.flatnonzero(res.mask).tolist()) & block)
        fractions.append(hit / q)
    mean_frac = float(np.mean(fractions))
    return _result(7, "end-to-end explanation fidelity",
                   [(mean_frac >= 0.7,
                     f"mean in-block mask fraction {mean_frac:.2f} over 20 examples")],
                   run["elapsed"], 300)


def criterion_8() -> CriterionResult:
    run = _planted_run()
    ds = run["ds"]
    x = ds.inputs[380].copy()          # true class 0 (low block)
    true_label = int(ds.labels[380])
    x[ds.block] = 0.9                  # force a class-1 looking block
    h = embed(run["snn"], x)
    k = int(nearest_prototype(h, run["protos"]))
    cfg = PerturbationConfig(s=2, q=9, n_samples=1000, seed=7)
    res = explain(x, run["snn"], run["ae"], run["protos"], cfg)
    return _result(8, "misclassification behavior",
                   [(k != true_label,
                     f"nearest prototype {k} differs from true label {true_label}"),
                    (res.target_class == k,
                     f"explanation targets class {res.target_class}")])


def _find_mnist(mnist_dir: Optional[str]):
    """Return (images_path, labels_path) if MNIST IDX files are present."""
    candidates = [mnist_dir, os.environ.get("SNNEXPLAIN_MNIST_DIR"),
                  "data/mnist", "data"]
    names = [("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
             ("train-images.idx3-ubyte", "train-labels.idx1-ubyte")]
    for d in candidates:
        if not d or not os.path.isdir(d):
            continue
        for imgs, labels in names:
            a, b = os.path.join(d, imgs), os.path.join(d, labels)
            if os.path.exists(a) and os.path.exists(b):
                return a, b
    return None


def _digits_as_idx(out_dir: str):
    """Offline stand-in: scikit-learn's handwritten digits upscaled to 28x28
    and written through the IDX serializer."""
    from sklearn.datasets import load_digits
    x8, y = load_digits(return_X_y=True)
    imgs = np.kron((x8 / 16.0).reshape(-1, 8, 8), np.ones((3, 3)))
    imgs = np.pad(imgs, ((0, 0), (2, 2), (2, 2)))
    img_path = os.path.join(out_dir, "digits-images-idx3-ubyte")
    lab_path = os.path.join(out_dir, "digits-labels-idx1-ubyte")
    with open(img_path, "wb") as f:
        f.write(serialize_idx(imgs))
    with open(lab_path, "wb") as f:
        f.write(serialize_idx(y))
    return img_path, lab_path


def _smoke_config(img_path, lab_path, out_dir):
    return {
        "seed": 0,
        "out": out_dir,
        "dataset": {"kind": "idx",
                    "idx": {"images": img_path, "labels": lab_path,
                            "limit": 2000}},
        "snn": {"architecture": "dense", "hidden": [128],
                "embedding_dim": 10, "pairs_per_anchor": 2, "epochs": 15,
                "optimizer": {"method": "adam", "lr": 1e-3}},
        "autoencoder": {"architecture": "conv28", "epochs": 20,
                        "finetune_epochs": 5,
                        "optimizer": {"method": "adam", "lr": 1e-3}},
        "explain": {"s": 5, "q": 40, "n_samples": 500},
    }


def _run_cli(args):
    from click.testing import CliRunner
    from .cli import main
    result = CliRunner().invoke(main, args, catch_exceptions=False)
    if result.exit_code != 0:
        raise RuntimeError(f"CLI {' '.join(args)} failed: {result.output}")
    return result


def criterion_9(mnist_dir: Optional[str] = None) -> CriterionResult:
    import yaml
    t0 = time.time()
    with tempfile.TemporaryDirectory() as tmp:
        found = _find_mnist(mnist_dir)
        source = "MNIST"
        if found is None:
            found = _digits_as_idx(tmp)
            source = "scikit-learn digits (MNIST files not found)"
        img_path, lab_path = found
        out = os.path.join(tmp, "run")
        cfg_path = os.path.join(tmp, "config.yaml")
        with open(cfg_path, "w") as f:
            yaml.safe_dump(_smoke_config(img_path, lab_path, out), f)
        _run_cli(["train-snn", "--config", cfg_path])
        snn_path = os.path.join(out, "snn.ckpt")
        _run_cli(["train-ae", "--config", cfg_path, "--snn", snn_path])
        ae_path = os.path.join(out, "autoencoder.ckpt")
        _run_cli(["finetune-decoder", "--config", cfg_path, "--snn", snn_path,
                  "--ae", ae_path])
        ft_path = os.path.join(out, "autoencoder_finetuned.ckpt")
        _run_cli(["prototypes", "--config", cfg_path, "--snn", snn_path])
        _run_cli(["explain", "--config", cfg_path, "--snn", snn_path,
                  "--ae", ft_path, "--protos",
                  os.path.join(out, "prototypes.json"),
                  "--index", "0", "--index", "1", "--index", "2"])
        pgms_ok = True
        for i in range(3):
            for part in ("original", "reconstruction", "overlay", "mask"):
                p = os.path.join(out, f"explain_{i:05d}_{part}.pgm")
                with open(p, "rb") as f:
                    head = f.read(15)
                pgms_ok &= head.startswith(b"P5\n28 28\n255\n")
        from .cli import load_config, load_dataset
        data = load_dataset(load_config(cfg_path))
        snn = load_checkpoint(snn_path, expect_role="snn")
        ae = load_checkpoint(ft_path, expect_role="autoencoder")
        rec = decode(ae, embed(snn, data.inputs))
        mse = float(np.mean((data.inputs - rec) ** 2))
    return _result(9, "digit smoke run",
                   [(True, f"pipeline completed on {source}"),
                    (pgms_ok, "PGM quadruples valid"),
                    (mse <= 0.05, f"per-pixel reconstruction MSE {mse:.4f}")],
                   time.time() - t0, 1800)


def criterion_10() -> CriterionResult:
    import yaml
    checks = []
    rng = np.random.default_rng(3)
    imgs = rng.integers(0, 256, size=(4, 5, 5)).astype(np.uint8)
    blob = serialize_idx(imgs / 255.0)
    checks.append((serialize_idx(parse_idx(blob)) == blob,
                   "IDX parse/serialize round trip byte-exact"))

    net = build_network(arch.dense_subnet(3, (7,)), (6,), 2)
    from .siamese import SNNModel
    with tempfile.TemporaryDirectory() as tmp:
        p = os.path.join(tmp, "m.ckpt")
        save_checkpoint(SNNModel(net), p)
        m1 = load_checkpoint(p)
        save_checkpoint(m1, p)
        m2 = load_checkpoint(p)
        same = all((a == b).all() for a, b in
                   zip(net.flat_params(), m2.subnet.flat_params()))
        checks.append((same, "checkpoint double round trip bit-exact"))

        cfg = {
            "seed": 4,
            "dataset": {"kind": "synthetic",
                        "synthetic": {"kind": "planted_block",
                                      "params": {"height": 4, "width": 4,
                                                 "n": 60}}},
            "snn": {"embedding_dim": 2, "hidden": [16], "epochs": 10,
                    "pairs_per_anchor": 2},
            "autoencoder": {"hidden": [16], "epochs": 20,
                            "finetune_epochs": 2},
            "explain": {"n_samples": 200, "q": 4, "s": 1},
        }
        outputs = []
        for run_name in ("a", "b"):
            out = os.path.join(tmp, run_name)
            cfg["out"] = out
            cfg_path = os.path.join(tmp, f"{run_name}.yaml")
            with open(cfg_path, "w") as f:
                yaml.safe_dump(cfg, f)
            snn_path = os.path.join(out, "snn.ckpt")
            _run_cli(["train-snn", "--config", cfg_path])
            _run_cli(["train-ae", "--config", cfg_path, "--snn", snn_path])
            _run_cli(["finetune-decoder", "--config", cfg_path, "--snn",
                      snn_path, "--ae", os.path.join(out, "autoencoder.ckpt")])
            _run_cli(["prototypes", "--config", cfg_path, "--snn", snn_path])
            _run_cli(["explain", "--config", cfg_path, "--snn", snn_path,
                      "--ae", os.path.join(out, "autoencoder_finetuned.ckpt"),
                      "--protos", os.path.join(out, "prototypes.json"),
                      "--index", "0", "--index", "5"])
            files = {}
            for name in sorted(os.listdir(out)):
                with open(os.path.join(out, name), "rb") as f:
                    files[name] = f.read()
            outputs.append(files)
        identical = outputs[0] == outputs[1]
        checks.append((identical,
                       "two identical pipeline runs produce byte-identical artifacts"))
    return _result(10, "formats and determinism", checks)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8,
            9: criterion_9, 10: criterion_10}


def run_all(numbers=None, mnist_dir: Optional[str] = None) -> List[CriterionResult]:
    selected = sorted(numbers) if numbers else sorted(CRITERIA)
    results = []
    for n in selected:
        if n not in CRITERIA:
            raise ValueError(f"no criterion {n}")
        fn = CRITERIA[n]
        results.append(fn(mnist_dir) if n == 9 else fn())
    return results
