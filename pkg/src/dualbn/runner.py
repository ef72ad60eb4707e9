"""Subcommand implementations behind the CLI.

Each command resolves its config, writes the resolved snapshot next to
its outputs, and emits delimited reports plus PNG renders. Numeric
artifacts (checkpoint, CSV, JSON, PGM) are bit-deterministic for a
fixed resolved config under --threads 1.
"""

import os

import numpy as np

from . import figures, reports
from .batchnorm import BranchId
from .checkpoint import config_digest, load_checkpoint, save_checkpoint
from .config import (build_policy, build_train_config, dataset_root,
                     resolve_config, write_resolved_config)
from .corruptions import all_specs
from .data import export_cifar10, load_cifar10, load_cifar100, synth_dataset
from .errors import ConfigError, UninitializedStatistics
from .evaluation import (Predictor, affinity, corruption_suite, evaluate,
                         fourier_sensitivity, low_pass_sweep)
from .model import build_network
from .train import train_model


def _subset_train(train, n):
    """First-n training records, restandardized on the subset."""
    if not n or n >= len(train):
        return train
    from .data import Dataset, channel_stats
    images, labels = train.images[:n], train.labels[:n]
    mean, std = channel_stats(images)
    return Dataset(images, labels, mean, std, train.split, train.num_classes)


def load_dataset(resolved):
    d = resolved["dataset"]
    if d["subset"] is not None and d["subset"] < 1:
        raise ConfigError(f"dataset.subset must be >= 1, got {d['subset']}")
    if d["kind"] == "synth":
        return synth_dataset(num_classes=d["num_classes"], n_train=d["n_train"],
                             n_test=d["n_test"], size=d["size"],
                             seed=resolved["seed"])
    if d["kind"] == "cifar10":
        train, test = load_cifar10(dataset_root(resolved))
    elif d["kind"] == "cifar100":
        train, test = load_cifar100(dataset_root(resolved))
    else:
        raise ConfigError(f"dataset.kind '{d['kind']}' not one of synth|cifar10|cifar100")
    return _subset_train(train, d["subset"]), test


def _prepare(resolved, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_resolved_config(resolved, os.path.join(out_dir, "resolved_config.json"))


def _restore(checkpoint_path):
    if not checkpoint_path:
        raise ConfigError("this command needs --checkpoint")
    return load_checkpoint(checkpoint_path)


def cmd_train(resolved, out_dir):
    _prepare(resolved, out_dir)
    train_ds, test_ds = load_dataset(resolved)
    cfg = build_train_config(resolved, train_ds.num_classes)
    net = build_network(cfg.model, resolved["seed"])
    digest = config_digest(resolved)
    every = resolved["train"]["checkpoint_every"]

    def on_epoch_end(epoch, net_, log_):
        if every and (epoch + 1) % every == 0 and epoch + 1 < cfg.epochs:
            save_checkpoint(net_, os.path.join(out_dir, f"checkpoint_epoch{epoch + 1:04d}.bin"),
                            seed=resolved["seed"], digest=digest)

    log = train_model(net, train_ds, cfg, on_epoch_end=on_epoch_end)
    save_checkpoint(net, os.path.join(out_dir, "checkpoint.bin"),
                    seed=resolved["seed"], digest=digest)
    reports.write_training_log(os.path.join(out_dir, "train_log.csv"), log)
    if log:
        figures.loss_curve_png(os.path.join(out_dir, "loss_curve.png"), log)
    acc = evaluate(net, test_ds, BranchId.MAIN)
    reports.write_json(os.path.join(out_dir, "train_summary.json"),
                       {"steps": len(log), "final_loss": log[-1].loss_total if log else None,
                        "test_accuracy_main": acc})
    return 0


def _read_baseline_errors(path, names):
    header, rows = reports.read_csv(path)
    if tuple(header) != ("corruption", "severity", "error"):
        raise ConfigError(f"{path}: not a corruption error CSV (header {header})")
    errors = np.full((len(names), 5), np.nan)
    index = {n: i for i, n in enumerate(names)}
    for name, sev, err in rows:
        if name not in index:
            raise ConfigError(f"{path}: corruption '{name}' not in current suite")
        errors[index[name], int(sev) - 1] = float(err)
    if np.any(np.isnan(errors)):
        raise ConfigError(f"{path}: baseline matrix incomplete")
    return errors


def cmd_eval(resolved, checkpoint_path, out_dir):
    _prepare(resolved, out_dir)
    net, _ = _restore(checkpoint_path)
    _, test_ds = load_dataset(resolved)
    ev = resolved["eval"]
    seed = resolved["seed"]

    summary = {"clean_accuracy": {}}
    summary["clean_accuracy"]["main"] = evaluate(net, test_ds, BranchId.MAIN)
    try:
        summary["clean_accuracy"]["auxiliary"] = evaluate(net, test_ds, BranchId.AUXILIARY)
        have_aux = True
    except UninitializedStatistics:
        summary["clean_accuracy"]["auxiliary"] = None
        have_aux = False

    specs = all_specs()
    baseline = None
    if ev["want_ce"]:
        if not ev["baseline_errors_csv"]:
            raise ConfigError("eval.want_ce needs eval.baseline_errors_csv")
        baseline = _read_baseline_errors(ev["baseline_errors_csv"],
                                         tuple(dict.fromkeys(s.name for s in specs)))
    report = corruption_suite(net, test_ds, specs, Predictor(net), seed=seed,
                              n_images=ev["corruption_images"],
                              baseline_errors=baseline, want_ce=ev["want_ce"])
    reports.write_corruption_report(os.path.join(out_dir, "corruption_report.csv"),
                                    os.path.join(out_dir, "corruption_report.json"),
                                    report)
    figures.corruption_heatmap_png(os.path.join(out_dir, "corruption_heatmap.png"), report)
    summary["mean_uce_main"] = report.mean_uce

    if have_aux:
        rows = []
        for lam in ev["lambda_grid"]:
            pred = Predictor(net, lam=float(lam),
                             logit_space=ev["logit_space_interpolation"])
            acc = _predictor_accuracy(pred, test_ds)
            if ev["lambda_uce"]:
                rep = corruption_suite(net, test_ds, specs, pred, seed=seed,
                                       n_images=ev["corruption_images"])
                rows.append((float(lam), acc, rep.mean_uce))
            else:
                rows.append((float(lam), acc))
        reports.write_lambda_curve(os.path.join(out_dir, "lambda_curve.csv"), rows)
        figures.lambda_curve_png(os.path.join(out_dir, "lambda_curve.png"), rows)
        summary["lambda_grid"] = [r[0] for r in rows]
    else:
        summary["lambda_grid"] = None

    reports.write_json(os.path.join(out_dir, "eval_summary.json"), summary)
    return 0


def _predictor_accuracy(pred, dataset):
    from .evaluation import _accuracy
    return _accuracy(pred, dataset.images, dataset.labels)


def cmd_fourier(resolved, checkpoint_path, out_dir):
    _prepare(resolved, out_dir)
    net, _ = _restore(checkpoint_path)
    _, test_ds = load_dataset(resolved)
    fc = resolved["fourier"]
    fmap = fourier_sensitivity(net, test_ds, r=fc["norm"], seed=resolved["seed"],
                               n_images=fc["n_images"])
    reports.write_fourier_csv(os.path.join(out_dir, "fourier_map.csv"), fmap)
    reports.write_pgm(os.path.join(out_dir, "fourier_map.pgm"), fmap.centered)
    figures.fourier_heatmap_png(os.path.join(out_dir, "fourier_map.png"), fmap)
    return 0


def cmd_lowpass(resolved, checkpoint_path, out_dir):
    _prepare(resolved, out_dir)
    net, _ = _restore(checkpoint_path)
    _, test_ds = load_dataset(resolved)
    lp = resolved["lowpass"]
    curve = low_pass_sweep(net, test_ds, lp["bandwidths"], n_images=lp["n_images"])
    reports.write_lowpass_csv(os.path.join(out_dir, "lowpass_curve.csv"), curve)
    figures.lowpass_curve_png(os.path.join(out_dir, "lowpass_curve.png"), curve)
    return 0


def cmd_affinity(resolved, checkpoint_path, out_dir):
    _prepare(resolved, out_dir)
    net, _ = _restore(checkpoint_path)
    _, test_ds = load_dataset(resolved)
    af = resolved["affinity"]
    ds = test_ds
    if af["n_images"]:
        from .data import Dataset
        n = af["n_images"]
        ds = Dataset(test_ds.images[:n], test_ds.labels[:n], test_ds.mean,
                     test_ds.std, test_ds.split, test_ds.num_classes)
    rows = []
    for name in af["policies"]:
        policy = build_policy(name)
        rows.append((policy.name, affinity(net, ds, policy, seed=resolved["seed"])))
    reports.write_affinity_csv(os.path.join(out_dir, "affinity.csv"), rows)
    figures.affinity_bar_png(os.path.join(out_dir, "affinity_bars.png"), rows)
    return 0


def cmd_corrupt(resolved, out_dir):
    """Export corrupted copies of the test split in the binary image layout."""
    _prepare(resolved, out_dir)
    _, test_ds = load_dataset(resolved)
    n = resolved["eval"]["corruption_images"] or len(test_ds)
    from .evaluation import corrupt_images
    index = []
    for spec in all_specs():
        out = corrupt_images(test_ds.images[:n], spec, resolved["seed"])
        fname = f"corrupt_{spec.name}_s{spec.severity}.bin"
        export_cifar10(os.path.join(out_dir, fname), out, test_ds.labels[:n])
        index.append({"corruption": spec.name, "severity": spec.severity,
                      "param": spec.param, "file": fname, "images": int(n)})
    reports.write_json(os.path.join(out_dir, "corrupt_index.json"),
                       {"records": index, "record_bytes": 3073})
    return 0


def dispatch(args):
    from .config import load_config_file
    raw = load_config_file(args.config) if args.config else None
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out:
        overrides["out_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = args.threads
    resolved = resolve_config(raw, preset=args.preset, overrides=overrides)
    out_dir = resolved["out_dir"]
    if args.command == "train":
        return cmd_train(resolved, out_dir)
    if args.command == "eval":
        return cmd_eval(resolved, args.checkpoint, out_dir)
    if args.command == "fourier":
        return cmd_fourier(resolved, args.checkpoint, out_dir)
    if args.command == "lowpass":
        return cmd_lowpass(resolved, args.checkpoint, out_dir)
    if args.command == "affinity":
        return cmd_affinity(resolved, args.checkpoint, out_dir)
    if args.command == "corrupt":
        return cmd_corrupt(resolved, out_dir)
    raise ConfigError(f"unknown command '{args.command}'")
