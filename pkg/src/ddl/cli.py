"""Command-line pipeline: train, attack, learn-dict, denoise, evaluate.

Every command is re-runnable: identical flags and seed produce identical
output bytes (reports exempt only their wall_time field). Flag precedence
is flags > config-file keys > built-in defaults; the merged configuration
is echoed into the output directory as key=value lines.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import data
from .attacks import AttackConfig, attack_dataset
from .coding import CoderConfig
from .dictlearn import DictLearnConfig, learn, load_dictionary, save_dictionary
from .errors import DataError, NumericalError
from .metrics import accuracy_table, render_psnr, psnr, ssim
from .mlp import (
    TrainConfig,
    build_mlp,
    evaluate_accuracy,
    load_model,
    predict,
    save_model,
    train,
)
from .patches import collect_training_patches, denoise_dataset

REPORT_COLUMNS = [
    "model_name",
    "dataset",
    "attack",
    "epsilon",
    "clean_acc",
    "perturbed_acc",
    "denoised_acc",
    "mean_psnr_perturbed",
    "mean_psnr_denoised",
    "mean_ssim_perturbed",
    "mean_ssim_denoised",
    "wall_time_s",
]

DEFAULTS = {
    "dataset": "synthetic",
    "data_dir": None,  # falls back to $DDL_DATA_DIR, then ./data
    "out": "out",
    "seed": 0,
    "threads": 1,
    "train_n": 2000,
    "test_n": 500,
    "epochs": 20,
    "batch_size": 32,
    "lr": 1e-3,
    "hidden": "784,256",
    "dropout": "0.5,0.2,0.0",
    "model": None,  # defaults to <out>/model.ddlw
    "kind": "fgsm",  # attack selection: fgsm | jsma | both
    "epsilon": 0.3,
    "fgsm_variant": "sign",
    "theta": 1.0,
    "budget": 80,
    "target_policy": "next",
    "use_logits": False,
    "jsma_n": 100,
    "atoms": None,  # derived from channels: 38 gray, 2 color
    "lam": 0.1,
    "dict_epochs": 2,
    "dict_batch": 1,
    "source": "clean",  # dictionary patches: clean | perturbed
    "perturbed": None,
    "max_patches": 8000,
    "patch_size": 8,
    "center": True,
    "coder": "omp",
    "sparsity": 5,
    "coder_lam": 0.1,
    "tol": None,
    "dictionary": None,  # defaults to <out>/dictionary
    "input": None,
    "clean": None,
    "denoised": None,
    "attack_name": None,
    "psnr_fixed_peak": False,
    "denoise_clean": False,
}

SYNTHETIC_SHAPE = (16, 16, 1)
SYNTHETIC_CLASSES = 10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message)


def _str2bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected boolean, got {v!r}")


# config-file values arrive as strings and need the same coercion as flags
_COERCERS = {
    "seed": int,
    "threads": int,
    "train_n": int,
    "test_n": int,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "epsilon": float,
    "theta": float,
    "budget": int,
    "use_logits": _str2bool,
    "jsma_n": int,
    "atoms": int,
    "lam": float,
    "dict_epochs": int,
    "dict_batch": int,
    "max_patches": int,
    "patch_size": int,
    "center": _str2bool,
    "sparsity": int,
    "coder_lam": float,
    "tol": float,
    "psnr_fixed_peak": _str2bool,
    "denoise_clean": _str2bool,
}


def build_parser() -> _Parser:
    parser = _Parser(prog="ddl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p):
        p.add_argument("--config", help="key=value config file ('#' comments)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int)
        p.add_argument("--dataset", choices=["mnist", "cifar10", "synthetic"])
        p.add_argument("--data-dir", dest="data_dir")
        p.add_argument("--train-n", dest="train_n", type=int)
        p.add_argument("--test-n", dest="test_n", type=int)

    p_train = sub.add_parser("train", help="train the classifier")
    add_shared(p_train)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", dest="batch_size", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--hidden", help="comma-separated hidden layer sizes")
    p_train.add_argument("--dropout", help="comma-separated per-layer input drop rates")

    p_attack = sub.add_parser("attack", help="generate adversarial test sets")
    add_shared(p_attack)
    p_attack.add_argument("--model")
    p_attack.add_argument("--kind", choices=["fgsm", "jsma", "both"])
    p_attack.add_argument("--epsilon", type=float)
    p_attack.add_argument("--fgsm-variant", dest="fgsm_variant", choices=["sign", "raw"])
    p_attack.add_argument("--theta", type=float)
    p_attack.add_argument("--budget", type=int)
    p_attack.add_argument("--target-policy", dest="target_policy")
    p_attack.add_argument("--use-logits", dest="use_logits", action="store_true", default=None)
    p_attack.add_argument("--jsma-n", dest="jsma_n", type=int)

    p_dict = sub.add_parser("learn-dict", help="learn the patch dictionary")
    add_shared(p_dict)
    p_dict.add_argument("--atoms", type=int)
    p_dict.add_argument("--lam", type=float)
    p_dict.add_argument("--dict-epochs", dest="dict_epochs", type=int)
    p_dict.add_argument("--dict-batch", dest="dict_batch", type=int)
    p_dict.add_argument("--source", choices=["clean", "perturbed"])
    p_dict.add_argument("--perturbed", help="perturbed dataset prefix (source=perturbed)")
    p_dict.add_argument("--max-patches", dest="max_patches", type=int)
    p_dict.add_argument("--patch-size", dest="patch_size", type=int)
    p_dict.add_argument("--no-center", dest="center", action="store_false", default=None)

    p_den = sub.add_parser("denoise", help="denoise a persisted dataset")
    add_shared(p_den)
    p_den.add_argument("--dictionary", help="dictionary prefix")
    p_den.add_argument("--input", help="dataset prefix to denoise")
    p_den.add_argument("--clean", help="clean dataset prefix for quality columns")
    p_den.add_argument("--coder", choices=["omp", "ista"])
    p_den.add_argument("--sparsity", type=int)
    p_den.add_argument("--coder-lam", dest="coder_lam", type=float)
    p_den.add_argument("--tol", type=float)
    p_den.add_argument("--patch-size", dest="patch_size", type=int)
    p_den.add_argument("--no-center", dest="center", action="store_false", default=None)
    p_den.add_argument("--psnr-fixed-peak", dest="psnr_fixed_peak", action="store_true", default=None)

    p_eval = sub.add_parser("evaluate", help="accuracy/quality report")
    add_shared(p_eval)
    p_eval.add_argument("--model")
    p_eval.add_argument("--clean", help="clean dataset prefix")
    p_eval.add_argument("--perturbed", help="perturbed dataset prefix")
    p_eval.add_argument("--denoised", help="denoised dataset prefix")
    p_eval.add_argument("--dictionary", help="dictionary prefix (report metadata)")
    p_eval.add_argument("--attack-name", dest="attack_name")
    p_eval.add_argument("--epsilon", type=float)
    p_eval.add_argument("--psnr-fixed-peak", dest="psnr_fixed_peak", action="store_true", default=None)

    p_pipe = sub.add_parser("pipeline", help="train -> attack -> learn-dict -> denoise -> evaluate")
    add_shared(p_pipe)
    p_pipe.add_argument("--epochs", type=int)
    p_pipe.add_argument("--batch-size", dest="batch_size", type=int)
    p_pipe.add_argument("--lr", type=float)
    p_pipe.add_argument("--hidden")
    p_pipe.add_argument("--dropout")
    p_pipe.add_argument("--attack", dest="kind", choices=["fgsm", "jsma", "both"])
    p_pipe.add_argument("--epsilon", type=float)
    p_pipe.add_argument("--fgsm-variant", dest="fgsm_variant", choices=["sign", "raw"])
    p_pipe.add_argument("--theta", type=float)
    p_pipe.add_argument("--budget", type=int)
    p_pipe.add_argument("--target-policy", dest="target_policy")
    p_pipe.add_argument("--use-logits", dest="use_logits", action="store_true", default=None)
    p_pipe.add_argument("--jsma-n", dest="jsma_n", type=int)
    p_pipe.add_argument("--atoms", type=int)
    p_pipe.add_argument("--lam", type=float)
    p_pipe.add_argument("--dict-epochs", dest="dict_epochs", type=int)
    p_pipe.add_argument("--dict-batch", dest="dict_batch", type=int)
    p_pipe.add_argument("--source", choices=["clean", "perturbed"])
    p_pipe.add_argument("--max-patches", dest="max_patches", type=int)
    p_pipe.add_argument("--patch-size", dest="patch_size", type=int)
    p_pipe.add_argument("--no-center", dest="center", action="store_false", default=None)
    p_pipe.add_argument("--coder", choices=["omp", "ista"])
    p_pipe.add_argument("--sparsity", type=int)
    p_pipe.add_argument("--coder-lam", dest="coder_lam", type=float)
    p_pipe.add_argument("--tol", type=float)
    p_pipe.add_argument("--psnr-fixed-peak", dest="psnr_fixed_peak", action="store_true", default=None)
    p_pipe.add_argument("--denoise-clean", dest="denoise_clean", action="store_true", default=None)

    return parser


def merge_config(args: argparse.Namespace) -> dict:
    """defaults < config-file keys < explicit flags."""
    cfg = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        for key, value in data.read_kv_file(config_path).items():
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r}")
            cfg[key] = _COERCERS.get(key, str)(value)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    if cfg["data_dir"] is None:
        cfg["data_dir"] = os.environ.get("DDL_DATA_DIR", "data")
    return cfg


def echo_config(cfg: dict, out_dir: str) -> None:
    data.write_kv_file(
        os.path.join(out_dir, "effective-config.txt"),
        {k: cfg[k] for k in sorted(cfg)},
    )


def load_split(cfg: dict):
    """(train, test) datasets with the configured subset sizes applied."""
    name = cfg["dataset"]
    if name == "synthetic":
        return data.synthesize_split(
            cfg["seed"], cfg["train_n"], cfg["test_n"], SYNTHETIC_SHAPE, SYNTHETIC_CLASSES
        )
    if name == "mnist":
        train_ds = data.load_mnist(cfg["data_dir"], "train")
        test_ds = data.load_mnist(cfg["data_dir"], "test")
    elif name == "cifar10":
        train_ds = data.load_cifar10(cfg["data_dir"], "train")
        test_ds = data.load_cifar10(cfg["data_dir"], "test")
    else:
        raise UsageError(f"unknown dataset {name!r}")
    return train_ds.subset(cfg["train_n"]), test_ds.subset(cfg["test_n"])


def _model_path(cfg):
    return cfg["model"] or os.path.join(cfg["out"], "model.ddlw")


def _dictionary_prefix(cfg):
    return cfg["dictionary"] or os.path.join(cfg["out"], "dictionary")


def _default_atoms(cfg, channels: int) -> int:
    if cfg["atoms"] is not None:
        return cfg["atoms"]
    return 38 if channels == 1 else 2


def _coder_config(cfg) -> CoderConfig:
    return CoderConfig(
        mode=cfg["coder"],
        sparsity=cfg["sparsity"],
        lam=cfg["coder_lam"],
        tol=cfg["tol"],
    )


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def write_report(rows: list[dict], metadata: dict, out_dir: str) -> None:
    """report.csv (4-decimal fixed) and report.json carrying the same values."""
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow([_format_value(row.get(c)) for c in REPORT_COLUMNS])
    json_rows = []
    for row in rows:
        jrow = {}
        for c in REPORT_COLUMNS:
            v = row.get(c)
            # parse back the CSV rendering so both files carry identical values
            jrow[c] = float(_format_value(v)) if isinstance(v, float) else v
        json_rows.append(jrow)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump({"metadata": metadata, "rows": json_rows}, f, indent=2, sort_keys=True)
        f.write("\n")


# --- stages --------------------------------------------------------------------


def stage_train(cfg: dict):
    train_ds, test_ds = load_split(cfg)
    h, w, c = train_ds.image_shape
    hidden = [int(t) for t in str(cfg["hidden"]).split(",") if t]
    dims = [h * w * c] + hidden + [train_ds.num_classes]
    drops = [float(t) for t in str(cfg["dropout"]).split(",") if t]
    if len(drops) != len(dims) - 1:
        raise UsageError(f"{len(drops)} dropout rates for {len(dims) - 1} layers")
    model = build_mlp(dims, seed=cfg["seed"], dropout=drops)
    tcfg = TrainConfig(
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        learning_rate=cfg["lr"],
        seed=cfg["seed"],
    )
    model, log = train(model, train_ds, tcfg, eval_ds=test_ds)
    save_model(model, _model_path(cfg))
    with open(os.path.join(cfg["out"], "train-log.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss", "train_acc", "test_acc"])
        for rec in log:
            writer.writerow(
                [rec["epoch"], f"{rec['loss']:.6f}", f"{rec['train_acc']:.4f}", f"{rec['test_acc']:.4f}"]
            )
    return model, train_ds, test_ds


def stage_attack(cfg: dict, model, test_ds, kind: str):
    subset = test_ds.subset(min(cfg["jsma_n"], len(test_ds))) if kind == "jsma" else test_ds
    acfg = AttackConfig(
        kind=kind,
        epsilon=cfg["epsilon"],
        fgsm_variant=cfg["fgsm_variant"],
        theta=cfg["theta"],
        max_features=cfg["budget"],
        target_policy=cfg["target_policy"],
        use_logits=cfg["use_logits"],
    )
    adversarial, results = attack_dataset(model, subset, acfg)
    prefix = os.path.join(cfg["out"], f"{kind}-images")
    data.save_dataset(adversarial, prefix)
    with open(os.path.join(cfg["out"], f"{kind}-success.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["index", "label", "prediction", "success", "hit_target", "features_changed", "iterations"]
        )
        for i, (res, label) in enumerate(zip(results, subset.labels)):
            pred = int(predict(model, res.adversarial.reshape(-1)))
            writer.writerow(
                [i, int(label), pred, int(res.success), int(res.hit_target), res.features_changed, res.iterations]
            )
    return adversarial, results


def stage_learn_dict(cfg: dict, train_ds=None, perturbed_ds=None):
    if cfg["source"] == "clean":
        if train_ds is None:
            train_ds, _ = load_split(cfg)
        source_ds, trained_on = train_ds, "clean-train"
    else:
        if perturbed_ds is None:
            if not cfg["perturbed"]:
                raise UsageError("--source perturbed requires --perturbed PREFIX")
            perturbed_ds = data.load_dataset(cfg["perturbed"])
        source_ds, trained_on = perturbed_ds, "perturbed-test"
    cols = collect_training_patches(
        source_ds,
        patch_size=cfg["patch_size"],
        max_patches=cfg["max_patches"],
        seed=cfg["seed"],
        center=cfg["center"],
    )
    channels = source_ds.image_shape[2]
    dcfg = DictLearnConfig(
        num_atoms=_default_atoms(cfg, channels),
        lam=cfg["lam"],
        epochs=cfg["dict_epochs"],
        batch_size=cfg["dict_batch"],
        seed=cfg["seed"],
    )
    epoch_log = []
    dictionary = learn(
        cols, dcfg, trained_on=trained_on, on_epoch=lambda e, r: epoch_log.append((e, r))
    )
    save_dictionary(dictionary, _dictionary_prefix(cfg))
    with open(os.path.join(cfg["out"], "dict-log.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "mean_residual"])
        for e, r in epoch_log:
            writer.writerow([e, f"{r:.6f}"])
    return dictionary


def stage_denoise(cfg: dict, dictionary, noisy_ds, clean_ds, prefix: str):
    denoised = denoise_dataset(
        noisy_ds,
        dictionary,
        _coder_config(cfg),
        patch_size=cfg["patch_size"],
        center=cfg["center"],
        threads=cfg["threads"],
    )
    data.save_dataset(denoised, prefix)
    peak = 1.0 if cfg["psnr_fixed_peak"] else None
    with open(prefix + "-quality.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "psnr_db", "ssim"])
        for i in range(len(denoised)):
            if clean_ds is None:
                writer.writerow([i, "", ""])
            else:
                ref = clean_ds.images[i]
                writer.writerow(
                    [
                        i,
                        f"{render_psnr(psnr(ref, denoised.images[i], peak)):.4f}",
                        f"{ssim(ref, denoised.images[i]):.4f}",
                    ]
                )
    return denoised


def evaluate_row(cfg, model, clean_ds, perturbed_ds, denoised_ds, attack_name, epsilon, wall_time):
    peak = 1.0 if cfg["psnr_fixed_peak"] else None
    table = accuracy_table(model, clean_ds, perturbed_ds, denoised_ds, peak)
    row = {
        "model_name": "mlp",
        "dataset": cfg["dataset"],
        "attack": attack_name,
        "epsilon": epsilon,
        "wall_time_s": wall_time,
    }
    row.update(table)
    return row


# --- commands ------------------------------------------------------------------


def cmd_train(cfg):
    stage_train(cfg)
    return 0


def cmd_attack(cfg):
    model = load_model(_model_path(cfg))
    _, test_ds = load_split(cfg)
    kinds = ["fgsm", "jsma"] if cfg["kind"] == "both" else [cfg["kind"]]
    for kind in kinds:
        stage_attack(cfg, model, test_ds, kind)
    return 0


def cmd_learn_dict(cfg):
    stage_learn_dict(cfg)
    return 0


def cmd_denoise(cfg):
    if not cfg["input"]:
        raise UsageError("denoise requires --input PREFIX")
    dictionary = load_dictionary(_dictionary_prefix(cfg))
    noisy = data.load_dataset(cfg["input"])
    clean = data.load_dataset(cfg["clean"]) if cfg["clean"] else None
    prefix = os.path.join(cfg["out"], os.path.basename(cfg["input"]) + "-denoised")
    stage_denoise(cfg, dictionary, noisy, clean, prefix)
    return 0


def cmd_evaluate(cfg):
    if not cfg["clean"]:
        raise UsageError("evaluate requires --clean PREFIX")
    model = load_model(_model_path(cfg))
    start = time.perf_counter()
    clean_ds = data.load_dataset(cfg["clean"])
    perturbed_ds = data.load_dataset(cfg["perturbed"]) if cfg["perturbed"] else None
    denoised_ds = data.load_dataset(cfg["denoised"]) if cfg["denoised"] else None
    attack_name = cfg["attack_name"] or (cfg["kind"] if perturbed_ds is not None else "none")
    epsilon = cfg["epsilon"] if attack_name == "fgsm" else None
    row = evaluate_row(
        cfg, model, clean_ds, perturbed_ds, denoised_ds, attack_name, epsilon,
        wall_time=time.perf_counter() - start,
    )
    metadata = {"dataset": cfg["dataset"], "seed": cfg["seed"]}
    if cfg["dictionary"]:
        metadata["dictionary_trained_on"] = load_dictionary(cfg["dictionary"]).trained_on
    write_report([row], metadata, cfg["out"])
    return 0


def cmd_pipeline(cfg):
    model, train_ds, test_ds = stage_train(cfg)
    data.save_dataset(test_ds, os.path.join(cfg["out"], "clean-test"))

    kinds = ["fgsm", "jsma"] if cfg["kind"] == "both" else [cfg["kind"]]
    attacked = {}
    attack_times = {}
    for kind in kinds:
        start = time.perf_counter()
        adversarial, _ = stage_attack(cfg, model, test_ds, kind)
        attacked[kind] = adversarial
        attack_times[kind] = time.perf_counter() - start

    dictionary = stage_learn_dict(cfg, train_ds=train_ds, perturbed_ds=attacked[kinds[0]])

    rows = []
    for kind in kinds:
        start = time.perf_counter()
        adversarial = attacked[kind]
        clean_subset = test_ds.subset(len(adversarial))
        denoised = stage_denoise(
            cfg, dictionary, adversarial, clean_subset,
            os.path.join(cfg["out"], f"{kind}-denoised"),
        )
        epsilon = cfg["epsilon"] if kind == "fgsm" else None
        rows.append(
            evaluate_row(
                cfg, model, clean_subset, adversarial, denoised, kind, epsilon,
                wall_time=attack_times[kind] + time.perf_counter() - start,
            )
        )
    if cfg["denoise_clean"]:
        start = time.perf_counter()
        denoised_clean = stage_denoise(
            cfg, dictionary, test_ds, test_ds, os.path.join(cfg["out"], "clean-denoised")
        )
        rows.append(
            evaluate_row(
                cfg, model, test_ds, test_ds, denoised_clean, "none", None,
                wall_time=time.perf_counter() - start,
            )
        )
    metadata = {
        "dataset": cfg["dataset"],
        "seed": cfg["seed"],
        "dictionary_trained_on": dictionary.trained_on,
    }
    write_report(rows, metadata, cfg["out"])
    return 0


COMMANDS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "learn-dict": cmd_learn_dict,
    "denoise": cmd_denoise,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = merge_config(args)
        os.makedirs(cfg["out"], exist_ok=True)
        echo_config(cfg, cfg["out"])
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
