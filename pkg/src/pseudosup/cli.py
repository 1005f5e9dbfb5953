"""Experiment front-end: `run`, `ablate`, `compare`, `gen-data`, `analyze-corr`.

Configs are INI-style `key = value` files with [experiment], [dataset] and
[engine] sections; explicit CLI flags override file values. Exit codes:
0 success, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import os
import sys
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .data import (
    DatasetSplits,
    generate_multimodal_gaussians,
    generate_overlapping_gaussians,
    load_dataset,
    save_dataset,
    serialize_splits,
    split_dataset,
)
from .engine import (
    EngineConfig,
    TrainResult,
    train,
    train_self_training,
    train_supervised_only,
)
from .metrics import MetricsReport, correlation_density
from .nn_core import save_model

METHODS = ("pseudo_sup", "pseudo_sup_aug", "supervised", "self_training")


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSpec:
    path: str | None = None
    n_per_class: int = 500
    dim: int = 20
    class_separation: float = 1.0
    label_fraction: float = 0.5
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2)
    grid: tuple[int, int] | None = None
    multimodal: bool = False
    vf_target_len: int = 52


@dataclass
class ExperimentConfig:
    method: str = "pseudo_sup"
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    output_dir: str = "out"
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    engine: EngineConfig = field(default_factory=EngineConfig)
    confidence_threshold: float | None = None

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.method == "self_training" and self.confidence_threshold is None:
            raise ConfigError("method self_training requires confidence_threshold")
        if self.dataset.multimodal and self.dataset.grid is None:
            raise ConfigError("multimodal mode requires dataset grid dims")


# ---------------------------------------------------------------------------
# config file I/O

def config_to_ini(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser()
    cp["experiment"] = {
        "method": cfg.method,
        "seeds": " ".join(str(s) for s in cfg.seeds),
        "output_dir": cfg.output_dir,
    }
    if cfg.confidence_threshold is not None:
        cp["experiment"]["confidence_threshold"] = repr(cfg.confidence_threshold)
    ds = cfg.dataset
    cp["dataset"] = {}
    if ds.path is not None:
        cp["dataset"]["path"] = ds.path
    cp["dataset"].update(
        {
            "n_per_class": str(ds.n_per_class),
            "dim": str(ds.dim),
            "class_separation": repr(ds.class_separation),
            "label_fraction": repr(ds.label_fraction),
            "fractions": " ".join(repr(f) for f in ds.fractions),
            "multimodal": str(ds.multimodal).lower(),
            "vf_target_len": str(ds.vf_target_len),
        }
    )
    if ds.grid is not None:
        cp["dataset"]["grid"] = f"{ds.grid[0]} {ds.grid[1]}"
    eng = cfg.engine
    cp["engine"] = {
        "hidden_dims": " ".join(str(d) for d in eng.hidden_dims),
        "n_classes": str(eng.n_classes),
        "beta": str(eng.beta),
        "gamma": repr(eng.gamma),
        "policy_lr": repr(eng.policy_lr),
        "classifier_lr": repr(eng.classifier_lr),
        "weight_decay": repr(eng.weight_decay),
        "epochs": str(eng.epochs),
        "batch_labeled": str(eng.batch_labeled),
        "batch_unlabeled": str(eng.batch_unlabeled),
        "batch_val": str(eng.batch_val),
        "warmup_steps": str(eng.warmup_steps),
        "pseudo_loss_weight": repr(eng.pseudo_loss_weight),
        "crop_scale_min": repr(eng.crop_scale_min),
        "policy_warm_start": str(eng.policy_warm_start).lower(),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _parse_bool(raw: str, key: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def config_from_ini(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = ExperimentConfig()
    try:
        if cp.has_section("experiment"):
            sec = cp["experiment"]
            cfg.method = sec.get("method", cfg.method)
            if "seeds" in sec:
                cfg.seeds = tuple(int(s) for s in sec["seeds"].split())
            cfg.output_dir = sec.get("output_dir", cfg.output_dir)
            if "confidence_threshold" in sec:
                cfg.confidence_threshold = float(sec["confidence_threshold"])
        if cp.has_section("dataset"):
            sec = cp["dataset"]
            ds = cfg.dataset
            ds.path = sec.get("path", ds.path)
            ds.n_per_class = sec.getint("n_per_class", ds.n_per_class)
            ds.dim = sec.getint("dim", ds.dim)
            ds.class_separation = sec.getfloat("class_separation", ds.class_separation)
            ds.label_fraction = sec.getfloat("label_fraction", ds.label_fraction)
            if "fractions" in sec:
                parts = tuple(float(f) for f in sec["fractions"].split())
                if len(parts) != 3:
                    raise ConfigError("fractions: expected 3 values")
                ds.fractions = parts
            if "grid" in sec:
                h, w = (int(v) for v in sec["grid"].split())
                ds.grid = (h, w)
            if "multimodal" in sec:
                ds.multimodal = _parse_bool(sec["multimodal"], "multimodal")
            ds.vf_target_len = sec.getint("vf_target_len", ds.vf_target_len)
        if cp.has_section("engine"):
            sec = cp["engine"]
            eng = {}
            if "hidden_dims" in sec:
                eng["hidden_dims"] = tuple(int(d) for d in sec["hidden_dims"].split())
            for key in ("n_classes", "beta", "epochs", "batch_labeled",
                        "batch_unlabeled", "batch_val", "warmup_steps"):
                if key in sec:
                    eng[key] = sec.getint(key)
            for key in ("gamma", "policy_lr", "classifier_lr", "weight_decay",
                        "pseudo_loss_weight", "crop_scale_min"):
                if key in sec:
                    eng[key] = sec.getfloat(key)
            if "policy_warm_start" in sec:
                eng["policy_warm_start"] = _parse_bool(
                    sec["policy_warm_start"], "policy_warm_start")
            cfg.engine = replace(cfg.engine, **eng)
    except (ValueError, configparser.Error) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg


# ---------------------------------------------------------------------------
# experiment execution

def build_splits(spec: DatasetSpec, seed: int) -> DatasetSplits:
    if spec.path is not None:
        return load_dataset(spec.path)
    if spec.multimodal:
        samples = generate_multimodal_gaussians(
            spec.n_per_class, spec.grid, spec.class_separation, seed,
            spec.vf_target_len,
        )
    else:
        samples = generate_overlapping_gaussians(
            spec.n_per_class, spec.dim, spec.class_separation, seed, spec.grid
        )
    return split_dataset(samples, spec.label_fraction, spec.fractions, seed)


def _run_method(method: str, splits: DatasetSplits, engine: EngineConfig,
                confidence_threshold: float | None) -> TrainResult:
    if method == "supervised":
        return train_supervised_only(splits, engine)
    if method == "pseudo_sup":
        return train(splits, engine)
    if method == "pseudo_sup_aug":
        return train(splits, replace(engine, augment=True))
    if method == "self_training":
        return train_self_training(splits, engine, confidence_threshold)
    raise ConfigError(f"unknown method {method!r}")


def _write_cell(out_dir: str, seed: int, result: TrainResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    result.history.save(os.path.join(out_dir, "history.csv"))
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write("seed," + MetricsReport.CSV_HEADER + "\n")
        fh.write(f"{seed},{result.final_metrics.to_csv_row()}\n")
    save_model(result.classifier, os.path.join(out_dir, "classifier.ckpt"))
    if result.policy is not None:
        save_model(result.policy, os.path.join(out_dir, "policy.ckpt"))


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


SUMMARY_HEADER = (
    "method,n_seeds,accuracy_mean,accuracy_std,f1_mean,f1_std,auc_mean,auc_std"
)


def _summary_row(method: str, reports: list[MetricsReport]) -> str:
    acc = _mean_std([r.accuracy for r in reports])
    f1 = _mean_std([r.f1 for r in reports])
    auc = _mean_std([r.auc for r in reports])
    return (
        f"{method},{len(reports)},{acc[0]:.17g},{acc[1]:.17g},"
        f"{f1[0]:.17g},{f1[1]:.17g},{auc[0]:.17g},{auc[1]:.17g}"
    )


def run_experiment(cfg: ExperimentConfig) -> list[MetricsReport]:
    """One method over all seeds; per-seed cells plus a root summary.csv."""
    cfg.validate()
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "config.ini"), "w") as fh:
        fh.write(config_to_ini(cfg))
    reports = []
    for seed in cfg.seeds:
        splits = build_splits(cfg.dataset, seed)
        engine = replace(cfg.engine, seed=seed)
        result = _run_method(cfg.method, splits, engine, cfg.confidence_threshold)
        _write_cell(os.path.join(cfg.output_dir, cfg.method, str(seed)), seed, result)
        reports.append(result.final_metrics)
    with open(os.path.join(cfg.output_dir, "summary.csv"), "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        fh.write(_summary_row(cfg.method, reports) + "\n")
    return reports


def compare_methods(cfg: ExperimentConfig, methods: list[str]) -> str:
    """Run several methods on byte-identical per-seed splits; emits
    comparison.csv with one mean/std row per method plus the shared split hash."""
    if len(methods) < 2:
        raise ConfigError("compare requires at least 2 methods")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}")
        if m == "self_training" and cfg.confidence_threshold is None:
            raise ConfigError("method self_training requires confidence_threshold")
    if not cfg.seeds:
        raise ConfigError("at least one seed is required")
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "config.ini"), "w") as fh:
        fh.write(config_to_ini(cfg))
    per_method: dict[str, list[MetricsReport]] = {m: [] for m in methods}
    hashes: dict[str, list[str]] = {m: [] for m in methods}
    for seed in cfg.seeds:
        splits = build_splits(cfg.dataset, seed)
        split_hash = hashlib.sha256(serialize_splits(splits).encode()).hexdigest()
        engine = replace(cfg.engine, seed=seed)
        for method in methods:
            result = _run_method(method, splits, engine, cfg.confidence_threshold)
            _write_cell(os.path.join(cfg.output_dir, method, str(seed)), seed, result)
            per_method[method].append(result.final_metrics)
            hashes[method].append(split_hash)
    path = os.path.join(cfg.output_dir, "comparison.csv")
    with open(path, "w") as fh:
        fh.write(SUMMARY_HEADER + ",split_hash\n")
        for method in methods:
            combined = hashlib.sha256("".join(hashes[method]).encode()).hexdigest()
            fh.write(_summary_row(method, per_method[method]) + f",{combined}\n")
    return path


def run_ablation(cfg: ExperimentConfig, beta_grid: list[int],
                 gamma_grid: list[float]) -> str:
    """Grid over (beta, gamma, seed) for the pseudo supervisor; emits
    ablation.csv (one row per cell) and ablation_pivot.csv (mean AUC table)."""
    if not beta_grid or not gamma_grid:
        raise ConfigError("ablation grids must be non-empty")
    if any(b < 1 for b in beta_grid):
        raise ConfigError("beta values must be >= 1")
    if any(not 0.0 <= g <= 1.0 for g in gamma_grid):
        raise ConfigError("gamma values must be in [0, 1]")
    if not cfg.seeds:
        raise ConfigError("at least one seed is required")
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "config.ini"), "w") as fh:
        fh.write(config_to_ini(cfg))
    rows = []
    mean_auc: dict[tuple[int, float], float] = {}
    for beta in beta_grid:
        for gamma in gamma_grid:
            aucs = []
            for seed in cfg.seeds:
                splits = build_splits(cfg.dataset, seed)
                engine = replace(cfg.engine, beta=beta, gamma=gamma, seed=seed)
                result = train(splits, engine)
                rows.append((beta, gamma, seed, result.final_metrics.auc))
                aucs.append(result.final_metrics.auc)
            mean_auc[(beta, gamma)] = float(np.mean(aucs))
    path = os.path.join(cfg.output_dir, "ablation.csv")
    with open(path, "w") as fh:
        fh.write("beta,gamma,seed,auc\n")
        for beta, gamma, seed, auc in rows:
            fh.write(f"{beta},{gamma:.17g},{seed},{auc:.17g}\n")
    with open(os.path.join(cfg.output_dir, "ablation_pivot.csv"), "w") as fh:
        fh.write("beta," + ",".join(f"gamma={g:.17g}" for g in gamma_grid) + "\n")
        for beta in beta_grid:
            cells = ",".join(f"{mean_auc[(beta, g)]:.17g}" for g in gamma_grid)
            fh.write(f"{beta},{cells}\n")
    return path


# ---------------------------------------------------------------------------
# argument parsing

def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file; flags override its values")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--output-dir")
    p.add_argument("--confidence-threshold", type=float)
    # dataset
    p.add_argument("--dataset", help="dataset file path (overrides inline synthesis)")
    p.add_argument("--n-per-class", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--class-separation", type=float)
    p.add_argument("--label-fraction", type=float)
    p.add_argument("--fractions", type=float, nargs=3)
    p.add_argument("--grid", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--multimodal", action="store_true", default=None)
    p.add_argument("--vf-target-len", type=int)
    # engine
    p.add_argument("--hidden-dims", type=int, nargs="+")
    p.add_argument("--beta", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--policy-lr", type=float)
    p.add_argument("--classifier-lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-labeled", type=int)
    p.add_argument("--batch-unlabeled", type=int)
    p.add_argument("--batch-val", type=int)
    p.add_argument("--warmup-steps", type=int)
    p.add_argument("--pseudo-loss-weight", type=float)


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = config_from_ini(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    else:
        cfg = ExperimentConfig()
    if args.method:
        cfg.method = args.method
    if args.seeds:
        cfg.seeds = tuple(args.seeds)
    if args.output_dir:
        cfg.output_dir = args.output_dir
    if args.confidence_threshold is not None:
        cfg.confidence_threshold = args.confidence_threshold
    ds = cfg.dataset
    if args.dataset:
        ds.path = args.dataset
    for flag, attr in (
        ("n_per_class", "n_per_class"),
        ("dim", "dim"),
        ("class_separation", "class_separation"),
        ("label_fraction", "label_fraction"),
        ("vf_target_len", "vf_target_len"),
    ):
        val = getattr(args, flag)
        if val is not None:
            setattr(ds, attr, val)
    if args.fractions:
        ds.fractions = tuple(args.fractions)
    if args.grid:
        ds.grid = tuple(args.grid)
    if args.multimodal is not None:
        ds.multimodal = args.multimodal
    eng = {}
    for flag in ("beta", "gamma", "policy_lr", "classifier_lr", "weight_decay",
                 "epochs", "batch_labeled", "batch_unlabeled", "batch_val",
                 "warmup_steps", "pseudo_loss_weight"):
        val = getattr(args, flag)
        if val is not None:
            eng[flag] = val
    if args.hidden_dims:
        eng["hidden_dims"] = tuple(args.hidden_dims)
    try:
        cfg.engine = replace(cfg.engine, **eng)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudosup",
        description="Pseudo-supervisor semi-supervised learning experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one method over the seed list")
    _add_common_flags(p_run)

    p_abl = sub.add_parser("ablate", help="beta/gamma grid ablation")
    _add_common_flags(p_abl)
    p_abl.add_argument("--beta-grid", type=int, nargs="+", default=[10, 50, 100])
    p_abl.add_argument("--gamma-grid", type=float, nargs="+",
                       default=[0.0, 0.5, 0.9, 1.0])

    p_cmp = sub.add_parser("compare", help="compare methods on shared splits")
    _add_common_flags(p_cmp)
    p_cmp.add_argument("--methods", nargs="+", default=["supervised", "pseudo_sup"])

    p_gen = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=1)
    p_gen.add_argument("--n-per-class", type=int, default=500)
    p_gen.add_argument("--dim", type=int, default=20)
    p_gen.add_argument("--class-separation", type=float, default=1.0)
    p_gen.add_argument("--label-fraction", type=float, default=0.5)
    p_gen.add_argument("--fractions", type=float, nargs=3, default=[0.7, 0.1, 0.2])
    p_gen.add_argument("--grid", type=int, nargs=2, metavar=("H", "W"))
    p_gen.add_argument("--multimodal", action="store_true")
    p_gen.add_argument("--vf-target-len", type=int, default=52)

    p_corr = sub.add_parser("analyze-corr",
                            help="within/between-group correlation densities")
    p_corr.add_argument("--dataset", required=True)
    p_corr.add_argument("--bins", type=int, default=50)
    p_corr.add_argument("--out-dir", required=True)
    return parser


def _cmd_gen_data(args: argparse.Namespace) -> None:
    spec = DatasetSpec(
        n_per_class=args.n_per_class,
        dim=args.dim,
        class_separation=args.class_separation,
        label_fraction=args.label_fraction,
        fractions=tuple(args.fractions),
        grid=tuple(args.grid) if args.grid else None,
        multimodal=args.multimodal,
        vf_target_len=args.vf_target_len,
    )
    if spec.multimodal and spec.grid is None:
        raise ConfigError("multimodal mode requires --grid")
    splits = build_splits(spec, args.seed)
    save_dataset(splits, args.out)
    print(f"wrote {args.out}")


def _cmd_analyze_corr(args: argparse.Namespace) -> None:
    splits = load_dataset(args.dataset)
    labeled = splits.labeled_train + splits.validation + splits.test
    density = correlation_density(labeled, bins=args.bins)
    os.makedirs(args.out_dir, exist_ok=True)
    centers = density.bin_centers()
    for group in ("within", "between"):
        path = os.path.join(args.out_dir, f"corr_{group}.csv")
        with open(path, "w") as fh:
            fh.write("bin_center,density\n")
            for c, d in zip(centers, density.density(group)):
                fh.write(f"{c:.17g},{d:.17g}\n")
        print(f"wrote {path}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-data":
            _cmd_gen_data(args)
        elif args.command == "analyze-corr":
            _cmd_analyze_corr(args)
        elif args.command == "run":
            cfg = _config_from_args(args)
            run_experiment(cfg)
            print(f"wrote {os.path.join(cfg.output_dir, 'summary.csv')}")
        elif args.command == "ablate":
            cfg = _config_from_args(args)
            path = run_ablation(cfg, args.beta_grid, args.gamma_grid)
            print(f"wrote {path}")
        elif args.command == "compare":
            cfg = _config_from_args(args)
            path = compare_methods(cfg, args.methods)
            print(f"wrote {path}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
