"""Command-line front end.

Subcommands: ``sample`` (exemplar selection from a CSV or PBIM directory),
``run`` (one experiment from a JSON config), ``sweep`` (the same experiment
over several memory budgets), ``gen`` (synthetic stream to CSV files),
``stats`` (per-class image statistics), and ``augment`` (class balancing of
a PBIM directory tree).

Exit codes are a stable scripting contract: 0 success, 2 validation error,
3 I/O error, 4 numerical failure. Every command is deterministic given its
config and seed and never mutates its inputs. The JSON config is strictly
validated: unknown keys are rejected by name.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .augmentation import (
    AugmentParams,
    augment_class_records,
    read_pbim,
    read_pbsm,
    write_pbim,
)
from .errors import FileFormatError, NumericalError, ValidationError
from .harness import (
    EXPERIMENT_MODES,
    AugmentSettings,
    ExperimentConfig,
    StreamFiles,
    decision_flags,
    format_sweep_rows,
    run_experiment,
    sweep_budgets,
)
from .metrics import format_metrics_rows
from .model import LossConfig
from .numerics import RngState
from .sampling import SAMPLER_NAMES, sample
from .stream import (
    LabeledDataset,
    SyntheticStreamSpec,
    generate_synthetic_stream,
    read_dataset_csv,
    write_dataset_csv,
    write_stream,
)


def _reject_unknown(section, allowed: set[str], where: str) -> None:
    if not isinstance(section, dict):
        raise ValidationError(f"{where} must be a JSON object")
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ValidationError(
            f"unknown key{'s' if len(unknown) > 1 else ''} "
            f"{', '.join(repr(k) for k in unknown)} in {where}"
        )


def _parse_loss(section: dict) -> LossConfig:
    defaults = {
        "temperature": 2.0,
        "beta": 0.5,
        "learning_rate": 0.05,
        "epochs": 300,
        "batch_size": 0,
        "distill_scope": "all",
        "ce_shared_temperature": False,
    }
    _reject_unknown(section, set(defaults), "'loss'")
    merged = {**defaults, **section}
    return LossConfig(
        temperature=float(merged["temperature"]),
        beta=float(merged["beta"]),
        learning_rate=float(merged["learning_rate"]),
        epochs=int(merged["epochs"]),
        batch_size=int(merged["batch_size"]),
        distill_scope=str(merged["distill_scope"]),
        ce_shared_temperature=bool(merged["ce_shared_temperature"]),
    )


def _parse_augmentation(section: dict) -> AugmentSettings:
    defaults = {
        "enabled": False,
        "region_height": None,
        "region_width": None,
        "mode": "deterministic",
        "tau": 0.25,
    }
    _reject_unknown(section, set(defaults), "'augmentation'")
    merged = {**defaults, **section}
    return AugmentSettings(
        enabled=bool(merged["enabled"]),
        region_height=None
        if merged["region_height"] is None
        else int(merged["region_height"]),
        region_width=None
        if merged["region_width"] is None
        else int(merged["region_width"]),
        mode=str(merged["mode"]),
        tau=float(merged["tau"]),
    )


def _parse_synthetic(section: dict) -> SyntheticStreamSpec:
    defaults = {
        "classes": None,
        "tasks": None,
        "class_size": 24,
        "imbalance_ratio": 1.0,
        "blob_std": 1.0,
        "layout_radius": 6.0,
        "outlier_fraction": 0.0,
        "outlier_distance": 20.0,
        "dims": 8,
        "test_fraction": 0.2,
        "per_class_sizes": None,
    }
    _reject_unknown(section, set(defaults), "'stream.synthetic'")
    for key in ("classes", "tasks"):
        if key not in section:
            raise ValidationError(f"missing required key {key!r} in 'stream.synthetic'")
    merged = {**defaults, **section}
    sizes = merged["per_class_sizes"]
    return SyntheticStreamSpec(
        classes=int(merged["classes"]),
        tasks=int(merged["tasks"]),
        class_size=int(merged["class_size"]),
        imbalance_ratio=float(merged["imbalance_ratio"]),
        blob_std=float(merged["blob_std"]),
        layout_radius=float(merged["layout_radius"]),
        outlier_fraction=float(merged["outlier_fraction"]),
        outlier_distance=float(merged["outlier_distance"]),
        dims=int(merged["dims"]),
        test_fraction=float(merged["test_fraction"]),
        per_class_sizes=None if sizes is None else tuple(int(s) for s in sizes),
    )


def _parse_stream(section: dict, base_dir: Path):
    _reject_unknown(section, {"synthetic", "files"}, "'stream'")
    if ("synthetic" in section) == ("files" in section):
        raise ValidationError("'stream' needs exactly one of 'synthetic' or 'files'")
    if "synthetic" in section:
        return _parse_synthetic(section["synthetic"])
    files = section["files"]
    _reject_unknown(files, {"manifest"}, "'stream.files'")
    if "manifest" not in files:
        raise ValidationError("missing required key 'manifest' in 'stream.files'")
    return StreamFiles(manifest=str(base_dir / files["manifest"]))


def parse_experiment_config(doc: dict, base_dir: Path) -> ExperimentConfig:
    """Strictly validate a run config document; unknown keys are errors."""
    try:
        return _parse_experiment_config(doc, base_dir)
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid config value: {exc}") from exc


def _parse_experiment_config(doc: dict, base_dir: Path) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ValidationError("config root must be a JSON object")
    allowed = {
        "seed",
        "mode",
        "sampler",
        "randp_pool",
        "memory_budget",
        "classifier",
        "loss",
        "augmentation",
        "stream",
    }
    _reject_unknown(doc, allowed, "config root")
    if "seed" not in doc:
        raise ValidationError("missing required key 'seed' (master seed)")
    if "stream" not in doc:
        raise ValidationError("missing required key 'stream'")
    sampler = str(doc.get("sampler", "pbes"))
    if sampler not in SAMPLER_NAMES:
        raise ValidationError(f"unknown sampler {sampler!r}")
    return ExperimentConfig(
        seed=int(doc["seed"]),
        stream=_parse_stream(doc["stream"], base_dir),
        mode=str(doc.get("mode", "method")),
        sampler=sampler,
        randp_pool=None if doc.get("randp_pool") is None else int(doc["randp_pool"]),
        memory_budget=int(doc.get("memory_budget", 0)),
        classifier=str(doc.get("classifier", "argmax")),
        loss=_parse_loss(doc.get("loss", {})),
        augment=_parse_augmentation(doc.get("augmentation", {})),
    )


def _load_json(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON: {exc}") from exc


def _config_digest(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_provenance(out_path: Path, doc: dict, config, wall_ms) -> None:
    sidecar = {
        "config_sha256": _config_digest(doc),
        "seed": config.seed,
        "package_version": __version__,
        "decisions": decision_flags(config),
        "wall_ms_per_task": wall_ms,
    }
    Path(str(out_path) + ".provenance.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _worker_count(n_jobs: int) -> int:
    workers = min(n_jobs, os.cpu_count() or 1)
    cap = os.environ.get("PBES_THREADS")
    if cap is not None:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            raise ValidationError(f"PBES_THREADS must be an integer, got {cap!r}")
    return max(1, workers)


def _load_sample_rows(input_path: Path, label: int | None):
    """Rows to sample from: a dataset CSV (optionally one class) or a PBIM dir."""
    if input_path.is_dir():
        from .augmentation import read_pbim_dir

        images, _names = read_pbim_dir(input_path)
        rows = np.vstack([img.reshape(-1).astype(np.float64) for img in images])
        labels = np.full(rows.shape[0], 0 if label is None else label, dtype=np.int64)
        return rows, labels, np.arange(rows.shape[0])
    dataset = read_dataset_csv(input_path)
    if label is None:
        return dataset.points, dataset.labels, np.arange(len(dataset))
    keep = dataset.labels == label
    if not keep.any():
        raise ValidationError(f"no rows with label {label} in {input_path}")
    return dataset.points[keep], dataset.labels[keep], np.flatnonzero(keep)


def cmd_sample(args) -> int:
    if args.method in ("randp", "random") and args.seed is None:
        raise ValidationError(f"--seed is required for method {args.method!r}")
    rows, labels, original_rows = _load_sample_rows(Path(args.input), args.label)
    if not 1 <= args.m <= rows.shape[0]:
        raise ValidationError(
            f"need 1 <= m <= {rows.shape[0]} available rows, got m={args.m}"
        )
    rng = None if args.seed is None else RngState(args.seed)
    selection = sample(args.method, rows, args.m, rng=rng, pool_size=args.randp_pool)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    chosen = [int(original_rows[i]) for i in selection.ordered_indices]
    (out_dir / "indices.txt").write_text(
        "".join(f"{i}\n" for i in chosen), encoding="utf-8"
    )
    picked = LabeledDataset(
        rows[list(selection.ordered_indices)],
        labels[list(selection.ordered_indices)],
        "train",
    )
    write_dataset_csv(out_dir / "exemplars.csv", picked)
    print(f"selected {len(selection)} of {rows.shape[0]} rows with {args.method}")
    return 0


def _load_run_config(args):
    """Config document plus the parsed config, with flag overrides applied."""
    config_path = Path(args.config)
    doc = _load_json(config_path)
    if getattr(args, "mode", None) is not None:
        doc = {**doc, "mode": args.mode}
    if getattr(args, "seed", None) is not None:
        doc = {**doc, "seed": args.seed}
    return doc, parse_experiment_config(doc, config_path.parent)


def cmd_run(args) -> int:
    doc, config = _load_run_config(args)
    rows = run_experiment(config)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(format_metrics_rows(rows).encode("utf-8"))
    _write_provenance(out_path, doc, config, [row.wall_ms for row in rows])
    print(f"wrote {len(rows)} task rows to {out_path}")
    return 0


def cmd_sweep(args) -> int:
    doc, config = _load_run_config(args)
    try:
        budgets = [int(tok) for tok in args.budgets.split(",") if tok.strip() != ""]
    except ValueError:
        raise ValidationError(f"--budgets must be comma-separated integers, got {args.budgets!r}")
    if not budgets:
        raise ValidationError("--budgets must name at least one budget")
    results = sweep_budgets(config, budgets, max_workers=_worker_count(len(set(budgets))))
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(format_sweep_rows(results).encode("utf-8"))
    wall = {str(budget): [row.wall_ms for row in rows] for budget, rows in results}
    _write_provenance(out_path, doc, config, wall)
    print(f"wrote {len(results)} budget blocks to {out_path}")
    return 0


def cmd_gen(args) -> int:
    doc = _load_json(Path(args.config))
    spec = _parse_synthetic(doc)
    stream = generate_synthetic_stream(spec, args.seed)
    manifest = write_stream(Path(args.out), stream)
    print(f"wrote {len(stream)} tasks under {manifest.parent}")
    return 0


def _class_dirs(root: Path) -> list[tuple[int, Path]]:
    if not root.is_dir():
        raise FileFormatError(f"{root}: not a directory")
    out = []
    for child in sorted(root.iterdir()):
        if not child.is_dir():
            continue
        try:
            cid = int(child.name)
        except ValueError:
            raise ValidationError(
                f"class directory name {child.name!r} is not an integer id"
            )
        out.append((cid, child))
    if not out:
        raise FileFormatError(f"{root}: no class subdirectories found")
    return out


def cmd_stats(args) -> int:
    from .stats import dataset_stats, write_histogram_csv, write_variance_csv

    images: list[np.ndarray] = []
    labels: list[int] = []
    for cid, child in _class_dirs(Path(args.input)):
        for path in sorted(child.glob("*.pbim")):
            images.append(read_pbim(path))
            labels.append(cid)
    if not images:
        raise FileFormatError(f"{args.input}: no .pbim files found")
    stats = dataset_stats(images, labels)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_variance_csv(out_dir / "variance.csv", stats)
    write_histogram_csv(out_dir / "counts.csv", stats)
    print(f"wrote statistics for {len(stats.per_class)} classes to {out_dir}")
    return 0


def cmd_augment(args) -> int:
    class_dirs = _class_dirs(Path(args.input))
    from .augmentation import balance_plan

    per_class: dict[int, list[Path]] = {}
    for cid, child in class_dirs:
        paths = sorted(child.glob("*.pbim"))
        if not paths:
            raise FileFormatError(f"{child}: no .pbim files found")
        per_class[cid] = paths
    plan = balance_plan({cid: len(paths) for cid, paths in per_class.items()})
    params = AugmentParams(
        region_height=args.region_height,
        region_width=args.region_width,
        mode=args.search_mode,
        tau=args.tau,
    )
    out_root = Path(args.out)
    rng = RngState(args.seed)
    for cid, paths in sorted(per_class.items()):
        out_dir = out_root / str(cid)
        out_dir.mkdir(parents=True, exist_ok=True)
        for path in paths:
            shutil.copyfile(path, out_dir / path.name)
        count = plan.counts[cid]
        if count == 0:
            continue
        images = [read_pbim(p) for p in paths]
        saliencies = None
        sidecars = [p.with_suffix(".pbsm") for p in paths]
        if all(s.exists() for s in sidecars):
            saliencies = [read_pbsm(s) for s in sidecars]
        records = augment_class_records(
            images,
            count,
            rng.derive("augment", cid),
            saliencies=saliencies,
            params=params,
        )
        for k, rec in enumerate(records):
            write_pbim(out_dir / f"aug_{k:05d}.pbim", rec.image)
    print(
        f"balanced {len(per_class)} classes to {max(len(p) for p in per_class.values())} "
        f"images each under {out_root}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pbes",
        description="Robust exemplar sampling and a class-incremental learning harness.",
    )
    parser.add_argument("--version", action="version", version=f"pbes {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="select exemplars from a CSV file or PBIM directory")
    p.add_argument("--input", required=True, help="dataset CSV or directory of .pbim files")
    p.add_argument("--method", required=True, choices=SAMPLER_NAMES)
    p.add_argument("--m", required=True, type=int, help="number of exemplars")
    p.add_argument("--seed", type=int, help="master seed (required for randp/random)")
    p.add_argument("--label", type=int, help="restrict to rows of one class id")
    p.add_argument("--randp-pool", type=int, help="random direction pool size for randp")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.add_argument("--mode", choices=EXPERIMENT_MODES, help="override the config's mode")
    p.add_argument("--seed", type=int, help="override the config's master seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the experiment across memory budgets")
    p.add_argument("--config", required=True)
    p.add_argument("--budgets", required=True, help="comma-separated budgets, e.g. 8,16,32")
    p.add_argument("--out", required=True, help="combined metrics CSV path")
    p.add_argument("--mode", choices=EXPERIMENT_MODES, help="override the config's mode")
    p.add_argument("--seed", type=int, help="override the config's master seed")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen", help="generate a synthetic stream as CSV files")
    p.add_argument("--config", required=True, help="JSON synthetic stream spec")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("stats", help="per-class channel variances and counts")
    p.add_argument("--input", required=True, help="directory of <class id>/ *.pbim")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("augment", help="balance class sizes with selective-cut images")
    p.add_argument("--input", required=True, help="directory of <class id>/ *.pbim")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--region-height", type=int, default=None)
    p.add_argument("--region-width", type=int, default=None)
    p.add_argument(
        "--search-mode", choices=("deterministic", "randomized"), default="deterministic"
    )
    p.add_argument("--tau", type=float, default=0.25)
    p.set_defaults(func=cmd_augment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ValidationError.exit_code
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FileFormatError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NumericalError.exit_code


if __name__ == "__main__":
    sys.exit(main())
