# src/main_workflow.py
"""
Command-line entry point.

    flare generate     LHS parameters + synthetic fields + labels -> dataset directory
    flare split        random / greedy / trim split -> split JSON
    flare train        flare | lamp | concat | film | deeponet -> checkpoint + training log CSV
    flare infer        checkpoint + parameters (+ coordinates) -> field CSV
    flare eval         checkpoints + split -> metrics CSV per method/component
    flare sweep        train-size sensitivity over greedy max-min subsets
    flare feasibility  L1 logistic discriminator -> AUC/accuracy report
    flare replay       re-run the argv recorded in a run manifest

Every command except replay writes <output>.manifest.json. Exit codes: 0 on
success, 2 on usage or configuration errors, 1 on data/format/numerical errors.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.config import TrainConfig, derive_seed, settings
from src.data.dataset import PARAMETER_NAMES, PARAMETER_RANGES
from src.data.sampling import FieldFamily, generate_dataset
from src.data.splits import SplitKind, build_split
from src.data.storage import load_dataset, load_json, load_split, save_dataset, save_split
from src.errors import ConfigError, DegenerateQuery, FlareError, FormatError
from src.evaluation.feasibility import (
    DEFAULT_DEGREE,
    fit_feasibility,
    load_feasibility,
    predict_proba,
    save_feasibility,
)
from src.evaluation.metrics import (
    MetricsBundle,
    average_bundles,
    evaluate,
    node_errors,
    spread_bundles,
    undefined_bundle,
)
from src.models import initialize_run_manifest, update_run_manifest, validate_run_manifest
from src.synthesis.reporting import (
    write_field_csv,
    write_metrics_csv,
    write_node_errors,
    write_run_manifest,
    write_sweep_csv,
    write_table,
    write_training_log,
)
from src.tools.affine import normalize_params
from src.tools.geometry import DomainSpec, denormalize_points, sample_unit_points
from src.training.baselines import CONDITIONAL_KINDS, save_conditional, train_conditional
from src.training.flare import ENSEMBLE_KINDS, save_ensemble, train_flare
from src.training.surrogates import (
    ConditionalSurrogate,
    EnsembleSurrogate,
    NearestNeighborSurrogate,
    load_surrogate,
    surrogates_for,
)

logger = logging.getLogger("FLARE Workflow")

TRAIN_METHODS = ENSEMBLE_KINDS + CONDITIONAL_KINDS
SWEEP_SIZES = (10, 20, 40, 60, 80)
# pool size the default sweep sizes refer to (80 of 100 samples)
SWEEP_REFERENCE_POOL = 80


class UsageError(Exception):
    """Bad command-line input that argparse cannot catch on its own."""


def manifest_path(output) -> Path:
    output = Path(output)
    return output.with_name(output.name + ".manifest.json")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _param_vector(text: str) -> np.ndarray:
    values = _float_list(text)
    if len(values) != len(PARAMETER_NAMES):
        raise argparse.ArgumentTypeError(
            f"expected {len(PARAMETER_NAMES)} parameters ({','.join(PARAMETER_NAMES)}), got {len(values)}"
        )
    return np.array(values)


def _add_train_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--scale", choices=("desk", "full"), default="desk")
    group.add_argument("--widths", type=_int_list, help="hidden widths, e.g. 64,64")
    group.add_argument("--octaves", type=int)
    group.add_argument("--lambda", dest="reg_weight", type=float, help="FLARE regulariser weight")
    group.add_argument("--phase1-epochs", type=int)
    group.add_argument("--phase2-epochs", type=int)
    group.add_argument("--baseline-epochs", type=int)
    group.add_argument("--lr", dest="base_lr", type=float)
    group.add_argument("--latent", dest="deeponet_latent", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flare", description="FLARE displacement-field surrogates")
    parser.add_argument("--threads", type=int, help="worker threads (default: FLARE_THREADS or all cores)")
    parser.add_argument("--log-level", default=None, help="logging level (default: FLARE_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--family", choices=[f.value for f in FieldFamily], default=FieldFamily.AFFINE_EXACT.value)
    p.add_argument("--points-per-ring", type=int, default=100)
    p.add_argument("--corners", type=int, default=0)

    p = sub.add_parser("split", help="build a train/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=[k.value for k in SplitKind], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one method on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--method", choices=TRAIN_METHODS, default="flare")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_train_options(p)

    p = sub.add_parser("infer", help="predict a field for new parameters")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--params", type=_param_vector, required=True, help=",".join(PARAMETER_NAMES))
    p.add_argument("--coords", help="CSV with x_u,y_u,z_u columns")
    p.add_argument("--points-per-ring", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--physical", action="store_true", help="also write physical coordinates (mm)")
    p.add_argument("--feasibility", help="feasibility checkpoint to score the query")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="evaluate checkpoints on a split's test set")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--checkpoint", nargs="+", required=True)
    p.add_argument("--nodes", help="directory for per-node error CSVs of the first test sample")
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="train-set size sensitivity")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sizes", type=_int_list, help="train sizes (default: 10,20,40,60,80 scaled)")
    p.add_argument("--methods", default="flare,nearest", help="comma-separated methods")
    p.add_argument("--out", required=True)
    _add_train_options(p)

    p = sub.add_parser("feasibility", help="fit the feasibility discriminator")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--degree", type=int, default=DEFAULT_DEGREE)
    p.add_argument("--model", help="where to save the fitted model")
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="re-run a recorded command")
    p.add_argument("--manifest", required=True)
    return parser


def resolve_threads(args) -> int:
    threads = args.threads if args.threads is not None else settings.THREADS
    if threads < 1:
        raise UsageError(f"--threads must be >= 1, got {threads}")
    return threads


def build_train_config(args, method: str, threads: int) -> TrainConfig:
    overrides = {
        key: getattr(args, key)
        for key in (
            "octaves",
            "reg_weight",
            "phase1_epochs",
            "phase2_epochs",
            "baseline_epochs",
            "base_lr",
            "deeponet_latent",
        )
        if getattr(args, key, None) is not None
    }
    if getattr(args, "widths", None):
        overrides["hidden_widths"] = tuple(args.widths)
    overrides.update(seed=args.seed, threads=threads)
    if method == "lamp":
        if overrides.get("reg_weight", 0.0) != 0.0:
            raise ConfigError("method lamp requires --lambda 0")
        overrides.update(mode="lamp", reg_weight=0.0)
    factory = TrainConfig.full if args.scale == "full" else TrainConfig.desk
    return factory(**overrides)


def _train_method(method: str, samples, cfg: TrainConfig, bounds):
    if method in ENSEMBLE_KINDS:
        return EnsembleSurrogate(train_flare(samples, cfg, bounds))
    return ConditionalSurrogate(train_conditional(method, samples, cfg, bounds))


# Commands

def cmd_generate(args, threads: int) -> dict:
    dataset = generate_dataset(
        args.count, args.seed, args.family, n_per_ring=args.points_per_ring, corners=args.corners
    )
    save_dataset(dataset, args.out)
    return {
        "outputs": [str(args.out)],
        "stage_seeds": {
            stage: derive_seed(args.seed, stage) for stage in ("lhs", "corners")
        },
    }


def cmd_split(args, threads: int) -> dict:
    dataset = load_dataset(args.data)
    split = build_split(dataset, args.kind, args.seed, args.size)
    save_split(split, args.out)
    return {"outputs": [str(args.out)], "config": split.to_dict()}


def cmd_train(args, threads: int) -> dict:
    dataset = load_dataset(args.data)
    split = load_split(args.split)
    samples = dataset.subset(split.train_ids)
    cfg = build_train_config(args, args.method, threads)
    out = Path(args.out)
    log_path = out.with_name(out.name + ".log.csv")

    surrogate = _train_method(args.method, samples, cfg, dataset.bounds)
    if isinstance(surrogate, EnsembleSurrogate):
        save_ensemble(surrogate.ensemble, out)
        write_training_log(surrogate.ensemble.traces, log_path)
        stages = ("base-select", "base-init")
    else:
        save_conditional(surrogate.model, out)
        write_training_log([surrogate.model.trace], log_path)
        stages = (f"baseline:{args.method}",)
    return {
        "outputs": [str(out), str(log_path)],
        "config": cfg.model_dump(mode="json", exclude={"threads"}),
        "stage_seeds": {stage: derive_seed(cfg.seed, stage) for stage in stages},
    }


def _read_coords(path) -> np.ndarray:
    """
    Raises:
        FormatError: if the file is not a CSV of numeric x_u, y_u, z_u columns
    """
    columns = ["x_u", "y_u", "z_u"]
    try:
        frame = pd.read_csv(path)
        missing = [c for c in columns if c not in frame.columns]
        if not missing:
            return frame[columns].to_numpy(dtype=np.float64)
    except FileNotFoundError as e:
        raise FormatError(f"{path}: coordinate file not found") from e
    except ValueError as e:  # pandas parser errors included
        raise FormatError(f"{path}: unreadable coordinate CSV ({e})") from e
    raise FormatError(f"{path}: coordinate CSV is missing columns {missing}")


def cmd_infer(args, threads: int) -> dict:
    surrogate = load_surrogate(args.checkpoint)
    p_d = args.params
    domain = DomainSpec.from_params(p_d)
    if args.coords:
        coords = _read_coords(args.coords)
    else:
        coords = sample_unit_points(args.points_per_ring, derive_seed(args.seed, "infer-points"))
    values = surrogate.predict(p_d, coords)
    physical = denormalize_points(coords, domain) if args.physical else None

    probability = None
    if args.feasibility:
        model = load_feasibility(args.feasibility)
        probability = float(predict_proba(model, normalize_params(p_d, PARAMETER_RANGES)))
        logger.info(f"Feasible probability of the query: {probability:.3f}")
    write_field_csv(args.out, coords, values, physical, probability)
    return {"outputs": [str(args.out)]}


def _score(surrogate, sample) -> tuple[MetricsBundle, Optional[np.ndarray]]:
    """Metrics and prediction for one test sample; all metrics undefined when it cannot be predicted."""
    try:
        prediction = surrogate.predict(sample.params, sample.coords)
    except DegenerateQuery as e:
        logger.warning(f"{surrogate.name}: no prediction for {sample.id}, metrics undefined ({e})")
        return undefined_bundle(), None
    return evaluate(sample.targets, prediction), prediction


def cmd_eval(args, threads: int) -> dict:
    dataset = load_dataset(args.data)
    split = load_split(args.split)
    test = dataset.subset(split.test_ids)
    if not test:
        raise UsageError("split has no test samples")
    outputs = [str(args.out)]

    results = {}
    for surrogate in surrogates_for(args.checkpoint):
        bundles = []
        for sample in test:
            bundle, prediction = _score(surrogate, sample)
            bundles.append(bundle)
            if args.nodes and sample is test[0] and prediction is not None:
                path = Path(args.nodes) / f"{surrogate.name}_{sample.id}.csv"
                write_node_errors(node_errors(sample.coords, sample.targets, prediction), path)
                outputs.append(str(path))
        results[surrogate.name] = average_bundles(bundles)
        logger.info(f"Evaluated {surrogate.name} on {len(test)} test samples")
    write_metrics_csv(results, args.out, split=split.kind.value)
    return {"outputs": outputs}


def sweep_sizes(requested: Optional[list[int]], pool: int) -> list[int]:
    """Requested sizes, or the default grid scaled to the train pool; clipped to [2, pool]."""
    if requested:
        sizes = requested
    else:
        sizes = [round(s * pool / SWEEP_REFERENCE_POOL) for s in SWEEP_SIZES]
    return sorted({min(max(int(s), 2), pool) for s in sizes})


def cmd_sweep(args, threads: int) -> dict:
    dataset = load_dataset(args.data)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in TRAIN_METHODS + ("nearest",)]
    if unknown or not methods:
        raise UsageError(f"unknown sweep methods {unknown}")
    trainable = [m for m in methods if m != "nearest"]
    if "nearest" in methods and not any(m in ENSEMBLE_KINDS for m in trainable):
        # nearest neighbour looks up networks of an ensemble
        trainable.append("lamp")

    full = build_split(dataset, SplitKind.GREEDY_MAX_MIN, args.seed)
    sizes = sweep_sizes(args.sizes, len(full.train_ids))
    test = dataset.subset(full.test_ids)

    means, spreads = {}, {}
    for size in sizes:
        split = build_split(dataset, SplitKind.GREEDY_MAX_MIN, args.seed, size)
        samples = dataset.subset(split.train_ids)
        surrogates = {}
        for method in trainable:
            cfg = build_train_config(args, method, threads)
            surrogates[method] = _train_method(method, samples, cfg, dataset.bounds)
        if "nearest" in methods:
            donor = surrogates.get("lamp") or surrogates.get("flare")
            surrogates["nearest"] = NearestNeighborSurrogate(donor.ensemble)

        means[size], spreads[size] = {}, {}
        for method in methods:
            bundles = [_score(surrogates[method], s)[0] for s in test]
            means[size][method] = average_bundles(bundles)
            spreads[size][method] = spread_bundles(bundles)
        logger.info(f"Sweep size {size}: {', '.join(methods)} evaluated on {len(test)} test samples")

    write_sweep_csv(means, spreads, args.out)
    return {"outputs": [str(args.out)], "config": {"sizes": sizes, "methods": methods}}


def cmd_feasibility(args, threads: int) -> dict:
    dataset = load_dataset(args.data)
    report = fit_feasibility(dataset, args.seed, args.degree)
    write_table([report.to_dict()], args.out)
    outputs = [str(args.out)]
    if args.model:
        save_feasibility(report.model, args.model)
        outputs.append(str(args.model))
    return {
        "outputs": outputs,
        "config": {"cv_log_loss": {str(k): v for k, v in report.cv_scores.items()}},
        "stage_seeds": {s: derive_seed(args.seed, s) for s in ("feas-split", "feas-cv")},
    }


COMMANDS = {
    "generate": cmd_generate,
    "split": cmd_split,
    "train": cmd_train,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "feasibility": cmd_feasibility,
}


def configure_logging(level: Optional[str]) -> None:
    logging.basicConfig(level=(level or settings.LOG_LEVEL).upper(), format=settings.LOG_FORMAT)


def _replay(manifest_file) -> list[str]:
    manifest = load_json(manifest_file)
    is_valid, errors = validate_run_manifest(manifest)
    if not is_valid:
        raise UsageError(f"{manifest_file}: invalid run manifest: {'; '.join(errors)}")
    logger.info(f"Replaying '{manifest['command']}' from {manifest_file}")
    return manifest["argv"]


def run(argv: Optional[list[str]] = None) -> int:
    """Parse argv, execute one command and return the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    configure_logging(args.log_level)

    try:
        if args.command == "replay":
            return run(_replay(args.manifest))

        threads = resolve_threads(args)
        manifest = initialize_run_manifest(args.command, argv, getattr(args, "seed", 0))
        recorded = COMMANDS[args.command](args, threads)
        manifest = update_run_manifest(manifest, **recorded)
        write_run_manifest(manifest, manifest_path(args.out))
    except (UsageError, ConfigError, ValidationError) as e:
        print(f"flare {args.command}: usage error: {e}", file=sys.stderr)
        return 2
    except (FlareError, OSError) as e:
        print(f"flare {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1

    logger.info(f"Command '{args.command}' complete.")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
