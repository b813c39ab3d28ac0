"""
Cascade Veracity - Command Line Entry Point
Wires dataset generation, ingestion, featurization, training, prediction and
evaluation into reproducible subcommands

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
Every subcommand writes its resolved configuration to <output>.manifest.json.
"""

import json
import logging
import os
import sys
from typing import Any, Dict, Iterable, List, Optional, Sequence

import click
import numpy as np
import pandas as pd
from scipy import sparse

from baseline_features import ATTRIBUTE_NAMES, attribute_matrix, write_attribute_csv
from cascade_model import describe_dataset, load_dataset, save_dataset, scan_dataset
from classifiers import (
    MODEL_KINDS,
    LinearModel,
    TrainSpec,
    align_columns,
    fit,
    load_model,
    model_kind,
    predict,
    save_model,
    top_weighted_features,
)
from errors import CascadeVeracityError, ConfigError, DatasetParseError, InvalidCascadeError
from eval_harness import (
    EXPERIMENT_KEYS,
    ExperimentConfig,
    TruncationSpec,
    confusion,
    f1_from_counts,
    run_experiment,
    sweep_attribute_baselines,
    sweep_min_size,
    sweep_truncation,
    sweep_wl_iterations,
)
from gbt import GBTModel
from logger_config import LoggerSetup
from report_generator import ReportGenerator, format_table
from settings import TOOL_NAME, TOOL_VERSION, canonical_json, config_hash, default_threads, read_key_value_file
from synth_gen import GENERATOR_KEYS, GeneratorConfig, generate
from tagging import TagSource, tag_dataset
from wl_kernel import FeatureSet, Neighborhood, embed_dataset, read_triplets, write_triplets

logger = LoggerSetup.get_logger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
ENV_PREFIX = "CASCADE_"
SWEEP_KINDS = ("min-size", "wl-h", "truncation-time", "truncation-depth", "attributes")


# Configuration resolution


def parse_params(pairs: Iterable[str], allowed: Optional[Sequence[str]] = None) -> Dict[str, str]:
    """``KEY=VALUE`` strings -> {KEY: VALUE}; keys are upper-cased"""
    values = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--param expects KEY=VALUE, got {pair!r}")
        key = key.strip().upper()
        if allowed is not None and key not in allowed:
            raise ConfigError(f"unknown --param key {key!r}")
        values[key] = value.strip()
    return values


def resolve_settings(keys: Sequence[str], config_path: Optional[str], flags: Dict[str, Any]) -> Dict[str, str]:
    """
    Merge settings with precedence defaults < environment < config file < flags

    Parameters:
    -----------
    keys : sequence of str
        Setting names understood by the target config (environment variables
        carry the CASCADE_ prefix)
    config_path : str, optional
        Declarative KEY=value file
    flags : dict
        Command-line values; None means "not given"

    Returns:
    --------
    dict : KEY -> string value
    """
    merged = {key: os.environ[ENV_PREFIX + key] for key in keys if os.environ.get(ENV_PREFIX + key, "").strip()}
    if config_path:
        file_values = read_key_value_file(config_path)
        unknown = sorted(set(file_values) - set(keys))
        if unknown:
            logger.warning(f"{config_path}: ignoring unknown keys {', '.join(unknown)}")
        merged.update({key: value for key, value in file_values.items() if key in keys})
    for key, value in flags.items():
        if value is None:
            continue
        merged[key] = str(value).lower() if isinstance(value, bool) else str(value)
    return merged


def coerce_value(text: str) -> Any:
    """Best-effort typing of a --param value for model hyperparameters"""
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def manifest_path(output: str) -> str:
    return f"{output.rstrip(os.sep)}.manifest.json"


def write_manifest(output: str, command: str, config: Dict[str, Any], inputs: Optional[Dict[str, str]] = None) -> str:
    """Echo the resolved configuration of a run next to its output"""
    payload = {
        "tool": TOOL_NAME,
        "tool_version": TOOL_VERSION,
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "inputs": inputs or {},
        "output": output,
    }
    path = manifest_path(output)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    logger.debug(f"Wrote run manifest {path}")
    return path


def experiment_config(config_path: Optional[str], params: Sequence[str], **flags) -> ExperimentConfig:
    flag_keys = {
        "seed": "SEED",
        "tags": "TAGS",
        "wl_h": "WL_H",
        "neighborhood": "NEIGHBORHOOD",
        "model": "MODEL",
        "min_size": "MIN_SIZE",
        "truncate_hours": "TRUNCATE_HOURS",
        "truncate_depth": "TRUNCATE_DEPTH",
        "trials": "TRIALS",
        "threads": "THREADS",
    }
    values = parse_params(params, EXPERIMENT_KEYS)
    values.update({flag_keys[name]: value for name, value in flags.items() if value is not None})
    settings = resolve_settings(EXPERIMENT_KEYS, config_path, values)
    if "TRUNCATE_HOURS" in settings and "TRUNCATE_DEPTH" in settings:
        raise click.UsageError("--truncate-hours and --truncate-depth are mutually exclusive")
    settings.setdefault("THREADS", str(default_threads()))
    cfg = ExperimentConfig.from_mapping(settings)
    logger.info(f"Resolved experiment config {config_hash(cfg.to_dict())}: {canonical_json(cfg.to_dict())}")
    return cfg


def _summary(title: str, values: Dict[str, Any]):
    click.echo(f"✓ {title}")
    for key, value in values.items():
        shown = f"{value:.4f}" if isinstance(value, float) else value
        click.echo(f"  - {key}: {shown}")


def _split_values(text: Optional[str], cast) -> Optional[List]:
    if text is None:
        return None
    try:
        return [cast(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"invalid --values entry: {e}")


# Shared options

input_option = click.option(
    "--input", "-i", "input_path", required=True, type=click.Path(exists=True, dir_okay=False), help="JSONL cascade dataset"
)
strict_option = click.option("--strict", is_flag=True, help="Reject unknown fields instead of warning")
threads_option = click.option("--threads", type=int, default=None, help="Worker processes (default $CASCADE_THREADS or 1)")
config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="KEY=value config file"
)
param_option = click.option("--param", "params", multiple=True, help="Extra KEY=VALUE setting (repeatable)")


def experiment_options(func):
    options = [
        config_option,
        param_option,
        click.option("--seed", type=int, default=None, help="Master seed"),
        click.option("--tags", type=click.Choice([s.value for s in TagSource]), default=None, help="Node tag source"),
        click.option("--wl-h", type=int, default=None, help="WL iterations"),
        click.option("--neighborhood", type=click.Choice([n.value for n in Neighborhood]), default=None),
        click.option("--model", default=None, help="wl-lin, wl-nonlin, features-lin, features-nonlin, noinfo or attribute:<name>"),
        click.option("--min-size", type=int, default=None, help="Minimum cascade size"),
        click.option("--truncate-hours", type=float, default=None, help="Keep only the first T hours"),
        click.option("--truncate-depth", type=int, default=None, help="Keep only nodes up to depth d"),
        click.option("--trials", type=int, default=None, help="Number of seeded trials"),
        threads_option,
        strict_option,
    ]
    for option in reversed(options):
        func = option(func)
    return func


# Commands


@click.group(help="Predict rumor veracity from the topology of retweet cascades.")
@click.version_option(TOOL_VERSION, prog_name=TOOL_NAME)
@click.option("--verbose", "-v", is_flag=True, help="Log debug messages to the console")
def cli(verbose: bool):
    if verbose:
        LoggerSetup.set_console_level(logging.DEBUG)


@cli.command(help="Generate a labeled synthetic cascade dataset.")
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="JSONL file to write")
@config_option
@param_option
@click.option("--seed", type=int, default=None)
@click.option("--n-cascades", type=int, default=None, help="Cascades per class")
@click.option("--stat-matched", type=click.BOOL, default=None, help="Share topology across classes (true/false)")
@threads_option
def synth(output, config_path, params, seed, n_cascades, stat_matched, threads):
    flags = parse_params(params, GENERATOR_KEYS)
    flags.update({"SEED": seed, "N_CASCADES": n_cascades, "STAT_MATCHED": stat_matched})
    cfg = GeneratorConfig.from_mapping(resolve_settings(GENERATOR_KEYS, config_path, flags))
    logger.info(f"Resolved generator config: {canonical_json(cfg.to_dict())}")
    ds = generate(cfg, n_jobs=threads or default_threads())
    save_dataset(ds, output)
    write_manifest(output, "synth", cfg.to_dict())
    _summary(f"Wrote {ds.N} cascades to {output}", describe_dataset(ds))


@cli.command(help="Load, validate and re-serialize a cascade dataset.")
@input_option
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--min-size", type=int, default=1, show_default=True)
@strict_option
def ingest(input_path, output, min_size, strict):
    ds = load_dataset(input_path, strict=strict).filter_min_size(min_size)
    save_dataset(ds, output)
    config = {"min_size": min_size, "strict": strict}
    write_manifest(output, "ingest", config, {"input": input_path})
    _summary(f"Ingested {ds.N} cascades into {output}", describe_dataset(ds))


@cli.command(help="Check every cascade of a dataset and list the violations.")
@input_option
@strict_option
def validate(input_path, strict):
    problems = scan_dataset(input_path, strict=strict)
    for lineno, rumor_id, violations in problems:
        for violation in violations:
            click.echo(f"line {lineno}: rumor {rumor_id}: {violation}", err=True)
    if problems:
        raise InvalidCascadeError(f"{len(problems)} invalid cascade(s) in {input_path}")
    _summary(f"All cascades in {input_path} are valid", describe_dataset(load_dataset(input_path, strict=strict)))


@cli.command(help="Keep only the early part of every cascade.")
@input_option
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--hours", type=float, default=None, help="Observation window in hours")
@click.option("--depth", type=int, default=None, help="Maximum depth kept")
@strict_option
def truncate(input_path, output, hours, depth, strict):
    if (hours is None) == (depth is None):
        raise click.UsageError("give exactly one of --hours or --depth")
    spec = TruncationSpec("time", hours) if hours is not None else TruncationSpec("depth", depth)
    ds = load_dataset(input_path, strict=strict)
    truncated = spec.apply(ds)
    save_dataset(truncated, output)
    write_manifest(output, "truncate", spec.to_dict(), {"input": input_path})
    retained = truncated.sizes.sum() / max(ds.sizes.sum(), 1)
    _summary(f"Truncated {ds.N} cascades into {output}", {"retained_fraction": float(retained)})


@cli.command(help="Embed cascades as WL subtree counts or baseline attributes.")
@input_option
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="Triplet feature file")
@click.option("--kind", type=click.Choice(["wl", "attributes"]), default="wl", show_default=True)
@click.option("--vocab", type=click.Path(exists=True, dir_okay=False), default=None, help="Feature file whose WL vocabulary is reused")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None, help="Also write the attribute table as CSV")
@experiment_options
def featurize(input_path, output, kind, vocab, csv_path, config_path, params, strict, **flags):
    flags.pop("model", None)
    flags.pop("trials", None)
    cfg = experiment_config(config_path, params, **flags)
    ds = cfg.truncation.apply(load_dataset(input_path, strict=strict).filter_min_size(cfg.min_cascade_size))

    meta_config = {"kind": kind, "min_cascade_size": cfg.min_cascade_size, "truncation": cfg.truncation.to_dict()}
    interner = None
    if kind == "wl":
        meta_config.update({"tags": cfg.tags.to_dict(), "wl": cfg.wl.to_dict()})
        frozen = None
        if vocab:
            reference = read_triplets(vocab)
            if reference.interner is None:
                raise DatasetParseError(f"{vocab}: feature file carries no WL vocabulary")
            for key in ("tags", "wl"):
                if reference.meta.get("config", {}).get(key) != meta_config[key]:
                    raise ConfigError(f"--vocab was built with a different {key} setting")
            frozen = reference.interner.freeze()
        tagged = tag_dataset(ds, cfg.tags, n_jobs=cfg.n_jobs)
        X, index, interner = embed_dataset(tagged.cascades, cfg.wl, interner=frozen, n_jobs=cfg.n_jobs)
        names = index.names
    else:
        X = sparse.csr_matrix(attribute_matrix(ds, n_jobs=cfg.n_jobs))
        names = list(ATTRIBUTE_NAMES)
    if csv_path:
        write_attribute_csv(ds, csv_path)

    meta = {"kind": kind, "config": meta_config, "config_hash": config_hash(meta_config)}
    write_triplets(output, FeatureSet(X, names, ds.labels, ds.rumor_ids, meta, interner))
    write_manifest(output, "featurize", meta_config, {"input": input_path, "vocab": vocab})
    _summary(f"Wrote features to {output}", {"rows": X.shape[0], "columns": X.shape[1], "nonzeros": X.nnz})


@cli.command(help="Train a classifier on a feature file.")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="Model JSON file")
@click.option("--model", "kind", type=click.Choice(MODEL_KINDS), default="linear", show_default=True)
@click.option("--attribute", default=None, help="Feature column used by the threshold model")
@click.option("--class-weights", type=click.Choice(["balanced", "none"]), default="balanced", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@param_option
def train(features_path, output, kind, attribute, class_weights, seed, params):
    features = read_triplets(features_path)
    hyper = {key.lower(): coerce_value(value) for key, value in parse_params(params).items()}
    column = 0
    if kind == "threshold":
        attribute = attribute or features.feature_names[0]
        if attribute not in features.feature_names:
            raise ConfigError(f"feature {attribute!r} not in {features_path}")
        column = features.feature_names.index(attribute)
    spec = TrainSpec(kind, hyper)
    try:
        model = fit(spec, features.X, features.labels, class_weights=class_weights, seed=seed, column=column, attribute=attribute or "value")
    except TypeError as e:
        raise ConfigError(f"invalid hyperparameter for {kind}: {e}")

    config = {"model": kind, "params": hyper, "class_weights": class_weights, "seed": seed, "attribute": attribute}
    meta = {
        "config": config,
        "config_hash": config_hash(config),
        "features_config_hash": features.meta.get("config_hash"),
        "n_features": features.shape[1],
    }
    save_model(model, output, meta)
    write_manifest(output, "train", config, {"features": features_path})
    summary: Dict[str, Any] = {"kind": model_kind(model), "rows": features.shape[0]}
    if isinstance(model, LinearModel):
        for name, weight in top_weighted_features(model, features.feature_names, 5):
            summary[f"weight {name}"] = weight
    _summary(f"Trained model saved to {output}", summary)


@cli.command(name="predict", help="Score a feature file with a trained model.")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--features", "features_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="Prediction CSV")
def predict_cmd(model_path, features_path, output):
    model, meta = load_model(model_path)
    features = read_triplets(features_path)
    trained_on = meta.get("features_config_hash")
    if trained_on and trained_on != features.meta.get("config_hash"):
        logger.warning("feature file was built with a different configuration than the training features")
    X = features.X
    if isinstance(model, (LinearModel, GBTModel)) and X.shape[1] != model.n_features:
        logger.warning(f"aligning {X.shape[1]} feature columns to the model's {model.n_features}")
        X = align_columns(X, model.n_features)
    labels, scores = predict(model, X)

    frame = pd.DataFrame(
        {"rumor_id": features.rumor_ids, "label": features.labels, "prediction": labels, "score": scores}
    )
    frame.to_csv(output, index=False, float_format="%.6f")
    config = {"model_config_hash": meta.get("config_hash"), "features_config_hash": features.meta.get("config_hash")}
    write_manifest(output, "predict", config, {"model": model_path, "features": features_path})
    counts = confusion(labels, features.labels)
    _summary(
        f"Wrote {len(frame)} predictions to {output}",
        {"positives": int(np.sum(labels)), "f1": f1_from_counts(counts["tp"], counts["fp"], counts["fn"])},
    )


@cli.command(help="Run the repeated-trial evaluation protocol and write reports.")
@input_option
@click.option("--output", "-o", required=True, type=click.Path(file_okay=False), help="Report directory")
@experiment_options
def evaluate(input_path, output, config_path, params, strict, **flags):
    cfg = experiment_config(config_path, params, **flags)
    report = run_experiment(load_dataset(input_path, strict=strict), cfg)
    paths = ReportGenerator(output).generate_all(report)
    write_manifest(output, "evaluate", cfg.to_dict(), {"input": input_path})
    click.echo(format_table(report), nl=False)
    _summary(f"Reports written to {output}", {"mean_f1": report.mean_f1, "std_f1": report.std_f1, "json": paths["json"]})


@cli.command(help="Sweep minimum size, WL iterations, truncation or single attributes.")
@input_option
@click.option("--output", "-o", required=True, type=click.Path(file_okay=False), help="Report directory")
@click.option("--kind", type=click.Choice(SWEEP_KINDS), required=True)
@click.option("--values", default=None, help="Comma-separated sweep points (defaults per kind)")
@experiment_options
def sweep(input_path, output, kind, values, config_path, params, strict, **flags):
    cfg = experiment_config(config_path, params, **flags)
    ds = load_dataset(input_path, strict=strict)
    if kind == "min-size":
        thresholds = _split_values(values, int)
        report = sweep_min_size(ds, cfg, thresholds) if thresholds else sweep_min_size(ds, cfg)
    elif kind == "wl-h":
        report = sweep_wl_iterations(ds, cfg, _split_values(values, int))
    elif kind == "truncation-time":
        report = sweep_truncation(ds, cfg, hours=_split_values(values, float))
    elif kind == "truncation-depth":
        report = sweep_truncation(ds, cfg, depths=_split_values(values, int) or [1, 2, 3, 4, 5])
    else:
        names = _split_values(values, str)
        report = sweep_attribute_baselines(ds, cfg, names) if names else sweep_attribute_baselines(ds, cfg)
    ReportGenerator(output).generate_all(report, stem=f"sweep_{kind.replace('-', '_')}")
    write_manifest(output, f"sweep {kind}", report.config, {"input": input_path})
    click.echo(format_table(report), nl=False)
    _summary(f"Sweep reports written to {output}", {"points": len(report.points)})


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code"""
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name=TOOL_NAME, standalone_mode=False)
        return result if isinstance(result, int) else EXIT_OK
    except (click.UsageError, ConfigError) as e:
        message = e.format_message() if isinstance(e, click.ClickException) else str(e)
        logger.debug(f"Usage error: {message}", exc_info=True)
        click.echo(f"Error: {message}", err=True)
        return EXIT_USAGE
    except CascadeVeracityError as e:
        logger.debug(f"Data error: {e}", exc_info=True)
        click.echo(f"Error: {e}", err=True)
        return EXIT_DATA
    except click.ClickException as e:
        click.echo(f"Error: {e.format_message()}", err=True)
        return EXIT_USAGE
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_USAGE
    except OSError as e:
        logger.debug(f"I/O error: {e}", exc_info=True)
        click.echo(f"Error: {e}", err=True)
        return EXIT_USAGE


def run():
    """Console-script entry point"""
    sys.exit(main())


if __name__ == "__main__":
    run()
