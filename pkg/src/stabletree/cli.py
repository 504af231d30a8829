"""Command-line front door: simulate | fit-oracle | distill | evaluate |
stability | export.

Every command that writes an artifact also writes ``<out>.manifest.json``
recording resolved configuration, input/output digests, seed, version, and
phase timings; re-running with the same inputs and seed reproduces the outputs
byte-for-byte. Exit codes: 0 success, 2 usage/config, 3 data, 4 oracle I/O,
5 internal error. Set STABLETREE_LOG=debug for verbose progress.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import click

from . import __version__
from .builder import BuildConfig, build_tree
from .core import tree_from_json, tree_to_dot, tree_to_json
from .dataio import load_dataset, load_schema, save_dataset, save_schema
from .errors import (
    DataError,
    OracleIOError,
    SchemaError,
    StableTreeError,
)
from .evaluation import (
    mimic_accuracy,
    predictive_accuracy,
    stability_experiment,
)
from .oracle import (
    ExternalProcessOracle,
    ForestConfig,
    fit_forest,
    load_forest,
    save_forest,
)
from .synth import sample_synthetic

log = logging.getLogger("stabletree")


def _setup_logging() -> None:
    level = os.environ.get("STABLETREE_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class PhaseTimer:
    def __init__(self) -> None:
        self.timings: dict[str, float] = {}

    def __call__(self, phase: str):
        timer = self

        class _Ctx:
            def __enter__(self_inner):
                self_inner.start = time.perf_counter()
                return self_inner

            def __exit__(self_inner, *exc):
                timer.timings[phase] = round(time.perf_counter() - self_inner.start, 6)

        return _Ctx()


def write_manifest(
    command: str,
    arguments: dict,
    inputs: list[str | Path],
    outputs: list[str | Path],
    seed: int | None,
    timings: dict[str, float],
    manifest_path: str | Path,
) -> dict:
    core = {
        "command": command,
        "arguments": arguments,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "seed": seed,
        "version": __version__,
    }
    digest = hashlib.sha256(
        json.dumps(core, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    manifest = dict(core, digest=digest, timings=timings)
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return manifest


def _load_oracle(oracle_path, external, schema, timeout=120.0):
    if (oracle_path is None) == (external is None):
        raise click.UsageError("provide exactly one of --oracle and --external-oracle")
    if oracle_path is not None:
        forest = load_forest(oracle_path)
        if schema is not None and forest.schema.digest() != schema.digest():
            raise SchemaError("forest artifact was fit on a different schema")
        return forest
    return ExternalProcessOracle(external, class_count=schema.class_count,
                                 timeout=timeout)


@click.group()
def cli() -> None:
    """Distill a black-box classifier into a stable decision tree."""
    _setup_logging()


@cli.command()
@click.option("--n", type=int, required=True, help="Number of rows to draw.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--schema-out", "schema_out", type=click.Path(dir_okay=False),
              help="Also write the generator's schema JSON here.")
def simulate(n: int, seed: int, out_path: str, schema_out: str | None) -> None:
    """Draw labeled rows from the built-in synthetic distribution."""
    timer = PhaseTimer()
    with timer("simulate"):
        data = sample_synthetic(n, seed)
        save_dataset(data, out_path)
    outputs = [out_path]
    if schema_out:
        save_schema(data.schema, schema_out)
        outputs.append(schema_out)
    write_manifest("simulate", {"n": n, "seed": seed}, [], outputs, seed,
                   timer.timings, str(out_path) + ".manifest.json")
    click.echo(f"wrote {data.n_rows} rows to {out_path}")


@cli.command("fit-oracle")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--trees", type=int, default=100, show_default=True)
@click.option("--max-depth", type=int, default=None)
@click.option("--min-leaf", type=int, default=1, show_default=True)
@click.option("--mtry", type=int, default=None,
              help="Features considered per split; default ceil(sqrt(m)).")
@click.option("--bootstrap/--no-bootstrap", default=True, show_default=True)
@click.option("--allow-constant", is_flag=True, default=False)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def cmd_fit_oracle(data_path, schema_path, trees, max_depth, min_leaf, mtry,
                   bootstrap, allow_constant, seed, out_path) -> None:
    """Fit the built-in bagged CART forest on labeled data."""
    timer = PhaseTimer()
    with timer("load"):
        schema = load_schema(schema_path)
        data = load_dataset(schema, data_path, require_labels=True)
    config = ForestConfig(
        tree_count=trees,
        max_depth=max_depth,
        min_leaf=min_leaf,
        features_per_split=mtry,
        bootstrap=bootstrap,
        allow_constant=allow_constant,
        seed=seed,
    )
    with timer("fit"):
        forest = fit_forest(data, config)
    with timer("save"):
        save_forest(forest, out_path)
    args = {
        "trees": trees, "max_depth": max_depth, "min_leaf": min_leaf,
        "mtry": mtry, "bootstrap": bootstrap, "allow_constant": allow_constant,
        "seed": seed,
    }
    write_manifest("fit-oracle", args, [data_path, schema_path], [out_path],
                   seed, timer.timings, str(out_path) + ".manifest.json")
    click.echo(f"fit {trees} trees on {data.n_rows} rows -> {out_path}")


def _build_config_options(fn):
    options = [
        click.option("--alpha", type=float, default=0.1, show_default=True,
                     help="Split-test significance; 1.0 disables testing (CART mode)."),
        click.option("--n-initial", type=int, default=1000, show_default=True),
        click.option("--nps", "n_ps_max", type=int, default=100_000, show_default=True,
                     help="Per-node pseudo-sample cutoff."),
        click.option("--growth-cap", type=float, default=4.0, show_default=True),
        click.option("--max-rounds", type=int, default=20, show_default=True),
        click.option("--max-depth", type=int, default=5, show_default=True),
        click.option("--min-node-anchors", type=int, default=5, show_default=True),
        click.option("--purity-epsilon", type=float, default=1e-3, show_default=True),
        click.option("--prune-q", type=float, default=0.5, show_default=True),
        click.option("--bandwidth-factor", type=float, default=1.0, show_default=True),
        click.option("--ordinal-jump-prob", type=float, default=0.1, show_default=True),
        click.option("--hard-labels", is_flag=True, default=False),
        click.option("--leaf-hard-vote", is_flag=True, default=False),
        click.option("--seed", type=int, default=0, show_default=True),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _make_build_config(**kw) -> BuildConfig:
    try:
        return BuildConfig(**kw)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc


@cli.command()
@click.option("--oracle", "oracle_path", type=click.Path(exists=True))
@click.option("--external-oracle", "external", type=str,
              help="Command for a line-protocol oracle subprocess.")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--threads", type=int, default=1, show_default=True,
              help="Worker cap; never changes results.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@_build_config_options
def distill(oracle_path, external, data_path, schema_path, threads, out_path, **cfg_kw):
    """Build the stabilized approximation tree for an oracle."""
    timer = PhaseTimer()
    with timer("load"):
        schema = load_schema(schema_path)
        data = load_dataset(schema, data_path)
        oracle = _load_oracle(oracle_path, external, schema)
    cfg = _make_build_config(**cfg_kw)
    with timer("distill"):
        tree = build_tree(data, oracle, cfg)
    with timer("save"):
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(tree_to_json(tree))
            fh.write("\n")
    if isinstance(oracle, ExternalProcessOracle):
        oracle.close()
    args = dict(cfg_kw, threads=threads, oracle=oracle_path, external=external)
    inputs = [p for p in (oracle_path, data_path, schema_path) if p]
    write_manifest("distill", args, inputs, [out_path], cfg.seed,
                   timer.timings, str(out_path) + ".manifest.json")
    click.echo(
        f"distilled tree: depth {tree.depth()}, {tree.internal_count()} internal "
        f"nodes, {tree.leaf_count()} leaves -> {out_path}"
    )


@cli.command()
@click.option("--tree", "tree_path", required=True, type=click.Path(exists=True))
@click.option("--oracle", "oracle_path", type=click.Path(exists=True))
@click.option("--external-oracle", "external", type=str)
@click.option("--data", "data_path", required=True, type=click.Path(exists=True),
              help="Test rows; labels optional (enable predictive accuracy).")
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def evaluate(tree_path, oracle_path, external, data_path, schema_path, out_path):
    """Measure mimicking (and optionally predictive) accuracy of a tree."""
    timer = PhaseTimer()
    with timer("load"):
        schema = load_schema(schema_path)
        data = load_dataset(schema, data_path)
        with open(tree_path, "r", encoding="utf-8") as fh:
            tree = tree_from_json(fh.read())
        oracle = _load_oracle(oracle_path, external, schema)
    with timer("evaluate"):
        report = mimic_accuracy(tree, oracle, data.rows)
        payload = {"mimic": report.to_dict()}
        if data.labels is not None:
            payload["predictive_accuracy"] = {
                "tree": predictive_accuracy(tree, data),
                "oracle": predictive_accuracy(oracle, data),
            }
    if isinstance(oracle, ExternalProcessOracle):
        oracle.close()
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    inputs = [p for p in (tree_path, oracle_path, data_path, schema_path) if p]
    write_manifest("evaluate", {"tree": tree_path, "data": data_path}, inputs,
                   [out_path], None, timer.timings, str(out_path) + ".manifest.json")
    click.echo(_format_report_table(payload))


def _format_report_table(payload: dict) -> str:
    lines = ["metric                value", "-" * 34]
    mimic = payload["mimic"]
    lines.append(f"class_agreement       {mimic['class_agreement']:.4f}")
    lines.append(f"l1_prob_diff          {mimic['l1_prob_diff']:.4f}")
    lines.append(f"n_test                {mimic['n_test']}")
    for name, value in payload.get("predictive_accuracy", {}).items():
        lines.append(f"accuracy[{name:<6}]      {value:.4f}")
    return "\n".join(lines)


@cli.command()
@click.option("--oracle", "oracle_path", type=click.Path(exists=True))
@click.option("--external-oracle", "external", type=str)
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--schema", "schema_path", required=True, type=click.Path(exists=True))
@click.option("--replicates", type=int, required=True)
@click.option("--depths", type=str, default="1,2,3,4", show_default=True,
              help="Comma-separated depths to histogram.")
@click.option("--tolerance-fraction", type=float, default=1e-3, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--keys-csv", type=click.Path(dir_okay=False), default=None,
              help="Optional CSV of per-replicate structure keys.")
@_build_config_options
def stability(oracle_path, external, data_path, schema_path, replicates, depths,
              tolerance_fraction, threads, out_path, keys_csv, **cfg_kw):
    """Histogram tree structures over replicate builds from one oracle."""
    if replicates < 2:
        raise click.UsageError("--replicates must be at least 2")
    try:
        depth_list = sorted({int(d) for d in depths.split(",")})
    except ValueError:
        raise click.UsageError(f"cannot parse --depths {depths!r}") from None
    timer = PhaseTimer()
    with timer("load"):
        schema = load_schema(schema_path)
        data = load_dataset(schema, data_path)
        oracle = _load_oracle(oracle_path, external, schema)
    cfg = _make_build_config(**cfg_kw)
    with timer("stability"):
        report = stability_experiment(
            data, oracle, cfg, replicates, depth_list,
            tolerance_fraction=tolerance_fraction, threads=threads,
        )
    if isinstance(oracle, ExternalProcessOracle):
        oracle.close()
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")
    outputs = [out_path]
    if keys_csv:
        with open(keys_csv, "w", encoding="utf-8") as fh:
            fh.write("depth,structure_key,count\n")
            for d in depth_list:
                for key, count in sorted(report.histograms[d].items()):
                    fh.write(f"{d},\"{key}\",{count}\n")
        outputs.append(keys_csv)
    inputs = [p for p in (oracle_path, data_path, schema_path) if p]
    write_manifest("stability", dict(cfg_kw, replicates=replicates, depths=depth_list),
                   inputs, outputs, cfg.seed, timer.timings,
                   str(out_path) + ".manifest.json")
    for d in depth_list:
        click.echo(
            f"depth {d}: {report.unique_structures(d)} unique structures, "
            f"modal fraction {report.modal_fraction(d):.2f}"
        )


@cli.command()
@click.option("--tree", "tree_path", required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["dot", "json"]), required=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def export(tree_path, fmt, out_path):
    """Re-emit a tree artifact as Graphviz DOT or canonical JSON."""
    with open(tree_path, "r", encoding="utf-8") as fh:
        tree = tree_from_json(fh.read())
    text = tree_to_dot(tree) if fmt == "dot" else tree_to_json(tree)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")
    write_manifest("export", {"format": fmt}, [tree_path], [out_path], None,
                   {}, str(out_path) + ".manifest.json")
    click.echo(f"wrote {fmt} to {out_path}")


def _exit_code_for(exc: BaseException) -> int:
    """Classify an error chain: data 3, oracle I/O 4, anything else internal 5."""
    seen = exc
    while seen is not None:
        if isinstance(seen, OracleIOError):
            return 4
        if isinstance(seen, (SchemaError, DataError)):
            return 3
        seen = seen.__cause__
    return 5


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(2)
    except click.exceptions.Abort:
        sys.exit(2)
    except StableTreeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(_exit_code_for(exc))


if __name__ == "__main__":
    main()
