"""Command line entry point.

One binary, subcommand per pipeline stage:

    vandal-sentinel synth-corpus   generate a synthetic fixture + truth
    vandal-sentinel build-corpus   label a revision stream into a corpus
    vandal-sentinel train          fit a forest (optionally grid search)
    vandal-sentinel evaluate       score the test split, write report files
    vandal-sentinel serve          run the scoring HTTP service
    vandal-sentinel replay-latency drive a running service, record timings
    vandal-sentinel export-ui-data bundle curve + config files for the UI

Config precedence is flags > environment (VS_*) > --config TOML file.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 upstream
error. Every artifact-producing run drops a run manifest next to its
artifact.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import __version__
from .corpus import (
    RevertConfig,
    build_corpus,
    parse_label_export,
    apply_label_overrides,
    read_corpus,
    split_train_test,
    subsample,
    write_corpus,
)
from .errors import (
    ConfigError,
    DataError,
    SchemaMismatch,
    ServiceUnreachable,
    UpstreamError,
    VandalSentinelError,
)
from .features import SCHEMA_VERSION, group_indices, group_spec_label, parse_group_spec
from .forest import ForestParams, TrainedModel, grid_search, train as train_forest
from .ingestion import Source, parse_source_spec
from .report import (
    DEFAULT_COMBOS,
    ablation_run,
    evaluate_model,
    EvalReport,
    render_text_table,
    write_report_files,
)
from .synth import SynthSpec, write_synth_fixture

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib


def _load_config_file(path):
    if not path:
        return {}
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from exc


def _setting(flag_value, env_name, config, config_key, default=None):
    """flags > environment > config file > default."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(env_name)
    if env is not None:
        return env
    if config_key in config:
        return config[config_key]
    return default


def parse_window(text: str) -> int:
    """'30d', '12h', '45m' or plain seconds -> seconds."""
    text = str(text).strip()
    units = {"d": 86400, "h": 3600, "m": 60, "s": 1}
    if text and text[-1] in units:
        try:
            return int(float(text[:-1]) * units[text[-1]])
        except ValueError as exc:
            raise ConfigError(f"bad window {text!r}") from exc
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"bad window {text!r}") from exc


def write_run_manifest(artifact_path, subcommand: str, config: dict, started: float, **extra) -> None:
    artifact_path = Path(artifact_path)
    if artifact_path.is_dir():
        manifest_path = artifact_path / "run_manifest.json"
    else:
        manifest_path = artifact_path.with_name(artifact_path.name + ".manifest.json")
    manifest = {
        "tool": f"vandal-sentinel {__version__}",
        "subcommand": subcommand,
        "config": config,
        "feature_schema_version": SCHEMA_VERSION,
        "wall_time_seconds": round(time.time() - started, 3),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    manifest.update(extra)
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth_corpus(args, config) -> int:
    started = time.time()
    spec = SynthSpec(
        n_edits=args.n,
        prevalence=args.prevalence,
        seed=int(_setting(args.seed, "VS_SEED", config, "seed", 0)),
        mean_history=args.mean_history,
    )
    out_dir = Path(args.out)
    truth = write_synth_fixture(spec, out_dir)
    write_run_manifest(
        out_dir,
        "synth-corpus",
        spec.to_json_dict(),
        started,
        outputs={"fixture_dir": str(out_dir), "truth": str(out_dir / "truth.json")},
    )
    print(f"wrote {truth['n_edits']} edits over {truth['n_items']} items to {out_dir}")
    print(f"planted vandalism: {len(truth['vandal_rev_ids'])}")
    return 0


def cmd_build_corpus(args, config) -> int:
    started = time.time()
    source_spec = _setting(args.source, "VS_SOURCE", config, "source")
    if not source_spec:
        raise ConfigError("build-corpus needs --source (or VS_SOURCE)")
    seed = int(_setting(args.seed, "VS_SEED", config, "seed", 0))
    revert_cfg = RevertConfig(radius=args.revert_radius, window=parse_window(args.revert_window))
    source = Source(parse_source_spec(source_spec))
    records, summary = build_corpus(
        source.stream_recent(), cfg=revert_cfg, with_features=not args.no_features
    )
    if args.sample_n:
        records = subsample(records, args.sample_n, mode=args.sample, seed=seed)
    if args.labels:
        overrides = parse_label_export(Path(args.labels).read_text(encoding="utf-8").splitlines())
        records = apply_label_overrides(records, overrides)
    records = split_train_test(records, ratio=args.split_ratio, seed=seed)
    header_extra = {
        "source": source_spec,
        "seed": seed,
        "revert_radius": revert_cfg.radius,
        "revert_window_seconds": revert_cfg.window,
        "split_ratio": args.split_ratio,
    }
    write_corpus(args.out, records, header_extra=header_extra)
    write_run_manifest(
        args.out,
        "build-corpus",
        {**header_extra, "sample": args.sample, "sample_n": args.sample_n},
        started,
        outputs={"corpus": str(args.out)},
        n_records=len(records),
    )
    print(summary.to_text())
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _params_from_args(args, seed: int) -> ForestParams:
    return ForestParams(
        n_trees=args.n_trees,
        max_depth=args.max_depth if args.max_depth and args.max_depth > 0 else None,
        min_samples_leaf=args.min_samples_leaf,
        features_per_split=args.features_per_split,
        class_weight=args.class_weight,
        seed=seed,
    )


def _parse_grid(path, seed: int) -> list[ForestParams]:
    data = _load_config_file(path)
    grid = data.get("grid", data)
    axes = {
        "n_trees": [int(v) for v in grid.get("n_trees", [80])],
        "max_depth": [int(v) for v in grid.get("max_depth", [0])],
        "min_samples_leaf": [int(v) for v in grid.get("min_samples_leaf", [1])],
        "features_per_split": list(grid.get("features_per_split", ["sqrt"])),
        "class_weight": list(grid.get("class_weight", ["balanced"])),
    }
    cells = []
    for n_trees in axes["n_trees"]:
        for depth in axes["max_depth"]:
            for leaf in axes["min_samples_leaf"]:
                for fps in axes["features_per_split"]:
                    for weight in axes["class_weight"]:
                        cells.append(
                            ForestParams(
                                n_trees=n_trees,
                                max_depth=depth if depth > 0 else None,
                                min_samples_leaf=leaf,
                                features_per_split=fps,
                                class_weight=weight,
                                seed=seed,
                            )
                        )
    if not cells:
        raise ConfigError(f"parameter grid {path} is empty")
    return cells


def cmd_train(args, config) -> int:
    import numpy as np

    started = time.time()
    seed = int(_setting(args.seed, "VS_SEED", config, "seed", 0))
    header, records = read_corpus(args.corpus)
    groups = parse_group_spec(args.groups)
    label = group_spec_label(groups)
    indices = group_indices(groups)

    train_records = [r for r in records if r.split == "train" and r.features is not None]
    if not train_records:
        raise DataError("corpus has no train-split records with features")
    X = np.array([r.features.values for r in train_records], dtype=np.float64)
    y = np.array([r.label for r in train_records], dtype=np.int8)
    X_groups = X[:, list(indices)]

    grid_report = None
    if args.params_grid:
        grid = _parse_grid(args.params_grid, seed)
        best, grid_report = grid_search(X_groups, y, grid, folds=args.folds, seed=seed)
        params = best
        print(f"grid search over {len(grid)} cells picked {params.to_json_dict()}")
    else:
        params = _params_from_args(args, seed)

    model = train_forest(X_groups, y, params, group_spec=label, feature_indices=indices)
    model.save(args.out)
    extra = {"outputs": {"model": str(args.out)}, "training_summary": model.training_summary}
    if grid_report is not None:
        grid_path = Path(args.out).with_name(Path(args.out).name + ".grid.json")
        grid_path.write_text(json.dumps(grid_report, indent=1, sort_keys=True), encoding="utf-8")
        extra["outputs"]["grid_report"] = str(grid_path)
    write_run_manifest(
        args.out,
        "train",
        {
            "corpus": str(args.corpus),
            "groups": label,
            "params": params.to_json_dict(),
            "seed": seed,
            "folds": args.folds if args.params_grid else None,
        },
        started,
        **extra,
    )
    print(f"trained {params.n_trees} trees on {len(train_records)} rows -> {args.out}")
    return 0


def cmd_evaluate(args, config) -> int:
    import numpy as np

    from .report import matrices_from_records

    started = time.time()
    header, records = read_corpus(args.corpus)
    out_dir = Path(args.out)

    if args.ablate:
        seed = int(_setting(args.seed, "VS_SEED", config, "seed", 0))
        params = _params_from_args(args, seed)
        report, _ = ablation_run(
            records, params, combos=args.combos.split("/") if args.combos else DEFAULT_COMBOS,
            target_recall=args.recall,
        )
    else:
        if not args.model:
            raise ConfigError("evaluate needs --model (or --ablate)")
        model = TrainedModel.load(args.model)
        if model.feature_schema_version != header.get("feature_schema_version"):
            raise SchemaMismatch(
                f"model schema {model.feature_schema_version!r} does not match corpus "
                f"{header.get('feature_schema_version')!r}"
            )
        X, y, train_mask, test_mask = matrices_from_records(records)
        if not test_mask.any():
            raise DataError("corpus has no test split to evaluate on")
        row, curves = evaluate_model(model, X[test_mask], y[test_mask], args.recall)
        report = EvalReport(
            rows=[row],
            curves={row.groups: curves},
            config={
                "model": str(args.model),
                "params": model.params.to_json_dict(),
                "feature_schema_version": model.feature_schema_version,
                "n_test": int(test_mask.sum()),
                "test_prevalence": float(y[test_mask].mean()),
                "target_recall": args.recall,
                "note": "forest defaults are declared assumptions",
            },
        )

    artifacts = write_report_files(report, out_dir)
    write_run_manifest(
        out_dir,
        "evaluate",
        {
            "corpus": str(args.corpus),
            "model": str(args.model) if args.model else None,
            "ablate": args.ablate,
            "target_recall": args.recall,
        },
        started,
        outputs=artifacts,
    )
    print(render_text_table(report))
    print(f"report files under {out_dir}")
    return 0


def cmd_serve(args, config) -> int:
    import uvicorn

    from .service import build_service

    source_spec = _setting(args.source, "VS_SOURCE", config, "source")
    if not source_spec:
        raise ConfigError("serve needs --source (or VS_SOURCE)")
    app, engine, worker = build_service(
        model_path=args.model,
        source_spec=source_spec,
        cache_dir=args.cache_dir,
        threshold=args.threshold,
        max_batch=args.max_batch,
        curves_path=args.curves,
        precache=args.precache,
    )
    if worker is not None:
        worker.start()
    print(f"serving model {engine.model_version} on {args.host}:{args.port}")
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    finally:
        if worker is not None:
            worker.stop()
    return 0


def _replay(client, rev_ids: list[int], n: int, batch_size: int) -> list[tuple]:
    """Drive a service: fresh singles, fresh batches, cached re-requests.

    Returns (mode, seconds, batch_size) rows measured client-side. Singles
    and batches hit disjoint revision sets so batch timing reflects fresh
    computation; the cached pass re-requests the singles.
    """
    timings: list[tuple] = []
    if n <= 0 or not rev_ids:
        return timings
    half = min(n, max(1, len(rev_ids) // 2))
    single_revs = rev_ids[:half]
    batch_revs = rev_ids[half : half + min(n, len(rev_ids) - half)]

    for rev_id in single_revs:
        start = time.perf_counter()
        response = client.get(f"/v1/scores/{rev_id}")
        elapsed = time.perf_counter() - start
        if response.status_code != 200:
            continue
        timings.append(("single", elapsed, None))

    for start_index in range(0, len(batch_revs) - batch_size + 1, batch_size):
        chunk = batch_revs[start_index : start_index + batch_size]
        start = time.perf_counter()
        response = client.post("/v1/scores", json={"rev_ids": chunk})
        elapsed = time.perf_counter() - start
        if response.status_code != 200:
            continue
        timings.append(("batch", elapsed, len(chunk)))

    served = 0
    while served < n:
        rev_id = single_revs[served % len(single_revs)]
        start = time.perf_counter()
        response = client.get(f"/v1/scores/{rev_id}")
        elapsed = time.perf_counter() - start
        served += 1
        if response.status_code != 200:
            continue
        timings.append(("cached", elapsed, None))
    return timings


def _write_latency_files(timings: list[tuple], out_path: Path) -> None:
    lines = ["mode,seconds,batch_size,per_revision_seconds"]
    for mode, seconds, size in timings:
        per_rev = seconds / size if size else seconds
        lines.append(f"{mode},{seconds:.9f},{size if size else ''},{per_rev:.9f}")
    out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    fig, ax = plt.subplots(figsize=(7, 4))
    for mode in ("single", "batch", "cached"):
        samples = [
            (seconds / size if size else seconds)
            for m, seconds, size in timings
            if m == mode
        ]
        if samples:
            ax.hist(samples, bins=40, alpha=0.55, label=f"{mode} (n={len(samples)})")
    ax.set_xlabel("seconds per revision")
    ax.set_ylabel("requests")
    ax.set_title("Response time per revision score")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path.with_name(out_path.stem + "_density.png"), dpi=150)
    plt.close(fig)


def cmd_replay_latency(args, config) -> int:
    import httpx

    started = time.time()
    manifest = Path(args.fixture) / "manifest.txt"
    if not manifest.exists():
        raise DataError(f"{args.fixture} has no manifest.txt")
    rev_ids = [int(line) for line in manifest.read_text().split() if line.strip()]
    out_path = Path(args.out)
    try:
        with httpx.Client(base_url=args.service_url, timeout=60) as client:
            health = client.get("/v1/health")
            if health.status_code != 200:
                raise ServiceUnreachable(f"health check returned {health.status_code}")
            timings = _replay(client, rev_ids, args.n, args.batch_size)
    except httpx.HTTPError as exc:
        raise ServiceUnreachable(f"cannot reach {args.service_url}: {exc}") from exc
    _write_latency_files(timings, out_path)
    write_run_manifest(
        out_path,
        "replay-latency",
        {"service_url": args.service_url, "fixture": str(args.fixture), "n": args.n},
        started,
        outputs={"latency_csv": str(out_path)},
        samples={mode: sum(1 for t in timings if t[0] == mode) for mode in ("single", "batch", "cached")},
    )
    print(f"recorded {len(timings)} timing rows to {out_path}")
    return 0


def cmd_export_ui_data(args, config) -> int:
    started = time.time()
    report_dir = Path(args.report_dir)
    combo_slug = args.combo.replace(",", "+")
    filter_csv = report_dir / f"{combo_slug}_filter.csv"
    pr_csv = report_dir / f"{combo_slug}_pr.csv"
    if not filter_csv.exists():
        raise DataError(f"no curve file {filter_csv}; run evaluate first")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "curves.csv").write_text(filter_csv.read_text(encoding="utf-8"), encoding="utf-8")
    if pr_csv.exists():
        (out_dir / "pr_curve.csv").write_text(pr_csv.read_text(encoding="utf-8"), encoding="utf-8")
    ui_config = {
        "service_url": args.service_url,
        "combo": args.combo,
        "curves_file": "curves.csv",
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    (out_dir / "ui-config.json").write_text(json.dumps(ui_config, indent=1, sort_keys=True), encoding="utf-8")
    write_run_manifest(
        out_dir,
        "export-ui-data",
        {"report_dir": str(report_dir), "combo": args.combo, "service_url": args.service_url},
        started,
        outputs={"ui_dir": str(out_dir)},
    )
    print(f"UI data bundle written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vandal-sentinel",
        description="Vandalism scoring pipeline for structured knowledge-base edits.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="TOML file with default settings")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth-corpus", help="generate a synthetic fixture directory")
    p.add_argument("--n", type=int, required=True, help="number of sampled (non-bot) edits")
    p.add_argument("--prevalence", type=float, required=True, help="planted vandalism fraction")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mean-history", type=int, default=12)
    p.add_argument("--out", required=True, help="fixture directory to create")
    p.set_defaults(handler=cmd_synth_corpus)

    p = sub.add_parser("build-corpus", help="label a revision stream into a corpus file")
    p.add_argument("--source", help="live:<api-url> or fixture:<dir>")
    p.add_argument("--out", required=True, help="corpus JSONL path")
    p.add_argument("--revert-radius", type=int, default=15)
    p.add_argument("--revert-window", default="30d")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--split-ratio", type=float, default=0.8)
    p.add_argument("--sample", choices=("edits", "items"), default="edits")
    p.add_argument("--sample-n", type=int, default=0, help="down-sample to this many records")
    p.add_argument("--labels", help="review-tool label export JSONL applied as overrides")
    p.add_argument("--no-features", action="store_true", help="skip feature extraction")
    p.set_defaults(handler=cmd_build_corpus)

    p = sub.add_parser("train", help="train a forest on the corpus train split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--groups", default="all", help="all or comma list, e.g. general,user")
    p.add_argument("--params-grid", help="TOML grid for cross-validated search")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--n-trees", type=int, default=80)
    p.add_argument("--max-depth", type=int, default=0, help="0 means unlimited")
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--features-per-split", choices=("sqrt", "log2", "all"), default="sqrt")
    p.add_argument("--class-weight", choices=("balanced", "none"), default="balanced")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate on the test split, write report files")
    p.add_argument("--model", help="trained model JSON")
    p.add_argument("--corpus", required=True)
    p.add_argument("--recall", type=float, default=None, help="target recall operating point")
    p.add_argument("--ablate", action="store_true", help="train+evaluate the group ablation")
    p.add_argument("--combos", help="slash-separated group combos for --ablate")
    p.add_argument("--n-trees", type=int, default=80)
    p.add_argument("--max-depth", type=int, default=0)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--features-per-split", choices=("sqrt", "log2", "all"), default="sqrt")
    p.add_argument("--class-weight", choices=("balanced", "none"), default="balanced")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("serve", help="run the scoring HTTP service")
    p.add_argument("--model", required=True)
    p.add_argument("--source", help="live:<api-url> or fixture:<dir>")
    p.add_argument("--cache-dir", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--max-batch", type=int, default=50)
    p.add_argument("--curves", help="filter-rate curve CSV served at /v1/curves")
    p.add_argument("--precache", action="store_true", help="stream and score in the background")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8100)
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("replay-latency", help="replay a fixture against a running service")
    p.add_argument("--service-url", required=True)
    p.add_argument("--fixture", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=50)
    p.add_argument("--out", required=True, help="latency CSV path")
    p.set_defaults(handler=cmd_replay_latency)

    p = sub.add_parser("export-ui-data", help="bundle curves and config for the review UI")
    p.add_argument("--report-dir", required=True)
    p.add_argument("--combo", default="all")
    p.add_argument("--service-url", default="http://127.0.0.1:8100")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_export_ui_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config_file(args.config)
        return args.handler(args, config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except UpstreamError as exc:
        print(f"upstream error: {exc}", file=sys.stderr)
        return 4
    except VandalSentinelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
