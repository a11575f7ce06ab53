"""Command-line entry point.

Subcommands: label, train, cv, sweep, compare. Every command is
deterministic given (input bytes, flags, seed); wall-clock measurements
and timestamps are confined to the run manifest and human-readable
output so the machine artifacts stay byte-reproducible. Exit codes:
0 success, 1 usage, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import DEFAULT_SEED, __version__
from .errors import DivergedError, EleflowError
from .flows import FlowLabel, FlowRecord, LabelingPolicy, decide_flow
from .ingest import (
    DatasetSchema,
    PRESET_SCHEMAS,
    parse_csv,
    resolve_schema,
    to_feature_matrix,
)
from .kernels import backend
from .models import (
    AE_SWEEP_BATCH,
    ModelConfig,
    build_network_spec,
    save_model,
    train,
)

ENV_PREFIX = "ELEFLOW_"
ALL_FAMILIES = ("dnn", "cnn", "lstm", "autoencoder")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _env(name: str, fallback=None):
    return os.environ.get(ENV_PREFIX + name, fallback)


def _env_num(name: str, cast, fallback):
    raw = _env(name)
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except ValueError as exc:
        raise UsageError(f"bad {ENV_PREFIX}{name}={raw!r}: {exc}") from exc


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Audit record written beside every command's outputs."""

    command: str
    config: dict
    seed: int
    version: str = __version__
    kernel_backend: str = field(default_factory=backend)
    inputs: dict = field(default_factory=dict)    # path -> sha256
    outputs: dict = field(default_factory=dict)   # path -> sha256
    timings: dict = field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""

    def add_input(self, path) -> None:
        self.inputs[Path(path).name] = _sha256(path)

    def add_output(self, path) -> None:
        self.outputs[Path(path).name] = _sha256(path)

    def write(self, out_dir) -> Path:
        self.finished_at = _utc_now()
        path = Path(out_dir) / f"{self.command}_manifest.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(vars(self), fh, sort_keys=True, indent=2)
            fh.write("\n")
        return path


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _add_common_flags(p: argparse.ArgumentParser, with_training: bool = True):
    p.add_argument("--input", required=True, action="append",
                   help="labeled flow CSV (repeat for compare)")
    p.add_argument("--schema", default=_env("SCHEMA", "nims"),
                   help="preset name or schema .json path")
    p.add_argument("--out-dir", default=_env("OUT_DIR", "."))
    p.add_argument("--seed", type=int, default=_env_num("SEED", int, DEFAULT_SEED))
    if with_training:
        p.add_argument("--family", default=_env("FAMILY", "dnn"))
        p.add_argument("--epochs", type=int, default=_env_num("EPOCHS", int, 50))
        p.add_argument("--batch", type=int, default=_env_num("BATCH", int, 128))
        p.add_argument("--lr", type=float, default=_env_num("LR", float, 0.01))
        p.add_argument("--val-fraction", type=float, default=0.1)


def build_parser() -> _Parser:
    parser = _Parser(prog="eleflow",
                     description="Elephant/mouse flow labeling and detectors")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("label", help="append an elephant/mouse class column")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", default=_env("SCHEMA", "nims"))
    p.add_argument("--policy", default=_env("POLICY"),
                   help="labeling policy .json (defaults documented in README)")
    p.add_argument("--output", default=None,
                   help="labeled CSV path (default <input>_labeled.csv in --out-dir)")
    p.add_argument("--out-dir", default=_env("OUT_DIR", "."))

    p = sub.add_parser("train", help="train one detector family")
    _add_common_flags(p)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    _add_common_flags(p)
    p.add_argument("--folds", type=int, default=_env_num("FOLDS", int, 10))

    p = sub.add_parser("sweep", help="epoch or batch-size sweep")
    _add_common_flags(p)
    p.add_argument("--axis", required=True, choices=("epochs", "batch"))
    p.add_argument("--values", default=None,
                   help="comma-separated settings (defaults per axis)")

    p = sub.add_parser("compare", help="side-by-side family comparison")
    _add_common_flags(p)
    p.add_argument("--families", default="all",
                   help="comma list or 'all' (default)")
    return parser


def _resolve_schema_arg(name: str) -> DatasetSchema:
    return resolve_schema(name)


def _load_labeled(path: str, schema: DatasetSchema):
    if schema.class_column is None:
        raise EleflowError(
            f"schema {schema.name!r} has no class column; label the data first")
    table = parse_csv(path, schema)
    matrix = to_feature_matrix(table)
    if matrix.labels is None or matrix.n_rows == 0:
        raise EleflowError(f"{path}: no labeled rows found")
    return matrix


def _families_arg(raw: str) -> list[str]:
    if raw == "all":
        return list(ALL_FAMILIES)
    families = [f.strip() for f in raw.split(",") if f.strip()]
    unknown = set(families) - set(ALL_FAMILIES)
    if unknown:
        raise UsageError(f"unknown families {sorted(unknown)}; "
                         f"choose from {', '.join(ALL_FAMILIES)}")
    if not families:
        raise UsageError("no families given")
    return families


def _make_config(args, family: str, input_dim: int) -> ModelConfig:
    return ModelConfig(
        family=family,
        input_dim=input_dim,
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        validation_fraction=args.val_fraction,
    )


def _records_from_table(table, schema: DatasetSchema) -> list[FlowRecord]:
    if not schema.label_fields:
        raise EleflowError(f"schema {schema.name!r} lacks label_fields; "
                           "cannot apply the labeling heuristics")
    col_index = {c.name: i for i, c in enumerate(table.schema.columns)}
    mapping = {key: col_index[col] for key, col in schema.label_fields.items()
               if col in col_index}
    records = []
    for row, line in zip(table.rows, table.line_numbers):
        def cell(key, default=0.0):
            if key not in mapping:
                return default
            raw = row[mapping[key]].strip()
            try:
                return float(raw)
            except ValueError:
                raise EleflowError(
                    f"line {line}: cannot read {schema.label_fields[key]!r}="
                    f"{raw!r} as a number") from None

        records.append(FlowRecord(
            duration=cell("duration"),
            total_fpackets=int(cell("fwd_packets")),
            total_bpackets=int(cell("bwd_packets")),
            total_fvolume=int(cell("fwd_bytes")),
            total_bvolume=int(cell("bwd_bytes")),
        ))
    return records


def cmd_label(args) -> int:
    schema = _resolve_schema_arg(args.schema)
    policy = LabelingPolicy.from_file(args.policy) if args.policy else LabelingPolicy()
    table = parse_csv(args.input, schema, allow_missing_class=True)
    records = _records_from_table(table, schema)
    decisions = [decide_flow(r, policy) for r in records]

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = Path(args.output) if args.output else \
        out_dir / (Path(args.input).stem + "_labeled.csv")

    class_col = schema.class_column or "class"
    in_names = list(table.schema.column_names)
    drop = in_names.index(class_col) if class_col in in_names else None
    header = [n for n in in_names if n != class_col] + [class_col]
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row, decision in zip(table.rows, decisions):
            cells = [c for i, c in enumerate(row) if i != drop]
            writer.writerow(cells + [int(decision.label)])

    elephants = sum(1 for d in decisions if d.label == FlowLabel.ELEPHANT)
    small = sum(1 for d in decisions
                if d.label == FlowLabel.ELEPHANT and not d.packet_size_ok)
    total = len(decisions)
    share = (100.0 * elephants / total) if total else 0.0
    print(f"labeled {total} flows -> {out_path}")
    print(f"elephants={elephants} mice={total - elephants} "
          f"({share:.2f}% elephants)")
    if small:
        print(f"advisory: {small} elephant flows average under "
              f"{policy.min_bytes_per_packet} bytes/packet")

    manifest = RunManifest(command="label", seed=0,
                           config={"policy": vars(policy) | {"combination": policy.combination},
                                   "schema": schema.name})
    manifest.started_at = _utc_now()
    manifest.add_input(args.input)
    manifest.add_output(out_path)
    manifest.write(out_dir)
    return 0


def _write_history_csv(path, history) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "train_acc", "val_loss",
                         "val_acc", "seconds"])
        for h in history:
            writer.writerow([
                h.epoch,
                repr(h.train_loss),
                "" if h.train_accuracy is None else repr(h.train_accuracy),
                repr(h.val_loss),
                "" if h.val_accuracy is None else repr(h.val_accuracy),
                repr(h.seconds),
            ])


def cmd_train(args) -> int:
    schema = _resolve_schema_arg(args.schema)
    data = _load_labeled(args.input[0], schema)
    family = args.family
    if family not in ALL_FAMILIES:
        raise UsageError(f"unknown family {family!r}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    config = _make_config(args, family, data.n_features)
    manifest = RunManifest(command="train", seed=args.seed, config=config.to_dict())
    manifest.started_at = _utc_now()
    manifest.add_input(args.input[0])

    tic = time.perf_counter()
    if family == "autoencoder":
        from .ae import fit_ae_detector

        if args.batch == 128:  # flag untouched: use the sweep default
            config = ModelConfig(**{**config.to_dict(), "batch_size": AE_SWEEP_BATCH})
        model, sweep = fit_ae_detector(data, config)
        sweep_path = out_dir / f"{family}_thresholds.csv"
        sweep.write_csv(sweep_path)
        manifest.add_output(sweep_path)
        print(f"best validation accuracy: {sweep.best_accuracy:.4f} "
              f"for threshold: {sweep.best_threshold:.4f}")
    else:
        spec = build_network_spec(family, data.n_features)
        model = train(spec, data, config)

    model_path = out_dir / f"{family}_model.bin"
    save_model(model, model_path)
    history_path = out_dir / f"{family}_history.csv"
    _write_history_csv(history_path, model.history)
    manifest.add_output(model_path)
    manifest.add_output(history_path)
    manifest.timings["train_seconds"] = time.perf_counter() - tic
    manifest.write(out_dir)

    last = model.history[-1]
    acc = "" if last.val_accuracy is None else f" val_acc={last.val_accuracy:.4f}"
    print(f"trained {family} for {config.epochs} epochs: "
          f"train_loss={last.train_loss:.6f} val_loss={last.val_loss:.6f}{acc}")
    print(f"model -> {model_path}")
    return 0


def cmd_cv(args) -> int:
    from .evalkit import cross_validate

    schema = _resolve_schema_arg(args.schema)
    data = _load_labeled(args.input[0], schema)
    families = _families_arg(args.family if args.family != "all" else "all")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = RunManifest(command="cv", seed=args.seed,
                           config={"folds": args.folds, "families": families})
    manifest.started_at = _utc_now()
    manifest.add_input(args.input[0])

    for family in families:
        tic = time.perf_counter()
        config = _make_config(args, family, data.n_features)
        report = cross_validate(family, data, config, k=args.folds)
        json_path = out_dir / f"cv_{family}.json"
        doc = report.to_json_dict()
        doc["manifest"] = "cv_manifest.json"
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
        folds_path = out_dir / f"cv_{family}_folds.csv"
        with open(folds_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fold", "tp", "tn", "fp", "fn", "accuracy"])
            for f in report.folds:
                writer.writerow([f.fold, f.cm.tp, f.cm.tn, f.cm.fp, f.cm.fn,
                                 repr(f.accuracy)])
        manifest.add_output(json_path)
        manifest.add_output(folds_path)
        manifest.timings[f"cv_{family}_seconds"] = time.perf_counter() - tic
        print(report.to_text())
    manifest.write(out_dir)
    return 0


def _parse_values(raw: str) -> list[int]:
    try:
        values = [int(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --values {raw!r}: {exc}") from exc
    if not values or any(v < 1 for v in values):
        raise UsageError(f"bad --values {raw!r}: need positive integers")
    return values


def cmd_sweep(args) -> int:
    from .evalkit import DEFAULT_BATCH_SWEEP, DEFAULT_EPOCH_SWEEP, batch_sweep, epoch_sweep

    schema = _resolve_schema_arg(args.schema)
    data = _load_labeled(args.input[0], schema)
    family = args.family
    if family not in ALL_FAMILIES:
        raise UsageError(f"unknown family {family!r}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    config = _make_config(args, family, data.n_features)
    manifest = RunManifest(command="sweep", seed=args.seed,
                           config={"axis": args.axis, "family": family})
    manifest.started_at = _utc_now()
    manifest.add_input(args.input[0])

    tic = time.perf_counter()
    if args.axis == "epochs":
        values = _parse_values(args.values) if args.values else list(DEFAULT_EPOCH_SWEEP)
        table = epoch_sweep(family, data, config, epochs_list=values,
                            batch=args.batch if args.batch != 128 else 512)
    else:
        values = _parse_values(args.values) if args.values else list(DEFAULT_BATCH_SWEEP)
        table = batch_sweep(family, data, config, batch_list=values,
                            epochs=args.epochs)
    manifest.config["values"] = values

    csv_path = out_dir / f"sweep_{args.axis}_{family}.csv"
    table.write_csv(csv_path)
    manifest.add_output(csv_path)
    manifest.timings["sweep_seconds"] = time.perf_counter() - tic
    manifest.write(out_dir)

    for value, acc in table.rows:
        print(f"{table.axis}={value}: accuracy={acc:.4f}")
    print(f"sweep -> {csv_path}")
    return 0


def cmd_compare(args) -> int:
    from .evalkit import compare_models

    schema = _resolve_schema_arg(args.schema)
    families = _families_arg(args.families)
    datasets = [(Path(path).stem, _load_labeled(path, schema))
                for path in args.input]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    config = _make_config(args, families[0], datasets[0][1].n_features)
    manifest = RunManifest(command="compare", seed=args.seed,
                           config={"families": families})
    manifest.started_at = _utc_now()
    for path in args.input:
        manifest.add_input(path)

    report = compare_models(datasets, config, families=families)
    text = report.to_text()
    print(text)

    json_path = out_dir / "compare.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    txt_path = out_dir / "compare.txt"
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    manifest.add_output(json_path)
    manifest.add_output(txt_path)
    manifest.write(out_dir)
    return 0


_COMMANDS = {
    "label": cmd_label,
    "train": cmd_train,
    "cv": cmd_cv,
    "sweep": cmd_sweep,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DivergedError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return 3
    except (EleflowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
