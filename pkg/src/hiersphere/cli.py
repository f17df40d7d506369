"""Command-line entry point.

Sub-commands: gen-data, dedup, train, embed, eval, viz, bench. Every run
writes a manifest next to its primary output with the echoed config and
sha256 checksums of the emitted artifacts. Exit codes: 0 success, 1 usage,
2 data error, 3 numeric failure.

Flag precedence for train/bench: explicit flags > --config JSON file >
built-in defaults. Relative output paths resolve under $HIERSPHERE_OUT_DIR
when that variable is set.
"""

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from .data import (
    Dataset,
    GeneratorConfig,
    Sample,
    generate_synthetic,
    load_jsonl,
    save_jsonl,
    tfidf_dedup,
)
from .encoder import (
    EncoderConfig,
    OptimizerConfig,
    load_checkpoint,
    save_checkpoint,
)
from .errors import DataError, InvalidConfigError, NumericError
from .evaluate import (
    compute_centroids,
    embed_all,
    format_mae_table,
    mae_report,
)
from .losses import AdaCosState
from .rng import STREAM_SAMPLING, make_rng
from .trainer import (
    TrainConfig,
    train_baseline,
    train_two_stage,
)
from .viz import classical_mds, emit_svg_scatter

OUT_DIR_ENV = "HIERSPHERE_OUT_DIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

TRAIN_MODES = ("two-stage", "triplet", "softmax", "cosface", "arcface", "adacos")

TRAIN_DEFAULTS = {
    "mode": "two-stage",
    "t": 0.3,
    "seed": 0,
    "epochs": 20,
    "stage2_epochs": 20,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "stage2_learning_rate": None,
    "hidden_dims": "128",
    "embed_dim": 32,
    "activation": "tanh",
    "shuffle": True,
    "triplet_margin": 1.0,
    "neutral_pairs_positive": False,
    "mnli_label_map": False,
}

# bench deviates from the train-command defaults for stage 2: at the
# one-tenth fine-tuning rate with 20 epochs the pair loss underfits (most
# in-batch pairs fall in the null band, so per-step signal is weak) and the
# two-stage model does not separate from the baselines
BENCH_DEFAULTS = {
    "classes": 5,
    "dim": 64,
    "per_subclass": 200,
    "alpha": 1.0,
    "sigma": 0.3,
    "seed": 42,
    "t": 0.3,
    "epochs": 20,
    "stage2_epochs": 60,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "stage2_learning_rate": 1e-3,
    "hidden_dims": "128",
    "embed_dim": 32,
    "activation": "tanh",
    "triplet_margin": 1.0,
    "threads": 1,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; this toolkit reserves 2 for
    # data errors, so usage problems are rethrown and mapped to 1
    def error(self, message):
        raise UsageError(message)


def _resolve_out(path: str | None) -> str | None:
    if path is None:
        return None
    base = os.environ.get(OUT_DIR_ENV)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json_atomic(path: str, doc) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def _write_manifest(
    command: str,
    primary_out: str,
    config: dict,
    inputs: list[str],
    outputs: list[str],
    seed,
    started: float,
) -> None:
    root, _ = os.path.splitext(primary_out)
    manifest_path = root + ".manifest.json"
    doc = {
        "command": command,
        "config": config,
        "inputs": sorted(inputs),
        "outputs": sorted(outputs),
        "seed": seed,
        "checksums": {os.path.basename(p): _sha256(p) for p in sorted(outputs)},
        "wall_time_seconds": time.time() - started,
    }
    _write_json_atomic(manifest_path, doc)


def _train_config_from_ns(cfg: dict, input_dim: int) -> TrainConfig:
    hidden = tuple(int(h) for h in str(cfg["hidden_dims"]).split(",") if h.strip())
    mode = cfg["mode"]
    return TrainConfig(
        stage1_epochs=cfg["epochs"],
        stage2_epochs=cfg["stage2_epochs"] if mode == "two-stage" else 0,
        batch_size=cfg["batch_size"],
        t=cfg["t"],
        loss_kind="adacos" if mode == "two-stage" else mode,
        triplet_margin=cfg["triplet_margin"],
        optimizer=OptimizerConfig(learning_rate=cfg["learning_rate"]),
        stage2_learning_rate=cfg["stage2_learning_rate"],
        seed=cfg["seed"],
        shuffle=cfg["shuffle"],
        encoder=EncoderConfig(
            input_dim=input_dim,
            hidden_dims=hidden,
            output_dim=cfg["embed_dim"],
            activation=cfg["activation"],
        ),
        same_class_neutral_pair_positive=cfg["neutral_pairs_positive"],
    )


def _save_model(path: str, params, state: AdaCosState | None, report) -> None:
    extra = {"train_report": report.to_dict(include_wall_time=False)}
    if state is not None:
        extra["adacos"] = {"scale": state.scale, "weights": state.weights.tolist()}
    save_checkpoint(path, params, extra=extra)


def _load_labeled(path: str, mnli: bool = False, split_tag: str = "train") -> Dataset:
    return load_jsonl(path, mnli_label_map=mnli, split_tag=split_tag)


# ---------------------------------------------------------------- commands


def _cmd_gen_data(ns) -> int:
    started = time.time()
    cfg = GeneratorConfig(
        num_classes=ns.classes,
        input_dim=ns.dim,
        per_subclass_count=ns.per_subclass,
        polarity_offset=ns.alpha,
        noise_sigma=ns.sigma,
        seed=ns.seed,
    )
    dataset = generate_synthetic(cfg, split_tag=ns.split)
    out = _resolve_out(ns.out)
    save_jsonl(out, dataset)
    print(f"wrote {len(dataset)} samples to {out}")
    _write_manifest(
        "gen-data",
        out,
        {
            "classes": ns.classes,
            "dim": ns.dim,
            "per_subclass": ns.per_subclass,
            "alpha": ns.alpha,
            "sigma": ns.sigma,
            "split": ns.split,
        },
        inputs=[],
        outputs=[out],
        seed=ns.seed,
        started=started,
    )
    return EXIT_OK


def _cmd_dedup(ns) -> int:
    started = time.time()
    texts = []
    with open(ns.data, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            texts.append((str(rec["id"]), str(rec["text"])))
    kept_ids, removals = tfidf_dedup(texts, threshold=ns.threshold)

    out = _resolve_out(ns.out)
    kept = set(kept_ids)
    with open(out, "w", encoding="utf-8") as fh:
        for tid, text in texts:
            if tid in kept:
                fh.write(json.dumps({"id": tid, "text": text}, separators=(",", ":")))
                fh.write("\n")
    outputs = [out]
    if ns.report:
        report_path = _resolve_out(ns.report)
        _write_json_atomic(
            report_path,
            [
                {"removed_id": r.removed_id, "kept_id": r.kept_id, "similarity": r.similarity}
                for r in removals
            ],
        )
        outputs.append(report_path)
    print(f"kept {len(kept_ids)} of {len(texts)} texts ({len(removals)} removed)")
    _write_manifest(
        "dedup",
        out,
        {"threshold": ns.threshold},
        inputs=[ns.data],
        outputs=outputs,
        seed=None,
        started=started,
    )
    return EXIT_OK


def _merged_config(ns, defaults: dict) -> dict:
    """flags > config file > defaults (flag parsers use SUPPRESS defaults)."""
    merged = dict(defaults)
    config_path = getattr(ns, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise InvalidConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise InvalidConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in defaults:
        if hasattr(ns, key):
            merged[key] = getattr(ns, key)
    return merged


def _cmd_train(ns) -> int:
    started = time.time()
    cfg = _merged_config(ns, TRAIN_DEFAULTS)
    dataset = _load_labeled(ns.data, mnli=cfg["mnli_label_map"])
    train_cfg = _train_config_from_ns(cfg, dataset.input_dim)

    mode = cfg["mode"]
    if mode == "two-stage":
        params, state, report = train_two_stage(dataset, train_cfg)
    else:
        params, state, report = train_baseline(dataset, train_cfg)

    out = _resolve_out(ns.out)
    _save_model(out, params, state, report)
    root, _ = os.path.splitext(out)
    report_path = root + ".report.json"
    _write_json_atomic(report_path, report.to_dict(include_wall_time=False))

    for epoch, loss in enumerate(report.stage1_epoch_losses, start=1):
        print(f"stage1 epoch {epoch}: loss {loss}")
    for epoch, loss in enumerate(report.stage2_epoch_losses, start=1):
        print(f"stage2 epoch {epoch}: loss {loss}")
    print(f"saved model to {out}")
    _write_manifest(
        "train",
        out,
        {**cfg, "mode": mode},
        inputs=[ns.data],
        outputs=[out, report_path],
        seed=cfg["seed"],
        started=started,
    )
    return EXIT_OK


def _load_model(path: str):
    params, doc = load_checkpoint(path)
    state = None
    if "adacos" in doc:
        sec = doc["adacos"]
        state = AdaCosState(
            weights=np.asarray(sec["weights"], dtype=np.float64),
            scale=float(sec["scale"]),
            dynamic=False,
        )
    return params, state


def _cmd_embed(ns) -> int:
    started = time.time()
    params, _ = _load_model(ns.model)
    dataset = _load_labeled(ns.data, mnli=ns.mnli_label_map)
    emb = embed_all(params, dataset, num_threads=ns.threads)
    out = _resolve_out(ns.out)
    with open(out, "w", encoding="utf-8") as fh:
        for sample, e in zip(dataset.samples, emb):
            fh.write(json.dumps({"id": sample.id, "embedding": e.tolist()}, separators=(",", ":")))
            fh.write("\n")
    print(f"wrote {len(dataset)} embeddings to {out}")
    _write_manifest(
        "embed",
        out,
        {"threads": ns.threads},
        inputs=[ns.model, ns.data],
        outputs=[out],
        seed=None,
        started=started,
    )
    return EXIT_OK


def _cmd_eval(ns) -> int:
    started = time.time()
    params, _ = _load_model(ns.model)
    train_set = _load_labeled(ns.train, mnli=ns.mnli_label_map)
    test_set = _load_labeled(ns.test, mnli=ns.mnli_label_map, split_tag="test")
    centroids = compute_centroids(params, train_set)
    report = mae_report(
        params,
        centroids,
        test_set,
        model_tag=ns.tag,
        mode=ns.label_mode,
        signed=not ns.unsigned,
        num_threads=ns.threads,
    )
    report_path = _resolve_out(ns.report)
    _write_json_atomic(report_path, report.to_dict())
    print(format_mae_table([report]))
    _write_manifest(
        "eval",
        report_path,
        {"label_mode": ns.label_mode, "unsigned": ns.unsigned, "threads": ns.threads},
        inputs=[ns.model, ns.train, ns.test],
        outputs=[report_path],
        seed=None,
        started=started,
    )
    return EXIT_OK


def _cmd_viz(ns) -> int:
    started = time.time()
    params, _ = _load_model(ns.model)
    dataset = _load_labeled(ns.data, mnli=ns.mnli_label_map)

    indices = np.arange(len(dataset))
    if ns.max_points and len(dataset) > ns.max_points:
        rng = make_rng(ns.seed, STREAM_SAMPLING)
        indices = np.sort(rng.choice(len(dataset), size=ns.max_points, replace=False))
    subset = Dataset(
        samples=[dataset.samples[i] for i in indices],
        num_classes=dataset.num_classes,
        input_dim=dataset.input_dim,
        class_names=dataset.class_names,
        split_tag=dataset.split_tag,
    )

    emb = embed_all(params, subset)
    mds = classical_mds(emb, input_kind="points")
    out = _resolve_out(ns.out)
    csv_path = _resolve_out(ns.csv) if ns.csv else None
    emit_svg_scatter(
        mds,
        subset.labels(),
        subset.class_names,
        out,
        ids=[s.id for s in subset.samples],
        csv_path=csv_path,
    )
    outputs = [out] + ([csv_path] if csv_path else [])
    print(f"projected {len(subset)} points (stress {mds.stress:.4f}) to {out}")
    _write_manifest(
        "viz",
        out,
        {"max_points": ns.max_points},
        inputs=[ns.model, ns.data],
        outputs=outputs,
        seed=ns.seed,
        started=started,
    )
    return EXIT_OK


def _cmd_bench(ns) -> int:
    started = time.time()
    cfg = _merged_config(ns, BENCH_DEFAULTS)
    out_dir = _resolve_out(ns.out_dir)
    os.makedirs(out_dir, exist_ok=True)

    gen = GeneratorConfig(
        num_classes=cfg["classes"],
        input_dim=cfg["dim"],
        per_subclass_count=cfg["per_subclass"],
        polarity_offset=cfg["alpha"],
        noise_sigma=cfg["sigma"],
        seed=cfg["seed"],
    )
    train_set = generate_synthetic(gen, split_tag="train")
    test_set = generate_synthetic(gen, split_tag="test")
    train_path = os.path.join(out_dir, "train.jsonl")
    test_path = os.path.join(out_dir, "test.jsonl")
    save_jsonl(train_path, train_set)
    save_jsonl(test_path, test_set)

    base = dict(TRAIN_DEFAULTS)
    for key in base:
        if key in cfg:
            base[key] = cfg[key]

    outputs = [train_path, test_path]
    reports = []
    for mode in ("two-stage", "adacos", "triplet", "softmax"):
        run_cfg = _train_config_from_ns({**base, "mode": mode}, train_set.input_dim)
        if mode == "two-stage":
            params, state, train_rep = train_two_stage(train_set, run_cfg)
        else:
            params, state, train_rep = train_baseline(train_set, run_cfg)
        model_path = os.path.join(out_dir, f"model_{mode}.json")
        _save_model(model_path, params, state, train_rep)
        outputs.append(model_path)

        centroids = compute_centroids(params, train_set)
        rep = mae_report(
            params, centroids, test_set, model_tag=mode, num_threads=cfg["threads"]
        )
        reports.append(rep)
        print(f"{mode}: average MAE {rep.average_mae:.4f}")

    table = format_mae_table(reports)
    print(table)
    report_path = os.path.join(out_dir, "bench_report.json")
    _write_json_atomic(
        report_path,
        {
            "models": [r.to_dict() for r in reports],
            "table": table,
            "config": {k: cfg[k] for k in BENCH_DEFAULTS},
        },
    )
    outputs.append(report_path)
    _write_manifest(
        "bench",
        os.path.join(out_dir, "bench.json"),
        {k: cfg[k] for k in BENCH_DEFAULTS},
        inputs=[],
        outputs=outputs,
        seed=cfg["seed"],
        started=started,
    )
    return EXIT_OK


# ----------------------------------------------------------------- parser


def _add_mnli_flag(p) -> None:
    p.add_argument(
        "--mnli-label-map",
        action="store_true",
        help="map entailment/contradiction/neutral labels to polarities",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="hiersphere", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic hierarchical dataset")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--per-subclass", type=int, required=True)
    p.add_argument("--alpha", type=float, default=1.0, help="polarity offset")
    p.add_argument("--sigma", type=float, default=0.3, help="noise level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("dedup", help="drop near-duplicate texts by tf-idf cosine")
    p.add_argument("--data", required=True, help='JSONL of {"id", "text"}')
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None, help="JSON removal report path")
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("train", help="train a model (two-stage or a baseline)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="JSON file of flag defaults")
    # SUPPRESS keeps unset flags out of the namespace so the config file can
    # fill them; precedence is flags > config > defaults
    p.add_argument("--mode", choices=TRAIN_MODES, default=argparse.SUPPRESS)
    p.add_argument("--t", type=float, default=argparse.SUPPRESS, help="null band half-width")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--stage2-epochs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--batch-size", type=int, default=argparse.SUPPRESS)
    p.add_argument("--learning-rate", type=float, default=argparse.SUPPRESS)
    p.add_argument("--stage2-learning-rate", type=float, default=argparse.SUPPRESS)
    p.add_argument(
        "--hidden-dims", default=argparse.SUPPRESS, help="comma-separated, e.g. 128,64"
    )
    p.add_argument("--embed-dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--activation", choices=("tanh", "relu"), default=argparse.SUPPRESS)
    p.add_argument("--no-shuffle", dest="shuffle", action="store_false", default=argparse.SUPPRESS)
    p.add_argument("--triplet-margin", type=float, default=argparse.SUPPRESS)
    p.add_argument(
        "--neutral-pairs-positive",
        action="store_true",
        default=argparse.SUPPRESS,
        help="treat same-class neutral pairs as positive pairs",
    )
    p.add_argument(
        "--mnli-label-map", action="store_true", default=argparse.SUPPRESS
    )
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("embed", help="embed a dataset with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    _add_mnli_flag(p)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("eval", help="centroid scoring and MAE report")
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--tag", default="model")
    p.add_argument("--label-mode", choices=("auto", "hard", "soft"), default="auto")
    p.add_argument("--unsigned", action="store_true", help="unsigned score variant")
    p.add_argument("--threads", type=int, default=1)
    _add_mnli_flag(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("viz", help="MDS scatter of embeddings as SVG")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None, help="also write point coordinates as CSV")
    p.add_argument("--max-points", type=int, default=0, help="0 = plot all")
    p.add_argument("--seed", type=int, default=0, help="subsampling seed")
    _add_mnli_flag(p)
    p.set_defaults(func=_cmd_viz)

    p = sub.add_parser("bench", help="compare all training modes on one synthetic set")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config", default=None, help="JSON file of flag defaults")
    p.add_argument("--classes", type=int, default=argparse.SUPPRESS)
    p.add_argument("--dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--per-subclass", type=int, default=argparse.SUPPRESS)
    p.add_argument("--alpha", type=float, default=argparse.SUPPRESS)
    p.add_argument("--sigma", type=float, default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--t", type=float, default=argparse.SUPPRESS)
    p.add_argument("--epochs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--stage2-epochs", type=int, default=argparse.SUPPRESS)
    p.add_argument("--batch-size", type=int, default=argparse.SUPPRESS)
    p.add_argument("--learning-rate", type=float, default=argparse.SUPPRESS)
    p.add_argument("--stage2-learning-rate", type=float, default=argparse.SUPPRESS)
    p.add_argument("--hidden-dims", default=argparse.SUPPRESS)
    p.add_argument("--embed-dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--activation", choices=("tanh", "relu"), default=argparse.SUPPRESS)
    p.add_argument("--triplet-margin", type=float, default=argparse.SUPPRESS)
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    p.set_defaults(func=_cmd_bench)

    return parser


def run_command(argv: list[str]) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help exits 0 inside argparse
        return int(exc.code or 0)

    try:
        return ns.func(ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
