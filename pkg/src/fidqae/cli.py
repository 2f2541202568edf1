"""Command-line entry point: ``fidqae <command> [options] [--section.key VALUE ...]``.

Commands share one JSON run configuration.  Any field can be overridden with
a flag of the same dotted name, e.g. ``--train.epochs 5`` or
``--noise.p_grid "[0, 0.5, 1]"`` (values are parsed as JSON when possible).

Exit codes: 0 success, 2 usage or input error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import classify, data, hwfeat, io, model, noise, train

log = logging.getLogger("fidqae")

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3

DEFAULT_CONFIG: dict[str, Any] = {
    "dataset": "creditcard.csv",
    "label_column": "Class",
    "seed": 0,
    "out": "runs",
    "threads": None,
    "model": {"n_qubits": 4, "n_trash": 1},
    "data": {
        "k": 16,
        "scale_all": False,
        "train_nonfraud_count": 2000,
        "test_nonfraud_count": 1000,
        "test_fraud_fraction": 1.0,
    },
    "train": {k: v for k, v in train.TrainConfig().to_dict().items() if k != "seed"},
    "thresholds": list(classify.DEFAULT_THRESHOLDS),
    "prevalence": {"fractions": [0.2, 0.4, 0.6, 0.8]},
    "noise": {
        "channels": list(noise.CHANNELS),
        "p_grid": [float(p) for p in noise.DEFAULT_P_GRID],
        "placement": noise.DEFAULT_PLACEMENT,
        "thresholds": [float(t) for t in noise.NOISE_THRESHOLDS],
        "shots_p": 0.5,
        "shot_grid": list(noise.DEFAULT_SHOT_GRID),
    },
    "hw": {"reference": None, "holdout_fraction": 0.5},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _merge(base: dict, extra: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        name = prefix + key
        if key not in out:
            raise ConfigError(f"unknown config field {name!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config field {name!r} must be an object")
            out[key] = _merge(out[key], value, name + ".")
        else:
            out[key] = value
    return out


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(tokens: Sequence[str]) -> dict:
    """Turn ``--a.b VALUE`` / ``--a.b=VALUE`` tokens into a nested dict."""
    tree: dict = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        name, eq, value = tok[2:].partition("=")
        if not eq:
            value = next(it, None)
            if value is None:
                raise ConfigError(f"flag --{name} needs a value")
        node = tree
        *parents, leaf = name.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = _parse_value(value)
    return tree


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{p}: config must be a JSON object")
        cfg = _merge(cfg, doc)
    cfg = _merge(cfg, overrides)
    n = cfg["model"]["n_qubits"]
    if cfg["data"]["k"] != 2 ** n:
        raise ConfigError(f"data.k={cfg['data']['k']} must equal 2**model.n_qubits={2 ** n}")
    _validate(cfg)
    return cfg


def _validate(cfg) -> None:
    d, nz = cfg["data"], cfg["noise"]
    try:
        _layout(cfg)
        _train_config(cfg)
        data.SplitSpec(d["train_nonfraud_count"], d["test_nonfraud_count"],
                       d["test_fraud_fraction"], cfg["seed"])
        for kind in nz["channels"]:
            for p in nz["p_grid"]:
                noise.NoiseChannelSpec(kind, float(p))
        if nz["placement"] not in noise.PLACEMENTS:
            raise ValueError(f"noise.placement must be one of {noise.PLACEMENTS}")
        for t in list(cfg["thresholds"]) + list(nz["thresholds"]):
            if not 0.0 <= float(t) <= 1.0:
                raise ValueError(f"threshold {t} outside [0, 1]")
        if any(int(s) < 1 for s in nz["shot_grid"]):
            raise ValueError("shot counts must be >= 1")
        if cfg["threads"] is not None and int(cfg["threads"]) < 1:
            raise ValueError("threads must be >= 1")
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _layout(cfg) -> model.CircuitLayout:
    return model.CircuitLayout(cfg["model"]["n_qubits"], cfg["model"]["n_trash"])


def _train_config(cfg) -> train.TrainConfig:
    return train.TrainConfig(seed=cfg["seed"], **cfg["train"])


def _meta(cfg) -> dict:
    return {"config_hash": io.config_hash(cfg), "seed": cfg["seed"]}


def _out(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# pipeline helpers


def _load_reduced(cfg) -> data.TransactionTable:
    path = Path(cfg["out"]) / "reduced.csv"
    if not path.is_file():
        raise data.DataError(f"prepared data not found: {path} (run `prepare` first)")
    return data.load_csv(path, cfg["label_column"])


def _splits(cfg) -> data.Splits:
    d = cfg["data"]
    spec = data.SplitSpec(d["train_nonfraud_count"], d["test_nonfraud_count"],
                          d["test_fraud_fraction"], cfg["seed"])
    return data.make_splits(_load_reduced(cfg), spec)


def _encoded(table: data.TransactionTable) -> tuple[np.ndarray, np.ndarray]:
    states, keep = data.encode_table(table)
    return states, table.row_ids[keep]


def _params(cfg, path: str | None):
    p = Path(path) if path else Path(cfg["out"]) / "params.json"
    if not p.is_file():
        raise data.DataError(f"trained parameters not found: {p} (run `train` first)")
    return train.load_params(p)


def _test_set(cfg):
    sp = _splits(cfg)
    nf, nf_ids = _encoded(sp.test_nonfraud)
    fr, fr_ids = _encoded(sp.test_fraud)
    return nf, nf_ids, fr, fr_ids


def _threads(cfg) -> int:
    return cfg["threads"] or os.cpu_count() or 1


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(cfg) -> int:
    table = data.load_csv(cfg["dataset"], cfg["label_column"])
    report, reduced = data.prepare(table, cfg["data"]["k"], cfg["data"]["scale_all"])
    out = _out(cfg)
    df = reduced.to_frame()
    io.write_csv(out / "reduced.csv", list(df.columns), df.itertuples(index=False), _meta(cfg))
    io.write_json(out / "selection.json", report.to_dict())
    print(f"rows={len(reduced)} non_fraud={len(reduced) - reduced.n_fraud} "
          f"fraud={reduced.n_fraud} dropped={table.dropped_rows}")
    print("selected: " + ", ".join(report.selected))
    return EXIT_OK


def cmd_train(cfg) -> int:
    layout = _layout(cfg)
    tc = _train_config(cfg)
    sp = _splits(cfg)
    x_train, _ = _encoded(sp.train_nonfraud)
    x_nf, _ = _encoded(sp.test_nonfraud)
    x_fr, _ = _encoded(sp.test_fraud)
    theta, hist = train.train_loop(tc, x_train, x_nf, x_fr, layout,
                                   train_labels=sp.train_nonfraud.labels)
    out = _out(cfg)
    train.save_params(out / "params.json", theta, layout, tc, tc.epochs)
    train.write_history(out / "history.csv", hist, _meta(cfg))
    print(f"final train_loss={hist.train_loss[-1]:.6f} "
          f"test_nonfraud_fidelity={hist.test_nonfraud_fidelity_mean[-1]:.6f} "
          f"test_fraud_fidelity={hist.test_fraud_fidelity_mean[-1]:.6f}")
    return EXIT_OK


def cmd_evaluate(cfg, params: str | None) -> int:
    theta, layout, _ = _params(cfg, params)
    nf, nf_ids, fr, fr_ids = _test_set(cfg)
    f_nf = model.trash_fidelities(theta, nf, layout)
    f_fr = model.trash_fidelities(theta, fr, layout)
    records = [classify.FidelityRecord(float(f), classify.NON_FRAUD, str(i)) for f, i in zip(f_nf, nf_ids)]
    records += [classify.FidelityRecord(float(f), classify.FRAUD, str(i)) for f, i in zip(f_fr, fr_ids)]
    reports = classify.threshold_sweep(records, cfg["thresholds"])
    best = classify.best_report(reports, "f1")
    stats = classify.distribution_stats(records)
    out = _out(cfg)
    meta = _meta(cfg)
    classify.write_records_csv(out / "fidelities.csv", records, meta)
    classify.write_metrics_csv(out / "metrics.csv", reports, meta)
    io.write_json(out / "metrics.json", {"reports": reports, "best_f1": best, **meta})
    io.write_json(out / "distribution.json", stats)
    for r in reports:
        flag = f" degenerate={','.join(r.degenerate)}" if r.degenerate else ""
        print(f"tau={r.threshold:.2f} acc={r.accuracy:.4f} prec={r.precision:.4f} "
              f"rec={r.recall:.4f} f1={r.f1:.4f} mcc={r.mcc:.4f}{flag}")
    print(f"mean fidelity non-fraud={stats.mean_nonfraud:.4f} fraud={stats.mean_fraud:.4f}")
    return EXIT_OK


def cmd_sweep(cfg, kind: str, params: str | None) -> int:
    theta, layout, _ = _params(cfg, params)
    nf, _, fr, _ = _test_set(cfg)
    out = _out(cfg)
    meta = _meta(cfg)
    nz = cfg["noise"]
    if kind == "prevalence":
        f_nf = model.trash_fidelities(theta, nf, layout)
        f_fr = model.trash_fidelities(theta, fr, layout)
        blocks = classify.prevalence_sweep(f_nf, f_fr, cfg["prevalence"]["fractions"],
                                           cfg["thresholds"], cfg["seed"])
        classify.write_prevalence_csv(out / "prevalence.csv", blocks, meta)
        for b in blocks:
            best = classify.best_report(b.reports, "f1")
            print(f"fraction={b.fraction:.2f} n_fraud={b.n_fraud} best_tau={best.threshold:.2f} "
                  f"f1={best.f1:.4f} mcc={best.mcc:.4f}")
        return EXIT_OK

    states = np.vstack([nf, fr])
    labels = np.r_[np.zeros(len(nf), int), np.ones(len(fr), int)]
    if kind == "noise":
        results = noise.noise_sweep(theta, layout, states, labels, nz["channels"], nz["p_grid"],
                                    nz["thresholds"], nz["placement"], _threads(cfg))
        noise.write_noise_csv(out / "noise.csv", results, {**meta, "placement": nz["placement"]})
        for res in results:
            print(f"{res.kind:<18} " + " ".join(f"{f:.3f}" for f in res.f1))
    else:
        rows = noise.shots_sweep(theta, layout, states, labels, nz["channels"], nz["shots_p"],
                                 nz["shot_grid"], nz["thresholds"], cfg["seed"], nz["placement"],
                                 _threads(cfg))
        noise.write_shots_csv(out / "shots.csv", rows, {**meta, "placement": nz["placement"]})
        for r in rows:
            print(f"{r.kind:<18} shots={r.shots:<5d} f1={r.report.f1:.4f}")
    return EXIT_OK


def _report_line(name: str, r: classify.MetricsReport) -> str:
    return (f"{name}: acc={r.accuracy:.4f} rec={r.recall:.4f} prec={r.precision:.4f} "
            f"f1={r.f1:.4f} mcc={r.mcc:.4f}")


def cmd_hw_classify(cfg, counts_path: str) -> int:
    jobs = hwfeat.load_counts_json(counts_path)
    ref = cfg["hw"]["reference"]
    full = hwfeat.fit_classifier(jobs, ref)
    in_sample = hwfeat.evaluate_jobs(jobs, full)
    fit_part, held = hwfeat.split_holdout(jobs, cfg["hw"]["holdout_fraction"], cfg["seed"])
    part = hwfeat.fit_classifier(fit_part, ref)
    held_out = hwfeat.evaluate_jobs(held, part)
    out = _out(cfg)
    meta = _meta(cfg)
    io.write_json(out / "hw_model.json", {"in_sample": full, "held_out": part, **meta})
    io.write_json(out / "hw_metrics.json", {
        "in_sample": {"n_jobs": len(jobs), **in_sample.to_dict()},
        "held_out": {"n_fit": len(fit_part), "n_eval": len(held), **held_out.to_dict()},
        **meta,
    })
    print(_report_line("in-sample", in_sample))
    print(_report_line("held-out", held_out))
    return EXIT_OK


def cmd_make_synthetic(cfg, rows: int, fraud: int) -> int:
    df = data.make_synthetic_transactions(rows, fraud, seed=cfg["seed"])
    path = Path(cfg["dataset"])
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    print(f"wrote {len(df)} rows to {path}")
    return EXIT_OK


def cmd_synth_counts(cfg, params: str | None, jobs: int, kind: str, p: float, shots: int,
                     dest: str) -> int:
    theta, layout, _ = _params(cfg, params)
    nf, _, fr, _ = _test_set(cfg)
    half = jobs // 2
    if half < 1 or half > min(len(nf), len(fr)):
        raise data.DataError(f"cannot draw {half} jobs per class from the test partitions")
    rng = np.random.default_rng([cfg["seed"], 3])
    states = np.vstack([nf[rng.choice(len(nf), half, replace=False)],
                        fr[rng.choice(len(fr), half, replace=False)]])
    labels = [0] * half + [1] * half
    records = hwfeat.make_synthetic_jobs(theta, layout, states, labels,
                                         noise.NoiseChannelSpec(kind, p),
                                         cfg["noise"]["placement"], shots, cfg["seed"])
    hwfeat.write_counts_json(dest, records)
    print(f"wrote {len(records)} jobs to {dest}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--dataset", help="input CSV path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fidqae", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[common], help="scale, select features, cache reduced CSV")
    sub.add_parser("train", parents=[common], help="train the encoder on non-fraud rows")
    ev = sub.add_parser("evaluate", parents=[common], help="threshold metrics on the test split")
    ev.add_argument("--params")
    sw = sub.add_parser("sweep", parents=[common], help="prevalence, noise or shot-count sweep")
    sw.add_argument("--kind", required=True, choices=("prevalence", "noise", "shots"))
    sw.add_argument("--params")
    hw = sub.add_parser("hw-classify", parents=[common], help="fidelity/entropy classifier on counts")
    hw.add_argument("counts", help="counts JSON file")
    ms = sub.add_parser("make-synthetic", parents=[common], help="write a surrogate transaction CSV")
    ms.add_argument("--rows", type=int, default=20000, help="non-fraud rows")
    ms.add_argument("--fraud", type=int, default=492, help="fraud rows")
    sc = sub.add_parser("synth-counts", parents=[common], help="simulate a labelled counts file")
    sc.add_argument("--params")
    sc.add_argument("--jobs", type=int, default=200)
    sc.add_argument("--channel", default="depolarizing", choices=noise.CHANNELS)
    sc.add_argument("--p", type=float, default=0.3)
    sc.add_argument("--shots", type=int, default=1024)
    sc.add_argument("--dest", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = parse_overrides(extra)
        for key in ("seed", "out", "threads", "dataset"):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        cfg = load_config(args.config, overrides)
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, args.params)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.kind, args.params)
        if args.command == "hw-classify":
            return cmd_hw_classify(cfg, args.counts)
        if args.command == "make-synthetic":
            return cmd_make_synthetic(cfg, args.rows, args.fraud)
        return cmd_synth_counts(cfg, args.params, args.jobs, args.channel, args.p, args.shots,
                                args.dest)
    except (ConfigError, data.DataError, hwfeat.CountsFileError, train.FraudInTrainingError,
            model.ZeroNormError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
