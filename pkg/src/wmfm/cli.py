"""Command-line entry point: ``wmfm <command> [options]``.

Every command takes an optional JSON config (validated against the bundled
schema); flags override config keys. Each run writes into its own output
directory together with ``config.json``, the fully resolved configuration,
and refuses to reuse a non-empty directory unless ``--force`` is given.
Failures exit nonzero with a JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__

log = logging.getLogger("wmfm")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
COMMANDS = ("gen", "pretrain", "adapt", "baseline", "eval", "retrieve", "gradcheck", "sweep")
DEFAULT_DATASET = {"n_records": 4000, "split_ratios": [0.5, 0.25, 0.25], "noise": None}
DEFAULT_SWEEP = {"kind": "data", "fractions": [0.2, 0.4, 0.6, 0.8, 1.0], "test_snrs": [0, 5, 10, 15, 20, None], "seeds": [0, 1, 2]}


class CliError(Exception):
    """User-facing failure with a stable error kind."""

    def __init__(self, kind, message, **extra):
        super().__init__(message)
        self.kind = kind
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


# ---------------------------------------------------------------- config


def load_schema():
    return json.loads(resources.files("wmfm").joinpath("config_schema.json").read_text())


def validate_config(cfg):
    """Raise :class:`CliError` naming the offending key on the first schema violation."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        key = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise CliError("config", f"config key '{key}': {e.message}", key=key)


def read_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise CliError("missing_file", f"config file not found: {p}", path=str(p))
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CliError("config", f"{p}: invalid JSON ({exc})", path=str(p)) from None
    validate_config(cfg)
    return cfg


def _train_config(cfg, args, epochs_key="epochs"):
    from .trainer import TrainConfig

    d = dict(cfg.get("train", {}))
    if getattr(args, "seed", None) is not None:
        d["seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        d[epochs_key] = args.epochs
    if getattr(args, "label_fraction", None) is not None:
        d["label_fraction"] = args.label_fraction
    try:
        return TrainConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise CliError("config", f"train: {exc}") from None


def _encoder_config(cfg, scenario, train_cfg):
    from .model import EncoderConfig

    d = {"dtype": train_cfg.dtype, **cfg.get("encoder", {})}
    try:
        return EncoderConfig.for_scenario(scenario, **d)
    except (TypeError, ValueError) as exc:
        raise CliError("config", f"encoder: {exc}") from None


# ---------------------------------------------------------------- run directories


def prepare_out(out, force):
    if out is None:
        raise CliError("usage", "--out is required for this command")
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise CliError("output_exists", f"output path exists and is not a directory: {out}", path=str(out))
    if out.exists() and any(out.iterdir()) and not force:
        raise CliError("output_exists", f"output directory {out} is not empty; pass --force to overwrite", path=str(out))
    out.mkdir(parents=True, exist_ok=True)
    return out


def echo_config(out, command, args, **sections):
    arg_dict = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("func", "force")}
    payload = {"command": command, "version": __version__, "args": arg_dict, **sections}
    (out / "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _need_file(path, what):
    if path is None:
        raise CliError("usage", f"--{what} is required for this command")
    p = Path(path)
    if not p.exists():
        raise CliError("missing_file", f"{what} not found: {p}", path=str(p))
    return p


def _load_data(path):
    from .datagen import load_dataset

    p = _need_file(path, "data")
    try:
        return load_dataset(p)
    except FileNotFoundError as exc:
        raise CliError("missing_file", str(exc), path=str(p)) from None


# ---------------------------------------------------------------- commands


def cmd_gen(args, cfg):
    from .datagen import ConfigError, NoiseSpec, ScenarioConfig, generate_dataset

    ds_cfg = {**DEFAULT_DATASET, **cfg.get("dataset", {})}
    if args.n_records is not None:
        ds_cfg["n_records"] = args.n_records
    seed = 0 if args.seed is None else args.seed
    try:
        scenario = ScenarioConfig.from_dict(cfg.get("scenario", {}))
        noise = NoiseSpec.parse(ds_cfg["noise"])
    except ConfigError as exc:
        raise CliError("config", f"scenario: {exc}") from None
    out = prepare_out(args.out, args.force)
    ds = generate_dataset(scenario, ds_cfg["n_records"], noise, tuple(ds_cfg["split_ratios"]), seed, out_dir=out)
    echo_config(out, "gen", args, scenario=scenario.to_dict(), dataset={**ds_cfg, "noise": noise.to_dict(), "seed": seed})
    return {"out": str(out), "counts": ds.manifest["counts"]}


def cmd_pretrain(args, cfg):
    from .model import WMFM
    from .trainer import pretrain

    ds = _load_data(args.data)
    tc = _train_config(cfg, args, "epochs")
    enc = _encoder_config(cfg, ds.cfg, tc)
    out = prepare_out(args.out, args.force)
    echo_config(out, "pretrain", args, encoder=enc.to_dict(), train=tc.to_dict(), dataset=str(args.data))
    res = pretrain(WMFM(enc, seed=tc.seed), ds.train, ds.val, tc, out_dir=out)
    last = res.runlog[-1] if len(res.runlog) else {}
    summary = {
        "initial_val_loss": res.initial_val_loss, "best_epoch": res.best_epoch, "best_val_loss": res.best_val_loss,
        "final_train_loss": last.get("train_loss"), "final_val_mi": last.get("val_mi"), "epochs": tc.epochs,
    }
    _write_json(out / "metrics.json", summary)
    return {"out": str(out), **summary}


def cmd_adapt(args, cfg):
    from .trainer import adapt

    ds = _load_data(args.data)
    ckpt = _need_file(args.checkpoint, "checkpoint")
    tc = _train_config(cfg, args, "adapt_epochs")
    out = prepare_out(args.out, args.force)
    echo_config(out, "adapt", args, train=tc.to_dict(), dataset=str(args.data), checkpoint=str(ckpt))
    res = adapt(args.task, str(ckpt), ds, tc, out_dir=out)
    return {"out": str(out), **res.summary()}


def cmd_baseline(args, cfg):
    from .trainer import e2e_baseline

    ds = _load_data(args.data)
    tc = _train_config(cfg, args, "adapt_epochs")
    enc = _encoder_config(cfg, ds.cfg, tc)
    out = prepare_out(args.out, args.force)
    echo_config(out, "baseline", args, encoder=enc.to_dict(), train=tc.to_dict(), dataset=str(args.data))
    res = e2e_baseline(args.task, ds, tc, out_dir=out, encoder_cfg=enc)
    return {"out": str(out), **res.summary()}


def cmd_eval(args, cfg):
    from .datagen import NoiseSpec
    from .downstream import FocalConfig, LocalizationWeights, evaluate_localization, evaluate_los, linear_probe_check
    from .model import WMFM
    from .trainer import contrastive_eval, embed_split, load_head

    ds = _load_data(args.data)
    ckpt = _need_file(args.checkpoint, "checkpoint")
    model = WMFM.load(ckpt)[0]
    split = ds[args.split]
    tc = _train_config(cfg, args)
    if args.head is not None:
        head, meta = load_head(_need_file(args.head, "head"))
        z = embed_split(model, split, NoiseSpec(), 0).astype(np.dtype(meta["dtype"]))
        if meta["task"] == "los":
            metrics = evaluate_los(head, z, split.los, FocalConfig.from_labels(ds.train.los, gamma=tc.focal_gamma))
        else:
            metrics = evaluate_localization(head, z, split, ds.cfg, LocalizationWeights(*tc.loc_weights))
        result = {"task": meta["task"], "split": args.split, "metrics": metrics}
    else:
        c = contrastive_eval(model, split.unlabeled(), tc.temperature, tc.batch_size)
        probe = linear_probe_check(
            embed_split(model, ds.train), ds.train.bs_id, embed_split(model, split), split.bs_id, seed=tc.seed
        )
        result = {
            "task": "contrastive", "split": args.split, "metrics": c,
            "mi_check": abs(c["mi"] + c["loss"] - c["log_n"]),
            "bs_probe_accuracy": probe.accuracy, "bs_probe_chance": probe.chance,
        }
    if args.out is not None:
        out = prepare_out(args.out, args.force)
        echo_config(out, "eval", args, train=tc.to_dict())
        _write_json(out / "metrics.json", result)
    return result


def cmd_retrieve(args, cfg):
    from .retrieval import embed_pairs, pair_similarity_histogram, retrieval_table, write_embeddings

    ds = _load_data(args.data)
    ckpt = _need_file(args.checkpoint, "checkpoint")
    out = prepare_out(args.out, args.force)
    echo_config(out, "retrieve", args)
    emb = embed_pairs(str(ckpt), ds[args.split])
    table = retrieval_table(emb)
    hist = pair_similarity_histogram(emb, seed=0 if args.seed is None else args.seed, csv_path=out / "similarity.csv")
    table["similarity"] = hist["summary"]
    _write_json(out / "retrieval.json", table)
    if args.export:
        write_embeddings(emb, out / "embeddings.csv")
    return table


def cmd_gradcheck(args, cfg):
    from .checks import run_gradient_checks

    outcomes = run_gradient_checks(seed=0 if args.seed is None else args.seed)
    report = {"passed": all(o.passed for o in outcomes), "checks": [o.to_dict() for o in outcomes]}
    if args.out is not None:
        out = prepare_out(args.out, args.force)
        echo_config(out, "gradcheck", args)
        _write_json(out / "gradcheck.json", report)
    if not report["passed"]:
        failed = [o.name for o in outcomes if not o.passed]
        raise CliError("gradcheck_failed", f"gradient checks failed: {', '.join(failed)}", failed=failed)
    return report


def _noise_worker(name, checkpoint, noise, data, train_dict, test_snrs, seeds):
    """One model of the noise sweep: adapt a localization head, then score it at every test SNR."""
    from .datagen import NoiseSpec, load_dataset
    from .diffcore import load_checkpoint
    from .model import WMFM
    from .trainer import TrainConfig, _replace, adapt, localization_error_at_snr

    ds = load_dataset(data)
    model = WMFM.load(checkpoint)[0]
    if noise is None:
        noise = load_checkpoint(checkpoint)[1].get("train_config", {}).get("noise")
    tc = _replace(TrainConfig.from_dict(train_dict), noise=NoiseSpec.parse(noise).to_dict())
    head = adapt("loc", model, ds, tc).head
    return name, [[localization_error_at_snr(model, head, ds, snr, s) for snr in test_snrs] for s in seeds]


def _fraction_worker(checkpoint, data, train_dict, fraction, out_dir):
    from .datagen import load_dataset
    from .trainer import TrainConfig, sweep_data_efficiency

    return sweep_data_efficiency(checkpoint, load_dataset(data), [fraction], TrainConfig.from_dict(train_dict), out_dir=out_dir)[0]


def _run_jobs(fn, calls, jobs):
    # Tapes live in a process-global stack, so parallel runs use processes, never threads.
    if jobs <= 1 or len(calls) <= 1:
        return [fn(*c) for c in calls]
    with ProcessPoolExecutor(max_workers=min(jobs, len(calls))) as pool:
        futures = [pool.submit(fn, *c) for c in calls]
        return [f.result() for f in futures]


def cmd_sweep(args, cfg):
    from .trainer import write_noise_csv, write_rows_csv

    sw = {**DEFAULT_SWEEP, **cfg.get("sweep", {})}
    if args.kind is not None:
        sw["kind"] = args.kind
    data = _need_file(args.data, "data")
    _load_data(data)
    tc = _train_config(cfg, args, "adapt_epochs")
    if args.jobs < 1:
        raise CliError("usage", "--jobs must be >= 1")
    if sw["kind"] == "noise":
        models = list(sw.get("models", []))
        for spec in args.model or []:
            name, sep, path = spec.partition("=")
            if not sep or not name or not path:
                raise CliError("usage", f"--model expects NAME=PATH, got {spec!r}")
            models.append({"name": name, "checkpoint": path})
        if not models:
            raise CliError("usage", "noise sweep needs at least one model (--model NAME=PATH or sweep.models)")
        for m in models:
            _need_file(m["checkpoint"], "checkpoint")
        out = prepare_out(args.out, args.force)
        echo_config(out, "sweep", args, sweep={**sw, "models": models}, train=tc.to_dict())
        calls = [
            (m["name"], str(m["checkpoint"]), m.get("noise"), str(data), tc.to_dict(), sw["test_snrs"], sw["seeds"])
            for m in models
        ]
        result = {name: np.asarray(errs) for name, errs in _run_jobs(_noise_worker, calls, args.jobs)}
        write_noise_csv(result, sw["test_snrs"], sw["seeds"], out / "noise_sweep.csv")
        return {"out": str(out), "kind": "noise", "mean_distance": {k: v.mean(axis=0).tolist() for k, v in result.items()}}
    ckpt = _need_file(args.checkpoint, "checkpoint")
    out = prepare_out(args.out, args.force)
    echo_config(out, "sweep", args, sweep=sw, train=tc.to_dict())
    calls = [(str(ckpt), str(data), tc.to_dict(), float(f), str(out / f"fraction_{f:g}")) for f in sw["fractions"]]
    rows = _run_jobs(_fraction_worker, calls, args.jobs)
    write_rows_csv(rows, out / "data_efficiency.csv")
    return {"out": str(out), "kind": "data", "rows": rows}


# ---------------------------------------------------------------- entry point


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes (sweep only)")
    common.add_argument("--epochs", type=int, help="override the epoch count for this command")

    p = _Parser(prog="wmfm", description="Contrastive channel/camera pretraining and frozen-encoder adaptation.")
    p.add_argument("--version", action="version", version=f"wmfm {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--n-records", type=int)
    g.set_defaults(func=cmd_gen)

    g = sub.add_parser("pretrain", parents=[common], help="contrastive pretraining")
    g.add_argument("--data", required=True)
    g.set_defaults(func=cmd_pretrain)

    for name, fn, text in (("adapt", cmd_adapt, "train a head on frozen encoders"), ("baseline", cmd_baseline, "end-to-end supervised baseline")):
        g = sub.add_parser(name, parents=[common], help=text)
        g.add_argument("--task", choices=("los", "loc"), required=True)
        g.add_argument("--data", required=True)
        g.add_argument("--label-fraction", type=float)
        if name == "adapt":
            g.add_argument("--checkpoint", required=True)
        g.set_defaults(func=fn)

    g = sub.add_parser("eval", parents=[common], help="score a checkpoint (and optionally a head) on a split")
    g.add_argument("--data", required=True)
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--head")
    g.add_argument("--split", choices=("train", "val", "test"), default="test")
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("retrieve", parents=[common], help="cross-modal retrieval and similarity histogram")
    g.add_argument("--data", required=True)
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--split", choices=("train", "val", "test"), default="test")
    g.add_argument("--export", action="store_true", help="also write embeddings.csv")
    g.set_defaults(func=cmd_retrieve)

    g = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    g.set_defaults(func=cmd_gradcheck)

    g = sub.add_parser("sweep", parents=[common], help="data-efficiency or noise-robustness sweep")
    g.add_argument("--data", required=True)
    g.add_argument("--kind", choices=("noise", "data"))
    g.add_argument("--checkpoint", help="pretrained checkpoint (data sweep)")
    g.add_argument("--model", action="append", help="NAME=PATH pretrained checkpoint (noise sweep, repeatable)")
    g.set_defaults(func=cmd_sweep)
    return p


def _setup_logging():
    level = os.environ.get("WMFM_LOG_LEVEL", "error").lower()
    if level not in LOG_LEVELS:
        raise CliError("config", f"WMFM_LOG_LEVEL must be one of {sorted(LOG_LEVELS)}, got {level!r}", key="WMFM_LOG_LEVEL")
    logging.basicConfig(level=LOG_LEVELS[level], stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def main(argv=None):
    command = None
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        command = args.command
        cfg = read_config(args.config)
        result = args.func(args, cfg)
        print(json.dumps(result, indent=2, sort_keys=True, default=_jsonable))
        return 0
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc), "command": command, **exc.extra}
        code = 2 if exc.kind in ("usage", "config") else 1
    except FileNotFoundError as exc:
        err = {"error": "missing_file", "message": str(exc), "command": command, "path": exc.filename}
        code = 1
    except Exception as exc:  # noqa: BLE001 - every failure must reach stderr as JSON
        log.debug("unhandled error", exc_info=True)
        err = {"error": type(exc).__name__, "message": str(exc), "command": command}
        code = 1
    print(json.dumps(err, sort_keys=True, default=str), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
