"""``ssvq`` command line: compress, train, analyze-grads, simulate, report.

Exit codes are 0 on success, 2 for usage errors (bad flags, invalid
configuration) and 1 for runtime failures (missing files, corrupt data,
numerical problems). ``SSVQ_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import hwsim, storage
from .core import rng_for
from .errors import SSVQError
from .freeze import FreezeConfig
from .signsplit import ssvq_decode, ssvq_encode
from .train import (
    ToyNet,
    TrainConfig,
    forward_backward,
    make_task,
    pretrain,
    qat_train_ssvq,
    qat_train_vq,
    train_float,
    write_jsonl,
)
from .vq import VQModel, gradient_dominance_report, vq_decode, vq_encode

log = logging.getLogger("ssvq")


class UsageError(Exception):
    """Invalid configuration detected before any work starts."""


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {text!r}") from None


def _csv_out(rows, fieldnames, fh=None):
    writer = csv.DictWriter(fh or sys.stdout, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


# -- compress -----------------------------------------------------------------


def cmd_compress(args) -> int:
    matrices = storage.read_weights(args.input)
    if not matrices:
        raise SSVQError("input file holds no matrices")
    models, rows = [], []
    for i, W in enumerate(matrices):
        rng = rng_for(args.seed, f"clustering/{i}")
        if args.method == "vq":
            m = vq_encode(W, args.k, args.d, rng)
            W_hat = vq_decode(m)
        else:
            m = ssvq_encode(W, args.k, args.d, args.alpha, rng)
            W_hat = ssvq_decode(m)
        q = storage.quantize_model(m)
        models.append(q)
        budget = q.budget()
        rows.append({
            "layer": i, "O": q.O, "I": q.I, "method": q.method, "d": q.d, "K": q.K,
            "payload_bits": budget.compressed,
            "cr": budget.original / budget.compressed,
            "mse": float(np.mean((W - W_hat) ** 2)),
            "mse_stored": float(np.mean((W - q.decode()) ** 2)),
        })
    data = storage.write_container(args.out, models, aligned=args.aligned)
    orig = sum(r["O"] * r["I"] * 32 for r in rows)
    payload = sum(r["payload_bits"] for r in rows)
    n = sum(r["O"] * r["I"] for r in rows)
    rows.append({
        "layer": "total", "O": "", "I": "", "method": args.method, "d": args.d, "K": args.k,
        "payload_bits": payload, "cr": orig / payload,
        "mse": sum(r["mse"] * r["O"] * r["I"] for r in rows) / n,
        "mse_stored": sum(r["mse_stored"] * r["O"] * r["I"] for r in rows) / n,
    })
    _csv_out(rows, list(rows[0]))
    log.info("wrote %d bytes to %s", len(data), args.out)
    return 0


# -- train --------------------------------------------------------------------


def _train_configs(args) -> tuple[TrainConfig, FreezeConfig | None]:
    try:
        cfg = TrainConfig(lr=args.lr, lr_signs=args.lr_signs, weight_decay=args.weight_decay,
                          batch_size=args.batch_size, steps=args.steps, seed=0,
                          eval_every=args.eval_every)
        fcfg = FreezeConfig(interval=args.freeze_interval, momentum=args.freeze_momentum,
                            t_start=args.threshold_start, t_end=args.threshold_end,
                            criterion=args.freeze_criterion, strict_ties=args.strict_ties,
                            enabled=not args.no_freeze)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc
    if args.method != "float" and (args.k < 1 or args.d < 1):
        raise UsageError("--k and --d must be positive")
    return cfg, fcfg


def _run_dir(args, seed: int) -> Path:
    tag = "float" if args.method == "float" else f"{args.method}-K{args.k}-d{args.d}"
    if args.method == "ssvq" and args.no_freeze:
        tag += "-nofreeze"
    return Path(args.out) / f"{tag}-seed{seed}"


def _save_checkpoint(path, result, meta):
    arrays = {"meta": np.array(json.dumps(meta))}
    for i, (W, b) in enumerate(zip(result.net.weights, result.net.biases)):
        arrays[f"W{i}"] = W
        arrays[f"b{i}"] = b
    for i, m in enumerate(result.models):
        arrays[f"codebook{i}"] = m.codebook
        arrays[f"assignments{i}"] = m.assignments
        if hasattr(m, "latent"):
            arrays[f"latent{i}"] = m.latent
            arrays[f"frozen{i}"] = m.frozen
    np.savez(path, **arrays)


def _train_one(args, cfg: TrainConfig, fcfg: FreezeConfig, seed: int) -> dict:
    cfg = TrainConfig(**{**asdict(cfg), "seed": seed})
    task = make_task(noise=args.task_noise, modes_per_class=args.task_modes,
                     spread=args.task_spread, seed=seed)
    pre = pretrain(task, seed, args.pretrain_steps)
    if args.method == "vq":
        result = qat_train_vq(pre.net, task, args.k, args.d, cfg)
    elif args.method == "ssvq":
        result = qat_train_ssvq(pre.net, task, args.k, args.d, args.alpha, cfg, fcfg)
    else:
        result = train_float(pre.net, task, cfg)

    run_dir = _run_dir(args, seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(result.trace, run_dir / "trace.jsonl")
    write_jsonl(result.freeze_log, run_dir / "freeze_log.jsonl")
    shapes = [tuple(W.shape) for W in result.net.weights[: len(result.models)]]
    cr = (storage.aggregate_cr(shapes, args.d, args.k, args.method)
          if result.models else 1.0)
    meta = {
        "method": args.method, "K": args.k, "d": args.d, "alpha": args.alpha, "seed": seed,
        "freeze": args.method == "ssvq" and not args.no_freeze,
        "train_config": asdict(cfg), "freeze_config": asdict(fcfg),
        "task": task.params, "pretrain_steps": args.pretrain_steps,
        "pretrain_val_acc": pre.final_val_acc, "cr": cr, **result.summary(),
    }
    with open(run_dir / "run.json", "w") as fh:
        json.dump(meta, fh, indent=2)
    if args.checkpoint:
        _save_checkpoint(run_dir / "checkpoint.npz", result, meta)
    log.info("seed %d: final val acc %.4f", seed, result.final_val_acc)
    return {"run": str(run_dir), "seed": seed, "final_val_acc": result.final_val_acc,
            "frozen_count": meta["frozen_count"]}


def cmd_train(args) -> int:
    cfg, fcfg = _train_configs(args)
    seeds = args.seeds if args.seeds is not None else [args.seed]
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_train_one, [args] * len(seeds), [cfg] * len(seeds),
                                 [fcfg] * len(seeds), seeds))
    else:
        rows = [_train_one(args, cfg, fcfg, s) for s in seeds]
    _csv_out(rows, ["run", "seed", "final_val_acc", "frozen_count"])
    return 0


# -- analyze-grads ------------------------------------------------------------


def cmd_analyze_grads(args) -> int:
    with np.load(args.checkpoint) as ck:
        meta = json.loads(str(ck["meta"]))
        arrays = {k: ck[k] for k in ck.files if k != "meta"}
    if meta["method"] != "vq":
        raise SSVQError("gradient dominance is defined for VQ checkpoints")
    n_layers = sum(1 for k in arrays if k.startswith("W"))
    net = ToyNet([arrays[f"W{i}"] for i in range(n_layers)], [arrays[f"b{i}"] for i in range(n_layers)])
    task = make_task(**meta["task"])
    rng = rng_for(args.seed, "analyze")
    idx = rng.choice(len(task.X_train), size=min(args.batch_size, len(task.X_train)), replace=False)
    _, gW, _ = forward_backward(net.weights, net.biases, task.X_train[idx], task.y_train[idx])
    rows = []
    i = 0
    while f"codebook{i}" in arrays:
        m = VQModel(arrays[f"codebook{i}"], arrays[f"assignments{i}"], net.weights[i].shape)
        rep = gradient_dominance_report(gW[i], m, args.top, args.bottom)
        for r in rep.rows():
            per = (rep.per_codeword_top if r["subset"] == "top" else rep.per_codeword_bottom)[r["fraction"]]
            rows.append({"layer": i, **r, "codewords": int(np.count_nonzero(~np.isnan(per)))})
        i += 1
    _csv_out(rows, ["layer", "subset", "fraction", "cosine", "codewords"])
    return 0


# -- simulate -----------------------------------------------------------------


def _jsonable(obj):
    from fractions import Fraction

    if isinstance(obj, Fraction):
        return {"num": obj.numerator, "den": obj.denominator, "value": float(obj)}
    raise TypeError(type(obj).__name__)


def cmd_simulate(args) -> int:
    cfg = hwsim.SimConfig()
    if args.sim_config:
        with open(args.sim_config) as fh:
            try:
                cfg = hwsim.SimConfig.from_dict(json.load(fh))
            except (ValueError, TypeError) as exc:
                raise UsageError(f"{args.sim_config}: {exc}") from exc
    if args.container:
        layers = storage.read_container(args.container)
        compressed = [hwsim.layer_from_quantized(q, args.tokens, f"layer{i}") for i, q in enumerate(layers)]
        baseline = [hwsim.layer_from_quantized(q, args.tokens, f"layer{i}", int8=True)
                    for i, q in enumerate(layers)]
    else:
        names = [n for n in args.preset.split(",") if n]
        baseline = hwsim.preset_layers(names, "int8", path=args.presets_file)
        compressed = hwsim.preset_layers(names, args.format, args.k, args.d, path=args.presets_file)
    base_stats = hwsim.simulate(baseline, cfg)
    comp_stats = hwsim.simulate(compressed, cfg)
    report = hwsim.speedup_report(list(zip(baseline, base_stats)), list(zip(compressed, comp_stats)), cfg)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for run, stats in (("baseline", base_stats), ("compressed", comp_stats)):
            for s in stats:
                out.write(json.dumps({"run": run, **s.record()}) + "\n")
        out.write(json.dumps({"summary": report["summary"]}, default=_jsonable) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# -- report -------------------------------------------------------------------


def _find_runs(paths) -> list[Path]:
    runs = []
    for p in map(Path, paths):
        if not p.exists():
            raise FileNotFoundError(f"no such directory: {p}")
        runs += sorted(p.rglob("run.json")) if p.is_dir() else [p]
    return runs


def cmd_report(args) -> int:
    runs = _find_runs(args.dirs)
    if not runs:
        raise SSVQError("no run.json files found")
    groups: dict[str, list[dict]] = {}
    for path in runs:
        with open(path) as fh:
            meta = json.load(fh)
        label = "float" if meta["method"] == "float" else f"{meta['method']}-K{meta['K']}-d{meta['d']}"
        if meta["method"] == "ssvq" and not meta.get("freeze", True):
            label += "-nofreeze"
        groups.setdefault(label, []).append(meta)
    baseline = args.baseline or next((g for g in groups if g.startswith("vq")), next(iter(groups)))
    if baseline not in groups:
        raise UsageError(f"baseline group {baseline!r} not among {sorted(groups)}")
    ref = float(np.mean([m["final_val_acc"] for m in groups[baseline]]))
    rows = []
    for label, metas in groups.items():
        acc = np.array([m["final_val_acc"] for m in metas])
        rows.append({
            "group": label, "method": metas[0]["method"], "K": metas[0]["K"], "d": metas[0]["d"],
            "cr": metas[0]["cr"], "runs": len(metas),
            "mean_acc": float(acc.mean()),
            "std_acc": float(acc.std(ddof=1)) if len(acc) > 1 else 0.0,
            "delta_vs_baseline": float(acc.mean()) - ref,
        })
    if args.out:
        with open(args.out, "w", newline="") as fh:
            _csv_out(rows, list(rows[0]), fh)
    _csv_out(rows, list(rows[0]))
    return 0


# -- parser -------------------------------------------------------------------


def _add_quant_flags(p, method_choices):
    p.add_argument("--method", choices=method_choices, default="ssvq")
    p.add_argument("--k", type=int, default=16, help="codebook size K")
    p.add_argument("--d", type=int, default=8, help="subvector length d")
    p.add_argument("--alpha", type=float, default=1.0, help="latent sign init scale")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssvq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="encode a weights file into a .ssvq container")
    p.add_argument("input", help="weights file (SSVW format)")
    _add_quant_flags(p, ["vq", "ssvq"])
    p.add_argument("--out", required=True, help="output .ssvq path")
    p.add_argument("--aligned", action="store_true", help="also store one byte per index")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser("train", help="pretrain the toy net, compress it, fine-tune")
    _add_quant_flags(p, ["vq", "ssvq", "float"])
    p.add_argument("--seeds", type=_seeds, help="comma-separated seeds (overrides --seed)")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--pretrain-steps", type=int, default=3000)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--lr-signs", type=float, default=0.03)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--freeze-interval", type=int, default=200)
    p.add_argument("--freeze-momentum", type=float, default=0.99)
    p.add_argument("--threshold-start", type=float, default=0.04)
    p.add_argument("--threshold-end", type=float, default=0.005)
    p.add_argument("--freeze-criterion", choices=["msv", "ema"], default="msv")
    p.add_argument("--strict-paper-freeze", dest="strict_ties", action="store_true",
                   help="majority-vote ties freeze to -1 instead of keeping the sign")
    p.add_argument("--no-freeze", action="store_true")
    p.add_argument("--task-noise", type=float, default=0.5)
    p.add_argument("--task-modes", type=int, default=8)
    p.add_argument("--task-spread", type=float, default=1.0)
    p.add_argument("--checkpoint", action="store_true", help="also save checkpoint.npz")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config", help="JSON file of flag defaults (keys use underscores)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze-grads", help="gradient dominance table for a VQ checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--top", type=_fractions, default=(0.05, 0.10))
    p.add_argument("--bottom", type=_fractions, default=(0.60, 0.50))
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze_grads)

    p = sub.add_parser("simulate", help="cycle estimate, int8 versus compressed weights")
    p.add_argument("--container", help=".ssvq file to simulate instead of presets")
    p.add_argument("--tokens", type=int, default=197, help="input rows per layer for containers")
    p.add_argument("--preset", default="layer1,layer2")
    p.add_argument("--presets-file", help="JSON preset file (bundled DeiT-Tiny by default)")
    p.add_argument("--format", choices=["vq", "ssvq"], default="ssvq")
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--sim-config", help="JSON file of SimConfig fields")
    p.add_argument("--out", help="write JSON lines here instead of stdout")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="aggregate run directories into a CSV table")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--baseline", help="group label the delta column is measured against")
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_report)

    parser._subparsers_by_name = sub.choices
    return parser


def _apply_config_file(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    try:
        with open(path) as fh:
            overrides = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {path}: {exc}")
    if not isinstance(overrides, dict):
        parser.error(f"config {path} must hold a JSON object")
    unknown = sorted(set(overrides) - set(vars(args)) - {"func", "command", "config"})
    if unknown or {"func", "command", "config"} & set(overrides):
        parser.error(f"unknown config keys in {path}: {unknown or sorted(overrides)}")
    parser._subparsers_by_name[args.command].set_defaults(**overrides)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    level = os.environ.get("SSVQ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ssvq {args.command}: {exc}", file=sys.stderr)
        return 2
    except (SSVQError, OSError, ValueError, KeyError, ArithmeticError, IndexError) as exc:
        print(f"ssvq {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
