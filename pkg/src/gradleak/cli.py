"""Experiment runner.

Subcommands operate on one experiment directory (``--out``):

  gen          synthesize a victim, its dataset and per-example gradient
               captures to disk
  attack       run label recovery over every captured instance
  reconstruct  invert the network analytically for recovered instances
  sweep        rerun recovery under a grid of gradient-noise settings
  trace        sample the scalar-axis loss landscape of one instance

Reports are JSON plus CSV; matplotlib renderings of each CSV land in
``<out>/figures`` unless disabled. Config values resolve as
flag > config file > built-in default, and a fixed seed makes every
command's output byte-identical apart from the timing block of the JSON
report.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .errors import ConfigError, PartialReconstructionError, TensorFormatError
from .metrics import is_correct, l_r, l_s, psnr, ssim
from .recovery import (
    ENGINE_PSO,
    RecoveryConfig,
    build_context,
    extract_mixup,
    idlg_baseline,
    recover,
    scan_losses,
    with_exclusion_for,
)
from .reconstruct import reconstruct_input, write_pgm
from .robustness import noise_sweep
from .tensor import RngHandle, read_tensor, softmax, write_tensor
from .victim import (
    MIXUP,
    ONE_HOT,
    SMOOTHING,
    AttackInstance,
    AugmentedLabel,
    GradientCapture,
    backward,
    forward,
    init_mlp,
    load_model,
    make_blobs,
    make_label,
    mix_inputs,
    save_model,
    train,
)

DEFAULTS = {
    "seed": 0,
    "out": "run",
    "jobs": 1,
    "figures": True,
    "instances": 100,
    "victim": {
        "dims": [64, 10],
        "bias": False,
        "init_scale": 1.0,
        "train_epochs": 0,
        "train_lr": 0.02,
        "train_samples": 200,
        "train_smoothing": 0.1,
        "blob_spread": 0.15,
        "blob_mean_lo": 0.2,
        "blob_mean_hi": 0.8,
    },
    "augmentation": {"kind": SMOOTHING, "epsilon": None, "coeff": None},
    "recovery": {
        "initial": 1.0,
        "lr": 0.5,
        "bound": 100.0,
        "iteration": 200,
        "coe": 4.0,
        "pop": 200,
        "max_iter": 30,
        "interval": 5.0,
        "loss_scale": 1000.0,
        "threshold": 1e-9,
        "loss": "variance",
        "inertia": 0.8,
        "cognitive": 0.5,
        "social": 0.5,
        "engine": "auto",
        "noise_margin": 6.0,
    },
    "noise": {
        "families": ["gaussian", "laplace"],
        "scales": [1e-4, 1e-3, 1e-2, 1e-1],
        "lr_tol_factor": 4.6,
        "lr_tol_cap": 0.065,
        "all_layers": False,
    },
    "correct_lr_tol": 1e-2,
}

# RNG namespace: fixed child keys per purpose so results do not depend on
# evaluation order. Instance-level streams hang off the purpose key.
K_MODEL, K_TRAIN, K_BLOBS, K_GEN, K_ATTACK, K_SWEEP, K_RECON = range(7)


def _merge(base: dict, override: dict, path="") -> dict:
    out = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {path + key!r} must be a table")
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def resolve_config(args) -> dict:
    cfg = DEFAULTS
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, file_cfg)
    for flag in ("seed", "out", "jobs", "instances"):
        value = getattr(args, flag, None)
        if value is not None:
            cfg = _merge(cfg, {flag: value})
    if getattr(args, "no_figures", False):
        cfg = _merge(cfg, {"figures": False})
    return cfg


def recovery_config(cfg: dict) -> RecoveryConfig:
    return RecoveryConfig(**cfg["recovery"])


def _rng(cfg: dict, *key: int) -> RngHandle:
    handle = RngHandle(int(cfg["seed"]))
    for k in key:
        handle = handle.child(k)
    return handle


# ---------------------------------------------------------------------------
# On-disk experiment layout.

def _instance_dir(out: str, index: int) -> str:
    return os.path.join(out, "instances", f"{index:05d}")


def save_instance(directory: str, x, label: AugmentedLabel,
                  capture: GradientCapture, extra: dict) -> None:
    os.makedirs(directory, exist_ok=True)
    write_tensor(os.path.join(directory, "input.tnsr"), x)
    write_tensor(os.path.join(directory, "label.tnsr"), label.vector)
    for li, wg in enumerate(capture.weight_grads):
        write_tensor(os.path.join(directory, f"wgrad{li}.tnsr"), wg)
        write_tensor(os.path.join(directory, f"zgrad{li}.tnsr"), capture.z_grads[li])
        if capture.bias_grads[li] is not None:
            write_tensor(os.path.join(directory, f"bgrad{li}.tnsr"),
                         capture.bias_grads[li])
    meta = {
        "kind": label.kind,
        "epsilon": label.epsilon,
        "mix": list(label.mix) if label.mix else None,
        "loss": capture.loss,
        "prediction": capture.prediction,
        "layers": len(capture.weight_grads),
    }
    meta.update(extra)
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_instance(out: str, index: int, model) -> AttackInstance:
    directory = _instance_dir(out, index)
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)
    x = read_tensor(os.path.join(directory, "input.tnsr"))
    vec = read_tensor(os.path.join(directory, "label.tnsr"))
    label = AugmentedLabel(vec, meta["kind"], epsilon=meta["epsilon"],
                           mix=tuple(meta["mix"]) if meta["mix"] else None)
    n = meta["layers"]
    wgrads, bgrads, zgrads = [], [], []
    for li in range(n):
        wgrads.append(read_tensor(os.path.join(directory, f"wgrad{li}.tnsr")))
        zgrads.append(read_tensor(os.path.join(directory, f"zgrad{li}.tnsr")))
        bias_path = os.path.join(directory, f"bgrad{li}.tnsr")
        bgrads.append(read_tensor(bias_path) if os.path.exists(bias_path) else None)
    capture = GradientCapture(wgrads, bgrads, zgrads, meta["loss"], meta["prediction"])
    logits, acts = forward(model, x)
    return AttackInstance(model, x, label, capture, last_input=acts[-1],
                          probs=softmax(logits), logits=logits)


def _load_run(cfg: dict):
    out = cfg["out"]
    index_path = os.path.join(out, "instances.json")
    if not os.path.exists(index_path):
        raise FileNotFoundError(f"{index_path}: run 'gen' first")
    with open(index_path) as fh:
        run_meta = json.load(fh)
    model = load_model(os.path.join(out, "model"))
    return run_meta, model


def _write_report(cfg: dict, command: str, aggregates: dict, records: list,
                  seconds: float) -> None:
    report = {
        "version": __version__,
        "command": command,
        "seed": cfg["seed"],
        "config": cfg,
        "aggregates": aggregates,
        "instances": records,
        "timing": {"seconds": seconds},
    }
    with open(os.path.join(cfg["out"], "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


# ---------------------------------------------------------------------------
# gen

def _build_victim(cfg: dict):
    vcfg = cfg["victim"]
    model = init_mlp(vcfg["dims"], _rng(cfg, K_MODEL), bias=vcfg["bias"],
                     scale=vcfg["init_scale"])
    blobs = make_blobs(vcfg["dims"][0], vcfg["dims"][-1], _rng(cfg, K_BLOBS),
                       spread=vcfg["blob_spread"], mean_lo=vcfg["blob_mean_lo"],
                       mean_hi=vcfg["blob_mean_hi"])
    if vcfg["train_epochs"] > 0:
        train_rng = _rng(cfg, K_TRAIN)
        C = vcfg["dims"][-1]
        eps = vcfg["train_smoothing"]
        dataset = []
        for i in range(vcfg["train_samples"]):
            cls = i % C
            x = blobs.sample(cls, train_rng)
            kind = SMOOTHING if eps > 0 else ONE_HOT
            dataset.append((x, make_label(kind, cls, None, C, epsilon=eps or None)))
        train(model, dataset, vcfg["train_epochs"], vcfg["train_lr"], train_rng)
    return model, blobs


def _sample_attack_example(cfg: dict, blobs, rng: RngHandle):
    acfg = cfg["augmentation"]
    kind = acfg["kind"]
    C = blobs.class_count
    if kind == MIXUP:
        ca = int(rng.integers(C))
        cb = int(rng.integers(C - 1))
        if cb >= ca:
            cb += 1
        a = acfg["coeff"] if acfg["coeff"] is not None else float(rng.uniform(0.0, 1.0))
        x = mix_inputs(blobs.sample(ca, rng), blobs.sample(cb, rng), a)
        label = make_label(MIXUP, (ca, cb), None, C, coeff=a)
    else:
        cls = int(rng.integers(C))
        x = blobs.sample(cls, rng)
        label = make_label(kind, cls, rng, C, epsilon=acfg["epsilon"])
    return x, label


def cmd_gen(cfg: dict) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    if cfg["augmentation"]["kind"] not in (ONE_HOT, SMOOTHING, MIXUP):
        raise ConfigError(f"unknown augmentation kind {cfg['augmentation']['kind']!r}")
    model, blobs = _build_victim(cfg)
    save_model(os.path.join(out, "model"), model)
    n = int(cfg["instances"])
    for index in range(n):
        rng = _rng(cfg, K_GEN, index)
        x, label = _sample_attack_example(cfg, blobs, rng)
        capture = backward(model, x, label)
        logits, _ = forward(model, x)
        p = softmax(logits)
        row = int(np.argmax(np.abs(capture.last_weight_grad).sum(axis=1)))
        diff = p[row] - label.vector[row]
        save_instance(_instance_dir(out, index), x, label, capture, {
            "row_star": row,
            "lambda_star": None if diff == 0.0 else 1.0 / diff,
        })
    with open(os.path.join(out, "instances.json"), "w") as fh:
        json.dump({"count": n, "kind": cfg["augmentation"]["kind"],
                   "victim": cfg["victim"], "seed": cfg["seed"]},
                  fh, indent=2, sort_keys=True)
    with open(os.path.join(out, "config.json"), "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
    print(f"gen: wrote {n} instances to {out}")
    return 0


# ---------------------------------------------------------------------------
# attack

_WORKER: dict = {}


def _attack_init(cfg: dict) -> None:
    _WORKER["cfg"] = cfg
    _WORKER["model"] = load_model(os.path.join(cfg["out"], "model"))


def _attack_one(index: int) -> dict:
    cfg = _WORKER["cfg"]
    model = _WORKER["model"]
    inst = load_instance(cfg["out"], index, model)
    base = recovery_config(cfg)
    run_cfg = with_exclusion_for(base, inst.label.kind)
    result = recover(inst.capture, model, run_cfg, _rng(cfg, K_ATTACK, index))
    correct = is_correct(result, inst.label.vector, exclusion=run_cfg.exclusion,
                         tol=cfg["correct_lr_tol"])
    record = {
        "index": index,
        "kind": inst.label.kind,
        "status": result.status.value,
        "engine": result.engine,
        "row": result.row,
        "lam": None if np.isnan(result.lam) else float(result.lam),
        "lambda_star": float(inst.lambda_star(result.row))
        if result.row is not None else None,
        "l_s": None,
        "l_r": None if result.label is None else l_r(result.label, inst.label.vector),
        "correct": bool(correct),
        "final_loss": None if np.isnan(result.final_loss) else float(result.final_loss),
    }
    if record["lam"] is not None and record["lambda_star"] is not None:
        record["l_s"] = l_s(record["lam"], record["lambda_star"])
    if inst.label.kind == MIXUP:
        # compare on the larger mixing weight, which is what extraction reports
        a_true = inst.label.mix[2]
        record["mix_a_true"] = max(a_true, 1.0 - a_true)
        record["mix_a_rec"] = None
        record["mix_classes_match"] = None
        if result.success:
            try:
                ca, cb, a = extract_mixup(result.label)
                record["mix_a_rec"] = a
                record["mix_classes_match"] = {ca, cb} == set(inst.label.mix[:2])
            except Exception:
                record["mix_classes_match"] = False
    if inst.label.kind == ONE_HOT:
        baseline = idlg_baseline(inst.capture)
        record["idlg_class"] = baseline.class_index
        record["idlg_ambiguous"] = baseline.ambiguous
        ours = None
        if result.label is not None:
            ours = int(np.argmax(result.label))
        record["agree_with_idlg"] = (
            None if baseline.ambiguous or ours is None
            else bool(ours == baseline.class_index)
        )
    return record


def _run_indexed(cfg: dict, n: int, init, fn) -> list:
    jobs = int(cfg["jobs"])
    if jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=init,
                                 initargs=(cfg,)) as pool:
            return list(pool.map(fn, range(n)))
    init(cfg)
    return [fn(i) for i in range(n)]


def _aggregate_attack(records: list) -> dict:
    n = len(records)
    correct = [r for r in records if r["correct"]]
    status_counts: dict = {}
    for r in records:
        status_counts[r["status"]] = status_counts.get(r["status"], 0) + 1
    lrs = sorted(r["l_r"] for r in correct)
    return {
        "n": n,
        "correct": len(correct),
        "accuracy_pct": 100.0 * len(correct) / n if n else 0.0,
        "status_counts": status_counts,
        "mean_lr_correct": float(np.mean(lrs)) if lrs else None,
        "median_lr_correct": float(np.median(lrs)) if lrs else None,
        "mean_ls_correct": float(np.mean([r["l_s"] for r in correct]))
        if correct else None,
    }


def cmd_attack(cfg: dict) -> int:
    run_meta, _ = _load_run(cfg)
    n = run_meta["count"]
    started = time.perf_counter()
    records = _run_indexed(cfg, n, _attack_init, _attack_one)
    aggregates = _aggregate_attack(records)
    out = cfg["out"]
    header = ["index", "kind", "status", "engine", "row", "lam", "lambda_star",
              "l_s", "l_r", "correct", "final_loss"]
    extra = [k for k in ("mix_a_true", "mix_a_rec", "mix_classes_match",
                         "idlg_class", "idlg_ambiguous", "agree_with_idlg")
             if records and k in records[0]]
    _write_csv(os.path.join(out, "per_instance.csv"), header + extra,
               [[r.get(k) for k in header + extra] for r in records])
    _write_report(cfg, "attack", aggregates, records,
                  time.perf_counter() - started)
    if cfg["figures"]:
        from .figures import label_error_figure

        os.makedirs(os.path.join(out, "figures"), exist_ok=True)
        label_error_figure(os.path.join(out, "figures", "label_error.png"),
                           [r["l_r"] for r in records if r["l_r"] is not None])
    print(f"attack: {aggregates['correct']}/{n} correct "
          f"({aggregates['accuracy_pct']:.1f}%)")
    return 0


# ---------------------------------------------------------------------------
# reconstruct

def _recon_init(cfg: dict) -> None:
    _attack_init(cfg)


def _recon_one(index: int) -> dict:
    cfg = _WORKER["cfg"]
    model = _WORKER["model"]
    inst = load_instance(cfg["out"], index, model)
    run_cfg = with_exclusion_for(recovery_config(cfg), inst.label.kind)
    result = recover(inst.capture, model, run_cfg, _rng(cfg, K_ATTACK, index))
    record = {
        "index": index,
        "status": result.status.value,
        "psnr": None,
        "ssim": None,
        "max_abs_err": None,
        "dead_below_layer": None,
        "bias_cross_max_dev": None,
    }
    if not result.success:
        return record
    try:
        recon = reconstruct_input(model, inst.capture, result.feature, result.label)
    except PartialReconstructionError as exc:
        record["dead_below_layer"] = exc.deepest_layer
        return record
    x_hat = recon.input
    record["max_abs_err"] = float(np.abs(x_hat - inst.x).max())
    record["psnr"] = psnr(x_hat, inst.x)
    side = int(round(np.sqrt(inst.x.shape[0])))
    image_shape = (side, side) if side * side == inst.x.shape[0] else None
    if image_shape:
        record["ssim"] = ssim(x_hat.reshape(image_shape), inst.x.reshape(image_shape))
    if not model.unbiased:
        # Two independent routes to the same input must agree: bias-gradient
        # division against pure weight-gradient propagation.
        stripped = GradientCapture(inst.capture.weight_grads,
                                   [None] * len(model.layers),
                                   inst.capture.z_grads, inst.capture.loss,
                                   inst.capture.prediction)
        alt = reconstruct_input(model, stripped, result.feature, result.label)
        record["bias_cross_max_dev"] = float(np.abs(alt.input - x_hat).max())
    recon_dir = os.path.join(cfg["out"], "recon")
    os.makedirs(recon_dir, exist_ok=True)
    write_tensor(os.path.join(recon_dir, f"{index:05d}.tnsr"), x_hat)
    if image_shape:
        write_pgm(os.path.join(recon_dir, f"{index:05d}.pgm"),
                  x_hat.reshape(image_shape))
    return record


def cmd_reconstruct(cfg: dict) -> int:
    run_meta, model = _load_run(cfg)
    n = run_meta["count"]
    started = time.perf_counter()
    records = _run_indexed(cfg, n, _recon_init, _recon_one)
    done = [r for r in records if r["psnr"] is not None]
    aggregates = {
        "n": n,
        "reconstructed": len(done),
        "mean_psnr": float(np.mean([r["psnr"] for r in done])) if done else None,
        "mean_ssim": float(np.mean([r["ssim"] for r in done]))
        if done and done[0]["ssim"] is not None else None,
        "max_abs_err": max((r["max_abs_err"] for r in done), default=None),
        "dead_layers": sum(r["dead_below_layer"] is not None for r in records),
    }
    out = cfg["out"]
    header = ["index", "status", "psnr", "ssim", "max_abs_err",
              "dead_below_layer", "bias_cross_max_dev"]
    _write_csv(os.path.join(out, "per_instance_recon.csv"), header,
               [[r.get(k) for k in header] for r in records])
    _write_report(cfg, "reconstruct", aggregates, records,
                  time.perf_counter() - started)
    if cfg["figures"]:
        from .figures import reconstruction_figure

        os.makedirs(os.path.join(out, "figures"), exist_ok=True)
        pairs, psnrs = [], []
        for r in records[:8]:
            if r["psnr"] is None:
                continue
            side = int(round(np.sqrt(model.input_dim)))
            if side * side != model.input_dim:
                break
            inst = load_instance(out, r["index"], model)
            x_hat = read_tensor(os.path.join(out, "recon", f"{r['index']:05d}.tnsr"))
            pairs.append((inst.x.reshape(side, side), x_hat.reshape(side, side)))
            psnrs.append(r["psnr"])
        reconstruction_figure(os.path.join(out, "figures", "reconstruction.png"),
                              pairs, psnrs)
    msg = aggregates["mean_psnr"]
    print(f"reconstruct: {len(done)}/{n} inputs, mean PSNR "
          f"{msg if msg is None else round(msg, 2)} dB")
    return 0


# ---------------------------------------------------------------------------
# sweep

def cmd_sweep(cfg: dict) -> int:
    run_meta, model = _load_run(cfg)
    n = run_meta["count"]
    started = time.perf_counter()
    _attack_init(cfg)
    instances = [load_instance(cfg["out"], i, _WORKER["model"]) for i in range(n)]
    base = replace(recovery_config(cfg), engine=ENGINE_PSO)  # swarm-only protocol
    ncfg = cfg["noise"]
    out = cfg["out"]
    header = ["family", "scale", "accuracy", "mean_Ls", "mean_Lr"]
    if not ncfg["families"] or not ncfg["scales"] or n == 0:
        _write_csv(os.path.join(out, "sweep.csv"), header, [])
        _write_report(cfg, "sweep", {"points": 0}, [],
                      time.perf_counter() - started)
        print("sweep: empty grid")
        return 0
    report = noise_sweep(instances, ncfg["scales"], ncfg["families"], base,
                         _rng(cfg, K_SWEEP), lr_tol=cfg["correct_lr_tol"],
                         lr_tol_factor=ncfg["lr_tol_factor"],
                         lr_tol_cap=ncfg["lr_tol_cap"],
                         all_layers=ncfg["all_layers"])
    report.write_csv(os.path.join(out, "sweep.csv"))
    records = [{"family": p.family, "scale": p.scale, "accuracy": p.accuracy,
                "mean_ls": p.mean_ls, "mean_lr": p.mean_lr, "n": p.n,
                "successes": p.successes} for p in report.points]
    _write_report(cfg, "sweep", {"points": len(records)}, records,
                  time.perf_counter() - started)
    if cfg["figures"]:
        from .figures import sweep_figure

        os.makedirs(os.path.join(out, "figures"), exist_ok=True)
        sweep_figure(os.path.join(out, "figures", "sweep.png"), report.points)
    for p in report.points:
        print(f"sweep: {p.family} scale {p.scale:g} accuracy {p.accuracy:.1f}%")
    return 0


# ---------------------------------------------------------------------------
# trace

def cmd_trace(cfg: dict, args) -> int:
    run_meta, model = _load_run(cfg)
    if run_meta["count"] < 1:
        raise ConfigError("trace needs at least one generated instance")
    index = args.instance
    if not 0 <= index < run_meta["count"]:
        raise ConfigError(f"instance index {index} out of range")
    inst = load_instance(cfg["out"], index, model)
    if args.steps < 1:
        raise ConfigError("steps must be >= 1")
    grid = np.linspace(args.lambda_min, args.lambda_max, args.steps)
    grid = grid[grid != 0.0]
    if grid.size == 0:
        raise ConfigError("scalar range contains no nonzero points")
    run_cfg = with_exclusion_for(recovery_config(cfg), inst.label.kind)
    ctx = build_context(inst.capture, model.layers[-1], run_cfg)
    losses = scan_losses(ctx, grid)
    out = cfg["out"]
    _write_csv(os.path.join(out, "trace.csv"), ["lambda", "scaled_loss"],
               list(zip(grid.tolist(), losses.tolist())))
    if cfg["figures"]:
        from .figures import trace_figure

        os.makedirs(os.path.join(out, "figures"), exist_ok=True)
        trace_figure(os.path.join(out, "figures", "trace.png"), grid, losses,
                     lam_star=inst.lambda_star(ctx.row_index))
    print(f"trace: {grid.size} samples for instance {index}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradleak",
                                     description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen", "attack", "reconstruct", "sweep", "trace"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="experiment directory")
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG rendering")
        if name == "gen":
            p.add_argument("--instances", type=int, help="instance count")
        if name == "trace":
            p.add_argument("--instance", type=int, default=0)
            p.add_argument("--lambda-min", type=float, default=-6.0)
            p.add_argument("--lambda-max", type=float, default=6.0)
            p.add_argument("--steps", type=int, default=601)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        os.makedirs(cfg["out"], exist_ok=True)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "attack":
            return cmd_attack(cfg)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_trace(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, TensorFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
