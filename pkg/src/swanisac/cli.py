"""Command-line entry points.

Verbs::

    swanisac gen-data   --config C --out data.bin [--samples n] [--seed s]
    swanisac train      --config C --data data.bin --out DIR [--variant v] [--seed s]
    swanisac eval       --checkpoint ck --data data.bin --out report.csv
                        [--delta-grid 0,0.05,0.1,0.2] [--rho-grid 0,0.2,...,1] [--seed s]
    swanisac transfer   --checkpoint ck --config C --data tgt.bin --out DIR [--no-retrain]
    swanisac grad-check [--config C] [--seed s] [--mutate BLOCK]
    swanisac plot       --csv metrics.csv [--csv report.csv] --out DIR

Exit codes: 0 success, 1 invalid input (config, files, arguments), 2 runtime
failure (divergence, failed checks). Inputs are validated before any file is
written, so a validation failure leaves no partial outputs.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, from_dict, load_config, to_dict
from .data import Dataset, generate_dataset, read_dataset, write_dataset
from .physics import PowerConfig, perturb_csi
from .train import (Batch, MetricsRecord, TrainingDivergedError, build_model, evaluate,
                    grad_check, matched_beam_rate, model_loss_fn, train, transfer_beam_head)

log = logging.getLogger("swanisac")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

# sections that must agree between a dataset snapshot and a run config
PHYSICS_SECTIONS = ("geometry", "channel", "sensing", "power")

METRICS_HEADER = [f for f in MetricsRecord.FIELDS if f != "wall_clock"]
EVAL_HEADER = ["mode", "value", "seed", "rate", "dep_mse", "crlb_mean", "crlb_max",
               "oracle_rate"]
TRANSFER_HEADER = ["method", "K_c", "K_s", "dep_mse", "rate", "crlb_mean", "drift",
                   "trainable_params", "full_model_trainable", "best_epoch"]

PLOT_FILES = {
    "loss_epoch.dat": ("epoch", ["train_loss", "val_loss"]),
    "depmse_epoch.dat": ("epoch", ["dep_mse"]),
    "crlb_epoch.dat": ("epoch", ["crlb_mean", "crlb_max"]),
    "rate_epoch.dat": ("epoch", ["rate"]),
    "rate_rho.dat": ("rho_c", ["rate", "oracle_rate"]),
    "rate_delta.dat": ("delta", ["rate"]),
}


class UsageError(ValueError):
    """Invalid command-line input (exit code 1)."""


class Parser(argparse.ArgumentParser):
    """Argument errors raise :class:`UsageError` so they share exit code 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------- helpers

def git_blob_hash(data: bytes) -> str:
    """Content hash in git's blob format: ``sha1("blob <len>\\0" + data)``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def fmt(x) -> str:
    """Exact, platform-stable text for CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def parse_grid(text: str | None, name: str) -> list[float] | None:
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if not vals or any(not math.isfinite(v) for v in vals):
        raise UsageError(f"{name}: empty or non-finite grid")
    return vals


def require_file(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def require_out_dir(path: str) -> Path:
    p = Path(path)
    if p.exists() and not p.is_dir():
        raise UsageError(f"--out {path} exists and is not a directory")
    if not p.parent.exists():
        raise UsageError(f"parent directory of --out does not exist: {p.parent}")
    return p


def require_out_file(path: str) -> Path:
    p = Path(path)
    if p.is_dir():
        raise UsageError(f"--out {path} is a directory")
    if not p.parent.exists():
        raise UsageError(f"parent directory of --out does not exist: {p.parent}")
    return p


def check_snapshot(ds: Dataset, cfg: RunConfig, what: str = "dataset"):
    """Refuse to mix a dataset with a config whose physics differ."""
    snap = ds.config
    mine = to_dict(cfg)
    for sec in PHYSICS_SECTIONS:
        if sec in snap and snap[sec] != mine[sec]:
            diff = sorted(k for k in mine[sec] if snap[sec].get(k) != mine[sec][k])
            raise UsageError(f"{what} config snapshot differs from run config in "
                             f"{sec}: {', '.join(diff)}")
    if (ds.N, ds.M) != (cfg.geometry.N, cfg.geometry.M):
        raise UsageError(f"{what} has N={ds.N}, M={ds.M}; config has N={cfg.geometry.N}, "
                         f"M={cfg.geometry.M}")


def config_from_dataset(ds: Dataset, path: str | None) -> RunConfig:
    """The run config: ``--config`` if given, else the dataset's own snapshot."""
    if path is not None:
        cfg = load_config(require_file(path, "config"))
    else:
        cfg = from_dict(ds.config)
    check_snapshot(ds, cfg)
    return cfg


def write_manifest(path: Path, command: str, cfg: RunConfig, inputs: dict, extra=None):
    man = {"command": command, "version": __version__, "config": to_dict(cfg),
           "seeds": {"data": cfg.data.seed, "train": cfg.train.seed},
           "inputs": {k: {"path": str(v), "git_blob_sha1": git_blob_hash(Path(v).read_bytes())}
                      for k, v in inputs.items()}}
    if extra:
        man.update(extra)
    path.write_text(json.dumps(man, sort_keys=True, indent=2) + "\n")


def override(cfg: RunConfig, seed=None, samples=None, variant=None) -> RunConfig:
    sec = {}
    if seed is not None:
        sec["data"] = {"seed": seed}
        sec["train"] = {"seed": seed}
    if samples is not None:
        sec.setdefault("data", {})["num_samples"] = samples
    if variant is not None:
        sec["model"] = {"variant": variant}
    return cfg.replace(**sec) if sec else cfg


# --------------------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    cfg = override(load_config(args.config and require_file(args.config, "config")),
                   seed=args.seed, samples=args.samples)
    out = require_out_file(args.out)
    t0 = time.perf_counter()
    ds = generate_dataset(cfg, progress=_progress if args.verbose else None)
    nbytes = write_dataset(out, ds)
    write_manifest(Path(str(out) + ".manifest.json"), "gen-data", cfg, {"dataset": out},
                   {"split_sizes": list(ds.split_sizes)})
    s = ds.score.astype(np.float64)
    print(f"wrote {len(ds)} samples ({nbytes} bytes) to {out}; split "
          f"{'/'.join(str(v) for v in ds.split_sizes)}")
    print(f"oracle score: mean {s.mean():.4f}  min {s.min():.4f}  max {s.max():.4f}  "
          f"({time.perf_counter() - t0:.1f} s)")
    return EXIT_OK


def _progress(i, n):
    if i % max(1, n // 20) == 0 or i == n:
        print(f"  labelled {i}/{n}", file=sys.stderr)


def cmd_train(args) -> int:
    data_path = require_file(args.data, "dataset")
    ds = read_dataset(data_path)
    cfg = override(config_from_dataset(ds, args.config), seed=args.seed, variant=args.variant)
    if (ds.K_c, ds.K_s) != (cfg.data.K_c, cfg.data.K_s):
        cfg = cfg.replace(data={"K_c": ds.K_c, "K_s": ds.K_s})
    out = require_out_dir(args.out)
    tr, va, _ = ds.splits()
    if len(tr) == 0 or len(va) == 0:
        raise UsageError("dataset needs non-empty train and validation splits")

    out.mkdir(exist_ok=True)
    metrics_path, timing_path = out / "metrics.csv", out / "timing.csv"
    metrics_path.write_text(csv_text(METRICS_HEADER, []))
    timing_path.write_text("epoch,wall_clock\n")

    def on_epoch(rec: MetricsRecord):
        with metrics_path.open("a") as f:
            f.write(csv_text(METRICS_HEADER, [[getattr(rec, k) for k in METRICS_HEADER]])
                    .split("\n", 1)[1])
        with timing_path.open("a") as f:
            f.write(f"{rec.epoch},{rec.wall_clock!r}\n")
        log.info("epoch %d  loss %.4f  val rate %.4f", rec.epoch, rec.train_loss, rec.rate)

    model = build_model(cfg)
    try:
        res = train(model, tr, va, cfg, on_epoch=on_epoch)
    except TrainingDivergedError as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        print(f"partial metrics kept in {metrics_path}", file=sys.stderr)
        return EXIT_RUNTIME
    model.load_state_dict(res.best_state)
    save_checkpoint(out / "checkpoint.swnm", model, cfg)
    write_manifest(out / "manifest.json", "train", cfg, {"dataset": data_path},
                   {"best_epoch": res.best_epoch, "variant": cfg.model.variant})
    best = res.history[res.best_epoch - 1]
    print(f"best epoch {res.best_epoch}: val rate {best.rate:.4f} bits/s/Hz, "
          f"depMSE {best.dep_mse:.5f}; outputs in {out}")
    return EXIT_OK


def eval_rows(model, ds: Dataset, cfg: RunConfig, deltas=None, rhos=None, seed: int = 0):
    """Rows of the evaluation report (see ``EVAL_HEADER``)."""
    y_star = torch.from_numpy(ds.y_star).double()
    chi_star = torch.from_numpy(ds.chi_star).double()
    rows = []
    plain = evaluate(model, ds, cfg).record
    oracle = float(matched_beam_rate(ds, cfg, y_star, chi_star).mean())
    rows.append(["plain", 0.0, seed, plain.rate, plain.dep_mse, plain.crlb_mean, plain.crlb_max,
                 oracle])
    for d in deltas or []:
        if d < 0:
            raise UsageError("delta values must be >= 0")
        rng = np.random.default_rng([seed, 0xD17A])
        H = perturb_csi(ds.csi, d, rng)
        r = evaluate(model, ds, cfg, csi=H).record
        rows.append(["delta", d, seed, r.rate, r.dep_mse, r.crlb_mean, r.crlb_max, oracle])
    for rc in rhos or []:
        pw = PowerConfig(rho_c=rc, rho_s=1.0 - rc, P_max=cfg.power.P_max)
        r = evaluate(model, ds, cfg, power=pw).record
        o = float(matched_beam_rate(ds, cfg, y_star, chi_star, power=pw).mean())
        rows.append(["rho_c", rc, seed, r.rate, r.dep_mse, r.crlb_mean, r.crlb_max, o])
    return rows


def cmd_eval(args) -> int:
    ck = require_file(args.checkpoint, "checkpoint")
    data_path = require_file(args.data, "dataset")
    out = require_out_file(args.out)
    deltas = parse_grid(args.delta_grid, "--delta-grid")
    rhos = parse_grid(args.rho_grid, "--rho-grid")
    if rhos and any(not 0 <= r <= 1 for r in rhos):
        raise UsageError("--rho-grid values must lie in [0, 1]")
    if deltas and any(d < 0 for d in deltas):
        raise UsageError("--delta-grid values must be >= 0")
    model, cfg = load_checkpoint(ck)
    ds = read_dataset(data_path)
    check_snapshot(ds, cfg)
    if (ds.K_c, ds.K_s) != (model.K_c, model.K_s):
        raise UsageError(f"checkpoint is sized for K_c={model.K_c}, K_s={model.K_s}; dataset "
                         f"has {ds.K_c}, {ds.K_s} (run transfer first)")
    split = {"val": 1, "test": 2, "train": 0}[args.split]
    part = ds.splits()[split]
    rows = eval_rows(model, part, cfg, deltas, rhos, seed=args.seed or 0)
    out.write_text(csv_text(EVAL_HEADER, rows))
    for r in rows:
        print(f"{r[0]:>6} {r[1]:<6g} rate {r[3]:.4f}  depMSE {r[4]:.5f}  CRLB {r[5]:.4g}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    ck = require_file(args.checkpoint, "checkpoint")
    data_path = require_file(args.data, "dataset")
    out = require_out_dir(args.out)
    src, src_cfg = load_checkpoint(ck)
    ds = read_dataset(data_path)
    cfg = config_from_dataset(ds, args.config)
    cfg = override(cfg, seed=args.seed)
    cfg = cfg.replace(data={"K_c": ds.K_c, "K_s": ds.K_s}, model=to_dict(src_cfg.model))
    if src.variant == "mlp":
        raise UsageError("the mlp variant cannot be transferred (fixed input size)")
    for sec in PHYSICS_SECTIONS:
        if to_dict(getattr(src_cfg, sec)) != to_dict(getattr(cfg, sec)):
            raise UsageError(f"checkpoint and target config differ in {sec}")
    tr, va, _ = ds.splits()
    out.mkdir(exist_ok=True)

    full_trainable = src.count_trainable()
    adapted, rep = transfer_beam_head(src, tr, va, cfg, full_model_trainable=full_trainable)
    rows = [["beam_head_only", ds.K_c, ds.K_s, rep.dep_mse, rep.rate, rep.crlb_mean, rep.drift,
             rep.beam_head_params, full_trainable, rep.best_epoch]]
    if not args.no_retrain:
        fresh = build_model(cfg)
        res = train(fresh, tr, va, cfg)
        fresh.load_state_dict(res.best_state)
        best = evaluate(fresh, va, cfg).record
        rows.append(["full_retrain", ds.K_c, ds.K_s, best.dep_mse, best.rate, best.crlb_mean,
                     float("nan"), full_trainable, full_trainable, res.best_epoch])
    (out / "transfer.csv").write_text(csv_text(TRANSFER_HEADER, rows))
    (out / "transfer_history.csv").write_text(csv_text(
        METRICS_HEADER, [[getattr(r, k) for k in METRICS_HEADER] for r in rep.history]))
    save_checkpoint(out / "checkpoint.swnm", adapted, cfg)
    write_manifest(out / "manifest.json", "transfer", cfg, {"dataset": data_path,
                                                             "checkpoint": ck},
                   {"frozen_bytes_equal": rep.frozen_bytes_equal,
                    "unadapted_rate": rep.unadapted_rate})
    print(f"{'method':<15} {'rate':>8} {'depMSE':>9} {'drift':>6} {'trainable':>10} best")
    for r in rows:
        print(f"{r[0]:<15} {r[4]:8.4f} {r[3]:9.5f} {r[6]:6.2g} {r[7]:10d} {r[9]}")
    if not rep.frozen_bytes_equal or rep.drift != 0.0:
        print("frozen path changed during transfer", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def gradcheck_config(cfg: RunConfig) -> RunConfig:
    """``cfg`` with at most 8 antennas and a cheap label oracle.

    Model widths are kept as configured, so the check covers the same
    parameter blocks and shapes that training uses.
    """
    return cfg.replace(geometry={"N": min(cfg.geometry.N, 8)},
                       data={"oracle_candidates": 4, "oracle_passes": 0})


def run_fim_suite(cfg: RunConfig, instances: int = 100, seed: int = 0, mutate: bool = False):
    """Analytic FIM vs central differences on random instances.

    Returns the worst relative entry error (scaled by the largest entry).
    """
    from .data import random_deployments
    from .geometry import antenna_masks, partition_from_logits, tx_count
    from .sensing import fd_fim_oracle, fim

    geo = cfg.geometry
    rng = np.random.default_rng([seed, 0xF1])
    region = cfg.data.region
    worst = 0.0
    for _ in range(instances):
        y = random_deployments(geo, 1, rng)[0]
        chi = partition_from_logits(torch.from_numpy(rng.standard_normal(geo.M)),
                                    tx_count(cfg.data.K_c, cfg.data.K_s, geo.M))
        masks = antenna_masks(y, chi, geo)
        p = torch.tensor([rng.uniform(*region.x_range), rng.uniform(*region.y_range), region.z],
                         dtype=torch.float64)
        u = torch.complex(torch.from_numpy(rng.standard_normal(geo.N)),
                          torch.from_numpy(rng.standard_normal(geo.N))) * masks.tx
        J = fim(p, y, u, masks, cfg.sensing, cfg.channel, geo).J.numpy()
        if mutate:
            J = J * np.array([[1.0, -1.0], [-1.0, 1.0]])[:J.shape[0], :J.shape[1]]
        J_fd = fd_fim_oracle(p.numpy(), y.numpy(), u.numpy(), masks, cfg.sensing, cfg.channel,
                             geo).J.numpy()
        scale = max(np.abs(J_fd).max(), 1e-300)
        worst = max(worst, float(np.abs(J - J_fd).max() / scale))
    return worst


def cmd_grad_check(args) -> int:
    base = load_config(args.config and require_file(args.config, "config"))
    base = override(base, seed=args.seed)
    cfg = gradcheck_config(base)
    torch.manual_seed(cfg.train.seed)
    ds = generate_dataset(cfg, num_samples=4)
    model = build_model(cfg, dtype=torch.float64)
    # nudge zero-initialised adapter factors so their gradients are generic
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("lora_B"):
                p.normal_(0.0, 0.02)
    model_blocks = model.blocks()
    if args.mutate and args.mutate not in model_blocks and args.mutate != "fim":
        raise UsageError(f"--mutate: unknown block {args.mutate!r} "
                         f"(choose from {', '.join(sorted(model_blocks))}, fim)")
    batch = Batch.from_dataset(ds, dtype=torch.float64)
    fn = model_loss_fn(model, batch, cfg)

    def mutate(block, g):
        return -g if block == args.mutate else g

    rep = grad_check(fn, model_blocks, coords=args.coords, seed=cfg.train.seed,
                     mutate=mutate if args.mutate else None)
    fim_err = run_fim_suite(base, seed=cfg.train.seed, mutate=args.mutate == "fim")
    ok = rep.ok and fim_err < 1e-4
    for b in rep.blocks:
        status = "ok" if rep.passed(b) else "FAIL"
        where = f" at {b.worst_param}[{b.worst_index}]" if b.worst_param else ""
        print(f"{status:>4}  {b.block:<14} max rel err {b.max_rel_error:.3e} "
              f"({b.coords} coords){where}")
    print(f"{'ok' if fim_err < 1e-4 else 'FAIL':>4}  {'fim':<14} max rel err {fim_err:.3e} "
          f"(100 instances)")
    print("grad-check passed" if ok else "grad-check FAILED")
    return EXIT_OK if ok else EXIT_RUNTIME


def read_csv_columns(path: Path) -> list[dict]:
    with path.open(newline="") as f:
        r = csv.DictReader(f)
        if r.fieldnames is None:
            raise UsageError(f"{path}: empty CSV")
        return list(r)


def plot_data(sources: list[Path]) -> dict[str, str]:
    """Per-figure columnar text files from training and evaluation CSVs.

    Every file starts with ``# x y1 y2 ...`` followed by whitespace-separated
    rows. A training CSV feeds the four ``*_epoch`` files, an evaluation CSV
    the ``rate_rho`` and ``rate_delta`` files; files with no source hold only
    their header.
    """
    training, sweeps = None, None
    for src in sources:
        rows = read_csv_columns(src)
        with src.open(newline="") as f:
            cols = next(csv.reader(f))
        if "epoch" in cols:
            missing = [c for c in METRICS_HEADER if c not in cols]
            if missing:
                raise UsageError(f"{src}: missing column(s) {', '.join(missing)}")
            training = rows
        elif "mode" in cols:
            missing = [c for c in EVAL_HEADER if c not in cols]
            if missing:
                raise UsageError(f"{src}: missing column(s) {', '.join(missing)}")
            sweeps = rows
        else:
            raise UsageError(f"{src}: missing column 'epoch' (training CSV) or 'mode' "
                             "(evaluation CSV)")
    out = {}
    for name, (x, ys) in PLOT_FILES.items():
        lines = ["# " + " ".join([x] + ys)]
        if x == "epoch" and training is not None:
            lines += [" ".join(r[c] for c in [x] + ys) for r in training]
        elif x in ("rho_c", "delta") and sweeps is not None:
            mode = x
            pts = [r for r in sweeps if r["mode"] == mode]
            if mode == "delta":
                pts = [r for r in sweeps if r["mode"] == "plain"] + pts
            lines += [" ".join([r["value"]] + [r[c] for c in ys]) for r in pts]
        out[name] = "\n".join(lines) + "\n"
    return out


def cmd_plot(args) -> int:
    sources = [require_file(p, "CSV") for p in args.csv]
    out = require_out_dir(args.out)
    files = plot_data(sources)
    out.mkdir(exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    print(f"wrote {len(files)} data files to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="swanisac", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("gen-data", help="sample scenarios, label them and write a dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--samples", type=int)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a dataset")
    t.add_argument("--config", help="defaults to the dataset's config snapshot")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--variant", choices=["full", "mlp", "transformer_no_graph", "shared_head"])
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint, optionally over δ / ρ_c grids")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", choices=["train", "val", "test"], default="val")
    e.add_argument("--delta-grid")
    e.add_argument("--rho-grid")
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("transfer", help="beam-head-only adaptation to new node counts")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--config", help="target config; defaults to the dataset snapshot")
    x.add_argument("--data", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--seed", type=int)
    x.add_argument("--no-retrain", action="store_true",
                   help="skip the fresh full-retraining comparison row")
    x.set_defaults(func=cmd_transfer)

    c = sub.add_parser("grad-check", help="finite-difference checks of gradients and FIMs")
    c.add_argument("--config")
    c.add_argument("--seed", type=int)
    c.add_argument("--coords", type=int, default=50)
    c.add_argument("--mutate", help="flip the sign of one block's analytic gradient "
                                    "(or 'fim') to exercise failure detection")
    c.set_defaults(func=cmd_grad_check)

    pl = sub.add_parser("plot", help="emit per-figure columnar data files")
    pl.add_argument("--csv", action="append", required=True)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TrainingDivergedError, RuntimeError, ArithmeticError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        # UsageError, ConfigError and the file-format errors are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
