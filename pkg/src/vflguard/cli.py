"""Command-line entry point: ``vflguard {train,attack,sweep,dcor-batch-study}``.

Exit codes: 0 success, 1 runtime failure, 2 invalid input (bad config,
missing files, incompatible checkpoints, empty sweep grid).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import ConfigError, RunConfig, from_dict, load_config, set_dotted
from .data import DataError
from .dcor import dcor
from .evaluation import UndefinedAUCError, eval_auc, records_to_csv, train_independent_reconstructor
from .nn import Mlp, load_checkpoint, save_checkpoint
from .protocol.session import Experiment, build_dataset

OUT_ENV = "VFLGUARD_OUT_DIR"
U64_MAX = 2 ** 64 - 1

log = logging.getLogger("vflguard")


class InputError(Exception):
    """Anything the user can fix by changing arguments or files (exit 2)."""


# ---------------------------------------------------------------------------
# shared plumbing


def resolve_config(args) -> RunConfig:
    try:
        cfg = load_config(args.config) if args.config else from_dict({})
    except ConfigError as exc:
        raise InputError(str(exc)) from None
    overrides = {}
    if args.seed is not None:
        if not 0 <= args.seed <= U64_MAX:
            raise InputError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        overrides["seed"] = args.seed
    out = args.out or os.environ.get(OUT_ENV)
    if out:
        overrides["out_dir"] = out
    try:
        return cfg.replace(**overrides) if overrides else cfg
    except ConfigError as exc:
        raise InputError(str(exc)) from None


def _load_dataset(cfg: RunConfig):
    try:
        return build_dataset(cfg)
    except (DataError, FileNotFoundError) as exc:
        raise InputError(str(exc)) from None


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# train


def train_run(cfg: RunConfig, dataset=None) -> List[dict]:
    """Run one configured training job into ``cfg.out_dir``; returns the records."""
    out = _out_dir(cfg)
    (out / "config.resolved.yaml").write_text(cfg.dump(), encoding="utf-8")
    exp = Experiment(cfg, dataset)
    records = []
    with open(out / "metrics.jsonl", "w", encoding="utf-8") as fh:
        for rec in exp.run():
            fh.write(json.dumps(rec.to_dict()) + "\n")
            fh.flush()
            records.append(rec)
    (out / "metrics.csv").write_text(records_to_csv(records), encoding="utf-8")
    m = exp.models
    save_checkpoint(out / "passive.ckpt", [x for x in (m.F, m.R, m.R_noise) if x is not None])
    save_checkpoint(out / "active.ckpt", [m.H])
    return [r.to_dict() for r in records]


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    dataset = _load_dataset(cfg)
    records = train_run(cfg, dataset)
    if records:
        last = records[-1]
        log.info("step %d: attacker_mse %.4f dcor %.4f auc %.4f",
                 last["step"], last["attacker_mse"], last["dcor_x_fx"], last["auc"])
    log.info("wrote %s", cfg.out_dir)
    return 0


# ---------------------------------------------------------------------------
# attack


def _read_models(path, role: str) -> dict:
    if not path or not Path(path).is_file():
        raise InputError(f"{role} checkpoint not found: {path}")
    try:
        return load_checkpoint(path)
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise InputError(f"{path}: unreadable checkpoint ({exc})") from None


def cmd_attack(args) -> int:
    cfg = resolve_config(args)
    models = _read_models(args.checkpoint, "extractor")
    if "extractor" not in models:
        raise InputError(f"{args.checkpoint}: no 'extractor' model (found {sorted(models)})")
    F: Mlp = models["extractor"]
    H: Optional[Mlp] = None
    if args.predictor:
        pm = _read_models(args.predictor, "predictor")
        if "predictor" not in pm:
            raise InputError(f"{args.predictor}: no 'predictor' model (found {sorted(pm)})")
        H = pm["predictor"]
    dataset = _load_dataset(cfg)
    if F.in_dim != dataset.n_passive:
        raise InputError(f"extractor expects {F.in_dim} passive features, dataset has {dataset.n_passive}")
    if H is not None and H.in_dim != F.out_dim:
        raise InputError(f"predictor expects {H.in_dim} inputs, extractor emits {F.out_dim} "
                         "(active-feature predictors are not supported by attack)")

    att = cfg.attack
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    std = cfg.defense.baseline_noise_std
    R_I = train_independent_reconstructor(
        F, dataset.split("attack")[0], att.epochs,
        hidden=att.hidden if att.hidden is not None else cfg.model.reconstructor_hidden,
        batch_size=att.batch_size or cfg.training.batch_size, learning_rate=att.learning_rate,
        momentum=att.momentum, clip_norm=att.clip_norm, seed=seeds[0], perturb_std=std)
    xe, _, ye = dataset.split("eval")
    rng = np.random.default_rng(seeds[1])
    fx = F(xe) + (rng.normal(0.0, std, size=(xe.shape[0], F.out_dim)) if std else 0.0)
    report = {
        "checkpoint": str(args.checkpoint),
        "attacker_mse": float(np.mean((R_I(fx) - xe) ** 2)),
        "dcor_x_fx": dcor(xe, fx).dcor,
        "auc": None,
    }
    if H is not None:
        try:
            report["auc"] = eval_auc(H(fx)[:, 0], ye)
        except UndefinedAUCError:
            pass
    out = _out_dir(cfg)
    (out / "attack_report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    log.info("attacker_mse %.4f dcor %.4f auc %s", report["attacker_mse"], report["dcor_x_fx"], report["auc"])
    return 0


# ---------------------------------------------------------------------------
# sweep


SUMMARY_FIELDS = ["cell", "seed", "status", "attacker_mse", "dcor_x_fx", "auc", "error"]


def sweep_cells(cfg: RunConfig) -> List[dict]:
    """Cartesian product of the grid, repeated per seed, as dotted overrides."""
    grid = cfg.sweep.grid
    if not grid or any(not isinstance(v, list) or not v for v in grid.values()):
        raise InputError("sweep.grid must map at least one dotted key to a nonempty list")
    keys = list(grid)
    seeds = cfg.sweep.seeds if cfg.sweep.seeds else [cfg.seed]
    cells = []
    for values in itertools.product(*(grid[k] for k in keys)):
        for seed in seeds:
            cells.append({"seed": seed, **dict(zip(keys, values))})
    return cells


def _run_cell(raw: dict) -> dict:
    """Worker body; never raises so one bad cell cannot stop the sweep."""
    try:
        cfg = from_dict(raw)
        records = train_run(cfg)
        if not records:
            return {"status": "ok"}
        last = records[-1]
        return {"status": "ok", **{k: last[k] for k in ("attacker_mse", "dcor_x_fx", "auc")}}
    except Exception as exc:  # recorded in the summary, sweep continues
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}"}


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    cells = sweep_cells(cfg)
    if args.parallel is not None and args.parallel < 1:
        raise InputError("--parallel must be >= 1")
    base = cfg.to_dict()
    base["sweep"] = {"grid": {}, "seeds": None}
    raws = []
    for i, cell in enumerate(cells):
        raw = json.loads(json.dumps(base))
        try:
            for key, value in cell.items():
                set_dotted(raw, key, value)
        except ConfigError as exc:
            raise InputError(str(exc)) from None
        raw["out_dir"] = str(Path(cfg.out_dir) / f"cell_{i:03d}")
        raws.append(raw)
    out = _out_dir(cfg)
    (out / "config.resolved.yaml").write_text(cfg.dump(), encoding="utf-8")

    grid_keys = list(cfg.sweep.grid)
    fields = SUMMARY_FIELDS[:2] + grid_keys + SUMMARY_FIELDS[2:]
    workers = args.parallel or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, raws))
    else:
        results = [_run_cell(r) for r in raws]
    # rows are written by this process only, in cell order
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for i, (cell, res) in enumerate(zip(cells, results)):
            row = {"cell": f"cell_{i:03d}", **cell, **res}
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items() if k in fields})
    failed = sum(r["status"] != "ok" for r in results)
    log.info("%d cells, %d failed; summary at %s", len(cells), failed, out / "summary.csv")
    return 0


# ---------------------------------------------------------------------------
# dcor batch-size study


STUDY_FIELDS = ["n", "trials", "median", "q25", "q75", "iqr"]


def dcor_batch_study(x: np.ndarray, batch_sizes, trials: int, noise_dim: int, seed) -> List[dict]:
    """Median dCor between fixed rows of ``x`` and fresh Gaussian noise, per batch size."""
    if x.shape[0] < max(batch_sizes):
        raise InputError(f"batch size {max(batch_sizes)} exceeds the {x.shape[0]} available rows")
    rng = np.random.default_rng(seed)
    rows = []
    for n in batch_sizes:
        xb = x[rng.permutation(x.shape[0])[:n]]
        vals = np.array([dcor(xb, rng.standard_normal((n, noise_dim))).dcor for _ in range(trials)])
        q25, med, q75 = np.percentile(vals, [25, 50, 75])
        rows.append({"n": int(n), "trials": trials, "median": float(med), "q25": float(q25),
                     "q75": float(q75), "iqr": float(q75 - q25)})
    return rows


def cmd_dcor_batch_study(args) -> int:
    cfg = resolve_config(args)
    dataset = _load_dataset(cfg)
    study = cfg.dcor_study
    x = dataset.x_passive
    rows = dcor_batch_study(x, study.batch_sizes, study.trials, study.noise_dim or x.shape[1], cfg.seed)
    out = _out_dir(cfg)
    with open(out / "dcor_batch_study.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=STUDY_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    (out / "config.resolved.yaml").write_text(cfg.dump(), encoding="utf-8")
    for r in rows:
        log.info("n=%5d median %.4f iqr %.4f", r["n"], r["median"], r["iqr"])
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vflguard", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run config (defaults apply when omitted)")
        p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        return p

    common(sub.add_parser("train", help="train one configuration")).set_defaults(func=cmd_train)
    p = common(sub.add_parser("attack", help="fit an independent reconstructor against a checkpoint"))
    p.add_argument("--checkpoint", required=True, help="checkpoint holding the extractor")
    p.add_argument("--predictor", help="checkpoint holding the predictor (enables AUC)")
    p.set_defaults(func=cmd_attack)
    p = common(sub.add_parser("sweep", help="run every cell of sweep.grid"))
    p.add_argument("--parallel", type=int, help="worker processes")
    p.set_defaults(func=cmd_sweep)
    common(sub.add_parser("dcor-batch-study", help="dCor against pure noise across batch sizes")
           ).set_defaults(func=cmd_dcor_batch_study)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InputError as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:
        log.error("run failed: %s: %s", type(exc).__name__, exc)
        if args.verbose:
            log.exception("traceback")
        return 1


if __name__ == "__main__":
    sys.exit(main())
