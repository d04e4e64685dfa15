"""Command-line entry point: ``knockbench {simulate,evaluate,print-config,convert}``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._kernels import BACKEND
from .dataset import DataFormatError, DatasetValidationError, load_dataset, save_dataset
from .estimators import ESTIMATORS
from .pipeline import PipelineConfig, rank_all_pairs_multi
from .scoring import (FLIPPED_HEADER, SYMMETRIC, build_scoring_set, derive_ground_truth,
                      flipped_rank_report, format_flipped_rows, roc_points, write_roc_tsv)
from .simulator import (FULL_SCALE_NT, FULL_SCALE_P, SimConfig, format_results_table,
                        run_trials, simulate_dataset)

log = logging.getLogger("knockbench")

MANIFEST = "manifest.json"
RESULTS = "results_table.tsv"
FLIPPED = "flipped_ranks.tsv"
TRIAL_CHECKPOINT = "trials_checkpoint.jsonl"
PIPELINE_CHECKPOINT = "pipeline_checkpoint.jsonl"

DEFAULT_CONFIG = {
    "simulate": {
        "p": 400,
        "n1": 200,
        "n2": 100,
        "N": 100,
        "n_t": [math.ceil(nt * 400 / FULL_SCALE_P) for nt in FULL_SCALE_NT],
        "p0": [1, 2],
        "regimes": ["Strong", "Weak"],
        "shift": -40.0,
        "noise_sd": 1.0,
        "k_lasso": 4,
        "alpha": 0.05,
        "seed": 0,
    },
    "evaluate": {
        "K": 3,
        "B": 100,
        "k_lasso": 4,
        "alpha": 0.05,
        "seed": 0,
        "estimators": list(ESTIMATORS),
        "scoring": SYMMETRIC,
        "top_n": 10,
    },
}


class ConfigError(ValueError):
    pass


def load_config(path):
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is None:
        return cfg
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, values in user.items():
        if section not in cfg:
            raise ConfigError(f"{section}: unknown section (expected one of {sorted(cfg)})")
        if not isinstance(values, dict):
            raise ConfigError(f"{section}: must be an object")
        for key, value in values.items():
            if key not in cfg[section]:
                raise ConfigError(f"{section}.{key}: unknown field")
            default = cfg[section][key]
            if isinstance(default, list) and not isinstance(value, list):
                value = [value]
            elif isinstance(default, bool) or isinstance(value, bool):
                raise ConfigError(f"{section}.{key}: unexpected boolean")
            elif isinstance(default, (int, float)) and not isinstance(value, (int, float)):
                raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
            elif isinstance(default, int) and not isinstance(default, bool) \
                    and isinstance(value, float) and not value.is_integer():
                raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
            elif isinstance(default, int) and isinstance(value, float):
                value = int(value)
            cfg[section][key] = value
    return cfg


def sim_configs(section):
    out = []
    for p0 in section["p0"]:
        for nt in section["n_t"]:
            for regime in section["regimes"]:
                try:
                    out.append(SimConfig(
                        p=section["p"], n_t=nt, p0=p0, regime=regime, n1=section["n1"],
                        n2=section["n2"], shift=section["shift"], noise_sd=section["noise_sd"],
                        N=section["N"], seed=section["seed"], k_lasso=section["k_lasso"],
                        alpha=section["alpha"]))
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"simulate: {exc}") from None
    if not out:
        raise ConfigError("simulate: n_t, p0 and regimes must be non-empty")
    return out


def pipeline_config(section):
    for e in section["estimators"]:
        if e not in ESTIMATORS:
            raise ConfigError(f"evaluate.estimators: unknown estimator {e!r}")
    if section["scoring"] not in ("full", "symmetric"):
        raise ConfigError("evaluate.scoring: must be 'full' or 'symmetric'")
    if section["top_n"] < 1:
        raise ConfigError("evaluate.top_n: must be positive")
    try:
        return PipelineConfig(K=section["K"], B=section["B"], k_lasso=section["k_lasso"],
                              alpha=section["alpha"], seed=section["seed"])
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"evaluate: {exc}") from None


# ---------------------------------------------------------------------------
# Manifest

def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Tracks outputs of one command and writes the manifest."""

    def __init__(self, command, out_dir, config, seed):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "command": command, "config": config, "seed": seed,
            "version": __version__, "backend": BACKEND,
            "started": _now(), "finished": None, "status": "running", "outputs": {},
        }
        self.outputs = []

    def path(self, name):
        p = self.out / name
        self.outputs.append(p)
        return p

    def write(self):
        (self.out / MANIFEST).write_text(json.dumps(self.manifest, indent=1, sort_keys=True) + "\n",
                                         encoding="utf-8")

    def finish(self, error=None):
        self.manifest["finished"] = _now()
        if error is None:
            self.manifest["status"] = "ok"
            self.manifest["outputs"] = {p.name: _digest(p) for p in self.outputs if p.exists()}
        else:
            self.manifest["status"] = "failed"
            self.manifest["error"] = str(error)
            for p in self.outputs:
                p.unlink(missing_ok=True)
            self.manifest["outputs"] = {}
        self.write()


def previous_manifest(out_dir):
    p = Path(out_dir) / MANIFEST
    if not p.exists():
        return None
    return json.loads(p.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Commands

def cmd_print_config(args):
    sys.stdout.write(json.dumps(DEFAULT_CONFIG, indent=2) + "\n")
    return 0


def _apply_seed(section, seed):
    if seed is not None:
        section["seed"] = seed


def _check_resume(args, config):
    if not args.resume:
        return False
    prev = previous_manifest(args.out)
    if prev is None:
        log.warning("--resume: no manifest in %s, starting fresh", args.out)
        return False
    if prev.get("config") != config:
        raise ConfigError("--resume: configuration differs from the previous run's manifest")
    return True


def cmd_simulate(args):
    config = load_config(args.config)
    section = config["simulate"]
    _apply_seed(section, args.seed)
    cfgs = sim_configs(section)
    resume = _check_resume(args, {"simulate": section})
    run = Run("simulate", args.out, {"simulate": section}, section["seed"])
    run.write()
    try:
        if args.emit_dataset:
            ds, _ = simulate_dataset(cfgs[0], section["seed"])
            for p in save_dataset(ds, run.out, prefix="sim_"):
                run.outputs.append(p)
        ckpt_path = run.out / TRIAL_CHECKPOINT
        done = {}
        if resume and ckpt_path.exists():
            for line in ckpt_path.read_text(encoding="utf-8").splitlines():
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError:
                    break
                done.setdefault(tuple(rec["cell"]), {})[rec["trial"]] = rec["hits"]
        mode = "a" if resume and ckpt_path.exists() else "w"
        cells = {}
        with open(ckpt_path, mode, encoding="utf-8") as ckpt:
            for cfg in cfgs:
                key = (cfg.p0, cfg.n_t, cfg.regime)

                def record(trial, hits, key=key):
                    ckpt.write(json.dumps({"cell": list(key), "trial": trial, "hits": hits}) + "\n")
                    ckpt.flush()

                cells[key] = run_trials(cfg, jobs=args.jobs, done=done.get(key), on_trial=record)
                log.info("p0=%s n_t=%s %s: %s", cfg.p0, cfg.n_t, cfg.regime, cells[key])
        results = run.path(RESULTS)
        results.write_text(format_results_table(cells), encoding="utf-8")
    except BaseException as exc:
        run.finish(error=exc)
        raise
    run.finish()
    return 0


def cmd_evaluate(args):
    config = load_config(args.config)
    section = config["evaluate"]
    _apply_seed(section, args.seed)
    if args.scoring:
        section["scoring"] = args.scoring
    if args.estimators:
        section["estimators"] = [e.strip() for e in args.estimators.split(",") if e.strip()]
    cfg = pipeline_config(section)
    ds = load_dataset(args.obs, args.intv, args.meta)
    resume = _check_resume(args, {"evaluate": section})
    run = Run("evaluate", args.out, {"evaluate": section}, section["seed"])
    run.manifest["dataset"] = {"obs": str(args.obs), "intv": str(args.intv),
                               "meta": str(args.meta), "n1": ds.n1, "n2": ds.n2, "p": ds.p}
    run.write()
    try:
        ckpt = run.out / PIPELINE_CHECKPOINT
        if not resume:
            ckpt.unlink(missing_ok=True)
        rps = rank_all_pairs_multi(ds, cfg, section["estimators"], jobs=args.jobs,
                                   checkpoint=ckpt)
        gt = derive_ground_truth(ds)
        kind = section["scoring"]
        ss = build_scoring_set(gt, kind)
        if len(ss) == 0:
            log.warning("scoring set '%s' is empty; ROC files will contain only a header", kind)
        flipped = ["\t".join(("estimator",) + FLIPPED_HEADER)]
        for est in section["estimators"]:
            points, thresholds = roc_points(rps[est], gt, ss)
            write_roc_tsv(run.path(f"roc_{est}_{kind}.tsv"), points, thresholds)
            rows = flipped_rank_report(rps[est], gt, section["top_n"])
            flipped += format_flipped_rows(rows, ds.gene_names, est)
        run.path(FLIPPED).write_text("\n".join(flipped) + "\n", encoding="utf-8")
    except BaseException as exc:
        run.finish(error=exc)
        raise
    run.finish()
    return 0


def cmd_convert(args):
    ds = load_dataset(args.obs, args.intv, args.meta, delimiter=args.delimiter)
    paths = save_dataset(ds, args.out, prefix=args.prefix)
    for p in paths:
        print(p)
    log.info("validated %d x %d observational and %d x %d interventional samples",
             ds.n1, ds.p, ds.n2, ds.p)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="knockbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("print-config", help="print the default configuration")
    p.set_defaults(func=cmd_print_config)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON configuration file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--resume", action="store_true",
                       help="continue from the checkpoint recorded in --out")

    p = sub.add_parser("simulate", help="replicate the simulation table")
    common(p)
    p.add_argument("--emit-dataset", action="store_true",
                   help="also write one simulated dataset in the matrix file format")
    p.set_defaults(func=cmd_simulate)

    def data_args(p):
        p.add_argument("--obs", type=Path, required=True, help="observational matrix")
        p.add_argument("--intv", type=Path, required=True, help="knockout matrix")
        p.add_argument("--meta", type=Path, required=True, help="metadata JSON")

    p = sub.add_parser("evaluate", help="rank all pairs and score them")
    common(p)
    data_args(p)
    p.add_argument("--scoring", choices=("full", "symmetric"))
    p.add_argument("--estimators", help="comma separated subset of " + ",".join(ESTIMATORS))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("convert", help="validate matrix files and rewrite them canonically")
    data_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--prefix", default="")
    p.add_argument("--delimiter", default="\t", help="input cell delimiter (default: tab)")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be at least 1")
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, DatasetValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except Exception as exc:
        if args.verbose:
            raise
        print(f"error: {type(exc).__name__}: {exc} (rerun with -v for a traceback)",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
