"""Cross-validated, bootstrapped ranking of all ordered gene pairs.

For every fold ``f`` and target gene ``j`` a model is trained on all
observational rows plus the interventional rows outside ``f`` (never the row
knocking out ``j``). Lasso preselects ``k_lasso`` predictors once per
``(f, j)``; the configured estimator is then refit on ``B`` bootstrap
resamples and per-bootstrap coefficient ranks are averaged. Pair ``(i, j)``
takes its score from the model whose held-out fold contains i's knockout.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .estimators import (ESTIMATORS, CoefficientVector, EstimatorError, fit_causal_dantzig,
                         fit_icp, fit_l1r, lasso_select_k)
from .dataset import INTERVENTIONAL, OBSERVATIONAL, EnvironmentView
from .scoring import RankedPredictions

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    K: int = 3
    B: int = 100
    k_lasso: int = 4
    alpha: float = 0.05
    seed: int = 0
    estimator: str = "L1"

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.k_lasso < 1:
            raise ValueError("k_lasso must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")


@dataclass(frozen=True)
class FoldAssignment:
    fold_of_row: np.ndarray
    K: int

    def rows(self, fold):
        return np.flatnonzero(self.fold_of_row == fold)

    def sizes(self):
        return np.bincount(self.fold_of_row, minlength=self.K)


def make_folds(n2: int, K: int, seed) -> FoldAssignment:
    """Random balanced partition of ``n2`` interventional rows into ``K`` folds."""
    if K < 2:
        raise ValueError("K must be at least 2")
    if n2 < K:
        raise ValueError(f"cannot split {n2} interventional rows into {K} folds")
    perm = np.random.default_rng([int(seed), 0]).permutation(n2)
    fold_of_row = np.empty(n2, dtype=np.intp)
    fold_of_row[perm] = np.arange(n2) % K
    return FoldAssignment(fold_of_row, K)


def bootstrap_rank_aggregate(per_bootstrap_ranks):
    """Elementwise mean of the per-bootstrap rank vectors."""
    ranks = np.asarray(per_bootstrap_ranks, dtype=np.float64)
    if ranks.ndim != 2 or ranks.shape[0] < 1:
        raise ValueError("need at least one rank vector")
    return ranks.mean(axis=0)


def within_target_ranks(values):
    """Rank 1 for the largest |coefficient|; ties share their average rank."""
    return rankdata(-np.abs(np.asarray(values, dtype=np.float64)), method="average")


# ---------------------------------------------------------------------------
# One (fold, target) task

def _estimate(name, obs_view, intv_view, l1, l1r, alpha):
    if name == "L1":
        return l1.values
    if name == "L1R":
        return l1r.values
    if obs_view.n < 1 or intv_view.n < 1:
        return l1r.values
    if name == "CD":
        try:
            return fit_causal_dantzig(obs_view, intv_view).values
        except EstimatorError:
            return l1r.values
    if obs_view.n < 2 or intv_view.n < 2:
        return l1r.values
    res = fit_icp(obs_view, intv_view, alpha)
    return l1r.values if res.abstained else res.maximin.values


def fit_target(ds, target, train_rows, cfg: PipelineConfig, fold, estimators):
    """Preselect, bootstrap and aggregate for one target gene.

    Returns ``(selected_genes, {estimator: (mean_rank, mean_coef)}, used_rows)``
    where ``used_rows`` is every interventional row that entered a fit.
    """
    train_rows = np.asarray(train_rows, dtype=np.intp)
    predictors = np.array([g for g in range(ds.p) if g != target], dtype=np.intp)
    X = np.vstack([ds.obs[:, predictors], ds.intv[np.ix_(train_rows, predictors)]])
    y = np.concatenate([ds.obs[:, target], ds.intv[train_rows, target]])
    coef, _ = lasso_select_k(X, y, min(cfg.k_lasso, len(predictors)))
    selected = predictors[np.flatnonzero(coef)]
    used = set(int(r) for r in train_rows)
    k = len(selected)
    if k == 0:
        empty = (np.zeros(0), np.zeros(0))
        return selected, {e: empty for e in estimators}, used

    ranks = {e: np.zeros((cfg.B, k)) for e in estimators}
    coefs = {e: np.zeros((cfg.B, k)) for e in estimators}
    obs_all = ds.obs[:, selected]
    intv_all = ds.intv[np.ix_(train_rows, selected)]
    for b in range(cfg.B):
        rng = np.random.default_rng([cfg.seed, fold, target, b, 0])
        oi = rng.integers(0, ds.n1, ds.n1)
        ii = rng.integers(0, len(train_rows), len(train_rows))
        obs_view = EnvironmentView(obs_all[oi], ds.obs[oi, target], OBSERVATIONAL,
                                   tuple(selected))
        intv_view = EnvironmentView(intv_all[ii], ds.intv[train_rows[ii], target],
                                    INTERVENTIONAL, tuple(selected))
        Xb = np.vstack([obs_view.design, intv_view.design])
        yb = np.concatenate([obs_view.response, intv_view.response])
        l1_vals, lam = lasso_select_k(Xb, yb, k)
        l1 = CoefficientVector(l1_vals, tuple(selected), penalty=lam)
        l1r = fit_l1r(l1, np.random.default_rng([cfg.seed, fold, target, b, 1]))
        for e in estimators:
            vals = _estimate(e, obs_view, intv_view, l1, l1r, cfg.alpha)
            coefs[e][b] = vals
            ranks[e][b] = within_target_ranks(vals)
    out = {e: (bootstrap_rank_aggregate(ranks[e]), coefs[e].mean(axis=0)) for e in estimators}
    return selected, out, used


# ---------------------------------------------------------------------------
# Parallel driver

_WORKER_DS = None


def _init_worker(ds):
    global _WORKER_DS
    _WORKER_DS = ds


def _run_task(args):
    fold, target, train_rows, cfg, estimators = args
    selected, out, used = fit_target(_WORKER_DS, target, train_rows, cfg, fold, estimators)
    return fold, target, selected, out, used


def _task_record(fold, target, selected, out):
    return {
        "fold": int(fold), "target": int(target),
        "genes": [int(g) for g in selected],
        "estimators": {e: {"rank": [float(x) for x in r], "coef": [float(x) for x in c]}
                       for e, (r, c) in out.items()},
    }


def _checkpoint_header(cfg, estimators, ds):
    return {"config": {**asdict(cfg), "estimator": None}, "estimators": sorted(estimators),
            "p": ds.p, "n1": ds.n1, "n2": ds.n2}


def _load_checkpoint(path, header):
    done = {}
    path = Path(path)
    if not path.exists():
        return done
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        return done
    if json.loads(lines[0]) != header:
        raise ValueError(f"checkpoint {path} was written for a different run")
    for ln in lines[1:]:
        try:
            rec = json.loads(ln)
        except json.JSONDecodeError:
            break  # truncated final line from an interrupted run
        done[(rec["fold"], rec["target"])] = rec
    return done


def score_all_tasks(ds, cfg: PipelineConfig, estimators=None, jobs=1, checkpoint=None,
                    trace=None):
    """Run every (fold, target) task; returns ``(folds, records)``.

    ``records[(fold, target)]`` holds the selected genes and, per estimator,
    the bootstrap-averaged ranks and coefficients. With ``checkpoint`` set,
    finished tasks are appended to that JSON-lines file and reused on rerun.
    """
    estimators = tuple(estimators or (cfg.estimator,))
    for e in estimators:
        if e not in ESTIMATORS:
            raise ValueError(f"unknown estimator {e!r}")
    if ds.n2 >= cfg.K:
        folds = make_folds(ds.n2, cfg.K, cfg.seed)
    else:
        # too few knockouts for K non-empty folds: one row per fold, rest empty
        log.warning("only %d interventional rows for K=%d folds", ds.n2, cfg.K)
        folds = FoldAssignment(np.arange(ds.n2, dtype=np.intp), cfg.K)
    header = _checkpoint_header(cfg, estimators, ds)
    records = _load_checkpoint(checkpoint, header) if checkpoint else {}
    fh = None
    if checkpoint:
        new_file = not Path(checkpoint).exists() or not records
        fh = open(checkpoint, "w" if new_file else "a", encoding="utf-8")
        if new_file:
            fh.write(json.dumps(header) + "\n")
    if trace is not None:
        trace.setdefault("train_rows", {})
    tasks = []
    for f in range(cfg.K):
        held_out = set(folds.rows(f).tolist())
        for j in range(ds.p):
            own = ds.knockout_row(j)
            rows = [r for r in range(ds.n2) if r not in held_out and r != own]
            if (f, j) in records:
                continue
            tasks.append((f, j, rows, cfg, estimators))

    def consume(fold, target, selected, out, used):
        rec = _task_record(fold, target, selected, out)
        records[(fold, target)] = rec
        if trace is not None:
            trace["train_rows"][(fold, target)] = frozenset(used)
        if fh:
            fh.write(json.dumps(rec) + "\n")
            fh.flush()

    try:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker,
                                     initargs=(ds,)) as pool:
                for res in pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))):
                    consume(*res)
        else:
            for f, j, rows, _, _ in tasks:
                selected, out, used = fit_target(ds, j, rows, cfg, f, estimators)
                consume(f, j, selected, out, used)
    finally:
        if fh:
            fh.close()
    return folds, records


def assemble_rankings(ds, folds: FoldAssignment, records, estimator, k_lasso, trace=None):
    """Global RankedPredictions from per-(fold, target) aggregated ranks.

    Pairs whose cause was never knocked out average the within-target rank
    and coefficient over all fold models.
    """
    p, K = ds.p, folds.K
    worst = k_lasso + 1.0
    model_fold = np.full(p, -1, dtype=np.intp)
    for g in ds.knocked_out:
        model_fold[g] = folds.fold_of_row[ds.knockout_row(g)]
    # [cause, target]; never-knocked-out causes accumulate a K-model sum
    pair_rank = np.repeat(np.where(model_fold >= 0, worst, K * worst)[:, None], p, axis=1)
    pair_coef = np.zeros((p, p))
    for (f, j), rec in records.items():
        genes = np.asarray(rec["genes"], dtype=np.intp)
        if not len(genes):
            continue
        est = rec["estimators"][estimator]
        r, c = np.asarray(est["rank"]), np.abs(est["coef"])
        mine = model_fold[genes] == f
        pair_rank[genes[mine], j] = r[mine]
        pair_coef[genes[mine], j] = c[mine]
        free = model_fold[genes] < 0
        pair_rank[genes[free], j] += r[free] - worst
        pair_coef[genes[free], j] += c[free]
    free = model_fold < 0
    pair_rank[free] /= K
    pair_coef[free] /= K
    if trace is not None:
        trace["model_fold"] = model_fold

    off = ~np.eye(p, dtype=bool)
    r, c = pair_rank[off], pair_coef[off]
    order = np.lexsort((-c, r))
    sr, sc = r[order], c[order]
    new_block = np.ones(len(order), dtype=bool)
    new_block[1:] = (sr[1:] != sr[:-1]) | (sc[1:] != sc[:-1])
    block = np.cumsum(new_block) - 1
    starts = np.flatnonzero(new_block)
    ends = np.append(starts[1:], len(order))
    avg = (starts + 1 + ends) / 2.0
    global_rank = np.empty(len(order))
    global_rank[order] = avg[block]
    ranks = np.full((p, p), np.nan)
    ranks[off] = global_rank
    return RankedPredictions(ranks)


def rank_all_pairs(ds, cfg: PipelineConfig, jobs=1, checkpoint=None, trace=None):
    """RankedPredictions over all ``p(p-1)`` ordered pairs for ``cfg.estimator``."""
    return rank_all_pairs_multi(ds, cfg, (cfg.estimator,), jobs, checkpoint, trace)[cfg.estimator]


def rank_all_pairs_multi(ds, cfg: PipelineConfig, estimators, jobs=1, checkpoint=None,
                         trace=None):
    """Like :func:`rank_all_pairs` for several estimators sharing preselection
    and bootstrap draws. Each estimator's result equals its single run."""
    folds, records = score_all_tasks(ds, cfg, estimators, jobs, checkpoint, trace)
    if trace is not None:
        trace["folds"] = folds
        trace["selected"] = {k: tuple(rec["genes"]) for k, rec in records.items()}
    return {e: assemble_rankings(ds, folds, records, e, cfg.k_lasso, trace)
            for e in estimators}
