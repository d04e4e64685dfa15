"""Linear-Gaussian knockout simulator and the Strong/Weak trial study.

Nodes are 0-based: with ``p + 1`` nodes the target is ``p // 2``, its causes
are the ``p0`` nodes just before it and its effects the ``p0`` nodes just
after it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .dataset import INTERVENTIONAL, OBSERVATIONAL, Dataset, EnvironmentView
from .estimators import (CoefficientVector, EstimatorError, fit_causal_dantzig, fit_icp,
                         fit_l1r, lasso_select_k)
from .scoring import top_p0_hits

STRONG = "Strong"
WEAK = "Weak"
REGIME_STRENGTHS = {STRONG: (1.0, 1.0), WEAK: (1.0, 1000.0)}
FULL_SCALE_NT = (20, 40, 80, 160, 320)
FULL_SCALE_P = 6400
TRIAL_ESTIMATORS = ("L1", "L1R", "CD", "ICP")


@dataclass(frozen=True)
class SimConfig:
    p: int = 6400
    n_t: float = 20
    p0: int = 1
    regime: str = STRONG
    n1: int = 300
    n2: int | None = None
    shift: float = -40.0
    noise_sd: float = 1.0
    N: int = 100
    seed: int = 0
    k_lasso: int = 4
    alpha: float = 0.05

    def __post_init__(self):
        if self.n2 is None:
            object.__setattr__(self, "n2", self.p // 4)
        if self.p < 4 or self.p % 2:
            raise ValueError(f"p must be an even number >= 4, got {self.p}")
        if self.p0 not in (1, 2):
            raise ValueError(f"p0 must be 1 or 2, got {self.p0}")
        if self.regime not in REGIME_STRENGTHS:
            raise ValueError(f"regime must be one of {sorted(REGIME_STRENGTHS)}")
        if not 0 < self.n_t <= self.p:
            raise ValueError(f"n_t must lie in (0, p], got {self.n_t}")
        if not 0 <= self.n2 <= self.p - (2 * self.p0 + 1):
            raise ValueError(f"n2={self.n2} exceeds the knockout candidate pool")
        if self.n1 < 2 or self.N < 1 or self.noise_sd <= 0:
            raise ValueError("need n1 >= 2, N >= 1 and noise_sd > 0")
        if not 1 <= self.k_lasso <= self.p:
            raise ValueError("k_lasso out of range")

    @property
    def s1(self) -> float:
        return REGIME_STRENGTHS[self.regime][0]

    @property
    def s2(self) -> float:
        return REGIME_STRENGTHS[self.regime][1]

    @property
    def n_nodes(self) -> int:
        return self.p + 1

    @property
    def target(self) -> int:
        return self.p // 2

    @property
    def causes(self) -> tuple:
        return tuple(range(self.target - self.p0, self.target))

    @property
    def effects(self) -> tuple:
        return tuple(range(self.target + 1, self.target + 1 + self.p0))

    def to_dict(self):
        return asdict(self)


def reduced_scale_configs(p=400, N=100, seed=0, nts=FULL_SCALE_NT, p0s=(1, 2),
                          regimes=(STRONG, WEAK)):
    """Full-scale grid shrunk to ``p`` genes, keeping edge density and n2 = p/4."""
    out = []
    for p0 in p0s:
        for nt in nts:
            for regime in regimes:
                out.append(SimConfig(p=p, n_t=math.ceil(nt * p / FULL_SCALE_P), p0=p0,
                                     regime=regime, n1=min(300, p // 2), n2=p // 4,
                                     N=N, seed=seed))
    return out


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    """Strictly upper-triangular weights; ``A[i, j]`` is the effect of node i on j."""

    A: np.ndarray
    target_index: int
    causes: tuple = field(default=())
    effects: tuple = field(default=())

    @property
    def n_nodes(self):
        return self.A.shape[0]


def draw_edges(n_nodes, density, rng):
    """i.i.d. entries: +1 and -1 each with probability density/2, else 0."""
    u = rng.random((n_nodes, n_nodes))
    half = density / 2.0
    return np.where(u < half, -1.0, 0.0) + np.where(u >= 1.0 - half, 1.0, 0.0)


def normalize_columns(A):
    norms = np.sqrt(np.einsum("ij,ij->j", A, A))
    out = A.copy()
    nz = norms > 0
    out[:, nz] /= norms[nz]
    return out


def generate_dag(cfg: SimConfig, rng) -> AdjacencyMatrix:
    rng = np.random.default_rng(rng)
    density = cfg.n_t / cfg.p
    if density > 1:
        raise ValueError("n_t / p must not exceed 1")
    A = np.triu(draw_edges(cfg.n_nodes, density, rng), k=1)
    t = cfg.target
    A[t, :] = 0.0
    A[:, t] = 0.0
    for c in cfg.causes:
        A[c, t] = cfg.s1 * rng.choice((-1.0, 1.0))
    for e in cfg.effects:
        A[t, e] = cfg.s2 * rng.choice((-1.0, 1.0))
    return AdjacencyMatrix(normalize_columns(A), t, cfg.causes, cfg.effects)


def propagate(A, noise):
    """Solve ``X = X A + noise`` row-wise (forward substitution in node order)."""
    A = getattr(A, "A", A)
    U = np.eye(A.shape[0]) - A
    return solve_triangular(U, noise.T, trans="T", lower=False, unit_diagonal=True).T


def sample_observational(A, n, rng, noise_sd=1.0):
    rng = np.random.default_rng(rng)
    A = getattr(A, "A", A)
    noise = noise_sd * rng.standard_normal((n, A.shape[0]))
    return propagate(A, noise)


def knockout_candidates(adj: AdjacencyMatrix):
    protected = {adj.target_index, *adj.causes, *adj.effects}
    return np.array([g for g in range(adj.n_nodes) if g not in protected], dtype=np.intp)


def sample_knockouts(adj: AdjacencyMatrix, cfg: SimConfig, rng):
    """One sample per knocked-out gene; the gene's structural equation gets
    ``cfg.shift`` added and the shift propagates downstream.

    Noise is drawn before the knockout genes, so with ``shift=0`` the matrix
    equals ``sample_observational(adj, cfg.n2, rng)`` for the same seed.
    """
    rng = np.random.default_rng(rng)
    noise = cfg.noise_sd * rng.standard_normal((cfg.n2, adj.n_nodes))
    pool = knockout_candidates(adj)
    if len(pool) < cfg.n2:
        raise ValueError(f"only {len(pool)} knockout candidates for n2={cfg.n2}")
    genes = rng.choice(pool, size=cfg.n2, replace=False)
    noise[np.arange(cfg.n2), genes] += cfg.shift
    return propagate(adj.A, noise), [int(g) for g in genes]


def gene_names(n_nodes):
    width = len(str(n_nodes - 1))
    return [f"G{i:0{width}d}" for i in range(n_nodes)]


def simulate_dataset(cfg: SimConfig, rng):
    """Draw a DAG and a full two-environment Dataset; returns ``(ds, adj)``."""
    rng = np.random.default_rng(rng)
    adj = generate_dag(cfg, rng)
    obs = sample_observational(adj, cfg.n1, rng, cfg.noise_sd)
    intv, kmap = sample_knockouts(adj, cfg, rng)
    return Dataset(obs, intv, kmap, gene_names(adj.n_nodes)), adj


# ---------------------------------------------------------------------------
# Trials

def _embed(values, positions, size):
    out = np.zeros(size)
    out[positions] = values
    return out


def trial_rng(seed, trial):
    return np.random.default_rng([int(seed), int(trial)])


def run_trial(cfg: SimConfig, trial: int) -> dict:
    """Top-p0 hit counts of each estimator on one simulated dataset."""
    rng = trial_rng(cfg.seed, trial)
    adj = generate_dag(cfg, rng)
    obs = sample_observational(adj, cfg.n1, rng, cfg.noise_sd)
    intv, _ = sample_knockouts(adj, cfg, rng)

    t = adj.target_index
    predictors = np.array([g for g in range(adj.n_nodes) if g != t])
    pos = {int(g): k for k, g in enumerate(predictors)}
    true_causes = {pos[c] for c in adj.causes}
    size = len(predictors)

    X = np.vstack([obs[:, predictors], intv[:, predictors]])
    y = np.concatenate([obs[:, t], intv[:, t]])
    l1_values, lam = lasso_select_k(X, y, cfg.k_lasso)
    l1 = CoefficientVector(l1_values, tuple(predictors), penalty=lam)
    l1r = fit_l1r(l1, rng)
    selected = np.flatnonzero(l1.values)

    chosen = tuple(int(g) for g in predictors[selected])
    obs_view = EnvironmentView(obs[:, predictors[selected]], obs[:, t], OBSERVATIONAL, chosen)
    intv_view = EnvironmentView(intv[:, predictors[selected]], intv[:, t], INTERVENTIONAL, chosen)

    cd = l1r.values
    if len(selected):
        try:
            cd = _embed(fit_causal_dantzig(obs_view, intv_view).values, selected, size)
        except EstimatorError:
            pass
    icp = l1r.values
    if len(selected):
        res = fit_icp(obs_view, intv_view, cfg.alpha)
        if not res.abstained:
            icp = _embed(res.maximin.values, selected, size)

    coefs = {"L1": l1.values, "L1R": l1r.values, "CD": cd, "ICP": icp}
    return {name: top_p0_hits(v, true_causes, cfg.p0) for name, v in coefs.items()}


def _run_trial_args(args):
    return run_trial(*args)


def run_trials(cfg: SimConfig, jobs=1, done=None, on_trial=None):
    """Mean top-p0 hits per estimator over ``cfg.N`` trials.

    ``done`` maps already finished trial indices to their hit dicts (resume);
    ``on_trial(index, hits)`` is called for each newly finished trial.
    """
    results = dict(done or {})
    todo = [t for t in range(cfg.N) if t not in results]
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for t, hits in zip(todo, pool.map(_run_trial_args, [(cfg, t) for t in todo])):
                results[t] = hits
                if on_trial:
                    on_trial(t, hits)
    else:
        for t in todo:
            hits = run_trial(cfg, t)
            results[t] = hits
            if on_trial:
                on_trial(t, hits)
    return {name: float(np.mean([results[t][name] for t in range(cfg.N)]))
            for name in TRIAL_ESTIMATORS}


def format_results_table(cells) -> str:
    """Tab-separated table with one row per (p0, n_t) and columns estimator x regime.

    ``cells`` maps ``(p0, n_t, regime)`` to an estimator -> mean dict.
    """
    regimes = [r for r in (STRONG, WEAK) if any(k[2] == r for k in cells)]
    header = ["p0", "n_t"] + [f"{r}_{e}" for r in regimes for e in TRIAL_ESTIMATORS]
    lines = ["\t".join(header)]
    for p0, nt in sorted({(k[0], k[1]) for k in cells}):
        row = [str(p0), f"{nt:g}"]
        for r in regimes:
            means = cells.get((p0, nt, r))
            for e in TRIAL_ESTIMATORS:
                row.append("NA" if means is None else f"{means[e]:.2f}")
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"
