"""Ground truth, scoring sets, ROC curves and rank diagnostics.

Pairs are ordered ``(cause, effect)`` tuples of gene indices. Ground truth
exists only for causes that were knocked out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FULL = "full"
SYMMETRIC = "symmetric"


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Knockout ground truth as a dense ``(n_knockouts, p)`` boolean matrix.

    Row ``r`` belongs to cause ``causes[r]``; the self entry of each row is
    outside the domain and always False.
    """

    causes: np.ndarray
    effects: np.ndarray
    p: int

    def __post_init__(self):
        causes = np.asarray(self.causes, dtype=np.intp)
        effects = np.asarray(self.effects, dtype=bool).reshape(len(causes), self.p)
        effects = effects.copy()
        effects[np.arange(len(causes)), causes] = False
        causes.flags.writeable = False
        effects.flags.writeable = False
        object.__setattr__(self, "causes", causes)
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "_row", {int(c): r for r, c in enumerate(causes)})

    def __len__(self):
        return len(self.causes) * (self.p - 1)

    def __contains__(self, pair):
        i, j = pair
        return i != j and 0 <= j < self.p and int(i) in self._row

    def __getitem__(self, pair):
        i, j = pair
        if (i, j) not in self:
            raise KeyError(pair)
        return bool(self.effects[self._row[int(i)], j])

    def get(self, pair, default=None):
        return self[pair] if pair in self else default

    def pairs(self):
        """All pairs in the domain, as an ``(m, 2)`` array (cause-major order)."""
        k = len(self.causes)
        cause = np.repeat(self.causes, self.p)
        effect = np.tile(np.arange(self.p), k)
        keep = cause != effect
        return np.column_stack([cause[keep], effect[keep]])

    def truth(self, pairs):
        pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
        rows = np.array([self._row[int(i)] for i in pairs[:, 0]], dtype=np.intp)
        return self.effects[rows, pairs[:, 1]] if len(rows) else np.zeros(0, bool)

    @property
    def positive_fraction(self) -> float:
        n = len(self)
        return float(self.effects.sum()) / n if n else 0.0


def derive_ground_truth(ds) -> GroundTruth:
    """Gene i affects j when j's value in i's knockout falls strictly outside
    the observational ``[min, max]`` of j."""
    lo = ds.obs.min(axis=0)
    hi = ds.obs.max(axis=0)
    effects = (ds.intv < lo) | (ds.intv > hi)
    return GroundTruth(np.asarray(ds.knockout_map, dtype=np.intp), effects, ds.p)


@dataclass(frozen=True, eq=False)
class ScoringSet:
    pairs: np.ndarray
    kind: str

    def __len__(self):
        return len(self.pairs)

    def as_set(self):
        return {(int(i), int(j)) for i, j in self.pairs}


def scoring_set_size(n2: int, p: int, kind: str) -> int:
    """Cardinality of the scoring set without materializing it."""
    if kind == FULL:
        return n2 * (p - 1)
    if kind == SYMMETRIC:
        return n2 * (n2 - 1)
    raise ValueError(f"unknown scoring kind {kind!r}")


def build_scoring_set(gt: GroundTruth, kind: str) -> ScoringSet:
    """``full``: every pair with ground truth. ``symmetric``: pairs whose cause
    and effect were both knocked out, so each pair's reverse is also scored."""
    pairs = gt.pairs()
    if kind == SYMMETRIC:
        knocked = np.zeros(gt.p, dtype=bool)
        knocked[gt.causes] = True
        pairs = pairs[knocked[pairs[:, 1]]]
    elif kind != FULL:
        raise ValueError(f"unknown scoring kind {kind!r}")
    return ScoringSet(pairs, kind)


@dataclass(frozen=True, eq=False)
class RankedPredictions:
    """Rank per ordered pair, stored as a dense ``p x p`` matrix.

    Lower is more likely causal; the diagonal is NaN. Fractional ranks are
    average ranks over ties.
    """

    ranks: np.ndarray

    def __post_init__(self):
        r = np.array(self.ranks, dtype=np.float64)
        r.flags.writeable = False
        object.__setattr__(self, "ranks", r)

    @property
    def p(self):
        return self.ranks.shape[0]

    def rank(self, pair):
        i, j = pair
        v = self.ranks[i, j]
        if i == j or not np.isfinite(v):
            raise KeyError(pair)
        return float(v)

    def lookup(self, pairs):
        pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
        return self.ranks[pairs[:, 0], pairs[:, 1]]

    @classmethod
    def from_scores(cls, score_matrix):
        """Average ranks of off-diagonal entries, ascending ``score_matrix``."""
        from scipy.stats import rankdata

        s = np.asarray(score_matrix, dtype=np.float64)
        p = s.shape[0]
        off = ~np.eye(p, dtype=bool)
        ranks = np.full((p, p), np.nan)
        ranks[off] = rankdata(s[off], method="average")
        return cls(ranks)


def roc_points(rp: RankedPredictions, gt: GroundTruth, ss: ScoringSet):
    """ROC vertices ``(fp, tp)`` scanning ``ss`` by ascending rank.

    Tied ranks are one block and one vertex. Returns ``(points, thresholds)``
    where ``points`` starts at ``(0, 0)`` and ``thresholds[k]`` is the rank of
    the block ending at vertex ``k`` (NaN for the origin).
    """
    pairs = np.asarray(ss.pairs, dtype=np.intp).reshape(-1, 2)
    ranks = rp.lookup(pairs) if len(pairs) else np.zeros(0)
    bad = ~np.isfinite(ranks)
    if np.any(bad):
        i, j = pairs[np.argmax(bad)]
        raise KeyError(f"pair ({i}, {j}) has no rank")
    truth = gt.truth(pairs)
    order = np.argsort(ranks, kind="stable")
    ranks, truth = ranks[order], truth[order]
    tp = np.cumsum(truth)
    fp = np.arange(1, len(truth) + 1) - tp
    last = np.flatnonzero(np.append(ranks[1:] != ranks[:-1], True)) if len(ranks) else []
    points = [(0, 0)] + [(int(fp[k]), int(tp[k])) for k in last]
    thresholds = [float("nan")] + [float(ranks[k]) for k in last]
    return points, thresholds


@dataclass(frozen=True)
class FlippedRow:
    cause: int
    effect: int
    res: bool
    rank: float
    res_flip: bool | None
    rank_flip: float


def flipped_rank_report(rp: RankedPredictions, gt: GroundTruth, top_n: int):
    """Best-ranked ``top_n`` pairs with ground truth, each next to its reverse.

    ``res_flip`` is None when the reverse knockout was not performed.
    """
    pairs = gt.pairs()
    ranks = rp.lookup(pairs)
    order = np.lexsort((pairs[:, 1], pairs[:, 0], ranks))[:top_n]
    rows = []
    for k in order:
        i, j = int(pairs[k, 0]), int(pairs[k, 1])
        rows.append(FlippedRow(i, j, gt[(i, j)], float(ranks[k]),
                               gt.get((j, i)), float(rp.ranks[j, i])))
    return rows


def top_p0_hits(coeffs, true_causes, p0: int) -> int:
    """Number of true causes among the ``p0`` largest |coefficients|.

    Ties go to the lower predictor index.
    """
    values = np.asarray(getattr(coeffs, "values", coeffs), dtype=np.float64)
    if p0 > len(values):
        raise ValueError("p0 exceeds the number of predictors")
    order = np.lexsort((np.arange(len(values)), -np.abs(values)))
    return sum(1 for j in order[:p0] if int(j) in true_causes)


# ---------------------------------------------------------------------------
# Text output

def _fmt_bool(v):
    return "NA" if v is None else ("TRUE" if v else "FALSE")


def _fmt_rank(v):
    return repr(float(v)) if np.isfinite(v) else "NA"


def write_roc_tsv(path, points, thresholds):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rank_threshold\tfp\ttp\n")
        if len(points) <= 1:
            return
        for (fp, tp), thr in zip(points, thresholds):
            fh.write(f"{_fmt_rank(thr)}\t{fp}\t{tp}\n")


FLIPPED_HEADER = ("cause", "effect", "res", "rank", "res-flip", "rank-flip")


def format_flipped_rows(rows, gene_names=None, estimator=None):
    name = (lambda g: gene_names[g]) if gene_names is not None else str
    lines = []
    for r in rows:
        cells = [name(r.cause), name(r.effect), _fmt_bool(r.res), _fmt_rank(r.rank),
                 _fmt_bool(r.res_flip), _fmt_rank(r.rank_flip)]
        if estimator is not None:
            cells.insert(0, estimator)
        lines.append("\t".join(cells))
    return lines
