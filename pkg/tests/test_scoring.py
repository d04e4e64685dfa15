import numpy as np
import pytest
from hypothesis import given, strategies as st

from knockbench.dataset import Dataset
from knockbench.scoring import (FULL, SYMMETRIC, GroundTruth, RankedPredictions, ScoringSet,
                                build_scoring_set, derive_ground_truth, flipped_rank_report,
                                format_flipped_rows, roc_points, scoring_set_size, top_p0_hits,
                                write_roc_tsv)


def brute_roc(ranks, truths):
    """Sort by rank, walk one pair at a time, keep the last vertex of each tie block."""
    items = sorted(zip(ranks, truths), key=lambda t: t[0])
    pts, thr = [(0, 0)], [float("nan")]
    fp = tp = 0
    for k, (r, t) in enumerate(items):
        if t:
            tp += 1
        else:
            fp += 1
        if k + 1 == len(items) or items[k + 1][0] != r:
            pts.append((fp, tp))
            thr.append(float(r))
    return pts, thr


def random_instance(rng, p, n_ko, tie_levels):
    causes = rng.choice(p, n_ko, replace=False)
    effects = rng.random((n_ko, p)) < rng.uniform(0, 1)
    gt = GroundTruth(causes, effects, p)
    ranks = rng.integers(1, tie_levels + 1, (p, p)).astype(float)
    np.fill_diagonal(ranks, np.nan)
    return gt, RankedPredictions(ranks)


# ---------------------------------------------------------------------------
# Ground truth

def test_ground_truth_out_of_range():
    obs = np.array([[5.0, -1.0], [5.0, 0.0], [5.0, 1.0]])
    above = Dataset(obs, np.array([[-40.0, 2.0]]), [0], ["a", "b"])
    inside = Dataset(obs, np.array([[-40.0, 0.0]]), [0], ["a", "b"])
    assert derive_ground_truth(above)[(0, 1)] is True
    assert derive_ground_truth(inside)[(0, 1)] is False


def test_ground_truth_domain():
    gt = GroundTruth([2], np.ones((1, 3), bool), 3)
    assert len(gt) == 2
    assert (2, 0) in gt and (2, 2) not in gt and (0, 2) not in gt
    assert gt.get((0, 2)) is None
    with pytest.raises(KeyError):
        gt[(0, 2)]


@given(st.integers(0, 2**32 - 1))
def test_ground_truth_monotone_in_observational_range(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 6))
    obs = rng.standard_normal((int(rng.integers(2, 6)), p))
    n2 = int(rng.integers(1, p + 1))
    intv = rng.standard_normal((n2, p)) * 2
    kmap = rng.choice(p, n2, replace=False)
    gt = derive_ground_truth(Dataset(obs, intv, kmap, [str(i) for i in range(p)]))
    wider = np.vstack([obs, rng.standard_normal((2, p)) * 3])
    gt2 = derive_ground_truth(Dataset(wider, intv, kmap, [str(i) for i in range(p)]))
    # widening the observational range can only remove positives
    assert np.all(gt2.effects <= gt.effects)


# ---------------------------------------------------------------------------
# Scoring sets

@pytest.mark.parametrize("n2, p, sym, full", [(1, 10, 0, 9), (3, 10, 6, 27),
                                              (1479, 6170, 2_185_962, 9_123_951)])
def test_scoring_set_size(n2, p, sym, full):
    assert scoring_set_size(n2, p, SYMMETRIC) == sym
    assert scoring_set_size(n2, p, FULL) == full


def test_scoring_set_unknown_kind():
    with pytest.raises(ValueError):
        scoring_set_size(1, 2, "other")


@given(st.integers(0, 2**32 - 1), st.integers(2, 12), st.data())
def test_symmetric_set_closure(seed, p, data):
    rng = np.random.default_rng(seed)
    n_ko = data.draw(st.integers(0, p))
    gt = GroundTruth(rng.choice(p, n_ko, replace=False), rng.random((n_ko, p)) < 0.3, p)
    sym, full = build_scoring_set(gt, SYMMETRIC), build_scoring_set(gt, FULL)
    s, f = sym.as_set(), full.as_set()
    assert all((j, i) in s for i, j in s)
    assert s <= f
    assert len(s) == len(sym) == scoring_set_size(n_ko, p, SYMMETRIC)
    assert len(f) == len(full) == scoring_set_size(n_ko, p, FULL)
    assert all(i != j for i, j in f)


# ---------------------------------------------------------------------------
# ROC

def test_roc_hand_example():
    gt = GroundTruth([0, 1, 2], np.array([[0, 1, 0], [0, 0, 0], [0, 1, 0]], bool), 3)
    ranks = np.full((3, 3), np.nan)
    ranks[0, 1], ranks[1, 0], ranks[2, 1] = 1, 2, 3
    ss = ScoringSet(np.array([[0, 1], [1, 0], [2, 1]]), FULL)
    pts, thr = roc_points(RankedPredictions(ranks), gt, ss)
    assert pts == [(0, 0), (0, 1), (1, 1), (1, 2)]
    assert thr[1:] == [1.0, 2.0, 3.0]


def test_roc_all_false_runs_along_fp_axis(rng):
    gt, rp = random_instance(rng, 6, 4, 50)
    gt = GroundTruth(gt.causes, np.zeros_like(gt.effects), gt.p)
    pts, _ = roc_points(rp, gt, build_scoring_set(gt, FULL))
    assert all(tp == 0 for _, tp in pts)
    assert pts[-1][0] == len(gt)


def test_roc_ties_form_one_vertex():
    gt = GroundTruth([0, 1], np.array([[0, 1], [0, 0]], bool), 2)
    ranks = np.array([[np.nan, 1.5], [1.5, np.nan]])
    pts, _ = roc_points(RankedPredictions(ranks), gt, build_scoring_set(gt, FULL))
    assert pts == [(0, 0), (1, 1)]


def test_roc_missing_rank_names_pair():
    gt = GroundTruth([0], np.array([[0, 1]], bool), 2)
    with pytest.raises(KeyError, match=r"\(0, 1\)"):
        roc_points(RankedPredictions(np.full((2, 2), np.nan)), gt, build_scoring_set(gt, FULL))


def test_roc_empty_set():
    gt = GroundTruth([0], np.array([[0, 1, 1]], bool), 3)
    pts, thr = roc_points(RankedPredictions(np.ones((3, 3))), gt, build_scoring_set(gt, SYMMETRIC))
    assert pts == [(0, 0)]


@pytest.mark.parametrize("seed", range(20))
def test_roc_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    gt, rp = random_instance(rng, 5, 4, 20)
    ss = build_scoring_set(gt, FULL)
    pairs = [tuple(x) for x in ss.pairs.tolist()]
    pts, thr = roc_points(rp, gt, ss)
    bpts, bthr = brute_roc([rp.ranks[i, j] for i, j in pairs], [gt[q] for q in pairs])
    assert pts == bpts
    np.testing.assert_array_equal(thr, bthr)


def test_write_roc_tsv(tmp_path):
    path = tmp_path / "roc.tsv"
    write_roc_tsv(path, [(0, 0)], [float("nan")])
    assert path.read_text() == "rank_threshold\tfp\ttp\n"
    write_roc_tsv(path, [(0, 0), (1, 2)], [float("nan"), 3.5])
    assert path.read_text().splitlines()[1:] == ["NA\t0\t0", "3.5\t1\t2"]


# ---------------------------------------------------------------------------
# Flipped ranks and top-p0

def test_flipped_report():
    gt = GroundTruth([0, 1], np.array([[0, 1, 0], [0, 0, 1]], bool), 3)
    ranks = np.array([[np.nan, 1, 4], [3, np.nan, 2], [5, 6, np.nan]], float)
    rows = flipped_rank_report(RankedPredictions(ranks), gt, 2)
    assert [(r.cause, r.effect, r.rank, r.rank_flip) for r in rows] == [(0, 1, 1, 3), (1, 2, 2, 6)]
    assert rows[0].res is True and rows[0].res_flip is False
    assert rows[1].res_flip is None
    lines = format_flipped_rows(rows, ["a", "b", "c"], "L1")
    assert lines[1] == "L1\tb\tc\tTRUE\t2.0\tNA\t6.0"


def test_top_p0_examples():
    assert top_p0_hits([0.1, -5, 0.2], {1}, 1) == 1
    assert top_p0_hits([0.0, 0.0, 0.0], {0}, 1) == 1
    assert top_p0_hits([0.0, 0.0, 0.0], {1}, 1) == 0
    with pytest.raises(ValueError):
        top_p0_hits([1.0], {0}, 2)


def brute_top(values, true, p0):
    idx = sorted(range(len(values)), key=lambda j: (-abs(values[j]), j))
    return len(set(idx[:p0]) & true)


@given(st.lists(st.one_of(st.just(0.0), st.floats(1e-200, 1e3), st.floats(-1e3, -1e-200)),
                min_size=1, max_size=10),
       st.data(), st.floats(1e-3, 1e3))
def test_top_p0_oracle_and_scale_invariance(values, data, scale):
    p = len(values)
    p0 = data.draw(st.integers(1, p))
    true = set(data.draw(st.lists(st.integers(0, p - 1), max_size=p)))
    v = np.array(values)
    got = top_p0_hits(v, true, p0)
    assert got == brute_top(values, true, p0)
    # scaling normal floats by a power of two is exact, so ties are preserved
    k = int(np.round(np.log2(scale)))
    assert top_p0_hits(v * 2.0 ** k, true, p0) == got
    assert top_p0_hits(-v, true, p0) == got
