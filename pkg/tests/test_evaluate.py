import itertools
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from PIL import Image
from scipy.stats import wilcoxon as scipy_wilcoxon

from fractex._validation import DataError, ParameterError
from fractex.evaluate import (
    WalkCache, brodatz_holdout, check_no_leakage, compare_reports, extract_patches,
    lopo_images, make_lopo_folds, per_fold_accuracies, report_json, report_text,
    run_lopo, score_run, sweep_levels, termination_depths, wilcoxon_signed_rank)
from fractex.features import FeatureMatrix
from fractex.synth import ClassSpec, SynthSpec, gen_corpus, generate


def exact_oracle(d):
    """Two-sided exact p by listing every sign assignment of the ranks."""
    d = np.asarray([v for v in d if v != 0], dtype=float)
    mags = np.abs(d)
    ranks = np.array([np.sum(mags < m) + (np.sum(mags == m) + 1) / 2 for m in mags])
    w = ranks[d > 0].sum()
    stats = [sum(r for r, s in zip(ranks, signs) if s)
             for signs in itertools.product([0, 1], repeat=d.size)]
    lo = np.mean([s <= w + 1e-9 for s in stats])
    hi = np.mean([s >= w - 1e-9 for s in stats])
    return min(1.0, 2 * min(lo, hi))


@pytest.fixture(scope="module")
def tiny_corpus():
    classes = [ClassSpec("stripes", SynthSpec("STRIPES", 64, period=8.0, noise=0.2), 6, 3),
               ClassSpec("blobs", SynthSpec("BLOBS", 64, scale=3.0), 6, 3)]
    items = gen_corpus(classes, seed=1)
    return ([it.image.astype(float) for it in items], [it.label for it in items],
            [it.patient for it in items])


# ------------------------------------------------------------------- folds

def test_fold_plan_paper_geometry():
    patients = np.repeat([f"p{i:02d}" for i in range(20)], 16)
    folds = make_lopo_folds(patients)
    assert len(folds) == 20
    assert all(f.test.size == 16 and f.train.size == 304 for f in folds)
    assert check_no_leakage(folds, patients)


def test_fold_plan_minimal_and_sorted():
    folds = make_lopo_folds(["b", "a", "b"])
    assert [f.held_out for f in folds] == ["a", "b"]
    np.testing.assert_array_equal(folds[1].test, [0, 2])


@given(st.lists(st.sampled_from("abcde"), min_size=4, max_size=30).filter(
    lambda p: len(set(p)) >= 2), st.randoms())
def test_fold_membership_is_order_free(patients, rnd):
    perm = list(range(len(patients)))
    rnd.shuffle(perm)
    shuffled = [patients[i] for i in perm]
    a = {f.held_out: {i for i in f.test} for f in make_lopo_folds(patients)}
    b = {f.held_out: {perm[i] for i in f.test} for f in make_lopo_folds(shuffled)}
    assert a == b
    check_no_leakage(make_lopo_folds(shuffled), shuffled)


def test_fold_plan_rejects():
    with pytest.raises(DataError):
        make_lopo_folds(["a", "a"])
    with pytest.raises(DataError):
        make_lopo_folds(["a", "a", "b"], ["x", "y", "x"])


def test_leakage_is_detected():
    folds = make_lopo_folds(["a", "a", "b", "b"])
    folds[0].train = np.array([1, 2, 3])
    with pytest.raises(DataError):
        check_no_leakage(folds, ["a", "a", "b", "b"])


# ----------------------------------------------------------------- metrics

def test_score_run_hand_case():
    cm, rep = score_run(list("ABBB"), list("AABB"), list("ABCD"))
    pa = rep["per_class"]["A"]
    assert pa["sensitivity"] == 0.5
    assert pa["specificity"] == 1.0
    assert rep["overall_accuracy"] == 0.75
    assert rep["per_class"]["C"]["sensitivity"] is None
    np.testing.assert_array_equal(cm.counts[:2, :2], [[1, 1], [0, 2]])


def test_score_run_perfect():
    cm, rep = score_run(list("abcab"), list("abcab"))
    np.testing.assert_array_equal(cm.counts, np.diag([2, 2, 1]))
    for pc in rep["per_class"].values():
        assert pc["sensitivity"] == pc["specificity"] == 1.0


@given(st.lists(st.tuples(st.sampled_from("xyz"), st.sampled_from("xyz")),
                min_size=1, max_size=40))
def test_score_run_rates_match_counts(pairs):
    truth, preds = zip(*pairs)
    cm, rep = score_run(preds, truth, list("xyz"))
    c = cm.counts
    assert c.min() >= 0 and np.trace(c) <= c.sum()
    assert abs(rep["overall_accuracy"] - np.trace(c) / c.sum()) <= 1e-12
    for i, name in enumerate("xyz"):
        assert c[i].sum() == sum(t == name for t in truth)
        sens = rep["per_class"][name]["sensitivity"]
        if sens is not None:
            assert abs(sens - c[i, i] / c[i].sum()) <= 1e-12
            assert 0 <= sens <= 1


def test_score_run_rejects():
    with pytest.raises(ParameterError):
        score_run(["a"], ["a", "b"])
    with pytest.raises(ParameterError):
        score_run(["q"], ["a"], ["a"])


def test_confusion_csv():
    cm, _ = score_run(list("ab"), list("aa"), ["a", "b"])
    assert cm.to_csv() == "true\\pred,a,b\na,1,1\nb,0,0\n"


# ---------------------------------------------------------------- Wilcoxon

def test_wilcoxon_all_positive_five():
    r = wilcoxon_signed_rank([1, 2, 3, 4, 5], [0, 0, 0, 0, 0])
    assert abs(r.pvalue - 0.0625) <= 1e-12
    assert r.statistic == 0.0 and r.w_plus == 15.0 and r.method == "exact"


def test_wilcoxon_degenerate():
    r = wilcoxon_signed_rank([0.5, 0.7, 0.9], [0.5, 0.7, 0.9])
    assert r.pvalue == 1.0 and r.method == "degenerate"


def test_wilcoxon_rejects():
    with pytest.raises(DataError):
        wilcoxon_signed_rank([1, 2, 3, 4], [0, 0, 0, 0])
    with pytest.raises(ParameterError):
        wilcoxon_signed_rank([1, 2], [1])
    with pytest.raises(ParameterError):
        wilcoxon_signed_rank([1, 2, 3, 4, 5], [0] * 5, method="bogus")


@given(st.lists(st.integers(-4, 4), min_size=5, max_size=11).filter(
    lambda d: sum(v != 0 for v in d) >= 5))
def test_wilcoxon_exact_matches_enumeration(d):
    r = wilcoxon_signed_rank(d, [0] * len(d), method="exact")
    assert abs(r.pvalue - exact_oracle(d)) <= 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_wilcoxon_exact_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=10)
    ours = wilcoxon_signed_rank(d, np.zeros(10), method="exact").pvalue
    ref = scipy_wilcoxon(d, method="exact").pvalue
    assert abs(ours - ref) <= 1e-12


@pytest.mark.parametrize("seed", range(10))
def test_wilcoxon_normal_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    d = np.round(rng.normal(size=25), 1)
    d = d[d != 0]
    ours = wilcoxon_signed_rank(d, np.zeros(d.size), method="normal")
    ref = scipy_wilcoxon(d, method="approx", correction=True)
    assert ours.method == "normal"
    assert abs(ours.pvalue - ref.pvalue) <= 1e-10
    assert ours.statistic == ref.statistic


@given(st.lists(st.floats(-1, 1).filter(lambda v: abs(v) > 1e-6), min_size=12,
                max_size=12, unique_by=abs))
def test_wilcoxon_exact_and_normal_agree_at_twelve(d):
    ex = wilcoxon_signed_rank(d, [0] * 12)
    nm = wilcoxon_signed_rank(d, [0] * 12, method="normal")
    assert ex.method == "exact"
    assert abs(ex.pvalue - nm.pvalue) <= 0.02


# ------------------------------------------------------- LOPO on features

def _fm(rng, n_patients=4, per=3, shift=3.0):
    X, labels, patients = [], [], []
    for c, lab in enumerate("ab"):
        for p in range(n_patients):
            for _ in range(per):
                X.append(rng.normal(size=3) + shift * c)
                labels.append(lab)
                patients.append(f"{lab}{p}")
    return FeatureMatrix(np.array(X), labels, patients, ["f0", "f1", "f2"])


@pytest.mark.parametrize("clf", ["nbc", "knn", "svm"])
def test_run_lopo(clf, rng):
    fm = _fm(rng)
    kw = {"C_grid": [1.0], "gamma_grid": [0.5]} if clf == "svm" else {}
    cm, rep, preds = run_lopo(fm, clf, n_jobs=1, **kw)
    assert len(rep["folds"]) == 8
    assert rep["n"] == 24 and cm.counts.sum() == 24
    assert rep["overall_accuracy"] >= 0.9
    assert np.mean(per_fold_accuracies(rep)) == pytest.approx(rep["overall_accuracy"])
    if clf == "svm":
        assert all("n_support" in f for f in rep["folds"])


def test_run_lopo_with_selection(rng):
    fm = _fm(rng)
    fm.X = np.column_stack([fm.X, 2 * fm.X[:, 0]])
    fm.names.append("dup")
    _, rep, _ = run_lopo(fm, "nbc", select=True, n_jobs=1)
    assert all(f["n_selected"] <= 3 for f in rep["folds"])


def test_run_lopo_is_deterministic(rng):
    fm = _fm(rng)
    a = report_json(run_lopo(fm, "svm", seed=3, n_jobs=1, C_grid=[1.0, 4.0],
                             gamma_grid=[0.5])[1], {"seed": 3})
    b = report_json(run_lopo(fm, "svm", seed=3, n_jobs=2, C_grid=[1.0, 4.0],
                             gamma_grid=[0.5])[1], {"seed": 3})
    assert a == b


# ---------------------------------------------------------- LOPO on images

def test_lopo_images(tiny_corpus):
    imgs, labels, patients = tiny_corpus
    cache = WalkCache(imgs, "bbs_fd", max_levels=2, n_jobs=1)
    cm, rep, preds = lopo_images(cache, labels, patients, "nbc", n_jobs=1)
    assert len(rep["folds"]) == 6
    assert len(rep["basis_size"]) == 6
    assert all(s % 4 == 0 for s in rep["basis_size"])
    assert rep["overall_accuracy"] >= 0.8


def test_lopo_images_basis_ignores_held_out_patient(tiny_corpus):
    imgs, labels, patients = tiny_corpus
    cache = WalkCache(imgs, "bbs_e", max_levels=2, n_jobs=1)
    folds = make_lopo_folds(patients, labels)
    # corrupting the held-out walks cannot change that fold's basis
    b0 = cache.basis_for(folds[0].train, labels)
    for r in folds[0].test:
        cache.paths[r] = type(cache.paths[r])()
    assert cache.basis_for(folds[0].train, labels) == b0


def test_walk_cache_depths(tiny_corpus):
    imgs, _, _ = tiny_corpus
    cache = WalkCache(imgs[:3], "bbs_e", max_levels=3, depths=[1, 2, 3], n_jobs=1)
    assert [p.depth for p in cache.paths] == [1, 2, 3]


def test_termination_depths(tiny_corpus):
    imgs, labels, _ = tiny_corpus
    cache = WalkCache(imgs, "bbs_fd", max_levels=3, n_jobs=1)
    depths = termination_depths(cache, labels)
    assert set(depths) == {"stripes", "blobs"}
    assert all(1 <= d <= 3 for d in depths.values())


def test_sweep_single_level(tiny_corpus):
    imgs, labels, patients = tiny_corpus
    res = sweep_levels(imgs, labels, patients, "bbs_fd", "nbc", max_level=1, n_jobs=1)
    assert len(res["per_level"]) == 1 and res["per_level"][0]["level"] == 1
    lr = res["lambda_run"]
    assert lr["lambda"] == 0.012
    assert set(lr["class_depths"]) == {"stripes", "blobs"}


def test_sweep_is_reproducible(tiny_corpus):
    imgs, labels, patients = tiny_corpus
    a = sweep_levels(imgs, labels, patients, "bbs_e", "knn", max_level=2, n_jobs=1)
    b = sweep_levels(imgs, labels, patients, "bbs_e", "knn", max_level=2, n_jobs=1)
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert "lambda_run" not in a and len(a["per_level"]) == 2
    with pytest.raises(ParameterError):
        sweep_levels(imgs, labels, patients, max_level=0)


# --------------------------------------------------------- Brodatz harness

def test_extract_patches():
    img = np.arange(64 * 64).reshape(64, 64)
    p = extract_patches(img, 32, 16, 9)
    assert len(p) == 9
    np.testing.assert_array_equal(p[1], img[0:32, 16:48])
    padded = extract_patches(np.zeros((40, 40)), 32, 16, 256)
    assert len(padded) == 256 and padded[-1].shape == (32, 32)


def test_brodatz_holdout_on_stand_ins(tmp_path):
    specs = [SynthSpec("STRIPES", 128, period=6.0, noise=0.1, seed=1),
             SynthSpec("BLOBS", 128, scale=2.0, seed=2),
             SynthSpec("FBM", 128, hurst=0.2, seed=3)]
    for i, s in enumerate(specs):
        Image.fromarray(generate(s)).save(tmp_path / f"tex{i}.png")
    cm, rep = brodatz_holdout(tmp_path, "nbc", n_train=8, n_test=16, max_levels=2,
                              n_jobs=1)
    assert rep["n"] == 48
    assert rep["class_names"] == ["tex0", "tex1", "tex2"]
    assert rep["overall_accuracy"] >= 0.9


def test_brodatz_needs_two_images(tmp_path):
    with pytest.raises(DataError):
        brodatz_holdout(tmp_path)


# --------------------------------------------------------------- rendering

def test_report_json_and_text(rng):
    _, rep, _ = run_lopo(_fm(rng), "nbc", n_jobs=1)
    doc = json.loads(report_json(rep, {"method": "x"}))
    assert len(doc["config_hash"]) == 64
    assert doc["config"] == {"method": "x"}
    text = report_text(rep)
    assert text.startswith("overall accuracy:")
    assert "sensitivity" in text and "confusion (row %)" in text


def test_report_json_maps_nan_to_null():
    assert json.loads(report_json({"v": float("nan")}))["v"] is None


def test_compare_reports(rng):
    _, rep, _ = run_lopo(_fm(rng, n_patients=3), "nbc", n_jobs=1)
    same = compare_reports(rep, rep)
    assert same["p"] == 1.0 and same["method"] == "degenerate"
    other = dict(rep, folds=rep["folds"][::-1])
    with pytest.raises(DataError):
        compare_reports(rep, other)
