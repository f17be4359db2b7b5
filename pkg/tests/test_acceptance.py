"""Acceptance suite: one or more tests per criterion, tagged with
``@pytest.mark.criterion``; the terminal summary prints one PASS/FAIL/SKIP
line per criterion.

Criteria 8-10 drive the command-line pipeline end to end on the 4-class
synthetic corpus (4 classes x 5 patients x 16 images, 256 x 256) and take
several minutes.  Criterion 11 runs only when ``BRODATZ_DIR`` points at a
directory holding eight texture images.
"""

import json
import os
import time

import numpy as np
import pytest

from fractex.bestbasis import DEFAULT_LAMBDA, SelectionConfig, SubbandAnalyzer, bbs_fd
from fractex.classify import (GaussianNaiveBayes, KNearestNeighbors,
                              SupportVectorClassifier, rbf_kernel, solve_binary)
from fractex.cli import main
from fractex.evaluate import (brodatz_holdout, check_no_leakage, make_lopo_folds,
                              wilcoxon_signed_rank)
from fractex.features import correlation_prune, divergence_rank, divergence_scores
from fractex.fractal import fd_image, lacunarity
from fractex.synth import SynthSpec, gen_fbm_surface, read_manifest
from fractex.wavelet import BANDS, FilterBank, decompose_level, SubbandNode

from test_classify import knn_oracle, qp_decision
from test_wavelet import _oracle


def criterion(number, title):
    return pytest.mark.criterion(number, title)


# ------------------------------------------------------------- criterion 1

@criterion(1, "filter identities")
def test_filter_identities():
    t0 = time.perf_counter()
    fb = FilterBank.daubechies8()
    h, g = np.asarray(fb.lowpass), np.asarray(fb.highpass)
    assert abs(h.sum() - 1) <= 1e-6
    assert abs(np.sum(h ** 2) - 0.5) <= 1e-6
    for m in (1, 2, 3):
        assert abs(np.dot(h[:-2 * m], h[2 * m:])) <= 1e-6
    assert abs(g.sum()) <= 1e-6
    assert time.perf_counter() - t0 < 1.0


# ------------------------------------------------------------- criterion 2

@criterion(2, "wavelet oracle equivalence")
def test_wavelet_oracle():
    t0 = time.perf_counter()
    fb = FilterBank.daubechies8()
    rng = np.random.default_rng(2)
    for _ in range(25):
        x = rng.normal(size=(16, 16))
        kids = decompose_level(SubbandNode((), x), fb)
        ref = _oracle(x, fb)
        for b in BANDS:
            np.testing.assert_allclose(kids[b].coeffs, ref[b], rtol=0, atol=1e-9)
    kids = decompose_level(SubbandNode((), np.full((16, 16), 3.0)), fb)
    np.testing.assert_allclose(kids["LL"].coeffs, 3.0, atol=1e-5)
    for b in ("LH", "HL", "HH"):
        np.testing.assert_allclose(kids[b].coeffs, 0.0, atol=1e-5)
    assert time.perf_counter() - t0 < 10.0


# ------------------------------------------------------------- criterion 3

@criterion(3, "FD oracle on fBm surfaces")
def test_fd_oracle():
    t0 = time.perf_counter()
    means = {}
    for h in (0.2, 0.5, 0.8):
        for seed in range(5):
            img = gen_fbm_surface(SynthSpec("FBM", 256, hurst=h, seed=seed))
            m = fd_image(img.astype(np.float64)).mean()
            assert abs(m - (3 - h)) <= 0.15, (h, seed, m)
            means.setdefault(seed, []).append(m)
    for seed, row in means.items():
        assert row[0] > row[1] > row[2], (seed, row)
    assert time.perf_counter() - t0 < 120.0


# ------------------------------------------------------------- criterion 4

@criterion(4, "lacunarity hand cases")
def test_lacunarity_hand_cases():
    assert lacunarity(np.full((6, 6), 2.4)) == 0.0
    half = np.array([[2.0, 3.0]] * 4)
    assert abs(lacunarity(half) - 0.2) <= 1e-12
    fd = np.random.default_rng(4).uniform(2, 3, size=(20, 20))
    for c in (0.5, 3.0, 17.0):
        assert abs(lacunarity(c * fd) - lacunarity(fd)) <= 1e-12


# ------------------------------------------------------------- criterion 5

def _walk_images():
    rng = np.random.default_rng(5)
    imgs = [gen_fbm_surface(SynthSpec("FBM", 64, hurst=h, seed=s)).astype(float)
            for h in (0.3, 0.6) for s in range(3)]
    imgs += [rng.normal(size=(48, 48)).cumsum(axis=1) for _ in range(3)]
    return imgs


@criterion(5, "BBS_FD semantics")
def test_bbs_argmax_and_lambda_monotone():
    assert DEFAULT_LAMBDA == 0.012 and SelectionConfig().lam == 0.012
    lams = (0.001, 0.004, 0.012, 0.03, 0.1)
    for img in _walk_images():
        an = SubbandAnalyzer(img, max_depth=4)
        depths = []
        for lam in lams:
            path, _ = bbs_fd(None, cfg=SelectionConfig(lam=lam, max_levels=4), analyzer=an)
            for rec in path.levels:
                eligible = [b for b in BANDS if b not in rec.noise] or list(BANDS)
                top = max(rec.scores[b] for b in eligible)
                assert rec.chosen == next(b for b in BANDS
                                          if b in eligible and rec.scores[b] == top)
            depths.append(path.depth)
        assert all(a >= b for a, b in zip(depths, depths[1:])), depths


@criterion(5, "BBS_FD semantics")
def test_bbs_constant_image():
    path, _ = bbs_fd(np.full((32, 32), 9.0))
    assert path.depth == 1 and path.levels[0].terminated


# ------------------------------------------------------------- criterion 6

@criterion(6, "divergence and correlation pruning")
def test_divergence_and_pruning():
    X = np.array([[-2.0], [0.0], [2.0], [-1.0], [0.0], [1.0]])
    y = ["a"] * 3 + ["b"] * 3
    assert abs(divergence_scores(X, y)[0][0] - 1.0) <= 1e-12
    Xe = np.array([[1.0], [3.0], [10.0], [12.0]])
    assert divergence_scores(Xe, ["a", "a", "b", "b"])[0][0] == 0.0
    rng = np.random.default_rng(6)
    a = rng.normal(size=40)
    Xd = np.column_stack([a, a.copy(), rng.normal(size=40)])
    Xd[20:, 0] *= 3
    Xd[20:, 1] *= 3
    labels = [0] * 20 + [1] * 20
    kept = correlation_prune(Xd, divergence_rank(Xd, labels))
    assert len(kept) == 2 and 2 in kept and (0 in kept) != (1 in kept)


# ------------------------------------------------------------- criterion 7

@criterion(7, "classifier oracles")
def test_knn_oracle():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 40))
        Xtr, ytr = rng.normal(size=(n, 10)), rng.integers(0, 3, size=n)
        Xte = rng.normal(size=(10, 10))
        k = int(rng.integers(1, 8))
        m = KNearestNeighbors(k=k, standardize=False).fit(Xtr, ytr)
        np.testing.assert_array_equal(m.predict(Xte), knn_oracle(Xtr, ytr, Xte, k))


@criterion(7, "classifier oracles")
def test_smo_against_qp():
    compared = 0
    for seed in range(60):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(4, 21))
        X = rng.normal(size=(n, 3))
        y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        y[:2] = 1.0, -1.0
        C = float(2.0 ** rng.integers(-2, 5))
        g = float(2.0 ** rng.integers(-3, 2))
        K = rbf_kernel(X, X, g)
        alpha, bias, _ = solve_binary(K, y, C)
        assert abs(np.dot(alpha, y)) <= 1e-8
        assert alpha.min() >= 0 and alpha.max() <= C
        Kt = rbf_kernel(np.vstack([X, rng.normal(size=(30, 3))]), X, g)
        ref = qp_decision(K, y, C, Kt)
        if ref is None:
            continue
        compared += 1
        np.testing.assert_allclose(Kt @ (alpha * y) + bias, ref, atol=1e-3)
    assert compared >= 40


@criterion(7, "classifier oracles")
def test_nbc_hand_case_and_dual_constraints():
    m = GaussianNaiveBayes().fit([[-1.0], [1.0], [1.0], [3.0]], [1, 1, 2, 2])
    assert abs(m.predict_proba([[0.5]])[0, 0] - 0.7311) <= 1e-4
    rng = np.random.default_rng(7)
    X = np.vstack([rng.normal(size=(10, 4)) + 1.5 * c for c in range(4)])
    y = np.repeat(np.arange(4), 10)
    for C in (0.5, 8.0, 128.0):
        svm = SupportVectorClassifier(C=C, gamma=0.25).fit(X, y)
        for s, lo, hi in svm.dual_residuals():
            assert abs(s) <= 1e-8 and lo >= 0 and hi <= C


# --------------------------------------------------------- criteria 8-10

LEVELS = 4
TIME_LIMIT = 15 * 60


def _cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, argv
    return code


def _pipeline(root):
    """synth -> evaluate (FD and depth-matched energy baseline), SVM, seed 0."""
    t0 = time.perf_counter()
    data, out = root / "corpus", root / "eval"
    _cli("synth", "--out", data, "--patients", 5, "--images", 16, "--size", 256,
         "--seed", 0)
    _cli("evaluate", "--input", data, "--out-dir", out, "--method", "bbs_fd,bbs_e",
         "--levels", LEVELS, "--classifier", "svm", "--seed", 0)
    return data, out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    first = _pipeline(tmp_path_factory.mktemp("run1"))
    second = _pipeline(tmp_path_factory.mktemp("run2"))
    return first, second


def _report(out, method):
    return json.loads((out / f"metrics_{method}.json").read_text())


@criterion(8, "LOPO integrity and determinism")
def test_lopo_integrity(runs):
    (data, out, seconds), (data2, out2, seconds2) = runs
    rows = read_manifest(data / "manifest.csv")
    assert len(rows) == 320
    patients = [r["patient"] for r in rows]
    folds = make_lopo_folds(patients, [r["label"] for r in rows])
    assert len(folds) == 20
    assert check_no_leakage(folds, patients)
    rep = _report(out, "bbs_fd")
    assert [f["held_out"] for f in rep["folds"]] == [f.held_out for f in folds]
    assert all(f["n_test"] == 16 for f in rep["folds"])
    assert max(rep["basis_depth"]) <= LEVELS
    for name in sorted(os.listdir(out)):
        assert (out / name).read_bytes() == (out2 / name).read_bytes(), name
    assert seconds < TIME_LIMIT and seconds2 < TIME_LIMIT


@criterion(9, "surrogate classification power")
def test_classification_power(runs):
    (_, out, _), _ = runs
    fd, e = _report(out, "bbs_fd"), _report(out, "bbs_e")
    print(f"\nBBS_FD + SVM {fd['overall_accuracy']:.4f}  "
          f"BBS_E + SVM {e['overall_accuracy']:.4f}")
    assert [f["held_out"] for f in fd["folds"]] == [f["held_out"] for f in e["folds"]]
    assert fd["overall_accuracy"] >= 0.90
    assert fd["overall_accuracy"] >= e["overall_accuracy"]


@criterion(10, "deformation robustness")
def test_deformation_robustness(runs, tmp_path_factory):
    (data, out, _), _ = runs
    root = tmp_path_factory.mktemp("deformed")
    _cli("deform", "--input", data, "--out", root / "corpus", "--n-deform", 2,
         "--shear", "1,0.3,0,1", "--seed", 0)
    _cli("evaluate", "--input", root / "corpus", "--out-dir", root / "eval",
         "--method", "bbs_fd", "--levels", LEVELS, "--classifier", "svm", "--seed", 0)
    base = _report(out, "bbs_fd")["overall_accuracy"]
    deformed = json.loads((root / "eval" / "metrics.json").read_text())["overall_accuracy"]
    print(f"\nBBS_FD + SVM clean {base:.4f}  deformed {deformed:.4f}")
    assert base - deformed <= 0.05


# ------------------------------------------------------------ criterion 11

@criterion(11, "Brodatz hold-out harness")
def test_brodatz_harness():
    directory = os.environ.get("BRODATZ_DIR")
    if not directory or not os.path.isdir(directory):
        pytest.skip("BRODATZ_DIR not set; texture corpus absent")
    cm, rep = brodatz_holdout(directory, "nbc", n_train=64, n_test=192, size=32, seed=0)
    assert len(rep["class_names"]) == 8
    assert rep["n"] == 8 * 192
    print(f"\nBrodatz NBC accuracy {rep['overall_accuracy']:.4f}")
    assert rep["overall_accuracy"] >= 0.90


# ------------------------------------------------------------ criterion 12

@criterion(12, "Wilcoxon correctness")
def test_wilcoxon():
    r = wilcoxon_signed_rank([0.9, 0.8, 0.7, 0.6, 0.5], [0.8, 0.6, 0.4, 0.2, 0.0])
    assert r.n == 5 and r.method == "exact"
    assert abs(r.pvalue - 0.0625) <= 1e-12
    rng = np.random.default_rng(12)
    for _ in range(200):
        a, b = rng.uniform(size=12), rng.uniform(size=12)
        ex = wilcoxon_signed_rank(a, b)
        nm = wilcoxon_signed_rank(a, b, method="normal")
        assert ex.method == "exact" and ex.n == 12
        assert abs(ex.pvalue - nm.pvalue) <= 0.02
