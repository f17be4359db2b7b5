"""Leave-one-patient-out evaluation, metrics, level sweeps and the
Wilcoxon signed-rank comparison.
"""

import csv
import io
import json
import math
import os
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm, rankdata
from sklearn.base import clone

from ._validation import DataError, ParameterError
from .bestbasis import DEFAULT_LAMBDA, SelectionConfig, SubbandAnalyzer
from .classify import make_classifier
from .features import (DivergenceSelector, GlobalBasis, _path_key, _walk,
                       build_global_basis, config_hash, consensus_path, measure,
                       n_jobs_default)
from .io import read_image
from .imgprep import preprocess

EXACT_MAX_N = 12


# ------------------------------------------------------------------- folds

@dataclass
class Fold:
    held_out: str
    train: np.ndarray
    test: np.ndarray


def make_lopo_folds(patients, labels=None):
    """One fold per distinct patient, ordered by patient id.

    Raises
    ------
    DataError
        Fewer than two patients, or a patient whose rows carry more than one
        label.
    """
    patients = np.asarray([str(p) for p in patients])
    ids = sorted(set(patients.tolist()))
    if len(ids) < 2:
        raise DataError("leave-one-patient-out needs at least two patients")
    if labels is not None:
        labels = np.asarray(labels)
        for p in ids:
            found = set(labels[patients == p].tolist())
            if len(found) > 1:
                raise DataError(f"patient {p!r} has rows in classes {sorted(found)}")
    return [Fold(p, np.flatnonzero(patients != p), np.flatnonzero(patients == p))
            for p in ids]


def check_no_leakage(folds, patients):
    """Assert the plan is a leak-free partition of all rows."""
    patients = np.asarray([str(p) for p in patients])
    seen = np.zeros(patients.size, dtype=int)
    for f in folds:
        if set(patients[f.train].tolist()) & set(patients[f.test].tolist()):
            raise DataError(f"fold {f.held_out!r} leaks a patient into training")
        if np.intersect1d(f.train, f.test).size:
            raise DataError(f"fold {f.held_out!r} shares rows between train and test")
        seen[f.test] += 1
    if not np.all(seen == 1):
        raise DataError("test sets do not partition the rows")
    return True


# ----------------------------------------------------------------- metrics

@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    class_names: list

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + list(self.class_names))
        for name, row in zip(self.class_names, self.counts):
            w.writerow([name] + [int(v) for v in row])
        return buf.getvalue()


def _rate(num, den):
    return float(num / den) if den > 0 else None


def score_run(preds, truth, class_names=None):
    """Confusion matrix and one-vs-rest rates.

    Returns ``(ConfusionMatrix, report)``; ``report`` holds
    ``overall_accuracy`` and a ``per_class`` block of sensitivity,
    specificity and accuracy.  A rate whose denominator is zero is ``None``.
    """
    preds = [str(p) for p in preds]
    truth = [str(t) for t in truth]
    if len(preds) != len(truth):
        raise ParameterError("predictions and truth differ in length")
    names = [str(c) for c in class_names] if class_names is not None else sorted(
        set(truth) | set(preds))
    index = {c: i for i, c in enumerate(names)}
    unknown = (set(preds) | set(truth)) - set(names)
    if unknown:
        raise ParameterError(f"unknown labels {sorted(unknown)}")
    counts = np.zeros((len(names), len(names)), dtype=np.int64)
    for t, p in zip(truth, preds):
        counts[index[t], index[p]] += 1
    total = counts.sum()
    per_class = {}
    for i, c in enumerate(names):
        tp = counts[i, i]
        fn = counts[i].sum() - tp
        fp = counts[:, i].sum() - tp
        tn = total - tp - fn - fp
        per_class[c] = {"sensitivity": _rate(tp, tp + fn),
                        "specificity": _rate(tn, tn + fp),
                        "accuracy": _rate(tp + tn, total)}
    report = {"overall_accuracy": _rate(np.trace(counts), total),
              "n": int(total), "per_class": per_class}
    return ConfusionMatrix(counts, names), report


# ---------------------------------------------------------------- Wilcoxon

@dataclass
class WilcoxonResult:
    statistic: float
    pvalue: float
    n: int
    method: str
    w_plus: float = 0.0
    w_minus: float = 0.0

    def to_dict(self):
        return {"statistic": self.statistic, "p": self.pvalue, "n": self.n,
                "method": self.method, "w_plus": self.w_plus, "w_minus": self.w_minus}


def _exact_p(ranks, w_plus):
    n = ranks.size
    signs = (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1
    dist = signs @ ranks
    eps = 1e-9
    lower = np.mean(dist <= w_plus + eps)
    upper = np.mean(dist >= w_plus - eps)
    return min(1.0, 2.0 * min(lower, upper))


def _normal_p(ranks, w_plus):
    n = ranks.size
    mu = n * (n + 1) / 4.0
    _, t = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(t ** 3 - t) / 48.0
    if var <= 0:
        return 1.0
    z = max(abs(w_plus - mu) - 0.5, 0.0) / math.sqrt(var)
    return float(min(1.0, 2.0 * norm.sf(z)))


def wilcoxon_signed_rank(a, b, method="auto"):
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and tied magnitudes share average ranks.
    ``method='auto'`` enumerates all sign assignments for ``n <= 12`` and
    otherwise uses the normal approximation with continuity and tie
    corrections.  If every difference is zero the result is degenerate with
    ``p = 1``.

    Returns
    -------
    WilcoxonResult
        ``statistic`` is ``min(W+, W-)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ParameterError("paired samples must be 1-D and equal length")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate")
    if n < 5:
        raise DataError(f"need >= 5 non-zero differences, got {n}")
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "normal"
    if method == "exact":
        if n > 20:
            raise ParameterError("exact enumeration limited to n <= 20")
        p = _exact_p(ranks, w_plus)
    elif method == "normal":
        p = _normal_p(ranks, w_plus)
    else:
        raise ParameterError(f"unknown method {method!r}")
    return WilcoxonResult(min(w_plus, w_minus), float(p), int(n), method, w_plus, w_minus)


# ------------------------------------------------------- LOPO on features

def _fit_predict(clf, select, Xtr, ytr, Xte):
    model = clone(clf)
    cols = None
    if select:
        sel = DivergenceSelector().fit(Xtr, ytr)
        cols = sel.selected_
        Xtr, Xte = Xtr[:, cols], Xte[:, cols]
    model.fit(Xtr, ytr)
    return model.predict(Xte), cols, getattr(model, "n_support_", None)


def _assemble(folds, labels, preds_by_fold, extra=None):
    labels = np.asarray([str(v) for v in labels])
    preds = np.empty(labels.size, dtype=object)
    fold_rows = []
    for f, (pred, cols, nsv) in zip(folds, preds_by_fold):
        pred = np.asarray([str(p) for p in pred])
        preds[f.test] = pred
        row = {"held_out": f.held_out, "n_test": int(f.test.size),
               "accuracy": float(np.mean(pred == labels[f.test]))}
        if cols is not None:
            row["n_selected"] = len(cols)
        if nsv is not None:
            row["n_support"] = nsv
        fold_rows.append(row)
    cm, report = score_run(preds.tolist(), labels.tolist(), sorted(set(labels.tolist())))
    report["folds"] = fold_rows
    report["confusion"] = cm.counts.tolist()
    report["class_names"] = cm.class_names
    if extra:
        report.update(extra)
    return cm, report, preds


def run_lopo(fm, classifier="svm", select=False, seed=0, n_jobs=None, **clf_kw):
    """LOPO evaluation of a :class:`FeatureMatrix` with a fixed column set.

    Standardization and grid search happen inside each fold's training rows.
    """
    folds = make_lopo_folds(fm.patients, fm.labels)
    check_no_leakage(folds, fm.patients)
    clf = make_classifier(classifier, seed, **clf_kw) if isinstance(classifier, str) \
        else classifier
    y = np.asarray(fm.labels)
    jobs = n_jobs if n_jobs is not None else n_jobs_default()
    out = Parallel(n_jobs=jobs)(
        delayed(_fit_predict)(clf, select, fm.X[f.train], y[f.train], fm.X[f.test])
        for f in folds)
    return _assemble(folds, fm.labels, out)


# ---------------------------------------------------------- LOPO on images

class WalkCache:
    """Best-basis walks of every image plus lazily measured subband values.

    Walks are computed once; any global basis can then be measured without
    repeating work already cached.  ``depths`` fixes the per-image depth of
    the energy-guided walks (``max_levels`` for all if None), which lets a
    baseline follow the depths a fractal walk reached on the same images.
    """

    def __init__(self, images, method="bbs_fd", lam=DEFAULT_LAMBDA, max_levels=4,
                 stop_on_lambda=True, window=7, glcm_levels=32, n_jobs=None,
                 depths=None):
        self.images = images
        self.method = method
        self.window = window
        self.glcm_levels = glcm_levels
        self.cfg = SelectionConfig(lam, max_levels, window, stop_on_lambda=stop_on_lambda)
        jobs = n_jobs if n_jobs is not None else n_jobs_default()
        self.n_jobs = jobs
        depths = [max_levels] * len(images) if depths is None else list(depths)
        out = Parallel(n_jobs=jobs)(
            delayed(_walk)(img, method, self.cfg, d, glcm_levels)
            for img, d in zip(images, depths))
        self.paths = [p for p, _ in out]
        self.caches = [c for _, c in out]

    def basis_for(self, rows, labels, depth=None):
        """Global basis from the consensus walks of ``rows``."""
        by_class = {}
        for r in rows:
            p = self.paths[r].bands
            by_class.setdefault(str(labels[r]), []).append(p if depth is None else p[:depth])
        return build_global_basis({c: consensus_path(ps) for c, ps in sorted(by_class.items())})

    def matrix(self, basis):
        """Feature rows of every image on ``basis``."""
        def one(img, cache):
            an = SubbandAnalyzer(img, None, self.window, max(basis.depth, 1),
                                 self.glcm_levels, cache=cache)
            v = measure(an, basis, self.method)
            an.release()
            return v, an.cache
        out = Parallel(n_jobs=self.n_jobs)(
            delayed(one)(img, c) for img, c in zip(self.images, self.caches))
        self.caches = [c for _, c in out]
        return np.vstack([v for v, _ in out])


def _columns(union, basis, method):
    width = 16 if method == "bbs_cm" else 1
    pos = {p: i for i, p in enumerate(union.subbands)}
    return [pos[p] * width + k for p in basis.subbands for k in range(width)]


def lopo_images(cache, labels, patients, classifier="svm", select=False, seed=0,
                depth=None, n_jobs=None, **clf_kw):
    """LOPO where the global basis is rebuilt from each fold's training walks.

    Returns ``(ConfusionMatrix, report, predictions)``.
    """
    labels = [str(v) for v in labels]
    folds = make_lopo_folds(patients, labels)
    check_no_leakage(folds, patients)
    bases = [cache.basis_for(f.train, labels, depth) for f in folds]
    union = GlobalBasis(tuple(sorted({p for b in bases for p in b.subbands},
                                     key=_path_key)))
    X = cache.matrix(union)
    clf = make_classifier(classifier, seed, **clf_kw) if isinstance(classifier, str) \
        else classifier
    y = np.asarray(labels)
    jobs = n_jobs if n_jobs is not None else n_jobs_default()
    cols = [_columns(union, b, cache.method) for b in bases]
    out = Parallel(n_jobs=jobs)(
        delayed(_fit_predict)(clf, select, X[np.ix_(f.train, c)], y[f.train],
                              X[np.ix_(f.test, c)])
        for f, c in zip(folds, cols))
    extra = {"basis_size": [len(b.subbands) for b in bases],
             "basis_depth": [b.depth for b in bases]}
    return _assemble(folds, labels, out, extra)


def termination_depths(cache, labels):
    """Median walk depth per class."""
    depths = {}
    for p, lab in zip(cache.paths, labels):
        depths.setdefault(str(lab), []).append(p.depth)
    return {c: int(np.median(v)) for c, v in sorted(depths.items())}


def sweep_levels(images, labels, patients, method="bbs_fd", classifier="svm",
                 max_level=10, lam=DEFAULT_LAMBDA, seed=0, window=7, n_jobs=None,
                 **clf_kw):
    """Accuracy for every forced depth ``1..max_level`` plus a lambda run.

    The forced-depth runs share one walk to ``max_level`` with lambda
    termination disabled; each depth truncates those walks, which is exact
    because every walk is greedy level by level.
    """
    if max_level < 1:
        raise ParameterError("max_level must be >= 1")
    forced = WalkCache(images, method, lam, max_level, stop_on_lambda=False,
                       window=window, n_jobs=n_jobs)
    per_level = []
    for d in range(1, max_level + 1):
        _, rep, _ = lopo_images(forced, labels, patients, classifier, seed=seed,
                                depth=d, n_jobs=n_jobs, **clf_kw)
        per_level.append({"level": d, "accuracy": rep["overall_accuracy"]})
    result = {"method": method, "classifier": classifier, "per_level": per_level}
    if method == "bbs_fd":
        lam_cache = WalkCache(images, method, lam, max_level, True, window, n_jobs=n_jobs)
        _, rep, _ = lopo_images(lam_cache, labels, patients, classifier, seed=seed,
                                n_jobs=n_jobs, **clf_kw)
        result["lambda_run"] = {"lambda": lam, "accuracy": rep["overall_accuracy"],
                                "class_depths": termination_depths(lam_cache, labels),
                                "basis_depth": rep["basis_depth"]}
    return result


# --------------------------------------------------------- Brodatz holdout

IMAGE_SUFFIXES = (".pgm", ".ppm", ".png", ".tif", ".tiff", ".gif", ".bmp", ".jpg")


def extract_patches(img, size=32, stride=16, count=256):
    """``size`` square patches on a ``stride`` grid, raster order.

    The image is mirror-padded at its bottom and right edges when the grid
    would otherwise hold fewer than ``count`` patches.
    """
    img = np.asarray(img)
    per_axis = math.ceil(math.sqrt(count))
    need = (per_axis - 1) * stride + size
    pad = [(0, max(0, need - s)) for s in img.shape[:2]]
    if any(p[1] for p in pad):
        img = np.pad(img, pad, mode="reflect")
    rows = range(0, img.shape[0] - size + 1, stride)
    cols = range(0, img.shape[1] - size + 1, stride)
    out = [img[r:r + size, c:c + size] for r in rows for c in cols]
    return out


def brodatz_holdout(directory, classifier="nbc", method="bbs_fd", n_train=64,
                    n_test=192, size=32, seed=0, lam=DEFAULT_LAMBDA, max_levels=4,
                    se_size=0, n_jobs=None):
    """Per-texture hold-out evaluation on patches of user-supplied images.

    Each image file in ``directory`` is one class.  ``n_train + n_test``
    patches are drawn per class without replacement under ``seed``.
    """
    files = sorted(f for f in os.listdir(directory)
                   if f.lower().endswith(IMAGE_SUFFIXES))
    if len(files) < 2:
        raise DataError(f"{directory}: need at least two texture images")
    rng = np.random.default_rng(seed)
    train_imgs, test_imgs, ytr, yte = [], [], [], []
    for f in files:
        img = preprocess(read_image(os.path.join(directory, f)), "GRAY", se_size)
        patches = extract_patches(img, size, size // 2, n_train + n_test)
        if len(patches) < n_train + n_test:
            raise DataError(f"{f}: only {len(patches)} patches")
        pick = rng.permutation(len(patches))[:n_train + n_test]
        label = os.path.splitext(f)[0]
        train_imgs += [patches[i] for i in pick[:n_train]]
        test_imgs += [patches[i] for i in pick[n_train:]]
        ytr += [label] * n_train
        yte += [label] * n_test
    cache = WalkCache(train_imgs + test_imgs, method, lam, max_levels, n_jobs=n_jobs)
    basis = cache.basis_for(range(len(train_imgs)), ytr + yte)
    X = cache.matrix(basis)
    model = make_classifier(classifier, seed).fit(X[:len(ytr)], ytr)
    pred = model.predict(X[len(ytr):])
    cm, report = score_run(pred, yte, sorted(set(ytr)))
    report["confusion"] = cm.counts.tolist()
    report["class_names"] = cm.class_names
    report["basis"] = basis.to_dict()["subbands"]
    return cm, report


# --------------------------------------------------------------- rendering

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def report_json(report, config=None):
    """Deterministic JSON text embedding the producing config hash."""
    doc = dict(report)
    if config is not None:
        doc["config"] = config
        doc["config_hash"] = config_hash(config)
    return json.dumps(_clean(doc), indent=1, sort_keys=True) + "\n"


def _pct(v):
    return "   n/a" if v is None else f"{100 * v:6.2f}"


def report_text(report):
    """Row-normalised confusion percentages and per-class rates."""
    names = report["class_names"]
    counts = np.asarray(report["confusion"], dtype=float)
    width = max(8, max(len(n) for n in names) + 1)
    lines = [f"overall accuracy: {_pct(report['overall_accuracy']).strip()}%", "",
             "confusion (row %)".ljust(width + 2) + "".join(n.rjust(width) for n in names)]
    for n, row in zip(names, counts):
        tot = row.sum()
        cells = "".join(_pct(v / tot if tot else None).rjust(width) for v in row)
        lines.append(n.ljust(width + 2) + cells)
    lines += ["", "class".ljust(width + 2) + "sensitivity".rjust(13)
              + "specificity".rjust(13) + "accuracy".rjust(11)]
    for n in names:
        pc = report["per_class"][n]
        lines.append(n.ljust(width + 2) + _pct(pc["sensitivity"]).rjust(13)
                     + _pct(pc["specificity"]).rjust(13) + _pct(pc["accuracy"]).rjust(11))
    return "\n".join(lines) + "\n"


def per_fold_accuracies(report):
    return [f["accuracy"] for f in report["folds"]]


def compare_reports(a, b):
    """Wilcoxon comparison of two LOPO reports on identical folds."""
    fa = [f["held_out"] for f in a["folds"]]
    fb = [f["held_out"] for f in b["folds"]]
    if fa != fb:
        raise DataError("reports were produced on different folds")
    try:
        return wilcoxon_signed_rank(per_fold_accuracies(a), per_fold_accuracies(b)).to_dict()
    except DataError as exc:
        return {"p": None, "reason": str(exc)}
