"""Fixed-length feature extraction over a shared packet basis, plus
divergence-ranked correlation pruning.
"""

import csv
import hashlib
import json
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import DataError, ParameterError, StructureError, check_features
from .bestbasis import (BasisPath, SelectionConfig, SubbandAnalyzer, bbs_energy_guided,
                        bbs_fd, glcm_names)
from .wavelet import BANDS, MAX_DEPTH, parse_path, path_name

METHODS = ("bbs_fd", "bbs_e", "bbs_e2", "bbs_cm")
_BAND_ORDER = {b: i for i, b in enumerate(BANDS)}


def n_jobs_default():
    """Worker count from ``FRACTEX_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("FRACTEX_THREADS", "1")))
    except ValueError:
        return 1


def _path_key(p):
    return (len(p), [_BAND_ORDER[b] for b in p])


@dataclass(frozen=True)
class GlobalBasis:
    """Ordered subband paths every image is measured on."""

    subbands: tuple

    def __post_init__(self):
        if len(set(self.subbands)) != len(self.subbands):
            raise StructureError("duplicate subband paths in basis")

    @property
    def depth(self):
        return max((len(p) for p in self.subbands), default=0)

    @property
    def parents(self):
        seen = []
        for p in self.subbands:
            if p[:-1] not in seen:
                seen.append(p[:-1])
        return seen

    def truncate(self, depth):
        return GlobalBasis(tuple(p for p in self.subbands if len(p) <= depth))

    def to_dict(self):
        return {"subbands": [path_name(p) for p in self.subbands]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(parse_path(n) for n in d["subbands"]))


def _bands_of(p):
    return p.bands if isinstance(p, BasisPath) else tuple(p)


def build_global_basis(paths):
    """Union of the sibling quadruples along every walked path.

    Parameters
    ----------
    paths : dict
        ``{label: path_or_list_of_paths}``; a path is a :class:`BasisPath`
        or a sequence of chosen band labels.

    Returns
    -------
    GlobalBasis
        Subbands sorted by (level, band order).
    """
    if not paths:
        raise ParameterError("no class paths given")
    nodes = set()
    for label, item in paths.items():
        items = item if isinstance(item, list) else [item]
        if not items:
            raise ParameterError(f"class {label!r} has no path")
        for p in items:
            bands = _bands_of(p)
            for i in range(len(bands)):
                nodes.add(bands[:i])
    subbands = sorted((n + (b,) for n in nodes for b in BANDS), key=_path_key)
    return GlobalBasis(tuple(subbands))


def consensus_path(paths):
    """Representative walk of a class.

    Depth is the lower median of the walk depths; at each level the most
    frequent choice among walks sharing the consensus prefix wins (all walks
    reaching that level if none share it), ties by band order.
    """
    walks = [_bands_of(p) for p in paths]
    if not walks:
        raise ParameterError("no paths to summarise")
    depths = sorted(len(w) for w in walks)
    depth = depths[(len(depths) - 1) // 2]
    prefix = ()
    for level in range(depth):
        reach = [w for w in walks if len(w) > level]
        same = [w for w in reach if w[:level] == prefix] or reach
        counts = Counter(w[level] for w in same)
        best = max(BANDS, key=lambda b: (counts.get(b, 0), -_BAND_ORDER[b]))
        prefix = prefix + (best,)
    return prefix


@dataclass
class FeatureMatrix:
    X: np.ndarray
    labels: list
    patients: list
    names: list
    images: list = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = check_features(self.X)
        n = self.X.shape[0]
        if len(self.labels) != n or len(self.patients) != n:
            raise StructureError("labels/patients must have one entry per row")
        if len(self.names) != self.X.shape[1]:
            raise StructureError("one column name per feature required")
        if any(p in (None, "") for p in self.patients):
            raise DataError("every row needs a patient id")
        if self.images is None:
            self.images = [f"row{i}" for i in range(n)]

    @property
    def classes(self):
        return sorted(set(self.labels))

    def select(self, columns):
        columns = list(columns)
        return FeatureMatrix(self.X[:, columns], list(self.labels),
                             list(self.patients), [self.names[c] for c in columns],
                             list(self.images), dict(self.meta))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(self.meta, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["image"] + list(self.names) + ["label", "patient"])
            for i in range(self.X.shape[0]):
                w.writerow([self.images[i]] + [repr(float(v)) for v in self.X[i]]
                           + [self.labels[i], self.patients[i]])

    @classmethod
    def from_csv(cls, path):
        meta = {}
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
        body = []
        for ln in lines:
            if ln.startswith("#"):
                try:
                    meta.update(json.loads(ln[1:].strip()))
                except ValueError:
                    pass
            elif ln.strip():
                body.append(ln)
        rows = list(csv.reader(body))
        if len(rows) < 2:
            raise DataError(f"{path}: no input rows")
        header = rows[0]
        if header[-2:] != ["label", "patient"] or header[0] != "image":
            raise StructureError(f"{path}: malformed header")
        names = header[1:-2]
        X = np.array([[float(v) for v in r[1:-2]] for r in rows[1:]]).reshape(
            len(rows) - 1, len(names))
        return cls(X, [r[-2] for r in rows[1:]], [r[-1] for r in rows[1:]], names,
                   [r[0] for r in rows[1:]], meta)


def config_hash(config):
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def _walk(img, method, cfg, depth, glcm_levels):
    if method == "bbs_fd":
        an = SubbandAnalyzer(img, None, cfg.window, cfg.max_levels, glcm_levels)
        path, _ = bbs_fd(img, cfg=cfg, analyzer=an)
    else:
        sig = {"bbs_e": "E1", "bbs_e2": "E2", "bbs_cm": "GLCM"}[method]
        an = SubbandAnalyzer(img, None, cfg.window, depth, glcm_levels)
        path, _ = bbs_energy_guided(img, cfg=cfg, signature=sig, depth=depth,
                                    analyzer=an)
    an.release()
    return path, an.cache


def measure(analyzer, basis, method):
    """Feature vector of one image on ``basis`` for ``method``."""
    values = []
    for p in basis.subbands:
        if method == "bbs_fd":
            values.append(analyzer.fd(p).mean_fd)
        elif method == "bbs_e":
            values.append(analyzer.energy(p, 1))
        elif method == "bbs_e2":
            values.append(analyzer.energy(p, 2))
        else:
            values.extend(analyzer.glcm(p))
    return np.asarray(values, dtype=np.float64)


def feature_names(basis, method):
    if method == "bbs_cm":
        return [f"glcm:{path_name(p)}:{n}" for p in basis.subbands for n in glcm_names()]
    kind = {"bbs_fd": "fd", "bbs_e": "e1", "bbs_e2": "e2"}[method]
    return [f"{kind}:{path_name(p)}" for p in basis.subbands]


def _measure_one(img, basis, method, window, glcm_levels, cache):
    an = SubbandAnalyzer(img, None, window, max(basis.depth, 1), glcm_levels,
                         cache=dict(cache) if cache else None)
    return measure(an, basis, method)


class WaveletPacketFeatures(TransformerMixin, BaseEstimator):
    """Best-basis packet features on a class-spanning global basis.

    ``fit`` walks every training image (``method`` decides the walk), forms
    one consensus path per class and takes the union of their sibling
    quadruples as the basis.  ``transform`` measures any image on that basis,
    so all rows share one length.

    Parameters
    ----------
    method : {'bbs_fd', 'bbs_e', 'bbs_e2', 'bbs_cm'}
    lam : float
        Termination threshold of the fractal walk.
    max_levels : int
        Depth cap of the fractal walk.
    depth : int or None
        Fixed depth of the energy-guided walks (``max_levels`` if None).
    stop_on_lambda : bool
        Disable to force the fractal walk to ``max_levels``.
    n_jobs : int or None
        Image-level parallelism; ``None`` reads ``FRACTEX_THREADS``.
    """

    def __init__(self, method="bbs_fd", lam=0.012, max_levels=MAX_DEPTH, depth=None,
                 window=7, noise_fd_cutoff=2.985, stop_on_lambda=True,
                 glcm_levels=32, n_jobs=None):
        self.method = method
        self.lam = lam
        self.max_levels = max_levels
        self.depth = depth
        self.window = window
        self.noise_fd_cutoff = noise_fd_cutoff
        self.stop_on_lambda = stop_on_lambda
        self.glcm_levels = glcm_levels
        self.n_jobs = n_jobs

    def _config(self):
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}")
        return SelectionConfig(self.lam, self.max_levels, self.window,
                               self.noise_fd_cutoff, self.stop_on_lambda)

    def _jobs(self):
        return self.n_jobs if self.n_jobs is not None else n_jobs_default()

    def _fit(self, X, y):
        cfg = self._config()
        if y is None or len(y) != len(X):
            raise ParameterError("fit needs one label per image")
        depth = self.depth if self.depth is not None else self.max_levels
        out = Parallel(n_jobs=self._jobs())(
            delayed(_walk)(img, self.method, cfg, depth, self.glcm_levels) for img in X)
        self.paths_ = [p for p, _ in out]
        by_class = {}
        for label, p in zip(y, self.paths_):
            by_class.setdefault(label, []).append(p)
        self.class_paths_ = {c: consensus_path(ps) for c, ps in sorted(by_class.items())}
        self.basis_ = build_global_basis(self.class_paths_)
        self.feature_names_ = feature_names(self.basis_, self.method)
        return [c for _, c in out]

    def fit(self, X, y=None):
        self._fit(X, y)
        return self

    def fit_transform(self, X, y=None, **fit_params):
        caches = self._fit(X, y)
        return self._measure(X, caches)

    def transform(self, X):
        return self._measure(X, None)

    def _measure(self, X, caches):
        caches = caches if caches is not None else [None] * len(X)
        rows = Parallel(n_jobs=self._jobs())(
            delayed(_measure_one)(img, self.basis_, self.method, self.window,
                                  self.glcm_levels, c) for img, c in zip(X, caches))
        return np.vstack(rows)

    def get_feature_names_out(self, input_features=None):
        return np.array(self.feature_names_, dtype=object)


@dataclass
class DivergenceRanking:
    entries: list
    degenerate: list = field(default_factory=list)

    @property
    def order(self):
        return [i for i, _ in self.entries]


def divergence_scores(X, y):
    """Pairwise-class divergence of every column (sample standard deviations).

    Returns ``(scores, degenerate)`` where ``degenerate`` lists the columns
    for which some class pair had a zero standard deviation; such pairs
    contribute nothing.
    """
    X = check_features(X)
    y = np.asarray(y)
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise DataError("divergence needs at least two classes")
    sig = []
    for c in classes:
        rows = X[y == c]
        if rows.shape[0] < 2:
            raise DataError(f"class {c!r} needs >= 2 rows for a standard deviation")
        sig.append(rows.std(axis=0, ddof=1))
    sig = np.array(sig)
    scores = np.zeros(X.shape[1])
    degenerate = np.zeros(X.shape[1], dtype=bool)
    for k in range(len(classes)):
        for l in range(k + 1, len(classes)):
            sk, sl = sig[k], sig[l]
            ok = (sk > 0) & (sl > 0)
            degenerate |= ~ok
            term = np.zeros_like(sk)
            term[ok] = ((sk[ok] - sl[ok]) ** 2 * (1 + sk[ok] + sl[ok])
                        / (2 * sk[ok] * sl[ok]))
            scores += term
    return scores, np.flatnonzero(degenerate).tolist()


def divergence_rank(X, y):
    """Columns sorted by descending divergence, stable on ties."""
    scores, degenerate = divergence_scores(X, y)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return DivergenceRanking([(i, float(scores[i])) for i in order], degenerate)


def _abs_corr(X, i, j):
    a, b = X[:, i] - X[:, i].mean(), X[:, j] - X[:, j].mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return 0.0 if den == 0 else abs(float(np.dot(a, b) / den))


def correlation_prune(X, ranking, threshold=0.8):
    """Greedy pruning in ranking order: drop a column whose absolute Pearson
    correlation with an already kept column exceeds ``threshold``.

    Returns the kept column indices in ranking order.
    """
    X = check_features(X)
    order = ranking.order if isinstance(ranking, DivergenceRanking) else list(ranking)
    if sorted(order) != list(range(X.shape[1])):
        raise ParameterError("ranking must cover every column exactly once")
    kept = []
    for i in order:
        if all(_abs_corr(X, i, j) <= threshold for j in kept):
            kept.append(i)
    return kept


class DivergenceSelector(TransformerMixin, BaseEstimator):
    """Divergence ranking followed by correlation pruning, fit on train rows."""

    def __init__(self, threshold=0.8):
        self.threshold = threshold

    def fit(self, X, y):
        X = check_features(X)
        self.ranking_ = divergence_rank(X, y)
        self.selected_ = correlation_prune(X, self.ranking_, self.threshold)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_features(X, self.n_features_in_)
        return X[:, self.selected_]
