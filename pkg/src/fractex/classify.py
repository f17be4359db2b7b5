"""Gaussian-kernel SVM (SMO), Gaussian naive Bayes and kNN classifiers.

All estimators follow the scikit-learn API (``fit`` / ``predict`` /
``get_params``) so they can be cloned and dropped into pipelines.
"""

import json

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import StratifiedKFold

from ._validation import ParameterError, TrainingError, check_features

C_GRID = tuple(2.0 ** e for e in range(-5, 26, 2))
GAMMA_GRID = tuple(2.0 ** e for e in range(-15, 4, 2))
MODEL_FORMAT = "fractex-model"
MODEL_VERSION = 1
_TAU = 1e-12
# tight enough that decision values sit within 1e-3 of the exact QP optimum
DEFAULT_TOL = 1e-4


# ---------------------------------------------------------------- SMO core

@njit(cache=True)
def _smo(K, y, C, tol, max_iter):
    """Solve the soft-margin dual for labels ``y`` in {-1, +1}.

    Working set: the maximal KKT violator ``i`` paired with the ``j`` of
    largest second-order gain.  Returns ``(alpha, bias, iterations)`` with
    decision ``f(x) = sum_i alpha_i y_i K(x_i, x) + bias``.
    """
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    while it < max_iter:
        Gmax = -np.inf
        i = -1
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * G[t]
                if v > Gmax:
                    Gmax = v
                    i = t
        Gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        for t in range(n):
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = y[t] * G[t]
                if v > Gmax2:
                    Gmax2 = v
                b = Gmax + v
                if b > 0 and i >= 0:
                    a = K[i, i] + K[t, t] - 2.0 * y[i] * y[t] * K[i, t]
                    if a <= 0:
                        a = _TAU
                    if -(b * b) / a < obj_min:
                        obj_min = -(b * b) / a
                        j = t
        if Gmax + Gmax2 < tol or j == -1:
            break
        it += 1
        ai, aj = alpha[i], alpha[j]
        Qij = y[i] * y[j] * K[i, j]
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] + 2.0 * Qij
            if quad <= 0:
                quad = _TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * Qij
            if quad <= 0:
                quad = _TAU
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
            if s > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        dai = alpha[i] - ai
        daj = alpha[j] - aj
        for t in range(n):
            G[t] += y[t] * (y[i] * K[i, t] * dai + y[j] * K[j, t] * daj)
    ub = np.inf
    lb = -np.inf
    n_free = 0
    s_free = 0.0
    for t in range(n):
        yG = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yG)
            else:
                lb = max(lb, yG)
        else:
            n_free += 1
            s_free += yG
    rho = s_free / n_free if n_free > 0 else (ub + lb) / 2.0
    return alpha, -rho, it


def rbf_kernel(A, B, gamma):
    """``exp(-gamma * ||a - b||**2)`` for all row pairs."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    d2 = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :]
          - 2.0 * A @ B.T)
    return np.exp(-gamma * np.maximum(d2, 0.0))


def solve_binary(K, y, C, tol=DEFAULT_TOL, max_iter=None):
    """Train one binary machine on a precomputed kernel matrix."""
    y = np.asarray(y, dtype=np.float64)
    if max_iter is None:
        max_iter = max(10_000_000, 100 * y.size)
    return _smo(np.ascontiguousarray(K), y, float(C), float(tol), int(max_iter))


# ---------------------------------------------------------- shared helpers

def _check_labels(y, min_per_class=1):
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise TrainingError("training data contains a single class")
    if counts.min() < min_per_class:
        raise TrainingError(f"every class needs >= {min_per_class} rows")
    return classes


class _Scaler:
    def __init__(self, mean, scale):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, X, enabled=True):
        if not enabled:
            return cls(np.zeros(X.shape[1]), np.ones(X.shape[1]))
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def __call__(self, X):
        return (X - self.mean) / self.scale


def _ovo_fit(K, yi, n_classes, C, tol):
    """One-vs-one machines on a precomputed Gram matrix ``K``.

    ``yi`` holds class indices.  Each machine is ``(a, b, idx, coef, bias,
    alpha, n_iter)`` with ``idx`` the support-vector rows of ``K``.
    """
    machines = []
    for a in range(n_classes):
        for b in range(a + 1, n_classes):
            rows = np.flatnonzero((yi == a) | (yi == b))
            ys = np.where(yi[rows] == a, 1.0, -1.0)
            alpha, bias, n_iter = solve_binary(K[np.ix_(rows, rows)], ys, C, tol)
            sv = alpha > 0
            machines.append((a, b, rows[sv], alpha[sv] * ys[sv], bias, alpha, n_iter))
    return machines


def _ovo_vote(decisions, pairs, n_classes):
    """Votes and summed decision values; returns (winner index, votes, sums)."""
    n = decisions.shape[0]
    votes = np.zeros((n, n_classes))
    sums = np.zeros((n, n_classes))
    for m, (a, b) in enumerate(pairs):
        d = decisions[:, m]
        votes[:, a] += d > 0
        votes[:, b] += d <= 0
        sums[:, a] += d
        sums[:, b] -= d
    winners = np.empty(n, dtype=np.int64)
    for r in range(n):
        tied = np.flatnonzero(votes[r] == votes[r].max())
        winners[r] = tied[np.argmax(sums[r, tied])]
    return winners, votes, sums


# --------------------------------------------------------------------- SVM

class SupportVectorClassifier(ClassifierMixin, BaseEstimator):
    """Soft-margin SVM with Gaussian kernel, one-vs-one multiclass.

    Parameters
    ----------
    C : float
        Box constraint.
    gamma : float
        Kernel width in ``exp(-gamma * ||x - x'||**2)``.
    tol : float
        KKT violation tolerance of the SMO solver.
    standardize : bool
        z-score features with training statistics before the kernel.
    """

    def __init__(self, C=1.0, gamma=1.0, tol=DEFAULT_TOL, standardize=True):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.standardize = standardize

    def fit(self, X, y):
        X = check_features(X)
        y = np.asarray(y)
        self.classes_ = _check_labels(y)
        self.scaler_ = _Scaler.fit(X, self.standardize)
        Xs = self.scaler_(X)
        yi = np.searchsorted(self.classes_, y)
        K = rbf_kernel(Xs, Xs, self.gamma)
        self._set_machines(_ovo_fit(K, yi, len(self.classes_), self.C, self.tol), Xs)
        self.n_features_in_ = X.shape[1]
        return self

    def _set_machines(self, raw, Xs):
        self.machines_ = []
        for a, b, idx, coef, bias, alpha, n_iter in raw:
            self.machines_.append({
                "pair": (int(a), int(b)),
                "support_vectors": Xs[idx],
                "support_index": idx,
                "dual_coef": coef,
                "bias": float(bias),
                "alpha": alpha,
                "n_iter": int(n_iter),
            })

    @property
    def n_support_(self):
        """Distinct training rows that are support vectors in any machine."""
        idx = set()
        for m in self.machines_:
            idx.update(np.asarray(m["support_index"]).tolist())
        return len(idx)

    def binary_decisions(self, X):
        Xs = self.scaler_(check_features(X, self.n_features_in_))
        out = np.empty((Xs.shape[0], len(self.machines_)))
        for k, m in enumerate(self.machines_):
            Ks = rbf_kernel(Xs, m["support_vectors"], self.gamma)
            out[:, k] = Ks @ m["dual_coef"] + m["bias"]
        return out

    def decision_function(self, X):
        """Per-class vote counts."""
        d = self.binary_decisions(X)
        _, votes, _ = _ovo_vote(d, [m["pair"] for m in self.machines_],
                                len(self.classes_))
        return votes

    def predict(self, X):
        d = self.binary_decisions(X)
        w, _, _ = _ovo_vote(d, [m["pair"] for m in self.machines_], len(self.classes_))
        return self.classes_[w]

    def dual_residuals(self):
        """``(sum alpha*y, min alpha, max alpha)`` per binary machine."""
        return [(float(np.sum(m["dual_coef"])),
                 float(np.min(m["alpha"])), float(np.max(m["alpha"])))
                for m in self.machines_]


def _inner_splits(y, folds, random_state):
    _, counts = np.unique(y, return_counts=True)
    k = min(folds, int(counts.min()))
    if k < 2:
        return []
    return list(StratifiedKFold(k, shuffle=True, random_state=random_state).split(
        np.zeros(len(y)), y))


class GridSearchSVC(ClassifierMixin, BaseEstimator):
    """Grid search over ``(C, gamma)`` by stratified inner cross-validation.

    The pair with the best mean validation accuracy wins; ties prefer the
    smaller C, then the smaller gamma.  The final machine is retrained on all
    training rows.
    """

    def __init__(self, C_grid=C_GRID, gamma_grid=GAMMA_GRID, folds=5, tol=DEFAULT_TOL,
                 standardize=True, random_state=0):
        self.C_grid = C_grid
        self.gamma_grid = gamma_grid
        self.folds = folds
        self.tol = tol
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X = check_features(X)
        y = np.asarray(y)
        classes = _check_labels(y)
        Cs = sorted(float(c) for c in self.C_grid)
        gammas = sorted(float(g) for g in self.gamma_grid)
        scaler = _Scaler.fit(X, self.standardize)
        Xs = scaler(X)
        yi = np.searchsorted(classes, y)
        splits = _inner_splits(y, self.folds, self.random_state)
        scores = np.zeros((len(Cs), len(gammas)))
        if splits and (len(Cs) > 1 or len(gammas) > 1):
            sq = np.sum(Xs * Xs, axis=1)
            d2 = np.maximum(sq[:, None] + sq[None, :] - 2 * Xs @ Xs.T, 0.0)
            for gj, g in enumerate(gammas):
                K = np.exp(-g * d2)
                for tr, va in splits:
                    Ktr = K[np.ix_(tr, tr)]
                    for ci, c in enumerate(Cs):
                        ms = _ovo_fit(Ktr, yi[tr], len(classes), c, self.tol)
                        dec = np.column_stack([K[np.ix_(va, tr[m[2]])] @ m[3] + m[4]
                                               for m in ms])
                        w, _, _ = _ovo_vote(dec, [(m[0], m[1]) for m in ms],
                                            len(classes))
                        scores[ci, gj] += np.mean(w == yi[va]) / len(splits)
        best = np.unravel_index(np.argmax(scores), scores.shape)
        self.cv_scores_ = scores
        self.best_params_ = {"C": Cs[best[0]], "gamma": gammas[best[1]]}
        self.best_score_ = float(scores[best])
        self.best_estimator_ = SupportVectorClassifier(
            self.best_params_["C"], self.best_params_["gamma"], self.tol,
            self.standardize).fit(X, y)
        self.classes_ = self.best_estimator_.classes_
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        return self.best_estimator_.predict(X)

    def decision_function(self, X):
        return self.best_estimator_.decision_function(X)

    @property
    def n_support_(self):
        return self.best_estimator_.n_support_


def stratified_bootstrap(y, rng):
    """Resample row indices with replacement inside each class."""
    y = np.asarray(y)
    idx = []
    for c in np.unique(y):
        rows = np.flatnonzero(y == c)
        idx.append(rng.choice(rows, size=rows.size, replace=True))
    return np.sort(np.concatenate(idx))


class BaggedSVC(ClassifierMixin, BaseEstimator):
    """Majority vote over grid-searched SVMs trained on bootstrap resamples."""

    def __init__(self, n_members=5, C_grid=C_GRID, gamma_grid=GAMMA_GRID, folds=5,
                 tol=DEFAULT_TOL, random_state=0):
        self.n_members = n_members
        self.C_grid = C_grid
        self.gamma_grid = gamma_grid
        self.folds = folds
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        if self.n_members < 3 or self.n_members % 2 == 0:
            raise ParameterError("n_members must be odd and >= 3")
        X = check_features(X)
        y = np.asarray(y)
        self.classes_ = _check_labels(y)
        seeds = np.random.SeedSequence(self.random_state).generate_state(self.n_members)
        self.bootstrap_seeds_ = [int(s) for s in seeds]
        self.members_ = []
        for s in self.bootstrap_seeds_:
            idx = stratified_bootstrap(y, np.random.default_rng(s))
            gs = GridSearchSVC(self.C_grid, self.gamma_grid, self.folds, self.tol,
                               True, s % (2 ** 31)).fit(X[idx], y[idx])
            self.members_.append(gs.best_estimator_)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        """Member votes per class (column order ``classes_``)."""
        X = check_features(X, self.n_features_in_)
        votes = np.zeros((X.shape[0], len(self.classes_)))
        self._vote_sums = np.zeros_like(votes)
        for m in self.members_:
            pred = np.searchsorted(self.classes_, m.predict(X))
            votes[np.arange(X.shape[0]), pred] += 1
            self._vote_sums += m.decision_function(X)
        return votes

    def predict(self, X):
        votes = self.decision_function(X)
        out = np.empty(votes.shape[0], dtype=np.int64)
        for r in range(votes.shape[0]):
            tied = np.flatnonzero(votes[r] == votes[r].max())
            out[r] = tied[np.argmax(self._vote_sums[r, tied])]
        return self.classes_[out]

    @property
    def n_support_(self):
        return [m.n_support_ for m in self.members_]


# ------------------------------------------------------------- naive Bayes

class GaussianNaiveBayes(ClassifierMixin, BaseEstimator):
    """Naive Bayes with univariate Gaussian class-conditional densities.

    Variances are maximum-likelihood estimates floored at
    ``var_floor * column variance``; a column constant over the whole
    training set gets unit variance (it cannot separate classes).
    """

    def __init__(self, var_floor=1e-9):
        self.var_floor = var_floor

    def fit(self, X, y):
        X = check_features(X)
        y = np.asarray(y)
        self.classes_ = _check_labels(y, min_per_class=2)
        # rounding gives tiny nonzero variances for constant columns
        varies = np.ptp(X, axis=0) > 0
        colvar = X.var(axis=0)
        floor = np.where(varies, np.maximum(self.var_floor * colvar,
                                            np.finfo(np.float64).tiny), 1.0)
        self.priors_ = np.array([np.mean(y == c) for c in self.classes_])
        self.means_ = np.array([X[y == c].mean(axis=0) for c in self.classes_])
        var = np.array([X[y == c].var(axis=0) for c in self.classes_])
        var = np.maximum(var, floor)
        self.vars_ = np.where(varies, var, 1.0)
        self.n_features_in_ = X.shape[1]
        return self

    def _joint_log(self, X):
        X = check_features(X, self.n_features_in_)
        ll = -0.5 * (np.log(2 * np.pi * self.vars_)[None, :, :]
                     + (X[:, None, :] - self.means_[None, :, :]) ** 2
                     / self.vars_[None, :, :]).sum(axis=2)
        return ll + np.log(self.priors_)[None, :]

    def predict_proba(self, X):
        jl = self._joint_log(X)
        # explicit normalisation keeps rows on the simplex for huge log-likelihoods
        p = np.exp(jl - jl.max(axis=1, keepdims=True))
        return p / p.sum(axis=1, keepdims=True)

    def decision_function(self, X):
        return self.predict_proba(X)

    def predict(self, X):
        return self.classes_[np.argmax(self._joint_log(X), axis=1)]


# --------------------------------------------------------------------- kNN

class KNearestNeighbors(ClassifierMixin, BaseEstimator):
    """k-nearest-neighbour vote with a minimum-average-distance tie rule.

    Among the ``k`` nearest exemplars (distance ties broken by training
    order) the most frequent class wins; if several classes share the top
    count, the one whose tied neighbours are closest on average wins.
    """

    def __init__(self, k=3, standardize=True):
        self.k = k
        self.standardize = standardize

    def fit(self, X, y):
        X = check_features(X)
        y = np.asarray(y)
        if not 1 <= self.k <= X.shape[0]:
            raise ParameterError(f"k must be in 1..{X.shape[0]}")
        self.classes_ = np.unique(y)
        self.scaler_ = _Scaler.fit(X, self.standardize)
        self.exemplars_ = self.scaler_(X)
        self.labels_ = np.searchsorted(self.classes_, y)
        self.n_features_in_ = X.shape[1]
        return self

    def kneighbors(self, X):
        Xs = self.scaler_(check_features(X, self.n_features_in_))
        d = np.sqrt(np.maximum(
            np.sum(Xs ** 2, axis=1)[:, None] + np.sum(self.exemplars_ ** 2, axis=1)[None]
            - 2 * Xs @ self.exemplars_.T, 0.0))
        idx = np.argsort(d, axis=1, kind="stable")[:, :self.k]
        return np.take_along_axis(d, idx, axis=1), idx

    def decision_function(self, X):
        """Neighbour counts per class."""
        _, idx = self.kneighbors(X)
        counts = np.zeros((idx.shape[0], len(self.classes_)))
        for r in range(idx.shape[0]):
            np.add.at(counts[r], self.labels_[idx[r]], 1)
        return counts

    def predict(self, X):
        dist, idx = self.kneighbors(X)
        out = np.empty(idx.shape[0], dtype=np.int64)
        for r in range(idx.shape[0]):
            labs = self.labels_[idx[r]]
            counts = np.bincount(labs, minlength=len(self.classes_))
            tied = np.flatnonzero(counts == counts.max())
            if tied.size == 1:
                out[r] = tied[0]
            else:
                avg = [dist[r][labs == c].mean() for c in tied]
                out[r] = tied[int(np.argmin(avg))]
        return self.classes_[out]


def predict_label(model, x):
    """Label and per-class scores for one feature vector.

    Scores are posteriors for naive Bayes, neighbour counts for kNN and vote
    counts for the SVM variants.
    """
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    label = model.predict(x)[0]
    scores = model.decision_function(x)[0]
    return label, {str(c): float(s) for c, s in zip(model.classes_, scores)}


def make_classifier(name, random_state=0, C_grid=C_GRID, gamma_grid=GAMMA_GRID,
                    folds=5, k=3, bag_members=0):
    name = name.lower()
    if name == "svm":
        if bag_members:
            return BaggedSVC(bag_members, C_grid, gamma_grid, folds,
                             random_state=random_state)
        return GridSearchSVC(C_grid, gamma_grid, folds, random_state=random_state)
    if name == "nbc":
        return GaussianNaiveBayes()
    if name == "knn":
        return KNearestNeighbors(k)
    raise ParameterError(f"unknown classifier {name!r}")


# ----------------------------------------------------------- serialisation

def _svm_to_dict(m):
    return {
        "C": m.C, "gamma": m.gamma, "tol": m.tol,
        "scaler": {"mean": m.scaler_.mean.tolist(), "scale": m.scaler_.scale.tolist()},
        "machines": [{"pair": list(x["pair"]),
                      "support_vectors": np.asarray(x["support_vectors"]).tolist(),
                      "support_index": np.asarray(x["support_index"]).tolist(),
                      "dual_coef": np.asarray(x["dual_coef"]).tolist(),
                      "bias": x["bias"]} for x in m.machines_],
        "n_support": m.n_support_,
    }


def _svm_from_dict(d, classes):
    m = SupportVectorClassifier(d["C"], d["gamma"], d["tol"])
    m.classes_ = classes
    m.scaler_ = _Scaler(d["scaler"]["mean"], d["scaler"]["scale"])
    m.n_features_in_ = len(d["scaler"]["mean"])
    m.machines_ = [{"pair": tuple(x["pair"]),
                    "support_vectors": np.array(x["support_vectors"]).reshape(
                        -1, m.n_features_in_),
                    "support_index": np.array(x["support_index"], dtype=np.int64),
                    "dual_coef": np.array(x["dual_coef"]),
                    "alpha": np.abs(np.array(x["dual_coef"])),
                    "bias": x["bias"], "n_iter": 0} for x in d["machines"]]
    return m


def model_to_dict(model, meta=None):
    """Versioned JSON-ready description of a fitted classifier."""
    if not isinstance(model, (GridSearchSVC, SupportVectorClassifier, BaggedSVC,
                              GaussianNaiveBayes, KNearestNeighbors)):
        raise ParameterError(f"cannot serialise {type(model).__name__}")
    classes = [str(c) for c in model.classes_]
    out = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "classes": classes,
           "meta": meta or {}}
    if isinstance(model, GridSearchSVC):
        out.update(kind="svm", best_params=model.best_params_,
                   svm=_svm_to_dict(model.best_estimator_))
    elif isinstance(model, SupportVectorClassifier):
        out.update(kind="svm", svm=_svm_to_dict(model))
    elif isinstance(model, BaggedSVC):
        out.update(kind="bagged_svm", seeds=model.bootstrap_seeds_,
                   members=[_svm_to_dict(m) for m in model.members_])
    elif isinstance(model, GaussianNaiveBayes):
        out.update(kind="nbc", priors=model.priors_.tolist(),
                   means=model.means_.tolist(), vars=model.vars_.tolist())
    elif isinstance(model, KNearestNeighbors):
        out.update(kind="knn", k=model.k,
                   scaler={"mean": model.scaler_.mean.tolist(),
                           "scale": model.scaler_.scale.tolist()},
                   exemplars=model.exemplars_.tolist(),
                   labels=model.labels_.tolist())
    return out


def model_from_dict(d):
    if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
        raise ParameterError("not a supported fractex model file")
    classes = np.array(d["classes"])
    kind = d["kind"]
    if kind == "svm":
        return _svm_from_dict(d["svm"], classes)
    if kind == "bagged_svm":
        m = BaggedSVC(len(d["members"]))
        m.classes_ = classes
        m.bootstrap_seeds_ = d["seeds"]
        m.members_ = [_svm_from_dict(x, classes) for x in d["members"]]
        m.n_features_in_ = m.members_[0].n_features_in_
        return m
    if kind == "nbc":
        m = GaussianNaiveBayes()
        m.classes_ = classes
        m.priors_ = np.array(d["priors"])
        m.means_ = np.array(d["means"])
        m.vars_ = np.array(d["vars"])
        m.n_features_in_ = m.means_.shape[1]
        return m
    if kind == "knn":
        m = KNearestNeighbors(d["k"])
        m.classes_ = classes
        m.scaler_ = _Scaler(d["scaler"]["mean"], d["scaler"]["scale"])
        m.exemplars_ = np.array(d["exemplars"])
        m.labels_ = np.array(d["labels"], dtype=np.int64)
        m.n_features_in_ = m.exemplars_.shape[1]
        return m
    raise ParameterError(f"unknown model kind {kind!r}")


def save_model(path, model, meta=None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model, meta), fh, indent=1, sort_keys=True)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
