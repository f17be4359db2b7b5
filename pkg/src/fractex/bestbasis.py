"""Tree-structured best-basis selection over the undecimated packet tree.

``bbs_fd`` expands, level by level, the child subband with the highest mean
fractal dimension and stops once the four siblings become indistinguishable
(minimum pairwise FD difference <= lambda) or the chosen subband's FD map is
homogeneous (lacunarity <= lambda).  ``bbs_energy_guided`` is the classical
baseline that always expands the most energetic child to a fixed depth and
records either the subband energies or co-occurrence statistics.
"""

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import ParameterError, StructureError, check_raster
from .fractal import DEFAULT_WINDOW, fd_image, fd_signature
from .wavelet import BANDS, MAX_DEPTH, FilterBank, WPTree, path_name

DEFAULT_LAMBDA = 0.012
NOISE_FD_CUTOFF = 2.985
GLCM_ANGLES = (0, 45, 90, 135)
GLCM_STATS = ("correlation", "energy", "dissimilarity", "homogeneity")
# (drow, dcol) for displacement 1 at each angle; rows grow downwards
_GLCM_OFFSETS = {0: (0, 1), 45: (-1, 1), 90: (-1, 0), 135: (-1, -1)}


@dataclass(frozen=True)
class SelectionConfig:
    lam: float = DEFAULT_LAMBDA
    max_levels: int = MAX_DEPTH
    window: int = DEFAULT_WINDOW
    noise_fd_cutoff: float = NOISE_FD_CUTOFF
    stop_on_lambda: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"lambda must be > 0, got {self.lam}")
        if not 1 <= self.max_levels <= MAX_DEPTH:
            raise ParameterError(f"max_levels must be in 1..{MAX_DEPTH}")


@dataclass
class LevelRecord:
    level: int
    chosen: str
    scores: dict
    dm: float = None
    lacunarity: float = None
    terminated: bool = False
    noise: tuple = ()


@dataclass
class BasisPath:
    """Per-level selection record of one tree walk.

    ``score_kind`` is ``"fd"`` for the fractal walk and ``"energy"`` for
    the energy-guided baselines.
    """

    levels: list = field(default_factory=list)
    score_kind: str = "fd"

    @property
    def depth(self):
        return len(self.levels)

    @property
    def bands(self):
        return tuple(r.chosen for r in self.levels)

    def walked_nodes(self):
        """Parent paths decomposed during the walk, root first."""
        b = self.bands
        return [b[:i] for i in range(len(b))]

    def to_dict(self):
        out = []
        for r in self.levels:
            d = {"chosen": r.chosen, self.score_kind: dict(r.scores),
                 "dm": r.dm, "lacunarity": r.lacunarity,
                 "terminated": r.terminated}
            if r.noise:
                d["noise"] = list(r.noise)
            out.append(d)
        return {"levels": out}

    @classmethod
    def from_dict(cls, d):
        levels = d["levels"]
        kind = "fd" if not levels or "fd" in levels[0] else "energy"
        recs = [LevelRecord(i + 1, r["chosen"], dict(r[kind]), r.get("dm"),
                            r.get("lacunarity"), bool(r["terminated"]),
                            tuple(r.get("noise", ())))
                for i, r in enumerate(levels)]
        return cls(recs, kind)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class SignatureVector:
    values: list = field(default_factory=list)
    provenance: list = field(default_factory=list)

    def extend(self, values, provenance):
        values = [float(v) for v in values]
        if len(values) != len(provenance):
            raise StructureError("values and provenance lengths differ")
        if not np.all(np.isfinite(values)):
            raise StructureError("signature values must be finite")
        self.values.extend(values)
        self.provenance.extend(provenance)

    def __len__(self):
        return len(self.values)

    def as_array(self):
        return np.asarray(self.values, dtype=np.float64)


def energy_signature(subband, k=1):
    """Mean ``|I| ** k`` over the subband (k = 1 or 2)."""
    if k not in (1, 2):
        raise ParameterError(f"energy order must be 1 or 2, got {k}")
    x = np.asarray(subband, dtype=np.float64)
    if x.size == 0:
        raise StructureError("empty subband")
    return float(np.mean(np.abs(x) ** k))


def quantize(subband, levels_q=32):
    """Linear min-max quantisation to integer bins ``0..levels_q - 1``."""
    if levels_q < 2:
        raise ParameterError("levels_q must be >= 2")
    x = check_raster(subband, "subband")
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return np.zeros(x.shape, dtype=np.int64)
    q = np.floor((x - lo) / (hi - lo) * levels_q).astype(np.int64)
    return np.minimum(q, levels_q - 1)


def glcm_matrix(q, angle, levels_q, distance=1):
    """Symmetric, normalised co-occurrence matrix of quantised image ``q``."""
    dr, dc = _GLCM_OFFSETS[angle]
    dr, dc = dr * distance, dc * distance
    M, N = q.shape
    r0, r1 = max(0, -dr), M - max(0, dr)
    c0, c1 = max(0, -dc), N - max(0, dc)
    a = q[r0:r1, c0:c1]
    b = q[r0 + dr:r1 + dr, c0 + dc:c1 + dc]
    counts = np.bincount((a * levels_q + b).ravel(),
                         minlength=levels_q * levels_q).reshape(levels_q, levels_q)
    counts = counts + counts.T
    total = counts.sum()
    if total == 0:
        raise StructureError("image too small for the co-occurrence displacement")
    return counts / total


def _glcm_stats(P):
    L = P.shape[0]
    i, j = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    mu_i, mu_j = np.sum(i * P), np.sum(j * P)
    var_i = np.sum((i - mu_i) ** 2 * P)
    var_j = np.sum((j - mu_j) ** 2 * P)
    degenerate = var_i <= 1e-15 or var_j <= 1e-15
    corr = 0.0 if degenerate else float(
        np.sum((i - mu_i) * (j - mu_j) * P) / np.sqrt(var_i * var_j))
    return ([corr, float(np.sum(P ** 2)), float(np.sum(P * np.abs(i - j))),
             float(np.sum(P / (1.0 + (i - j) ** 2)))], degenerate)


def glcm_features(subband, levels_q=32, return_flags=False):
    """Correlation, ASM energy, dissimilarity and homogeneity at 0/45/90/135 deg.

    Returns 16 values ordered angle-major.  A zero-variance matrix has
    undefined correlation; it is reported as 0 and flagged.
    """
    q = quantize(subband, levels_q)
    values, flags = [], []
    for angle in GLCM_ANGLES:
        stats, bad = _glcm_stats(glcm_matrix(q, angle, levels_q))
        values.extend(stats)
        flags.append(bad)
    values = np.array(values)
    return (values, flags) if return_flags else values


def glcm_names():
    return [f"{s}@{a}" for a in GLCM_ANGLES for s in GLCM_STATS]


class SubbandAnalyzer:
    """Lazy packet tree of one image plus cached per-subband signatures.

    Scalar signatures are kept in ``cache`` (keyed by ``(kind, path)``) and
    survive :meth:`release`, which drops the coefficient arrays.
    """

    def __init__(self, img, fb=None, window=DEFAULT_WINDOW, max_depth=MAX_DEPTH,
                 glcm_levels=32, cache=None):
        self.img = check_raster(img)
        self.fb = fb if fb is not None else FilterBank.daubechies8()
        self.window = window
        self.max_depth = max_depth
        self.glcm_levels = glcm_levels
        self.cache = {} if cache is None else cache
        self._tree = None

    @property
    def tree(self):
        if self._tree is None:
            self._tree = WPTree.from_image(self.img, self.fb, self.max_depth)
        return self._tree

    def coeffs(self, path):
        return self.tree.node(path).coeffs

    def fd(self, path):
        key = ("fd", tuple(path))
        if key not in self.cache:
            self.cache[key] = fd_signature(fd_image(self.coeffs(path), self.window))
        return self.cache[key]

    def fd_map(self, path):
        return fd_image(self.coeffs(path), self.window)

    def energy(self, path, k=1):
        key = (f"e{k}", tuple(path))
        if key not in self.cache:
            self.cache[key] = energy_signature(self.coeffs(path), k)
        return self.cache[key]

    def glcm(self, path):
        key = ("glcm", tuple(path))
        if key not in self.cache:
            self.cache[key] = glcm_features(self.coeffs(path), self.glcm_levels)
        return self.cache[key]

    def release(self):
        self._tree = None


def _first_max(scores, allowed):
    best = None
    for b in BANDS:
        if b in allowed and (best is None or scores[b] > scores[best]):
            best = b
    return best


def bbs_fd(img, fb=None, cfg=None, analyzer=None):
    """Fractal-dimension-guided best-basis walk.

    Parameters
    ----------
    img : array-like of shape (M, N)
        Preprocessed raster.  Ignored when ``analyzer`` is given.
    fb : FilterBank, optional
    cfg : SelectionConfig, optional
    analyzer : SubbandAnalyzer, optional
        Reuse an existing signature cache.

    Returns
    -------
    path : BasisPath
    signature : SignatureVector
        The four mean-FD values of every level walked.

    Notes
    -----
    Subbands whose mean FD reaches ``cfg.noise_fd_cutoff`` are recorded but
    not eligible for expansion; if all four are, the plain maximum is used.
    Ties go to the first band in LL, LH, HL, HH order.
    """
    cfg = cfg if cfg is not None else SelectionConfig()
    an = analyzer if analyzer is not None else SubbandAnalyzer(
        img, fb, cfg.window, max(cfg.max_levels, 1))
    path, sv = BasisPath(score_kind="fd"), SignatureVector()
    parent = ()
    for level in range(1, cfg.max_levels + 1):
        sigs = {b: an.fd(parent + (b,)) for b in BANDS}
        means = {b: sigs[b].mean_fd for b in BANDS}
        sv.extend([means[b] for b in BANDS],
                  [(level, parent + (b,), "fd") for b in BANDS])
        dm = min(abs(means[a] - means[b]) for a, b in itertools.combinations(BANDS, 2))
        noise = tuple(b for b in BANDS if means[b] >= cfg.noise_fd_cutoff)
        allowed = [b for b in BANDS if b not in noise] or list(BANDS)
        chosen = _first_max(means, allowed)
        lac = sigs[chosen].lacunarity
        stop = level == cfg.max_levels or (
            cfg.stop_on_lambda and (dm <= cfg.lam or lac <= cfg.lam))
        path.levels.append(LevelRecord(level, chosen, means, dm, lac, stop, noise))
        if stop:
            break
        parent = parent + (chosen,)
    return path, sv


def bbs_energy_guided(img, fb=None, cfg=None, signature="E1", depth=None,
                      analyzer=None):
    """Energy-guided walk to a fixed depth (no lambda rule).

    ``signature`` selects both the guidance and the recorded features:
    ``E1``/``E2`` record the four l1/l2 energies per level, ``GLCM`` records
    16 co-occurrence statistics per child (64 per level) while expanding the
    child with the largest l1 energy.
    """
    signature = signature.upper()
    if signature not in ("E1", "E2", "GLCM"):
        raise ParameterError(f"unknown signature {signature!r}")
    cfg = cfg if cfg is not None else SelectionConfig()
    depth = cfg.max_levels if depth is None else int(depth)
    if not 1 <= depth <= MAX_DEPTH:
        raise ParameterError(f"depth must be in 1..{MAX_DEPTH}")
    k = 2 if signature == "E2" else 1
    an = analyzer if analyzer is not None else SubbandAnalyzer(
        img, fb, cfg.window, depth)
    path, sv = BasisPath(score_kind="energy"), SignatureVector()
    parent = ()
    for level in range(1, depth + 1):
        energies = {b: an.energy(parent + (b,), k) for b in BANDS}
        if signature == "GLCM":
            for b in BANDS:
                sv.extend(an.glcm(parent + (b,)),
                          [(level, parent + (b,), f"glcm:{n}") for n in glcm_names()])
        else:
            sv.extend([energies[b] for b in BANDS],
                      [(level, parent + (b,), f"e{k}") for b in BANDS])
        chosen = _first_max(energies, BANDS)
        path.levels.append(LevelRecord(level, chosen, energies,
                                       terminated=level == depth))
        parent = parent + (chosen,)
    return path, sv


def describe(path):
    """Short human-readable form, e.g. ``HL > LH > HH``."""
    return " > ".join(path.bands) if path.levels else "(empty)"


def provenance_name(prov):
    level, p, kind = prov
    if kind.startswith("glcm:"):
        return f"glcm:{path_name(p)}:{kind[5:]}"
    return f"{kind}:{path_name(p)}"
