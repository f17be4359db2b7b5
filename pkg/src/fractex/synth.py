"""Synthetic textures with known ground truth.

fBm surfaces come from spectral synthesis: complex Gaussian Fourier
coefficients with amplitude ``|f| ** -(H + 1)`` (power ``|f| ** -(2H + 2)``)
are inverse transformed.  The field is synthesised on a grid ``OVERSAMPLE``
times finer than requested and subsampled, which keeps the increments at
pixel lags 1-3 close to the ideal power law (a plain grid-size synthesis is
visibly too smooth at the finest lags for small H).
"""

import csv
import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._validation import ParameterError
from .io import write_pgm

KINDS = ("FBM", "STRIPES", "BLOBS", "CHECKER")
OVERSAMPLE = 4
MANIFEST = "manifest.csv"


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "FBM"
    size: int = 256
    hurst: float = 0.5
    period: float = 16.0
    angle: float = 0.0
    scale: float = 6.0
    noise: float = 0.3
    contrast: float = 1.0
    offset: float = 0.0
    seed: int = 0

    def validate(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown texture kind {self.kind!r}")
        if not 0.0 < self.hurst < 1.0:
            raise ParameterError(f"hurst must lie in (0, 1), got {self.hurst}")
        if self.kind == "FBM" and self.size < 64:
            raise ParameterError("FBM surfaces need size >= 64")
        if self.size < 8:
            raise ParameterError("size must be >= 8")
        if not 0.0 < self.contrast <= 1.0 or not 0.0 <= self.offset <= 1.0:
            raise ParameterError("contrast must be in (0, 1] and offset in [0, 1]")
        if self.period <= 0 or self.scale <= 0 or self.noise < 0:
            raise ParameterError("period and scale must be positive, noise >= 0")
        return self


def _to_uint8(field_, contrast=1.0, offset=0.0):
    lo, hi = field_.min(), field_.max()
    unit = (field_ - lo) / (hi - lo) if hi > lo else np.zeros_like(field_)
    span = 255.0 * contrast
    base = offset * (255.0 - span)
    return np.round(base + span * unit).astype(np.uint8)


def _fbm_field(size, hurst, rng, oversample=OVERSAMPLE):
    n = size * oversample
    f = np.fft.fftfreq(n)
    radius = np.hypot(f[None, :], f[:, None])
    radius[0, 0] = 1.0
    amp = radius ** -(hurst + 1.0)
    amp[0, 0] = 0.0
    coef = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * amp
    return np.real(np.fft.ifft2(coef))[::oversample, ::oversample]


def gen_fbm_surface(spec):
    """Spectral-synthesis fBm surface quantised to 8 bits."""
    spec = spec.validate()
    if spec.kind != "FBM":
        raise ParameterError("gen_fbm_surface needs kind FBM")
    rng = np.random.default_rng(spec.seed)
    return _to_uint8(_fbm_field(spec.size, spec.hurst, rng),
                     spec.contrast, spec.offset)


def _grid(size):
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    return y, x


def _stripes(spec, rng):
    y, x = _grid(spec.size)
    theta = np.deg2rad(spec.angle)
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(2 * np.pi * (x * np.cos(theta) + y * np.sin(theta)) / spec.period
                  + phase)
    noise = _fbm_field(spec.size, spec.hurst, rng)
    noise = noise / (noise.std() + 1e-12)
    return wave + spec.noise * noise


def _blobs(spec, rng):
    n = spec.size
    count = max(1, int(round(n * n / (4.0 * spec.scale ** 2) * 0.5)))
    f = np.fft.fftfreq(n)
    impulses = np.zeros((n, n))
    ys = rng.integers(0, n, count)
    xs = rng.integers(0, n, count)
    np.add.at(impulses, (ys, xs), rng.uniform(0.5, 1.5, count))
    # periodic Gaussian blur of the impulse field
    gauss = np.exp(-2 * (np.pi * spec.scale) ** 2 * (f[None, :] ** 2 + f[:, None] ** 2))
    field_ = np.real(np.fft.ifft2(np.fft.fft2(impulses) * gauss))
    field_ = field_ / (field_.std() + 1e-12)
    noise = _fbm_field(n, spec.hurst, rng)
    return field_ + spec.noise * noise / (noise.std() + 1e-12)


def _checker(spec, rng):
    y, x = _grid(spec.size)
    sy, sx = rng.uniform(0, spec.period, 2)
    board = ((np.floor((x + sx) / spec.period) + np.floor((y + sy) / spec.period)) % 2)
    noise = _fbm_field(spec.size, spec.hurst, rng)
    return board + spec.noise * noise / (noise.std() + 1e-12)


def generate(spec):
    """Render any :class:`SynthSpec` as an 8-bit raster."""
    spec = spec.validate()
    if spec.kind == "FBM":
        return gen_fbm_surface(spec)
    rng = np.random.default_rng(spec.seed)
    maker = {"STRIPES": _stripes, "BLOBS": _blobs, "CHECKER": _checker}[spec.kind]
    return _to_uint8(maker(spec, rng), spec.contrast, spec.offset)


@dataclass(frozen=True)
class ClassSpec:
    """One corpus class: a base texture plus per-patient jitter ranges.

    ``jitter`` maps SynthSpec field names to half-widths of a uniform
    per-patient perturbation; ``angle`` is in degrees.
    """

    label: str
    spec: SynthSpec
    n_images: int
    n_patients: int
    jitter: dict = field(default_factory=dict)


@dataclass
class CorpusItem:
    filename: str
    label: str
    patient: str
    seed: int
    spec: SynthSpec
    image: np.ndarray = field(repr=False)


DEFAULT_JITTER = {"hurst": 0.02, "period": 1.0, "angle": 8.0, "scale": 0.5}


def default_classes(size=256, n_patients=5, images_per_patient=16):
    """Four-class desk corpus: fBm at H 0.3 and 0.6, stripes and blobs."""
    n = n_patients * images_per_patient
    return [
        ClassSpec("fbm03", SynthSpec("FBM", size, hurst=0.3), n, n_patients,
                  {"hurst": 0.02}),
        ClassSpec("fbm06", SynthSpec("FBM", size, hurst=0.6), n, n_patients,
                  {"hurst": 0.02}),
        ClassSpec("stripes", SynthSpec("STRIPES", size, hurst=0.5, period=12.0,
                                       angle=30.0, noise=0.6),
                  n, n_patients, {"period": 1.5, "angle": 10.0}),
        ClassSpec("blobs", SynthSpec("BLOBS", size, hurst=0.5, scale=5.0, noise=0.3),
                  n, n_patients, {"scale": 0.5}),
    ]


def gen_corpus(classes, seed=0, contrast_range=(0.5, 1.0), gain_range=(0.35, 1.0)):
    """Generate a labelled corpus with patient structure.

    Each patient is a seed family with its own jittered parameters and an
    acquisition gain drawn from ``gain_range`` (a stand-in for per-case
    staining strength).  Each image additionally gets a random contrast from
    ``contrast_range`` and a random offset, so intensity carries no class
    information.
    """
    labels = [c.label for c in classes]
    if len(classes) < 2:
        raise ParameterError("a corpus needs at least two classes")
    if len(set(labels)) != len(labels):
        raise ParameterError(f"duplicate class labels in {labels}")
    items = []
    for ci, cls in enumerate(classes):
        if cls.n_patients < 2:
            raise ParameterError(f"class {cls.label} needs >= 2 patients")
        if cls.n_images % cls.n_patients:
            raise ParameterError(
                f"class {cls.label}: {cls.n_images} images do not split evenly "
                f"over {cls.n_patients} patients")
        per_patient = cls.n_images // cls.n_patients
        for p in range(cls.n_patients):
            prng = np.random.default_rng([seed, ci, p])
            changes = {}
            for name, half in sorted(cls.jitter.items()):
                base = getattr(cls.spec, name)
                changes[name] = float(base + prng.uniform(-half, half))
            gain = float(prng.uniform(*gain_range))
            pspec = replace(cls.spec, **changes)
            patient = f"{cls.label}-p{p:02d}"
            for k in range(per_patient):
                ss = np.random.SeedSequence([seed, ci, p, k])
                img_seed = int(ss.generate_state(1)[0])
                irng = np.random.default_rng(img_seed)
                contrast = gain * float(irng.uniform(*contrast_range))
                offset = float(irng.uniform(0.0, 1.0))
                spec = replace(pspec, seed=img_seed, contrast=contrast, offset=offset)
                items.append(CorpusItem(f"{patient}-{k:03d}.pgm", cls.label, patient,
                                        img_seed, spec, generate(spec)))
    return items


def write_corpus(items, directory):
    """Write PGM images plus ``manifest.csv`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    for it in items:
        write_pgm(os.path.join(directory, it.filename), it.image)
    write_manifest(os.path.join(directory, MANIFEST),
                   [{"filename": it.filename, "label": it.label,
                     "patient": it.patient, "seed": it.seed,
                     "params": json.dumps(asdict(it.spec), sort_keys=True)}
                    for it in items])


def write_manifest(path, rows):
    cols = ["filename", "label", "patient", "seed"]
    extra = [k for k in (rows[0] if rows else {}) if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols + extra)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_manifest(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
