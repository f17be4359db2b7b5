"""Fractal-dimension-guided wavelet-packet texture features and classifiers."""

__version__ = "0.1.0"

from .bestbasis import BasisPath, SelectionConfig, bbs_energy_guided, bbs_fd
from .classify import (BaggedSVC, GaussianNaiveBayes, GridSearchSVC, KNearestNeighbors,
                       SupportVectorClassifier, load_model, predict_label, save_model)
from .evaluate import (make_lopo_folds, run_lopo, score_run, sweep_levels,
                       wilcoxon_signed_rank)
from .features import (DivergenceSelector, FeatureMatrix, WaveletPacketFeatures,
                       build_global_basis, correlation_prune, divergence_rank)
from .fractal import fd_image, fd_signature, lacunarity
from .imgprep import Preprocessor, morphological_gradient, select_channel, shear_deform
from .synth import SynthSpec, gen_corpus, gen_fbm_surface
from .wavelet import FilterBank, WPTree, decompose_level

__all__ = [
    "BaggedSVC", "BasisPath", "DivergenceSelector", "FeatureMatrix", "FilterBank",
    "GaussianNaiveBayes", "GridSearchSVC", "KNearestNeighbors", "Preprocessor",
    "SelectionConfig", "SupportVectorClassifier", "SynthSpec", "WPTree",
    "WaveletPacketFeatures", "bbs_energy_guided", "bbs_fd", "build_global_basis",
    "correlation_prune", "decompose_level", "divergence_rank", "fd_image",
    "fd_signature", "gen_corpus", "gen_fbm_surface", "lacunarity", "load_model",
    "make_lopo_folds", "morphological_gradient", "predict_label", "run_lopo",
    "save_model", "score_run", "select_channel", "shear_deform", "sweep_levels",
    "wilcoxon_signed_rank",
]
