"""Supervised and unsupervised Poisson-gamma variational Bayesian NMF for
document classification, with TF-IDF features, a PCA baseline, cosine k-NN
and sparsity diagnostics."""

from .archive import load_model, save_model
from .baselines import PcaModel, pca_fit, pca_project
from .corpus import CountMatrix, compute_idf, compute_tf, compute_tfidf, select_top_terms
from .evaluation import (
    EvalReport,
    default_k,
    inter_label_sparsity,
    knn_classify,
    label_aggregate,
    macro_accuracy,
    micro_accuracy,
)
from .harness import ExperimentConfig, SweepResult, emit_scatter, run_experiment
from .numerics import digamma, gamma_entropy, hoyer_sparsity, ln_gamma, matrix_hoyer_sparsity
from .supervised import SupervisedHyper, SupervisedModel, fit_supervised
from .vbnmf import FitConfig, GammaStats, VbnmfHyper, VbnmfModel, fit, project

__version__ = "0.1.0"
