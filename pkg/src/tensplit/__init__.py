"""Dense tensor decompositions with common/individual feature splitting.

Layout convention everywhere: the first index varies fastest, both in
memory and in every flattening or unfolding.
"""

from .classify import (
    EvalReport,
    ExperimentConfig,
    LabeledVectors,
    knn_classify,
    nearest_centroid,
    run_experiment,
)
from .core import (
    DenseTensor,
    fold,
    frontal_slice,
    hadamard,
    khatri_rao,
    mode_n_product,
    norm_frobenius,
    outer_product,
    unfold,
)
from .dataset import (
    EnsembleDataset,
    SplitPlan,
    load_dataset,
    load_pgm_ensemble,
    make_group_splits,
    read_pgm,
    save_dataset,
    synthetic_color_ensemble,
    synthetic_face_fixture,
)
from .decomp import (
    BlockTerm,
    DecompConfig,
    Diagnostics,
    KruskalFactors,
    LL1Factors,
    TuckerFactors,
    cpd_als,
    fit_error,
    hosvd,
    ll1_nn,
    load_factors,
    reconstruct,
    save_factors,
)
from .dtf import DtfFormatError, read_tensor, write_tensor
from .features import (
    CommonBasis,
    CommonFeatureBank,
    FeatureSplit,
    SubsetRule,
    build_feature_bank,
    common_basis_qr,
    estimate_mixing,
    fit_feature_bank,
    split_features,
    split_single,
    stacked_pca,
)
from .kernels import ConvergenceError, nnls, nnls_multi, pinv, qr, svd
from .seeds import derive_seed, make_rng, seed_sequence

__version__ = "0.1.0"

__all__ = [
    "BlockTerm",
    "CommonBasis",
    "CommonFeatureBank",
    "ConvergenceError",
    "DecompConfig",
    "DenseTensor",
    "Diagnostics",
    "DtfFormatError",
    "EnsembleDataset",
    "EvalReport",
    "ExperimentConfig",
    "FeatureSplit",
    "KruskalFactors",
    "LL1Factors",
    "LabeledVectors",
    "SplitPlan",
    "SubsetRule",
    "TuckerFactors",
    "build_feature_bank",
    "common_basis_qr",
    "cpd_als",
    "derive_seed",
    "estimate_mixing",
    "fit_error",
    "fit_feature_bank",
    "fold",
    "frontal_slice",
    "hadamard",
    "hosvd",
    "khatri_rao",
    "knn_classify",
    "ll1_nn",
    "load_dataset",
    "load_factors",
    "load_pgm_ensemble",
    "make_group_splits",
    "make_rng",
    "mode_n_product",
    "nearest_centroid",
    "nnls",
    "nnls_multi",
    "norm_frobenius",
    "outer_product",
    "pinv",
    "qr",
    "read_pgm",
    "read_tensor",
    "reconstruct",
    "run_experiment",
    "save_dataset",
    "save_factors",
    "seed_sequence",
    "split_features",
    "split_single",
    "stacked_pca",
    "svd",
    "synthetic_color_ensemble",
    "synthetic_face_fixture",
    "unfold",
    "write_tensor",
]
