from .autodiff import DiffGraph, Tensor, backward
from .gradcheck import finite_difference_gradient, relative_error
from .linalg import PcaBasis, cosine_similarity, dense_ops, jacobi_eigh, pca_top_components, softmax

__all__ = [
    "DiffGraph",
    "Tensor",
    "backward",
    "finite_difference_gradient",
    "relative_error",
    "PcaBasis",
    "cosine_similarity",
    "dense_ops",
    "jacobi_eigh",
    "pca_top_components",
    "softmax",
]
