"""Supervised-learning primitives: SVM, sigmoid calibration, pairwise coupling, CART."""

from .kernels import KernelSpec, gram, kernel_eval
from .multiclass import (OneVsOneEnsemble, Standardizer, couple_pairwise,
                         couple_pairwise_batch, ensemble_posterior, train_ensemble)
from .platt import fit_platt, platt_prob, sigmoid_prob
from .svm import SvmBinaryModel, solve_dual, svm_decision, train_svm
from .tree import DecisionTreeModel, TreeNode, train_tree, tree_classify

__all__ = [
    "DecisionTreeModel", "KernelSpec", "OneVsOneEnsemble", "Standardizer",
    "SvmBinaryModel", "TreeNode", "couple_pairwise", "couple_pairwise_batch",
    "ensemble_posterior", "fit_platt", "gram", "kernel_eval", "platt_prob",
    "sigmoid_prob", "solve_dual", "svm_decision", "train_ensemble", "train_svm",
    "train_tree", "tree_classify",
]
