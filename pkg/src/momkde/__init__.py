"""Robust kernel density estimation: Median-of-Means KDE and baselines."""

from .bandwidth import select_bandwidth_cv
from .datagen import Dataset, load_csv_dataset, sample_inliers, sample_outliers
from .density import EvaluationGrid, WeightedDensityEstimate, build_grid, integrate_on_grid, kde_evaluate, normalize_density
from .kernels import KernelSpec, eval_kernel, kernel_profile, make_kernel
from .metrics import auc, js_divergence, kl_divergence
from .mom import MomEstimate, fit_mom, mom_evaluate, mom_fit_normalized, partition_blocks
from .rkde import RobustLoss, fit_rkde
from .spkde import fit_spkde, project_simplex

__version__ = "0.1.0"
