"""Conditional mean independence testing with generative neural networks.

The test targets H0: E[Y|X,Z] = E[Y|Z]. It estimates a kernel-based
population measure that is zero exactly under H0, using a cross-fitted
U-statistic whose nuisances (a conditional-mean regressor for Y and a
conditional generator for X given Z) are trained on opposite data folds,
and calibrates the decision by a wild bootstrap.

Typical library use::

    from cmitest import Dataset, TestConfig, run_cmi_test
    result = run_cmi_test(Dataset(x=X, y=Y, z=Z), TestConfig(seed=7))
    print(result.p_value, result.reject)
"""

from .bootstrap import (
    BootstrapConfig,
    TestResult,
    decide,
    p_value,
    wild_bootstrap,
)
from .dataset import Dataset
from .generator import (
    GeneratorModel,
    GeneratorTrainConfig,
    mmd2_unbiased,
    sample_conditional,
    train_generator,
)
from .harness import StudyReport, StudySpec, run_study, size_adjusted_power
from .kernels import (
    GAUSSIAN,
    LAPLACIAN,
    KernelSpec,
    eval_kernel,
    gram_matrix,
    median_heuristic,
)
from .neuralnet import (
    AdamState,
    MlpParams,
    adam_init,
    adam_step,
    mlp_forward,
    mlp_gradient,
    mlp_init,
)
from .pipeline import TestConfig, run_cmi_test
from .regressor import RegressorModel, RegressorTrainConfig, predict_mean, train_regressor
from .simdata import gen_example, make_design, oracle_conditional_sampler, oracle_g_y
from .statistic import (
    DiscreteJointSpec,
    FoldAssignment,
    StatKernelMatrices,
    discrete_joint,
    gamma_star_oracle,
    split_folds,
    stat_kernel_matrices,
    t_hat,
    t_oracle,
    u_hat,
    v_hat,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BootstrapConfig",
    "Dataset",
    "DiscreteJointSpec",
    "FoldAssignment",
    "GAUSSIAN",
    "GeneratorModel",
    "GeneratorTrainConfig",
    "KernelSpec",
    "LAPLACIAN",
    "MlpParams",
    "RegressorModel",
    "RegressorTrainConfig",
    "StatKernelMatrices",
    "StudyReport",
    "StudySpec",
    "TestConfig",
    "TestResult",
    "adam_init",
    "adam_step",
    "decide",
    "discrete_joint",
    "eval_kernel",
    "gamma_star_oracle",
    "gen_example",
    "gram_matrix",
    "make_design",
    "median_heuristic",
    "mlp_forward",
    "mlp_gradient",
    "mlp_init",
    "mmd2_unbiased",
    "oracle_conditional_sampler",
    "oracle_g_y",
    "p_value",
    "predict_mean",
    "run_cmi_test",
    "run_study",
    "sample_conditional",
    "size_adjusted_power",
    "split_folds",
    "stat_kernel_matrices",
    "t_hat",
    "t_oracle",
    "train_generator",
    "train_regressor",
    "u_hat",
    "v_hat",
    "wild_bootstrap",
]
