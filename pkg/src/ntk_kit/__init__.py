"""Depth limits of wide-network kernels: duals, taxonomy, and classifiers.

The package walks the full pipeline: activation duals and their leading
moments (`dual`), depth recursions and their normalized limits (`depth`),
the three limiting classifiers plus exact structured solvers (`classify`),
synthetic sphere data with an exact optimal rule (`sphere`), and the
config-driven experiment runners plus CLI (`experiments`, `cli`).

Hot loops come in two interchangeable backends (compiled and pure numpy);
see `backend` and the `NTK_KIT_BACKEND` environment variable.
"""

from importlib.metadata import PackageNotFoundError, version as _pkg_version

try:
    __version__ = _pkg_version("ntk-kit")
except PackageNotFoundError:  # pragma: no cover - source tree without install
    __version__ = "0+unknown"

from .backend import active_backend, set_threads
from .errors import (
    ConfigError,
    IllConditioned,
    InvalidRegime,
    MalformedDataset,
    NormalizationUndefined,
    NtkKitError,
    NumericalFailure,
    SingularStructure,
    SpecInvalid,
    TruncationWarning,
    UnknownPreset,
    UnsupportedLimit,
)
from ._kernels import warm_up
from .dual import (
    ActivationSpec,
    ClosedFormDual,
    DualSeries,
    FixedPoint,
    FixedPointReport,
    KernelCase,
    Moments,
    Phase,
    PRESET_NAMES,
    TaxonomyVerdict,
    classify_taxonomy,
    fixed_points,
    hermite_dual,
    moments,
    preset,
    preset_primal,
)
from .depth import (
    DEFAULT_EPS_GRID,
    DepthTrace,
    PoleFit,
    estimate_pole_order,
    f_alpha_iterate,
    f_alpha_sandwich,
    iterate_dual,
    normalized_trace,
    ntk_closed_form,
    ntk_recursion,
    piecewise_linear_iterate,
    piecewise_linear_limit,
    psi_infinity,
    psi_trace_estimate,
)
from .classify import (
    KernelHandle,
    LabeledDataset,
    deep_ntk_kernel,
    gram_matrix,
    hilbert_kernel,
    hilbert_smoother_predict,
    kernel_machine_predict,
    kernel_smoother_predict,
    majority_vote_predict,
    one_nn_predict,
    smoother_scores,
    structured_inverse,
)
from .sphere import (
    HALF_PI,
    AngularBox,
    BayesOracle,
    MixtureSpec,
    angles_to_point,
    bayes_oracle,
    load_dataset,
    point_to_angles,
    sample_mixture,
    sample_uniform,
    save_dataset,
    stream,
)
from .config import (
    ActivationRef,
    CompareParams,
    DynamicsParams,
    ExperimentConfig,
    Fig2Params,
    PolefitParams,
    TaxonomyParams,
    default_config,
    parse_config,
)
from .experiments import (
    ExperimentReport,
    run,
    run_compare,
    run_dynamics,
    run_fig2,
    run_polefit,
    run_taxonomy,
)

__all__ = [
    "__version__",
    "active_backend",
    "set_threads",
    "warm_up",
    # errors
    "NtkKitError",
    "NumericalFailure",
    "UnknownPreset",
    "InvalidRegime",
    "NormalizationUndefined",
    "IllConditioned",
    "UnsupportedLimit",
    "SingularStructure",
    "SpecInvalid",
    "MalformedDataset",
    "ConfigError",
    "TruncationWarning",
    # duals
    "DualSeries",
    "ClosedFormDual",
    "ActivationSpec",
    "preset",
    "preset_primal",
    "PRESET_NAMES",
    "hermite_dual",
    "Moments",
    "moments",
    "KernelCase",
    "Phase",
    "TaxonomyVerdict",
    "classify_taxonomy",
    "FixedPoint",
    "FixedPointReport",
    "fixed_points",
    # depth
    "iterate_dual",
    "ntk_recursion",
    "ntk_closed_form",
    "DepthTrace",
    "normalized_trace",
    "psi_infinity",
    "psi_trace_estimate",
    "PoleFit",
    "estimate_pole_order",
    "DEFAULT_EPS_GRID",
    "piecewise_linear_iterate",
    "piecewise_linear_limit",
    "f_alpha_iterate",
    "f_alpha_sandwich",
    # classifiers
    "LabeledDataset",
    "KernelHandle",
    "deep_ntk_kernel",
    "hilbert_kernel",
    "smoother_scores",
    "kernel_smoother_predict",
    "one_nn_predict",
    "majority_vote_predict",
    "hilbert_smoother_predict",
    "kernel_machine_predict",
    "structured_inverse",
    "gram_matrix",
    # sphere data
    "HALF_PI",
    "stream",
    "sample_uniform",
    "AngularBox",
    "MixtureSpec",
    "sample_mixture",
    "BayesOracle",
    "bayes_oracle",
    "angles_to_point",
    "point_to_angles",
    "save_dataset",
    "load_dataset",
    # config and experiments
    "ActivationRef",
    "ExperimentConfig",
    "TaxonomyParams",
    "DynamicsParams",
    "PolefitParams",
    "Fig2Params",
    "CompareParams",
    "parse_config",
    "default_config",
    "ExperimentReport",
    "run",
    "run_taxonomy",
    "run_dynamics",
    "run_polefit",
    "run_fig2",
    "run_compare",
]
