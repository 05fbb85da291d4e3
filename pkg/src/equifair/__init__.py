"""Wasserstein-barycenter post-processing for demographic parity."""

from .calibration import (
    BASE_LABEL,
    MsaCalibrator,
    SensitiveFrame,
    SsaCalibrator,
    fit_msa,
    fit_ssa,
    load_calibrator,
    save_calibrator,
    transform_msa,
    transform_ssa,
)
from .distributions import (
    EmpiricalDistribution,
    GaussianSpec,
    cdf_eval,
    gaussian_barycenter,
    gaussian_mixture_variance,
    jitter,
    quantile_eval,
    wasserstein1_exact,
    wasserstein1_grid,
    wasserstein2_grid,
)
from .errors import (
    DegenerateInputError,
    EquifairError,
    NotFittedError,
    SchemaError,
    UnknownModalityError,
    ValidationError,
)
from .metrics import (
    DecompositionTable,
    UnfairnessReport,
    decompose,
    performance,
    price_of_fairness,
    unfairness,
    unfairness_ks,
)
from .plots import (
    PlotSpec,
    arrow_plot_data,
    density_plot_data,
    multiple_arrow_plot_data,
    render,
    waterfall_plot_data,
)
from .synthetic import make_synthetic

__version__ = "0.1.0"
