"""U-statistics of dependent sequences: kernels, process models, pair-sum
engines, Hodges-Lehmann selection and LIL / rate diagnostics."""

__version__ = "0.1.0"

from .errors import (ConfigError, DomainError, ModeError, SizeError, SymmetryError,
                     UdepError, UnsupportedCombinationError)
from .kernels import (HoeffdingParts, Kernel, analytic_parts, builtin_kernel,
                      degeneracy_defect, empirical_parts, eval_kernel, kernel_spectrum,
                      make_kernel)
from .processes import ProcessModel, SamplePath, ar1, doubling, generate_path, iid, ma
from .ustat import (PairwiseMeanQuery, Trajectory, empirical_u_df, empirical_u_quantile,
                    hodges_lehmann, prefix_trajectory, u_statistic)

__all__ = [
    "ConfigError", "DomainError", "HoeffdingParts", "Kernel", "ModeError",
    "PairwiseMeanQuery", "ProcessModel", "SamplePath", "SizeError", "SymmetryError",
    "Trajectory", "UdepError", "UnsupportedCombinationError", "analytic_parts", "ar1",
    "builtin_kernel", "degeneracy_defect", "doubling", "empirical_parts",
    "empirical_u_df", "empirical_u_quantile", "eval_kernel", "generate_path",
    "hodges_lehmann", "iid", "kernel_spectrum", "ma", "make_kernel", "prefix_trajectory",
    "u_statistic",
]
