"""Joint COVID-19 and influenza nowcasting from search data.

National daily ARGO-Joint models, state-level ARGOX-Idv shrinkage
predictors, a winner-takes-all ensemble and a rolling backtest harness.
"""

__version__ = "0.1.0"

from .bundle import DatasetBundle, SchemaError, load_bundle, write_bundle
from .config import RunConfig
from .kernels import BACKEND
from .synthetic import SyntheticScenario, generate_synthetic

__all__ = [
    "BACKEND",
    "DatasetBundle",
    "RunConfig",
    "SchemaError",
    "SyntheticScenario",
    "__version__",
    "generate_synthetic",
    "load_bundle",
    "write_bundle",
]
