"""Mixed-numerology OFDM PAPR simulator and analytics."""
from .config import (
    ConfigError,
    NumerologySpec,
    SubbandSpec,
    SystemLayout,
    SystemSpec,
    derive_layout,
    load_spec,
    make_spec,
    validate_spec,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "NumerologySpec",
    "SubbandSpec",
    "SystemLayout",
    "SystemSpec",
    "derive_layout",
    "load_spec",
    "make_spec",
    "validate_spec",
    "__version__",
]
