"""Portfolio-level physical climate risk engine.

Clusters firms by country climate vulnerability and sector asset intensity,
translates cluster shock factors into stressed equity targets through a
dividend-growth haircut, calibrates downward-jump parameters per cluster,
and compares baseline against climate-stressed Monte Carlo loss
distributions (VaR / ES deltas and add-ons).
"""

from .errors import ClimriskError

__version__ = "0.1.0"

__all__ = ["ClimriskError", "__version__"]
