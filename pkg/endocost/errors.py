import math
from typing import Any, Dict, Optional

import numpy as np


class EndocostError(Exception):
    """Base class for every failure raised by the simulator.

    Extra constructor arguments of subclasses must have defaults; worker
    processes hand exceptions back pickled.
    """

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = context


class InvalidSizeError(EndocostError):
    """Module count outside the range a generator supports"""


class InvalidWeightError(EndocostError):
    """Interaction weight with the wrong sign or magnitude"""


class ConstructionFailedError(EndocostError):
    """Random graph resampling ran out of attempts"""


class DimensionMismatchError(EndocostError):
    """Vectors or matrices whose shapes do not agree"""


class SimplexViolationError(EndocostError):
    """Allocation too far off the simplex to be renormalized"""


class NonFiniteRewardError(EndocostError):
    """A reward fed to the multiplicative update was nan or inf"""


class HorizonRangeError(EndocostError):
    """Round index outside 1..T"""


class ValueRangeError(EndocostError):
    """Value vector entry outside [0, 1]"""


class SolverConvergenceError(EndocostError):
    """Projected gradient ascent hit its iteration cap"""

    def __init__(self, message: str, last_iterate: Optional[np.ndarray] = None,
                 gradient_norm: float = math.nan):
        super().__init__(message, gradient_norm=gradient_norm)
        self.last_iterate = last_iterate
        self.gradient_norm = gradient_norm


class IncompleteTraceError(EndocostError):
    """Run trace is missing rounds"""


class NonPositiveMarginalError(EndocostError):
    """Sum of marginal contributions is not positive, so shares are undefined"""

    def __init__(self, message: str, round_index: int = 0):
        super().__init__(message, round_index=round_index)
        self.round_index = round_index


class SlopeFitError(EndocostError):
    """Power-law fit input is unusable"""


class ConfigError(EndocostError):
    """Experiment config could not be read or validated"""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message, field=field)
        self.field = field


class AssumptionViolationError(EndocostError):
    """Graph or environment breaks the bounded-interaction assumptions"""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report
