"""Exception hierarchy raised by the tn package"""


class PepscoError(Exception):
    """Base class of every error raised by this package"""


class TensorShapeError(PepscoError):
    """Index out of range, extent mismatch or malformed index partition"""


class NonFiniteError(PepscoError):
    """A NaN or infinite value entered or left a computation"""


class SymmetryViolationError(PepscoError):
    """A matrix required to be symmetric or Hermitian is not"""


class MemoryBudgetError(PepscoError):
    """An exact contraction or operator would exceed the configured size budget"""


class BasisError(PepscoError):
    """Invalid support geometry, operator basis or embedding"""


class UnsupportedMomentumError(PepscoError):
    """Momentum incommensurate with the lattice or outside the real-phase set"""


class CtmrgDivergenceError(PepscoError):
    """Non-finite numbers appeared during a CTMRG sweep"""

    def __init__(self, message: str, sweep: int):
        super().__init__(f"{message} (sweep {sweep})")
        self.sweep: int = sweep
        """Index of the offending sweep"""


class ConvergenceError(PepscoError):
    """An iterative solver or CTMRG environment failed to converge"""

    def __init__(self, message: str, residual: float = float('nan')):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual: float = residual
        """Residual or drift reached when the iteration stopped"""


class ExtractionError(PepscoError):
    """Structure factor assembly or kernel interpretation failed"""


class ConfigError(PepscoError):
    """Invalid run configuration"""
