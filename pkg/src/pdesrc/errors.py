"""Exception types shared across the package."""


class PdesrcError(Exception):
    """Base class for all library errors."""


class SingularPoint(PdesrcError):
    """Kernel evaluation requested exactly at a non-removable singularity."""


class QuadratureFailure(PdesrcError):
    """Adaptive quadrature did not reach the requested tolerance."""


class OutsideROC(PdesrcError):
    """Laplace transform evaluated outside its region of convergence."""


class PoleEvaluation(PdesrcError):
    """Laplace transform evaluated at a pole of the rational form."""


class Unsupported(PdesrcError):
    """Operation not defined for this field model."""


class AllZeroSignal(PdesrcError):
    """Noise calibration requested for an identically zero sample matrix."""


class NotUniform(PdesrcError):
    """Closed-form weights require a uniform sensor grid."""


class PoleAtFrequency(PdesrcError):
    """All requested measurement indices fall on excluded frequencies."""


class DegenerateGeometry(PdesrcError):
    """Scattered sensors do not span the ambient dimension."""


class ShapeError(PdesrcError):
    """Array shapes inconsistent with the declared network/tensor layout."""


class OrderTooLarge(PdesrcError):
    """Requested model order exceeds what the tensor geometry supports."""


class DefectiveEigensystem(PdesrcError):
    """Joint-diagonalisation eigenvector matrix too ill-conditioned."""


class IllConditionedVandermonde(PdesrcError):
    """Amplitude system is rank deficient (duplicate frequency tuples)."""


class ConnectivityFailure(PdesrcError):
    """Could not generate a connected geometric graph within the retry budget."""


class NoConvergence(PdesrcError):
    """Iterative scheme exceeded its adjustment budget without settling."""


class ConfigError(PdesrcError):
    """Experiment configuration is invalid; message names the offending field."""
