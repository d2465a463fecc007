"""Exception hierarchy shared by all modules.

Validation failures (bad inputs, violated preconditions) and budget
overruns are kept apart so the CLI can map them to distinct exit codes.
"""


class AperiodicError(Exception):
    """Base class for all library errors."""


class ValidationError(AperiodicError):
    """Input or precondition violation (CLI exit code 2)."""


class CapacityExceeded(AperiodicError):
    """A point/letter/grid budget would be exceeded (CLI exit code 3)."""


# -- substitution ------------------------------------------------------------

class NotPrimitive(ValidationError):
    """Incidence matrix has no entrywise-positive power."""


# -- cut and project ---------------------------------------------------------

class NotHyperbolicSelection(ValidationError):
    """Selected eigenvalues are not all of modulus > 1."""


class IrrationalityFailed(ValidationError):
    """An integer vector was found numerically inside E_par or E_perp."""


class NonDiagonalizableParallel(ValidationError):
    """Restriction of the lattice matrix to E_par is too ill-conditioned."""


class SingularShift(ValidationError):
    """Shift places a lattice point on the window boundary."""


class WrongCodimension(ValidationError):
    """Operation requires a codimension-one scheme (n = d + 1)."""


# -- spectral ----------------------------------------------------------------

class IllConditioned(ValidationError):
    """Eigenvalue residuals cannot be certified to tolerance."""


class LeadingEigenvalueMismatch(ValidationError):
    """Leading cohomology eigenvalue does not match det(A)."""


# -- deviation / diffraction -------------------------------------------------

class RegionExceedsExtent(ValidationError):
    """Requested averaging region sticks out of the generated sample."""


class InsufficientNonzeroDeviations(ValidationError):
    """Fewer than 4 usable (positive) deviation samples for a fit."""


class BinEmpty(ValidationError):
    """Requested difference vector is not realized in the point set."""


class GridNotClosed(ValidationError):
    """Wave-vector grid is not closed under the requested rotation."""


# -- cli ---------------------------------------------------------------------

class UnknownSystem(ValidationError):
    """Catalog lookup failed."""


class SpectrumOnlySystem(ValidationError):
    """System carries spectrum data only and cannot generate points."""
