"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2); failures of a
numerical procedure derive from :class:`NumericalError` (exit code 3).
"""


class FreeShearError(Exception):
    """Base class for all package errors."""


class InputError(FreeShearError, ValueError):
    """Invalid user input: malformed profile file, bad parameter, ..."""


class ProfileError(InputError):
    pass


class NumericalError(FreeShearError, ArithmeticError):
    """A numerical procedure could not deliver a certified answer."""


class NonSimpleRoot(NumericalError):
    pass


class UnboundedK(NumericalError):
    pass


class CriticalLayer(NumericalError):
    pass


class DegenerateBoundary(NumericalError):
    pass


class BoundaryZero(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, msg, modes=()):
        super().__init__(msg)
        self.modes = list(modes)


class NoRoot(NumericalError):
    pass


class DegenerateFlux(NumericalError):
    pass


class Stagnation(InputError):
    pass


class NotFplus(NumericalError):
    pass
