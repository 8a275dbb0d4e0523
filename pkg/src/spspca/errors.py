"""Exception hierarchy.

Input problems derive from :class:`InputError`, numerical breakdowns from
:class:`NumericalError`; the CLI maps the two families to exit codes 1 and 2.
"""


class SpspcaError(Exception):
    pass


class InputError(SpspcaError, ValueError):
    pass


class NumericalError(SpspcaError, ArithmeticError):
    pass


# data / linear algebra
class NonFinite(InputError):
    pass


class TooFewRows(InputError):
    pass


class NotCentered(InputError):
    pass


class NotSymmetric(InputError):
    pass


class TooIndefinite(InputError):
    pass


class DecompositionFailure(NumericalError):
    pass


# penalty
class EmptyDomain(InputError):
    pass


class ThetaOutOfDomain(InputError):
    pass


class NonPositiveEntry(NumericalError):
    pass


class NonPositiveK(InputError):
    pass


class NegativeLambda(InputError):
    pass


# solver / fitting
class DimensionMismatch(InputError):
    pass


class SingularSystem(NumericalError):
    pass


class KTooLarge(InputError):
    pass


class InvalidConfig(InputError):
    pass


class InvalidSpec(InputError):
    pass


# io
class RaggedRows(InputError):
    pass


class AllColumnsDropped(InputError):
    pass


class NonNumericColumn(InputError):
    pass


class NonPositivePrice(InputError):
    def __init__(self, row, col):
        super().__init__(f"non-positive price at row {row}, column {col}")
        self.row = row
        self.col = col


class InputFileNotFound(InputError, FileNotFoundError):
    pass


class ConstantColumn(InputError):
    pass
