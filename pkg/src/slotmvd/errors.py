"""Error taxonomy shared by every module.

ContractViolation maps to CLI exit code 2, NumericFailure to exit code 3.
"""


class ContractViolation(ValueError):
    """An operation was called with inputs that violate its precondition."""


class NumericFailure(ArithmeticError):
    """A computation produced NaN/Inf or otherwise lost numeric validity."""


def require(condition: bool, message: str) -> None:
    if not condition:
        raise ContractViolation(message)
