"""Exception hierarchy shared across the package.

``ValidationError`` covers bad inputs and configuration (CLI exit code 1);
``NumericalError`` covers solver and factorization failures (exit code 2).
"""


class ValidationError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass
