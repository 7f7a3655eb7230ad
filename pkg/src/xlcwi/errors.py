"""Exception hierarchy shared by all pipeline stages.

The CLI maps these onto exit codes: ParseError/ValidationError -> 1,
MissingResourceError -> 2, NumericalError -> 3.
"""


class CwiError(Exception):
    pass


class ParseError(CwiError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ValidationError(CwiError):
    pass


class MissingResourceError(CwiError):
    pass


class NumericalError(CwiError):
    pass
