"""Exception types shared across the pipeline.

Each class maps onto one CLI exit code (see ``switchpred.cli``).
"""


class SwitchPredError(Exception):
    exit_code = 1


class FormatError(SwitchPredError):
    """Malformed or version-mismatched file contents."""

    exit_code = 3


class ParseError(FormatError):
    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class AssemblyError(FormatError):
    def __init__(self, session_id, message):
        self.session_id = session_id
        super().__init__(f"session {session_id}: {message}")


class ConfigError(SwitchPredError):
    exit_code = 4


class NumericError(SwitchPredError, ArithmeticError):
    exit_code = 5


class InvalidInputError(SwitchPredError, ValueError):
    exit_code = 3
