"""Exception types shared across the package.

Each class carries the CLI exit code it maps to so the command layer can
translate failures without a lookup table.
"""


class ScuError(Exception):
    exit_code = 1


class ConfigurationError(ScuError, ValueError):
    exit_code = 2


class DimensionError(ScuError, ValueError):
    exit_code = 3


class BoundsError(ScuError, ValueError):
    exit_code = 3


class ParseError(ScuError, ValueError):
    exit_code = 3

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class LoadError(ScuError, FileNotFoundError):
    exit_code = 3


class NumericalError(ScuError, ArithmeticError):
    exit_code = 4


class TrainingDivergenceError(NumericalError):
    def __init__(self, step, component, value):
        self.step = step
        self.component = component
        self.value = value
        super().__init__(f"training diverged at step {step}: {component}={value!r}")
