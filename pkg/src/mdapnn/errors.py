"""Error categories shared across the package.

Every raised error carries enough text to act on without a debugger:
which argument or config key, what was expected, what was seen.
"""


class ContractViolation(ValueError):
    """An argument broke a documented precondition."""


class ConfigurationError(ValueError):
    """A config file or override set is invalid.

    `violations` lists every problem found, not just the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NumericalError(ArithmeticError):
    """A computation produced non-finite values or failed to converge."""
