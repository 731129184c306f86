"""Exception types shared across the package.

Errors are grouped by what went wrong rather than where: shape problems,
non-finite numbers, gradient/parameter layout mismatches, malformed batch
plans, unparseable files, and bad run configs. The CLI maps ConfigError and
its friends to exit code 2 and NumericError to exit code 3.
"""


class DimensionError(ValueError):
    """Array has the wrong shape or rank for the requested operation."""


class NumericError(ArithmeticError):
    """A NaN or infinity showed up where only finite values are allowed."""


class LayoutError(ValueError):
    """Gradient or optimizer state belongs to a different parameter layout."""


class PlanError(ValueError):
    """Batch plan violates its contract (bad ids, broken partition, ...)."""


class FormatError(ValueError):
    """On-disk data is not in the expected format."""


class ConfigError(ValueError):
    """Experiment config failed validation.

    ``problems`` lists one human-readable message per offending key.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
