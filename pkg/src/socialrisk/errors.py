"""Exception types shared across the package.

The CLI maps ConfigError to exit code 2 and every other SocialriskError
(stage failures, contract violations) to exit code 3.
"""


class SocialriskError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SocialriskError):
    """Invalid, unknown, or ill-typed configuration input."""


class StageError(SocialriskError):
    """A pipeline stage failed or was fed incompatible artifacts."""


class SeparationError(SocialriskError):
    """Maximum-likelihood logistic fit diverged (separated data)."""


class RankDeficiencyError(SocialriskError):
    """Design matrix is rank deficient; carries the offending columns."""

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        if message is None:
            message = "design matrix is rank deficient; collinear columns: %s" % (
                ", ".join(str(c) for c in self.columns)
            )
        super().__init__(message)
