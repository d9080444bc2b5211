"""Exception hierarchy.

Every error carries a ``category`` string; the CLI maps categories to exit
codes and never shows a traceback for these.
"""


class PeriodError(Exception):
    category = "error"


class FormatError(PeriodError):
    """Malformed or out-of-range event file content."""

    category = "format"


class ConfigError(PeriodError, ValueError):
    """Invalid parameter; the message starts with the offending field name."""

    category = "config"


class InsufficientPeaksError(PeriodError):
    """Fewer than two correlation peaks, so no period can be measured."""

    category = "insufficient_peaks"
