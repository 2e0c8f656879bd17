"""Exception types shared across the package."""


class TmsvlabError(Exception):
    """Base class for package-specific errors."""


class ConfigError(TmsvlabError, ValueError):
    """Invalid or incomplete experiment configuration."""


class HeraldImpossibleError(TmsvlabError, ValueError):
    """Conditioning on a zero-probability detector outcome.

    Also raised when normalizing a zero-norm state, which is the same
    situation: the heralding event the state was conditioned on cannot occur.
    """


class InsufficientDataError(TmsvlabError, ValueError):
    """Dataset too small or too poorly distributed for a fit/reconstruction."""
