"""Error types shared across the package."""


class ConfigError(ValueError):
    """A configuration was rejected before any computation started."""


class NonPositiveError(ConfigError):
    """A quantity violated its positivity (or nonnegativity) bound."""


class NonIntegerMultipleError(ConfigError):
    """Deterministic arrivals require block energies to be integer multiples
    of the per-block harvest."""


class NoProgressError(ConfigError):
    """The requested run can never record an update (certain outage or no
    harvested energy)."""


class GridOverflowError(RuntimeError):
    """A discretization request exceeded the configured grid point budget."""


class EmptySamplesError(ValueError):
    """An empirical estimate was requested from zero samples."""
