"""Error types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad knobs, malformed schedule inputs, broken files."""


class ModelError(ValueError):
    """Mathematical degeneracy: non-finite data, indefinite metrics, rank collapse."""
