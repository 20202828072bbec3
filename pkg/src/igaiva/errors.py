"""Error types shared across the package."""


class DataError(ValueError):
    """Invalid input data: parse failures, broken invariants, bad arguments."""


class GeneratorError(RuntimeError):
    """Synthetic-data generator failure (network, protocol, or exhausted retries)."""
