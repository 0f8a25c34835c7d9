class CRNError(Exception):
    """Base class for errors raised by crnsearch."""


class IntegrationFailure(CRNError):
    """ODE integration could not proceed (step underflow, blow-up, non-finite state)."""

    def __init__(self, message: str, last_time: float):
        super().__init__(f"{message} (last valid t={last_time:g})")
        self.last_time = last_time


class SmoothingFailure(CRNError):
    """No pole-free rational fit was found for a signal."""

    def __init__(self, message: str, species: int | None = None, experiment: int | None = None):
        where = []
        if experiment is not None:
            where.append(f"experiment {experiment}")
        if species is not None:
            where.append(f"species x{species}")
        super().__init__(f"{message}" + (f" ({', '.join(where)})" if where else ""))
        self.species = species
        self.experiment = experiment


class ConfigError(CRNError):
    """Invalid run configuration or dataset."""
