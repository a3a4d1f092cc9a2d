"""Exception types shared across the package."""


class MixrouteError(Exception):
    """Base class for package errors."""


class ShapeError(MixrouteError):
    """Operands have incompatible shapes."""


class NumericError(MixrouteError):
    """Non-finite values or guarded numeric domain violations."""


class ContractError(MixrouteError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class ConfigError(MixrouteError):
    """Invalid training or model configuration."""


class TrainError(MixrouteError):
    """Training diverged or failed mid-run."""


class SynthesisError(MixrouteError):
    """Tabular synthesis could not be performed on the given source."""


class ComparisonError(MixrouteError):
    """Run comparison rejected due to inconsistent inputs."""
