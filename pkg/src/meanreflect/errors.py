"""Exception types raised by the engine."""


class MeanReflectError(Exception):
    """Base class for all engine errors."""


class ConfigError(MeanReflectError):
    """Base class for configuration problems (maps to CLI exit code 1)."""


class ParseError(ConfigError):
    """A config document could not be read or decoded."""


class ValidationError(ConfigError):
    """A config document decoded fine but violates the schema or invariants."""


class NonFiniteBracket(MeanReflectError):
    """The constraint mean at zero is not finite, so no root bracket exists."""


class NoConvergence(MeanReflectError):
    """Root finding exhausted its iteration budget; supplied (m, M) are
    likely inconsistent with the constraint function."""


class SizeMismatch(MeanReflectError):
    """Two empirical measures with different atom counts were compared."""


class NonFiniteState(MeanReflectError):
    """A particle became non-finite during stepping (blow-up or bad
    coefficients)."""


class NoiseMismatch(MeanReflectError):
    """A noise record does not match the grid or particle count it is being
    replayed against."""


class DerivativesMissing(MeanReflectError):
    """The constraint lacks the first or second derivative required here."""


class RootBracketFailure(MeanReflectError):
    """No sign change was found while expanding a root bracket."""


class DegenerateAbscissae(MeanReflectError):
    """A regression was requested on fewer than two distinct abscissae."""
