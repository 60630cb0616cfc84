"""Exception hierarchy shared by all modules."""


class QuantPassiveError(Exception):
    """Base class for errors raised by this package."""


class GraphError(QuantPassiveError, ValueError):
    """Invalid or disconnected communication graph."""


class DimensionError(QuantPassiveError, ValueError):
    """Inconsistent matrix or vector dimensions."""


class CertificateError(QuantPassiveError, ValueError):
    """A passivity certificate or gain matrix failed verification."""


class SimulationError(QuantPassiveError, RuntimeError):
    """The event-driven integrator could not continue."""


class EventBracketError(SimulationError):
    """Bisection could not bracket a quantizer-level crossing."""


class ZenoError(SimulationError):
    """Event rate exceeded the configured per-unit-time limit."""


class AnalysisError(QuantPassiveError, ValueError):
    """An analysis precondition failed (non-Hurwitz block, bad window...)."""


class RegulatorError(AnalysisError):
    """The regulator equations have no solution within tolerance."""


class ScenarioError(QuantPassiveError, ValueError):
    """A scenario file failed to parse or validate."""
