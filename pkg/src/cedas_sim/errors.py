"""Exception types shared across the simulator modules."""


class CedasSimError(Exception):
    """Base class for all errors raised by this package."""


# --- topology ---

class TooSmall(CedasSimError):
    """Graph construction needs at least two nodes."""


class NonSquareGrid(CedasSimError):
    """Grid graphs require a perfect-square node count."""


class DisconnectedCustom(CedasSimError):
    """Custom edge list does not form a connected graph."""


class GammaOutOfRange(CedasSimError):
    """Consensus parameter gamma must lie in (0, 1)."""


# --- compress ---

class DimensionMismatch(CedasSimError):
    """Vector dimension disagrees with the compressor descriptor."""


class ZeroBudget(CedasSimError):
    """Coordinate budget K must be at least 1."""


class ContractMismatch(CedasSimError):
    """Composition requires a biased first stage and an unbiased second stage."""


class ZeroInput(CedasSimError):
    """Contract estimation needs a nonzero input vector."""


class MalformedMessage(CedasSimError):
    """Encoded message payload is internally inconsistent."""


# --- objective ---

class BadParams(CedasSimError):
    """Problem synthesis parameters out of range."""


class NotStronglyConvex(CedasSimError):
    """Reference optimum requested for a problem without a unique minimizer."""


# --- algo ---

class ConfigInvalid(CedasSimError):
    """Run configuration failed validation."""


class MissingNeighborMessage(CedasSimError):
    """COMM update invoked without a message from some neighbor."""


class RequiresConstantStep(CedasSimError):
    """Algorithm is only defined for a constant stepsize schedule."""


class DivergenceDetected(CedasSimError):
    """Iterates left the finite range; carries the iteration index."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite iterate at iteration {iteration}")


class ShapeMismatch(CedasSimError):
    """Stacked arrays fed to the matrix recursion have inconsistent shapes."""


# --- metrics ---

class MissingOptimum(CedasSimError):
    """Residual metrics need a reference optimum for strongly convex problems."""


class LengthMismatch(CedasSimError):
    """Traces to aggregate must have equal length."""


# --- cli ---

class BudgetExceeded(CedasSimError):
    """Requested experiment scale exceeds the desk-scale budget."""
