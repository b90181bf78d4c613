"""Exception types shared across the package."""


class DlawError(Exception):
    """Base class for all package errors."""


class TieBreak(DlawError):
    """Two distinct integer vectors minimise the residual norm for the same q."""

    def __init__(self, q, candidates):
        self.q = tuple(q)
        self.candidates = [tuple(c) for c in candidates]
        super().__init__(f"residual minimiser not unique for q={self.q}: {self.candidates}")


class RationalDegeneracy(DlawError):
    """A residual p + theta q vanished exactly."""

    def __init__(self, p, q):
        self.p = tuple(p)
        self.q = tuple(q)
        super().__init__(f"exact zero residual at p={self.p}, q={self.q}")


class HorizonExceeded(DlawError):
    """Requested horizon lies beyond what the precision tag of theta certifies."""

    def __init__(self, requested, certified):
        self.requested = requested
        self.certified = certified
        super().__init__(f"horizon {requested} exceeds certified horizon {certified:.4g}")


class EnumerationBlowup(DlawError):
    """Lattice point enumeration would visit more nodes than the budget allows."""


class DirectionUndefined(DlawError):
    """A vector of S_Lambda has a zero block, so its direction is undefined."""


class IrrationalPower(DlawError):
    """An exact matrix was requested but involves an irrational power of rho."""


class InsufficientData(DlawError):
    """Too few samples (or too short a series) for the requested estimator."""


class ConfigError(DlawError):
    """Invalid run configuration; carries the offending line when known."""

    def __init__(self, message, line=None):
        self.line = line
        self.message = message
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class IOFailure(DlawError):
    """Writing or verifying a run directory failed."""
