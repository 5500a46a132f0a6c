"""Exception types shared across the package."""


class MarketError(ValueError):
    """Malformed market, claim, or risk input."""


class ArbitrageError(RuntimeError):
    """The market admits arbitrage; no equivalent martingale measure exists."""


class SolverError(RuntimeError):
    """Numerical failure inside an optimizer (distinct from model infeasibility)."""


class CertificationError(RuntimeError):
    """A computed certificate failed its own optimality assertions."""


class CalibrationError(CertificationError):
    """Equality-set calibration of a 0-1 test is infeasible at the given tolerance."""
