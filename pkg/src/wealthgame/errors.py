"""Exception types shared across the package."""


class WealthGameError(Exception):
    """Base class for all package errors."""


class ConfigError(WealthGameError):
    """Invalid scenario configuration; carries one (path, reason) entry per violation."""

    def __init__(self, entries):
        self.entries = list(entries)
        lines = "; ".join(f"{p}: {r}" for p, r in self.entries)
        super().__init__(lines or "invalid configuration")


class DegenerateDenominator(WealthGameError):
    """Riccati closed form evaluated where its denominator vanishes."""


class WrongModel(WealthGameError):
    """Operation requires the linear-Gaussian market but got a nonlinear one."""


class EmptySupport(WealthGameError):
    """Prior interval does not intersect the state support."""


class ShapeMismatch(WealthGameError):
    """Array input has the wrong shape for the network."""


class NonFiniteLoss(WealthGameError):
    """Loss or gradient became NaN/inf."""


class Divergence(WealthGameError):
    """Training loss became non-finite."""


class ZeroVariance(WealthGameError):
    """Performance statistics requested on a constant increment series."""


class NoContraction(WealthGameError):
    """Nash fixed point failed to converge and the linear system is singular."""


class NumericError(WealthGameError):
    """Generic numeric failure surfaced to the CLI (exit code 3)."""
