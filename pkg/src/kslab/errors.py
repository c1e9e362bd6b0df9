"""Exception hierarchy shared by all kslab modules."""


class KSLabError(Exception):
    """Base class for every error raised by kslab."""


class StructuralError(KSLabError):
    """Fields live on mismatched grids or carry the wrong shape."""


class ParameterError(KSLabError, ValueError):
    """A numerical parameter lies outside its admissible range."""


class ContractViolation(KSLabError):
    """An operation was called on input that breaks its precondition."""


class CFLViolation(KSLabError):
    """The requested time step exceeds the explicit stability bound."""

    def __init__(self, dt, suggested_dt):
        self.dt = float(dt)
        self.suggested_dt = float(suggested_dt)
        super().__init__(
            f"time step {self.dt:.6g} exceeds the CFL bound; "
            f"suggested dt <= {self.suggested_dt:.6g}"
        )


class NumericalAbort(KSLabError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, step, message="non-finite values detected"):
        self.step = int(step)
        super().__init__(f"{message} at step {self.step}")


class ConfigError(KSLabError):
    """Invalid experiment configuration; names the offending key."""

    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")
