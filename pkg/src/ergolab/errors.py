"""Exception hierarchy shared by all ergolab modules."""


class ErgolabError(Exception):
    """Base class for computation failures (CLI exit code 1)."""


class ContractViolation(ErgolabError, ValueError):
    """An argument does not satisfy an operation's precondition."""


class OrbitExhausted(ErgolabError):
    """A shift word is too short to be shifted further."""


class DomainEscape(ErgolabError):
    def __init__(self, step, point=None):
        self.step = step
        self.point = point
        super().__init__(f"orbit left the domain at step {step}" + (f" (point {point})" if point is not None else ""))


class NotDifferentiable(ErgolabError):
    """Derivative data requested for a non-smooth (symbolic) system."""


class PreballNotHomeomorphic(ErgolabError):
    """A pull-back crosses the critical fold."""


class RegionCollision(ErgolabError):
    """Bump region B intersects its preimage V."""


class CriticalContact(ErgolabError):
    """Preimage V of the bump region touches the critical set."""


class ConfigError(ErgolabError):
    """Malformed experiment configuration (CLI exit code 2)."""
