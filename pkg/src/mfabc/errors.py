"""Exception hierarchy shared across the package."""


class MFABCError(Exception):
    """Base class for every error raised by mfabc."""


class ZeroTotalMass(MFABCError):
    """All importance weights vanished; the ensemble collapsed."""


class NoActiveParticles(MFABCError):
    """The proportion-active target rounds to zero particles."""


class ZeroProposalDensity(MFABCError):
    """An importance proposal has zero density at one of its own draws."""


class LengthMismatch(MFABCError):
    """An input series does not have the length the summary expects."""


class NonPositiveScale(MFABCError):
    """A scale parameter that must be positive was not."""


class NoAcceptedSamples(MFABCError):
    """No sample reaches a positive weight at any realised tolerance."""


class AssumptionViolated(MFABCError):
    """The excluded posterior mass reaches one, so the filtered target is empty."""


class IterationCap(MFABCError):
    """A sampler hit its iteration limit before reaching the target tolerance."""


class EmptyReference(MFABCError):
    """A divergence was requested against an empty reference."""


class ConfigError(MFABCError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class MetricUnavailable(MFABCError):
    """A comparison asked for a metric the runs did not record."""
