"""Exception hierarchy shared by all modules."""


class ImcfError(Exception):
    """Base class for every error raised by the package."""


class KinkPoint(ImcfError):
    """Derivative requested at a non-differentiability point without a side."""


class DomainMismatch(ImcfError):
    pass


class EmptyRange(ImcfError):
    pass


class HullEscapes(ImcfError):
    """The forward infimum from the initial radius is only attained at r_max."""


class FlowExited(ImcfError):
    """The requested level lies beyond the outer boundary of the grid."""


class GridMismatch(ImcfError):
    pass


class CompetitorModifiesOutsideK(ImcfError):
    pass


class NoConvergence(ImcfError):
    pass


class NonMeanConvex(ImcfError):
    pass


class CertificationFailed(ImcfError):
    pass


class UncertifiedBubble(ImcfError):
    pass


class IntegralDiverges(ImcfError):
    pass


class BadParams(ImcfError):
    pass


class Inconclusive(ImcfError):
    """A hypothesis gate failed; the experiment has no verdict."""

    def __init__(self, member, reason):
        super().__init__(f"{member}: {reason}")
        self.member = member
        self.reason = reason
