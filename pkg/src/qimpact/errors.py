"""Exception hierarchy for the toolkit."""


class QImpactError(Exception):
    """Base class for every error raised by qimpact."""


class InvalidGrid(QImpactError):
    pass


class PacketClipped(QImpactError):
    pass


class WrongVariant(QImpactError):
    pass


class ResonantForcing(QImpactError):
    pass


class TooManyStates(QImpactError):
    pass


class NoConvergence(QImpactError):
    pass


class NormDrift(QImpactError):
    pass


class KrylovStall(QImpactError):
    pass


class BasisTruncation(QImpactError):
    pass


class TooFewSamples(QImpactError):
    pass


class TooShort(QImpactError):
    pass


class TooFewPeaks(QImpactError):
    pass


class DegenerateEmbedding(QImpactError):
    pass


class NonPositiveData(QImpactError):
    pass


class IndexOutOfBasis(QImpactError):
    pass


class ThermalTailUncaptured(QImpactError):
    pass


class StepTooLarge(QImpactError):
    pass


class MomentBlowup(QImpactError):
    pass


class TooFewCrossings(QImpactError):
    pass


class StuckAtWall(QImpactError):
    pass


class ConfigInvalid(QImpactError):
    pass


class UnknownPreset(QImpactError):
    pass
