"""Exception types shared across osilab."""


class OsilabError(Exception):
    """Base class for all osilab errors."""


class BadParams(OsilabError, ValueError):
    """A parameter lies outside its admissible range."""


class BadTau(BadParams):
    pass


class BadRank(BadParams):
    pass


class BadExponent(BadParams):
    pass


class RankDeficient(OsilabError, ArithmeticError):
    pass


class NotOrthonormal(OsilabError, ValueError):
    pass


class NoConvergence(OsilabError, ArithmeticError):
    """An iterative routine hit its iteration cap.

    ``best`` carries the best iterate found so far, when there is one.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class TooFewTrials(OsilabError, ValueError):
    pass


class UnknownPreset(OsilabError, KeyError):
    pass
