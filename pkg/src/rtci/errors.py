class RtciError(Exception):
    pass


class ParseError(RtciError, ValueError):
    pass


class DimensionError(RtciError, ValueError):
    pass


class EstimationError(RtciError):
    pass


class SingularDesignError(EstimationError):
    pass


class UnderdeterminedError(EstimationError):
    pass


class TestUndefinedError(RtciError):
    """Covariance difference has no positive eigenvalues."""

    __test__ = False
    psd_violation = False
