class IsrException(Exception):
    pass


class DomainException(IsrException):
    def __init__(self, model_name: str, x: float, y: float, *args, **kwargs):
        msg = f"The point (x={x}, y={y}) is outside the domain of the '{model_name}' model."
        super().__init__(msg, *args, **kwargs)


class MaturityException(IsrException):
    def __init__(self, t: float, T: float, *args, **kwargs):
        msg = f"The maturity T={T} must be strictly after the current time t={t}."
        super().__init__(msg, *args, **kwargs)


class ParameterException(IsrException):
    pass


class UnsupportedOrderException(IsrException):
    pass


class TimeOrderException(IsrException):
    def __init__(self, t: float, t1: float, *args, **kwargs):
        msg = f"Operators need t <= t1 but got t={t} and t1={t1}."
        super().__init__(msg, *args, **kwargs)


class OperatorDegreeException(IsrException):
    pass


class ValueDominanceException(IsrException):
    def __init__(self, radicand: float, *args, **kwargs):
        msg = (
            f"The implied Sharpe ratio radicand is negative ({radicand}). "
            "The option position value dominates the Merton value."
        )
        super().__init__(msg, *args, **kwargs)


class DegenerateAnchorException(IsrException):
    pass


class DegenerateMarketException(IsrException):
    pass


class CovarianceException(IsrException):
    pass


class OracleInstabilityException(IsrException):
    pass


class NonFinitePathsException(IsrException):
    def __init__(self, count: int, total: int, *args, **kwargs):
        msg = f"{count} of {total} Monte-Carlo paths are non-finite."
        super().__init__(msg, *args, **kwargs)
