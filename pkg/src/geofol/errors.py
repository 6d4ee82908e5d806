"""Exception hierarchy shared by every module."""


class GeofolError(Exception):
    """Base class for all toolkit errors."""


class DomainError(GeofolError, ValueError):
    """Point outside a chart box (or too close to its boundary)."""


class UnsupportedOrderError(GeofolError, ValueError):
    pass


class InputError(GeofolError, ValueError):
    """Malformed or inconsistent arguments."""


class ParametrizationError(GeofolError, ValueError):
    """Curve is not parametrized by arclength."""


class DegenerateFrenetError(GeofolError):
    def __init__(self, index, pivot):
        self.index = index
        self.pivot = pivot
        super().__init__(
            f"Frenet frame degenerates at index {index} (pivot {pivot:.3e})"
        )


class ImmersionDegeneracyError(GeofolError):
    def __init__(self, sigma_min, point=None):
        self.sigma_min = sigma_min
        self.point = point
        super().__init__(
            f"Jacobian is rank deficient at {point} "
            f"(smallest singular value {sigma_min:.3e})"
        )


class OmegaViolationError(GeofolError):
    """Fiber point leaves the admissible set of a partial tube."""

    def __init__(self, p, s, margin):
        self.p = p
        self.s = s
        self.margin = margin
        super().__init__(
            f"fiber point p={p} is not admissible at s={s:.6g} "
            f"(margin {margin:.3e})"
        )


class ChartRestrictionError(GeofolError):
    def __init__(self, bad_samples):
        self.bad_samples = list(bad_samples)
        shown = ", ".join(str(tuple(round(v, 6) for v in b)) for b in self.bad_samples[:5])
        super().__init__(
            f"immersion degenerates at {len(self.bad_samples)} samples: {shown}"
        )


class NotCaseIIIError(GeofolError):
    def __init__(self, location, mu, rho):
        self.location = location
        super().__init__(
            f"point {location} is not an exclusive case-(iii) point "
            f"(mu={mu:.3e}, rho={rho:.3e})"
        )


class ChartExhaustedError(GeofolError):
    pass


class TubeWidthError(GeofolError):
    pass


class RankError(GeofolError):
    pass


class ConfigError(GeofolError, ValueError):
    pass
