"""Exception hierarchy shared by every module."""


class GeomfluxError(Exception):
    """Base class; ``code`` is the machine-readable name written to reports."""

    code = "GeomfluxError"

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context

    def as_dict(self):
        out = {"code": self.code, "message": str(self)}
        out.update({k: _plain(v) for k, v in self.context.items()})
        return out


def _plain(v):
    try:
        import numpy as np

        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, np.generic):
            return v.item()
    except ImportError:  # pragma: no cover
        pass
    return v


class NonHermitianInput(GeomfluxError, ValueError):
    code = "NonHermitianInput"


class DimensionMismatch(GeomfluxError, ValueError):
    code = "DimensionMismatch"


class DegenerateSpectrum(GeomfluxError, ArithmeticError):
    code = "DegenerateSpectrum"


class ReferenceOverlapVanishing(GeomfluxError, ArithmeticError):
    code = "ReferenceOverlapVanishing"


class LevelTrackingLost(GeomfluxError, ArithmeticError):
    code = "LevelTrackingLost"


class PathNotClosed(GeomfluxError, ValueError):
    code = "PathNotClosed"


class EnergyBelowMinimum(GeomfluxError, ValueError):
    code = "EnergyBelowMinimum"


class SamplingFailure(GeomfluxError, RuntimeError):
    code = "SamplingFailure"


class StepSizeTooLarge(GeomfluxError, RuntimeError):
    code = "StepSizeTooLarge"


class NotIntegrable(GeomfluxError, ValueError):
    code = "NotIntegrable"


class SchemaError(GeomfluxError, ValueError):
    """Aggregated configuration errors; ``errors`` is a list of (path, reason)."""

    code = "SchemaError"

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path or '<root>'}: {reason}" for path, reason in self.errors]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))

    def as_dict(self):
        return {
            "code": self.code,
            "errors": [{"path": p, "reason": r} for p, r in self.errors],
        }
