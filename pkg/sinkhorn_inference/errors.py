"""Exceptions raised by sinkhorn_inference"""


class SinkhornInferenceError(Exception):
    """Base class for every error raised by the package"""


class InputError(SinkhornInferenceError, ValueError):
    """Invalid measures, shapes, directions or configuration"""


class ConvergenceError(SinkhornInferenceError):
    """A converged solution was required but not available"""


class IngestError(InputError):
    """Point CSV could not be turned into binned measures"""
