"""Exception hierarchy shared by the solver, generators, parsers and model."""


class JacksonMPNNError(Exception):
    """Base class for all package errors."""


class InvalidNetwork(JacksonMPNNError, ValueError):
    pass


class SingularSystem(JacksonMPNNError):
    """(I - R^T) is singular to working precision: a closed routing loop with no exit."""


class NoConvergence(JacksonMPNNError):
    pass


class UnstableNode(JacksonMPNNError):
    def __init__(self, node, intensity=None, service_rate=None):
        self.node = node
        msg = f"node {node} is unstable"
        if intensity is not None:
            msg += f" (intensity {intensity!r} >= service rate {service_rate!r})"
        super().__init__(msg)


class DegenerateGraph(JacksonMPNNError):
    pass


class GenerationFailed(JacksonMPNNError):
    pass


class ParseError(JacksonMPNNError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownNode(ParseError):
    def __init__(self, name, line=None):
        self.name = name
        super().__init__(f"unknown node {name!r}", line)


class ShapeMismatch(JacksonMPNNError, ValueError):
    pass


class BatchTooSmall(JacksonMPNNError, ValueError):
    pass


class NonFiniteLoss(JacksonMPNNError, FloatingPointError):
    def __init__(self, step, batch_seed, value):
        self.step = step
        self.batch_seed = batch_seed
        self.value = value
        super().__init__(f"non-finite loss {value!r} at step {step} (batch seed {batch_seed})")


class DegenerateLabels(JacksonMPNNError, ValueError):
    pass


class ZeroVariance(JacksonMPNNError, ValueError):
    pass


class DatasetError(JacksonMPNNError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LabelMismatch(DatasetError):
    pass


class CheckpointError(JacksonMPNNError, ValueError):
    pass
