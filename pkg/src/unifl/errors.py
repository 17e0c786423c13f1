"""Exception hierarchy shared by all unifl modules."""


class UniflError(ValueError):
    """Base class for every error raised by unifl."""


class DuplicateEdge(UniflError):
    def __init__(self, u, v):
        super().__init__(f"duplicate edge ({u}, {v})")
        self.u, self.v = u, v


class NegativeDistance(UniflError):
    def __init__(self, u, v, w):
        super().__init__(f"negative distance {w!r} on edge ({u}, {v})")
        self.u, self.v, self.w = u, v, w


class VertexOutOfRange(UniflError):
    def __init__(self, vertex, n):
        super().__init__(f"vertex {vertex} out of range for n={n}")
        self.vertex, self.n = vertex, n


class ParseError(UniflError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvariantViolation(UniflError):
    pass


class NonPositiveC(UniflError):
    def __init__(self, c):
        super().__init__(f"c must be positive, got {c!r}")
        self.c = c


class ProbOutOfRange(UniflError):
    pass


class InfeasibleSolution(UniflError):
    def __init__(self, vertex, reason=""):
        msg = f"vertex {vertex} is neither open nor validly assigned"
        super().__init__(f"{msg}: {reason}" if reason else msg)
        self.vertex = vertex


class TooLarge(UniflError):
    def __init__(self, n, limit):
        super().__init__(f"n={n} exceeds exhaustive limit {limit}")
        self.n, self.limit = n, limit


class NonFiniteActivation(UniflError):
    pass


class TapeMismatch(UniflError):
    pass


class DivergedLoss(UniflError):
    pass
