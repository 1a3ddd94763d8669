"""Exception types shared across the package."""


class CtfRealizeError(Exception):
    """Base class for all package errors."""


class GraphError(CtfRealizeError):
    """Malformed causal diagram (unknown variable, cycle, bad edge)."""


class ModelError(CtfRealizeError):
    """Malformed SCM (bad mechanism table, probabilities, domains)."""


class QueryError(CtfRealizeError):
    """Malformed counterfactual query."""


class QuerySyntaxError(QueryError):
    """Query text failed to parse; carries the offending position."""

    def __init__(self, message: str, text: str, pos: int):
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at position {pos}: {text!r}")


class ActionError(CtfRealizeError):
    """Malformed action or action set."""


class FCEViolation(CtfRealizeError):
    """A unit was asked to undergo a mechanism more than once."""


class ContainmentViolation(ActionError):
    """Two input-randomizations of one variable have overlapping,
    non-nested child sets."""


class MediatorStructureError(CtfRealizeError):
    """Expanded-diagram mediator violates the tree structure or the
    no-forks rule."""


class EstimationError(CtfRealizeError):
    """Sampling or estimation could not be completed."""
