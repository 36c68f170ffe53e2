"""Shared exception types."""


class RejectedInput(ValueError):
    """An argument violates an operation's contract (bad shape, empty data, ...)."""


class AssumptionViolated(ValueError):
    """A model assumption required by an operation does not hold for the input."""


class Diverged(RuntimeError):
    """Gradient descent diverged; carries the iteration at which it blew up."""

    def __init__(self, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"loss {loss:.3e} exceeded divergence threshold at iteration {iteration}")
