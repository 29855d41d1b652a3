from __future__ import annotations


class SolverError(RuntimeError):
    """A time stepper or extraction routine could not produce a valid result.

    ``step`` is the index of the failing time step when known; ``partial``
    optionally carries whatever the run produced before failing.
    """

    def __init__(self, message: str, step: int | None = None, partial=None):
        super().__init__(message)
        self.step = step
        self.partial = partial

    def at_step(self, step: int, partial=None) -> "SolverError":
        err = SolverError(f"step {step}: {self.args[0]}", step=step, partial=partial)
        err.__cause__ = self
        return err


class HypothesisError(ValueError):
    """Initial data fall outside the hypotheses of the fast-time closed form."""

    def __init__(self, message: str, witness: tuple[float, float] | None = None):
        super().__init__(message)
        self.witness = witness
