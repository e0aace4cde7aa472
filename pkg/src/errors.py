"""
Exception types raised by the toolkit.

Library code raises these (or plain ValueError for bad arguments); only
main.py catches them and turns them into exit codes.
"""

from typing import Optional


class DpcError(Exception):
    """Base class for toolkit errors."""

    exit_code = 1


class ConfigurationError(DpcError, ValueError):
    """Invalid, unknown or mutually inconsistent configuration."""

    exit_code = 2


class TrainingDivergedError(DpcError, ArithmeticError):
    """The training loss became non-finite."""

    exit_code = 3

    def __init__(self, epoch: int, step: int, loss: float, lam: Optional[float] = None):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        self.lam = lam
        super().__init__(self._describe())

    def _describe(self) -> str:
        where = f"epoch {self.epoch}, step {self.step}"
        if self.lam is not None:
            where = f"lambda {self.lam:g}, {where}"
        return f"training diverged at {where} (loss={self.loss})"

    def with_lambda(self, lam: float) -> 'TrainingDivergedError':
        """Return a copy of this error tagged with the sweep value that caused it."""
        return TrainingDivergedError(self.epoch, self.step, self.loss, lam=lam)


class CheckpointError(DpcError, IOError):
    """A checkpoint file is missing, truncated or corrupt."""

    exit_code = 4
