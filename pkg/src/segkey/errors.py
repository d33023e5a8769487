"""Exception types shared across the toolkit."""


class SegkeyError(Exception):
    """Base class for toolkit-specific failures."""


class FileFormatError(SegkeyError):
    """A data file (image, checkpoint, manifest, report) failed to parse."""


class MissingKeyError(SegkeyError):
    """An operation that needs the secret key was invoked without one."""


class TrainingDiverged(SegkeyError):
    """Training hit a non-finite loss or gradient."""

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}" + (f": {detail}" if detail else ""))
