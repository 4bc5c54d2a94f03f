"""Exception hierarchy shared across the pipeline.

Each error carries an ``exit_code`` so the CLI can map failures onto its
documented exit statuses without inspecting exception types one by one.
"""


class ReplayDetError(Exception):
    exit_code = 2


class PreconditionViolation(ReplayDetError, ValueError):
    exit_code = 1


class DataError(ReplayDetError):
    exit_code = 2


class UnsupportedFormat(DataError):
    pass


class CorruptHeader(DataError):
    pass


class ClipTooShort(DataError):
    pass


class InvalidNumMel(PreconditionViolation):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class CorruptPackage(DataError):
    pass


class ExternalToolFailure(DataError):
    """An external vocoder/codec command failed or produced unusable output."""


class ExternalCodecFailure(ExternalToolFailure):
    pass


class SilentNoiseSource(DataError):
    pass


class SilentSignal(DataError):
    pass


class RirTooLong(DataError):
    pass


class SingleClassInput(DataError):
    pass


class MalformedLine(DataError):
    def __init__(self, path, line_no, line):
        self.path = path
        self.line_no = line_no
        self.line = line
        super().__init__(f"{path}:{line_no}: malformed line {line!r}")


class MissingKey(DataError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        shown = ", ".join(self.missing[:20])
        more = "" if len(self.missing) <= 20 else f" (+{len(self.missing) - 20} more)"
        super().__init__(f"no key for {len(self.missing)} scored utterance(s): {shown}{more}")


class CorruptFile(DataError):
    """Feature cache or model file failed validation."""


class TrainingError(ReplayDetError):
    exit_code = 3


class NonFiniteLoss(TrainingError):
    pass


class SolverNonConvergence(TrainingError):
    pass
