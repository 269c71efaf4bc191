"""Exception hierarchy shared by all popforge modules."""


class PopforgeError(Exception):
    """Base class for every error raised by popforge."""


# audio_io
class AudioFileNotFound(PopforgeError, FileNotFoundError):
    pass


class UnsupportedFormat(PopforgeError):
    pass


class EmptyAudio(PopforgeError):
    pass


# pop_detect / gfcc
class ClipTooShort(PopforgeError):
    pass


class InvalidBand(PopforgeError, ValueError):
    pass


class EmptyWindow(PopforgeError):
    pass


# corpus
class MalformedLine(PopforgeError):
    def __init__(self, path, lineno, line):
        super().__init__(f"{path}:{lineno}: malformed protocol line {line!r}")
        self.lineno = lineno


class UnknownLabelToken(PopforgeError):
    pass


class InsufficientClassCount(PopforgeError):
    pass


class EmptyCorpus(PopforgeError):
    """No clip in the split produced a feature row."""

    def __init__(self, skipped):
        super().__init__(f"no feature rows extracted ({len(skipped)} clips skipped)")
        self.skipped = skipped


# learner
class SingleClass(PopforgeError):
    pass


class TooFewMinoritySamples(PopforgeError):
    pass


class DegenerateData(PopforgeError):
    pass


class UntrainedModel(PopforgeError):
    pass


# evaluator
class LengthMismatch(PopforgeError, ValueError):
    pass


class EmptyEval(PopforgeError):
    pass


class StageError(PopforgeError):
    """Wraps a module error with the pipeline stage it came from."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
