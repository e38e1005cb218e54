"""Exception hierarchy. Each family carries the CLI exit code it maps to."""


class AspectGenError(Exception):
    exit_code = 1


class ConfigError(AspectGenError):
    exit_code = 2


class DataError(AspectGenError):
    exit_code = 3


class TrainingError(AspectGenError):
    exit_code = 4


class EvalError(AspectGenError):
    exit_code = 5


class MalformedRecord(DataError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        super().__init__(f"malformed record at line {line_no}: {reason}".rstrip(": "))


class DuplicateId(DataError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"duplicate item_id {item_id!r}")


class ClicksExceedImpressions(DataError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"clicks exceed impressions for item {item_id!r}")


class TooFewItems(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class SequenceTooLong(TrainingError):
    pass


class EmptyBatch(TrainingError):
    pass


class Diverged(TrainingError):
    pass


class MissingAspect(TrainingError):
    def __init__(self, kind):
        self.kind = kind
        super().__init__(f"no candidate for aspect {kind}")


class EmptyReferenceSet(EvalError):
    pass


class UnknownDoc(EvalError):
    pass


class MissingRating(EvalError):
    def __init__(self, item_id):
        self.item_id = item_id
        super().__init__(f"no rating for item {item_id!r}")


class EmptyRanking(EvalError):
    pass


class InconsistentIds(EvalError):
    pass
