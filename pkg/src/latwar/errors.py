"""Exception hierarchy shared by all latwar modules."""


class LatwarError(Exception):
    """Base class; the CLI maps these to exit code 1."""


# ingest
class HeightOutOfRange(LatwarError):
    pass


class EndpointUnreachable(LatwarError):
    pass


class MalformedResponse(LatwarError):
    pass


class ResultCountMismatch(LatwarError):
    pass


class FixtureSchemaError(LatwarError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class DecodeError(LatwarError):
    pass


class CheckpointCorrupt(LatwarError):
    pass


# logparse
class DuplicateMatcher(LatwarError):
    pass


class InconsistentAmounts(LatwarError):
    pass


# failedarb
class NotReverted(LatwarError):
    pass


# searchers
class AmbiguousAssignment(LatwarError):
    pass


# metrics
class NoActivity(LatwarError):
    pass


class DegenerateInput(LatwarError):
    pass


# latency
class InvalidConfig(LatwarError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


# report
class OutputDirNotWritable(LatwarError):
    pass
