"""Exception hierarchy.

Everything raised on bad input derives from :class:`SentinelError`; the CLI
maps those to exit code 2 and anything else to exit code 3.
"""


class SentinelError(Exception):
    """Base class for data and configuration errors."""


class ConfigError(SentinelError):
    pass


class DataError(SentinelError):
    pass


class MissingTagError(DataError):
    def __init__(self, tag):
        super().__init__(f"tag {tag!r} not present in sample matrix")
        self.tag = tag


class SchemaMismatchError(DataError):
    pass


class InsufficientTrainingDataError(DataError):
    pass


class TrainingDivergedError(SentinelError):
    pass


class SingularCovarianceError(SentinelError):
    pass


class ClusteringError(SentinelError):
    pass


class ArtifactError(SentinelError):
    pass


class IntegrityError(ArtifactError):
    pass


class VersionError(ArtifactError):
    pass
