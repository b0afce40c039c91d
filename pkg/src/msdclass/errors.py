"""Exception hierarchy. The CLI maps each family to its own exit code."""


class MsdError(Exception):
    """Base class for all package errors."""


class DataError(MsdError):
    """Bad input data: manifests, audio, CSV files, judge responses."""


class ManifestError(DataError):
    pass


class AudioError(DataError):
    pass


class FeatureExtractionError(DataError):
    def __init__(self, message, recording_id=None):
        self.recording_id = recording_id
        if recording_id is not None:
            message = f"{recording_id}: {message}"
        super().__init__(message)


class ConfigError(MsdError):
    """Unknown or invalid configuration keys/values."""


class ConvergenceError(MsdError):
    """The SVM dual solver stopped making progress before reaching tolerance."""


class ModelFormatError(DataError):
    pass


class ChecksumError(ModelFormatError):
    pass


class SchemaVersionError(ModelFormatError):
    pass
