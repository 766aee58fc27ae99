class CurationError(Exception):
    """Base class for domain failures (mapped to exit code 1 by the CLI)."""


class DecodeError(CurationError):
    pass


class ValidationError(CurationError):
    pass


class ShapeError(CurationError):
    pass


class ConfigError(CurationError):
    pass


class MissingPairError(CurationError):
    def __init__(self, stems):
        self.stems = list(stems)
        super().__init__("masks without a paired loss/prob file: " + ", ".join(self.stems))


class EmptyDatasetError(CurationError):
    pass
