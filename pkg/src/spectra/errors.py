"""Exception hierarchy shared by every spectra module."""


class SpectraError(Exception):
    """Base class for all errors raised by spectra."""


# image_io
class ImageLoadError(SpectraError):
    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class ImageNotFoundError(ImageLoadError, FileNotFoundError):
    pass


class ImageDecodeError(ImageLoadError):
    pass


class UnsupportedBitDepthError(ImageLoadError):
    pass


class ImageWriteError(SpectraError, OSError):
    pass


class DatasetError(SpectraError):
    pass


class MissingClassDirectoryError(DatasetError):
    def __init__(self, root, missing):
        self.missing = list(missing)
        super().__init__(f"{root}: missing class directories: {', '.join(self.missing)}")


class EmptyDatasetError(DatasetError):
    pass


# dft / filtering
class ShapeError(SpectraError, ValueError):
    pass


class SizeExceededError(SpectraError, ValueError):
    pass


class NonRealResultError(SpectraError, ArithmeticError):
    pass


class CenteringError(SpectraError, ValueError):
    pass


class ConfigError(SpectraError, ValueError):
    pass


# micro cnn
class StaleIntermediatesError(SpectraError, RuntimeError):
    pass


# metrics
class MetricsError(SpectraError, ValueError):
    pass


class EmptyInputError(MetricsError):
    pass


class LabelOutOfRangeError(MetricsError):
    pass


class EmptyClassError(MetricsError):
    def __init__(self, name):
        self.class_name = name
        super().__init__(f"class {name!r} has no ground-truth samples")


class DegenerateClassError(MetricsError):
    def __init__(self, name, reason):
        self.class_name = name
        super().__init__(f"class {name!r}: {reason}")


class PredictionParseError(MetricsError):
    def __init__(self, path, line, reason):
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class MissingColumnError(MetricsError):
    pass
