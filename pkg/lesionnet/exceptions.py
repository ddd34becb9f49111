from typing import Iterable, Sequence


def shape_mismatch_exception(
    what: str, a: Sequence[int], b: Sequence[int]
) -> "ShapeMismatchException":
    return ShapeMismatchException(
        f"{what}: incompatible shapes {tuple(a)} and {tuple(b)}"
    )


def producer_version_exception(producer: object, reason: str) -> "CheckpointException":
    return CheckpointException(f"checkpoint producer version {producer!r} {reason}")


def non_finite_loss_exception(
    iteration: int, lr: float, batch_ids: Iterable[str]
) -> "NonFiniteException":
    ids = ", ".join(str(i) for i in batch_ids)
    return NonFiniteException(
        f"Loss became non-finite at iteration {iteration} (lr={lr:g}); batch ids: [{ids}]"
    )


class LesionNetException(Exception):
    """
    Base class for all lesionnet errors.
    """

    pass


class ShapeMismatchException(LesionNetException):
    """
    Raised when tensor shapes are incompatible for an operation.
    """

    pass


class TapeException(LesionNetException):
    """
    Raised when backward is requested for something the tape cannot differentiate:
    a non-scalar loss, or a tensor the tape never recorded.
    """

    pass


class NonFiniteException(LesionNetException):
    """
    Raised when a NaN or Inf value is detected in a tensor or a loss.
    """

    pass


class NonDeterministicFunctionException(LesionNetException):
    """
    Raised when a function under gradient check gives different results for identical inputs.
    """

    pass


class InvalidArgumentException(LesionNetException):
    """
    Raised when an invalid argument is provided.
    """

    pass


class ManifestException(LesionNetException):
    """
    Raised when a ground-truth manifest or a derived list file is malformed.
    """

    pass


class CheckpointException(LesionNetException):
    """
    Raised when a checkpoint or tensor container cannot be read: bad magic, unsupported
    version, truncation or checksum mismatch.
    """

    pass


class TrainingException(LesionNetException):
    """
    Raised when a training run breaks one of its guarantees, such as a frozen parameter changing.
    """

    pass


class ImageDecodeException(LesionNetException):
    """
    Raised when an image file cannot be decoded.
    """

    pass


class MaterializationException(LesionNetException):
    """
    Raised when writing augmented images fails. Partial output has been removed.
    """

    pass


class ConfigValidationException(LesionNetException):
    """
    Raised when one or more configuration values are invalid. All problems are reported at once.
    """

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__(
            "Invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems)
        )
