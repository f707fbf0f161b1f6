"""Exception hierarchy shared by all dynimg modules.

The CLI maps these onto process exit codes: InputError -> 2,
ConfigError -> 3, NumericError -> 4.
"""


class DynImgError(Exception):
    """Base class for all dynimg errors."""


class InputError(DynImgError):
    """Unusable input data (missing files, empty videos, bad indices)."""


class ConfigError(DynImgError):
    """Invalid configuration or argument combination."""


class NumericError(DynImgError):
    """Numeric failure at runtime (divergence, non-finite values)."""


# -- input errors -----------------------------------------------------------

class UnreadableSource(InputError):
    """The video source cannot be resolved by any registered backend."""


class EmptyVideo(InputError):
    """The source resolved but holds zero frames."""


class IndexOutOfRange(InputError):
    """A requested frame index lies outside [0, frame_count)."""


class DecodeFailure(InputError):
    """A frame exists but could not be decoded."""


# -- config / validation errors ---------------------------------------------

class BadSpec(ConfigError):
    """A synthetic-video spec violates its invariants."""


class BadArity(ConfigError):
    """Prompt-frame count must be even and at least 2."""


class PatchBoundaryViolation(ConfigError):
    """A layout dimension is not an integer multiple of the patch size."""


class DegenerateCrop(ConfigError):
    """Augmentation crop window smaller than one patch."""


class ArityMismatch(ConfigError):
    """Frame count disagrees with the layout (expected 1 keyframe + n prompts)."""


class SizeMismatch(ConfigError):
    """Raster or token array size disagrees with the layout."""


class ShapeMismatch(ConfigError):
    """Tensor shape incompatible with the model configuration."""


class GridMismatch(ConfigError):
    """Coordinate grid disagrees with the token sequence it describes."""


class DimMismatch(ConfigError):
    """Coordinate mode requires dimensions the grid does not carry."""


class NotTrainable(ConfigError):
    """Gradient requested from a schedule with fixed frequencies."""


class EmptyRegion(ConfigError):
    """Attention-mass query or key region selects zero tokens."""


# -- numeric errors ----------------------------------------------------------

class Divergence(NumericError):
    """Training loss became non-finite."""


EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


def exit_code_for(exc: BaseException) -> int:
    """Exit code the CLI should use for a raised dynimg error."""
    if isinstance(exc, InputError):
        return EXIT_INPUT
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    return 1
