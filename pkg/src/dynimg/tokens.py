"""TokenBlock: the dense token array flowing between pipeline stages.

Values are stored float32 at this boundary; numeric kernels upcast to
float64 internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SizeMismatch

LABEL_KEYFRAME = "keyframe"
LABEL_TEXT = "text"


def prompt_label(j: int) -> str:
    return f"prompt_{j}"


@dataclass
class TokenBlock:
    """A [tokens x dim] value array with a region/kind label per token.

    ``provenance`` carries references back to the layout and coordinate
    grid that produced the block (free-form, never interpreted here).
    """

    values: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.labels = np.asarray(self.labels)
        if self.values.ndim != 2:
            raise SizeMismatch(f"values must be 2-D [tokens, dim], got shape {self.values.shape}")
        if len(self.labels) != self.values.shape[0]:
            raise SizeMismatch(
                f"labels length {len(self.labels)} != token count {self.values.shape[0]}"
            )
        if not np.all(np.isfinite(self.values)):
            raise SizeMismatch("token values must be finite")

    @property
    def tokens(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def mask(self, label: str) -> np.ndarray:
        """Boolean mask of tokens carrying ``label``.

        ``"prompts"`` selects every prompt region at once.
        """
        if label == "prompts":
            return np.char.startswith(self.labels.astype(str), "prompt_")
        return self.labels == label
