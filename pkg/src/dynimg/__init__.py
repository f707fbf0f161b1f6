"""dynimg: dynamic-image video representation at desk scale.

Composes keyframes with temporal-prompt strips, assigns 4D rotary
position embeddings to the resulting token sequences, and ships a toy
attention harness that demonstrates the mechanism on synthetic videos.
"""

from . import compose, media, rope
from .compose import AugConfig, DynImgLayout, LayoutConfig, augment_group, patchify, plan_layout
from .media import (
    FrameGroup,
    SynthSpec,
    VideoMeta,
    decode_frames,
    frame_groups,
    probe,
    select_keyframes,
    select_prompts,
    synth_video,
)
from .rope import CoordGrid, RotationAngles, ThetaSchedule, angles, build_coords, rotate
from .tokens import TokenBlock

__version__ = "0.1.0"
