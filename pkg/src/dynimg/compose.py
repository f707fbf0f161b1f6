"""Dynamic-image composition: layout planning, group augmentation,
rasterization, and patch tokenization.

A composed dynamic image stacks one high-resolution keyframe on top of a
strip of temporally-ordered prompt frames (left to right = chronological).
Every region edge lands on a patch multiple so no patch token ever
straddles two frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ArityMismatch,
    DegenerateCrop,
    PatchBoundaryViolation,
    SizeMismatch,
)
from .tokens import LABEL_KEYFRAME, TokenBlock, prompt_label


@dataclass(frozen=True)
class LayoutConfig:
    """Pixel geometry knobs for one dynamic image.

    ``prompt_strip_height`` defaults to keyframe_size / n_prompts rounded
    down to a patch multiple.
    """

    keyframe_size: int = 336
    patch: int = 14
    n_prompts: int = 4
    prompt_strip_height: int | None = None

    def resolved_strip_height(self) -> int:
        if self.prompt_strip_height is not None:
            return self.prompt_strip_height
        return (self.keyframe_size // self.n_prompts) // self.patch * self.patch


@dataclass(frozen=True)
class Rect:
    """Pixel rectangle, top-left anchored."""

    top: int
    left: int
    height: int
    width: int

    def to_json(self) -> dict:
        return {"top": self.top, "left": self.left, "height": self.height, "width": self.width}


@dataclass(frozen=True)
class DynImgLayout:
    """Exact pixel- and patch-level geometry of one composed dynamic image."""

    total_size: tuple[int, int]
    keyframe_region: Rect
    prompt_regions: tuple[Rect, ...]
    patch: int
    patch_grid: tuple[int, int]

    @property
    def n_prompts(self) -> int:
        return len(self.prompt_regions)

    @property
    def keyframe_patch_grid(self) -> tuple[int, int]:
        return (self.keyframe_region.height // self.patch,
                self.keyframe_region.width // self.patch)

    @property
    def prompt_patch_grid(self) -> tuple[int, int]:
        r = self.prompt_regions[0]
        return (r.height // self.patch, r.width // self.patch)

    def region_of_patch(self, row: int, col: int) -> str:
        """Region label owning patch (row, col) of the full grid."""
        y, x = row * self.patch, col * self.patch
        k = self.keyframe_region
        if k.top <= y < k.top + k.height and k.left <= x < k.left + k.width:
            return LABEL_KEYFRAME
        for j, r in enumerate(self.prompt_regions):
            if r.top <= y < r.top + r.height and r.left <= x < r.left + r.width:
                return prompt_label(j)
        raise SizeMismatch(f"patch ({row}, {col}) lies in no region")

    def patch_labels(self) -> np.ndarray:
        """Row-major region label per patch of the full grid."""
        rows, cols = self.patch_grid
        return np.array([self.region_of_patch(r, c) for r in range(rows) for c in range(cols)])

    def to_json(self) -> dict:
        return {
            "total_size": list(self.total_size),
            "patch": self.patch,
            "patch_grid": list(self.patch_grid),
            "keyframe_region": self.keyframe_region.to_json(),
            "prompt_regions": [r.to_json() for r in self.prompt_regions],
        }


@dataclass(frozen=True)
class AugConfig:
    """Joint group augmentation: one crop, one flip, one normalization.

    Normalization operates on pixels scaled to [0, 1]; ``min_crop`` is the
    smallest legal crop edge (one patch) in pixels.
    """

    crop_scale: tuple[float, float] = (0.7, 1.0)
    hflip_prob: float = 0.5
    normalize_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    normalize_std: tuple[float, float, float] = (0.5, 0.5, 0.5)
    enabled: bool = True
    min_crop: int = 14

    def __post_init__(self):
        lo, hi = self.crop_scale
        if not (0 < lo <= hi <= 1):
            raise DegenerateCrop(f"crop_scale must satisfy 0 < low <= high <= 1, got {self.crop_scale}")
        if any(s <= 0 for s in self.normalize_std):
            raise DegenerateCrop("normalize_std entries must be positive")


def plan_layout(config: LayoutConfig) -> DynImgLayout:
    """Validate a layout config and produce its exact geometry.

    Raises PatchBoundaryViolation naming the offending dimension if any
    region edge would fall off the patch grid.
    """
    size, patch, n = config.keyframe_size, config.patch, config.n_prompts
    if patch <= 0 or size <= 0 or n <= 0:
        raise PatchBoundaryViolation("keyframe_size, patch, n_prompts must be positive")
    if size % patch != 0:
        raise PatchBoundaryViolation(
            f"keyframe_size {size} is not a multiple of patch {patch}")
    if size % n != 0:
        raise PatchBoundaryViolation(
            f"keyframe_size {size} is not divisible by n_prompts {n}")
    prompt_w = size // n
    if prompt_w % patch != 0:
        raise PatchBoundaryViolation(
            f"prompt width {prompt_w} (keyframe_size/n_prompts) is not a multiple of patch {patch}")
    strip_h = config.resolved_strip_height()
    if strip_h < patch:
        raise PatchBoundaryViolation(
            f"prompt_strip_height {strip_h} is smaller than one patch ({patch})")
    if strip_h % patch != 0:
        raise PatchBoundaryViolation(
            f"prompt_strip_height {strip_h} is not a multiple of patch {patch}")

    total_h, total_w = size + strip_h, size
    layout = DynImgLayout(
        total_size=(total_h, total_w),
        keyframe_region=Rect(0, 0, size, size),
        prompt_regions=tuple(Rect(size, j * prompt_w, strip_h, prompt_w) for j in range(n)),
        patch=patch,
        patch_grid=(total_h // patch, total_w // patch),
    )
    return layout


# -- resize -------------------------------------------------------------------

def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with the half-pixel center convention.

    Works on HxW or HxWxC arrays of any numeric dtype; computes in float64
    and returns float64 (callers clamp/cast as needed).
    """
    in_h, in_w = img.shape[:2]
    data = img.astype(np.float64)
    if (in_h, in_w) == (out_h, out_w):
        return data.copy()

    def axis_coords(n_out, n_in):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = src - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(out_h, in_h)
    x0, x1, fx = axis_coords(out_w, in_w)
    fy = fy.reshape(-1, 1, *([1] * (data.ndim - 2)))
    fx = fx.reshape(1, -1, *([1] * (data.ndim - 2)))

    top = data[y0][:, x0] * (1 - fx) + data[y0][:, x1] * fx
    bot = data[y1][:, x0] * (1 - fx) + data[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


# -- augmentation -------------------------------------------------------------

@dataclass(frozen=True)
class GroupAugParams:
    """The single geometric decision shared by every frame of one group."""

    crop: Rect | None
    hflip: bool


def sample_group_params(shape: tuple[int, int], aug: AugConfig,
                        rng: np.random.Generator) -> GroupAugParams:
    """Draw one crop window and one flip decision for a whole group."""
    if not aug.enabled:
        return GroupAugParams(crop=None, hflip=False)
    h, w = shape
    area = rng.uniform(aug.crop_scale[0], aug.crop_scale[1])
    side = float(np.sqrt(area))
    ch, cw = int(h * side), int(w * side)
    if min(ch, cw) < aug.min_crop:
        raise DegenerateCrop(
            f"crop window {ch}x{cw} smaller than one patch ({aug.min_crop} px)")
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    hflip = bool(rng.random() < aug.hflip_prob)
    return GroupAugParams(crop=Rect(top, left, ch, cw), hflip=hflip)


def apply_geometric(frames: list[np.ndarray], params: GroupAugParams) -> list[np.ndarray]:
    """Apply the shared crop + flip to every frame, staying in uint8."""
    out = []
    for f in frames:
        g = f
        if params.crop is not None:
            c = params.crop
            g = g[c.top:c.top + c.height, c.left:c.left + c.width]
            g = _to_uint8(resize_bilinear(g, f.shape[0], f.shape[1]))
        if params.hflip:
            g = g[:, ::-1]
        out.append(np.ascontiguousarray(g))
    return out


def normalize(frame: np.ndarray, aug: AugConfig) -> np.ndarray:
    """(pixel/255 - mean) / std, per channel, in float64."""
    mean = np.asarray(aug.normalize_mean, dtype=np.float64)
    std = np.asarray(aug.normalize_std, dtype=np.float64)
    return (frame.astype(np.float64) / 255.0 - mean) / std


def augment_group(frames: list[np.ndarray], aug: AugConfig,
                  rng: np.random.Generator) -> list[np.ndarray]:
    """Jointly augment one frame group.

    One crop window, one flip decision, one normalization are applied
    identically to every frame, preventing spatial confusion between the
    keyframe and its prompts. Disabled configs normalize only.
    """
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ArityMismatch(f"group frames must share dimensions, got {sorted(shapes)}")
    params = sample_group_params(frames[0].shape[:2], aug, rng)
    return [normalize(f, aug) for f in apply_geometric(frames, params)]


# -- composition + tokenization ------------------------------------------------

def compose(frames: list[np.ndarray], layout: DynImgLayout) -> np.ndarray:
    """Resize the keyframe and each prompt into its region of one raster.

    Expects 1 + n_prompts frames, keyframe first, prompts chronological.
    uint8 inputs produce a uint8 raster; float inputs stay float64.
    """
    if len(frames) != 1 + layout.n_prompts:
        raise ArityMismatch(
            f"expected 1 keyframe + {layout.n_prompts} prompts, got {len(frames)} frames")
    as_uint8 = all(f.dtype == np.uint8 for f in frames)
    h, w = layout.total_size
    raster = np.zeros((h, w, 3), dtype=np.float64)

    regions = [layout.keyframe_region] + list(layout.prompt_regions)
    for frame, r in zip(frames, regions):
        resized = resize_bilinear(frame, r.height, r.width)
        if as_uint8:
            resized = np.round(np.clip(resized, 0, 255))
        raster[r.top:r.top + r.height, r.left:r.left + r.width] = resized
    return _to_uint8(raster) if as_uint8 else raster


def patchify(raster: np.ndarray, layout: DynImgLayout) -> TokenBlock:
    """Cut the raster into row-major patch tokens with region labels.

    Token values are the raw patch pixels flattened (patch^2 * 3 each).
    """
    h, w = layout.total_size
    if raster.shape[:2] != (h, w):
        raise SizeMismatch(f"raster {raster.shape[:2]} does not match layout {layout.total_size}")
    p = layout.patch
    rows, cols = layout.patch_grid
    tiles = raster.reshape(rows, p, cols, p, 3).swapaxes(1, 2)
    values = tiles.reshape(rows * cols, p * p * 3)
    return TokenBlock(values=values, labels=layout.patch_labels(),
                      provenance={"layout": layout})


def reassemble(block: TokenBlock, layout: DynImgLayout) -> np.ndarray:
    """Inverse of patchify (float32 raster, since TokenBlock stores f32)."""
    p = layout.patch
    rows, cols = layout.patch_grid
    if block.tokens != rows * cols:
        raise SizeMismatch(f"{block.tokens} tokens cannot tile a {rows}x{cols} grid")
    tiles = block.values.reshape(rows, cols, p, p, 3).swapaxes(1, 2)
    return tiles.reshape(rows * p, cols * p, 3)
