"""4D rotary position embedding for mixed text / dynamic-image sequences.

Every token carries a four-component coordinate (h, w, t, s):

* text token at sequence position p -> (p, p, p, p),
* keyframe patch (r, c) -> (r, c, 0, s0),
* prompt-frame patch -> (h, w) interpolated onto the keyframe's range,
  t symmetric around the keyframe (-n/2..-1, +1..+n/2), same s0,

where s0 is the single sequence slot the whole dynamic image occupies.

Rotation angles are either the merged weighted sum over all coordinate
dimensions (one angle per feature pair) or split round-robin so each pair
block rotates by one dimension only. The sequence frequencies follow the
standard 10000^(-2i/d) schedule; the h/w/t frequencies are either fixed to
that same schedule or trainable from an exact-zero start, which makes the
merged 4D rotation collapse to plain 1D rotary over s at initialization.

All math here is float64; gradients of the rotation with respect to the
rotated values and the trainable frequencies are analytic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .compose import DynImgLayout
from .errors import DimMismatch, GridMismatch, NotTrainable, ShapeMismatch
from .tokens import TokenBlock

KIND_TEXT = "text"
KIND_KEYFRAME = "keyframe-patch"
KIND_PROMPT = "prompt-patch"

COORD_MODES = {
    "1d": ("s",),
    "3d": ("h", "w", "s"),
    "4d": ("h", "w", "t", "s"),
}

TRAINABLE_DIMS = ("h", "w", "t")


@dataclass(frozen=True)
class CoordGrid:
    """Per-token (h, w, t, s) coordinates for one input sequence.

    ``group`` tags each token with its dynamic-image index (-1 for text),
    which downstream pooling and permutation tests rely on.
    """

    h: np.ndarray
    w: np.ndarray
    t: np.ndarray
    s: np.ndarray
    kinds: np.ndarray
    group: np.ndarray

    def __post_init__(self):
        n = len(self.h)
        for name in ("w", "t", "s", "kinds", "group"):
            if len(getattr(self, name)) != n:
                raise GridMismatch(f"coordinate array {name!r} length differs from h")

    @property
    def tokens(self) -> int:
        return len(self.h)

    def coord(self, dim: str) -> np.ndarray:
        return getattr(self, dim)

    def stacked(self) -> np.ndarray:
        """[tokens, 4] float64 in (h, w, t, s) order."""
        return np.stack([self.h, self.w, self.t, self.s], axis=1)

    def take(self, order: np.ndarray) -> "CoordGrid":
        return CoordGrid(self.h[order], self.w[order], self.t[order], self.s[order],
                         self.kinds[order], self.group[order])


def symmetric_prompt_times(n: int) -> list[float]:
    """Unit-step temporal ranks -n/2..-1, +1..+n/2 around the keyframe."""
    half = n // 2
    return [float(j - half) if j < half else float(j - half + 1) for j in range(n)]


def frame_offset_times(prompt_indices, keyframe_index: int, fps) -> list[float]:
    """Real time offsets (seconds) as the alternative temporal coordinate."""
    return [float((i - keyframe_index) / fps) for i in prompt_indices]


def _interp(pos: int, n_src: int, n_dst: int) -> float:
    """Map source grid index onto [0, n_dst-1]; midpoint for 1-wide grids."""
    if n_src == 1:
        return (n_dst - 1) / 2.0
    return pos * (n_dst - 1) / (n_src - 1)


def build_coords(layouts: list[DynImgLayout], text_spans: list[int], *,
                 coord_mode: str = "4d",
                 prompt_times: list[list[float]] | None = None) -> CoordGrid:
    """Coordinates for text spans interleaved with dynamic images.

    ``text_spans`` has one more entry than ``layouts``: text before the
    first image, between consecutive ones, and after the last. Each image
    consumes a single sequence slot shared by all its patches; the counter
    resumes right after it.

    ``coord_mode`` controls construction: "4d" is the scheme above; "3d"
    treats the composed image as one picture (raw grid h/w, per-token s);
    "1d" degrades every token to its sequence position.
    """
    if coord_mode not in COORD_MODES:
        raise DimMismatch(f"unknown coord_mode {coord_mode!r}")
    if len(text_spans) != len(layouts) + 1:
        raise GridMismatch(
            f"need {len(layouts) + 1} text spans for {len(layouts)} dynamic images, "
            f"got {len(text_spans)}")
    if any(n < 0 for n in text_spans):
        raise GridMismatch("text span counts must be >= 0")
    if prompt_times is not None and len(prompt_times) != len(layouts):
        raise GridMismatch("prompt_times must give one list per dynamic image")

    h, w, t, s, kinds, group = [], [], [], [], [], []
    pos = 0

    def emit_text(count):
        nonlocal pos
        for _ in range(count):
            h.append(float(pos)); w.append(float(pos)); t.append(float(pos)); s.append(float(pos))
            kinds.append(KIND_TEXT); group.append(-1)
            pos += 1

    for i, layout in enumerate(layouts):
        emit_text(text_spans[i])
        s0 = float(pos)
        rows, cols = layout.patch_grid
        kf_rows, kf_cols = layout.keyframe_patch_grid
        pr_rows, pr_cols = layout.prompt_patch_grid
        strip_top = layout.prompt_regions[0].top // layout.patch
        n = layout.n_prompts
        times = prompt_times[i] if prompt_times is not None else symmetric_prompt_times(n)
        if len(times) != n:
            raise GridMismatch(f"dynamic image {i}: {len(times)} prompt times for {n} prompts")

        for r in range(rows):
            for c in range(cols):
                if coord_mode == "1d":
                    h.append(float(pos)); w.append(float(pos))
                    t.append(float(pos)); s.append(float(pos))
                    pos += 1
                elif coord_mode == "3d":
                    h.append(float(r)); w.append(float(c))
                    t.append(0.0); s.append(float(pos))
                    pos += 1
                else:
                    if r < kf_rows:
                        h.append(float(r)); w.append(float(c)); t.append(0.0)
                    else:
                        j = c // pr_cols
                        rr, cc = r - strip_top, c - j * pr_cols
                        h.append(_interp(rr, pr_rows, kf_rows))
                        w.append(_interp(cc, pr_cols, kf_cols))
                        t.append(times[j])
                    s.append(s0)
                kinds.append(KIND_KEYFRAME if r < kf_rows else KIND_PROMPT)
                group.append(i)
        if coord_mode == "4d":
            pos = int(s0) + 1

    emit_text(text_spans[-1])

    return CoordGrid(
        h=np.array(h, dtype=np.float64), w=np.array(w, dtype=np.float64),
        t=np.array(t, dtype=np.float64), s=np.array(s, dtype=np.float64),
        kinds=np.array(kinds), group=np.array(group, dtype=np.int32),
    )


# -- frequency schedules --------------------------------------------------------


def sinusoidal_thetas(head_dim: int) -> np.ndarray:
    """The standard per-pair frequency ladder 10000^(-2i/d)."""
    i = np.arange(head_dim // 2, dtype=np.float64)
    return 10000.0 ** (-2.0 * i / head_dim)


@dataclass(frozen=True)
class ThetaSchedule:
    """Per-pair rotation frequencies for all four coordinate dimensions.

    theta_s is always the fixed sinusoidal ladder. theta_h/w/t are either
    that same ladder (fixed-shared) or trainable values starting at exact
    zero. Immutable: training steps produce updated copies.
    """

    head_dim: int
    coord_mode: str = "4d"
    variant: str = "merge"
    trainable: bool = True
    theta_s: np.ndarray = None
    theta_h: np.ndarray = None
    theta_w: np.ndarray = None
    theta_t: np.ndarray = None

    @classmethod
    def create(cls, head_dim: int, coord_mode: str = "4d", variant: str = "merge",
               trainable: bool = True) -> "ThetaSchedule":
        if coord_mode not in COORD_MODES:
            raise DimMismatch(f"unknown coord_mode {coord_mode!r}")
        if variant not in ("merge", "split"):
            raise DimMismatch(f"unknown variant {variant!r}")
        if head_dim % 2 != 0:
            raise ShapeMismatch(f"head_dim must be even, got {head_dim}")
        if variant == "split" and coord_mode == "4d" and head_dim % 8 != 0:
            raise ShapeMismatch(
                f"4d split needs head_dim divisible by 8, got {head_dim}")
        base = sinusoidal_thetas(head_dim)
        side = np.zeros_like(base) if trainable else base.copy()
        return cls(head_dim=head_dim, coord_mode=coord_mode, variant=variant,
                   trainable=trainable, theta_s=base,
                   theta_h=side.copy(), theta_w=side.copy(), theta_t=side.copy())

    @property
    def pairs(self) -> int:
        return self.head_dim // 2

    def theta(self, dim: str) -> np.ndarray:
        return getattr(self, f"theta_{dim}")

    def with_thetas(self, theta_h: np.ndarray, theta_w: np.ndarray,
                    theta_t: np.ndarray) -> "ThetaSchedule":
        """Functional update of the trainable frequencies."""
        if not self.trainable:
            raise NotTrainable("schedule frequencies are fixed")
        return replace(self, theta_h=np.asarray(theta_h, dtype=np.float64),
                       theta_w=np.asarray(theta_w, dtype=np.float64),
                       theta_t=np.asarray(theta_t, dtype=np.float64))

    def pair_dims(self) -> list[str]:
        """Split variant: owning dimension per pair, round-robin."""
        dims = COORD_MODES[self.coord_mode]
        return [dims[k % len(dims)] for k in range(self.pairs)]


@dataclass(frozen=True)
class RotationAngles:
    """Per-token, per-pair rotation angle a = x . theta."""

    values: np.ndarray  # [tokens, pairs] float64

    @property
    def tokens(self) -> int:
        return self.values.shape[0]

    @property
    def pairs(self) -> int:
        return self.values.shape[1]


def angles(grid: CoordGrid, sched: ThetaSchedule) -> RotationAngles:
    """Rotation angles for every token under a schedule.

    Merge: a_i = sum over active dims of x_dim * theta_dim^i. Split: pair i
    rotates by its owning dimension only.
    """
    dims = COORD_MODES[sched.coord_mode]
    if sched.variant == "merge":
        a = np.zeros((grid.tokens, sched.pairs), dtype=np.float64)
        for dim in dims:
            a += np.outer(grid.coord(dim), sched.theta(dim))
    else:
        a = np.empty((grid.tokens, sched.pairs), dtype=np.float64)
        for k, dim in enumerate(sched.pair_dims()):
            a[:, k] = grid.coord(dim) * sched.theta(dim)[k]
    return RotationAngles(values=a)


def _split_pairs(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return q[..., 0::2], q[..., 1::2]


def _merge_pairs(p1: np.ndarray, p2: np.ndarray) -> np.ndarray:
    out = np.empty(p1.shape[:-1] + (p1.shape[-1] * 2,), dtype=np.float64)
    out[..., 0::2] = p1
    out[..., 1::2] = p2
    return out


def rotate_values(q: np.ndarray, a: RotationAngles) -> np.ndarray:
    """Rotate adjacent feature pairs: (q1, q2) -> (q1 cos - q2 sin, q1 sin + q2 cos).

    ``q`` is [..., tokens, dim] with dim = 2 * pairs; leading axes broadcast.
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != 2 * a.pairs:
        raise ShapeMismatch(f"dim {q.shape[-1]} != 2 * {a.pairs} pairs")
    if q.shape[-2] != a.tokens:
        raise ShapeMismatch(f"{q.shape[-2]} tokens vs {a.tokens} angle rows")
    cos, sin = np.cos(a.values), np.sin(a.values)
    q1, q2 = _split_pairs(q)
    return _merge_pairs(q1 * cos - q2 * sin, q1 * sin + q2 * cos)


def rotate(q, a: RotationAngles):
    """Apply the rotation to an ndarray or a TokenBlock (f32 at that boundary)."""
    if isinstance(q, TokenBlock):
        out = rotate_values(q.values, a)
        return TokenBlock(values=out.astype(np.float32), labels=q.labels,
                          provenance=dict(q.provenance))
    return rotate_values(q, a)


def rope_backward(q: np.ndarray, grid: CoordGrid, sched: ThetaSchedule,
                  upstream: np.ndarray) -> dict[str, np.ndarray]:
    """Analytic gradients of rotate(q, angles(grid, sched)).

    Returns d/dq plus d/dtheta_h, d/dtheta_w, d/dtheta_t. The sequence
    frequencies are never trainable. Leading batch axes of q/upstream are
    summed into the theta gradients.
    """
    if not sched.trainable:
        raise NotTrainable("schedule frequencies are fixed")
    q = np.asarray(q, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != q.shape:
        raise ShapeMismatch(f"upstream {upstream.shape} != q {q.shape}")

    a = angles(grid, sched)
    cos, sin = np.cos(a.values), np.sin(a.values)
    q1, q2 = _split_pairs(q)
    g1, g2 = _split_pairs(upstream)

    dq1 = g1 * cos + g2 * sin
    dq2 = -g1 * sin + g2 * cos
    dq = _merge_pairs(dq1, dq2)

    out1 = q1 * cos - q2 * sin
    out2 = q1 * sin + q2 * cos
    da = g2 * out1 - g1 * out2
    # collapse leading batch axes onto [tokens, pairs]
    da = da.reshape(-1, a.tokens, a.pairs).sum(axis=0)

    dims = COORD_MODES[sched.coord_mode]
    grads = {"q": dq}
    if sched.variant == "merge":
        for dim in TRAINABLE_DIMS:
            if dim in dims:
                grads[f"theta_{dim}"] = grid.coord(dim) @ da
            else:
                grads[f"theta_{dim}"] = np.zeros(sched.pairs, dtype=np.float64)
    else:
        owners = sched.pair_dims()
        for dim in TRAINABLE_DIMS:
            g = np.zeros(sched.pairs, dtype=np.float64)
            for k, owner in enumerate(owners):
                if owner == dim:
                    g[k] = grid.coord(dim) @ da[:, k]
            grads[f"theta_{dim}"] = g
    return grads
