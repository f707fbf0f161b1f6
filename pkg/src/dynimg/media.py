"""Frame inventory, keyframe selection, and synthetic test videos.

A video source is anything the registered backends can resolve:

* a frames directory (``NNNNNN.png`` + optional ``index.json``) -- the
  dependency-free reference backend,
* a :class:`SyntheticSource` built from a :class:`SynthSpec`, with frames
  generated on demand from a closed-form motion formula,
* a container file handled by an external decoder (ffmpeg/ffprobe), when
  those binaries are present.

Keyframes are drawn from the I-frame index; when a source has no such
index every frame counts as an I-frame.
"""

from __future__ import annotations

import json
import logging
import math
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BadArity,
    BadSpec,
    DecodeFailure,
    EmptyVideo,
    IndexOutOfRange,
    UnreadableSource,
)

log = logging.getLogger(__name__)

_FRAME_RE = re.compile(r"^(\d{6})\.png$")

DEFAULT_FPS = Fraction(30, 1)

# Fixed palette for synthetic frames: bright object on a dark field.
_BACKGROUND = 16
_OBJECT = 235


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class VideoMeta:
    """Frame inventory of one source."""

    frame_count: int
    fps: Fraction
    iframe_indices: tuple[int, ...]
    source_id: str

    def __post_init__(self):
        if self.frame_count < 1:
            raise EmptyVideo(f"{self.source_id}: frame_count must be >= 1")
        if self.fps <= 0:
            raise UnreadableSource(f"{self.source_id}: fps must be positive")
        idx = self.iframe_indices
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise UnreadableSource(f"{self.source_id}: iframe indices must be strictly increasing")
        if idx and (idx[0] < 0 or idx[-1] >= self.frame_count):
            raise UnreadableSource(f"{self.source_id}: iframe index out of range")

    def to_json(self) -> dict:
        return {
            "frame_count": self.frame_count,
            "fps": [self.fps.numerator, self.fps.denominator],
            "iframe_indices": list(self.iframe_indices),
            "source_id": self.source_id,
        }


@dataclass(frozen=True)
class FrameGroup:
    """One keyframe plus its chronological temporal-prompt frames."""

    keyframe_index: int
    prompt_indices: tuple[int, ...]
    group_rank: int
    boundary_clamped: bool = False

    def __post_init__(self):
        if any(b < a for a, b in zip(self.prompt_indices, self.prompt_indices[1:])):
            raise BadArity("prompt_indices must be ascending")

    @property
    def frame_indices(self) -> tuple[int, ...]:
        """All frames the group needs, keyframe first."""
        return (self.keyframe_index,) + self.prompt_indices


PATTERNS = ("moving-dot", "moving-square", "static")


@dataclass(frozen=True)
class SynthSpec:
    """Deterministic synthetic video: one object moving over a dark field.

    Motion wraps around the frame borders, so the object is visible at
    every timestep. ``static`` renders the moving-dot object at its start
    position for every frame (identical to moving-dot with velocity 0).
    """

    pattern: str = "moving-dot"
    frame_count: int = 32
    width: int = 224
    height: int = 224
    velocity: tuple[float, float] = (3.0, 0.0)
    object_size: int = 16
    seed: int = 0
    fps: Fraction = DEFAULT_FPS

    def __post_init__(self):
        if self.pattern not in PATTERNS:
            raise BadSpec(f"unknown pattern {self.pattern!r}, expected one of {PATTERNS}")
        if min(self.frame_count, self.width, self.height) <= 0:
            raise BadSpec("frame_count, width, height must all be positive")
        if not (0 < self.object_size < min(self.width, self.height)):
            raise BadSpec("object_size must fit inside the frame")


class SyntheticSource:
    """Lazy frame generator for a :class:`SynthSpec`.

    The start position comes from the spec seed; everything downstream of
    the spec is a pure function, so repeated decodes are bit-identical.
    """

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        margin = spec.object_size / 2
        self.start = (
            float(rng.uniform(margin, spec.width - margin)),
            float(rng.uniform(margin, spec.height - margin)),
        )

    @property
    def source_id(self) -> str:
        s = self.spec
        return f"synth:{s.pattern}:{s.frame_count}x{s.width}x{s.height}:seed{s.seed}"

    def object_center(self, t: int) -> tuple[float, float]:
        """Object center at frame ``t`` (wrapped into the frame)."""
        s = self.spec
        vx, vy = (0.0, 0.0) if s.pattern == "static" else s.velocity
        return (
            (self.start[0] + t * vx) % s.width,
            (self.start[1] + t * vy) % s.height,
        )

    def frame(self, t: int) -> np.ndarray:
        s = self.spec
        cx, cy = self.object_center(t)
        ys = np.arange(s.height, dtype=np.float64)[:, None]
        xs = np.arange(s.width, dtype=np.float64)[None, :]
        # toroidal distance so the object wraps across frame edges
        dx = np.abs(xs - cx)
        dx = np.minimum(dx, s.width - dx)
        dy = np.abs(ys - cy)
        dy = np.minimum(dy, s.height - dy)
        half = s.object_size / 2
        if s.pattern == "moving-square":
            inside = (dx <= half) & (dy <= half)
        else:
            inside = dx * dx + dy * dy <= half * half
        img = np.full((s.height, s.width, 3), _BACKGROUND, dtype=np.uint8)
        img[inside] = _OBJECT
        return img

    def probe(self) -> VideoMeta:
        return VideoMeta(
            frame_count=self.spec.frame_count,
            fps=self.spec.fps,
            iframe_indices=tuple(range(self.spec.frame_count)),
            source_id=self.source_id,
        )

    def decode(self, indices) -> list[np.ndarray]:
        n = self.spec.frame_count
        out = []
        for i in indices:
            if not 0 <= i < n:
                raise IndexOutOfRange(f"frame {i} outside [0, {n})")
            out.append(self.frame(int(i)))
        return out


class FramesDirSource:
    """Reference backend: zero-padded PNG frames plus optional index.json."""

    def __init__(self, path: Path):
        self.path = Path(path)
        if not self.path.is_dir():
            raise UnreadableSource(f"{self.path} is not a directory")
        frames = {}
        for p in self.path.iterdir():
            m = _FRAME_RE.match(p.name)
            if m:
                frames[int(m.group(1))] = p
        if not frames:
            raise EmptyVideo(f"{self.path} holds no NNNNNN.png frames")
        count = max(frames) + 1
        missing = [i for i in range(count) if i not in frames]
        if missing:
            raise UnreadableSource(f"{self.path} missing frame files, first gap at {missing[0]:06d}.png")
        self.frame_files = [frames[i] for i in range(count)]
        self.fps, self.iframes = self._read_index(count)

    def _read_index(self, count: int) -> tuple[Fraction, tuple[int, ...]]:
        index = self.path / "index.json"
        if not index.exists():
            return DEFAULT_FPS, tuple(range(count))
        try:
            data = json.loads(index.read_text())
            num, den = data["fps"]
            fps = Fraction(int(num), int(den))
            iframes = tuple(int(i) for i in data.get("iframes", range(count)))
        except (KeyError, ValueError, TypeError, ZeroDivisionError) as exc:
            raise UnreadableSource(f"{index} is malformed: {exc}") from exc
        return fps, iframes

    @property
    def source_id(self) -> str:
        return str(self.path)

    def probe(self) -> VideoMeta:
        return VideoMeta(
            frame_count=len(self.frame_files),
            fps=self.fps,
            iframe_indices=self.iframes,
            source_id=self.source_id,
        )

    def decode(self, indices) -> list[np.ndarray]:
        out = []
        for i in indices:
            if not 0 <= i < len(self.frame_files):
                raise IndexOutOfRange(f"frame {i} outside [0, {len(self.frame_files)})")
            try:
                with Image.open(self.frame_files[int(i)]) as img:
                    out.append(np.asarray(img.convert("RGB"), dtype=np.uint8))
            except OSError as exc:
                raise DecodeFailure(f"cannot decode {self.frame_files[int(i)]}: {exc}") from exc
        return out


class ExternalDecoderSource:
    """Optional backend shelling out to ffprobe/ffmpeg for real containers.

    Only constructed when both binaries are on PATH; I-frame indices come
    from the container's picture types.
    """

    def __init__(self, path: Path):
        self.path = Path(path)
        if not self.path.is_file():
            raise UnreadableSource(f"{self.path} is not a file")
        if not (shutil.which("ffprobe") and shutil.which("ffmpeg")):
            raise UnreadableSource("ffprobe/ffmpeg not available for container decoding")
        self._meta = self._probe_container()

    def _probe_container(self) -> VideoMeta:
        cmd = [
            "ffprobe", "-v", "error", "-select_streams", "v:0",
            "-show_entries", "frame=pict_type", "-show_entries", "stream=r_frame_rate",
            "-of", "json", str(self.path),
        ]
        try:
            out = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
            data = json.loads(out)
            frames = data.get("frames", [])
            rate = data["streams"][0]["r_frame_rate"]
            num, den = (int(x) for x in rate.split("/"))
        except (subprocess.CalledProcessError, KeyError, ValueError, IndexError) as exc:
            raise UnreadableSource(f"ffprobe failed on {self.path}: {exc}") from exc
        if not frames:
            raise EmptyVideo(f"{self.path} holds no video frames")
        iframes = tuple(i for i, f in enumerate(frames) if f.get("pict_type") == "I")
        return VideoMeta(
            frame_count=len(frames),
            fps=Fraction(num, den),
            iframe_indices=iframes or tuple(range(len(frames))),
            source_id=str(self.path),
        )

    @property
    def source_id(self) -> str:
        return str(self.path)

    def probe(self) -> VideoMeta:
        return self._meta

    def decode(self, indices) -> list[np.ndarray]:
        out = []
        for i in indices:
            if not 0 <= i < self._meta.frame_count:
                raise IndexOutOfRange(f"frame {i} outside [0, {self._meta.frame_count})")
            cmd = [
                "ffmpeg", "-v", "error", "-i", str(self.path),
                "-vf", f"select=eq(n\\,{int(i)})", "-vframes", "1",
                "-f", "rawvideo", "-pix_fmt", "rgb24", "-",
            ]
            proc = subprocess.run(cmd, capture_output=True)
            if proc.returncode != 0 or not proc.stdout:
                raise DecodeFailure(f"ffmpeg could not extract frame {i} of {self.path}")
            # frame dimensions probed lazily from payload size is fragile;
            # ask ffprobe once instead
            w, h = self._dimensions()
            out.append(np.frombuffer(proc.stdout, dtype=np.uint8).reshape(h, w, 3).copy())
        return out

    def _dimensions(self) -> tuple[int, int]:
        cmd = [
            "ffprobe", "-v", "error", "-select_streams", "v:0",
            "-show_entries", "stream=width,height", "-of", "json", str(self.path),
        ]
        data = json.loads(subprocess.run(cmd, capture_output=True, text=True, check=True).stdout)
        s = data["streams"][0]
        return int(s["width"]), int(s["height"])


def open_source(source):
    """Resolve ``source`` to a backend object.

    Accepts an existing backend, a SynthSpec, or a path. Paths that are
    directories use the frames-dir backend; files fall through to the
    external decoder.
    """
    if isinstance(source, (SyntheticSource, FramesDirSource, ExternalDecoderSource)):
        return source
    if isinstance(source, SynthSpec):
        return SyntheticSource(source)
    path = Path(source)
    if path.is_dir():
        return FramesDirSource(path)
    if path.is_file():
        return ExternalDecoderSource(path)
    raise UnreadableSource(f"cannot resolve video source {source!r}")


def probe(source) -> VideoMeta:
    """Enumerate frames and I-frames of ``source``."""
    return open_source(source).probe()


def decode_frames(source, indices) -> list[np.ndarray]:
    """Decode ``indices`` (in order) as HxWx3 uint8 arrays."""
    return open_source(source).decode(indices)


def synth_video(spec: SynthSpec) -> SyntheticSource:
    """Build a deterministic synthetic source for ``spec``."""
    return SyntheticSource(spec)


def select_keyframes(meta: VideoMeta, k: int) -> list[int]:
    """Evenly sample ``k`` keyframes from the I-frame index.

    Endpoint-inclusive linear spacing over the index; if fewer than ``k``
    I-frames exist, falls back to uniform sampling over all frames and
    logs a diagnostic.
    """
    if k < 1:
        raise BadArity(f"k must be >= 1, got {k}")
    iframes = meta.iframe_indices
    if len(iframes) >= k:
        pool = list(iframes)
    else:
        log.warning(
            "%s: only %d I-frames for k=%d keyframes, sampling uniformly over all %d frames",
            meta.source_id, len(iframes), k, meta.frame_count,
        )
        pool = list(range(meta.frame_count))
        if len(pool) < k:
            # tiny videos: allow repeats rather than fail
            return [pool[_round_half_up(j * (len(pool) - 1) / max(k - 1, 1))] for j in range(k)]
    m = len(pool)
    if k == 1:
        return [pool[_round_half_up((m - 1) / 2)]]
    return [pool[_round_half_up(j * (m - 1) / (k - 1))] for j in range(k)]


def _interval_sample(lo: int, hi: int, iframes, need: int, rng: np.random.Generator,
                     nearest: int) -> tuple[list[int], bool]:
    """Sample ``need`` frames from the open pixel-interval (lo, hi).

    Preference order: I-frames inside the interval, then arbitrary frames
    inside it, then duplicates of the nearest in-range frame (clamped).
    """
    candidates = [i for i in iframes if lo < i < hi]
    clamped = False
    if len(candidates) >= need:
        picked = list(rng.choice(candidates, size=need, replace=False))
    else:
        picked = list(candidates)
        fill = [i for i in range(lo + 1, hi) if i not in set(picked)]
        extra = min(need - len(picked), len(fill))
        if extra > 0:
            picked += list(rng.choice(fill, size=extra, replace=False))
        while len(picked) < need:
            picked.append(nearest)
            clamped = True
    return sorted(int(i) for i in picked), clamped


def select_prompts(meta: VideoMeta, keyframes: list[int], i: int, n: int,
                   rng: np.random.Generator) -> FrameGroup:
    """Sample the temporal-prompt frames around keyframe ``i``.

    n/2 frames come from the open interval between the previous keyframe
    and this one, n/2 from the interval up to the next keyframe; the video
    start/end stand in at the boundaries.
    """
    if n < 2 or n % 2 != 0:
        raise BadArity(f"prompt count must be even and >= 2, got {n}")
    if not 0 <= i < len(keyframes):
        raise IndexOutOfRange(f"keyframe rank {i} outside [0, {len(keyframes)})")
    key = keyframes[i]
    half = n // 2

    # open intervals; -1 / frame_count act as virtual bounds so the video
    # start and end are themselves eligible
    prev_bound = keyframes[i - 1] if i > 0 else -1
    next_bound = keyframes[i + 1] if i + 1 < len(keyframes) else meta.frame_count

    before, clamp_b = _interval_sample(
        prev_bound, key, meta.iframe_indices, half, rng, nearest=max(key - 1, 0))
    after, clamp_a = _interval_sample(
        key, next_bound, meta.iframe_indices, half, rng,
        nearest=min(key + 1, meta.frame_count - 1))

    return FrameGroup(
        keyframe_index=key,
        prompt_indices=tuple(before + after),
        group_rank=i,
        boundary_clamped=clamp_b or clamp_a,
    )


def frame_groups(meta: VideoMeta, num_groups: int, n_prompts: int,
                 rng: np.random.Generator) -> list[FrameGroup]:
    """Keyframe selection plus prompt sampling for every group of a video."""
    keys = select_keyframes(meta, num_groups)
    return [select_prompts(meta, keys, i, n_prompts, rng) for i in range(num_groups)]


def write_frames_dir(source, out_dir: Path, indices=None) -> Path:
    """Serialize a source to the frames-directory format."""
    backend = open_source(source)
    meta = backend.probe()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if indices is None:
        indices = range(meta.frame_count)
    for i in indices:
        frame = backend.decode([i])[0]
        Image.fromarray(frame).save(out_dir / f"{i:06d}.png")
    index = {
        "fps": [meta.fps.numerator, meta.fps.denominator],
        "iframes": list(meta.iframe_indices),
    }
    (out_dir / "index.json").write_text(json.dumps(index, indent=2) + "\n")
    return out_dir
