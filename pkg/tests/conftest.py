import json

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def make_frames_dir(tmp_path):
    """Factory writing a frames directory with optional index.json."""

    def build(frame_count, iframes=None, fps=(30, 1), size=(8, 8), name="vid"):
        d = tmp_path / name
        d.mkdir()
        rng = np.random.default_rng(0)
        for i in range(frame_count):
            img = rng.integers(0, 256, size=(size[0], size[1], 3), dtype=np.uint8)
            Image.fromarray(img).save(d / f"{i:06d}.png")
        if iframes is not None or fps is not None:
            index = {"fps": list(fps)}
            if iframes is not None:
                index["iframes"] = list(iframes)
            (d / "index.json").write_text(json.dumps(index))
        return d

    return build
