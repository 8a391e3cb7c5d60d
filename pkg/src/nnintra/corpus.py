"""Desk-scale natural-image corpora: seeded crops of scikit-image's bundled photos.

Training and held-out crops come from disjoint source photographs.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .core import Plane, rgb_to_luma

TRAIN_SOURCES = (
    "camera", "astronaut", "coffee", "chelsea", "coins", "moon", "rocket",
    "immunohistochemistry", "grass", "gravel", "brick", "clock", "page",
)
HELDOUT_SOURCES = ("cat", "hubble_deep_field", "retina", "colorwheel", "text", "china", "flower")


@lru_cache(maxsize=None)
def source_luma(name: str) -> np.ndarray:
    if name in ("china", "flower"):
        from sklearn.datasets import load_sample_image

        img = load_sample_image(f"{name}.jpg")
    else:
        import skimage.data

        img = getattr(skimage.data, name)()
    img = np.asarray(img)
    if img.ndim == 3:
        img = rgb_to_luma(img[..., :3])
    return img.astype(np.uint8)


def natural_crops(count: int, size=(64, 64), sources=TRAIN_SOURCES, seed: int = 0) -> list[Plane]:
    """``count`` crops of ``size`` (height, width), cycling through ``sources``."""
    rng = np.random.default_rng(seed)
    h, w = size
    out = []
    for i in range(count):
        img = source_luma(sources[i % len(sources)])
        y = int(rng.integers(0, img.shape[0] - h + 1))
        x = int(rng.integers(0, img.shape[1] - w + 1))
        out.append(Plane(img[y : y + h, x : x + w].copy()))
    return out
