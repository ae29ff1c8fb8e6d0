"""Deterministic payload camera: renders an id-stamped test scene.

The scene is color bars over a grayscale ramp with the capture id encoded
as a binary strip along the bottom edge. Quality parameters model the
sensor: optional box blur (optics) followed by Gaussian noise, both seeded
so every capture is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sstv import BARS_75, HEIGHT, WIDTH, ImageRaster

BARS_ROWS = 160          # top band
GRADIENT_ROWS = 56       # middle band
ID_STRIP_ROWS = HEIGHT - BARS_ROWS - GRADIENT_ROWS   # bottom band, 24 rows
ID_BITS = 16


@dataclass(frozen=True)
class CameraQuality:
    noise_sigma: float = 0.0
    blur_radius: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.blur_radius < 0:
            raise ValueError("blur_radius must be nonnegative")


def _box_blur(channel: np.ndarray, radius: int) -> np.ndarray:
    """Separable box blur with edge clamping."""
    size = 2 * radius + 1
    kernel = np.ones(size) / size
    padded = np.pad(channel, ((radius, radius), (radius, radius)), mode="edge")
    rows = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="valid"), 1, padded)
    return np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), 0, rows)


def render_scene(image_id: int, quality: CameraQuality = CameraQuality(),
                 seed: int = 0) -> ImageRaster:
    """Test image for one capture; pure function of (id, quality, seed)."""
    img = np.zeros((HEIGHT, WIDTH, 3), dtype=np.float64)

    edges = np.linspace(0, WIDTH, len(BARS_75) + 1).astype(int)
    for i, color in enumerate(BARS_75):
        img[:BARS_ROWS, edges[i]:edges[i + 1]] = color

    ramp = np.linspace(0, 255, WIDTH)
    img[BARS_ROWS:BARS_ROWS + GRADIENT_ROWS] = ramp[None, :, None]

    strip = np.zeros((ID_STRIP_ROWS, WIDTH))
    block = WIDTH // ID_BITS
    for bit in range(ID_BITS):
        on = (image_id >> (ID_BITS - 1 - bit)) & 1
        strip[:, bit * block:(bit + 1) * block] = 255 if on else 32
    img[BARS_ROWS + GRADIENT_ROWS:] = strip[..., None]

    if quality.blur_radius > 0:
        for ch in range(3):
            img[..., ch] = _box_blur(img[..., ch], quality.blur_radius)
    if quality.noise_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([seed & 0x7FFFFFFF, image_id])))
        img = img + rng.normal(0.0, quality.noise_sigma, img.shape)

    return ImageRaster(np.clip(np.round(img), 0, 255).astype(np.uint8))


def read_id_strip(raster: ImageRaster) -> int:
    """Recover the stamped id from a clean rendering (test helper)."""
    strip = raster.pixels[BARS_ROWS + GRADIENT_ROWS:, :, 0].astype(np.float64)
    block = WIDTH // ID_BITS
    value = 0
    for bit in range(ID_BITS):
        mean = strip[:, bit * block:(bit + 1) * block].mean()
        value = (value << 1) | (1 if mean > 128 else 0)
    return value
