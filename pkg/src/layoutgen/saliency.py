"""Saliency detection for content-aware generation.

A grayscale canvas image is reduced to a single salient region box via the
spectral residual method: suppress the smooth part of the log-amplitude
spectrum, reconstruct with the original phase, and read the squared
magnitude as a saliency map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptySaliencyError, InvalidInputError
from .geometry import BoundingBox, CanvasSpec

#: Side length of the working grid the input image is resampled to.
MAP_SIZE = 64

#: Saliency values strictly above this mark a pixel as salient.
DEFAULT_THRESHOLD = 0.5

_SMOOTH_SIGMA = 2.5


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """A MAP_SIZE x MAP_SIZE grid of saliency values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (MAP_SIZE, MAP_SIZE):
            raise InvalidInputError(
                f"saliency map must be {MAP_SIZE}x{MAP_SIZE}, got {self.values.shape}"
            )
        self.values.setflags(write=False)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def spectral_residual_saliency(image: np.ndarray) -> SaliencyMap:
    """Compute a normalized spectral residual saliency map for a gray image.

    The image is resampled to a MAP_SIZE square grid, its log-amplitude
    spectrum is flattened by subtracting a 3x3 local mean, and the residual
    spectrum is transformed back with the original phase. The squared
    magnitude is blurred and min-max normalized; a perfectly uniform input
    yields an all-zero map.
    """
    if image.ndim != 2:
        raise InvalidInputError(f"expected a 2-D grayscale image, got ndim={image.ndim}")
    if image.size == 0 or min(image.shape) == 0:
        raise InvalidInputError("cannot compute saliency of an empty image")
    grid = np.asarray(image, dtype=np.float64)
    if grid.shape != (MAP_SIZE, MAP_SIZE):
        zoom = (MAP_SIZE / grid.shape[0], MAP_SIZE / grid.shape[1])
        grid = ndimage.zoom(grid, zoom, order=1)
        grid = grid[:MAP_SIZE, :MAP_SIZE]
        if grid.shape != (MAP_SIZE, MAP_SIZE):
            pad = ((0, MAP_SIZE - grid.shape[0]), (0, MAP_SIZE - grid.shape[1]))
            grid = np.pad(grid, pad, mode="edge")

    # A flat image carries no signal; without this check the epsilon floor
    # under the log would manufacture structure out of the lone DC spike and
    # the min-max step would blow it up to full scale.
    spread = float(grid.max()) - float(grid.min())
    if spread <= 1e-12 * max(1.0, abs(float(grid.max()))):
        return SaliencyMap(np.zeros((MAP_SIZE, MAP_SIZE)))

    spectrum = np.fft.fft2(grid)
    amplitude = np.abs(spectrum)
    phase = np.angle(spectrum)
    log_amplitude = np.log(amplitude + 1e-12)
    residual = log_amplitude - ndimage.uniform_filter(log_amplitude, size=3)
    reconstructed = np.fft.ifft2(np.exp(residual + 1j * phase))
    raw = np.abs(reconstructed) ** 2
    smooth = ndimage.gaussian_filter(raw, sigma=_SMOOTH_SIGMA)

    lo = float(smooth.min())
    hi = float(smooth.max())
    if hi - lo <= 0.0:
        return SaliencyMap(np.zeros((MAP_SIZE, MAP_SIZE)))
    return SaliencyMap((smooth - lo) / (hi - lo))


def rectify(
    saliency: SaliencyMap,
    threshold: float,
    canvas: CanvasSpec,
) -> BoundingBox:
    """Tight canvas-coordinate box around every above-threshold pixel.

    The bounding rows/columns of the salient mask are scaled from grid to
    canvas coordinates, flooring the near edges and ceiling the far edges so
    that the returned box always covers the full extent of the region.
    Raises EmptySaliencyError when nothing exceeds the threshold.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold must lie in [0, 1], got {threshold}")
    mask = saliency.values > threshold
    if not mask.any():
        raise EmptySaliencyError(
            f"no saliency above threshold {threshold}; lower it or supply a box"
        )
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    sx = canvas.width / MAP_SIZE
    sy = canvas.height / MAP_SIZE
    left = math.floor(cols[0] * sx)
    top = math.floor(rows[0] * sy)
    right = math.ceil((cols[-1] + 1) * sx)
    bottom = math.ceil((rows[-1] + 1) * sy)
    left = max(0, min(left, canvas.width))
    top = max(0, min(top, canvas.height))
    right = max(left, min(right, canvas.width))
    bottom = max(top, min(bottom, canvas.height))
    return BoundingBox(left=left, top=top, width=right - left, height=bottom - top)


def read_pgm(path: str) -> np.ndarray:
    """Load a binary (P5) PGM file as a float array scaled to [0, 1].

    Handles '#' comments in the header and maxval up to 255.
    """
    with open(path, "rb") as fh:
        data = fh.read()

    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
            continue
        if ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end == -1 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise InvalidInputError(f"{path}: not a binary P5 PGM file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise InvalidInputError(f"{path}: malformed PGM header") from exc
    if width <= 0 or height <= 0:
        raise InvalidInputError(f"{path}: bad PGM dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise InvalidInputError(f"{path}: unsupported PGM maxval {maxval}")
    pos += 1  # single whitespace byte separates header from raster
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise InvalidInputError(f"{path}: truncated PGM raster")
    pixels = np.frombuffer(raster, dtype=np.uint8).reshape(height, width)
    return pixels.astype(np.float64) / maxval
