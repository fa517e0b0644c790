"""PSNR and SSIM over optional bounding-box crops."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import BoxOutOfBounds, DimensionMismatch, TooSmall

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03
_L = 255.0
_LUMA = np.array([0.299, 0.587, 0.114])  # Rec. 601


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("bounding box must be at least 8x8")

    @classmethod
    def parse(cls, text: str) -> "BoundingBox":
        parts = [int(v) for v in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"expected x,y,w,h, got {text!r}")
        return cls(*parts)

    def crop(self, image: np.ndarray) -> np.ndarray:
        h, w = image.shape[:2]
        if self.x < 0 or self.y < 0 or self.x + self.width > w or self.y + self.height > h:
            raise BoxOutOfBounds(f"box {self} does not fit a {w}x{h} image")
        return image[self.y:self.y + self.height, self.x:self.x + self.width]


def _prepare(a, b, bbox):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if bbox is not None:
        a = bbox.crop(a)
        b = bbox.crop(b)
    return a.astype(np.float64), b.astype(np.float64)


def psnr(a, b, bbox: BoundingBox | None = None) -> float:
    """10 log10(255^2 / MSE) over all channels; +inf for identical inputs."""
    a, b = _prepare(a, b, bbox)
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(_L * _L / mse))


def _gaussian_kernel():
    half = (_SSIM_WINDOW - 1) // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * _SSIM_SIGMA ** 2))
    return k / k.sum()


def _window_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # separable filter; interior slice equals a 'valid' convolution
    half = (_SSIM_WINDOW - 1) // 2
    out = correlate1d(img, kernel, axis=0, mode="constant")
    out = correlate1d(out, kernel, axis=1, mode="constant")
    return out[half:-half, half:-half]


def _ssim_plane(x: np.ndarray, y: np.ndarray) -> float:
    kernel = _gaussian_kernel()
    mu_x = _window_mean(x, kernel)
    mu_y = _window_mean(y, kernel)
    var_x = _window_mean(x * x, kernel) - mu_x ** 2
    var_y = _window_mean(y * y, kernel) - mu_y ** 2
    cov_xy = _window_mean(x * y, kernel) - mu_x * mu_y
    c1 = (_K1 * _L) ** 2
    c2 = (_K2 * _L) ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov_xy + c2)) / (
        (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    )
    return float(ssim_map.mean())


def ssim(a, b, bbox: BoundingBox | None = None, luma: bool = True) -> float:
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), valid region only.

    Computed on Rec. 601 luma by default; luma=False averages the per-channel
    values instead.
    """
    a, b = _prepare(a, b, bbox)
    if a.shape[0] < _SSIM_WINDOW or a.shape[1] < _SSIM_WINDOW:
        raise TooSmall(f"need at least {_SSIM_WINDOW}x{_SSIM_WINDOW}, got {a.shape[:2]}")
    if a.ndim == 2:
        return _ssim_plane(a, b)
    if luma:
        return _ssim_plane(a @ _LUMA, b @ _LUMA)
    channels = [_ssim_plane(a[:, :, c], b[:, :, c]) for c in range(a.shape[2])]
    return float(np.mean(channels))
