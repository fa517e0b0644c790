"""Representative-color extraction and initial point coloring.

Pixels from all dataset images, downscaled to a small working height, are
clustered with Lloyd's algorithm (k-means++ seeding, k = 3 by default); each
sampled point then draws one of the cluster centers at random. All
randomness flows through the portable seeded generator so palettes and
assignments are identical across runs and platforms.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NoImages, TooFewPixels, UndecodableImage
from .rng import DeterministicRng

DEFAULT_K = 3
DEFAULT_SEED = 42
DEFAULT_TARGET_HEIGHT = 140


@dataclass(eq=False)
class PixelSet:
    colors: np.ndarray   # (N, 3) float64 RGB in [0, 255]
    source_image_count: int

    def __len__(self) -> int:
        return len(self.colors)


@dataclass(eq=False)
class ColorPalette:
    centers: np.ndarray            # (k, 3) float64
    sizes: np.ndarray              # (k,) int64 cluster populations
    k: int
    objective_history: list = field(default_factory=list)

    def quantized(self) -> np.ndarray:
        return np.clip(np.rint(self.centers), 0, 255).astype(np.uint8)


def load_images(paths) -> list:
    """Decode JPEG/PNG files to RGB uint8 arrays; raises with the offending filename."""
    from PIL import Image

    images = []
    for path in paths:
        try:
            with Image.open(path) as im:
                images.append(np.asarray(im.convert("RGB"), dtype=np.uint8))
        except Exception as exc:
            raise UndecodableImage(f"{path}: {exc}") from exc
    return images


def _area_resample_axis(arr: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    """Exact area-average resampling along one axis.

    Output bin i averages the source interval [i*n/new_len, (i+1)*n/new_len);
    implemented through the piecewise-linear cumulative integral so fractional
    bin edges weight border pixels by their overlap.
    """
    arr = np.moveaxis(arr, axis, 0).astype(np.float64)
    n = arr.shape[0]
    cum = np.concatenate([np.zeros((1,) + arr.shape[1:]), np.cumsum(arr, axis=0)], axis=0)
    edges = np.arange(new_len + 1, dtype=np.float64) * (n / new_len)
    edges[-1] = n
    idx = np.minimum(np.floor(edges).astype(np.int64), n)
    frac = edges - idx
    vals = cum[idx]
    inner = frac > 0
    if inner.any():
        frac_shaped = frac[inner].reshape((-1,) + (1,) * (arr.ndim - 1))
        vals[inner] += frac_shaped * arr[idx[inner]]
    block = (vals[1:] - vals[:-1]) / np.diff(edges).reshape((-1,) + (1,) * (arr.ndim - 1))
    return np.moveaxis(block, 0, axis)


def downscale_image(img: np.ndarray, target_height: int) -> np.ndarray:
    """Area-average an RGB image to the target height, preserving the aspect ratio."""
    h, w = img.shape[:2]
    target_width = max(1, int(np.floor(w * target_height / h + 0.5)))
    out = _area_resample_axis(img, target_height, axis=0)
    return _area_resample_axis(out, target_width, axis=1)


def collect_pixels(images, target_height: int = DEFAULT_TARGET_HEIGHT) -> PixelSet:
    """Downscale every image to target_height and pool all their pixels."""
    if not images:
        raise NoImages("need at least one image to pick colors from")
    if target_height < 1:
        raise ValueError("target_height must be >= 1")
    chunks = []
    for img in images:
        img = np.asarray(img)
        if img.ndim == 2:
            img = np.repeat(img[:, :, None], 3, axis=2)
        small = downscale_image(img, target_height)
        chunks.append(small.reshape(-1, 3))
    return PixelSet(colors=np.concatenate(chunks, axis=0), source_image_count=len(images))


def subsample_pixels(pixels: PixelSet, limit: int, seed: int = DEFAULT_SEED) -> PixelSet:
    """Deterministic random subset of at most `limit` pixels (speed knob)."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    n = len(pixels)
    if n <= limit:
        return pixels
    rng = DeterministicRng(seed)
    order = np.argsort(rng.next_u64(n), kind="stable")
    return PixelSet(colors=pixels.colors[np.sort(order[:limit])],
                    source_image_count=pixels.source_image_count)


def _plus_plus_seeding(colors: np.ndarray, k: int, rng: DeterministicRng) -> np.ndarray:
    n = len(colors)
    centers = np.empty((k, 3), dtype=np.float64)
    centers[0] = colors[int(rng.integers(1, n)[0])]
    if k == 1:
        return centers
    d2 = np.sum((colors - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(1, n)[0])
        else:
            u = float(rng.uniform(1)[0]) * total
            idx = min(int(np.searchsorted(np.cumsum(d2), u, side="right")), n - 1)
        centers[j] = colors[idx]
        if j + 1 < k:
            np.minimum(d2, np.sum((colors - centers[j]) ** 2, axis=1), out=d2)
    return centers


def kmeans_colors(
    pixels: PixelSet,
    k: int = DEFAULT_K,
    seed: int = DEFAULT_SEED,
    max_iters: int = 100,
    tol: float = 1e-3,
) -> ColorPalette:
    """Lloyd iterations in real-valued RGB space.

    Stops when the largest center movement drops below tol (RGB units) or
    after max_iters. Clusters that empty out are re-seeded to the pixel
    farthest from its current center. The within-cluster squared distance is
    checked to be non-increasing at every assignment step.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    colors = np.asarray(pixels.colors, dtype=np.float64).reshape(-1, 3)
    n = len(colors)
    if n < k:
        raise TooFewPixels(f"{n} pixels < k={k}")

    rng = DeterministicRng(seed)
    centers = _plus_plus_seeding(colors, k, rng)
    x2 = np.sum(colors ** 2, axis=1)
    history: list[float] = []
    sizes = np.zeros(k, dtype=np.int64)

    for _ in range(max_iters):
        d2 = x2[:, None] - 2.0 * (colors @ centers.T) + np.sum(centers ** 2, axis=1)[None, :]
        labels = np.argmin(d2, axis=1)
        point_cost = np.maximum(d2[np.arange(n), labels], 0.0)
        objective = float(point_cost.sum())
        if history and objective > history[-1] * (1 + 1e-12) + 1e-9:
            raise AssertionError(
                f"k-means objective increased: {history[-1]} -> {objective}"
            )
        history.append(objective)

        sizes = np.bincount(labels, minlength=k).astype(np.int64)
        new_centers = np.empty_like(centers)
        for d in range(3):
            sums = np.bincount(labels, weights=colors[:, d], minlength=k)
            new_centers[:, d] = np.divide(sums, sizes, out=np.zeros(k), where=sizes > 0)

        empty = np.nonzero(sizes == 0)[0]
        if len(empty):
            farthest = np.argsort(-point_cost, kind="stable")
            for slot, cluster in enumerate(empty):
                new_centers[cluster] = colors[farthest[slot % n]]

        movement = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if movement < tol:
            break

    return ColorPalette(centers=centers, sizes=sizes, k=k, objective_history=history)


def assign_initial_colors(
    n_points: int,
    palette: ColorPalette,
    seed: int = DEFAULT_SEED,
    single_color: bool = False,
) -> np.ndarray:
    """Per-point uniform draw from the palette (or one shared draw), as uint8.

    single_color=True implements the one-color-for-the-whole-cloud reading.
    """
    if n_points < 0:
        raise ValueError("n_points must be >= 0")
    quantized = palette.quantized()
    if n_points == 0:
        return np.empty((0, 3), dtype=np.uint8)
    rng = DeterministicRng(seed)
    if single_color:
        idx = np.full(n_points, int(rng.integers(1, palette.k)[0]), dtype=np.int64)
    else:
        idx = rng.integers(n_points, palette.k)
    return quantized[idx]
