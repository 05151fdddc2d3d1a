"""Frozen per-cell image descriptors and their standardization.

Each of the R x C cells yields D = 11 values:
mean RGB (3), RGB standard deviation (3), mean horizontal and vertical
gradient magnitude (2), foreground fraction (1), normalized cell centre (x, y).
Cells are ordered row-major.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .scenes import BACKGROUND

FEATURE_DIM = 11
FOREGROUND_DISTANCE = 0.1
STD_FLOOR = 1e-6
_BACKGROUND = np.array(BACKGROUND, dtype=np.float64) / 255.0


class FeatureError(ValueError):
    pass


def extract_raw(image, grid=(4, 4)):
    """(H, W, 3) image -> (L, 11) unstandardized feature grid."""
    image = np.asarray(image, dtype=np.float64)
    rows, cols = grid
    h, w, _ = image.shape
    if h % rows or w % cols:
        raise FeatureError(f"image {h}x{w} is not divisible into a {rows}x{cols} grid")
    ch, cw = h // rows, w // cols
    # (rows, cols, ch, cw, 3) blocks
    blocks = image.reshape(rows, ch, cols, cw, 3).transpose(0, 2, 1, 3, 4)
    mean_rgb = blocks.mean(axis=(2, 3))
    std_rgb = blocks.std(axis=(2, 3))
    # differences stay inside a cell so each cell only sees its own pixels
    gx = np.abs(np.diff(blocks, axis=3)).mean(axis=4).sum(axis=(2, 3)) / (ch * cw)
    gy = np.abs(np.diff(blocks, axis=2)).mean(axis=4).sum(axis=(2, 3)) / (ch * cw)
    dist = np.sqrt(((blocks - _BACKGROUND) ** 2).sum(axis=4))
    fg = (dist > FOREGROUND_DISTANCE).mean(axis=(2, 3))
    cy, cx = np.meshgrid((np.arange(rows) + 0.5) / rows, (np.arange(cols) + 0.5) / cols, indexing="ij")
    feats = np.concatenate(
        [mean_rgb, std_rgb, gx[..., None], gy[..., None], fg[..., None], cx[..., None], cy[..., None]],
        axis=-1,
    )
    return feats.reshape(rows * cols, FEATURE_DIM)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, grid):
        return (np.asarray(grid, dtype=np.float64) - self.mean) / self.std


def fit_standardizer(grids):
    """Pooled per-dimension mean and (population) std over all cells of all grids."""
    grids = [np.asarray(g, dtype=np.float64) for g in grids]
    if not grids:
        raise FeatureError("cannot fit a standardizer on an empty set")
    if len(grids) < 2:
        raise FeatureError("need at least two training grids")
    pooled = np.concatenate(grids, axis=0)
    mean = pooled.mean(axis=0)
    std = np.maximum(pooled.std(axis=0), STD_FLOOR)
    return Standardizer(mean, std)


def apply(standardizer, grid):
    return standardizer.apply(grid)


# --- cached feature file ---------------------------------------------------------

_MAGIC = b"TGFEAT\x00\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIII")


def write_feature_cache(path, grids):
    grids = np.asarray(grids, dtype="<f8")
    n, L, D = grids.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, L, D))
        fh.write(grids.tobytes(order="C"))


def read_feature_cache(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FeatureError("truncated feature cache")
        magic, version, L, D = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise FeatureError("not a feature cache file")
        if version != _VERSION:
            raise FeatureError(f"feature cache version {version} unsupported")
        body = fh.read()
    if len(body) % (8 * L * D):
        raise FeatureError("feature cache body is not a whole number of grids")
    return np.frombuffer(body, dtype="<f8").reshape(-1, L, D).astype(np.float64)
