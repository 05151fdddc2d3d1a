"""Synthetic scenes of colored shapes on a grid, with exact ground truth.

Each entity sits alone in one layout cell, so its region is known exactly
and relations follow from cell coordinates.
"""
import os
from dataclasses import dataclass, field, fields

import numpy as np
from PIL import Image

from .numerics import SeededRng
from .vocab import (
    ATTRIBUTE,
    ATTRIBUTE_PREDICATE,
    OBJECT,
    RELATION,
    Vocabulary,
    build_vocabulary,
    write_triples,
)

SHAPES = ("square", "circle", "triangle")
COLORS = {
    "red": (255, 0, 0),
    "green": (0, 255, 0),
    "blue": (0, 0, 255),
    "yellow": (255, 255, 0),
    "white": (255, 255, 255),
    "gray": (128, 128, 128),
}
BACKGROUND = (0, 0, 0)
RELATIONS = ("left-of", "above", "near")


class SceneConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 64
    grid_rows: int = 4
    grid_cols: int = 4
    min_entities: int = 2
    max_entities: int = 4
    sizes: tuple = (10, 12, 14)

    @property
    def cell_height(self):
        return self.height // self.grid_rows

    @property
    def cell_width(self):
        return self.width // self.grid_cols

    def validate(self):
        if self.height % self.grid_rows or self.width % self.grid_cols:
            raise SceneConfigError("layout grid must divide the canvas")
        if not 1 <= self.min_entities <= self.max_entities:
            raise SceneConfigError("need 1 <= min_entities <= max_entities")
        if self.max_entities > self.grid_rows * self.grid_cols:
            raise SceneConfigError(
                f"{self.max_entities} entities do not fit a "
                f"{self.grid_rows}x{self.grid_cols} grid"
            )
        limit = min(self.cell_height, self.cell_width) - 2
        if not self.sizes or any(s < 2 or s > limit for s in self.sizes):
            raise SceneConfigError(f"shape sizes must lie in [2, {limit}]")
        return self


@dataclass(frozen=True)
class Entity:
    shape: str
    color: str
    row: int
    col: int
    size: int


@dataclass(frozen=True)
class Scene:
    entities: tuple
    config: SceneConfig = field(default_factory=SceneConfig)


@dataclass(frozen=True)
class GroundTruth:
    """Triple instances linked to entity indices, plus region masks.

    ``attributes`` holds ``(entity, triple)``; ``relations`` holds
    ``(subject_entity, object_entity, triple)``; triples are lexeme strings.
    """

    attributes: tuple
    relations: tuple
    masks: np.ndarray

    @property
    def triples(self):
        """Deduplicated triple set in sorted order."""
        items = {t for _, t in self.attributes} | {t for _, _, t in self.relations}
        return sorted(items)


def default_vocabulary():
    lexemes = list(SHAPES) + list(RELATIONS) + [ATTRIBUTE_PREDICATE] + list(COLORS)
    cats = [OBJECT] * len(SHAPES) + [RELATION] * (len(RELATIONS) + 1) + [ATTRIBUTE] * len(COLORS)
    return Vocabulary(tuple(lexemes), tuple(cats))


def sample_scene(rng, config=None):
    config = (config or SceneConfig()).validate()
    span = config.max_entities - config.min_entities + 1
    count = config.min_entities + rng.integers(span)
    cells = rng.permutation(config.grid_rows * config.grid_cols)[:count]
    shapes = rng.integers(len(SHAPES), (count,))
    colors = rng.integers(len(COLORS), (count,))
    sizes = rng.integers(len(config.sizes), (count,))
    names = list(COLORS)
    entities = tuple(
        Entity(
            SHAPES[shapes[k]],
            names[colors[k]],
            int(cells[k]) // config.grid_cols,
            int(cells[k]) % config.grid_cols,
            int(config.sizes[sizes[k]]),
        )
        for k in range(count)
    )
    return Scene(entities, config)


def relation_between(a, b):
    """Predicate for the ordered pair (a, b), or None."""
    if a.row == b.row and a.col < b.col:
        return "left-of"
    if a.col == b.col and a.row < b.row:
        return "above"
    aligned = a.row == b.row or a.col == b.col
    if max(abs(a.row - b.row), abs(a.col - b.col)) == 1 and not aligned:
        return "near"
    return None


def ground_truth_triples(scene, feature_grid=None):
    ents = scene.entities
    attributes = tuple((k, (e.shape, ATTRIBUTE_PREDICATE, e.color)) for k, e in enumerate(ents))
    relations = []
    for i, a in enumerate(ents):
        for j, b in enumerate(ents):
            if i == j:
                continue
            pred = relation_between(a, b)
            if pred is not None:
                relations.append((i, j, (a.shape, pred, b.shape)))
    grid = feature_grid or (scene.config.grid_rows, scene.config.grid_cols)
    masks = np.array([region_mask(scene, k, grid) for k in range(len(ents))]).reshape(len(ents), -1)
    return GroundTruth(attributes, tuple(relations), masks)


def _shape_mask(shape, size, cy, cx, ys, xs):
    dy = ys + 0.5 - cy
    dx = xs + 0.5 - cx
    half = size / 2.0
    if shape == "square":
        return (np.abs(dx) < half) & (np.abs(dy) < half)
    if shape == "circle":
        return dx * dx + dy * dy < half * half
    if shape == "triangle":
        depth = dy + half
        return (depth > 0) & (depth < size) & (np.abs(dx) < depth / 2.0)
    raise ValueError(f"unknown shape {shape!r}")


def render(scene, height=None, width=None):
    """Rasterize to an (H, W, 3) float array with 8-bit-exact values in [0, 1]."""
    cfg = scene.config
    height = height or cfg.height
    width = width or cfg.width
    if height % cfg.grid_rows or width % cfg.grid_cols:
        raise SceneConfigError("layout grid must divide the canvas")
    ch, cw = height // cfg.grid_rows, width // cfg.grid_cols
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    ys, xs = np.mgrid[0:ch, 0:cw]
    for e in scene.entities:
        inside = _shape_mask(e.shape, e.size, ch / 2.0, cw / 2.0, ys, xs)
        block = img[e.row * ch:(e.row + 1) * ch, e.col * cw:(e.col + 1) * cw]
        block[inside] = COLORS[e.color]
    return img.astype(np.float64) / 255.0


def _feature_grid_shape(L, cfg):
    if isinstance(L, tuple):
        rows, cols = L
    else:
        rows = int(round(np.sqrt(L)))
        cols = rows
        if rows * cols != L:
            raise SceneConfigError(f"L={L} is not a square feature grid; pass (rows, cols)")
    if cfg.height % rows or cfg.width % cols:
        raise SceneConfigError(f"feature grid {rows}x{cols} does not match the {cfg.height}x{cfg.width} layout")
    return rows, cols


def region_mask(scene, entity, L):
    """{0,1} mask over feature cells that overlap the entity's layout cell.

    ``L`` is the feature cell count of a square grid, or ``(rows, cols)``.
    """
    cfg = scene.config
    rows, cols = _feature_grid_shape(L, cfg)
    e = scene.entities[entity]
    y0, y1 = e.row * cfg.cell_height, (e.row + 1) * cfg.cell_height
    x0, x1 = e.col * cfg.cell_width, (e.col + 1) * cfg.cell_width
    fh, fw = cfg.height // rows, cfg.width // cols
    mask = np.zeros((rows, cols))
    for r in range(rows):
        for c in range(cols):
            if r * fh < y1 and (r + 1) * fh > y0 and c * fw < x1 and (c + 1) * fw > x0:
                mask[r, c] = 1.0
    return mask.reshape(-1)


# --- corpus on disk -----------------------------------------------------------

def image_id(index):
    return f"{index:06d}"


def save_image(path, image):
    Image.fromarray(np.round(image * 255.0).astype(np.uint8), mode="RGB").save(path, format="PNG")


def load_image(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def config_to_text(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {','.join(map(str, v)) if isinstance(v, tuple) else v}")
    return "\n".join(lines) + "\n"


def config_from_text(text):
    kw = {}
    names = {f.name for f in fields(SceneConfig)}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = (s.strip() for s in line.partition("="))
        if key not in names:
            raise SceneConfigError(f"unknown scene config key {key!r}")
        kw[key] = tuple(int(v) for v in value.split(",")) if key == "sizes" else int(value)
    return SceneConfig(**kw)


def scene_seeds(seed, count):
    """Per-image 64-bit seeds drawn from the corpus seed."""
    return [int(v) for v in SeededRng(seed, stream=1).raw(count)]


def write_corpus(out_dir, count, seed, config=None, feature_grid=(4, 4), caps=(150, 50, 150)):
    """Sample, render and write ``count`` scenes; returns the image ids.

    The vocabulary file is built from the written triples with ``caps``
    (objects, relations, attributes).
    """
    config = (config or SceneConfig()).validate()
    for sub in ("images", "triples", "masks"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    manifest = []
    all_triples = []
    for k, s in enumerate(scene_seeds(seed, count)):
        scene = sample_scene(SeededRng(s), config)
        gt = ground_truth_triples(scene, feature_grid)
        iid = image_id(k)
        save_image(os.path.join(out_dir, "images", iid + ".png"), render(scene))
        write_triples(os.path.join(out_dir, "triples", iid + ".tsv"), gt.triples)
        all_triples.extend(gt.triples)
        with open(os.path.join(out_dir, "masks", iid + ".tsv"), "w", newline="\n") as fh:
            for e, m in enumerate(gt.masks):
                fh.write(f"{e}\t{' '.join(str(int(b)) for b in m)}\n")
        manifest.append(f"{iid}\t{len(scene.entities)}\t{s}\n")
    with open(os.path.join(out_dir, "manifest"), "w", newline="\n") as fh:
        fh.writelines(manifest)
    with open(os.path.join(out_dir, "scene.cfg"), "w", newline="\n") as fh:
        fh.write(config_to_text(config))
    build_vocabulary(all_triples, *caps).save(os.path.join(out_dir, "vocab.tsv"))
    return [line.split("\t")[0] for line in manifest]


def read_manifest(corpus_dir):
    rows = []
    with open(os.path.join(corpus_dir, "manifest"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                iid, n, s = line.rstrip("\n").split("\t")
                rows.append((iid, int(n), int(s)))
    return rows


def read_masks(path):
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                _, bits = line.rstrip("\n").split("\t")
                out.append([float(b) for b in bits.split()])
    return np.array(out)


def load_scene_config(corpus_dir):
    with open(os.path.join(corpus_dir, "scene.cfg"), encoding="utf-8") as fh:
        return config_from_text(fh.read())
