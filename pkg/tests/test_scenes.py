import os

import numpy as np
import pytest

from triplegraph.numerics import SeededRng
from triplegraph.scenes import (
    COLORS,
    SHAPES,
    Entity,
    SceneConfig,
    SceneConfigError,
    Scene,
    default_vocabulary,
    ground_truth_triples,
    read_manifest,
    region_mask,
    render,
    sample_scene,
    write_corpus,
)


def _scene(*ents):
    return Scene(tuple(ents), SceneConfig())


def test_single_entity_config():
    cfg = SceneConfig(min_entities=1, max_entities=1)
    for s in range(20):
        assert len(sample_scene(SeededRng(s), cfg).entities) == 1


def test_sample_determinism_and_cells_unique():
    a = sample_scene(SeededRng(42))
    assert a == sample_scene(SeededRng(42))
    for s in range(200):
        sc = sample_scene(SeededRng(s))
        cells = [(e.row, e.col) for e in sc.entities]
        assert len(cells) == len(set(cells))
        assert 2 <= len(cells) <= 4


def test_impossible_config():
    with pytest.raises(SceneConfigError):
        sample_scene(SeededRng(0), SceneConfig(grid_rows=1, grid_cols=2, max_entities=3, height=64, width=64))


def test_color_frequencies_uniform():
    n = 10_000
    counts = np.zeros(len(COLORS))
    names = list(COLORS)
    rng = SeededRng(11)
    for _ in range(n):
        counts[names.index(sample_scene(rng).entities[0].color)] += 1
    p = 1 / 6
    sigma = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) < 3 * sigma)


def test_entity_count_uniform():
    rng = SeededRng(5)
    counts = np.bincount([len(sample_scene(rng).entities) for _ in range(3000)], minlength=5)[2:]
    p = 1 / 3
    assert np.all(np.abs(counts / 3000 - p) < 3 * np.sqrt(p * (1 - p) / 3000))


def test_duplicate_shapes_common():
    rng = SeededRng(9)
    dup = 0
    for _ in range(1000):
        shapes = [e.shape for e in sample_scene(rng).entities]
        dup += len(shapes) != len(set(shapes))
    assert dup / 1000 >= 0.2


def test_ground_truth_single_entity():
    gt = ground_truth_triples(_scene(Entity("square", "red", 2, 1, 12)))
    assert gt.triples == [("square", "is", "red")]


def _rules(a, b):
    """Independent restatement of the three geometric predicates."""
    out = set()
    if a.row == b.row and a.col < b.col:
        out.add("left-of")
    elif a.col == b.col and a.row < b.row:
        out.add("above")
    dr, dc = abs(a.row - b.row), abs(a.col - b.col)
    if dr == 1 and dc == 1:
        out.add("near")
    return out


def test_left_of_and_near_examples():
    sq, ci = Entity("square", "red", 1, 0, 10), Entity("circle", "blue", 1, 2, 10)
    assert ("square", "left-of", "circle") in ground_truth_triples(_scene(sq, ci)).triples
    a, b = Entity("square", "red", 0, 0, 10), Entity("triangle", "gray", 1, 1, 10)
    t = ground_truth_triples(_scene(a, b)).triples
    assert ("square", "near", "triangle") in t and ("triangle", "near", "square") in t


def test_relations_match_independent_rules():
    for s in range(300):
        sc = sample_scene(SeededRng(s))
        gt = ground_truth_triples(sc)
        got = {(i, j, t[1]) for i, j, t in gt.relations}
        want = set()
        for i, a in enumerate(sc.entities):
            for j, b in enumerate(sc.entities):
                if i != j:
                    want |= {(i, j, p) for p in _rules(a, b)}
        assert got == want
        assert len(gt.attributes) == len(sc.entities)
        assert ground_truth_triples(sc).triples == gt.triples


def test_render_background_and_locality():
    empty = render(_scene())
    assert (empty == 0).all()
    img = render(_scene(Entity("square", "red", 0, 0, 14)))
    red = np.all(img == np.array(COLORS["red"]) / 255, axis=-1)
    ys, xs = np.nonzero(red)
    assert ys.max() < 16 and xs.max() < 16
    assert red.sum() == (img.sum(-1) > 0).sum()


@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("size", [10, 12, 14])
def test_render_area(shape, size):
    img = render(_scene(Entity(shape, "green", 1, 1, size)))
    count = (img.sum(-1) > 0).sum()
    area = {"square": size**2, "circle": np.pi * size**2 / 4, "triangle": size**2 / 2}[shape]
    assert abs(count / area - 1) <= 0.05


def test_region_masks():
    sc = _scene(Entity("square", "red", 0, 0, 10), Entity("circle", "red", 3, 2, 10))
    m0, m1 = region_mask(sc, 0, 16), region_mask(sc, 1, 16)
    assert m0.sum() == 1 and m0[0] == 1 and m1[14] == 1
    assert m0 @ m1 == 0
    assert ((m0 + m1) <= 1).all()
    coarse = region_mask(sc, 1, (2, 2))
    np.testing.assert_array_equal(coarse, [0, 0, 0, 1])
    with pytest.raises(SceneConfigError):
        region_mask(sc, 0, 15)
    with pytest.raises(SceneConfigError):
        region_mask(sc, 0, (3, 3))


def test_corpus_files_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    write_corpus(str(a), 12, seed=3)
    write_corpus(str(b), 12, seed=3)
    for root, _, files in os.walk(a):
        for f in files:
            pa = os.path.join(root, f)
            pb = os.path.join(b, os.path.relpath(pa, a))
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                assert fa.read() == fb.read(), pa
    rows = read_manifest(str(a))
    assert len(rows) == 12 and rows[0][0] == "000000"
    # manifest seeds regenerate the scenes
    sc = sample_scene(SeededRng(rows[3][2]))
    assert len(sc.entities) == rows[3][1]
    masks = (a / "masks" / "000003.tsv").read_text().splitlines()
    assert len(masks) == rows[3][1] and len(masks[0].split("\t")[1].split()) == 16


def test_default_vocabulary_size():
    assert len(default_vocabulary()) == 13
