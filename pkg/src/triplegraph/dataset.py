"""A corpus directory as arrays: feature grids, ground-truth triples and splits."""
import os
from dataclasses import dataclass

import numpy as np

from .features import extract_raw, read_feature_cache, write_feature_cache
from .scenes import SceneConfig, load_image, load_scene_config, read_manifest, write_corpus
from .vocab import Vocabulary, read_triples

FEATURE_CACHE = "features.bin"
SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.70, 0.15, 0.15)


@dataclass
class Dataset:
    root: str
    ids: list
    grids: np.ndarray  # (n, L, D) unstandardized
    triples: list  # per image, lexeme-string triples
    vocabulary: Vocabulary
    scene_config: SceneConfig

    def __len__(self):
        return len(self.ids)

    def split_indices(self, fractions=SPLIT_FRACTIONS):
        """Contiguous train/val/test index ranges in manifest order."""
        n = len(self.ids)
        n_train = int(round(fractions[0] * n))
        n_val = int(round(fractions[1] * n))
        bounds = [0, n_train, min(n, n_train + n_val), n]
        return {name: np.arange(bounds[i], bounds[i + 1]) for i, name in enumerate(SPLITS)}

    def truth(self, index):
        """Ground-truth id triples of one image; lexemes outside the vocabulary are skipped."""
        out = set()
        for t in self.triples[index]:
            if all(x in self.vocabulary for x in t):
                out.add(self.vocabulary.encode(t))
        return out


def write_dataset(out_dir, count, seed, config=None, grid=(4, 4)):
    """Write a corpus and its cached raw feature grids."""
    ids = write_corpus(out_dir, count, seed, config, feature_grid=grid)
    grids = [extract_raw(load_image(os.path.join(out_dir, "images", i + ".png")), grid) for i in ids]
    write_feature_cache(os.path.join(out_dir, FEATURE_CACHE), np.array(grids))
    return ids


def load_dataset(root, grid=(4, 4)):
    if not os.path.isfile(os.path.join(root, "manifest")):
        raise FileNotFoundError(f"no corpus manifest under {root}")
    ids = [row[0] for row in read_manifest(root)]
    cache = os.path.join(root, FEATURE_CACHE)
    if os.path.isfile(cache):
        grids = read_feature_cache(cache)
    else:
        grids = np.array(
            [extract_raw(load_image(os.path.join(root, "images", i + ".png")), grid) for i in ids]
        )
    if len(grids) != len(ids):
        raise ValueError(f"feature cache holds {len(grids)} grids for {len(ids)} images")
    triples = [read_triples(os.path.join(root, "triples", i + ".tsv")) for i in ids]
    vocab = Vocabulary.load(os.path.join(root, "vocab.tsv"))
    return Dataset(root, ids, grids, triples, vocab, load_scene_config(root))
