"""Lexeme vocabulary, one-hot coding, and triple files."""
import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

OBJECT = "object"
RELATION = "relation"
ATTRIBUTE = "attribute"
CATEGORIES = (OBJECT, RELATION, ATTRIBUTE)

ATTRIBUTE_PREDICATE = "is"


class VocabularyError(ValueError):
    pass


class Triple(NamedTuple):
    subject: int
    predicate: int
    object: int


@dataclass(frozen=True)
class Vocabulary:
    lexemes: tuple
    categories: tuple

    def __post_init__(self):
        if len(self.lexemes) != len(self.categories):
            raise VocabularyError("one category per lexeme")
        if len(set(self.lexemes)) != len(self.lexemes):
            raise VocabularyError("lexemes must be unique")
        for lex, cat in zip(self.lexemes, self.categories):
            if cat not in CATEGORIES:
                raise VocabularyError(f"unknown category {cat!r} for {lex!r}")
            if not lex or any(ch in lex for ch in "\t\n\r"):
                raise VocabularyError(f"bad lexeme {lex!r}")
        object.__setattr__(self, "_ids", {lex: i for i, lex in enumerate(self.lexemes)})

    def __len__(self):
        return len(self.lexemes)

    def __contains__(self, lexeme):
        return lexeme in self._ids

    def id(self, lexeme):
        try:
            return self._ids[lexeme]
        except KeyError:
            raise VocabularyError(f"unknown lexeme {lexeme!r}") from None

    def lexeme(self, idx):
        return self.lexemes[idx]

    def category(self, idx):
        return self.categories[idx]

    def ids_in(self, category):
        return [i for i, c in enumerate(self.categories) if c == category]

    def encode(self, triple):
        """Lexeme strings -> Triple of ids."""
        return Triple(*(self.id(x) for x in triple))

    def decode(self, triple):
        return tuple(self.lexemes[i] for i in triple)

    def to_text(self):
        return "".join(f"{lex}\t{cat}\n" for lex, cat in zip(self.lexemes, self.categories))

    @classmethod
    def from_text(cls, text):
        lexemes, categories = [], []
        for n, line in enumerate(text.splitlines(), 1):
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise VocabularyError(f"line {n}: expected 'lexeme<TAB>category'")
            lexemes.append(parts[0])
            categories.append(parts[1])
        return cls(tuple(lexemes), tuple(categories))

    def content_hash(self):
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def one_hot(idx, size):
    if not 0 <= idx < size:
        raise VocabularyError(f"id {idx} out of range for vocabulary of size {size}")
    v = np.zeros(size)
    v[idx] = 1.0
    return v


def decode_argmax(v):
    """Index of the largest entry; ties go to the smallest index."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise VocabularyError("cannot decode an empty vector")
    if np.isnan(v).any():
        raise VocabularyError("cannot decode a vector containing NaN")
    return int(np.argmax(v))


def triple_categories(triple, attribute_predicate=ATTRIBUTE_PREDICATE):
    """Categories implied by a triple's positions (lexeme strings)."""
    obj_cat = ATTRIBUTE if triple[1] == attribute_predicate else OBJECT
    return (OBJECT, RELATION, obj_cat)


def build_vocabulary(corpus, top_objects, top_relations, top_attributes,
                     attribute_predicate=ATTRIBUTE_PREDICATE):
    """Keep the most frequent lexemes per category.

    ``corpus`` is an iterable of lexeme-string triples. Categories are read
    off positions: subjects are objects, predicates relations, and the object
    slot of an ``attribute_predicate`` triple is an attribute. Frequency ties
    go to the lexicographically smaller lexeme. Ids are assigned objects
    first, then relations, then attributes, each in retained order.
    """
    counts = {c: Counter() for c in CATEGORIES}
    seen = False
    for triple in corpus:
        seen = True
        for lex, cat in zip(triple, triple_categories(triple, attribute_predicate)):
            counts[cat][lex] += 1
    if not seen:
        raise VocabularyError("cannot build a vocabulary from an empty corpus")
    caps = {OBJECT: top_objects, RELATION: top_relations, ATTRIBUTE: top_attributes}
    lexemes, categories = [], []
    for cat in CATEGORIES:
        ranked = sorted(counts[cat].items(), key=lambda kv: (-kv[1], kv[0]))
        for lex, _ in ranked[: caps[cat]]:
            if lex in lexemes:
                # a lexeme used in two roles keeps its first category
                continue
            lexemes.append(lex)
            categories.append(cat)
    return Vocabulary(tuple(lexemes), tuple(categories))


def format_triples(triples):
    """Lexeme-string triples -> file text, one ``s<TAB>p<TAB>o`` per line."""
    return "".join("\t".join(t) + "\n" for t in triples)


def parse_triples(text):
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise VocabularyError(f"line {n}: expected three tab-separated lexemes")
        out.append(tuple(parts))
    return out


def write_triples(path, triples):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_triples(triples))


def read_triples(path):
    with open(path, encoding="utf-8") as fh:
        return parse_triples(fh.read())
