"""Critic-ranked top-k selection, recall@k, a chance baseline and a well-formedness check."""
from dataclasses import dataclass

import numpy as np

from .numerics import no_grad
from .vocab import ATTRIBUTE, ATTRIBUTE_PREDICATE, OBJECT, RELATION, Triple

DEFAULT_KS = (20, 50, 100)
DEFAULT_SAMPLES = 500


class UndefinedMetricError(ValueError):
    """recall@k against an empty ground-truth set."""


@dataclass(frozen=True)
class RankedTriple:
    triple: Triple
    score: float


def _order_key(item):
    return (-item.score, tuple(item.triple))


def rank_scored(pairs):
    """Deduplicate ``(triple, score)`` pairs keeping the best score, then sort.

    Order is descending score, ties by ascending triple.
    """
    best = {}
    for triple, score in pairs:
        triple = Triple(*triple)
        score = float(score)
        if triple not in best or score > best[triple]:
            best[triple] = score
    return sorted((RankedTriple(t, s) for t, s in best.items()), key=_order_key)


def score_samples(samples, critic, X):
    """Critic scores for samples generated from one (L, D) feature grid."""
    soft = np.array([s.soft for s in samples])
    grid = np.broadcast_to(np.asarray(X, dtype=np.float64), (len(samples),) + np.shape(X))
    with no_grad():
        return critic.score(soft, grid).data.copy()


def rank_triples(samples, critic=None, X=None):
    """Ranked unique triples of ``samples``.

    With a critic, each sample's soft vectors are scored against ``X``;
    otherwise the samples' own ``score`` fields are used.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("nothing to rank")
    if critic is not None:
        scores = score_samples(samples, critic, X)
        for s, v in zip(samples, scores):
            s.score = float(v)
    return rank_scored((s.triple, s.score) for s in samples)


def top_k(ranked, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    return [r.triple if isinstance(r, RankedTriple) else Triple(*r) for r in ranked[:k]]


def recall_at_k(ranked, ground_truth, k):
    """Percentage of ground-truth triples among the first ``k`` ranked ones."""
    truth = {Triple(*t) for t in ground_truth}
    if not truth:
        raise UndefinedMetricError("recall is undefined for an empty ground truth")
    hits = truth.intersection(top_k(ranked, k))
    return 100.0 * len(hits) / len(truth)


def random_baseline(vocabulary, ground_truth, k, rng, trials=100):
    """Mean recall@k of ``k`` distinct uniformly random triples over ``trials`` draws."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    size = vocabulary if isinstance(vocabulary, int) else len(vocabulary)
    total = size**3
    truth = {Triple(*t) for t in ground_truth}
    if not truth:
        raise UndefinedMetricError("recall is undefined for an empty ground truth")
    codes = {(s * size + p) * size + o for s, p, o in truth}
    acc = 0.0
    for _ in range(trials):
        if k >= total:
            drawn = codes
        elif 4 * k > total:
            drawn = set(rng.permutation(total)[:k].tolist())
        else:
            drawn = set()
            while len(drawn) < k:
                drawn.update(rng.integers(total, (k - len(drawn),)).tolist())
        acc += 100.0 * len(codes & drawn) / len(codes)
    return acc / trials


def is_well_formed(triple, vocabulary, attribute_predicate=ATTRIBUTE_PREDICATE):
    """(object, relation, object) or (object, attribute predicate, attribute)."""
    s, p, o = triple
    if vocabulary.category(s) != OBJECT:
        return False
    if vocabulary.lexeme(p) == attribute_predicate:
        return vocabulary.category(o) == ATTRIBUTE
    return vocabulary.category(p) == RELATION and vocabulary.category(o) == OBJECT


def category_violation_rate(triples, vocabulary, attribute_predicate=ATTRIBUTE_PREDICATE):
    triples = list(triples)
    if not triples:
        raise ValueError("violation rate of an empty triple list is undefined")
    bad = sum(not is_well_formed(t, vocabulary, attribute_predicate) for t in triples)
    return bad / len(triples)


# --- corpus-level report --------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    image_id: str
    k: int
    recall: float
    baseline: float
    violation: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple
    samples_per_image: int

    def ks(self):
        return sorted({r.k for r in self.rows})

    def mean(self, k):
        sel = [r for r in self.rows if r.k == k]
        if not sel:
            raise KeyError(k)
        return ReportRow(
            "MEAN",
            k,
            float(np.mean([r.recall for r in sel])),
            float(np.mean([r.baseline for r in sel])),
            float(np.mean([r.violation for r in sel])),
        )

    def to_text(self):
        lines = [_row_text(r) for r in self.rows]
        lines += [_row_text(self.mean(k)) for k in self.ks()]
        return "".join(lines)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())


def _row_text(r):
    return f"{r.image_id}\t{r.k}\t{r.recall!r}\t{r.baseline!r}\t{r.violation!r}\n"


def parse_report(text):
    rows = []
    for line in text.splitlines():
        if line:
            iid, k, rec, base, viol = line.split("\t")
            rows.append(ReportRow(iid, int(k), float(rec), float(base), float(viol)))
    return rows


def evaluate_images(image_ids, grids, truths, generator, critic, vocabulary, rng,
                    ks=DEFAULT_KS, samples_per_image=DEFAULT_SAMPLES, baseline_rng=None,
                    baseline_trials=100):
    """Sample, rank and score every image; returns an :class:`EvalReport`.

    ``grids`` are standardized (L, D) feature grids, ``truths`` sets of id
    triples. Randomness comes from ``rng`` (sampling) and ``baseline_rng``.
    """
    from .generator import sample_triples

    baseline_rng = baseline_rng or rng.spawn(rng.stream + 1)
    rows = []
    for iid, X, truth in zip(image_ids, grids, truths):
        samples = sample_triples(X, samples_per_image, rng, generator)
        ranked = rank_triples(samples, critic, X)
        for k in ks:
            rows.append(
                ReportRow(
                    iid,
                    k,
                    recall_at_k(ranked, truth, k),
                    random_baseline(vocabulary, truth, k, baseline_rng, baseline_trials),
                    category_violation_rate(top_k(ranked, k), vocabulary),
                )
            )
    return EvalReport(tuple(rows), samples_per_image)
