"""Command-line entry point: ``triplegraph <command> [options]``.

Every command accepts ``--config`` (a ``key = value`` file), ``--seed`` and
``--out-dir``; flags override the file. Failures print one line
``error<TAB><kind><TAB><message>`` on stderr and exit with a code per kind.
"""
import logging
import os
import sys
from dataclasses import dataclass, fields, replace

import click
import numpy as np

from . import __version__
from .dataset import load_dataset, write_dataset
from .evaluate import evaluate_images
from .features import fit_standardizer
from .generator import sample_triples
from .graphbuild import MergeConfig, build_graph, export_dot, format_summary
from .numerics import SeededRng
from .scenes import SceneConfig
from .training import (
    CheckpointError,
    CheckpointVersionError,
    TrainConfig,
    Trainer,
    TrainData,
    TrainingAborted,
    describe,
    train,
)
from .vocab import ATTRIBUTE_PREDICATE

log = logging.getLogger("triplegraph")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_VERSION = 5
EXIT_NUMERIC = 6

SAMPLE_STREAM = 400
EVAL_STREAM = 500
BASELINE_STREAM = 501


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Every tunable of the pipeline, with defaults."""

    images: int = 2000
    corpus: str = ""
    checkpoint: str = ""
    seed: int = 0
    # training
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    adam_eps: float = 1e-8
    gp_weight: float = 10.0
    n_critic: int = 5
    batch_size: int = 32
    steps: int = 3000
    noise_dim: int = 16
    hidden: int = 64
    critic_hidden: int = 64
    embed_dim: int = 32
    attention_hidden: int = 32
    eval_every: int = 500
    eval_images: int = 20
    eval_samples: int = 100
    checkpoint_every: int = 500
    # graph building
    merge_threshold: float = 0.8
    attribute_predicate: str = ATTRIBUTE_PREDICATE
    # evaluation and sampling
    eval_ks: str = "20,50,100"
    eval_split: str = "test"
    samples_per_image: int = 500
    baseline_trials: int = 100
    sample_count: int = 500

    def train_config(self):
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in names})

    def merge_config(self):
        return MergeConfig(self.merge_threshold, self.attribute_predicate or None)

    def ks(self):
        try:
            ks = tuple(int(v) for v in self.eval_ks.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"eval_ks must be comma-separated integers, got {self.eval_ks!r}") from None
        if not ks or min(ks) < 1:
            raise ConfigError("eval_ks needs at least one k >= 1")
        return ks

    def to_text(self):
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def parse_run_config(text, base=None):
    """``key = value`` lines (``#`` comments allowed) applied over ``base``."""
    base = base or RunConfig()
    types = {f.name: type(getattr(base, f.name)) for f in fields(base)}
    kw = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ConfigError(f"line {n}: expected 'key = value'")
        if key not in types:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        try:
            kw[key] = types[key](value)
        except ValueError:
            raise ConfigError(f"line {n}: bad value {value!r} for {key}") from None
    try:
        return replace(base, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_run_config(path, seed=None, overrides=None):
    cfg = RunConfig()
    if path:
        if not os.path.isfile(path):
            raise FileNotFoundError(f"config file {path} not found")
        with open(path, encoding="utf-8") as fh:
            cfg = parse_run_config(fh.read(), cfg)
    kw = {k: v for k, v in (overrides or {}).items() if v is not None}
    if seed is not None:
        kw["seed"] = seed
    cfg = replace(cfg, **kw)
    try:
        cfg.train_config()
        cfg.merge_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg.ks()
    return cfg


# --- sample interchange file ----------------------------------------------------------


@dataclass
class SampleRecord:
    score: float
    triple: tuple  # lexeme strings
    attention: np.ndarray  # (3, L)


def format_samples(records):
    lines = []
    for r in records:
        traces = (" ".join(repr(float(v)) for v in a) for a in r.attention)
        lines.append("\t".join([repr(float(r.score)), *r.triple, *traces]) + "\n")
    return "".join(lines)


def parse_samples(text):
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise ValueError(f"line {n}: expected 7 tab-separated fields, got {len(parts)}")
        try:
            att = np.array([[float(v) for v in p.split()] for p in parts[4:]])
            score = float(parts[0])
        except ValueError:
            raise ValueError(f"line {n}: malformed number") from None
        out.append(SampleRecord(score, tuple(parts[1:4]), att))
    return out


# --- plumbing ---------------------------------------------------------------------------


def _fail(kind, code, message):
    click.echo(f"error\t{kind}\t{message}", err=True)
    sys.exit(code)


def _guard(fn):
    """Map known failures to one-line errors with distinct exit codes."""

    def run(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail("config", EXIT_CONFIG, exc)
        except FileNotFoundError as exc:
            _fail("missing-file", EXIT_MISSING, exc)
        except CheckpointVersionError as exc:
            _fail("version-mismatch", EXIT_VERSION, exc)
        except TrainingAborted as exc:
            _fail("non-finite", EXIT_NUMERIC, exc)
        except (CheckpointError, ValueError) as exc:
            _fail("invalid-input", EXIT_FAILURE, exc)

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


def _common(f):
    f = click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True,
                     help="Directory for outputs.")(f)
    f = click.option("--seed", type=int, default=None, help="Seed overriding the config file.")(f)
    f = click.option("--config", "config_path", type=click.Path(), default=None,
                     help="Plain-text key = value configuration file.")(f)
    return f


def _setup(config_path, seed, out_dir, **overrides):
    cfg = load_run_config(config_path, seed, overrides)
    os.makedirs(out_dir, exist_ok=True)
    log.info("effective config:\n%s", cfg.to_text().rstrip())
    return cfg


def _require(path, what):
    if not path:
        raise ConfigError(f"{what} path not given")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} {path} not found")
    return path


def _load_model(cfg):
    trainer = Trainer.load(_require(cfg.checkpoint, "checkpoint"))
    ds = load_dataset(_require(cfg.corpus, "corpus"))
    if ds.vocabulary.content_hash() != trainer.vocab_hash:
        raise CheckpointVersionError("corpus vocabulary does not match the checkpoint")
    return trainer, ds


# --- commands -----------------------------------------------------------------------------


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Scene-graph triple generation with an attention LSTM trained adversarially."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command("gen-data")
@_common
@click.option("--images", type=int, default=None, help="Corpus size (config: images, default 2000).")
@_guard
def gen_data(config_path, seed, out_dir, images):
    """Render a synthetic corpus with ground-truth triples into OUT_DIR."""
    cfg = _setup(config_path, seed, out_dir, images=images)
    write_dataset(out_dir, cfg.images, cfg.seed, SceneConfig())
    click.echo(f"wrote {cfg.images} images to {out_dir}")


@main.command("train")
@_common
@click.option("--corpus", type=click.Path(), default=None, help="Corpus directory (config: corpus).")
@click.option("--steps", type=int, default=None, help="Generator steps (config: steps, default 3000).")
@click.option("--resume", is_flag=True, help="Continue from OUT_DIR/checkpoint.bin.")
@_guard
def train_cmd(config_path, seed, out_dir, corpus, steps, resume):
    """Train on the corpus's training split; writes checkpoint.bin and metrics.tsv."""
    cfg = _setup(config_path, seed, out_dir, corpus=corpus, steps=steps)
    ds = load_dataset(_require(cfg.corpus, "corpus"))
    split = ds.split_indices()
    std = fit_standardizer(ds.grids[split["train"]])
    grids = std.apply(ds.grids)
    data = TrainData(grids[split["train"]], [sorted(ds.truth(i)) for i in split["train"]])
    val = (grids[split["val"]], [ds.truth(i) for i in split["val"]])
    ckpt = os.path.join(out_dir, "checkpoint.bin")
    metrics_path = os.path.join(out_dir, "metrics.tsv")
    if resume:
        trainer = Trainer.load(_require(ckpt, "checkpoint"))
        if trainer.vocab_hash != ds.vocabulary.content_hash():
            raise CheckpointVersionError("corpus vocabulary does not match the checkpoint")
        trainer.config = replace(trainer.config, steps=cfg.steps)
        mode = "a"
    else:
        trainer = Trainer(cfg.train_config(), len(ds.vocabulary), ds.grids.shape[2],
                          ds.vocabulary.content_hash(), std)
        mode = "w"
    with open(os.path.join(out_dir, "effective.cfg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.to_text())
    with open(metrics_path, mode, encoding="utf-8", newline="\n") as metrics:
        history = train(trainer, data, metrics, val, ckpt)
    with open(os.path.join(out_dir, "validation.tsv"), mode, encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{s}\t20\t{r!r}\n" for s, r in history)
    click.echo(f"trained to step {trainer.step}; checkpoint {ckpt}")


@main.command("sample")
@_common
@click.option("--checkpoint", type=click.Path(), default=None, help="Checkpoint file (config: checkpoint).")
@click.option("--corpus", type=click.Path(), default=None, help="Corpus directory (config: corpus).")
@click.option("--image-id", required=True, help="Image id from the corpus manifest.")
@click.option("--count", type=int, default=None, help="Samples to draw (config: sample_count, default 500).")
@_guard
def sample_cmd(config_path, seed, out_dir, checkpoint, corpus, image_id, count):
    """Draw scored triple samples with attention traces for one image."""
    cfg = _setup(config_path, seed, out_dir, checkpoint=checkpoint, corpus=corpus, sample_count=count)
    trainer, ds = _load_model(cfg)
    if image_id not in ds.ids:
        raise FileNotFoundError(f"image {image_id} is not in the corpus")
    X = trainer.standardizer.apply(ds.grids[ds.ids.index(image_id)])
    from .evaluate import score_samples

    samples = sample_triples(X, cfg.sample_count, SeededRng(cfg.seed, SAMPLE_STREAM), trainer.generator)
    scores = score_samples(samples, trainer.critic, X)
    records = [SampleRecord(sc, ds.vocabulary.decode(s.triple), s.attention) for s, sc in zip(samples, scores)]
    path = os.path.join(out_dir, f"samples-{image_id}.tsv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_samples(records))
    click.echo(f"wrote {len(records)} samples to {path}")


@main.command("build-graph")
@_common
@click.option("--samples", "samples_path", required=True, type=click.Path(), help="Samples file.")
@click.option("--threshold", type=float, default=None, help="IoU merge threshold (config: merge_threshold, default 0.8).")
@_guard
def build_graph_cmd(config_path, seed, out_dir, samples_path, threshold):
    """Merge duplicate entities of a samples file into a scene graph (graph.tsv, graph.dot)."""
    cfg = _setup(config_path, seed, out_dir, merge_threshold=threshold)
    with open(_require(samples_path, "samples file"), encoding="utf-8") as fh:
        records = parse_samples(fh.read())
    graph = build_graph(records, cfg.merge_config())
    with open(os.path.join(out_dir, "graph.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_summary(graph))
    with open(os.path.join(out_dir, "graph.dot"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(export_dot(graph))
    d = graph.diagnostics
    click.echo(f"nodes {d['nodes']} edges {d['edges']} dropped_self_loops {d['dropped_self_loops']}")


@main.command("eval")
@_common
@click.option("--checkpoint", type=click.Path(), default=None, help="Checkpoint file (config: checkpoint).")
@click.option("--corpus", type=click.Path(), default=None, help="Corpus directory (config: corpus).")
@click.option("--split", type=click.Choice(["train", "val", "test"]), default=None,
              help="Corpus split (config: eval_split, default test).")
@click.option("--k", "ks", type=int, multiple=True, help="Cut-off k; repeatable (config: eval_ks, default 20,50,100).")
@_guard
def eval_cmd(config_path, seed, out_dir, checkpoint, corpus, split, ks):
    """Recall@k, chance baseline and violation rate per image; writes report.tsv."""
    cfg = _setup(config_path, seed, out_dir, checkpoint=checkpoint, corpus=corpus, eval_split=split,
                 eval_ks=",".join(map(str, ks)) if ks else None)
    trainer, ds = _load_model(cfg)
    idx = ds.split_indices()[cfg.eval_split]
    report = evaluate_images(
        [ds.ids[i] for i in idx],
        [trainer.standardizer.apply(ds.grids[i]) for i in idx],
        [ds.truth(i) for i in idx],
        trainer.generator,
        trainer.critic,
        ds.vocabulary,
        SeededRng(cfg.seed, EVAL_STREAM),
        ks=cfg.ks(),
        samples_per_image=cfg.samples_per_image,
        baseline_rng=SeededRng(cfg.seed, BASELINE_STREAM),
        baseline_trials=cfg.baseline_trials,
    )
    path = os.path.join(out_dir, "report.tsv")
    report.save(path)
    for k in report.ks():
        m = report.mean(k)
        click.echo(f"k={k} recall {m.recall:.3f} baseline {m.baseline:.3f} violation {m.violation:.3f}")


@main.command("inspect")
@_common
@click.option("--checkpoint", type=click.Path(), default=None, help="Checkpoint file (config: checkpoint).")
@_guard
def inspect_cmd(config_path, seed, out_dir, checkpoint):
    """Print a checkpoint's header and configuration."""
    cfg = load_run_config(config_path, seed, {"checkpoint": checkpoint})
    with open(_require(cfg.checkpoint, "checkpoint"), "rb") as fh:
        click.echo(describe(fh.read()), nl=False)


if __name__ == "__main__":
    main()
