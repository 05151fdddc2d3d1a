"""Adversarial training with a gradient-penalized Wasserstein critic.

One training step is ``n_critic`` critic updates followed by one generator
update. All randomness is drawn from one seeded stream owned by the
trainer, so a run is fully determined by its config, data and seed, and a
checkpoint captures everything needed to continue it bit-for-bit.
"""
import json
import logging
import os
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from .discriminator import GP_WEIGHT, Critic, interpolate, penalty_from_scores
from .features import Standardizer
from .generator import Generator
from .numerics import Adam, NumericError, SeededRng, Tensor, backward, no_grad, ops
from .vocab import one_hot

log = logging.getLogger(__name__)

TRAIN_STREAM = 200
VALIDATION_STREAM = 300


class TrainingAborted(NumericError):
    """A loss or parameter became non-finite."""


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    adam_eps: float = 1e-8
    gp_weight: float = GP_WEIGHT
    n_critic: int = 5
    batch_size: int = 32
    steps: int = 3000
    noise_dim: int = 16
    hidden: int = 64
    critic_hidden: int = 64
    embed_dim: int = 32
    attention_hidden: int = 32
    seed: int = 0
    eval_every: int = 500
    eval_images: int = 20
    eval_samples: int = 100
    checkpoint_every: int = 500

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("lr", "gp_weight", "steps", "seed", "eval_every", "checkpoint_every"):
                ok = v >= 0
            elif f.name in ("beta1", "beta2"):
                ok = 0 <= v < 1
            else:
                ok = v > 0
            if not ok:
                raise ValueError(f"training option {f.name}={v!r} is out of range")

    def to_text(self):
        return "".join(f"{f.name} = {getattr(self, f.name)!r}\n" for f in fields(self))

    @classmethod
    def from_text(cls, text):
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in types:
                raise CheckpointError(f"unknown training option {key!r}")
            kw[key] = float(value) if types[key] in (float, "float") else int(value)
        return cls(**kw)


@dataclass
class TrainData:
    """Standardized training grids and their ground-truth id triples."""

    grids: np.ndarray  # (n, L, D)
    triples: list  # per image, a non-empty list of id triples

    def __post_init__(self):
        self.grids = np.asarray(self.grids, dtype=np.float64)
        self.triples = [sorted(tuple(int(x) for x in t) for t in ts) for ts in self.triples]
        if len(self.grids) != len(self.triples) or not len(self.grids):
            raise ValueError("need one non-empty triple list per grid")
        if any(not ts for ts in self.triples):
            raise ValueError("every training image needs at least one ground-truth triple")


def critic_loss(critic, X, real, fake, eps, gp_weight=GP_WEIGHT):
    """Critic objective on one batch; returns ``(loss, wasserstein_estimate)``.

    loss = mean(score(fake)) - mean(score(real)) + mean(penalty). Real, fake
    and interpolated rows go through the critic as one stacked batch.
    """
    X = np.asarray(X, dtype=np.float64)
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    B = X.shape[0]
    if gp_weight == 0:
        scores = critic.score(ops.concat([Tensor(real), Tensor(fake)], axis=0), np.concatenate([X, X]))
        s_real, s_fake = scores[:B], scores[B:]
        loss = ops.mean(s_fake) - ops.mean(s_real)
    else:
        v_hat = Tensor(interpolate(real, fake, eps), requires_grad=True)
        stacked = ops.concat([Tensor(real), Tensor(fake), v_hat], axis=0)
        scores = critic.score(stacked, np.concatenate([X, X, X]))
        s_real, s_fake = scores[:B], scores[B:2 * B]
        penalty = penalty_from_scores(scores[2 * B:], v_hat, gp_weight)
        loss = ops.mean(s_fake) - ops.mean(s_real) + ops.mean(penalty)
    return loss, float(s_real.data.mean() - s_fake.data.mean())


def _check(value, what, step):
    if not np.isfinite(value):
        raise TrainingAborted(f"non-finite {what} ({value}) at step {step}")


class Trainer:
    def __init__(self, config, vocab_size, feature_dim, vocab_hash="", standardizer=None):
        self.config = config
        self.vocab_size = int(vocab_size)
        self.feature_dim = int(feature_dim)
        self.vocab_hash = vocab_hash
        self.standardizer = standardizer or Standardizer(np.zeros(feature_dim), np.ones(feature_dim))
        c = config
        self.generator = Generator(vocab_size, feature_dim, c.hidden, c.noise_dim, c.attention_hidden, seed=c.seed)
        self.critic = Critic(vocab_size, feature_dim, c.critic_hidden, c.embed_dim, c.attention_hidden, seed=c.seed)
        adam = dict(lr=c.lr, beta1=c.beta1, beta2=c.beta2, eps=c.adam_eps)
        self.opt_g = Adam(list(self.generator.params), **adam)
        self.opt_d = Adam(list(self.critic.params), **adam)
        self.rng = SeededRng(c.seed, TRAIN_STREAM)
        self.step = 0

    # --- single updates ----------------------------------------------------------

    def critic_update(self, X, real, record=None):
        """One critic step on features ``X`` (B, L, D) and one-hot ``real`` (B, 3, V).

        Returns ``(pre-step loss, wasserstein estimate)``. When ``record`` is a
        dict it receives the sampled fake batch and interpolation weights.
        """
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise ValueError("empty batch")
        with no_grad():
            fake = self.generator.forward(X, self.rng).soft_array()
        eps = self.rng.uniform((X.shape[0],))
        loss, west = critic_loss(self.critic, X, real, fake, eps, self.config.gp_weight)
        _check(loss.item(), "critic loss", self.step)
        backward(loss)
        self.opt_d.step()
        if record is not None:
            record.update(fake=fake, eps=eps, loss=loss.item())
        return loss.item(), west

    def generator_update(self, X):
        """One generator step maximizing the mean critic score of fresh samples."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            raise ValueError("empty batch")
        out = self.generator.forward(X, self.rng)
        loss = ops.neg(ops.mean(self.critic.score(out.soft, X)))
        _check(loss.item(), "generator loss", self.step)
        backward(loss)
        self.opt_g.step()
        # gradients reached the critic through the score; they are discarded
        self.critic.params.zero_grad()
        return loss.item()

    # --- batches -----------------------------------------------------------------

    def real_batch(self, data):
        """Random images, and one uniformly chosen ground-truth triple per image."""
        idx = self.rng.integers(len(data.grids), (self.config.batch_size,))
        pick = self.rng.uniform((len(idx),))
        real = np.zeros((len(idx), 3, self.vocab_size))
        for row, (i, u) in enumerate(zip(idx, pick)):
            ts = data.triples[i]
            t = ts[min(int(u * len(ts)), len(ts) - 1)]
            for pos in range(3):
                real[row, pos] = one_hot(t[pos], self.vocab_size)
        return data.grids[idx], real

    def train_step(self, data):
        """n_critic critic updates then one generator update; returns the metrics tuple."""
        c_losses, wests = [], []
        for _ in range(self.config.n_critic):
            X, real = self.real_batch(data)
            loss, west = self.critic_update(X, real)
            c_losses.append(loss)
            wests.append(west)
        idx = self.rng.integers(len(data.grids), (self.config.batch_size,))
        g_loss = self.generator_update(data.grids[idx])
        self.step += 1
        for p in list(self.generator.params) + list(self.critic.params):
            if not p.is_finite():
                raise TrainingAborted(f"parameter {p.name} became non-finite at step {self.step}")
        return self.step, float(np.mean(c_losses)), g_loss, float(np.mean(wests))

    # --- checkpoint ---------------------------------------------------------------

    def to_bytes(self):
        return _encode_checkpoint(self)

    def save(self, path):
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(self.to_bytes())
        os.replace(tmp, path)

    @classmethod
    def from_bytes(cls, blob):
        return _decode_checkpoint(blob)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def validation_recall(trainer, grids, truths, k=20, samples=100):
    """Mean recall@k over a validation slice, with its own fixed random stream."""
    from .evaluate import rank_triples, recall_at_k
    from .generator import sample_triples

    rng = SeededRng(trainer.config.seed, VALIDATION_STREAM)
    vals = []
    for X, truth in zip(grids, truths):
        ranked = rank_triples(sample_triples(X, samples, rng, trainer.generator), trainer.critic, X)
        vals.append(recall_at_k(ranked, truth, k))
    return float(np.mean(vals))


def format_metrics(step, critic_loss_value, gen_loss, west):
    return f"{step}\t{critic_loss_value!r}\t{gen_loss!r}\t{west!r}\n"


def train(trainer, data, metrics=None, validation=None, checkpoint_path=None, until=None):
    """Run training steps until ``until`` (default ``config.steps``).

    ``metrics`` is a writable text stream for per-step lines. ``validation``
    is ``(grids, truths)``; recall@20 on it is logged every ``eval_every``
    steps. A checkpoint is written every ``checkpoint_every`` steps and at the
    end. If training aborts, the last checkpoint on disk is left untouched.
    Returns the list of ``(step, recall)`` validation results.
    """
    cfg = trainer.config
    until = cfg.steps if until is None else until
    history = []
    while trainer.step < until:
        row = trainer.train_step(data)
        if metrics is not None:
            metrics.write(format_metrics(*row))
        step = trainer.step
        if validation is not None and cfg.eval_every and step % cfg.eval_every == 0:
            grids, truths = validation
            rec = validation_recall(trainer, grids[: cfg.eval_images], truths[: cfg.eval_images], 20, cfg.eval_samples)
            history.append((step, rec))
            log.info("step %d validation recall@20 %.3f", step, rec)
        if checkpoint_path and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            trainer.save(checkpoint_path)
    if checkpoint_path:
        trainer.save(checkpoint_path)
    return history


# --- binary checkpoint format -----------------------------------------------------------

MAGIC = b"TGCKPT\x00\x00"
FORMAT_VERSION = 1
_SECTIONS = (
    "config", "model", "vocab", "standardizer", "generator", "critic",
    "adam.generator", "adam.critic", "rng", "step",
)


def _pack_name(name):
    raw = name.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _pack_tensors(named):
    out = [struct.pack("<I", len(named))]
    for name, arr in named:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        out.append(_pack_name(name))
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise CheckpointError("checkpoint is truncated")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self):
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    def done(self):
        return self.pos == len(self.blob)


def _unpack_tensors(payload):
    r = _Reader(payload)
    (count,) = r.unpack("<I")
    out = []
    for _ in range(count):
        name = r.name()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
        out.append((name, arr))
    if not r.done():
        raise CheckpointError("trailing bytes in tensor section")
    return out


def _pack_adam(opt):
    steps = {s.step for s in opt.states}
    if len(steps) > 1:
        raise CheckpointError("optimizer states are out of step")
    step = steps.pop() if steps else 0
    named = [("m:" + p.name, s.m) for p, s in zip(opt.params, opt.states)]
    named += [("v:" + p.name, s.v) for p, s in zip(opt.params, opt.states)]
    return struct.pack("<Q", step) + _pack_tensors(named)


def _unpack_adam(payload, opt):
    (step,) = struct.unpack("<Q", payload[:8])
    arrays = dict(_unpack_tensors(payload[8:]))
    for p, s in zip(opt.params, opt.states):
        s.m[...] = arrays["m:" + p.name]
        s.v[...] = arrays["v:" + p.name]
        s.step = step


def _kv_text(d):
    return "".join(f"{k} = {v}\n" for k, v in d.items())


def _encode_checkpoint(t):
    model = {"vocab_size": t.vocab_size, "feature_dim": t.feature_dim}
    sections = {
        "config": t.config.to_text().encode("utf-8"),
        "model": _kv_text(model).encode("utf-8"),
        "vocab": t.vocab_hash.encode("utf-8"),
        "standardizer": _pack_tensors([("mean", t.standardizer.mean), ("std", t.standardizer.std)]),
        "generator": _pack_tensors([(p.name, p.data) for p in t.generator.params]),
        "critic": _pack_tensors([(p.name, p.data) for p in t.critic.params]),
        "adam.generator": _pack_adam(t.opt_g),
        "adam.critic": _pack_adam(t.opt_d),
        "rng": json.dumps(t.rng.get_state(), sort_keys=True).encode("utf-8"),
        "step": struct.pack("<Q", t.step),
    }
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    for name in _SECTIONS:
        payload = sections[name]
        out.append(_pack_name(name) + struct.pack("<Q", len(payload)) + payload)
    return b"".join(out)


def read_sections(blob):
    """``(format version, {section name: payload bytes})`` of a checkpoint."""
    r = _Reader(blob)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not a checkpoint file")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format {version} is not supported (expected {FORMAT_VERSION})")
    sections = {}
    while not r.done():
        name = r.name()
        (n,) = r.unpack("<Q")
        sections[name] = r.take(n)
    missing = [s for s in _SECTIONS if s not in sections]
    if missing:
        raise CheckpointError(f"checkpoint lacks sections {missing}")
    return version, sections


def _decode_checkpoint(blob):
    _, sec = read_sections(blob)
    config = TrainConfig.from_text(sec["config"].decode("utf-8"))
    model = {}
    for line in sec["model"].decode("utf-8").splitlines():
        k, _, v = (s.strip() for s in line.partition("="))
        model[k] = int(v)
    std = dict(_unpack_tensors(sec["standardizer"]))
    t = Trainer(config, model["vocab_size"], model["feature_dim"], sec["vocab"].decode("utf-8"),
                Standardizer(std["mean"], std["std"]))
    t.generator.params.load_arrays(dict(_unpack_tensors(sec["generator"])))
    t.critic.params.load_arrays(dict(_unpack_tensors(sec["critic"])))
    _unpack_adam(sec["adam.generator"], t.opt_g)
    _unpack_adam(sec["adam.critic"], t.opt_d)
    t.rng = SeededRng.from_state(json.loads(sec["rng"].decode("utf-8")))
    (t.step,) = struct.unpack("<Q", sec["step"])
    return t


def describe(blob):
    """Human-readable summary of a checkpoint header."""
    version, sec = read_sections(blob)
    lines = [f"format_version = {version}"]
    lines += [f"section {name} = {len(sec[name])} bytes" for name in sec]
    lines.append(f"step = {struct.unpack('<Q', sec['step'])[0]}")
    lines.append(f"vocab_sha256 = {sec['vocab'].decode('utf-8')}")
    lines += sec["model"].decode("utf-8").splitlines()
    lines += sec["config"].decode("utf-8").splitlines()
    for part in ("generator", "critic"):
        tensors = _unpack_tensors(sec[part])
        total = sum(a.size for _, a in tensors)
        lines.append(f"{part}_parameters = {total}")
    return "\n".join(lines) + "\n"


def config_dict(config):
    return asdict(config)
