"""Conditional critic scoring (triple, feature grid) pairs, and the gradient penalty."""
import numpy as np

from .generator import STEPS, Params, add_affine, add_attention, add_lstm, attend, lstm_step
from .numerics import SeededRng, ops
from .numerics.ops import affine, concat
from .numerics.tensor import Tensor, as_tensor, grad, grad_mode, is_grad_enabled

GP_WEIGHT = 10.0


class Critic:
    """Attention LSTM reading one soft lexeme per step; unbounded scalar output."""

    def __init__(self, vocab_size, feature_dim=11, hidden=64, embed_dim=32, attention_hidden=32, seed=0):
        self.vocab_size = vocab_size
        self.feature_dim = feature_dim
        self.hidden = hidden
        self.embed_dim = embed_dim
        self.attention_hidden = attention_hidden
        rng = SeededRng(seed, stream=102)
        self.params = Params()
        add_attention(self.params, rng, "att.", feature_dim, hidden, attention_hidden)
        add_lstm(self.params, rng, "lstm.", feature_dim + embed_dim, hidden)
        self.params.add("embed", (rng.uniform((vocab_size, embed_dim)) * 2 - 1) / np.sqrt(vocab_size))
        add_affine(self.params, rng, "h0.", hidden, feature_dim)
        add_affine(self.params, rng, "c0.", hidden, feature_dim)
        add_affine(self.params, rng, "score.", 1, hidden)

    def dims(self):
        return {
            "vocab_size": self.vocab_size,
            "feature_dim": self.feature_dim,
            "hidden": self.hidden,
            "embed_dim": self.embed_dim,
            "attention_hidden": self.attention_hidden,
        }

    def score(self, soft, X):
        """Scores (B,) for soft lexemes ``soft`` given features ``X`` (B, L, D).

        ``soft`` is a sequence of three (B, V) tensors/arrays, or one (B, 3, V).
        """
        if not isinstance(soft, (list, tuple)):
            soft = as_tensor(soft)
            soft = [soft[:, t] for t in range(STEPS)]
        soft = [as_tensor(v) for v in soft]
        X = np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64)
        for v in soft:
            if v.ndim != 2 or v.shape[1] != self.vocab_size or v.shape[0] != X.shape[0]:
                raise ops.ShapeError(f"critic input {v.shape} does not match batch {X.shape[0]} x {self.vocab_size}")
        p = self.params
        summary = Tensor(X.mean(axis=1))
        h = affine(p["h0.W"], summary, p["h0.b"])
        c = affine(p["c0.W"], summary, p["c0.b"])
        Xt = Tensor(X)
        for v in soft:
            z, _ = attend(Xt, h, p)
            emb = ops.matmul(v, p["embed"])
            h, c = lstm_step(concat([z, emb], axis=-1), h, c, p)
        return ops.reshape(affine(p["score.W"], h, p["score.b"]), (X.shape[0],))


def interpolate(real, fake, eps):
    """eps * real + (1 - eps) * fake, with ``eps`` broadcast per row."""
    eps = np.asarray(eps, dtype=np.float64).reshape((-1,) + (1,) * (np.ndim(real) - 1))
    return eps * np.asarray(real) + (1.0 - eps) * np.asarray(fake)


def penalty_from_scores(scores, v_hat, weight=GP_WEIGHT):
    """Per-row weight * (||d score / d v_hat|| - 1)^2, differentiable in the critic params.

    The scores must have been computed with grad recording enabled.
    """
    with grad_mode(True):
        total = ops.sum(scores)
    (g,) = grad(total, [v_hat], create_graph=is_grad_enabled())
    flat = ops.reshape(g, (g.shape[0], -1))
    return ops.mul(ops.square(ops.sub(ops.norm(flat, axis=-1), 1.0)), weight)


def gradient_penalty(real, fake, X, rng, critic, weight=GP_WEIGHT, eps=None):
    """Mean gradient penalty over the batch.

    ``real`` and ``fake`` are (B, 3, V) arrays (one-hot and soft). The norm is
    taken over the concatenation of the three interpolated vectors.
    """
    real = np.asarray(real, dtype=np.float64)
    if eps is None:
        eps = rng.uniform((real.shape[0],))
    outer = is_grad_enabled()
    v_hat = Tensor(interpolate(real, fake, eps), requires_grad=True)
    # the inner gradient needs a tape even when the caller is not recording
    with grad_mode(True):
        scores = critic.score(v_hat, X)
    with grad_mode(outer):
        return ops.mean(penalty_from_scores(scores, v_hat, weight))
