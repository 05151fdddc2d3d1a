"""Triple generator: soft attention over feature cells feeding a 3-step LSTM.

Shapes used throughout: B batch, L cells, D feature width, H hidden width,
N noise width, V vocabulary size, A attention hidden width.
"""
from dataclasses import dataclass

import numpy as np

from .numerics import ops
from .numerics.ops import affine, concat, expand_dims, layer_norm, sigmoid, softmax, tanh
from .numerics.tensor import Parameter, Tensor, as_tensor, no_grad
from .vocab import Triple

STEPS = 3


class Params:
    """Ordered, named collection of Parameters."""

    def __init__(self):
        self._items = {}

    def add(self, name, value):
        if name in self._items:
            raise KeyError(f"duplicate parameter {name!r}")
        p = Parameter(value, name)
        self._items[name] = p
        return p

    def __getitem__(self, name):
        return self._items[name]

    def __iter__(self):
        return iter(self._items.values())

    def __len__(self):
        return len(self._items)

    def names(self):
        return list(self._items)

    def arrays(self):
        return {k: p.data.copy() for k, p in self._items.items()}

    def load_arrays(self, arrays):
        for k, p in self._items.items():
            v = np.asarray(arrays[k], dtype=np.float64)
            if v.shape != p.shape:
                raise ValueError(f"{k}: shape {v.shape} != {p.shape}")
            p.data[...] = v

    def zero_grad(self):
        for p in self:
            p.zero_grad()


def _uniform(rng, shape, fan_in):
    s = 1.0 / np.sqrt(fan_in)
    return (rng.uniform(shape) * 2.0 - 1.0) * s


def add_attention(params, rng, prefix, feature_dim, hidden, attention_hidden):
    fan = feature_dim + hidden
    params.add(prefix + "Wx", _uniform(rng, (attention_hidden, feature_dim), fan))
    params.add(prefix + "Wh", _uniform(rng, (attention_hidden, hidden), fan))
    params.add(prefix + "b", _uniform(rng, (attention_hidden,), fan))
    params.add(prefix + "w", _uniform(rng, (1, attention_hidden), attention_hidden))


def add_lstm(params, rng, prefix, input_dim, hidden):
    fan = input_dim + hidden
    # gate order along the leading axis: forget, input, output, candidate
    params.add(prefix + "W", _uniform(rng, (4 * hidden, input_dim), fan))
    params.add(prefix + "U", _uniform(rng, (4 * hidden, hidden), fan))
    params.add(prefix + "b", _uniform(rng, (4 * hidden,), fan))
    params.add(prefix + "ln_gain", np.ones((4, hidden)))
    params.add(prefix + "ln_bias", np.zeros((4, hidden)))


def add_affine(params, rng, prefix, out_dim, in_dim):
    params.add(prefix + "W", _uniform(rng, (out_dim, in_dim), in_dim))
    params.add(prefix + "b", _uniform(rng, (out_dim,), in_dim))


# --- building blocks ----------------------------------------------------------


def attention_scores(X, h_prev, params, prefix="att."):
    """Per-cell relevance e_i = w . tanh(Wx x_i + Wh h + b); returns (B, L)."""
    X = as_tensor(X)
    B, L = X.shape[0], X.shape[1]
    hid = tanh(
        affine(params[prefix + "Wx"], X, params[prefix + "b"])
        + expand_dims(affine(params[prefix + "Wh"], h_prev), 1)
    )
    return ops.reshape(affine(params[prefix + "w"], hid), (B, L))


def attention_pool(X, scores):
    """alpha = softmax(scores); z = sum_i alpha_i x_i. Returns (z, alpha)."""
    alpha = softmax(scores)
    z = ops.sum(ops.mul(expand_dims(alpha, -1), as_tensor(X)), axis=1)
    return z, alpha


def attend(X, h_prev, params, prefix="att."):
    return attention_pool(X, attention_scores(X, h_prev, params, prefix))


def lstm_step(u, h_prev, c_prev, params, prefix="lstm."):
    """One layer-normalized LSTM step; returns (h, c)."""
    hidden = h_prev.shape[-1]
    pre = affine(params[prefix + "W"], u, params[prefix + "b"]) + affine(params[prefix + "U"], h_prev)
    pre = ops.reshape(pre, pre.shape[:-1] + (4, hidden))
    normed = layer_norm(pre, params[prefix + "ln_gain"], params[prefix + "ln_bias"])
    gates = sigmoid(normed[..., 0:3, :])
    f, i, o = gates[..., 0, :], gates[..., 1, :], gates[..., 2, :]
    cand = tanh(normed[..., 3, :])
    c = f * c_prev + i * cand
    h = o * tanh(c)
    return h, c


# --- generator ----------------------------------------------------------------


@dataclass
class TripleSample:
    soft: np.ndarray  # (3, V)
    triple: Triple
    attention: np.ndarray  # (3, L)
    noise: np.ndarray  # (N,)
    cell: int
    score: float = None


@dataclass
class GeneratedBatch:
    """Tape-attached outputs of one batched forward pass."""

    soft: list  # 3 Tensors (B, V)
    attention: list  # 3 Tensors (B, L)
    noise: np.ndarray
    cells: np.ndarray

    def soft_array(self):
        return np.stack([v.data for v in self.soft], axis=1)

    def attention_array(self):
        return np.stack([a.data for a in self.attention], axis=1)

    def triples(self):
        soft = self.soft_array()
        # first maximal index, matching decode_argmax
        ids = soft.argmax(axis=2)
        return [Triple(*(int(v) for v in row)) for row in ids]

    def samples(self, scores=None):
        soft, att, trip = self.soft_array(), self.attention_array(), self.triples()
        return [
            TripleSample(
                soft[k], trip[k], att[k], self.noise[k], int(self.cells[k]),
                None if scores is None else float(scores[k]),
            )
            for k in range(len(trip))
        ]


class Generator:
    def __init__(self, vocab_size, feature_dim=11, hidden=64, noise_dim=16, attention_hidden=32, seed=0):
        from .numerics import SeededRng

        self.vocab_size = vocab_size
        self.feature_dim = feature_dim
        self.hidden = hidden
        self.noise_dim = noise_dim
        self.attention_hidden = attention_hidden
        rng = SeededRng(seed, stream=101)
        self.params = Params()
        add_attention(self.params, rng, "att.", feature_dim, hidden, attention_hidden)
        add_lstm(self.params, rng, "lstm.", feature_dim + noise_dim, hidden)
        add_affine(self.params, rng, "h0.", hidden, feature_dim)
        add_affine(self.params, rng, "c0.", hidden, feature_dim)
        add_affine(self.params, rng, "out.", vocab_size, hidden)

    def dims(self):
        return {
            "vocab_size": self.vocab_size,
            "feature_dim": self.feature_dim,
            "hidden": self.hidden,
            "noise_dim": self.noise_dim,
            "attention_hidden": self.attention_hidden,
        }

    def draw(self, rng, batch, num_cells):
        """Start cells then noise, in that order, for ``batch`` triples."""
        cells = rng.integers(num_cells, (batch,))
        noise = rng.normal((batch, self.noise_dim))
        return cells, noise

    def init_state(self, X, cells):
        X = np.asarray(X.data if isinstance(X, Tensor) else X)
        picked = Tensor(X[np.arange(X.shape[0]), cells])
        p = self.params
        return affine(p["h0.W"], picked, p["h0.b"]), affine(p["c0.W"], picked, p["c0.b"])

    def forward(self, X, rng=None, cells=None, noise=None):
        """Generate one triple per row of ``X`` (B, L, D).

        ``cells`` and ``noise`` are drawn from ``rng`` unless given.
        """
        X = np.asarray(X, dtype=np.float64)
        if cells is None or noise is None:
            cells, noise = self.draw(rng, X.shape[0], X.shape[1])
        Xt = Tensor(X)
        n = Tensor(noise)
        h, c = self.init_state(X, cells)
        p = self.params
        soft, attn = [], []
        for _ in range(STEPS):
            z, alpha = attend(Xt, h, p)
            h, c = lstm_step(concat([z, n], axis=-1), h, c, p)
            soft.append(softmax(affine(p["out.W"], h, p["out.b"])))
            attn.append(alpha)
        return GeneratedBatch(soft, attn, np.asarray(noise), np.asarray(cells))


def generate_triple(X, rng, generator):
    """One sample for a single (L, D) feature grid."""
    with no_grad():
        return generator.forward(np.asarray(X)[None], rng).samples()[0]


def sample_triples(X, count, rng, generator, chunk=500):
    """``count`` independent samples for one (L, D) grid, fresh noise and start cell each."""
    if count < 1:
        raise ValueError("count must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    out = []
    with no_grad():
        done = 0
        while done < count:
            b = min(chunk, count - done)
            out.extend(generator.forward(np.broadcast_to(X, (b,) + X.shape), rng).samples())
            done += b
    return out
