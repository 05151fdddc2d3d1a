"""Scene-graph generation as adversarially trained triple sampling.

An attention LSTM emits (subject, predicate, object) triples from a grid of
image features, a critic ranks them, and duplicate entities are merged by
the overlap of their attention traces.
"""
__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
