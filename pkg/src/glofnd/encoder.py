"""Small differentiable encoder with hand-written forward/backward passes.

Two affine layers with a tanh in between, followed by row-wise unit
normalization so that downstream similarity reduces to a dot product.
The backward pass returns exact analytic gradients, including the
normalization Jacobian (I - z z^T) / ||p||, and is checked against
finite differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError, ShapeMismatchError, ZeroRowError
from .numkit import ROW_NORM_EPS, as_matrix, row_norms

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass
class EncoderParams:
    """Weights of the two-layer encoder. All arrays are float64."""

    w1: np.ndarray  # (d_in, d_hid)
    b1: np.ndarray  # (d_hid,)
    w2: np.ndarray  # (d_hid, d_emb)
    b2: np.ndarray  # (d_emb,)

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def d_hid(self) -> int:
        return self.w1.shape[1]

    @property
    def d_emb(self) -> int:
        return self.w2.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.w1.copy(), self.b1.copy(),
                             self.w2.copy(), self.b2.copy())

    def to_json_dict(self) -> dict:
        return {
            "d_in": self.d_in,
            "d_hid": self.d_hid,
            "d_emb": self.d_emb,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "EncoderParams":
        params = cls(
            w1=np.asarray(d["w1"], dtype=np.float64),
            b1=np.asarray(d["b1"], dtype=np.float64),
            w2=np.asarray(d["w2"], dtype=np.float64),
            b2=np.asarray(d["b2"], dtype=np.float64),
        )
        expected = (d["d_in"], d["d_hid"], d["d_emb"])
        if (params.d_in, params.d_hid, params.d_emb) != tuple(expected):
            raise ValueError("encoder checkpoint dims disagree with arrays")
        if params.b1.shape != (params.d_hid,) or params.b2.shape != (params.d_emb,):
            raise ValueError("encoder checkpoint bias shapes are inconsistent")
        return params

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)

    @classmethod
    def load(cls, path) -> "EncoderParams":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass
class EncoderGrads:
    """Gradients shape-matched to :class:`EncoderParams`."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def __add__(self, other: "EncoderGrads") -> "EncoderGrads":
        return EncoderGrads(self.w1 + other.w1, self.b1 + other.b1,
                            self.w2 + other.w2, self.b2 + other.b2)

    @classmethod
    def zeros_like(cls, params: EncoderParams) -> "EncoderGrads":
        return cls(*(np.zeros_like(a) for a in (params.w1, params.b1,
                                                params.w2, params.b2)))


@dataclass
class ForwardTape:
    """Intermediates retained by :func:`forward` for the backward pass.

    Valid until the referenced params are mutated.
    """

    params: EncoderParams
    inputs: np.ndarray
    hidden: np.ndarray
    pre_norm: np.ndarray
    norms: np.ndarray
    embeddings: np.ndarray


def init_params(d_in: int, d_hid: int, d_emb: int,
                rng: np.random.Generator) -> EncoderParams:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    s1 = 1.0 / np.sqrt(d_in)
    s2 = 1.0 / np.sqrt(d_hid)
    return EncoderParams(
        w1=rng.uniform(-s1, s1, size=(d_in, d_hid)),
        b1=rng.uniform(-s1, s1, size=d_hid),
        w2=rng.uniform(-s2, s2, size=(d_hid, d_emb)),
        b2=rng.uniform(-s2, s2, size=d_emb),
    )


def forward(params: EncoderParams, inputs) -> tuple[np.ndarray, ForwardTape]:
    """Encode input rows into unit-norm embedding rows.

    Returns the embeddings together with a tape of intermediates for
    :func:`backward`. Raises ZeroRowError if a pre-normalization row is
    numerically zero.
    """
    x = as_matrix(inputs, "inputs")
    if x.shape[1] != params.d_in:
        raise DimMismatchError(
            f"inputs have {x.shape[1]} columns, encoder expects {params.d_in}"
        )
    hidden = np.tanh(x @ params.w1 + params.b1)
    pre_norm = hidden @ params.w2 + params.b2
    norms = row_norms(pre_norm)
    bad = norms < ROW_NORM_EPS
    if np.any(bad):
        raise ZeroRowError(
            f"pre-normalization rows {np.flatnonzero(bad).tolist()} are ~zero"
        )
    embeddings = pre_norm / norms[:, None]
    tape = ForwardTape(params=params, inputs=x, hidden=hidden,
                       pre_norm=pre_norm, norms=norms, embeddings=embeddings)
    return embeddings, tape


def backward(tape: ForwardTape, grad_embeddings) -> EncoderGrads:
    """Exact gradients of ``sum(grad_embeddings * embeddings)`` w.r.t. params.

    The unit-normalization Jacobian maps the incoming gradient g to
    (g - (g . z) z) / ||p|| per row before the affine chain rule.
    """
    g = np.asarray(grad_embeddings, dtype=np.float64)
    z = tape.embeddings
    if g.shape != z.shape:
        raise ShapeMismatchError(
            f"grad shape {g.shape} != embedding shape {z.shape}"
        )
    params = tape.params
    gz = np.einsum("ij,ij->i", g, z)
    d_pre = (g - gz[:, None] * z) / tape.norms[:, None]
    d_w2 = tape.hidden.T @ d_pre
    d_b2 = d_pre.sum(axis=0)
    d_hidden = d_pre @ params.w2.T
    d_act = d_hidden * (1.0 - tape.hidden ** 2)
    d_w1 = tape.inputs.T @ d_act
    d_b1 = d_act.sum(axis=0)
    return EncoderGrads(w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2)
