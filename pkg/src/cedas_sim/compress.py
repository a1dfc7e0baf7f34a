"""Compression operators, their statistical contracts, and bit accounting.

Operators come in two contract classes: unbiased with relative second moment
E||C(x) - x||^2 <= C ||x||^2, and biased contractions with
E||C(x) - x||^2 <= (1 - delta) ||x||^2. A biased operator composed with an
unbiased one on its residual is unbiased again with C = C2 (1 - delta1),
which is how biased sparsifiers are made admissible for the difference-
compression algorithms.
"""

from dataclasses import dataclass
from math import ceil, log2

import numpy as np

from .errors import (ContractMismatch, DimensionMismatch, MalformedMessage,
                     ZeroBudget, ZeroInput)

KINDS = ("identity", "top_k", "rand_k", "scaled_rand_k", "quantize_b", "composed")


@dataclass(frozen=True)
class Contract:
    """Declared contract constants; a kind may belong to both classes (identity)."""

    unbiased_c: float = None
    biased_delta: float = None

    @property
    def is_unbiased(self):
        return self.unbiased_c is not None

    @property
    def is_biased(self):
        return self.biased_delta is not None


@dataclass(frozen=True)
class Compressor:
    """Immutable descriptor of a randomized compression map on R^dim."""

    kind: str
    dim: int
    k: int = None        # coordinate budget (sparsifying kinds)
    bits: int = None     # level width (quantize_b)
    inner: tuple = None  # (biased, unbiased) pair for composed

    @property
    def contract(self):
        if self.kind == "identity":
            return Contract(unbiased_c=0.0, biased_delta=1.0)
        if self.kind in ("top_k", "rand_k"):
            return Contract(biased_delta=self.k / self.dim)
        if self.kind == "scaled_rand_k":
            return Contract(unbiased_c=self.dim / self.k - 1.0)
        if self.kind == "quantize_b":
            # dithered rounding: per-coordinate error < one level of width
            # ||x||_inf 2^{1-b}, so E||C(x)-x||^2 <= p ||x||_inf^2 / 4^b
            return Contract(unbiased_c=self.dim / 4.0 ** self.bits)
        c1, c2 = self.inner
        return Contract(unbiased_c=c2.contract.unbiased_c * (1.0 - c1.contract.biased_delta))


def _check_budget(dim, k):
    if k < 1:
        raise ZeroBudget(f"coordinate budget must be >= 1, got {k}")
    if k > dim:
        raise DimensionMismatch(f"budget K={k} exceeds dimension p={dim}")


def identity(dim):
    return Compressor(kind="identity", dim=int(dim))


def top_k(dim, k):
    _check_budget(dim, k)
    return Compressor(kind="top_k", dim=int(dim), k=int(k))


def rand_k(dim, k):
    _check_budget(dim, k)
    return Compressor(kind="rand_k", dim=int(dim), k=int(k))


def scaled_rand_k(dim, k):
    _check_budget(dim, k)
    return Compressor(kind="scaled_rand_k", dim=int(dim), k=int(k))


def quantize_b(dim, bits):
    if not 1 <= bits <= 31:
        raise ValueError(f"bit width must lie in [1, 31], got {bits}")
    return Compressor(kind="quantize_b", dim=int(dim), bits=int(bits))


def compose(c1, c2):
    """Two-stage operator c1(x) + c2(x - c1(x)) with independent randomness.

    Requires a biased-class first stage and an unbiased-class second stage;
    the result is unbiased with C = C2 (1 - delta1).
    """
    if not c1.contract.is_biased:
        raise ContractMismatch(f"first stage must be biased-class, got {c1.kind}")
    if not c2.contract.is_unbiased:
        raise ContractMismatch(f"second stage must be unbiased-class, got {c2.kind}")
    if c1.dim != c2.dim:
        raise DimensionMismatch(f"stage dimensions differ: {c1.dim} vs {c2.dim}")
    return Compressor(kind="composed", dim=c1.dim, inner=(c1, c2))


def from_dict(d, dim):
    """Build a compressor from its config form {kind, k | b, inner...}."""
    kind = d["kind"]
    if kind == "identity":
        return identity(dim)
    if kind == "top_k":
        return top_k(dim, d["k"])
    if kind == "rand_k":
        return rand_k(dim, d["k"])
    if kind == "scaled_rand_k":
        return scaled_rand_k(dim, d["k"])
    if kind == "quantize_b":
        return quantize_b(dim, d["b"])
    if kind == "composed":
        return compose(from_dict(d["inner"][0], dim), from_dict(d["inner"][1], dim))
    raise ValueError(f"unknown compressor kind {kind!r}")


def to_dict(c):
    if c.kind == "composed":
        return {"kind": "composed", "inner": [to_dict(c.inner[0]), to_dict(c.inner[1])]}
    d = {"kind": c.kind}
    if c.k is not None:
        d["k"] = c.k
    if c.bits is not None:
        d["b"] = c.bits
    return d


def _top_k_mask_idx(x, k):
    # stable sort on negated magnitudes: ties go to the lowest index
    return np.argsort(-np.abs(x), kind="stable")[:k]


def apply(c, x, rng=None):
    """Draw C(x) using only the supplied stream; deterministic kinds ignore it."""
    x = np.asarray(x, dtype=float)
    if x.shape != (c.dim,):
        raise DimensionMismatch(f"expected shape ({c.dim},), got {x.shape}")
    if c.kind == "identity":
        return x.copy()
    if c.kind == "top_k":
        out = np.zeros_like(x)
        idx = _top_k_mask_idx(x, c.k)
        out[idx] = x[idx]
        return out
    if c.kind == "rand_k":
        out = np.zeros_like(x)
        idx = rng.permutation(c.dim)[:c.k]
        out[idx] = x[idx]
        return out
    if c.kind == "scaled_rand_k":
        out = np.zeros_like(x)
        idx = rng.permutation(c.dim)[:c.k]
        out[idx] = (c.dim / c.k) * x[idx]
        return out
    if c.kind == "quantize_b":
        return _dither_quantize(c, x, rng.random(c.dim))
    # composed: fresh draws for the second stage keep it conditionally unbiased
    q1 = apply(c.inner[0], x, rng)
    return q1 + apply(c.inner[1], x - q1, rng)


def _dither_quantize(c, x, mu):
    nrm = np.abs(x).max()
    if nrm == 0.0:
        return np.zeros_like(x)
    half = 2.0 ** (c.bits - 1)
    levels = np.floor(half * np.abs(x) / nrm + mu)
    return (nrm / half) * np.sign(x) * levels


def sample_stack(c, x, n_samples, rng):
    """(n_samples, dim) array of independent draws of C(x); vectorized per kind."""
    x = np.asarray(x, dtype=float)
    if x.shape != (c.dim,):
        raise DimensionMismatch(f"expected shape ({c.dim},), got {x.shape}")
    n = int(n_samples)
    if c.kind == "identity":
        return np.tile(x, (n, 1))
    if c.kind == "top_k":
        return np.tile(apply(c, x), (n, 1))
    if c.kind in ("rand_k", "scaled_rand_k"):
        # argpartition of iid uniforms = uniform K-subset per row
        part = np.argpartition(rng.random((n, c.dim)), c.k - 1, axis=1)[:, :c.k]
        out = np.zeros((n, c.dim))
        rows = np.repeat(np.arange(n), c.k)
        out[rows, part.ravel()] = x[part.ravel()]
        if c.kind == "scaled_rand_k":
            out *= c.dim / c.k
        return out
    if c.kind == "quantize_b":
        nrm = np.abs(x).max()
        if nrm == 0.0:
            return np.zeros((n, c.dim))
        half = 2.0 ** (c.bits - 1)
        levels = np.floor(half * np.abs(x)[None, :] / nrm + rng.random((n, c.dim)))
        return (nrm / half) * np.sign(x)[None, :] * levels
    # composed
    q1 = sample_stack(c.inner[0], x, n, rng)
    resid = x[None, :] - q1
    c2 = c.inner[1]
    if c2.kind == "scaled_rand_k":
        part = np.argpartition(rng.random((n, c.dim)), c2.k - 1, axis=1)[:, :c2.k]
        rows = np.repeat(np.arange(n), c2.k)
        out = q1.copy()
        out[rows, part.ravel()] += (c2.dim / c2.k) * resid[rows, part.ravel()]
        return out
    if c2.kind == "quantize_b":
        nrm = np.abs(resid).max(axis=1, keepdims=True)
        half = 2.0 ** (c2.bits - 1)
        safe = np.where(nrm == 0.0, 1.0, nrm)
        levels = np.floor(half * np.abs(resid) / safe + rng.random((n, c.dim)))
        q2 = (safe / half) * np.sign(resid) * levels
        return q1 + np.where(nrm == 0.0, 0.0, q2)
    if c2.kind == "identity":
        return q1 + resid
    raise ValueError(f"unsupported second stage {c2.kind!r}")


def estimate_contract(c, x, n_samples, rng):
    """Empirical (mean vector, E||C(x)-x||^2 / ||x||^2) over n_samples draws."""
    x = np.asarray(x, dtype=float)
    nrm2 = float(x @ x)
    if nrm2 == 0.0:
        raise ZeroInput("contract estimation needs x != 0")
    if n_samples < 100:
        raise ValueError(f"need at least 100 samples, got {n_samples}")
    samples = sample_stack(c, x, n_samples, rng)
    diff = samples - x[None, :]
    snr = float(np.einsum("ij,ij->", diff, diff) / (n_samples * nrm2))
    return samples.mean(axis=0), snr


# --- bit accounting and wire messages ---

def _index_bits(dim):
    return ceil(log2(dim)) if dim > 1 else 0


def bit_cost(c):
    """Bits per transmitted message under the documented accounting model.

    Sparse kinds: K (32-bit value + index); quantize_b: p levels of b bits
    plus one 32-bit scale; identity: 32 bits per coordinate; composed: sum of
    its stages.
    """
    if c.kind == "identity":
        return 32 * c.dim
    if c.kind in ("top_k", "rand_k", "scaled_rand_k"):
        return c.k * (32 + _index_bits(c.dim))
    if c.kind == "quantize_b":
        return c.dim * c.bits + 32
    return bit_cost(c.inner[0]) + bit_cost(c.inner[1])


@dataclass(frozen=True)
class CompressedMessage:
    """Accounting-level encoding of one compressed vector.

    Sparse payloads carry (indices, values); quantized payloads carry signed
    integer levels plus a scale. bit_cost follows the model in bit_cost(),
    not the in-memory representation.
    """

    kind: str
    dim: int
    bit_cost: int
    indices: tuple = None
    values: tuple = None
    levels: tuple = None
    scale: float = None


def encode(q, c):
    q = np.asarray(q, dtype=float)
    if q.shape != (c.dim,):
        raise DimensionMismatch(f"expected shape ({c.dim},), got {q.shape}")
    cost = bit_cost(c)
    if c.kind == "identity":
        return CompressedMessage(kind=c.kind, dim=c.dim, bit_cost=cost, values=tuple(q.tolist()))
    if c.kind == "quantize_b":
        nrm = np.abs(q).max()
        half = 2.0 ** (c.bits - 1)
        if nrm == 0.0:
            return CompressedMessage(kind=c.kind, dim=c.dim, bit_cost=cost,
                                     levels=(0,) * c.dim, scale=0.0)
        # the largest-magnitude coordinate always lands on level 2^{b-1},
        # so the quantization scale is recoverable from q alone
        scale = nrm / half
        levels = np.rint(q / scale).astype(int)
        return CompressedMessage(kind=c.kind, dim=c.dim, bit_cost=cost,
                                 levels=tuple(levels.tolist()), scale=float(scale))
    idx = np.flatnonzero(q)
    return CompressedMessage(kind=c.kind, dim=c.dim, bit_cost=cost,
                             indices=tuple(int(i) for i in idx),
                             values=tuple(q[idx].tolist()))


def decode(m):
    if m.dim < 1:
        raise MalformedMessage(f"bad dimension {m.dim}")
    if m.kind == "identity":
        if m.values is None or len(m.values) != m.dim:
            raise MalformedMessage("identity payload must carry all coordinates")
        return np.asarray(m.values, dtype=float)
    if m.kind == "quantize_b":
        if m.levels is None or len(m.levels) != m.dim:
            raise MalformedMessage("quantized payload must carry one level per coordinate")
        if m.scale is None or m.scale < 0.0:
            raise MalformedMessage(f"bad scale {m.scale}")
        return m.scale * np.asarray(m.levels, dtype=float)
    if m.indices is None or m.values is None or len(m.indices) != len(m.values):
        raise MalformedMessage("sparse payload needs matching indices and values")
    if len(set(m.indices)) != len(m.indices):
        raise MalformedMessage("duplicate indices in sparse payload")
    out = np.zeros(m.dim)
    for i, v in zip(m.indices, m.values):
        if not 0 <= i < m.dim:
            raise MalformedMessage(f"index {i} out of range for dim {m.dim}")
        out[i] = v
    return out
