"""Shannon primitives on finite alphabets.

All quantities are in bits. Zero-probability terms are skipped, which is the
``0 log 0 = 0`` convention, so no NaN ever leaks out of an entropy sum.
"""
from __future__ import annotations

import math
from dataclasses import InitVar, dataclass, field
from typing import Callable

import numpy as np
from scipy.special import xlogy

from .errors import ConvergenceError, ValidationError

PMF_TOL = 1e-12
INFINITE_DIVERGENCE = math.inf
_LN2 = math.log(2.0)
_Q_FLOOR = 5e-324


def _check_labels(labels, what):
    labels = tuple(labels)
    if len(set(labels)) != len(labels):
        raise ValidationError(f"{what}: labels must be unique")
    return labels


def _check_weights(probs, what, renormalize=False):
    probs = np.array(probs, dtype=float)
    if probs.size == 0:
        raise ValidationError(f"{what}: empty probability vector")
    if not np.all(np.isfinite(probs)):
        raise ValidationError(f"{what}: probabilities must be finite")
    if np.any(probs < 0):
        raise ValidationError(f"{what}: negative probability {probs.min()!r}")
    total = probs.sum()
    if renormalize:
        if total <= 0:
            raise ValidationError(f"{what}: total mass is zero")
        probs = probs / total
    elif abs(total - 1.0) > PMF_TOL:
        raise ValidationError(f"{what}: probabilities sum to {total!r}, not 1")
    probs.setflags(write=False)
    return probs


@dataclass(frozen=True)
class DiscretePMF:
    """Probability vector over a labelled alphabet."""

    labels: tuple
    probs: np.ndarray
    renormalize: InitVar[bool] = False

    def __post_init__(self, renormalize):
        labels = _check_labels(self.labels, "DiscretePMF")
        probs = _check_weights(self.probs, "DiscretePMF", renormalize)
        if probs.ndim != 1 or len(probs) != len(labels):
            raise ValidationError("DiscretePMF: need one probability per label")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, labels):
        labels = tuple(labels)
        return cls(labels, np.full(len(labels), 1.0 / len(labels)), renormalize=True)

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class JointPMF:
    """Joint distribution p(x, y); rows index X, columns index Y."""

    row_labels: tuple
    col_labels: tuple
    probs: np.ndarray
    renormalize: InitVar[bool] = False

    def __post_init__(self, renormalize):
        rows = _check_labels(self.row_labels, "JointPMF rows")
        cols = _check_labels(self.col_labels, "JointPMF columns")
        probs = np.array(self.probs, dtype=float)
        if probs.shape != (len(rows), len(cols)):
            raise ValidationError(
                f"JointPMF: matrix shape {probs.shape} does not match labels "
                f"({len(rows)}, {len(cols)})"
            )
        flat = _check_weights(probs.ravel(), "JointPMF", renormalize)
        probs = flat.reshape(probs.shape)
        object.__setattr__(self, "row_labels", rows)
        object.__setattr__(self, "col_labels", cols)
        object.__setattr__(self, "probs", probs)

    def marginal_x(self) -> DiscretePMF:
        return DiscretePMF(self.row_labels, self.probs.sum(axis=1), renormalize=True)

    def marginal_y(self) -> DiscretePMF:
        return DiscretePMF(self.col_labels, self.probs.sum(axis=0), renormalize=True)

    def transpose(self) -> "JointPMF":
        return JointPMF(self.col_labels, self.row_labels, self.probs.T.copy())

    @classmethod
    def from_channel(cls, p_x: DiscretePMF, ch: "ChannelMatrix") -> "JointPMF":
        if p_x.labels != ch.input_labels:
            raise ValidationError("input PMF labels do not match channel inputs")
        return cls(ch.input_labels, ch.output_labels, p_x.probs[:, None] * ch.rows,
                   renormalize=True)


@dataclass(frozen=True)
class ChannelMatrix:
    """Conditional law p(y|x), one row per input symbol."""

    input_labels: tuple
    output_labels: tuple
    rows: np.ndarray

    def __post_init__(self):
        ins = _check_labels(self.input_labels, "ChannelMatrix inputs")
        outs = _check_labels(self.output_labels, "ChannelMatrix outputs")
        rows = np.array(self.rows, dtype=float)
        if rows.shape != (len(ins), len(outs)):
            raise ValidationError(
                f"ChannelMatrix: shape {rows.shape} does not match labels "
                f"({len(ins)}, {len(outs)})"
            )
        for i, row in enumerate(rows):
            _check_weights(row, f"ChannelMatrix row {ins[i]!r}")
        rows.setflags(write=False)
        object.__setattr__(self, "input_labels", ins)
        object.__setattr__(self, "output_labels", outs)
        object.__setattr__(self, "rows", rows)


@dataclass(frozen=True)
class CodeLengthAssignment:
    labels: tuple
    lengths: tuple = field(default=())

    def __post_init__(self):
        labels = _check_labels(self.labels, "CodeLengthAssignment")
        if len(self.lengths) != len(labels):
            raise ValidationError("CodeLengthAssignment: one length per label")
        if any(float(n) != int(n) or int(n) <= 0 for n in self.lengths):
            raise ValidationError("CodeLengthAssignment: lengths must be positive integers")
        lengths = tuple(int(n) for n in self.lengths)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "lengths", lengths)

    def kraft_sum(self) -> float:
        return math.fsum(2.0 ** -n for n in self.lengths)


def _plogp_sum(p) -> float:
    # sum of p log2 p with zero terms skipped
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(np.sum(nz * np.log2(nz)))


def entropy(p: DiscretePMF) -> float:
    """Shannon entropy H(X) in bits."""
    if not isinstance(p, DiscretePMF):
        p = DiscretePMF(tuple(range(len(p))), p)
    return max(0.0, -_plogp_sum(p.probs))


def conditional_entropy(j: JointPMF) -> float:
    """H(Y|X) for a joint with rows X and columns Y.

    Rows with p(x) = 0 contribute nothing. Use ``j.transpose()`` for H(X|Y).
    """
    px = j.probs.sum(axis=1)
    total = 0.0
    for x in np.flatnonzero(px > 0):
        total -= px[x] * _plogp_sum(j.probs[x] / px[x])
    return max(0.0, total)


def kl_divergence(p: DiscretePMF, q: DiscretePMF) -> float:
    """D(p||q) in bits; ``INFINITE_DIVERGENCE`` when p is not dominated by q."""
    if p.labels != q.labels:
        raise ValidationError("kl_divergence: PMFs are over different alphabets")
    a, b = p.probs, q.probs
    support = a > 0
    if np.any(b[support] == 0):
        return INFINITE_DIVERGENCE
    d = float(np.sum(a[support] * np.log2(a[support] / b[support])))
    return max(0.0, d)


def mutual_information(j: JointPMF) -> float:
    """I(X;Y) = D(p(x,y) || p(x)p(y))."""
    px = j.probs.sum(axis=1)
    py = j.probs.sum(axis=0)
    nz = j.probs > 0
    rows, cols = np.nonzero(nz)
    # logs taken separately: p(x)p(y) can underflow for subnormal entries
    ratio = np.log2(j.probs[nz]) - np.log2(px[rows]) - np.log2(py[cols])
    return max(0.0, float(np.sum(j.probs[nz] * ratio)))


def _check_unit(value, name):
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"{name} must lie in [0, 1], got {value!r}")
    return value


def binary_entropy(theta: float) -> float:
    theta = _check_unit(theta, "theta")
    return -_plogp_sum([theta, 1.0 - theta])


def bsc_capacity(p: float) -> float:
    """Capacity 1 - H(p) of the binary symmetric channel with crossover p."""
    p = _check_unit(p, "p")
    return 1.0 - binary_entropy(p)


def bsc_mutual_information(q: float, p: float) -> float:
    """I(X;Y) for a BSC with crossover ``p`` driven by P(X=1) = ``q``.

    The output is 1 with probability q(1-p) + (1-q)p, so
    I = H(q(1-p) + (1-q)p) - H(p).
    """
    q = _check_unit(q, "q")
    p = _check_unit(p, "p")
    out_one = q * (1.0 - p) + (1.0 - q) * p
    return max(0.0, binary_entropy(min(1.0, out_one)) - binary_entropy(p))


def bsc_channel(p: float) -> ChannelMatrix:
    p = _check_unit(p, "p")
    return ChannelMatrix((0, 1), (0, 1), [[1.0 - p, p], [p, 1.0 - p]])


def _ba_eval(rows, neg_ent, w):
    """Information densities, I(w) and max density for weights ``w``."""
    q = w @ rows
    # q can only vanish where some row is positive through underflow of a
    # subnormal product; flooring it keeps those terms finite and negligible
    reached = np.any(rows > 0, axis=0)
    logq = np.where(reached, np.log2(np.maximum(q, _Q_FLOOR)), 0.0)
    d = neg_ent - rows @ logq
    live = w > 0
    return d, float(np.dot(w[live], d[live])), float(np.max(d))


def blahut_arimoto_matrix(
    rows: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    init: np.ndarray | None = None,
    callback: Callable[[int, float, float], None] | None = None,
    accelerate: bool = False,
) -> tuple[float, np.ndarray, float]:
    """Blahut-Arimoto on a raw stochastic matrix.

    Iterates until the certified gap ``max_x D(W(.|x)||qW) - I(w)`` drops
    below ``tol``. Returns ``(lower, weights, upper)``; the capacity lies in
    ``[lower, upper]``. ``callback(k, lower, upper)`` sees every iterate.

    With ``accelerate`` each iteration also tries the over-relaxed update
    ``w * 2**(mu * D)`` and keeps it only when it beats the plain update, so
    the sequence of lower bounds stays nondecreasing.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    rows = np.asarray(rows, dtype=float)
    m = rows.shape[0]
    neg_ent = (xlogy(rows, rows) / _LN2).sum(axis=1)
    w = np.full(m, 1.0 / m) if init is None else np.array(init, dtype=float)
    w = w / w.sum()
    d, lower, upper = _ba_eval(rows, neg_ent, w)
    mu = 1.0
    for k in range(int(max_iter)):
        if callback is not None:
            callback(k, lower, upper)
        if upper - lower < tol:
            return max(lower, 0.0), w, upper
        step = np.minimum(d - upper, 0.0)
        w1 = w * np.exp2(step)
        w1 /= w1.sum()
        e1 = _ba_eval(rows, neg_ent, w1)
        if accelerate:
            wm = w * np.exp2(mu * step)
            wm /= wm.sum()
            em = _ba_eval(rows, neg_ent, wm)
            if em[1] >= e1[1]:
                w1, e1 = wm, em
                mu = min(1.5 * mu, 1e3)
            else:
                mu = max(1.0, mu / 3.0)
        w = w1
        d, lower, upper = e1
    raise ConvergenceError(
        f"Blahut-Arimoto did not reach gap {tol:g} in {max_iter} iterations "
        f"(bracket [{lower:.12g}, {upper:.12g}])",
        best=(lower, w),
        bracket=(lower, upper),
    )


def blahut_arimoto(
    ch: ChannelMatrix,
    tol: float = 1e-9,
    max_iter: int = 100_000,
    callback: Callable[[int, float, float], None] | None = None,
    accelerate: bool = False,
) -> tuple[float, DiscretePMF]:
    """Capacity of a discrete memoryless channel and an input achieving it."""
    lower, w, _ = blahut_arimoto_matrix(ch.rows, tol=tol, max_iter=max_iter, callback=callback,
                                        accelerate=accelerate)
    return lower, DiscretePMF(ch.input_labels, w, renormalize=True)


def expected_code_length(p: DiscretePMF, a: CodeLengthAssignment) -> float:
    if p.labels != a.labels:
        raise ValidationError("expected_code_length: labels differ")
    return float(np.dot(p.probs, a.lengths))


def _bits(block: str, n: int) -> str:
    if not isinstance(block, str):
        block = "".join(str(int(b)) for b in block)
    if len(block) != n or set(block) - {"0", "1"}:
        raise ValidationError(f"expected a {n}-bit block of 0/1, got {block!r}")
    return block


def parity_extend(block: str) -> str:
    """Append a parity bit so the 3-bit codeword has an even number of ones."""
    block = _bits(block, 2)
    return block + str(block.count("1") % 2)


PARITY_CODEWORDS = tuple(parity_extend(f"{i:02b}") for i in range(4))


def parity_detect(block: str) -> bool:
    """True when ``block`` is not one of the four parity codewords."""
    return _bits(block, 3) not in PARITY_CODEWORDS


# Worked examples ---------------------------------------------------------

def example_source() -> DiscretePMF:
    """256 eight-bit messages: 15 frequent ones at 5 %, the rest share 25 %."""
    probs = np.full(256, 0.25 / 241)
    probs[:15] = 0.05
    return DiscretePMF(tuple(f"{i:08b}" for i in range(256)), probs, renormalize=True)


def example_code_lengths() -> CodeLengthAssignment:
    """4-bit codes for the 15 frequent messages, escape + 8 bits otherwise."""
    return CodeLengthAssignment(
        tuple(f"{i:08b}" for i in range(256)), tuple([4] * 15 + [12] * 241)
    )


def die_parity_joint() -> JointPMF:
    """Fair die X and its parity Y (0 for even faces, 1 for odd)."""
    probs = np.zeros((6, 2))
    for face in range(1, 7):
        probs[face - 1, face % 2] = 1.0 / 6.0
    return JointPMF(tuple(range(1, 7)), (0, 1), probs, renormalize=True)

