"""Magnitude-pruning masks, the cubic sparsity schedule and a toy GMP trainer.

Masks are boolean numpy arrays where ``True`` marks a kept weight. Every
selection ranks weights by (previously kept, magnitude, lowest index), so
results are deterministic and, once a weight has been zeroed, it is never
selected ahead of a surviving one.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergedError, DomainError, EmptySupportError, FormatError


@dataclass(frozen=True)
class NmPattern:
    n: int
    m: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.m) != self.m:
            raise DomainError("n and m must be integers")
        if not 0 < self.n < self.m:
            raise DomainError(f"need 0 < n < m, got {self.n}:{self.m}")

    @classmethod
    def parse(cls, text: str) -> "NmPattern":
        try:
            n, m = (int(x) for x in text.split(":"))
        except ValueError:
            raise DomainError(f"pattern must look like 'n:m', got {text!r}") from None
        return cls(n, m)

    @property
    def max_sparsity(self) -> float:
        return 1.0 - self.n / self.m

    def __str__(self):
        return f"{self.n}:{self.m}"


@dataclass(frozen=True)
class PruneSchedule:
    final_sparsity: float
    start_frac: float = 0.25
    end_frac: float = 0.75
    update_every: int = 100
    cubic_exponent: int = 3

    def __post_init__(self):
        if not 0.0 <= self.final_sparsity < 1.0:
            raise DomainError("final_sparsity must lie in [0, 1)")
        if not 0.0 <= self.start_frac < self.end_frac <= 1.0:
            raise DomainError("need 0 <= start_frac < end_frac <= 1")
        if int(self.update_every) != self.update_every or self.update_every < 1:
            raise DomainError("update_every must be a positive integer")
        if int(self.cubic_exponent) != self.cubic_exponent or self.cubic_exponent < 1:
            raise DomainError("cubic_exponent must be a positive integer")


def schedule_sparsity(sched: PruneSchedule, t: float) -> float:
    """Target sparsity at training progress ``t`` in [0, 1]."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"training progress must lie in [0, 1], got {t}")
    if t <= sched.start_frac:
        return 0.0
    if t >= sched.end_frac:
        return sched.final_sparsity
    tau = (t - sched.start_frac) / (sched.end_frac - sched.start_frac)
    return sched.final_sparsity * (1.0 - (1.0 - tau) ** sched.cubic_exponent)


# ---------------------------------------------------------------------------
# Masks
# ---------------------------------------------------------------------------


def kept_count(size: int, sparsity: float) -> int:
    # Round first: (1 - 0.7) * 10 is 3.0000000000000004 in binary floating point.
    return int(math.ceil(round((1.0 - sparsity) * size, 9)))


def _as_values(values) -> np.ndarray:
    w = np.asarray(values, dtype=float).ravel()
    if w.size == 0:
        raise DomainError("cannot prune an empty array")
    return w


def _rank(w: np.ndarray, prior: Optional[np.ndarray]) -> np.ndarray:
    """rank[i] = position of entry i in keep-preference order (0 is kept first)."""
    idx = np.arange(w.size)
    keys = [idx, -np.abs(w)]
    if prior is not None:
        prior = np.asarray(prior, dtype=bool).ravel()
        if prior.shape != w.shape:
            raise DomainError("prior mask length does not match values")
        keys.append(~prior)
    order = np.lexsort(keys)
    rank = np.empty_like(order)
    rank[order] = idx
    return rank


def gmp_mask(values, target_sparsity: float, prior=None) -> np.ndarray:
    """Keep the ceil((1 - s) * len) largest-magnitude entries."""
    w = _as_values(values)
    s = float(target_sparsity)
    if not 0.0 <= s < 1.0:
        raise DomainError(f"target sparsity must lie in [0, 1), got {s}")
    rank = _rank(w, prior)
    return rank < kept_count(w.size, s)


def nm_gradual_mask(values, pattern: NmPattern, target_sparsity: float, prior=None) -> np.ndarray:
    """Unstructured top-k that never leaves fewer than n kept entries in a group of m.

    The n largest entries of each group are forced into the kept set first;
    the remaining budget goes to the largest of everything else.
    """
    w = _as_values(values)
    s = float(target_sparsity)
    n, m = pattern.n, pattern.m
    if w.size % m:
        raise DomainError(f"length {w.size} is not a multiple of the group size {m}")
    if s < 0.0 or s > pattern.max_sparsity + 1e-12:
        raise DomainError(f"target sparsity {s} exceeds {pattern} limit {pattern.max_sparsity}")
    groups = w.size // m
    rank = _rank(w, prior)
    in_group = np.argsort(rank.reshape(groups, m), axis=1, kind="stable")[:, :n]
    forced = np.zeros(w.size, dtype=bool)
    forced[(in_group + (np.arange(groups) * m)[:, None]).ravel()] = True
    k = max(kept_count(w.size, s), n * groups)
    extra = k - n * groups
    rest = np.flatnonzero(~forced)
    rest = rest[np.argsort(rank[rest], kind="stable")][:extra]
    forced[rest] = True
    return forced


@dataclass(eq=False)
class MaskedTensor:
    values: np.ndarray
    mask: np.ndarray
    group: Optional[NmPattern] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        self.mask = np.asarray(self.mask, dtype=bool).ravel()
        if self.values.shape != self.mask.shape:
            raise DomainError("values and mask must have the same length")
        if self.group is not None and self.values.size % self.group.m:
            raise DomainError(f"length {self.values.size} is not a multiple of {self.group.m}")

    @classmethod
    def dense(cls, values, group: Optional[NmPattern] = None) -> "MaskedTensor":
        values = np.asarray(values, dtype=float).ravel()
        return cls(values, np.ones(values.size, dtype=bool), group)

    @property
    def density(self) -> float:
        return float(self.mask.mean())

    @property
    def sparsity(self) -> float:
        return 1.0 - self.density

    def to_bytes(self) -> bytes:
        return dump_tensor(self)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "MaskedTensor":
        return load_tensor(blob)


def apply_mask(t: MaskedTensor) -> MaskedTensor:
    return MaskedTensor(np.where(t.mask, t.values, 0.0), t.mask.copy(), t.group)


def masked_rms(values, mask) -> float:
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    kept = values[mask]
    if kept.size == 0:
        raise EmptySupportError("RMS over an empty support: every entry is pruned")
    return float(np.sqrt(np.mean(kept * kept)))


def sparsity_aware_rms(t: MaskedTensor) -> float:
    """Root-mean-square over unpruned entries only."""
    return masked_rms(t.values, t.mask)


# ---------------------------------------------------------------------------
# Binary layout
# ---------------------------------------------------------------------------

MAGIC = b"SPLM"
TENSOR_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHQII")  # magic, version, flags, length, n, m
_HAS_GROUP = 1


def dump_tensor(t: MaskedTensor) -> bytes:
    flags = _HAS_GROUP if t.group is not None else 0
    n, m = (t.group.n, t.group.m) if t.group is not None else (0, 0)
    header = _HEADER.pack(MAGIC, TENSOR_FORMAT_VERSION, flags, t.values.size, n, m)
    body = t.values.astype("<f8").tobytes()
    bits = np.packbits(t.mask.astype(np.uint8), bitorder="little").tobytes()
    return header + body + bits


def load_tensor(blob: bytes) -> MaskedTensor:
    if len(blob) < _HEADER.size:
        raise FormatError("truncated tensor header")
    magic, version, flags, length, n, m = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError("not a sparselaw tensor file (bad magic)")
    if version != TENSOR_FORMAT_VERSION:
        raise FormatError(f"unsupported tensor format_version {version}")
    mask_bytes = (length + 7) // 8
    expected = _HEADER.size + 8 * length + mask_bytes
    if len(blob) != expected:
        raise FormatError(f"tensor file has {len(blob)} bytes, expected {expected}")
    off = _HEADER.size
    values = np.frombuffer(blob, dtype="<f8", count=length, offset=off).astype(float)
    bits = np.frombuffer(blob, dtype=np.uint8, count=mask_bytes, offset=off + 8 * length)
    mask = np.unpackbits(bits, count=length, bitorder="little").astype(bool)
    group = NmPattern(n, m) if flags & _HAS_GROUP else None
    return MaskedTensor(values, mask, group)


# ---------------------------------------------------------------------------
# Toy trainer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeastSquaresProblem:
    """Minimize ||X w - y||^2 / (2 n) starting from ``w0``."""

    X: np.ndarray
    y: np.ndarray
    w0: np.ndarray

    @classmethod
    def random(cls, dim: int = 64, samples: int = 256, noise: float = 0.0, seed: int = 0):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((samples, dim))
        target = rng.standard_normal(dim)
        y = X @ target + noise * rng.standard_normal(samples)
        return cls(X, y, 0.1 * rng.standard_normal(dim))

    def loss(self, w: np.ndarray) -> float:
        r = self.X @ w - self.y
        return float(r @ r) / (2 * len(self.y))

    def grad(self, w: np.ndarray) -> np.ndarray:
        return self.X.T @ (self.X @ w - self.y) / len(self.y)

    def lipschitz(self) -> float:
        return float(np.linalg.eigvalsh(self.X.T @ self.X / len(self.y))[-1])


@dataclass(frozen=True)
class RelativeLR:
    """Step size base_lr * max(rms of kept weights, epsilon), with optional update-RMS clipping."""

    base_lr: float = 0.1
    epsilon: float = 1e-3
    clip_threshold: Optional[float] = 1.0


@dataclass
class TraceRow:
    step: int
    sparsity: float
    loss: float
    rms: float


@dataclass
class TrainingTrace:
    rows: list[TraceRow] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)
    mask_steps: list[int] = field(default_factory=list)
    weights: Optional[np.ndarray] = None

    @property
    def final_mask(self) -> np.ndarray:
        return self.masks[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "sparsity", "loss", "rms"])
        for r in self.rows:
            writer.writerow([r.step, f"{r.sparsity:.17g}", f"{r.loss:.17g}", f"{r.rms:.17g}"])
        return buf.getvalue()


def toy_train(problem: LeastSquaresProblem, sched: PruneSchedule, optimizer: RelativeLR,
              total_steps: int, pattern: Optional[NmPattern] = None) -> TrainingTrace:
    """Gradual magnitude pruning on a least-squares problem with hard-zeroed masks."""
    if total_steps < sched.update_every:
        raise DomainError("total_steps must cover at least one mask update period")
    if pattern is not None and sched.final_sparsity > pattern.max_sparsity + 1e-12:
        raise DomainError(f"final sparsity exceeds what {pattern} allows")
    w = np.array(problem.w0, dtype=float)
    if pattern is not None and w.size % pattern.m:
        raise DomainError(f"weight count {w.size} is not a multiple of {pattern.m}")
    mask = np.ones(w.size, dtype=bool)
    trace = TrainingTrace()
    initial = problem.loss(w)
    for step in range(total_steps + 1):
        if step % sched.update_every == 0 or step == total_steps:
            s = schedule_sparsity(sched, step / total_steps)
            if pattern is None:
                mask = gmp_mask(w, s, prior=mask)
            else:
                mask = nm_gradual_mask(w, pattern, s, prior=mask)
            w[~mask] = 0.0
            trace.masks.append(mask.copy())
            trace.mask_steps.append(step)
        if step < total_steps:
            g = problem.grad(w) * mask
            if optimizer.clip_threshold is not None:
                g_rms = masked_rms(g, mask)
                g = g / max(1.0, g_rms / optimizer.clip_threshold)
            lr = optimizer.base_lr * max(masked_rms(w, mask), optimizer.epsilon)
            w = w - lr * g
            w[~mask] = 0.0
        loss = problem.loss(w)
        if not math.isfinite(loss) or loss > 1e6 * max(initial, 1e-300):
            raise DivergedError(f"loss {loss:g} at step {step} exceeds 1e6x the initial {initial:g}")
        trace.rows.append(TraceRow(step, 1.0 - float(mask.mean()), loss, masked_rms(w, mask)))
    trace.weights = w
    return trace
