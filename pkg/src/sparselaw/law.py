"""Joint sparsity/size/data scaling law: data model, evaluation, gain and inversions.

The law is

    L(S, N, D) = (a_S (1 - S)^b_S + c_S) * N^-b_N + (a_D / D)^b_D + c

with S the sparsity, N the number of non-zero parameters and D the amount of
training data. At S = 0 it collapses to the dense form with
a_N^b_N = a_S + c_S.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DomainError, FormatError, UnreachableLossError

FORMAT_VERSION = 1

COEFF_NAMES = ("a_S", "b_S", "c_S", "b_N", "a_D", "b_D", "c")


@dataclass(frozen=True)
class ScalingLawCoefficients:
    a_S: float
    b_S: float
    c_S: float
    b_N: float
    a_D: float
    b_D: float
    c: float
    family: str = "custom"
    pattern: str = "unstructured"

    def __post_init__(self):
        for name in COEFF_NAMES:
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or isinstance(value, bool):
                raise DomainError(f"{name} must be a real number, got {value!r}")
            object.__setattr__(self, name, float(value))
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        for name in COEFF_NAMES[:-1]:
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be strictly positive, got {getattr(self, name)}")
        if self.c < 0:
            raise DomainError(f"c must be non-negative, got {self.c}")

    @property
    def dense_size_coefficient(self) -> float:
        """a_S + c_S, i.e. a_N ** b_N of the dense law."""
        return self.a_S + self.c_S

    def values(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in COEFF_NAMES])

    def with_values(self, **changes) -> "ScalingLawCoefficients":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in COEFF_NAMES}
        d["family"] = self.family
        d["pattern"] = self.pattern
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingLawCoefficients":
        d = dict(d)
        version = d.pop("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported coefficients format_version {version!r}")
        expected = set(COEFF_NAMES) | {"family", "pattern"}
        unknown = set(d) - expected
        if unknown:
            raise FormatError(f"unknown coefficient fields: {', '.join(sorted(unknown))}")
        missing = expected - set(d)
        if missing:
            raise FormatError(f"missing coefficient fields: {', '.join(sorted(missing))}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps({"format_version": FORMAT_VERSION, **self.to_dict()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScalingLawCoefficients":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid coefficients JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise FormatError("coefficients JSON must be an object")
        return cls.from_dict(data)


# Published fits (ViT on JFT-4B measured in images, T5 on C4 in tokens).
VIT_JFT = ScalingLawCoefficients(
    a_S=2.94e2, b_S=0.821, c_S=4.68e2, b_N=0.392, a_D=2.37e8, b_D=0.890, c=4.517,
    family="vit-jft", pattern="unstructured",
)
T5_C4 = ScalingLawCoefficients(
    a_S=1.68e1, b_S=0.722, c_S=4.50e1, b_N=0.245, a_D=6.90e8, b_D=0.203, c=0.651,
    family="t5-c4", pattern="unstructured",
)
# Only the sparsity term was refit for n:m; the rest is shared with T5_C4.
T5_C4_NM = replace(T5_C4, a_S=8.64e1, b_S=2.752, c_S=5.36e2, pattern="n:m")

PRESETS = {
    "vit-jft": VIT_JFT,
    "t5-c4": T5_C4,
    "t5-c4-nm": T5_C4_NM,
}


@dataclass(frozen=True)
class RunRecord:
    sparsity: float
    nonzero_params: float
    data: float
    loss: float
    pattern: str = "unstructured"

    def __post_init__(self):
        for name in ("sparsity", "nonzero_params", "data", "loss"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise DomainError(f"{name} must be a real number, got {value!r}") from None
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if not 0.0 <= self.sparsity < 1.0:
            raise DomainError(f"sparsity must lie in [0, 1), got {self.sparsity}")
        for name in ("nonzero_params", "data", "loss"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class SweepDataset:
    records: tuple[RunRecord, ...]
    family: str
    data_unit: str = "tokens"

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise DomainError("a sweep dataset needs at least one record")

    def __len__(self):
        return len(self.records)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Columns (S, N, D, L) as float arrays."""
        S = np.array([r.sparsity for r in self.records])
        N = np.array([r.nonzero_params for r in self.records])
        D = np.array([r.data for r in self.records])
        L = np.array([r.loss for r in self.records])
        return S, N, D, L

    def subset(self, indices: Sequence[int]) -> "SweepDataset":
        return SweepDataset(tuple(self.records[i] for i in indices), self.family, self.data_unit)


def _check_inputs(S, N=None, D=None):
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise DomainError("sparsity must be finite")
    if np.any(S >= 1.0):
        raise DomainError("sparsity must be < 1 (S = 1 leaves no parameters)")
    if np.any(S < 0.0):
        raise DomainError("sparsity must be >= 0")
    out = [S]
    for name, x in (("N", N), ("D", D)):
        if x is None:
            continue
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)) or np.any(x <= 0):
            raise DomainError(f"{name} must be finite and positive")
        out.append(x)
    return out


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def sparsity_factor(coeffs: ScalingLawCoefficients, S):
    """a_S (1 - S)^b_S + c_S."""
    (S,) = _check_inputs(S)
    return _scalar(coeffs.a_S * (1.0 - S) ** coeffs.b_S + coeffs.c_S)


def capacity_term(coeffs: ScalingLawCoefficients, S, N):
    """Loss floor at infinite data, without the irreducible constant."""
    S, N = _check_inputs(S, N)
    return _scalar((coeffs.a_S * (1.0 - S) ** coeffs.b_S + coeffs.c_S) * N ** -coeffs.b_N)


def data_term(coeffs: ScalingLawCoefficients, D):
    D = np.asarray(D, dtype=float)
    if not np.all(np.isfinite(D)) or np.any(D <= 0):
        raise DomainError("D must be finite and positive")
    return _scalar((coeffs.a_D / D) ** coeffs.b_D)


def eval_law(coeffs: ScalingLawCoefficients, S, N, D):
    """Predicted loss; accepts scalars or broadcastable arrays."""
    S, N, D = _check_inputs(S, N, D)
    cap = (coeffs.a_S * (1.0 - S) ** coeffs.b_S + coeffs.c_S) * N ** -coeffs.b_N
    return _scalar(cap + (coeffs.a_D / D) ** coeffs.b_D + coeffs.c)


def gain(coeffs: ScalingLawCoefficients, S):
    """Dense-size multiplier matching the capacity of a model at sparsity ``S``."""
    (S,) = _check_inputs(S)
    ratio = (coeffs.a_S * (1.0 - S) ** coeffs.b_S + coeffs.c_S) / (coeffs.a_S + coeffs.c_S)
    return _scalar(ratio ** (-1.0 / coeffs.b_N))


def invert_for_data(coeffs: ScalingLawCoefficients, L: float, S: float, N: float) -> float:
    """Data budget D at which a model with sparsity S and N non-zeros reaches loss L."""
    S, N = (float(x) for x in _check_inputs(S, N))
    L = float(L)
    if not math.isfinite(L) or L <= 0:
        raise DomainError("L must be finite and positive")
    floor = capacity_term(coeffs, S, N) + coeffs.c
    excess = L - floor
    if excess <= 0:
        raise UnreachableLossError(
            f"loss {L!r} is at or below the infinite-data floor {floor!r} for S={S}, N={N}"
        )
    return coeffs.a_D * excess ** (-1.0 / coeffs.b_D)


def invert_for_size(coeffs: ScalingLawCoefficients, L: float, S: float, D: float) -> float:
    """Non-zero parameter count N at which sparsity S and data D reach loss L."""
    S, D = (float(x) for x in _check_inputs(S, D=D))
    L = float(L)
    if not math.isfinite(L) or L <= 0:
        raise DomainError("L must be finite and positive")
    floor = data_term(coeffs, D) + coeffs.c
    excess = L - floor
    if excess <= 0:
        raise UnreachableLossError(
            f"loss {L!r} is at or below the infinite-size floor {floor!r} for D={D}"
        )
    factor = coeffs.a_S * (1.0 - S) ** coeffs.b_S + coeffs.c_S
    return (factor / excess) ** (1.0 / coeffs.b_N)


def load_coefficients(source: str) -> ScalingLawCoefficients:
    """Preset name (``t5-c4``, ...) or path to a coefficients JSON file."""
    if source in PRESETS:
        return PRESETS[source]
    with open(source, encoding="utf-8") as fh:
        return ScalingLawCoefficients.from_json(fh.read())


__all__ = [
    "COEFF_NAMES",
    "FORMAT_VERSION",
    "PRESETS",
    "RunRecord",
    "ScalingLawCoefficients",
    "SweepDataset",
    "T5_C4",
    "T5_C4_NM",
    "VIT_JFT",
    "capacity_term",
    "data_term",
    "eval_law",
    "gain",
    "invert_for_data",
    "invert_for_size",
    "load_coefficients",
    "sparsity_factor",
]
