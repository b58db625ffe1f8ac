"""Robust multi-start fitting of scaling-law coefficients.

The objective is the mean Huber loss of prediction residuals, either on
log-losses or on raw losses. All seven coefficients are optimized as
logarithms so they stay positive; a subset can be frozen to fit only the
sparsity term on top of known dense coefficients.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateDataError, DomainError, FormatError
from .law import COEFF_NAMES, FORMAT_VERSION, ScalingLawCoefficients, SweepDataset

DEFAULT_START_RANGES = {
    "a_S": (1e-2, 1e4),
    "b_S": (0.05, 3.0),
    "c_S": (1e-2, 1e4),
    "b_N": (0.05, 3.0),
    "a_D": (1e-2, 1e4),
    "b_D": (0.05, 3.0),
    "c": (0.0, 10.0),
}

SPARSITY_PARAMS = ("a_S", "b_S", "c_S")


def huber(delta: float, r):
    """0.5 r^2 inside [-delta, delta], delta (|r| - delta / 2) outside."""
    if not delta > 0:
        raise DomainError("huber delta must be positive")
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    out = np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FitConfig:
    huber_delta: float = 1e-3
    log_loss: bool = True
    num_starts: int = 20
    start_ranges: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_START_RANGES))
    max_iterations: int = 5000
    seed: int = 0
    frozen: Optional[Mapping[str, float]] = None
    tolerance: float = 1e-10

    def __post_init__(self):
        if not self.huber_delta > 0:
            raise DomainError("huber_delta must be positive")
        if int(self.num_starts) != self.num_starts or self.num_starts < 1:
            raise DomainError("num_starts must be a positive integer")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise DomainError("max_iterations must be a positive integer")
        ranges = dict(DEFAULT_START_RANGES)
        ranges.update(self.start_ranges)
        for name, (lo, hi) in ranges.items():
            if name not in COEFF_NAMES:
                raise DomainError(f"unknown parameter in start_ranges: {name}")
            if not 0 <= lo < hi:
                raise DomainError(f"start range for {name} must satisfy 0 <= lo < hi")
        object.__setattr__(self, "start_ranges", ranges)
        if self.frozen is not None:
            unknown = set(self.frozen) - set(COEFF_NAMES)
            if unknown:
                raise DomainError(f"unknown frozen parameters: {', '.join(sorted(unknown))}")
            object.__setattr__(self, "frozen", {k: float(v) for k, v in self.frozen.items()})

    @classmethod
    def language(cls, **kw) -> "FitConfig":
        """Huber of log-loss with delta 0.001 (used for T5/C4)."""
        kw.setdefault("huber_delta", 1e-3)
        return cls(log_loss=True, **kw)

    @classmethod
    def vision(cls, **kw) -> "FitConfig":
        """Huber of raw loss with delta 0.01 (used for ViT/JFT)."""
        kw.setdefault("huber_delta", 1e-2)
        return cls(log_loss=False, **kw)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "huber_delta": self.huber_delta,
            "log_loss": self.log_loss,
            "num_starts": self.num_starts,
            "start_ranges": {k: list(v) for k, v in self.start_ranges.items()},
            "max_iterations": self.max_iterations,
            "seed": self.seed,
            "frozen": dict(self.frozen) if self.frozen is not None else None,
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        d = dict(d)
        if d.pop("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise FormatError("unsupported fit config format_version")
        if "start_ranges" in d:
            d["start_ranges"] = {k: tuple(v) for k, v in d["start_ranges"].items()}
        return cls(**d)


@dataclass(frozen=True)
class FitResult:
    coefficients: ScalingLawCoefficients
    objective_value: float
    residuals: np.ndarray
    starts_tried: int
    converged: bool
    start_objectives: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "coefficients": self.coefficients.to_dict(),
            "objective_value": self.objective_value,
            "residuals": [float(r) for r in self.residuals],
            "starts_tried": self.starts_tried,
            "converged": self.converged,
            "start_objectives": [float(v) for v in self.start_objectives],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        if d.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
            raise FormatError("unsupported fit result format_version")
        return cls(
            coefficients=ScalingLawCoefficients.from_dict(d["coefficients"]),
            objective_value=float(d["objective_value"]),
            residuals=np.asarray(d["residuals"], dtype=float),
            starts_tried=int(d["starts_tried"]),
            converged=bool(d["converged"]),
            start_objectives=tuple(float(v) for v in d.get("start_objectives", ())),
        )


class _Objective:
    """Mean Huber objective over the free log-parameters, with analytic gradient."""

    def __init__(self, data: SweepDataset, config: FitConfig, free: list[str], fixed: dict):
        S, N, D, L = data.arrays()
        self.log_density = np.log1p(-S)
        self.log_n = np.log(N)
        self.log_d = np.log(D)
        self.target = np.log(L) if config.log_loss else L
        self.delta = config.huber_delta
        self.log_loss = config.log_loss
        self.free = free
        self.fixed = fixed
        self.index = [COEFF_NAMES.index(name) for name in free]

    def params(self, theta: np.ndarray) -> np.ndarray:
        p = np.array([self.fixed.get(name, 0.0) for name in COEFF_NAMES])
        p[self.index] = np.exp(theta)
        return p

    def predict(self, p: np.ndarray):
        a_s, b_s, c_s, b_n, a_d, b_d, c = p
        size = np.exp(-b_n * self.log_n)
        sparse = a_s * np.exp(b_s * self.log_density)
        cap = (sparse + c_s) * size
        log_ratio = math.log(a_d) - self.log_d
        dat = np.exp(b_d * log_ratio)
        pred = cap + dat + c
        # d pred / d log(param), one row per coefficient
        jac = np.stack([
            sparse * size,
            sparse * self.log_density * b_s * size,
            c_s * size,
            -cap * self.log_n * b_n,
            dat * b_d,
            dat * log_ratio * b_d,
            np.full_like(pred, c),
        ])
        return pred, jac

    def residuals(self, p: np.ndarray) -> np.ndarray:
        pred, _ = self.predict(p)
        return (np.log(pred) if self.log_loss else pred) - self.target

    def __call__(self, theta: np.ndarray):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            p = self.params(theta)
            pred, jac = self.predict(p)
            if self.log_loss:
                r = np.log(pred) - self.target
                jac = jac / pred
            else:
                r = pred - self.target
            value = float(np.mean(huber(self.delta, r)))
            grad = jac[self.index] @ np.clip(r, -self.delta, self.delta) / r.size
        if not math.isfinite(value) or not np.all(np.isfinite(grad)):
            return math.inf, np.zeros_like(theta)
        return value, grad


def _check_identifiable(data: SweepDataset, min_records: int, need_size_and_data: bool):
    S, N, D, _ = data.arrays()
    if len(data) < min_records:
        raise DegenerateDataError(f"need at least {min_records} records, got {len(data)}")
    axes = [("sparsity", S)]
    if need_size_and_data:
        axes += [("nonzero_params", N), ("data", D)]
    for name, col in axes:
        if np.unique(col).size < 2:
            raise DegenerateDataError(f"need at least two distinct {name} values")


def _sample_start(rng: np.random.Generator, config: FitConfig, free: list[str]) -> np.ndarray:
    theta = np.empty(len(free))
    for i, name in enumerate(free):
        lo, hi = config.start_ranges[name]
        if lo > 0:
            theta[i] = rng.uniform(math.log(lo), math.log(hi))
        else:
            # Ranges touching zero (the irreducible loss) are sampled uniformly.
            theta[i] = math.log(max(rng.uniform(lo, hi), 1e-12))
    return theta


def _fit(data: SweepDataset, config: FitConfig, fixed: dict, family: str, pattern: str) -> FitResult:
    free = [name for name in COEFF_NAMES if name not in fixed]
    objective = _Objective(data, config, free, fixed)
    rng = np.random.default_rng(config.seed)
    best = None
    start_values = []
    any_converged = False
    for i in range(config.num_starts):
        theta0 = _sample_start(rng, config, free)
        res = minimize(objective, theta0, jac=True, method="BFGS",
                       options={"gtol": config.tolerance, "maxiter": config.max_iterations})
        value = float(res.fun)
        start_values.append(value)
        any_converged |= bool(res.success)
        # strict < keeps the lowest start index among ties
        if math.isfinite(value) and (best is None or value < best[0]):
            best = (value, res.x)
    if best is None:
        raise DegenerateDataError("no start produced a finite objective")
    p = objective.params(best[1])
    values = dict(zip(COEFF_NAMES, p))
    values.update(fixed)
    coeffs = ScalingLawCoefficients(**values, family=family, pattern=pattern)
    final_value = fit_objective(data, coeffs, config)
    return FitResult(
        coefficients=coeffs,
        objective_value=final_value,
        residuals=objective.residuals(coeffs.values()),
        starts_tried=config.num_starts,
        converged=any_converged,
        start_objectives=tuple(start_values),
    )


def fit_objective(data: SweepDataset, coeffs: ScalingLawCoefficients, config: FitConfig) -> float:
    """Mean Huber loss of ``coeffs`` on ``data`` under ``config``'s transform."""
    objective = _Objective(data, config, [], {})
    r = objective.residuals(coeffs.values())
    return float(np.mean(huber(config.huber_delta, r)))


def fit_full(data: SweepDataset, config: FitConfig) -> FitResult:
    """Fit all seven coefficients (minus any in ``config.frozen``)."""
    _check_identifiable(data, 8, need_size_and_data=True)
    fixed = dict(config.frozen or {})
    pattern = _dominant_pattern(data)
    return _fit(data, config, fixed, data.family, pattern)


def fit_sparsity_only(data: SweepDataset, dense_coeffs: ScalingLawCoefficients,
                      config: FitConfig) -> FitResult:
    """Refit a_S, b_S, c_S with the size, data and irreducible terms held fixed."""
    _check_identifiable(data, 3, need_size_and_data=False)
    fixed = {name: getattr(dense_coeffs, name) for name in COEFF_NAMES if name not in SPARSITY_PARAMS}
    if config.frozen:
        fixed.update({k: v for k, v in config.frozen.items() if k in SPARSITY_PARAMS})
    config = replace(config, frozen=fixed)
    return _fit(data, config, fixed, dense_coeffs.family, _dominant_pattern(data))


def _dominant_pattern(data: SweepDataset) -> str:
    patterns = {r.pattern for r in data.records if r.sparsity > 0}
    if not patterns or patterns == {"unstructured"}:
        return "unstructured"
    return "n:m" if all(":" in p for p in patterns) else "mixed"


def residuals_csv(data: SweepDataset, result: FitResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["family", "pattern", "sparsity", "nonzero_params", "data", "loss", "residual"])
    for rec, r in zip(data.records, result.residuals):
        writer.writerow([data.family, rec.pattern] + [
            f"{x:.17g}" for x in (rec.sparsity, rec.nonzero_params, rec.data, rec.loss, r)])
    return buf.getvalue()
