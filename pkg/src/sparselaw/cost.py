"""Training-cost accounting and compute-optimal sparsity analysis.

Two cost conventions are supported. In ``dense`` mode a model with sparsity S
and N non-zeros is charged as the dense model of size N / (1 - S) it starts
from; in ``sparse`` mode sparsity is credited as soon as it appears under the
gradual pruning schedule (dense prefix, cubic ramp, sparse suffix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NoSolutionError, NonUnimodalError
from .law import ScalingLawCoefficients, eval_law

COST_MODES = ("dense", "sparse")

# Largest sparsity the numeric search will consider; 1/(1 - S) diverges at 1.
SEARCH_UPPER = 0.999


@dataclass(frozen=True)
class CostModel:
    flops_per_param_datum: float = 6.0
    cost_mode: str = "sparse"
    schedule_start: float = 0.25
    schedule_end: float = 0.75
    cubic_exponent: int = 3

    def __post_init__(self):
        if not (self.flops_per_param_datum > 0 and math.isfinite(self.flops_per_param_datum)):
            raise DomainError("flops_per_param_datum must be positive")
        if self.cost_mode not in COST_MODES:
            raise DomainError(f"cost_mode must be one of {COST_MODES}, got {self.cost_mode!r}")
        if not 0.0 <= self.schedule_start < self.schedule_end <= 1.0:
            raise DomainError("need 0 <= schedule_start < schedule_end <= 1")
        if int(self.cubic_exponent) != self.cubic_exponent or self.cubic_exponent < 1:
            raise DomainError("cubic_exponent must be a positive integer")

    @classmethod
    def encoder_decoder(cls, **kwargs) -> "CostModel":
        return cls(flops_per_param_datum=3.0, **kwargs)

    def _ramp_density_loss(self) -> float:
        # Mean of 1 - (1 - tau)^p over tau in [0, 1].
        p = self.cubic_exponent
        return p / (p + 1.0)

    def multiplier(self, S):
        """Training-cost factor relative to a dense model with N parameters."""
        S = _check_sparsity(S)
        if self.cost_mode == "dense":
            return _scalar(1.0 / (1.0 - S))
        width = self.schedule_end - self.schedule_start
        pre_and_ramp = self.schedule_start + width * (1.0 - self._ramp_density_loss() * S)
        return _scalar(pre_and_ramp / (1.0 - S) + (1.0 - self.schedule_end))

    def multiplier_derivative(self, S):
        S = _check_sparsity(S)
        if self.cost_mode == "dense":
            return _scalar(1.0 / (1.0 - S) ** 2)
        width = self.schedule_end - self.schedule_start
        num = self.schedule_start + width * (1.0 - self._ramp_density_loss())
        return _scalar(num / (1.0 - S) ** 2)


def _check_sparsity(S):
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)) or np.any(S < 0) or np.any(S >= 1.0):
        raise DomainError("sparsity must lie in [0, 1)")
    return S


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def _positive(name, x):
    x = float(x)
    if not (math.isfinite(x) and x > 0):
        raise DomainError(f"{name} must be finite and positive, got {x}")
    return x


def cmul(S):
    """Sparse-FLOPs multiplier for the default 25%-75% cubic schedule."""
    S = _check_sparsity(S)
    return _scalar((0.25 + 0.50 * (1.0 - 0.75 * S)) / (1.0 - S) + 0.25)


def cmul_derivative(S):
    S = _check_sparsity(S)
    return _scalar(0.375 / (1.0 - S) ** 2)


def training_flops(model: CostModel, N, D, S):
    return _scalar(model.flops_per_param_datum * np.asarray(N, float) * np.asarray(D, float)
                   * model.multiplier(S))


def data_for_compute(model: CostModel, C, N, S):
    """Data a model with sparsity S and N non-zeros can consume under budget C."""
    C = np.asarray(C, dtype=float)
    N = np.asarray(N, dtype=float)
    if np.any(~np.isfinite(C)) or np.any(C <= 0):
        raise DomainError("compute must be finite and positive")
    if np.any(~np.isfinite(N)) or np.any(N <= 0):
        raise DomainError("N must be finite and positive")
    return _scalar(C / (model.flops_per_param_datum * N * model.multiplier(S)))


# ---------------------------------------------------------------------------
# Compute-optimal dense frontier
# ---------------------------------------------------------------------------


def chinchilla_optimal(coeffs: ScalingLawCoefficients, model: CostModel, C: float) -> tuple[float, float]:
    """Loss-minimizing dense (N, D) with flops_per_param_datum * N * D = C."""
    C = _positive("compute", C)
    k = model.flops_per_param_datum
    A = coeffs.dense_size_coefficient
    bN, bD = coeffs.b_N, coeffs.b_D
    # b_N A N^-b_N = b_D (a_D k N / C)^b_D, solved in log space.
    log_n = (math.log(bN * A / bD) + bD * (math.log(C) - math.log(coeffs.a_D * k))) / (bN + bD)
    N = math.exp(log_n)
    return N, C / (k * N)


def chinchilla_data(coeffs: ScalingLawCoefficients, N: float) -> float:
    """Data budget that makes a dense model of size N compute-optimal."""
    N = _positive("N", N)
    A = coeffs.dense_size_coefficient
    data_term = coeffs.b_N * A * N ** -coeffs.b_N / coeffs.b_D
    return coeffs.a_D * data_term ** (-1.0 / coeffs.b_D)


# ---------------------------------------------------------------------------
# Optimal sparsity
# ---------------------------------------------------------------------------


def optimal_sparsity_closed(coeffs: ScalingLawCoefficients, N: float, C: float,
                            model: CostModel | None = None) -> float:
    """Closed-form loss-minimizing sparsity under dense cost accounting.

    Setting dL/dS = 0 with D = C (1 - S) / (k N) gives
    (1 - S)^(b_S + b_D) = b_D a_D^b_D N^b_N (C / k N)^-b_D / (a_S b_S),
    clamped at S = 0 when the right-hand side exceeds one.
    """
    model = model or CostModel(cost_mode="dense")
    if model.cost_mode != "dense":
        raise DomainError("the closed form only holds for dense cost accounting")
    N = _positive("N", N)
    C = _positive("compute", C)
    bS, bN, bD = coeffs.b_S, coeffs.b_N, coeffs.b_D
    log_const = math.log(bD / (coeffs.a_S * bS)) + bD * math.log(coeffs.a_D)
    log_density = (log_const + bN * math.log(N)) / (bD + bS) \
        - bD / (bD + bS) * math.log(C / (model.flops_per_param_datum * N))
    return max(1.0 - math.exp(log_density), 0.0)


INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-7,
                   max_iter: int = 200) -> float:
    """Minimizer of a unimodal ``f`` on [lo, hi], to interval width ``tol``."""
    a, b = float(lo), float(hi)
    x1 = b - INV_PHI * (b - a)
    x2 = a + INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - INV_PHI * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + INV_PHI * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def _check_unimodal(values: np.ndarray, where: str) -> None:
    scale = np.max(np.abs(values))
    diffs = np.diff(values)
    noise = 64 * np.finfo(float).eps * scale
    signs = np.where(diffs > noise, 1, np.where(diffs < -noise, -1, 0))
    nonzero = signs[signs != 0]
    # Allowed shapes: -...- +...+ (a single switch from descent to ascent).
    if np.any(np.diff(nonzero) < 0):
        raise NonUnimodalError(f"loss along sparsity is not unimodal ({where})")


def loss_at_compute(coeffs: ScalingLawCoefficients, model: CostModel, S, N: float, C: float):
    """Loss of a model with sparsity S and N non-zeros trained with compute C."""
    return eval_law(coeffs, S, N, data_for_compute(model, C, N, S))


def optimal_sparsity_numeric(coeffs: ScalingLawCoefficients, model: CostModel, N: float, C: float,
                             tol: float = 1e-6, upper: float = SEARCH_UPPER,
                             samples: int = 257) -> float:
    """Bounded search for the loss-minimizing sparsity at fixed N and compute C.

    A coarse scan brackets the minimum and checks that the loss has a single
    valley; golden-section search then refines inside the bracket.
    """
    N = _positive("N", N)
    C = _positive("compute", C)
    grid = np.linspace(0.0, upper, samples)
    values = loss_at_compute(coeffs, model, grid, N, C)
    _check_unimodal(values, f"N={N:g}, C={C:g}")
    i = int(np.argmin(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, samples - 1)]

    def f(s):
        return loss_at_compute(coeffs, model, s, N, C)

    s = golden_section(f, lo, hi, tol=tol)
    if f(0.0) <= f(s):
        return 0.0
    if f(upper) < f(s):
        return upper
    return s


# ---------------------------------------------------------------------------
# Iso-sparsity contours
# ---------------------------------------------------------------------------


class ContourPoint(NamedTuple):
    sparsity: float
    N: float
    D: float
    C: float
    loss: float


def contour_data(coeffs: ScalingLawCoefficients, model: CostModel, S: float, N):
    """Data D_S on the contour where sparsity S is optimal.

    Stationarity of L(S, N, C / (k N m(S))) in S reads
    b_D (m'/m) (a_D / D_S)^b_D = a_S b_S (1 - S)^(b_S - 1) N^-b_N,
    which is a pure power law in D_S.
    """
    S = float(S)
    if not 0.0 < S < 1.0:
        raise DomainError("contour sparsity must lie in (0, 1)")
    N = np.asarray(N, dtype=float)
    if np.any(~np.isfinite(N)) or np.any(N <= 0):
        raise DomainError("N must be finite and positive")
    m, dm = model.multiplier(S), model.multiplier_derivative(S)
    rhs = coeffs.a_S * coeffs.b_S * (1.0 - S) ** (coeffs.b_S - 1.0) * N ** -coeffs.b_N
    scale = coeffs.b_D * dm / m
    if np.any(rhs <= 0) or scale <= 0:
        raise NoSolutionError("contour equation has no positive solution")
    return _scalar(coeffs.a_D * (rhs / scale) ** (-1.0 / coeffs.b_D))


def sparsity_contour(coeffs: ScalingLawCoefficients, model: CostModel, S: float,
                     N_values: Iterable[float]) -> list[ContourPoint]:
    N_values = np.asarray(list(N_values), dtype=float)
    D = np.atleast_1d(contour_data(coeffs, model, S, N_values))
    C = training_flops(model, N_values, D, S)
    loss = eval_law(coeffs, S, N_values, D)
    return [ContourPoint(float(S), float(n), float(d), float(c), float(l))
            for n, d, c, l in zip(N_values, D, np.atleast_1d(C), np.atleast_1d(loss))]


def sparsity_contour_numeric(coeffs: ScalingLawCoefficients, model: CostModel, S: float,
                             N_values: Iterable[float], tol: float = 1e-9) -> list[ContourPoint]:
    """Same contour, located by root-finding on the numeric optimum in log C."""
    S = float(S)
    points = []
    for N in N_values:
        N = float(N)
        guess = math.log(training_flops(model, N, contour_data(coeffs, model, S, N), S))

        def g(log_c):
            return optimal_sparsity_numeric(coeffs, model, N, math.exp(log_c), tol=tol) - S

        lo, hi = guess - 1.0, guess + 1.0
        while g(lo) > 0:
            lo -= 2.0
        while g(hi) < 0:
            hi += 2.0
        C = math.exp(brentq(g, lo, hi, xtol=1e-12))
        D = float(data_for_compute(model, C, N, S))
        points.append(ContourPoint(S, N, D, C, float(eval_law(coeffs, S, N, D))))
    return points


def chinchilla_frontier(coeffs: ScalingLawCoefficients, model: CostModel,
                        N_values: Iterable[float]) -> list[ContourPoint]:
    points = []
    for N in N_values:
        D = chinchilla_data(coeffs, float(N))
        C = float(training_flops(model, N, D, 0.0))
        points.append(ContourPoint(0.0, float(N), D, C, float(eval_law(coeffs, 0.0, N, D))))
    return points


def sparsity_threshold_multiple(coeffs: ScalingLawCoefficients, model: CostModel, S: float) -> float:
    """Compute, relative to dense Chinchilla-optimal training at the same N, at which S becomes optimal.

    The ratio is C_S / (k N D_chin(N)), independent of N because the contour
    and the frontier are parallel in log-log space.
    """
    N = 1.0e8
    D_S = contour_data(coeffs, model, S, N)
    return D_S * model.multiplier(S) / chinchilla_data(coeffs, N)


def log_log_slope(xs, ys) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    return float(np.polyfit(lx, ly, 1)[0])
