"""Exit criteria, one test per criterion.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion. Running this file directly does the same.
"""

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from sparselaw.cost import (
    CostModel,
    cmul,
    log_log_slope,
    loss_at_compute,
    optimal_sparsity_closed,
    sparsity_contour,
    sparsity_contour_numeric,
    sparsity_threshold_multiple,
)
from sparselaw.errors import EmptySupportError
from sparselaw.fitting import FitConfig, fit_full
from sparselaw.law import T5_C4, T5_C4_NM, VIT_JFT, eval_law, gain, invert_for_data, invert_for_size
from sparselaw.pruning import (
    LeastSquaresProblem,
    MaskedTensor,
    NmPattern,
    PruneSchedule,
    RelativeLR,
    gmp_mask,
    nm_gradual_mask,
    schedule_sparsity,
    sparsity_aware_rms,
    toy_train,
)
from sparselaw.simulator import simulate_sweep, t5_grid, vit_grid

from oracles import MaskEnumerator, argmin_sparsity, integrated_cost_multiplier, kept_count_exact
from sweeps import holdout_split, max_heldout_error


def criterion(number, label):
    return pytest.mark.acceptance(number, label)


DENSE = CostModel(cost_mode="dense")
SPARSE = CostModel()


@criterion(1, "gain table for both families")
def test_01_gain_tables():
    t0 = time.perf_counter()
    expected = {VIT_JFT: (1.60, 2.17, 2.63), T5_C4: (1.59, 2.16, 2.63)}
    for coeffs, values in expected.items():
        for S, want in zip((0.5, 0.75, 0.875), values):
            assert abs(gain(coeffs, S) - want) <= 0.02, (coeffs.family, S)
    assert time.perf_counter() - t0 < 1.0


@criterion(2, "point predictions with language coefficients")
def test_02_point_predictions():
    assert abs(eval_law(T5_C4, 0.0, 1e9, 2e10) - 1.54) <= 0.01
    assert abs(eval_law(T5_C4, 0.8, 2e8, 1e11) - 1.48) <= 0.01


@criterion(3, "n:8 gains from the n:m coefficient row")
def test_03_nm_gains():
    assert (T5_C4_NM.a_S, T5_C4_NM.b_S, T5_C4_NM.c_S) == (86.4, 2.752, 536.0)
    assert T5_C4_NM.b_N == T5_C4.b_N
    assert abs(gain(T5_C4_NM, 0.5) - 1.67) <= 0.02
    assert abs(gain(T5_C4_NM, 0.75) - 1.81) <= 0.02


@criterion(4, "cost multiplier vs integrated schedule density")
def test_04_cost_multiplier_oracle():
    for S in (0.0, 0.25, 0.5, 0.75, 0.875):
        sched = PruneSchedule(final_sparsity=S)
        ref = integrated_cost_multiplier(S, lambda t: schedule_sparsity(sched, t))
        assert abs(cmul(S) - ref) < 1e-6, S


def optimum_grid(coeffs):
    # Compute ranges chosen so the grid spans both the clamped (S = 0) and interior regimes
    # while every optimum stays inside the searchable [0, 0.999] interval.
    C = np.logspace(13, 20, 10) if coeffs is VIT_JFT else np.logspace(15, 24, 10)
    return [(N, c) for N in np.logspace(6, 9, 10) for c in C]


@criterion(5, "closed-form optimal sparsity vs bounded minimization")
def test_05_closed_vs_numeric():
    for coeffs in (VIT_JFT, T5_C4):
        interior = 0
        for N, C in optimum_grid(coeffs):
            closed = optimal_sparsity_closed(coeffs, N, C)
            ref = argmin_sparsity(lambda s: loss_at_compute(coeffs, DENSE, s, N, C))
            assert abs(closed - ref) < 1e-4, (coeffs.family, N, C, closed, ref)
            interior += closed > 0
        # The grid must exercise the formula, not just the clamp.
        assert 20 <= interior <= 90


@criterion(6, "iso-sparsity contours are parallel with slope b_N/b_D")
def test_06_contour_parallelism():
    N = np.geomspace(1e6, 1e10, 9)
    for coeffs in (VIT_JFT, T5_C4):
        target = coeffs.b_N / coeffs.b_D
        slopes = []
        for model in (DENSE, SPARSE):
            for S in (0.5, 0.75, 0.875):
                pts = sparsity_contour(coeffs, model, S, N)
                slope = log_log_slope([p.N for p in pts], [p.D for p in pts])
                assert abs(slope - target) < 1e-6
                slopes.append(slope)
        assert max(slopes) - min(slopes) < 1e-6
        for S in (0.5, 0.875):
            pts = sparsity_contour_numeric(coeffs, SPARSE, S, N[::2])
            assert abs(log_log_slope([p.N for p in pts], [p.D for p in pts]) - target) < 1e-3


@criterion(7, "compute multiple at which 50% sparsity becomes optimal")
def test_07_threshold():
    t5 = sparsity_threshold_multiple(T5_C4, SPARSE, 0.5)
    vit = sparsity_threshold_multiple(VIT_JFT, SPARSE, 0.5)
    assert 1 < t5 < 3
    assert 1 < vit < 2


@criterion(8, "fitting recovers held-out losses from simulated sweeps")
def test_08_fitting_oracle():
    t0 = time.perf_counter()
    cases = [(T5_C4, t5_grid(), FitConfig.language()), (VIT_JFT, vit_grid(), FitConfig.vision())]
    for truth, grid, config in cases:
        for sigma, bound in ((0.0, 1e-3), (0.01, 0.02)):
            data = simulate_sweep(truth, grid, noise_sigma=sigma, seed=2024)
            train, held = holdout_split(data, count=10)
            result = fit_full(train, config)
            err = max_heldout_error(result.coefficients, truth, held)
            assert err < bound, (truth.family, sigma, err)
    assert time.perf_counter() - t0 < 60.0


PATTERNS = ((1, 4), (2, 4), (2, 8), (4, 8))


@criterion(9, "n:m gradual mask equals exhaustive optimum")
def test_09_nm_brute_force():
    rng = np.random.default_rng(99)
    instances = 0
    for n, m in PATTERNS:
        for size in range(m, 17, m):
            for keep in range(n * size // m, size + 1):
                best = MaskEnumerator(size, n, m, keep)
                batch = 160 if size < 16 else 100
                # Distinct integer magnitudes: exact sums and a unique optimum.
                mags = np.array([rng.permutation(1000)[:size] + 1 for _ in range(batch)], dtype=float)
                signs = rng.choice([-1.0, 1.0], size=mags.shape)
                want = best.best(mags)
                for row in range(batch):
                    got = nm_gradual_mask(mags[row] * signs[row], NmPattern(n, m), 1 - keep / size)
                    assert np.array_equal(got, want[row]), (n, m, size, keep, mags[row])
                instances += batch
    assert instances >= 10_000


@criterion(10, "schedule values, monotone masks, exact final sparsity")
def test_10_schedule_and_masks():
    sched = PruneSchedule(final_sparsity=0.875)
    assert schedule_sparsity(sched, 0.25) == 0.0
    assert schedule_sparsity(sched, 0.75) == 0.875
    assert schedule_sparsity(sched, 0.5) == 0.765625
    for dim, final in ((64, 0.875), (64, 0.5), (50, 0.875), (37, 0.3)):
        # 64 divides evenly, so the realized sparsity is the target itself.
        problem = LeastSquaresProblem.random(dim=dim, seed=dim)
        trace = toy_train(problem, PruneSchedule(final, update_every=20), RelativeLR(), 800)
        for prev, nxt in zip(trace.masks, trace.masks[1:]):
            assert not np.any(nxt & ~prev)
        kept = int(trace.final_mask.sum())
        assert kept == kept_count_exact(dim, final)
        assert np.count_nonzero(trace.weights) <= kept
        assert trace.rows[-1].sparsity == 1 - kept / dim
        if dim == 64:
            assert trace.rows[-1].sparsity == final


@criterion(11, "sparsity-aware RMS")
def test_11_rms():
    rng = np.random.default_rng(11)
    for _ in range(200):
        w = rng.standard_normal(rng.integers(1, 100)) * 10 ** rng.uniform(-3, 3)
        mask = rng.random(w.size) < 0.5
        if mask.any():
            direct = math.sqrt(sum(x * x for x in w[mask]) / mask.sum())
            assert abs(sparsity_aware_rms(MaskedTensor(w, mask)) - direct) <= 1e-12 * max(direct, 1)
        plain = math.sqrt(sum(x * x for x in w) / w.size)
        assert abs(sparsity_aware_rms(MaskedTensor.dense(w)) - plain) <= 1e-12 * max(plain, 1)
    with pytest.raises(EmptySupportError):
        sparsity_aware_rms(MaskedTensor(np.ones(4), np.zeros(4, bool)))
    assert abs(sparsity_aware_rms(MaskedTensor([3, 7, 4, 9], [1, 0, 1, 0])) - 3.5355) < 1e-4
    assert gmp_mask(np.arange(4.0), 0.5).sum() == 2


@criterion(12, "inversion round trips")
def test_12_inversions():
    rng = np.random.default_rng(12)
    ranges = {VIT_JFT: (8, 10), T5_C4: (8, 12)}
    for coeffs, (d_lo, d_hi) in ranges.items():
        for _ in range(1000):
            S = rng.uniform(0, 0.95)
            N = 10 ** rng.uniform(6, 10)
            D = 10 ** rng.uniform(d_lo, d_hi)
            L = eval_law(coeffs, S, N, D)
            assert abs(invert_for_data(coeffs, L, S, N) - D) / D < 1e-12
            assert abs(invert_for_size(coeffs, L, S, D) - N) / N < 1e-12


def _pipeline(workdir):
    def cli(*args, stdout=None):
        proc = subprocess.run([sys.executable, "-m", "sparselaw", *args], cwd=workdir,
                              capture_output=True, env=dict(os.environ, SPARSELAW_SEED="17"))
        assert proc.returncode == 0, proc.stderr.decode()
        if stdout:
            with open(os.path.join(workdir, stdout), "wb") as fh:
                fh.write(proc.stdout)

    cli("simulate", "--preset", "t5", "--noise", "0.01", "-o", "runs.csv")
    cli("fit", "runs.csv", "--log-loss", "--delta", "0.001", "-o", "fit.json", "--result", "result.json")
    cli("gain", "--coeffs", "fit.json", "--sparsity", "0.875", stdout="gain.txt")
    cli("optimal-sparsity", "--coeffs", "fit.json", "--params", "1e8", "--compute", "1e21",
        stdout="opt.txt")
    cli("contour", "--coeffs", "fit.json", "--sparsity", "0.5", "0.75", "0.875",
        "--csv", "contour.csv", "--svg", "contour.svg")
    names = ("runs.csv", "fit.json", "result.json", "gain.txt", "opt.txt", "contour.csv", "contour.svg")
    out = {}
    for name in names:
        with open(os.path.join(workdir, name), "rb") as fh:
            out[name] = fh.read()
    return out


@criterion(13, "end-to-end CLI pipeline")
def test_13_cli_pipeline(tmp_path):
    t0 = time.perf_counter()
    first, second = tmp_path / "a", tmp_path / "b"
    first.mkdir()
    second.mkdir()
    a, b = _pipeline(str(first)), _pipeline(str(second))
    assert a == b
    # 1% noise on 48 runs: only a loose sanity bound on the refit gain.
    assert 1.0 < float(a["gain.txt"]) < 4.0
    assert a["contour.svg"].count(b"<polyline") == 4
    assert time.perf_counter() - t0 < 120.0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
