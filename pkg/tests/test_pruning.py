import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sparselaw.errors import DomainError, EmptySupportError, FormatError
from sparselaw.pruning import (
    LeastSquaresProblem,
    MaskedTensor,
    NmPattern,
    PruneSchedule,
    RelativeLR,
    apply_mask,
    dump_tensor,
    gmp_mask,
    kept_count,
    load_tensor,
    nm_gradual_mask,
    schedule_sparsity,
    sparsity_aware_rms,
    toy_train,
)

from oracles import brute_force_mask, kept_count_exact

finite = st.floats(-1e3, 1e3, allow_nan=False)


def kept(values, mask):
    return sorted(np.asarray(values)[mask].tolist())


class TestPattern:
    def test_parse(self):
        assert NmPattern.parse("2:4") == NmPattern(2, 4)
        assert NmPattern(2, 8).max_sparsity == 0.75

    @pytest.mark.parametrize("text", ["4:4", "0:4", "2-4", "a:b"])
    def test_rejects(self, text):
        with pytest.raises(DomainError):
            NmPattern.parse(text)


class TestSchedule:
    sched = PruneSchedule(final_sparsity=0.875)

    @pytest.mark.parametrize("t,expected", [(0.0, 0.0), (0.25, 0.0), (0.5, 0.765625),
                                            (0.75, 0.875), (1.0, 0.875)])
    def test_values(self, t, expected):
        assert schedule_sparsity(self.sched, t) == expected

    @given(st.floats(0, 0.99), st.floats(0, 0.5), st.floats(0.5, 1.0), st.integers(1, 5))
    def test_monotone_and_continuous(self, final, start, end, p):
        if end <= start:
            return
        sched = PruneSchedule(final, start, end, cubic_exponent=p)
        ts = np.linspace(0, 1, 2001)
        s = np.array([schedule_sparsity(sched, t) for t in ts])
        assert np.all(np.diff(s) >= 0)
        # Largest slope is p * final / (end - start); steps of 1/2000 stay below that bound.
        assert np.max(np.diff(s)) <= p * final / (end - start) / 2000 + 1e-12
        assert schedule_sparsity(sched, start) == 0.0
        assert schedule_sparsity(sched, end) == final

    def test_rejects_bad_progress(self):
        with pytest.raises(DomainError):
            schedule_sparsity(self.sched, 1.5)


class TestGmp:
    def test_top_magnitudes(self):
        w = [1, -2, 3, -4]
        assert kept(w, gmp_mask(w, 0.5)) == [-4, 3]

    def test_zero_sparsity_keeps_all(self):
        assert gmp_mask([5, 0, -1], 0.0).all()

    def test_tie_break_lowest_index(self):
        assert np.flatnonzero(gmp_mask([1, 1, 1, 1], 0.5)).tolist() == [0, 1]

    def test_rejects_full_sparsity(self):
        with pytest.raises(DomainError):
            gmp_mask([1, 2], 1.0)

    @pytest.mark.parametrize("size,s", [(10, 0.7), (10, 0.3), (8, 0.875), (7, 0.5), (3, 0.1)])
    def test_kept_count_ceiling(self, size, s):
        assert kept_count(size, s) == kept_count_exact(size, s)

    @settings(max_examples=300)
    @given(arrays(float, st.integers(1, 12), elements=finite), st.floats(0, 0.99))
    def test_exactness(self, w, s):
        mask = gmp_mask(w, s)
        k = kept_count(w.size, s)
        assert mask.sum() == k
        best = brute_force_mask(w, 0, 1, k)
        assert np.abs(w[mask]).sum() == pytest.approx(np.abs(w[sorted(best)]).sum(), abs=1e-9)

    def test_prior_mask_prefers_survivors(self):
        w = np.array([0.0, 0.0, 3.0, 1.0])
        prior = np.array([True, False, True, False])
        assert np.flatnonzero(gmp_mask(w, 0.5, prior=prior)).tolist() == [0, 2]


class TestNm:
    def test_documented_example(self):
        w = [0.1, -0.5, 0.3, 0.2, 0.9, 0.05, -0.6, 0.4]
        mask = nm_gradual_mask(w, NmPattern(2, 4), 0.25)
        assert kept(w, mask) == sorted([-0.5, 0.3, 0.2, 0.9, -0.6, 0.4])
        assert brute_force_mask(w, 2, 4, 6) == set(np.flatnonzero(mask))

    @given(arrays(float, 16, elements=finite), st.sampled_from([(1, 4), (2, 4), (2, 8), (4, 8)]))
    def test_terminal_is_exact_pattern(self, w, nm):
        p = NmPattern(*nm)
        mask = nm_gradual_mask(w, p, p.max_sparsity)
        assert (mask.reshape(-1, p.m).sum(axis=1) == p.n).all()

    def test_zero_sparsity_keeps_all(self):
        assert nm_gradual_mask(np.arange(8.0), NmPattern(2, 4), 0.0).all()

    def test_rejects(self):
        with pytest.raises(DomainError):
            nm_gradual_mask(np.arange(8.0), NmPattern(2, 4), 0.6)
        with pytest.raises(DomainError):
            nm_gradual_mask(np.arange(6.0), NmPattern(2, 4), 0.25)

    @settings(max_examples=300)
    @given(st.data())
    def test_matches_brute_force(self, data):
        n, m = data.draw(st.sampled_from([(1, 4), (2, 4), (2, 8), (4, 8)]))
        size = data.draw(st.sampled_from([x for x in (4, 8, 12) if x % m == 0]))
        # Distinct integer magnitudes keep the oracle's sums exact.
        mags = data.draw(st.lists(st.integers(1, 10**6), min_size=size, max_size=size, unique=True))
        signs = data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=size, max_size=size))
        w = np.array(mags, float) * signs
        keep = data.draw(st.integers(n * size // m, size))
        s = 1 - keep / size
        mask = nm_gradual_mask(w, NmPattern(n, m), s)
        assert set(np.flatnonzero(mask)) == brute_force_mask(w, n, m, keep)


class TestRms:
    def test_kept_entries_only(self):
        t = MaskedTensor([3, 7, 4, 9], [True, False, True, False])
        assert sparsity_aware_rms(t) == pytest.approx(np.sqrt(12.5), rel=1e-15)
        assert sparsity_aware_rms(t) == pytest.approx(3.5355, abs=1e-4)

    @given(arrays(float, st.integers(1, 64), elements=finite))
    def test_all_kept_equals_plain(self, w):
        plain = np.sqrt(np.mean(w ** 2))
        assert abs(sparsity_aware_rms(MaskedTensor.dense(w)) - plain) <= 1e-12 * max(plain, 1)

    def test_empty_support(self):
        with pytest.raises(EmptySupportError) as err:
            sparsity_aware_rms(MaskedTensor([1.0, 2.0], [False, False]))
        assert err.value.kind == "empty-support"


class TestApplyAndFormat:
    @given(arrays(float, st.integers(1, 40), elements=finite), st.floats(0, 0.99))
    def test_apply_idempotent(self, w, s):
        t = MaskedTensor(w, gmp_mask(w, s))
        once = apply_mask(t)
        twice = apply_mask(once)
        assert np.array_equal(once.values, twice.values)
        assert np.all(once.values[~t.mask] == 0)
        assert np.array_equal(once.values[t.mask], w[t.mask])
        assert 1 - once.density <= s + 1e-12

    def test_all_kept_identity(self):
        w = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(apply_mask(MaskedTensor.dense(w)).values, w)

    @given(arrays(float, st.integers(0, 37), elements=st.floats(allow_nan=False)), st.booleans())
    def test_binary_round_trip(self, w, grouped):
        group = NmPattern(1, 2) if grouped and w.size % 2 == 0 else None
        mask = np.arange(w.size) % 3 != 1
        t = MaskedTensor(w, mask, group)
        back = load_tensor(dump_tensor(t))
        assert back.values.tobytes() == t.values.tobytes()
        assert np.array_equal(back.mask, mask)
        assert back.group == group

    def test_layout(self):
        blob = MaskedTensor([1.0, 2.0, 3.0], [True, False, True], NmPattern(1, 3)).to_bytes()
        assert blob[:4] == b"SPLM"
        assert len(blob) == 24 + 3 * 8 + 1
        assert blob[-1] == 0b101

    def test_rejects_corrupt(self):
        blob = MaskedTensor.dense([1.0, 2.0]).to_bytes()
        with pytest.raises(FormatError):
            load_tensor(b"XXXX" + blob[4:])
        with pytest.raises(FormatError):
            load_tensor(blob[:-1])


class TestToyTrain:
    problem = LeastSquaresProblem.random(dim=64, seed=3)

    def test_exact_final_sparsity(self):
        trace = toy_train(self.problem, PruneSchedule(0.875), RelativeLR(), 1000)
        assert trace.rows[-1].sparsity == 0.875
        assert trace.final_mask.sum() == 8
        assert np.all(trace.weights[~trace.final_mask] == 0)

    @pytest.mark.parametrize("pattern", [None, NmPattern(2, 4)])
    def test_masks_monotone(self, pattern):
        trace = toy_train(self.problem, PruneSchedule(0.5, update_every=25), RelativeLR(base_lr=0.2),
                          1000, pattern)
        for prev, nxt in zip(trace.masks, trace.masks[1:]):
            assert not np.any(nxt & ~prev)
        if pattern is not None:
            assert (trace.final_mask.reshape(-1, 4).sum(axis=1) >= 2).all()

    def test_loss_non_increasing_between_updates(self):
        # Step size is base_lr * rms(w); keeping it below 1/L guarantees descent on the masked subspace.
        L = self.problem.lipschitz()
        trace = toy_train(self.problem, PruneSchedule(0.75, update_every=50),
                          RelativeLR(base_lr=0.2 / L, clip_threshold=None), 1000)
        assert max(r.rms for r in trace.rows) * 0.2 / L < 1 / L
        updates = set(trace.mask_steps)
        for prev, row in zip(trace.rows, trace.rows[1:]):
            if row.step not in updates:
                assert row.loss <= prev.loss * (1 + 1e-12)

    def test_diverges(self):
        from sparselaw.errors import DivergedError
        with pytest.raises(DivergedError):
            toy_train(self.problem, PruneSchedule(0.5), RelativeLR(base_lr=1e3, clip_threshold=None), 200)

    def test_trace_csv(self):
        trace = toy_train(self.problem, PruneSchedule(0.5), RelativeLR(), 200)
        lines = trace.to_csv().splitlines()
        assert lines[0] == "step,sparsity,loss,rms"
        assert len(lines) == 202
