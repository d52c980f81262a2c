import numpy as np
import pytest

from dcftrack.mcdcf import (
    CorrelationScores,
    FeatureSample,
    FilterModel,
    InvalidStateError,
    brute_force_solve,
    detect,
    solve_single,
    update,
)
from dcftrack.spectral import dft_forward, gaussian_response


def direct_correlation(h, f):
    """O(N^2) circular correlation, y(n) = sum_m h(m) f(m + n)."""
    shape = h.shape
    out = np.zeros(shape)
    for n in np.ndindex(shape):
        acc = 0.0
        for m in np.ndindex(shape):
            shifted = tuple((mi + ni) % di for mi, ni, di in zip(m, n, shape))
            acc += h[m] * f[shifted]
        out[n] = acc
    return out


def spatial_loss(h, sample, g, lam):
    """Regularized response error evaluated entirely in the spatial domain."""
    response = np.zeros(g.shape)
    for l in range(sample.channels):
        response += direct_correlation(h[..., l], sample.data[..., l])
    return np.sum((g - response) ** 2) + lam * np.sum(h**2)


def spatial_filters(model):
    H = model.filters()
    axes = tuple(range(H.ndim - 1))
    h = np.fft.ifftn(H, axes=axes)
    assert np.max(np.abs(h.imag)) < 1e-10
    return h.real


def random_sample(rng, dims, channels):
    return FeatureSample(rng.standard_normal(dims + (channels,)))


class TestSolveSingle:
    def test_impulse_flat_spectrum(self):
        g = np.array([0.2, 0.5, 0.1, 0.9])
        f = FeatureSample(np.array([1.0, 0.0, 0.0, 0.0])[:, None])
        lam = 0.3
        H = solve_single(f, g, lam).filters()[..., 0]
        np.testing.assert_allclose(H, np.conj(dft_forward(g)) / (1.0 + lam), atol=1e-12)

    def test_regularization_shrinks_filter(self):
        rng = np.random.default_rng(10)
        f = random_sample(rng, (6, 6), 2)
        g = gaussian_response((6, 6), (1.0, 1.0))
        norms = [
            np.linalg.norm(solve_single(f, g, lam).filters()) for lam in (1e2, 1e4)
        ]
        assert norms[0] > norms[1]

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        f = random_sample(rng, (4, 4), 2)
        g = rng.standard_normal((4, 4))
        fast = solve_single(f, g, 0.01).filters()
        slow = brute_force_solve(f, g, 0.01)
        assert np.max(np.abs(fast - slow)) / np.max(np.abs(slow)) < 1e-9

    def test_dim_mismatch_rejected(self):
        rng = np.random.default_rng(12)
        with pytest.raises(ValueError):
            solve_single(random_sample(rng, (4, 4), 1), np.zeros((5, 4)), 0.01)
        with pytest.raises(ValueError):
            solve_single(random_sample(rng, (4, 4), 1), np.zeros((4, 4)), 0.0)


class TestBruteForce:
    def test_agreement_over_many_instances(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            dims = tuple(rng.integers(2, 7, size=rng.integers(1, 3)))
            d = int(rng.integers(1, 4))
            f = random_sample(rng, dims, d)
            g = rng.standard_normal(dims)
            fast = solve_single(f, g, 0.01).filters()
            slow = brute_force_solve(f, g, 0.01)
            assert np.max(np.abs(fast - slow)) / max(np.max(np.abs(slow)), 1e-30) < 1e-9

    def test_single_channel_scalar_division(self):
        rng = np.random.default_rng(14)
        f = random_sample(rng, (5,), 1)
        g = rng.standard_normal(5)
        F = dft_forward(f.data[:, 0])
        G = dft_forward(g)
        ref = np.conj(G) * F / (np.abs(F) ** 2 + 0.01)
        got = brute_force_solve(f, g, 0.01)[:, 0]
        np.testing.assert_allclose(got, ref, atol=1e-10)

    def test_rank1_inverse_identity(self):
        rng = np.random.default_rng(15)
        lam = 0.01
        for _ in range(25):
            d = int(rng.integers(1, 5))
            x = rng.standard_normal(d) + 1j * rng.standard_normal(d)
            c = complex(rng.standard_normal(), rng.standard_normal())
            lhs = np.linalg.inv(np.outer(x, np.conj(x)) + lam * np.eye(d)) @ (x * c)
            rhs = x * c / (np.vdot(x, x) + lam)
            assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) < 1e-12

    def test_oversize_rejected(self):
        rng = np.random.default_rng(16)
        with pytest.raises(ValueError):
            brute_force_solve(random_sample(rng, (32, 4), 1), np.zeros((32, 4)), 0.01)
        with pytest.raises(ValueError):
            brute_force_solve(random_sample(rng, (4, 4), 6), np.zeros((4, 4)), 0.01)


class TestUpdate:
    def _model(self, dims, channels, lam=0.01):
        return FilterModel.initial(dims, channels, lam)

    def test_constant_stream_is_fixed_point(self):
        rng = np.random.default_rng(17)
        f = random_sample(rng, (4, 4), 2)
        g = gaussian_response((4, 4), (1.0, 1.0))
        model = update(self._model((4, 4), 2), f, g, 0.025)
        first_num, first_den = model.numerators.copy(), model.denominator.copy()
        for _ in range(5):
            model = update(model, f, g, 0.025)
        np.testing.assert_allclose(model.numerators, first_num, atol=1e-12)
        np.testing.assert_allclose(model.denominator, first_den, atol=1e-12)

    def test_eta_one_forgets_history(self):
        rng = np.random.default_rng(18)
        g = gaussian_response((4, 4), (1.0, 1.0))
        f1, f2 = (random_sample(rng, (4, 4), 2) for _ in range(2))
        a = update(update(self._model((4, 4), 2), f1, g, 1.0), f2, g, 1.0)
        b = update(self._model((4, 4), 2), f2, g, 1.0)
        np.testing.assert_allclose(a.numerators, b.numerators, atol=1e-12)
        np.testing.assert_allclose(a.denominator, b.denominator, atol=1e-12)

    def test_two_sample_convex_combination(self):
        rng = np.random.default_rng(19)
        g = rng.standard_normal((3, 5))
        f1, f2 = (random_sample(rng, (3, 5), 2) for _ in range(2))
        model = update(update(self._model((3, 5), 2), f1, g, 0.5), f2, g, 0.5)
        G_conj = np.conj(dft_forward(g))
        expect_num = np.zeros((3, 5, 2), dtype=complex)
        expect_den = np.zeros((3, 5))
        for f, w in ((f1, 0.5), (f2, 0.5)):
            F = f.spectra()
            expect_num += w * G_conj[..., None] * F
            expect_den += w * np.sum(np.abs(F) ** 2, axis=-1)
        assert np.max(np.abs(model.numerators - expect_num)) < 1e-12
        assert np.max(np.abs(model.denominator - expect_den)) < 1e-10

    def test_first_update_full_weight(self):
        rng = np.random.default_rng(20)
        f = random_sample(rng, (4, 4), 1)
        g = rng.standard_normal((4, 4))
        model = update(self._model((4, 4), 1), f, g, 0.025)
        ref = solve_single(f, g, 0.01)
        np.testing.assert_allclose(model.numerators, ref.numerators, atol=1e-12)
        np.testing.assert_allclose(model.denominator, ref.denominator, atol=1e-12)

    def test_mismatch_rejected(self):
        rng = np.random.default_rng(21)
        model = self._model((4, 4), 2)
        g = np.zeros((4, 4))
        with pytest.raises(ValueError):
            update(model, random_sample(rng, (4, 4), 3), g, 0.025)
        with pytest.raises(ValueError):
            update(model, random_sample(rng, (4, 4), 2), g, 0.0)

    def test_denominator_stays_real_nonnegative(self):
        rng = np.random.default_rng(22)
        g = rng.standard_normal((6, 6))
        model = FilterModel.initial((6, 6), 3, 0.01)
        for _ in range(4):
            model = update(model, random_sample(rng, (6, 6), 3), g, 0.1)
        assert np.isrealobj(model.denominator)
        assert np.all(model.denominator >= -1e-10)

    def test_channel_permutation_invariance(self):
        rng = np.random.default_rng(23)
        g = rng.standard_normal((4, 4))
        f = random_sample(rng, (4, 4), 3)
        perm = [2, 0, 1]
        m = update(FilterModel.initial((4, 4), 3, 0.01), f, g, 0.5)
        mp = update(
            FilterModel.initial((4, 4), 3, 0.01),
            FeatureSample(f.data[..., perm]),
            g,
            0.5,
        )
        np.testing.assert_allclose(mp.numerators, m.numerators[..., perm], atol=1e-12)
        np.testing.assert_allclose(mp.denominator, m.denominator, atol=1e-12)
        z = random_sample(rng, (4, 4), 3)
        s = detect(m, z)
        sp = detect(mp, FeatureSample(z.data[..., perm]))
        np.testing.assert_allclose(s.values, sp.values, atol=1e-12)


class TestDetect:
    def test_training_sample_peaks_at_response_peak(self):
        rng = np.random.default_rng(24)
        f = random_sample(rng, (8, 8), 2)
        g = gaussian_response((8, 8), (1.5, 1.5))
        model = update(FilterModel.initial((8, 8), 2, 0.01), f, g, 0.025)
        scores = detect(model, f)
        assert scores.argmax_index == (0, 0)  # g peaks at the zero-shift bin
        # response approximates g: direct correlation of the materialized
        # filter with the sample says the same thing
        h = spatial_filters(model)
        ref = np.zeros((8, 8))
        for l in range(2):
            ref += direct_correlation(h[..., l], f.data[..., l])
        np.testing.assert_allclose(scores.values, ref, atol=1e-8)

    def test_shift_equivariance(self):
        rng = np.random.default_rng(25)
        f = random_sample(rng, (8, 8), 2)
        g = gaussian_response((8, 8), (1.0, 1.0))
        model = update(FilterModel.initial((8, 8), 2, 0.01), f, g, 0.025)
        base = detect(model, f).values
        for shift in [(1, 0), (0, 3), (2, 5), (-2, 1)]:
            z = FeatureSample(np.roll(f.data, shift, axis=(0, 1)))
            scores = detect(model, z)
            np.testing.assert_allclose(
                scores.values, np.roll(base, shift, axis=(0, 1)), atol=1e-10
            )
            expected_idx = tuple(s % 8 for s in shift)
            assert scores.argmax_index == expected_idx

    def test_zero_sample_gives_zero_scores(self):
        rng = np.random.default_rng(26)
        f = random_sample(rng, (5, 5), 2)
        g = gaussian_response((5, 5), (1.0, 1.0))
        model = update(FilterModel.initial((5, 5), 2, 0.01), f, g, 0.025)
        scores = detect(model, FeatureSample(np.zeros((5, 5, 2))))
        np.testing.assert_allclose(scores.values, 0.0, atol=1e-15)
        assert scores.argmax_index == (0, 0)

    def test_untrained_model_rejected(self):
        model = FilterModel.initial((4, 4), 1, 0.01)
        with pytest.raises(InvalidStateError):
            detect(model, FeatureSample(np.zeros((4, 4, 1))))

    def test_argmax_tie_breaks_row_major(self):
        values = np.zeros((3, 3))
        values[1, 2] = values[2, 0] = 1.0
        scores = CorrelationScores.from_spectrum(dft_forward(values))
        assert scores.argmax_index == (1, 2)


class TestOptimality:
    def test_solution_minimizes_spatial_loss(self):
        rng = np.random.default_rng(27)
        lam = 0.01
        for _ in range(5):
            dims = (int(rng.integers(3, 7)), int(rng.integers(3, 7)))
            d = int(rng.integers(1, 3))
            f = random_sample(rng, dims, d)
            g = rng.standard_normal(dims)
            model = solve_single(f, g, lam)
            h = spatial_filters(model)
            base = spatial_loss(h, f, g, lam)
            for _ in range(8):
                direction = rng.standard_normal(h.shape)
                direction /= np.linalg.norm(direction)
                for eps in (1e-4, -1e-4):
                    assert spatial_loss(h + eps * direction, f, g, lam) >= base - 1e-12

    def test_parseval_loss_equivalence(self):
        rng = np.random.default_rng(28)
        lam = 0.01
        for _ in range(5):
            dims = (int(rng.integers(3, 6)), int(rng.integers(3, 6)))
            d = 2
            f = random_sample(rng, dims, d)
            g = rng.standard_normal(dims)
            h = rng.standard_normal(dims + (d,))
            spatial = spatial_loss(h, f, g, lam)
            H = np.fft.fftn(h, axes=(0, 1))
            F = f.spectra()
            G = dft_forward(g)
            fourier = np.sum(
                np.abs(G - np.sum(np.conj(H) * F, axis=-1)) ** 2
            ) + lam * np.sum(np.abs(H) ** 2)
            n = np.prod(dims)
            assert abs(spatial - fourier / n) / max(spatial, 1e-30) < 1e-10
