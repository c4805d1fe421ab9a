import json

import numpy as np
import pytest

from sdirecon.cube import FilterStack, HsiCube, Measurement, PsfStack
from sdirecon.forward import (
    ApeSystem,
    CassiSystem,
    SdiSystem,
    apply_filter_integrate,
    cassi_forward,
    convolve_psf,
    ape_forward,
)
from sdirecon.oracle import (
    DenseOperator,
    OperatorTooLargeError,
    condition_number,
    condition_number_iterative,
    dense_solve_convolution,
    dense_solve_convolution_spatial,
    dense_solve_filtering,
    equivalence_trial,
    hessian_report,
    materialize_ape,
    materialize_cassi,
    materialize_phi1,
    materialize_phi2,
    off_pixel_energy,
    woodbury_sides,
)
from sdirecon.solver import eta_field
from sdirecon.spectral import psf_to_otf, fft2_cube

from conftest import delta_psfs, random_system


class TestMaterialize:
    def test_delta_phi1_is_identity(self):
        assert np.array_equal(materialize_phi1(delta_psfs(2, 3), 4, 5).matrix, np.eye(40))

    def test_phi1_matches_convolution(self, rng):
        psfs = PsfStack(rng.random((2, 3, 4)))
        op = materialize_phi1(psfs, 5, 6)
        for _ in range(50):
            x = rng.standard_normal((2, 5, 6))
            assert np.max(np.abs(op @ x - convolve_psf(HsiCube(x), psfs).data.ravel())) < 1e-12

    def test_phi1_block_circulant(self, rng):
        h, w = 4, 5
        psfs = PsfStack(rng.random((2, 3, 3)))
        m = materialize_phi1(psfs, h, w).matrix
        n = h * w
        assert not np.any(m[:n, n:]) and not np.any(m[n:, :n])
        for band in range(2):
            block = m[band * n:(band + 1) * n, band * n:(band + 1) * n]
            first = block[:, 0].reshape(h, w)
            for col in range(n):
                dy, dx = divmod(col, w)
                assert np.array_equal(block[:, col].reshape(h, w), np.roll(first, (dy, dx), axis=(0, 1)))

    def test_single_band_ones_phi2_is_identity(self):
        assert np.array_equal(materialize_phi2(FilterStack(np.ones((1, 1, 3, 4)))).matrix, np.eye(12))

    @pytest.mark.parametrize("channels", [1, 3])
    def test_phi2_matches_filter(self, rng, channels):
        filters = FilterStack(rng.random((channels, 3, 4, 4)))
        op = materialize_phi2(filters)
        for _ in range(50):
            x = rng.standard_normal((3, 4, 4))
            got = apply_filter_integrate(HsiCube(x), filters).data.ravel()
            assert np.max(np.abs(op @ x - got)) < 1e-12

    def test_phi2_gram_diagonal_single_channel(self, rng):
        filters = FilterStack(rng.random((1, 3, 4, 4)))
        a = materialize_phi2(filters).matrix
        g = a @ a.T
        assert not np.any(g - np.diag(np.diag(g)))
        assert np.max(np.abs(np.diag(g) - eta_field(filters).data.ravel())) <= 1e-12

    def test_phi2_gram_multichannel_is_per_pixel(self, rng):
        # Several channels couple only within one pixel; the diagonal is still eta.
        filters = FilterStack(rng.random((3, 3, 4, 4)))
        a = materialize_phi2(filters).matrix
        g = a @ a.T
        assert np.max(np.abs(np.diag(g) - eta_field(filters).data.ravel())) <= 1e-12
        assert off_pixel_energy(g, 16) == 0.0

    def test_cassi_and_ape_consistency(self, rng):
        cassi = CassiSystem(rng.random((4, 4)), 1)
        ape = ApeSystem(rng.random((2, 4, 4)))
        mc, ma = materialize_cassi(cassi, 2), materialize_ape(ape)
        for _ in range(50):
            x = rng.standard_normal((2, 4, 4))
            assert np.max(np.abs(mc @ x - cassi_forward(HsiCube(x), cassi).data.ravel())) < 1e-12
            assert np.max(np.abs(ma @ x - ape_forward(HsiCube(x), ape).data.ravel())) < 1e-12

    def test_size_guard(self):
        with pytest.raises(OperatorTooLargeError):
            materialize_phi1(delta_psfs(4, 1), 64, 64)
        with pytest.raises(OperatorTooLargeError):
            DenseOperator(np.zeros((4097, 4097)))


class TestDenseSolves:
    def test_filtering_scalar_case(self, rng):
        eye = DenseOperator(np.eye(8))
        m, i = rng.random(8), rng.random(8)
        np.testing.assert_allclose(dense_solve_filtering(eye, eye, m, i, 1.0), (m + i) / 2, rtol=1e-14)

    def test_filtering_large_gamma(self, rng):
        system = random_system(rng, 4, 4, 2)
        phi1 = materialize_phi1(system.psfs, 4, 4)
        i = rng.random((2, 4, 4))
        j = dense_solve_filtering(phi1, materialize_phi2(system.filters), rng.random((1, 4, 4)), i, 1e6)
        target = phi1 @ i
        assert np.linalg.norm(j - target) <= 1e-4 * np.linalg.norm(target)

    def test_filtering_rejects_gamma(self):
        eye = DenseOperator(np.eye(2))
        with pytest.raises(ValueError):
            dense_solve_filtering(eye, eye, np.ones(2), np.ones(2), 0.0)

    def test_convolution_unit_otf(self, rng):
        jf = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        uf = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        np.testing.assert_allclose(dense_solve_convolution(np.ones(6), jf, uf, 1.0), (jf + uf) / 2, rtol=1e-14)

    def test_convolution_zero_otf_entry(self, rng):
        psi = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        psi[2] = 0
        jf, uf = rng.standard_normal(5) + 0j, rng.standard_normal(5) + 0j
        x = dense_solve_convolution(psi, jf, uf, 0.1)
        assert np.all(np.isfinite(x))
        np.testing.assert_allclose(x, (np.conj(psi) * jf + 0.1 * uf) / (0.1 + np.abs(psi) ** 2), rtol=1e-12)

    def test_spatial_and_frequency_solves_agree(self, rng):
        psfs = PsfStack(rng.random((2, 3, 3)))
        phi1 = materialize_phi1(psfs, 4, 5)
        target, prior = rng.random((2, 4, 5)), rng.random((2, 4, 5))
        spatial = dense_solve_convolution_spatial(phi1, target, prior, 0.3).reshape(2, 4, 5)
        otf = psf_to_otf(psfs, 4, 5).data
        freq = dense_solve_convolution(otf, fft2_cube(HsiCube(target)).data, fft2_cube(HsiCube(prior)).data, 0.3)
        back = np.fft.ifft2(freq.reshape(2, 4, 5), axes=(-2, -1))
        np.testing.assert_allclose(back.real, spatial, atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_woodbury(self, seed):
        rng = np.random.default_rng(seed)
        filters = FilterStack(rng.random((int(rng.choice([1, 3])), 2, 3, 3)))
        direct, identity = woodbury_sides(materialize_phi2(filters), rng.uniform(0.1, 2))
        assert np.linalg.norm(direct - identity) <= 1e-9 * np.linalg.norm(direct)


class TestConditionNumber:
    def test_identity(self):
        assert condition_number(np.eye(5)) == pytest.approx(1.0, rel=1e-14)

    def test_diag(self):
        assert condition_number(DenseOperator(np.diag([1.0, 10.0]))) == pytest.approx(10.0, rel=1e-14)
        d = np.diag([1.0, 10.0])
        assert condition_number(d.T @ d) == pytest.approx(100.0, rel=1e-14)

    def test_singular_is_clipped(self):
        assert np.isfinite(condition_number(np.diag([1.0, 0.0])))

    def test_iterative_matches_svd(self, rng):
        system = random_system(rng, 6, 6, 2, channels=3, k=3)
        phi = materialize_phi2(system.filters).matrix @ materialize_phi1(system.psfs, 6, 6).matrix
        gram = phi.T @ phi
        exact = condition_number(gram)
        assert condition_number_iterative(gram, iters=2000) == pytest.approx(exact, rel=0.01)


class TestHessianReport:
    def test_delta_sdi(self):
        system = SdiSystem(delta_psfs(2), FilterStack(np.full((1, 2, 4, 4), 0.5)))
        assert hessian_report(system).offdiag_ratio_freq < 1e-10

    def test_random_psf_sdi(self, rng):
        system = random_system(rng, 8, 8, 2, k=3)
        r = hessian_report(system)
        assert r.offdiag_ratio_spatial > 0.1
        assert r.offdiag_ratio_freq < 1e-8

    def test_ape_block_diagonal(self, rng):
        r = hessian_report(ApeSystem(rng.random((2, 4, 4))))
        assert r.off_pixel_energy == 0.0

    def test_cassi_needs_bands(self, rng):
        with pytest.raises(ValueError):
            hessian_report(CassiSystem(rng.random((4, 4))))
        r = hessian_report(CassiSystem(rng.random((4, 4)), 1), bands=3)
        assert r.dims == (4, 4, 3) and r.off_pixel_energy > 0

    def test_json_keys(self, rng):
        d = json.loads(hessian_report(random_system(rng, 4, 4, 2)).to_json())
        assert {"conditionNumber", "offDiagRatioSpatial", "offDiagRatioFreq", "dims"} <= set(d)
        assert d["dims"] == [4, 4, 2]

    def test_too_large(self):
        system = SdiSystem(delta_psfs(3), FilterStack(np.ones((1, 3, 40, 40))))
        with pytest.raises(OperatorTooLargeError):
            hessian_report(system)


def test_equivalence_trial_is_deterministic():
    a, b = equivalence_trial(4), equivalence_trial(4)
    assert a == b
    assert a["filtering"] < 1e-8 and a["convolution"] < 1e-8
