"""Bloch matrices: symbol exactness, Jordan structure, stability verdicts."""

import numpy as np
import pytest

from kdvks.bloch import (
    BlochError,
    adjoint_chain,
    build_bloch_matrix,
    certify_stability,
    coefficients_to_field,
    constant_state_symbol,
    critical_expansion,
    dual_pairs,
    field_to_coefficients,
    find_xi1,
    kernel_residuals,
    mode_numbers,
    profile_coefficients,
    smooth_cutoff,
    spectrum_slice,
    stability_map,
    _coef_inner,
)
from kdvks.grids import PeriodicGrid, RealField
from kdvks.profiles import (
    WaveParameters,
    galilean_boost,
    solve_ks_wave,
    solve_profile,
)


@pytest.fixture(scope="module")
def wave():
    return solve_ks_wave(7.8)


def trivial_wave(epsilon, c, T=2 * np.pi, m=32):
    p = WaveParameters.from_epsilon(epsilon)
    return solve_profile(p, T, RealField(PeriodicGrid(T, m), np.zeros(m)), c)


class TestConstantStateSymbol:
    def test_matrix_is_diagonal_symbol(self):
        rng = np.random.default_rng(1)
        for _ in range(64):
            eps = rng.uniform(0.0, 0.9)
            c = rng.uniform(-2.0, 2.0)
            T = rng.uniform(4.0, 9.0)
            xi = rng.uniform(-np.pi / T, np.pi / T)
            w = trivial_wave(eps, c, T)
            A = build_bloch_matrix(w, xi, 32).matrix
            kappa = xi + 2 * np.pi * mode_numbers(32) / T
            expect = constant_state_symbol(eps, w.params.delta, c, kappa)
            off = A - np.diag(np.diag(A))
            scale = np.max(np.abs(expect))
            assert np.max(np.abs(off)) < 1e-12 * scale
            assert np.max(np.abs(np.diag(A) - expect)) < 1e-12 * scale

    def test_eigenvalues_match_symbol(self):
        w = trivial_wave(0.6, 0.37)
        xi = 0.21
        sl = spectrum_slice(build_bloch_matrix(w, xi, 32))
        kappa = xi + 2 * np.pi * mode_numbers(32) / w.T
        expect = constant_state_symbol(0.6, w.params.delta, 0.37, kappa)
        got = np.sort_complex(sl.eigenvalues)
        want = np.sort_complex(expect)
        assert np.max(np.abs(got - want)) < 1e-12 * np.max(np.abs(want))


class TestProfileCoefficients:
    def test_round_trip(self, wave):
        c = profile_coefficients(wave, 64)
        back = coefficients_to_field(c, 64)
        assert np.max(np.abs(back.real - wave.profile.values)) < 1e-12

    def test_truncation_guard(self, wave):
        with pytest.raises(BlochError, match="too small"):
            profile_coefficients(wave, 16)

    def test_field_round_trip(self):
        rng = np.random.default_rng(2)
        vals = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        # band-limit so the 48-mode embedding is exact
        c = np.fft.fft(vals)
        c[10:-10] = 0
        vals = np.fft.ifft(c)
        coefs = field_to_coefficients(vals, 48)
        back = coefficients_to_field(coefs, 32)
        assert np.max(np.abs(back - vals)) < 1e-12


class TestKernelStructure:
    def test_jordan_chain_residuals(self, wave):
        r = kernel_residuals(wave, 64)
        assert r["L0_uprime"] < 1e-8
        assert r["L0_one_plus_uprime"] < 1e-8

    def test_galilean_invariance_of_operator(self, wave):
        # u -> u + s, c -> c + s leaves c - u and hence L_xi unchanged
        b = galilean_boost(wave, 0.4)
        A1 = build_bloch_matrix(wave, 0.3, 64).matrix
        A2 = build_bloch_matrix(b, 0.3, 64).matrix
        assert np.max(np.abs(A1 - A2)) < 1e-10 * np.max(np.abs(A1))


class TestCertifyStability:
    def test_stable_wave(self, wave):
        v = certify_stability(wave)
        assert v.stable
        assert v.theta > 0
        assert v.delta1 > 0
        assert v.margins["zero_count"] == 2

    def test_unstable_waves(self):
        for T in (7.0, 8.6):
            v = certify_stability(solve_ks_wave(T))
            assert not v.stable
            assert v.margins["worst_re"] > 0

    def test_requires_enough_frequencies(self, wave):
        with pytest.raises(BlochError):
            certify_stability(wave, xi_count=16)


class TestFindXi1:
    def test_window(self, wave):
        xi1, delta1 = find_xi1(wave)
        assert 0 < xi1 <= np.pi / wave.T + 1e-12
        assert delta1 > 0
        # third eigenvalue stays below -delta1/2 inside the window
        for xi in np.linspace(xi1 / 8, xi1, 8):
            vals = spectrum_slice(build_bloch_matrix(wave, xi, 64)).eigenvalues
            assert np.sort(vals.real)[::-1][2] < -delta1 / 2


class TestSmoothCutoff:
    def test_plateau_and_support(self):
        rho = smooth_cutoff(0.4)
        assert rho(0.0) == 1.0
        assert rho(0.19) == 1.0
        assert rho(-0.2) == 1.0
        assert rho(0.4) == 0.0
        assert rho(1.0) == 0.0
        # midpoint of the transition: s = 1/2, value e^{1 - 4/3}
        assert rho(0.3) == pytest.approx(np.exp(-1.0 / 3.0), rel=1e-12)

    def test_monotone_transition(self):
        rho = smooth_cutoff(0.4)
        xs = np.linspace(0.2, 0.4, 50)
        vals = rho(xs)
        assert np.all(np.diff(vals) <= 0)
        assert np.all((vals >= 0) & (vals <= 1))


class TestCriticalExpansion:
    def test_branch_coefficients(self, wave):
        b1, b2 = critical_expansion(wave)
        # the two branches are complex conjugates: opposite drifts, equal
        # diffusion, both positive for a stable wave
        assert b1.a == pytest.approx(-b2.a, abs=1e-6)
        assert abs(b1.a - b2.a) > 0.1
        assert b1.d == pytest.approx(b2.d, abs=1e-6)
        assert b1.d > 0
        assert b1.fit_residual < 1e-4

    def test_expansion_predicts_small_xi_eigenvalue(self, wave):
        b1, b2 = critical_expansion(wave)
        xi = 0.004
        vals = spectrum_slice(build_bloch_matrix(wave, xi, 64)).eigenvalues
        crit = vals[np.argsort(np.abs(vals))[:2]]
        for b in (b1, b2):
            pred = -1j * b.a * xi - b.d * xi**2
            err = np.min(np.abs(crit - pred))
            # error is third order in xi (cubic coefficient is order ten here)
            assert err < 100 * xi**3


class TestAdjointChain:
    def test_normalization(self, wave):
        adj = adjoint_chain(wave)
        assert abs(adj.normalization["psi_one"]) < 1e-10
        assert adj.normalization["psi_uprime"] == pytest.approx(1.0, abs=1e-9)
        assert adj.chain_residual < 1e-8

    def test_quadrature_consistency(self, wave):
        # the coefficient-space normalization must agree with plain quadrature
        adj = adjoint_chain(wave)
        h = wave.grid.spacing
        vals = adj.psi_field.values
        assert abs(h * np.sum(vals)) < 1e-9
        assert h * np.sum(vals * wave.derivative(1)) == pytest.approx(
            1.0, abs=1e-8)

    def test_projection_structure(self, wave):
        # P f = f0 * 1 + <psi, f> u' is a rank-two projection commuting
        # with the zero-frequency Bloch operator
        M = 64
        adj = adjoint_chain(wave, M)
        A = build_bloch_matrix(wave, 0.0, M).matrix
        uc = profile_coefficients(wave, M)
        kv = mode_numbers(M)
        uprime = (2j * np.pi * kv / wave.T) * uc
        one = np.zeros(M, dtype=complex)
        one[M // 2] = 1.0
        e0 = one.copy()
        P = (np.outer(one, e0)
             + wave.T * np.outer(uprime, np.conj(adj.psi_coefs)))
        assert np.max(np.abs(P @ P - P)) < 1e-8
        comm = A @ P - P @ A
        assert np.max(np.abs(comm)) < 1e-6 * np.max(np.abs(A @ P + np.eye(M)))


class TestDualPairs:
    def test_biorthonormality(self, wave):
        adj = adjoint_chain(wave)
        for xi in (0.01, 0.1, 0.3):
            dp = dual_pairs(wave, xi, adjoint=adj)
            for j in range(2):
                for k in range(2):
                    ip = _coef_inner(dp.phi_tilde[:, j], dp.phi[:, k], wave.T)
                    want = 1j * xi if j == k else 0.0
                    assert abs(ip - want) < 1e-10

    def test_eigen_residuals(self, wave):
        A = build_bloch_matrix(wave, 0.05, 64).matrix
        dp = dual_pairs(wave, 0.05)
        for j in range(2):
            lam = dp.lambdas[j]
            r = A @ dp.phi[:, j] - lam * dp.phi[:, j]
            assert np.linalg.norm(r) < 1e-8 * np.linalg.norm(dp.phi[:, j])
            rl = A.conj().T @ dp.phi_tilde[:, j] - np.conj(lam) * dp.phi_tilde[:, j]
            assert np.linalg.norm(rl) < 1e-8 * np.linalg.norm(dp.phi_tilde[:, j])

    def test_projection_converges_to_jordan_projection(self, wave):
        # (1/(i xi)) sum_j phi_j <phi~_j, .> tends to the rank-two projection
        # built from the Jordan chain as xi -> 0
        M = 64
        adj = adjoint_chain(wave, M)
        uc = profile_coefficients(wave, M)
        uprime = (2j * np.pi * mode_numbers(M) / wave.T) * uc
        one = np.zeros(M, dtype=complex)
        one[M // 2] = 1.0
        rng = np.random.default_rng(5)
        f = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        f *= np.exp(-0.3 * np.abs(mode_numbers(M)))
        p0 = f[M // 2] * one + _coef_inner(adj.psi_coefs, f, wave.T) * uprime
        xi = 1e-3
        dp = dual_pairs(wave, xi, adjoint=adj)
        pxi = sum(dp.phi[:, j] * _coef_inner(dp.phi_tilde[:, j], f, wave.T)
                  for j in range(2)) / (1j * xi)
        assert np.linalg.norm(pxi - p0) < 1e-2 * np.linalg.norm(p0)

    def test_beta2_bounded(self, wave):
        adj = adjoint_chain(wave)
        for xi in (0.01, 0.05, 0.2):
            dp = dual_pairs(wave, xi, adjoint=adj)
            assert np.all(np.abs(dp.beta2) < 10)
            assert np.all(np.abs(dp.beta2) > 1e-3)

    def test_rejects_zero_frequency(self, wave):
        with pytest.raises(BlochError):
            dual_pairs(wave, 0.0)


class TestStabilityMap:
    def test_band_location(self):
        out = stability_map([0.0], [7.0, 7.8, 8.6], M=48, xi_count=64)
        cells = out["cells"]
        assert cells[(0.0, 7.0)][0] == "unstable"
        assert cells[(0.0, 7.8)][0] == "stable"
        assert cells[(0.0, 8.6)][0] == "unstable"
        lo, hi = out["bands"][0.0]
        assert 7.4 < lo < 7.65
        assert 8.1 < hi < 8.4
