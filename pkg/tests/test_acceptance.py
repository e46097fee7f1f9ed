"""Acceptance gate: one test per headline capability, one verdict line each.

Run with `pytest tests/test_acceptance.py -s` to see the [ACCEPT] lines as
they complete.  Each test prints exactly one PASS/FAIL line and asserts the
same condition, so the suite doubles as a machine-checkable gate and a
human-readable report.  Total runtime is a few minutes; the heavy pieces
(lattice-uniformity monitors, nonlinear simulations, the stability map) are
trimmed to the smallest sizes that still exercise the claims.
"""

import json
import pathlib

import numpy as np
import pytest

from kdvks.bloch import (
    build_bloch_matrix,
    constant_state_symbol,
    critical_expansion,
    kernel_residuals,
    mode_numbers,
    spectrum_slice,
    stability_map,
)
from kdvks.grids import (
    PeriodicGrid,
    RealField,
    SubharmonicLattice,
    bloch_transform,
    check_parseval,
    inverse_bloch,
    norm_l2,
)
from kdvks.profiles import (
    WaveParameters,
    circular_shift,
    solve_ks_wave,
    solve_profile,
)
from kdvks.semigroup import (
    BlochSemigroup,
    discrete_sum_bound,
    gap_scan,
    make_cutoff,
    measure_uniform_bounds,
)
from kdvks.simulate import SimConfig, run
from kdvks.experiments import (
    PerturbationSpec,
    compare_remainder_implementations,
    evaluate_perturbation_residual,
    fit_fixedN_decay,
    fit_uniform_decay,
    make_perturbation,
)

DATA = pathlib.Path(__file__).parent / "data"


def accept(name, ok, detail):
    print(f"[ACCEPT] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def wave():
    return solve_ks_wave(7.8)


@pytest.fixture(scope="module")
def cutoff(wave):
    return make_cutoff(wave)


@pytest.fixture(scope="module")
def branch(wave):
    return critical_expansion(wave)


def random_field(wave, N, seed=0, decay=0.25):
    n = N * wave.grid.num_points
    grid = PeriodicGrid(N * wave.T, n)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    c *= np.exp(-decay * np.abs(np.fft.fftfreq(n, d=1.0 / n)))
    vals = np.fft.ifft(c).real
    return RealField(grid, vals / np.max(np.abs(vals)))


def simulate_perturbed(wave, N, amplitude, t_end, snapshots, seed=0,
                       dt=0.02, E0=None):
    spec = PerturbationSpec(N=N, shape="random", amplitude=amplitude,
                            seed=seed)
    u0, rep = make_perturbation(spec, wave)
    if E0 is not None:
        ubar = np.tile(wave.profile.values, N)
        u0 = RealField(u0.grid, ubar + E0 * (u0.values - ubar) / rep["E0"])
        rep = dict(rep, E0=E0)
    cfg = SimConfig(wave.params, wave.c, N * wave.T,
                    N * wave.grid.num_points, dt=dt, t_end=t_end,
                    snapshot_times=tuple(snapshots))
    return run(cfg, u0), rep


def test_constant_state_symbol_exact():
    # the one-frequency operator at a flat state must be exactly the
    # dispersion symbol, eigenvalues included, for random parameters
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(64):
        eps = rng.uniform(0.0, 0.9)
        c = rng.uniform(-2.0, 2.0)
        T = rng.uniform(4.0, 9.0)
        xi = rng.uniform(-np.pi / T, np.pi / T)
        p = WaveParameters.from_epsilon(eps)
        w = solve_profile(p, T, RealField(PeriodicGrid(T, 32),
                                          np.zeros(32)), c)
        A = build_bloch_matrix(w, xi, 32).matrix
        kappa = xi + 2 * np.pi * mode_numbers(32) / T
        expect = constant_state_symbol(eps, w.params.delta, c, kappa)
        scale = np.max(np.abs(expect))
        off = np.max(np.abs(A - np.diag(np.diag(A)))) / scale
        diag = np.max(np.abs(np.diag(A) - expect)) / scale
        lam = np.max(np.abs(
            np.sort_complex(spectrum_slice(
                build_bloch_matrix(w, xi, 32)).eigenvalues)
            - np.sort_complex(expect))) / scale
        worst = max(worst, off, diag, lam)
    accept("constant-state symbol", worst < 1e-12,
           f"64 random cases, worst rel err {worst:.1e}")


def test_kernel_jordan_structure(wave):
    r = kernel_residuals(wave, 64)
    worst = max(r.values())
    accept("translation/Galilean kernel", worst < 1e-8,
           f"L0 u' and L0(1) + u' residuals <= {worst:.1e}")


def test_bloch_transform_identities(wave):
    # inversion and the Parseval pairing on random fields, random lattices
    rng = np.random.default_rng(11)
    worst_inv, worst_par = 0.0, 0.0
    for i in range(100):
        N = int(rng.choice([1, 2, 3, 4, 8]))
        f = random_field(wave, N, seed=100 + i)
        g = random_field(wave, N, seed=300 + i)
        lat = SubharmonicLattice(N, wave.T)
        back = inverse_bloch(bloch_transform(f, lat))
        worst_inv = max(worst_inv, float(np.max(np.abs(
            back.values - f.values))))
        worst_par = max(worst_par, check_parseval(f, g, lat)["rel_err"])
    ok = worst_inv < 1e-10 and worst_par < 1e-10
    accept("Bloch transform identities", ok,
           f"100 random cases, inversion {worst_inv:.1e}, "
           f"Parseval {worst_par:.1e}")


def test_semigroup_pieces_reassemble(wave, cutoff):
    worst = 0.0
    for N in (1, 2, 4, 8):
        sg = BlochSemigroup(wave, N, cutoff)
        v = random_field(wave, N, seed=40 + N)
        for t in (0.1, 1.0, 10.0, 100.0):
            full = sg.apply(v, t)
            p = sg.decompose(v, t)
            scale = max(1.0, float(np.max(np.abs(full.values))))
            worst = max(worst, float(np.max(np.abs(
                p.total.values - full.values))) / scale, p.imag_max)
    accept("five-piece reassembly", worst < 1e-8,
           f"N in {{1,2,4,8}}, t up to 100, worst rel err {worst:.1e}")


def test_jordan_flow_of_the_mean(wave, cutoff):
    # the zero-frequency block sends 1 to 1 - t u' for all t
    sg = BlochSemigroup(wave, 1, cutoff)
    one = RealField(PeriodicGrid(wave.T, wave.grid.num_points),
                    np.ones(wave.grid.num_points))
    up = wave.derivative(1)
    worst = 0.0
    for t in (0.5, 10.0, 100.0):
        out = sg.apply(one, t)
        scale = max(1.0, t * float(np.max(np.abs(up))))
        worst = max(worst, float(np.max(np.abs(
            out.values - (1.0 - t * up)))) / scale)
    accept("mean-mode Jordan flow", worst < 1e-8,
           f"e^(tL) 1 = 1 - t u', worst rel err {worst:.1e}")


def test_lattice_sum_envelope_uniform():
    # the weighted lattice sums stay put when the lattice doubles
    t = np.logspace(-1, 4, 60)
    worst = 0.0
    for omega in (0, 1, 2):
        out = discrete_sum_bound(omega, 1.0, [32, 64], t)
        s = out["sup_weighted"]
        worst = max(worst, abs(s[64] / s[32] - 1.0))
    accept("lattice sum envelope", worst < 0.05,
           f"omega in {{0,1,2}}, doubling 32->64 drift {worst:.1%}")


def test_linear_uniform_monitors(wave, cutoff):
    # weighted sup monitors for the slow pieces across lattice sizes;
    # exponent fits are not stable at these sizes (transients stretch with
    # N), so uniformity of the constants is what gets certified
    t = np.geomspace(1.0, 300.0, 16)
    out = measure_uniform_bounds(wave, [16, 32, 64], t, seeds=4,
                                 cutoff=cutoff)
    worst = max(out["ratios"].values())
    accept("linear decay uniformity", worst < 2.0,
           f"N in {{16,32,64}}, worst cross-N monitor ratio {worst:.2f}")


def test_gap_quadratic_collapse(wave, branch):
    b1, _ = branch
    N = 64
    gap = gap_scan(wave, [N])[N]
    target = b1.d * (2 * np.pi / (N * wave.T)) ** 2
    rel = abs(gap / target - 1.0)
    accept("spectral gap collapse", rel < 0.05,
           f"N=64 gap {gap:.3e} vs d (2 pi / NT)^2, rel err {rel:.1e}")


def test_stability_band_frozen():
    golden = json.loads((DATA / "stable_band.json").read_text())
    t_grid = [7.25, 7.5, 7.75, 8.0, 8.25]
    worst = 0.0
    contiguous = True
    for M, xi_count in ((48, 64), (64, 96)):
        out = stability_map([0.0], t_grid, M=M, xi_count=xi_count,
                            refine_tol=1e-3)
        verdicts = [out["cells"][(0.0, T)][0] for T in t_grid]
        stable_idx = [i for i, v in enumerate(verdicts) if v == "stable"]
        contiguous &= stable_idx == list(
            range(stable_idx[0], stable_idx[-1] + 1))
        lo, hi = out["bands"][0.0]
        worst = max(worst, abs(lo / golden["t_lo"] - 1.0),
                    abs(hi / golden["t_hi"] - 1.0))
    ok = contiguous and worst < 1e-2
    accept("stability band", ok,
           f"two resolutions vs frozen edges "
           f"({golden['t_lo']}, {golden['t_hi']}), worst rel {worst:.1e}, "
           f"contiguous={contiguous}")


def test_nonlinear_fixed_lattice_rates(wave):
    # co-periodic and period-doubled perturbations relax at the linear gap
    worst = 0.0
    details = []
    for N, t_end, window in ((1, 25.0, (3.0, 18.0)), (2, 60.0, (5.0, 40.0))):
        snaps = tuple(np.round(np.linspace(1.0, t_end, 30), 6))
        traj, _ = simulate_perturbed(wave, N, 1e-2, t_end, snaps)
        out = fit_fixedN_decay(traj, wave, N, t_min=window[0],
                               t_max=window[1])
        gap = gap_scan(wave, [N])[N]
        rel = abs(out["delta_fit"] / gap - 1.0)
        worst = max(worst, rel)
        details.append(f"N={N} rate {out['delta_fit']:.4f} vs {gap:.4f}")
        shifts = out["shifts"]
        assert abs(shifts[-1] - shifts[-2]) < 1e-3
    accept("fixed-lattice nonlinear rates", worst < 0.2,
           "; ".join(details) + f", worst rel {worst:.1%}")


def test_nonlinear_uniform_decay(wave, branch):
    b1, _ = branch

    def window(N):
        gap = b1.d * (2 * np.pi / (N * wave.T)) ** 2
        return (2.0, min(500.0, 1.5 / gap))

    snaps = tuple(np.unique(np.round(np.logspace(0, np.log10(500), 40), 2)))
    runs, e0 = {}, {}
    for N in (2, 4, 8):
        runs[N], rep = simulate_perturbed(wave, N, 0.05, 500.0, snaps,
                                          seed=2, E0=0.5)
        e0[N] = rep["E0"]
    out = fit_uniform_decay(runs, wave, E0=e0, fit_window=window)
    zs = out["zeta"]
    spread = max(zs.values()) / min(zs.values())
    psi = out["psi_over_E0"]
    # N=2 keeps essentially no phase content (only the constant survives the
    # frequency cutoff), so the cross-N comparison is made for N >= 4
    psi_ratio = max(psi[4], psi[8]) / min(psi[4], psi[8])
    ok = (spread < 2.0 and max(psi.values()) <= 0.2 and psi_ratio < 2.0)
    accept("uniform nonlinear decay", ok,
           f"E0=0.5, t to 500: zeta spread {spread:.2f}, "
           f"sup|psi|/E0 <= {max(psi.values()):.3f}, "
           f"phase ratio (N>=4) {psi_ratio:.2f}")


def test_modulated_residual_identity(wave):
    # dual implementations of the remainder agree, and the identity reduces
    # to the plain perturbation equation on simulated data at flat phase
    N = 2
    grid = PeriodicGrid(N * wave.T, 256)
    rng = np.random.default_rng(5)

    def smooth(seed, scale):
        r = np.random.default_rng(seed)
        n = grid.num_points
        c = r.standard_normal(n) + 1j * r.standard_normal(n)
        c *= np.exp(-0.6 * np.abs(np.fft.fftfreq(n, d=1.0 / n)))
        vals = np.fft.ifft(c).real
        return scale * vals / np.max(np.abs(vals))

    err = compare_remainder_implementations(
        wave, grid, smooth(1, 0.3), smooth(2, 0.2), smooth(3, 0.1),
        0.07, N)

    h = 0.01
    traj, _ = simulate_perturbed(wave, 1, 1e-2, 1.0 + h,
                                 (1.0 - h, 1.0, 1.0 + h), dt=0.005)
    g1 = traj.snapshots[0][1].grid
    ubar = wave.profile.values
    vm, v0, vp = (f.values - ubar for _, f in traj.snapshots[-3:])
    zero = np.zeros(g1.num_points)
    rep = evaluate_perturbation_residual(
        wave, 1, v0, (vp - vm) / (2 * h), zero, zero, 0.0, 0.0, g1)
    ok = err < 1e-10 and rep.imbalance < 1e-5
    accept("modulated residual identity", ok,
           f"dual remainder agreement {err:.1e}, "
           f"flat-phase imbalance {rep.imbalance:.1e}")
