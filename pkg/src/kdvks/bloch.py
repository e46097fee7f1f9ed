"""Floquet-Bloch analysis of the linearization about a periodic wave.

The linearized operator in the co-moving frame is

    L = d/dx((c - u) . ) - eps*d^3/dx^3 - delta*(d^2/dx^2 + d^4/dx^4)

and its Bloch conjugates L_xi = exp(-i xi x) L exp(i xi x) act on T-periodic
functions.  Everything here is a dense Fourier-Galerkin truncation in the
basis exp(2*pi*i*k*x/T), k = -M/2 .. M/2-1.  Inner products are on (0, T):
<f, g> = T * sum_k conj(f_k) g_k.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .grids import PeriodicGrid, RealField
from .profiles import WaveProfile, galilean_boost  # noqa: F401  (re-export for scans)


class BlochError(RuntimeError):
    """Truncation too small, eigensolver failure, or broken spectral structure."""


def mode_numbers(M: int) -> np.ndarray:
    return np.arange(-(M // 2), M - M // 2)


def profile_coefficients(w: WaveProfile, M: int) -> np.ndarray:
    """Centered Fourier coefficients of the wave, length M, tail-checked."""
    m = w.grid.num_points
    c = np.fft.fft(w.profile.values) / m
    centered = np.fft.fftshift(c)  # index 0 <-> mode -m/2
    modes = np.arange(-(m // 2), m - m // 2)
    out = np.zeros(M, dtype=complex)
    kv = mode_numbers(M)
    total = np.linalg.norm(c)
    dropped = 0.0
    for mode, coef in zip(modes, centered):
        pos = mode + M // 2
        if 0 <= pos < M:
            out[pos] = coef
        else:
            dropped += abs(coef) ** 2
    if total > 0 and np.sqrt(dropped) > 1e-10 * total:
        raise BlochError(
            f"M = {M} too small: truncated profile tail "
            f"{np.sqrt(dropped) / total:.2e} above 1e-10")
    assert kv.shape == out.shape
    return out


def field_to_coefficients(values: np.ndarray, M: int) -> np.ndarray:
    """Centered coefficients of a (possibly complex) T-periodic sample array."""
    m = len(values)
    c = np.fft.fft(values) / m
    centered = np.fft.fftshift(c)
    modes = np.arange(-(m // 2), m - m // 2)
    out = np.zeros(M, dtype=complex)
    for mode, coef in zip(modes, centered):
        pos = mode + M // 2
        if 0 <= pos < M:
            out[pos] = coef
    return out


def coefficients_to_field(coefs: np.ndarray, num_points: int) -> np.ndarray:
    """Evaluate centered coefficients on a uniform grid of num_points."""
    M = len(coefs)
    c = np.zeros(num_points, dtype=complex)
    for pos, coef in enumerate(coefs):
        mode = pos - M // 2
        c[mode % num_points] += coef
    return np.fft.ifft(c) * num_points


@dataclass(frozen=True)
class BlochMatrix:
    xi: float
    modes: int
    T: float
    matrix: np.ndarray


@dataclass(frozen=True)
class SpectrumSlice:
    xi: float
    eigenvalues: np.ndarray           # sorted by descending real part
    eigenvectors: np.ndarray | None = None  # columns, same order


@dataclass(frozen=True)
class StabilityVerdict:
    d1_ok: bool
    d2_ok: bool
    d3_ok: bool
    theta: float
    delta1: float
    xi_grid: np.ndarray
    margins: dict
    marginal: bool = False

    @property
    def stable(self) -> bool:
        return self.d1_ok and self.d2_ok and self.d3_ok and not self.marginal


@dataclass(frozen=True)
class CriticalBranch:
    index: int
    xis: np.ndarray
    lambdas: np.ndarray
    a: float
    d: float
    fit_residual: float


@dataclass(frozen=True)
class DualPair:
    xi: float
    lambdas: np.ndarray        # the two critical eigenvalues
    phi: np.ndarray            # right eigenfunctions, coefficient columns
    phi_tilde: np.ndarray      # left eigenfunctions, normalized <phi~_j, phi_k> = i xi delta_jk
    beta2: np.ndarray          # coefficient of u' in each phi_j


@dataclass(frozen=True)
class AdjointData:
    psi_coefs: np.ndarray
    psi_field: RealField
    chain_residual: float
    normalization: dict


def build_bloch_matrix(w: WaveProfile, xi: float, M: int) -> BlochMatrix:
    """Dense truncation of L_xi about the wave."""
    uc = profile_coefficients(w, M)
    kv = mode_numbers(M)
    kappa = xi + 2 * np.pi * kv / w.T
    D = 1j * kappa
    # convolution block: (C f)_i = sum_j uhat[i-j] f_j
    diffs = kv[:, None] - kv[None, :]
    centered_idx = diffs + M // 2
    conv = np.where((centered_idx >= 0) & (centered_idx < M),
                    uc[np.clip(centered_idx, 0, M - 1)], 0.0)
    eps, delta = w.params.epsilon, w.params.delta
    A = (np.diag(D * w.c) - D[:, None] * conv
         - eps * np.diag(D**3) - delta * np.diag(D**2 + D**4))
    return BlochMatrix(float(xi), M, w.T, A)


def spectrum_slice(bm: BlochMatrix, vectors: bool = False) -> SpectrumSlice:
    try:
        if vectors:
            vals, vecs = np.linalg.eig(bm.matrix)
        else:
            vals = np.linalg.eigvals(bm.matrix)
            vecs = None
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise BlochError(f"eigensolver failed at xi = {bm.xi}: {exc}") from exc
    order = np.argsort(-vals.real)
    vals = vals[order]
    if vecs is not None:
        vecs = vecs[:, order]
    return SpectrumSlice(bm.xi, vals, vecs)


def constant_state_symbol(eps, delta, c, kappa):
    """Closed-form eigenvalues of L_xi about u == 0."""
    return 1j * c * kappa + 1j * eps * kappa**3 + delta * (kappa**2 - kappa**4)


def _coef_inner(f: np.ndarray, g: np.ndarray, T: float) -> complex:
    return T * complex(np.vdot(f, g))


def kernel_residuals(w: WaveProfile, M: int) -> dict:
    """Jordan structure at xi = 0: ||L0 u'|| and ||L0 1 + u'||."""
    A = build_bloch_matrix(w, 0.0, M).matrix
    uc = profile_coefficients(w, M)
    kv = mode_numbers(M)
    uprime = (2j * np.pi * kv / w.T) * uc
    one = np.zeros(M, dtype=complex)
    one[M // 2] = 1.0
    r1 = A @ uprime
    r2 = A @ one + uprime
    return {
        "L0_uprime": float(np.sqrt(w.T) * np.linalg.norm(r1)),
        "L0_one_plus_uprime": float(np.sqrt(w.T) * np.linalg.norm(r2)),
    }


def certify_stability(w: WaveProfile, xi_count: int = 64, M: int = 64,
                      zero_tol: float = 1e-7,
                      sv_gap: float = 1e6) -> StabilityVerdict:
    """Check the diffusive spectral stability conditions (D1)-(D3)."""
    if xi_count < 64:
        raise BlochError("xi_count must be at least 64")
    T = w.T
    xis = -np.pi / T + 2 * np.pi / T * np.arange(xi_count) / xi_count
    if 0.0 not in xis:
        xis = np.sort(np.append(xis, 0.0))

    d1_ok = True
    marginal = False
    theta = np.inf
    worst = {"xi": 0.0, "max_re": -np.inf}
    slices = {}
    for xi in xis:
        sl = spectrum_slice(build_bloch_matrix(w, float(xi), M))
        slices[float(xi)] = sl
        vals = sl.eigenvalues
        if xi == 0.0:
            scale = np.linalg.norm(w.profile.values) + 1.0
            near_zero = np.abs(vals) < zero_tol * max(1.0, scale)
            rest = vals[~near_zero]
            if np.any(rest.real >= 0):
                d1_ok = False
            if np.any(np.abs(rest.real) < zero_tol):
                marginal = True
        else:
            max_re = float(np.max(vals.real))
            if max_re > worst["max_re"]:
                worst = {"xi": float(xi), "max_re": max_re}
            if max_re >= 0:
                d1_ok = False
            elif abs(max_re) < zero_tol:
                marginal = True
            theta = min(theta, -max_re / xi**2)

    d2_ok = bool(np.isfinite(theta) and theta > 0)

    # (D3): exactly two eigenvalues near zero at xi = 0, geometric mult. one
    sl0 = spectrum_slice(build_bloch_matrix(w, 0.0, M), vectors=True)
    a_norm = np.linalg.norm(sl0.eigenvalues)
    near = np.abs(sl0.eigenvalues) < zero_tol * max(1.0, a_norm)
    n_zero = int(np.sum(near))
    d3_ok = n_zero == 2
    sv_ratio = np.inf
    if n_zero == 2:
        vecs = sl0.eigenvectors[:, near]
        sv = np.linalg.svd(vecs, compute_uv=False)
        sv_ratio = float(sv[0] / max(sv[1], 1e-300))
        d3_ok = sv_ratio > sv_gap

    delta1 = 0.0
    if n_zero >= 1:
        others = sl0.eigenvalues[~near]
        if len(others):
            delta1 = float(-np.max(others.real)) / 2.0

    return StabilityVerdict(
        d1_ok=d1_ok, d2_ok=d2_ok, d3_ok=d3_ok,
        theta=float(theta if np.isfinite(theta) else -1.0),
        delta1=delta1, xi_grid=xis,
        margins={"worst_xi": worst["xi"], "worst_re": worst["max_re"],
                 "zero_count": n_zero, "sv_ratio": sv_ratio},
        marginal=marginal)


def find_xi1(w: WaveProfile, M: int = 64, samples: int = 64) -> tuple:
    """Largest frequency below which the third eigenvalue stays below
    -delta_1/2, with delta_1 half the spectral gap at xi = 0."""
    sl0 = spectrum_slice(build_bloch_matrix(w, 0.0, M))
    vals0 = sl0.eigenvalues
    near0 = np.abs(vals0) < 1e-7 * max(1.0, np.linalg.norm(vals0))
    others = vals0[~near0]
    delta1 = -float(np.max(others.real)) / 2.0
    if delta1 <= 0:
        raise BlochError("no spectral gap at xi = 0")
    xi_max = np.pi / w.T
    xi1 = 0.0
    for xi in np.linspace(xi_max / samples, xi_max, samples):
        vals = spectrum_slice(build_bloch_matrix(w, float(xi), M)).eigenvalues
        third_re = np.sort(vals.real)[::-1][2]
        if third_re < -delta1 / 2:
            xi1 = float(xi)
        else:
            break
    if xi1 == 0.0:
        raise BlochError("could not establish a critical frequency window")
    return xi1, delta1


def smooth_cutoff(xi1: float):
    """Smooth bump: 1 on |xi| <= xi1/2, 0 on |xi| >= xi1."""

    def rho(xi):
        s = (np.abs(xi) - xi1 / 2) / (xi1 / 2)
        out = np.ones_like(np.asarray(xi, dtype=float))
        out = np.where(s >= 1.0, 0.0, out)
        mid = (s > 0) & (s < 1)
        s_mid = np.clip(s, 1e-300, 1 - 1e-12)
        with np.errstate(divide="ignore", over="ignore"):
            bump = np.exp(1.0 - 1.0 / (1.0 - s_mid**2))
        out = np.where(mid, bump, out)
        return out if out.shape else float(out)

    return rho


def _critical_pair(A: np.ndarray):
    """Right/left eigenpairs of the two eigenvalues closest to zero."""
    vals, vl, vr = scipy.linalg.eig(A, left=True, right=True)
    order = np.argsort(np.abs(vals))[:2]
    return vals[order], vr[:, order], vl[:, order]


def critical_expansion(w: WaveProfile, xi_max: float | None = None,
                       samples: int = 24, M: int = 64,
                       overlap_threshold: float = 0.7):
    """Track the two critical eigenvalue branches and fit their expansions.

    Returns two CriticalBranch with lambda_j(xi) = -i a_j xi - d_j xi^2 + ...
    """
    if xi_max is None:
        # fit window well inside the critical region: the quadratic
        # coefficients converge as the window shrinks and a quarter of the
        # cutoff frequency is already in the asymptotic regime
        xi1, _ = find_xi1(w, M)
        xi_max = xi1 / 4
    xis = np.linspace(xi_max / samples, xi_max, samples)

    lam = np.zeros((2, samples), dtype=complex)
    prev_vecs = None
    i = 0
    xi_list = list(xis)
    while i < len(xi_list):
        xi = xi_list[i]
        A = build_bloch_matrix(w, float(xi), M).matrix
        vals, vr, _ = _critical_pair(A)
        if prev_vecs is not None:
            ov = np.abs(prev_vecs.conj().T @ vr)
            ov /= (np.linalg.norm(prev_vecs, axis=0)[:, None]
                   * np.linalg.norm(vr, axis=0)[None, :])
            keep = min(ov[0, 0], ov[1, 1])
            swap = min(ov[0, 1], ov[1, 0])
            if max(keep, swap) < overlap_threshold:
                # pairing ambiguity: refine the grid dyadically
                xi_prev = xi_list[i - 1] if i > 0 else 0.0
                xi_list.insert(i, (xi_prev + xi) / 2)
                lam = np.insert(lam, i, 0.0, axis=1)
                continue
            if swap > keep:
                vals = vals[::-1]
                vr = vr[:, ::-1]
        else:
            # seed ordering: sort by the Whitham characteristic estimate
            a_est = (-vals.imag) / xi
            order = np.argsort(a_est)
            vals = vals[order]
            vr = vr[:, order]
        lam[:, i] = vals
        prev_vecs = vr
        i += 1

    xis = np.array(xi_list)
    branches = []
    for j in range(2):
        lj = lam[j]
        # constrained fits lambda(0) = 0:
        #   Im = -a xi + e_i xi^3,  Re = -d xi^2 + e_r xi^3 + f xi^4
        Ai = np.column_stack([-xis, xis**3])
        coef_i, res_i, *_ = np.linalg.lstsq(Ai, lj.imag, rcond=None)
        Ar = np.column_stack([-(xis**2), xis**3, xis**4])
        coef_r, res_r, *_ = np.linalg.lstsq(Ar, lj.real, rcond=None)
        fit_res = float(np.sqrt((np.sum(res_i) + np.sum(res_r))
                                / max(len(xis), 1)))
        branches.append(CriticalBranch(
            index=j + 1, xis=xis, lambdas=lj,
            a=float(coef_i[0]), d=float(coef_r[0]), fit_residual=fit_res))
    if abs(branches[0].a - branches[1].a) < 1e-6:
        raise BlochError(
            "non-degeneracy failure: Whitham characteristics coincide "
            f"(a1 = {branches[0].a}, a2 = {branches[1].a})")
    return tuple(branches)


def adjoint_chain(w: WaveProfile, M: int = 64) -> AdjointData:
    """Generalized left eigenfunction: adjoint Jordan-chain solve at xi = 0.

    Solves L0^dag psi = const on the complement of the adjoint kernel
    (constants), then shifts so <psi, 1> = 0 and scales so <psi, u'> = 1.
    """
    A = build_bloch_matrix(w, 0.0, M).matrix
    uc = profile_coefficients(w, M)
    kv = mode_numbers(M)
    uprime = (2j * np.pi * kv / w.T) * uc
    one = np.zeros(M, dtype=complex)
    one[M // 2] = 1.0

    Ah = A.conj().T
    psi, *_ = np.linalg.lstsq(Ah, one, rcond=None)
    resid = np.linalg.norm(Ah @ psi - one)
    # project out the adjoint-kernel (constant) component
    psi = psi - _coef_inner(one, psi, w.T) / w.T * one
    scale = _coef_inner(psi, uprime, w.T)
    if abs(scale) < 1e-12:
        raise BlochError("adjoint chain solve degenerate: <psi, u'> ~ 0")
    psi = psi / np.conj(scale)
    chain_res = float(resid * np.sqrt(w.T))
    if chain_res > 1e-7 * max(1.0, np.linalg.norm(one)):
        raise BlochError(
            f"adjoint chain residual {chain_res:.2e} signals broken Jordan "
            "structure")
    vals = coefficients_to_field(psi, w.grid.num_points)
    psi_field = RealField(w.grid, vals.real)
    return AdjointData(
        psi_coefs=psi, psi_field=psi_field, chain_residual=chain_res,
        normalization={
            "psi_one": _coef_inner(psi, one, w.T),
            "psi_uprime": _coef_inner(psi, uprime, w.T),
        })


def dual_pairs(w: WaveProfile, xi: float, M: int = 64,
               adjoint: AdjointData | None = None) -> DualPair:
    """Critical right/left eigenpairs at 0 < |xi| <= xi1, normalized so
    that <phi~_j, phi_k> = i xi delta_jk."""
    if xi == 0.0:
        raise BlochError("dual pairs are defined for nonzero xi only")
    if adjoint is None:
        adjoint = adjoint_chain(w, M)
    A = build_bloch_matrix(w, float(xi), M).matrix
    vals, vr, vl = _critical_pair(A)
    # scipy convention: vl[:,k]^H A = w_k vl[:,k]^H, i.e. left eigvecs
    phi = vr.astype(complex)
    phi_t = vl.astype(complex)
    # pair left to right eigenvectors by maximizing |<phi~, phi>|, which is
    # robust against ordering differences in the eigensolver output
    g = np.abs(phi_t.conj().T @ phi)
    if g[0, 0] * g[1, 1] < g[0, 1] * g[1, 0]:
        phi_t = phi_t[:, ::-1]
    for j in range(2):
        ip = _coef_inner(phi_t[:, j], phi[:, j], w.T)
        if abs(ip) < 1e-12 * np.linalg.norm(phi_t[:, j]) * np.linalg.norm(phi[:, j]):
            raise BlochError(f"defective point at xi = {xi}: <phi~, phi> ~ 0")
        phi_t[:, j] = phi_t[:, j] * np.conj(1j * xi / ip)
    beta2 = np.array([
        _coef_inner(adjoint.psi_coefs, phi[:, j], w.T) for j in range(2)])
    return DualPair(float(xi), vals, phi, phi_t, beta2)


# ---------------------------------------------------------------------------
# stability map over (epsilon, period)

def _band_verdict(epsilon: float, T: float, M: int, num_points: int,
                  xi_count: int):
    from .profiles import ProfileError, solve_ks_wave

    try:
        w = solve_ks_wave(T, epsilon=epsilon, num_points=num_points)
    except ProfileError as exc:
        return ("unknown", f"profile failure: {exc}", None)
    v = certify_stability(w, xi_count=xi_count, M=M)
    return ("stable" if v.stable else "unstable", "", v)


def stability_map(eps_grid, T_grid, M: int = 48, num_points: int = 64,
                  xi_count: int = 64, refine_tol: float = 1e-3,
                  workers: int | None = None) -> dict:
    """Verdict per (eps, T) cell plus bisected band endpoints per eps row."""
    from concurrent.futures import ProcessPoolExecutor

    if workers is None:
        workers = int(os.environ.get("KDVKS_WORKERS", "0")) or None

    cells = {}
    jobs = [(float(e), float(T)) for e in eps_grid for T in T_grid]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_map_job,
                                    [(e, T, M, num_points, xi_count)
                                     for e, T in jobs]))
        for (e, T), res in zip(jobs, results):
            cells[(e, T)] = res
    else:
        for e, T in jobs:
            cells[(e, T)] = _band_verdict(e, T, M, num_points, xi_count)

    bands = {}
    for e in map(float, eps_grid):
        row = sorted(T for (ee, T) in cells if ee == e)
        stab = [T for T in row if cells[(e, T)][0] == "stable"]
        if not stab:
            bands[e] = None
            continue
        lo, hi = min(stab), max(stab)
        below = [T for T in row if T < lo]
        above = [T for T in row if T > hi]
        lo_edge = _bisect_edge(e, max(below) if below else lo * 0.9, lo,
                               M, num_points, xi_count, refine_tol)
        hi_edge = _bisect_edge(e, min(above) if above else hi * 1.1, hi,
                               M, num_points, xi_count, refine_tol)
        bands[e] = (lo_edge, hi_edge)
    return {"cells": cells, "bands": bands}


def _map_job(args):
    return _band_verdict(*args)


def _bisect_edge(epsilon, t_out, t_in, M, num_points, xi_count, rel_tol):
    """Bisection in period between an unstable (t_out) and stable (t_in) end."""
    v_out = _band_verdict(epsilon, t_out, M, num_points, xi_count)
    if v_out[0] == "stable":
        return t_out
    for _ in range(60):
        if abs(t_out - t_in) < rel_tol * abs(t_in):
            break
        mid = 0.5 * (t_out + t_in)
        if _band_verdict(epsilon, mid, M, num_points, xi_count)[0] == "stable":
            t_in = mid
        else:
            t_out = mid
    return t_in
