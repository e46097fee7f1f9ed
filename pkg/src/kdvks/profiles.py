"""Newton computation of T-periodic traveling wave profiles.

The profile equation integrated once reads

    -c*u + eps*u'' + delta*(u' + u''') + u^2/2 = q

with q a constant of integration.  We work in the mean-zero gauge: the Galilean
family is quotiented out by forcing mean(u) = 0, which turns q into an output
(the zero Fourier mode of the left-hand side) instead of an unknown.  A phase
condition <guess', u - guess> = 0 pins translation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grids import PeriodicGrid, RealField, norm_l2


class ProfileError(RuntimeError):
    """Newton failure, divergence, or collapse to the trivial state."""


@dataclass(frozen=True)
class WaveParameters:
    """Model parameters of the normalized equation (eps^2 + delta^2 = 1)."""

    epsilon: float
    delta: float

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")
        r = self.epsilon**2 + self.delta**2
        if abs(r - 1.0) > 1e-8:
            raise ValueError(
                f"parameters not normalized: eps^2+delta^2 = {r}")

    @staticmethod
    def from_epsilon(epsilon: float) -> "WaveParameters":
        return WaveParameters(epsilon, float(np.sqrt(1.0 - epsilon**2)))


def normalize_parameters(eps_raw: float, delta_raw: float, gamma_raw: float,
                         lambda_raw: float):
    """Rescale u_t + e*u_xxx + d*u_xx + g*u_xxxx + L*u*u_x = 0 to normal form.

    Returns (WaveParameters, scales) where scales = {x: a, t: b, u: m} such
    that u(x, t) = m * w(x/a, t/b) solves the general equation whenever w
    solves the normalized one.
    """
    if delta_raw <= 0 or gamma_raw <= 0 or lambda_raw <= 0:
        raise ValueError("delta, gamma and lambda must all be positive")
    alpha = float(np.sqrt(gamma_raw / delta_raw))
    beta = 1.0 / float(np.sqrt(
        eps_raw**2 * (delta_raw / gamma_raw) ** 3
        + delta_raw**4 / gamma_raw**2))
    eps = eps_raw * beta / alpha**3
    delta = delta_raw * beta / alpha**2
    mu = alpha / (lambda_raw * beta)
    return WaveParameters(eps, delta), {"x": alpha, "t": beta, "u": mu}


@dataclass(frozen=True)
class WaveProfile:
    """Converged T-periodic traveling wave with speed c and constant q."""

    params: WaveParameters
    T: float
    c: float
    q: float
    profile: RealField
    residual_norm: float
    mean_zero: bool = True

    @property
    def grid(self) -> PeriodicGrid:
        return self.profile.grid

    def derivative(self, order: int = 1) -> np.ndarray:
        from .grids import derivative_values
        return derivative_values(self.profile.values, self.grid, order)


@dataclass
class ContinuationBranch:
    profiles: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str = ""


def _spectral_matrices(grid: PeriodicGrid):
    """Dense differentiation matrices D^1..D^4 and the 2/3 dealias projector."""
    n = grid.num_points
    eye = np.eye(n)
    ik = 1j * grid.wavenumbers
    mats = {}
    for order in (1, 2, 3, 4):
        mult = ik**order
        if order % 2 == 1:
            mult = mult.copy()
            mult[n // 2] = 0.0
        mats[order] = np.fft.ifft(mult[:, None] * np.fft.fft(eye, axis=0),
                                  axis=0).real
    kidx = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    mask = (kidx < n / 3).astype(float)
    dealias = np.fft.ifft(mask[:, None] * np.fft.fft(eye, axis=0), axis=0).real
    return mats, dealias


def _integrated_residual(u, c, params, mats, dealias):
    """Left side of the integrated profile equation (before subtracting q)."""
    ud = dealias @ u
    quad = dealias @ (ud * ud) / 2.0
    return (-c * u + params.epsilon * (mats[2] @ u)
            + params.delta * (mats[1] @ u + mats[3] @ u) + quad)


def solve_profile(params: WaveParameters, T: float, initial_guess: RealField,
                  c_guess: float = 0.0, tol: float = 1e-10,
                  max_iter: int = 50) -> WaveProfile:
    """Newton solution of the integrated profile equation in mean-zero gauge."""
    grid = initial_guess.grid
    if not np.isclose(grid.length, T, rtol=1e-12):
        raise ProfileError("initial guess grid length does not match T")
    m = grid.num_points
    mats, dealias = _spectral_matrices(grid)
    h = grid.spacing

    # the Nyquist mode is excluded from the solution space: its odd-derivative
    # symbol vanishes, leaving it unconstrained (and kappa^4-amplified) for KS
    nyq_mask = np.ones(m)
    nyq_mask[m // 2] = 0.0
    def strip_nyquist(v):
        return np.fft.ifft(np.fft.fft(v) * nyq_mask).real

    guess = initial_guess.values - np.mean(initial_guess.values)
    guess = strip_nyquist(guess)
    phase_dir = mats[1] @ guess
    guess_nontrivial = norm_l2(initial_guess) > 1e-6

    u = guess.copy()
    c = float(c_guess)
    ones = np.ones(m)

    def newton(u, c, proj, iters, required):
        for _ in range(iters):
            r = _integrated_residual(u, c, params, mats, proj)
            q = float(np.mean(r))
            f = r - q
            res = float(np.sqrt(h * np.sum(f * f)))
            g_mean = float(np.mean(u))
            g_phase = float(h * np.sum(phase_dir * (u - guess)))
            if res < tol and abs(g_mean) < 1e-13 and abs(g_phase) < tol:
                return u, c, True
            ud = proj @ u
            j_nl = proj @ (ud[:, None] * proj)
            j_r = (-c * np.eye(m) + params.epsilon * mats[2]
                   + params.delta * (mats[1] + mats[3]) + j_nl)
            j_f = j_r - np.outer(ones, ones @ j_r) / m
            jac = np.zeros((m + 2, m + 1))
            jac[:m, :m] = j_f
            jac[:m, m] = -(u - np.mean(u))
            jac[m, :m] = 1.0 / m
            jac[m + 1, :m] = phase_dir * h
            rhs = -np.concatenate([f, [g_mean, g_phase]])
            step, *_ = np.linalg.lstsq(jac, rhs, rcond=None)
            u = strip_nyquist(u + step[:m])
            c = c + float(step[m])
            if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > 1e6:
                raise ProfileError("Newton iteration diverged")
        if required:
            raise ProfileError(
                f"Newton did not converge in {iters} iterations "
                f"(residual {res:.3e})")
        return u, c, False

    u, c, _ = newton(u, c, dealias, max_iter, required=True)
    # polish without dealiasing: the spectral tail of a converged smooth wave
    # is at round-off, so the aliasing error of the full product is negligible,
    # and the polished wave satisfies the undealiased Galerkin equations that
    # downstream linearizations are built from
    nyq_proj = np.fft.ifft(nyq_mask[:, None] * np.fft.fft(np.eye(m), axis=0),
                           axis=0).real
    u, c, _ = newton(u, c, nyq_proj, 10, required=False)
    dealias = nyq_proj

    if guess_nontrivial and norm_l2(RealField(grid, u)) < 1e-8:
        raise ProfileError(
            "converged to the trivial solution u == 0 although a nontrivial "
            "wave was requested")

    r = _integrated_residual(u, c, params, mats, dealias)
    q = float(np.mean(r))
    res = float(np.sqrt(h * np.sum((r - q) ** 2)))
    u = u - np.mean(u)  # enforce gauge exactly
    return WaveProfile(params, float(T), c, q, RealField(grid, u), res)


def cosine_seed(T: float, num_points: int, amplitude: float) -> RealField:
    grid = PeriodicGrid(T, num_points)
    return RealField(grid, amplitude * np.cos(2 * np.pi * grid.points / T))


def weakly_nonlinear_amplitude(T: float, delta: float = 1.0) -> float:
    """First-harmonic amplitude predicted by the Stuart-Landau balance.

    Balancing the fundamental against the second harmonic it generates gives
    A^2 = 16 delta^2 k^2 (1-k^2)(4k^2-1) for wavenumber k = 2 pi / T in
    (1/2, 1); zero outside the supercritical range.
    """
    k = 2 * np.pi / T
    val = (1 - k * k) * (4 * k * k - 1)
    return 4 * delta * k * np.sqrt(val) if val > 0 else 0.0


def bifurcation_seed(T: float, num_points: int = 64,
                     delta: float = 1.0) -> RealField:
    """Cosine seed at the weakly nonlinear amplitude past onset (T > 2 pi).

    A square-root-law seed with a small prefactor falls inside the basin of
    the trivial state; the Stuart-Landau amplitude lands in the wave's basin.
    """
    amp = weakly_nonlinear_amplitude(T, delta)
    return cosine_seed(T, num_points, amp if amp > 0 else 0.01)


def solve_ks_wave(T: float, epsilon: float = 0.0, num_points: int = 64,
                  seed_amplitude: float | None = None) -> WaveProfile:
    """Convenience driver: bifurcation seed, then Newton at the requested T.

    For periods well past onset the cosine seed may leave the Newton basin;
    in that case continue in T from near onset.
    """
    params = WaveParameters.from_epsilon(epsilon)
    seed = (bifurcation_seed(T, num_points, params.delta)
            if seed_amplitude is None
            else cosine_seed(T, num_points, seed_amplitude))
    try:
        return solve_profile(params, T, seed, 0.0)
    except ProfileError:
        t0 = 2 * np.pi * 1.02
        if T <= t0:
            raise
        branch = continue_in_period(
            solve_profile(params, t0,
                          bifurcation_seed(t0, num_points, params.delta), 0.0),
            (t0, T), step=0.1)
        last = branch.profiles[-1]
        if not np.isclose(last.T, T, rtol=1e-12):
            raise ProfileError(f"continuation stalled at T = {last.T}")
        return last


def continue_in_period(seed: WaveProfile, t_range, step: float,
                       min_step: float = 1e-4) -> ContinuationBranch:
    """Natural continuation of a profile branch over a range of periods."""
    t0, t1 = t_range
    direction = 1.0 if t1 >= t0 else -1.0
    step = abs(step)
    branch = ContinuationBranch()
    current = seed
    if not np.isclose(seed.T, t0, rtol=1e-9):
        current = solve_profile(
            seed.params, t0,
            RealField(PeriodicGrid(t0, seed.grid.num_points),
                      seed.profile.values), seed.c)
    branch.profiles.append(current)
    t = t0
    while direction * (t1 - t) > 1e-12:
        dt = min(step, abs(t1 - t))
        t_next = t + direction * dt
        guess = RealField(PeriodicGrid(t_next, current.grid.num_points),
                          current.profile.values)
        try:
            nxt = solve_profile(current.params, t_next, guess, current.c)
        except ProfileError:
            step /= 2
            if step < min_step:
                branch.aborted = True
                branch.abort_reason = (
                    f"step fell below {min_step} near T = {t} (fold?)")
                return branch
            continue
        branch.profiles.append(nxt)
        branch.steps.append(direction * dt)
        current = nxt
        t = t_next
    return branch


def galilean_boost(w: WaveProfile, c_shift: float) -> WaveProfile:
    """Shift along the Galilean family: u -> u + s, c -> c + s."""
    if c_shift == 0.0:
        return w
    vals = w.profile.values + c_shift
    q_new = w.q - w.c * c_shift - 0.5 * c_shift**2
    return replace(w, c=w.c + c_shift, q=q_new,
                   profile=RealField(w.grid, vals),
                   mean_zero=bool(abs(np.mean(vals)) < 1e-13))


def circular_shift(values: np.ndarray, grid: PeriodicGrid, s: float) -> np.ndarray:
    """Spectral evaluation of v(x - s)."""
    c = np.fft.fft(values)
    shifted = np.fft.ifft(c * np.exp(-1j * grid.wavenumbers * s))
    return shifted.real if np.isrealobj(values) else shifted


def estimate_shift(a: np.ndarray, b: np.ndarray, grid: PeriodicGrid) -> float:
    """Shift s minimizing ||a(. - s) - b||_2, cross-correlation + refinement."""
    from scipy.optimize import minimize_scalar

    def objective(s):
        d = circular_shift(a, grid, s) - b
        return float(np.sum(d * d))

    h = grid.spacing
    coarse = [objective(j * h) for j in range(grid.num_points)]
    j0 = int(np.argmin(coarse))
    s0 = j0 * h
    res = minimize_scalar(objective, bounds=(s0 - h, s0 + h),
                          method="bounded",
                          options={"xatol": 1e-13})
    return float(res.x % grid.length)


def unintegrated_residual(w: WaveProfile, refine: int = 4) -> float:
    """L^2 residual of the original (unintegrated) profile ODE at refined
    resolution; independent of the Newton discretization (no dealiasing,
    different grid)."""
    m = w.grid.num_points
    c_coef = np.fft.fft(w.profile.values) / m
    n = refine * m
    pad = np.zeros(n, dtype=complex)
    pad[: m // 2] = c_coef[: m // 2]
    pad[-(m // 2):] = c_coef[-(m // 2):]
    grid = PeriodicGrid(w.T, n)
    k = grid.wavenumbers

    def deriv(order):
        # differentiate the padded coefficients directly: the zero tail stays
        # an exact zero, avoiding kappa^4 amplification of round-off
        return np.fft.ifft(pad * (1j * k) ** order).real * n

    u = np.fft.ifft(pad).real * n
    r = (-w.c * deriv(1) + w.params.epsilon * deriv(3)
         + w.params.delta * (deriv(2) + deriv(4)) + u * deriv(1))
    return float(np.sqrt(grid.spacing * np.sum(r * r)))
