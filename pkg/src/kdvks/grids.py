"""Periodic grids, discrete Fourier analysis and the T-periodic Bloch transform.

Conventions
-----------
A field on [0, L) is sampled at x_k = k*L/n.  Fourier coefficients use the
"function" normalization g(x) = sum_k c_k exp(2*pi*i*k*x/L), i.e. c = fft(g)/n,
stored in numpy fft order.  The continuum transform
ghat(z) = int_0^L exp(-i*z*y) g(y) dy at the discrete frequency z = 2*pi*k/L
equals L*c_k.  Inner products <f, g> = int conj(f)*g are evaluated by the
(spectrally exact) rectangle rule h*sum(conj(f)*g).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class GridError(ValueError):
    """Raised for malformed grids or mismatched grid combinations."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the periodic interval [0, length)."""

    length: float
    num_points: int

    def __post_init__(self):
        if self.length <= 0:
            raise GridError(f"grid length must be positive, got {self.length}")
        if self.num_points < 16 or self.num_points % 2 != 0:
            raise GridError(
                f"num_points must be an even integer >= 16, got {self.num_points}")

    @property
    def spacing(self) -> float:
        return self.length / self.num_points

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.num_points) * self.spacing

    @property
    def wavenumbers(self) -> np.ndarray:
        """Physical wavenumbers 2*pi*k/length in fft order."""
        n = self.num_points
        return 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n) / self.length

    def __eq__(self, other):
        return (isinstance(other, PeriodicGrid)
                and self.num_points == other.num_points
                and np.isclose(self.length, other.length, rtol=1e-13, atol=0.0))

    def __hash__(self):
        return hash((round(self.length, 12), self.num_points))


@dataclass(frozen=True)
class RealField:
    """Real-valued samples of a periodic function on its grid."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.num_points,):
            raise GridError(
                f"values shape {vals.shape} does not match grid "
                f"({self.grid.num_points} points)")
        object.__setattr__(self, "values", vals)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.spacing)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients (function normalization, fft order) on a grid."""

    grid: PeriodicGrid
    coefficients: np.ndarray

    def __post_init__(self):
        coefs = np.asarray(self.coefficients, dtype=complex)
        if coefs.shape != (self.grid.num_points,):
            raise GridError("coefficient count does not match grid")
        object.__setattr__(self, "coefficients", coefs)


def to_spectral(f: RealField) -> SpectralField:
    return SpectralField(f.grid, np.fft.fft(f.values) / f.grid.num_points)


def to_real(s: SpectralField, tol: float = 1e-10) -> RealField:
    vals = np.fft.ifft(s.coefficients) * s.grid.num_points
    imax = float(np.max(np.abs(vals.imag)))
    scale = max(1.0, float(np.max(np.abs(vals.real))))
    if imax > tol * scale:
        raise GridError(f"inverse transform is not real (imag part {imax:.3e})")
    return RealField(s.grid, vals.real)


def differentiate(f: RealField, order: int = 1) -> RealField:
    """Differentiate the trigonometric interpolant of f."""
    if not 1 <= order <= 6:
        raise GridError(f"differentiation order must be in 1..6, got {order}")
    c = np.fft.fft(f.values)
    ik = 1j * f.grid.wavenumbers
    mult = ik ** order
    if order % 2 == 1:
        # the Nyquist mode has no well-defined odd derivative
        mult[f.grid.num_points // 2] = 0.0
    return RealField(f.grid, np.fft.ifft(c * mult).real)


def derivative_values(values: np.ndarray, grid: PeriodicGrid, order: int) -> np.ndarray:
    """Spectral derivative for possibly complex sample arrays."""
    c = np.fft.fft(values)
    mult = (1j * grid.wavenumbers) ** order
    if order % 2 == 1:
        mult[grid.num_points // 2] = 0.0
    out = np.fft.ifft(c * mult)
    return out.real if np.isrealobj(values) else out


def inner_product(f, g, grid: PeriodicGrid | None = None) -> complex:
    """<f, g> = int_0^L conj(f) g dx by the rectangle rule."""
    fv = f.values if isinstance(f, RealField) else np.asarray(f)
    gv = g.values if isinstance(g, RealField) else np.asarray(g)
    if isinstance(f, RealField):
        grid = f.grid
    if grid is None:
        raise GridError("grid required for bare-array inner product")
    if fv.shape != gv.shape:
        raise GridError("inner product requires fields on the same grid")
    return complex(np.sum(np.conj(fv) * gv) * grid.spacing)


def norm_l2(f, grid: PeriodicGrid | None = None) -> float:
    return float(np.sqrt(inner_product(f, f, grid).real))


def norm_l1(values: np.ndarray, grid: PeriodicGrid) -> float:
    return float(np.sum(np.abs(values)) * grid.spacing)


def norm_sobolev(values: np.ndarray, grid: PeriodicGrid, order: int) -> float:
    """H^s norm: sqrt(sum over derivatives 0..s of the squared L^2 norms)."""
    total = 0.0
    c = np.fft.fft(values) / grid.num_points
    k = grid.wavenumbers
    for s in range(order + 1):
        total += grid.length * float(np.sum(np.abs(c * (1j * k) ** s) ** 2))
    return float(np.sqrt(total))


@dataclass(frozen=True)
class SubharmonicLattice:
    """The N Bloch frequencies xi in [-pi/T, pi/T) with exp(i*xi*N*T) = 1."""

    N: int
    T: float

    def __post_init__(self):
        if self.N < 1:
            raise GridError(f"N must be a positive integer, got {self.N}")
        if self.T <= 0:
            raise GridError(f"T must be positive, got {self.T}")

    @property
    def indices(self) -> np.ndarray:
        """Integer indices a with xi_a = 2*pi*a/(N*T), a in [-N/2, N/2)."""
        return np.arange(-(self.N // 2), self.N - self.N // 2)

    @property
    def frequencies(self) -> np.ndarray:
        return 2.0 * np.pi * self.indices / (self.N * self.T)


@dataclass(frozen=True)
class BlochDecomposition:
    """Map xi in Omega_N -> T-periodic complex field (samples on the T-subgrid).

    samples[a] holds B_T(g)(xi_a, .) for lattice index a, as complex values on
    a T-grid with num_points/N points.
    """

    lattice: SubharmonicLattice
    subgrid: PeriodicGrid
    samples: dict = field(default_factory=dict)

    def sample(self, a: int) -> np.ndarray:
        return self.samples[int(a)]


def bloch_transform(g: RealField, lattice: SubharmonicLattice) -> BlochDecomposition:
    """T-periodic Bloch transform of an NT-periodic field.

    B_T(g)(xi, x) = sum_l exp(2*pi*i*l*x/T) ghat(xi + 2*pi*l/T), with ghat the
    length-NT torus transform.  Discretely this is a regrouping of the fft bins
    of g by residue class mod N, scaled by NT.
    """
    N, T = lattice.N, lattice.T
    n = g.grid.num_points
    if not np.isclose(g.grid.length, N * T, rtol=1e-12, atol=0.0):
        raise GridError(
            f"grid length {g.grid.length} does not equal N*T = {N * T}")
    if n % N != 0:
        raise GridError(f"num_points {n} not divisible by N = {N}")
    m = n // N
    c = np.fft.fft(g.values) / n
    subgrid = PeriodicGrid(T, m)
    ell = np.fft.fftfreq(m, d=1.0 / m).astype(int)
    samples = {}
    for a in lattice.indices:
        idx = (int(a) + N * ell) % n
        b = (N * T) * c[idx]
        samples[int(a)] = np.fft.ifft(b) * m
    return BlochDecomposition(lattice, subgrid, samples)


def inverse_bloch(d: BlochDecomposition) -> RealField:
    """g(x) = (1/NT) sum_{xi in Omega_N} exp(i*xi*x) B_T(g)(xi, x)."""
    N, T = d.lattice.N, d.lattice.T
    m = d.subgrid.num_points
    n = N * m
    ell = np.fft.fftfreq(m, d=1.0 / m).astype(int)
    c = np.zeros(n, dtype=complex)
    for a in d.lattice.indices:
        sample = d.samples[int(a)]
        if sample.shape != (m,):
            raise GridError("inconsistent sample grids in decomposition")
        b = np.fft.fft(sample) / m
        idx = (int(a) + N * ell) % n
        c[idx] = b / (N * T)
    vals = np.fft.ifft(c) * n
    grid = PeriodicGrid(N * T, n)
    imax = float(np.max(np.abs(vals.imag)))
    if imax > 1e-9 * max(1.0, float(np.max(np.abs(vals.real)))):
        raise GridError(f"reconstruction is not real (imag part {imax:.3e})")
    return RealField(grid, vals.real)


def check_parseval(f: RealField, g: RealField, lattice: SubharmonicLattice) -> dict:
    """Verify <f,g>_{L^2_N} = 1/(N T^2) sum_xi <B f, B g>_{L^2(0,T)}."""
    if f.grid != g.grid:
        raise GridError("Parseval check requires fields on the same grid")
    N, T = lattice.N, lattice.T
    lhs = inner_product(f, g)
    bf = bloch_transform(f, lattice)
    bg = bloch_transform(g, lattice)
    h = bf.subgrid.spacing
    rhs = sum(
        np.sum(np.conj(bf.samples[a]) * bg.samples[a]) * h
        for a in map(int, lattice.indices)
    ) / (N * T * T)
    scale = max(abs(lhs), abs(rhs), 1e-300)
    return {"lhs": lhs, "rhs": complex(rhs),
            "rel_err": abs(lhs - rhs) / scale}


# ---------------------------------------------------------------------------
# persistence: binary field dump and CSV export

def write_field(path, f: RealField) -> None:
    """JSON header line {length, num_points} followed by little-endian doubles."""
    header = json.dumps({"length": f.grid.length,
                         "num_points": f.grid.num_points})
    with open(path, "wb") as fh:
        fh.write(header.encode() + b"\n")
        fh.write(f.values.astype("<f8").tobytes())


def read_field(path) -> RealField:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    grid = PeriodicGrid(header["length"], header["num_points"])
    return RealField(grid, data.copy())


def write_field_csv(path, f: RealField) -> None:
    with open(path, "w") as fh:
        fh.write("x,value\n")
        for x, v in zip(f.grid.points, f.values):
            fh.write(f"{x:.17g},{v:.17g}\n")
