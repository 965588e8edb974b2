"""Fourier-space fields on the periodic torus and the operators acting on them.

Velocity fields are stored as full complex FFT spectra (numpy ``fftn``
layout) with Hermitian symmetry, so physical-space values are real.  All
differential operators are exact on retained modes; quadratic terms are
dealiased with the sharp 2/3-rule mask.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateVorticity, ShapeMismatch, UnsupportedNorm

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid:
    """Uniform collocation grid on the d-torus, d in {2, 3}.

    n is the number of modes (and points) per axis; the dealias mask
    zeroes every mode with any |k_i| above dealias_fraction * n / 2.
    """

    dim: int
    n: int
    length: float = TWO_PI
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"n must be even and >= 8, got {self.n}")
        if not (0.0 < self.dealias_fraction <= 1.0):
            raise ValueError("dealias_fraction must lie in (0, 1]")
        if self.length <= 0:
            raise ValueError("length must be positive")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def dx(self) -> float:
        return self.length / self.n

    @cached_property
    def k_index(self) -> np.ndarray:
        """Integer wavenumbers, shape (dim, n, ..., n)."""
        k1 = np.fft.fftfreq(self.n, d=1.0 / self.n)
        axes = np.meshgrid(*([k1] * self.dim), indexing="ij")
        return np.array(axes)

    @cached_property
    def k(self) -> np.ndarray:
        """Physical wavenumbers 2*pi*k_index/length."""
        return (TWO_PI / self.length) * self.k_index

    @cached_property
    def k_sq(self) -> np.ndarray:
        return np.sum(self.k ** 2, axis=0)

    @cached_property
    def k_sq_safe(self) -> np.ndarray:
        ks = self.k_sq.copy()
        ks[(0,) * self.dim] = 1.0
        return ks

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        cutoff = self.dealias_fraction * self.n / 2.0
        return np.all(np.abs(self.k_index) <= cutoff + 1e-12, axis=0)

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Physical coordinates, shape (dim, n, ..., n)."""
        x1 = np.arange(self.n) * self.dx
        axes = np.meshgrid(*([x1] * self.dim), indexing="ij")
        return np.array(axes)

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.dim


@dataclass
class ScalarField:
    """Scalar spectral field (e.g. 2D vorticity)."""

    grid: Grid
    coeffs: np.ndarray

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray) -> "ScalarField":
        return cls(grid, np.fft.fftn(np.asarray(values, dtype=float)))

    def to_physical(self) -> np.ndarray:
        return np.fft.ifftn(self.coeffs).real

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.coeffs.copy())

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        return ScalarField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.coeffs * c)

    __rmul__ = __mul__


@dataclass
class SpectralField:
    """Vector spectral field; coeffs shape (dim, n, ..., n)."""

    grid: Grid
    coeffs: np.ndarray
    divergence_free: bool = False

    @classmethod
    def from_physical(cls, grid: Grid, values: np.ndarray,
                      divergence_free: bool = False) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.dim,) + grid.shape:
            raise ShapeMismatch(
                f"expected shape {(grid.dim,) + grid.shape}, got {values.shape}")
        coeffs = np.stack([np.fft.fftn(values[i]) for i in range(grid.dim)])
        return cls(grid, coeffs, divergence_free)

    @classmethod
    def zero(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros((grid.dim,) + grid.shape, dtype=complex),
                   divergence_free=True)

    def to_physical(self) -> np.ndarray:
        return np.stack([np.fft.ifftn(self.coeffs[i]).real
                         for i in range(self.grid.dim)])

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.divergence_free)

    def max_divergence(self) -> float:
        """max_k |k . u_hat(k)|, the divergence-free defect in Fourier space."""
        div = np.sum(self.grid.k * self.coeffs, axis=0)
        return float(np.max(np.abs(div)))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeffs + other.coeffs,
                             self.divergence_free and other.divergence_free)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return SpectralField(self.grid, self.coeffs - other.coeffs,
                             self.divergence_free and other.divergence_free)

    def __mul__(self, c: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * c, self.divergence_free)

    __rmul__ = __mul__


@dataclass(frozen=True)
class NormRequest:
    """Sobolev norm selector: derivative order m, integrability p (or inf)."""

    m: int
    p: float

    def __post_init__(self):
        if self.m < 0:
            raise UnsupportedNorm(f"m must be >= 0, got {self.m}")
        if np.isinf(self.p):
            if self.m > 1:
                raise UnsupportedNorm("p = inf supported only for m in {0, 1}")
        elif self.p < 2:
            raise UnsupportedNorm(f"p must be >= 2 or inf, got {self.p}")


@dataclass(frozen=True)
class BkmBound:
    """Result of the logarithmic velocity-gradient bound."""

    value: float
    degenerate_vorticity: bool = False


# ---------------------------------------------------------------------------
# Core operators


def leray_project(f: SpectralField) -> SpectralField:
    """Project onto divergence-free fields: u_hat -= k (k.u_hat)/|k|^2."""
    g = f.grid
    kdotu = np.sum(g.k * f.coeffs, axis=0)
    proj = f.coeffs - g.k * (kdotu / g.k_sq_safe)[None, ...]
    return SpectralField(g, proj, divergence_free=True)


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * f.grid.dealias_mask[None, ...],
                         f.divergence_free)


def dealias_scalar(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, f.coeffs * f.grid.dealias_mask)


def gradient(component: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral gradient of one component; returns (dim, ...) physical values."""
    return np.stack([np.fft.ifftn(1j * grid.k[j] * component).real
                     for j in range(grid.dim)])


def nonlinear_term(u: SpectralField) -> SpectralField:
    """P(u . grad u), pseudo-spectral with 2/3-rule dealiasing."""
    g = u.grid
    ud = u.coeffs * g.dealias_mask[None, ...]
    u_phys = np.stack([np.fft.ifftn(ud[i]).real for i in range(g.dim)])
    adv = np.empty_like(u_phys)
    for i in range(g.dim):
        grad_i = gradient(ud[i], g)
        adv[i] = np.sum(u_phys * grad_i, axis=0)
    adv_hat = np.stack([np.fft.fftn(adv[i]) for i in range(g.dim)])
    adv_hat *= g.dealias_mask[None, ...]
    return leray_project(SpectralField(g, adv_hat))


def curl(u: SpectralField) -> ScalarField | SpectralField:
    """2D: scalar d1 u2 - d2 u1.  3D: vector curl, divergence-free."""
    g = u.grid
    k = g.k
    if g.dim == 2:
        w = 1j * k[0] * u.coeffs[1] - 1j * k[1] * u.coeffs[0]
        return ScalarField(g, w)
    w = np.stack([
        1j * (k[1] * u.coeffs[2] - k[2] * u.coeffs[1]),
        1j * (k[2] * u.coeffs[0] - k[0] * u.coeffs[2]),
        1j * (k[0] * u.coeffs[1] - k[1] * u.coeffs[0]),
    ])
    return SpectralField(g, w, divergence_free=True)


def biot_savart(w: ScalarField | SpectralField) -> SpectralField:
    """Recover divergence-free velocity from vorticity (zero-mean w)."""
    g = w.grid
    if isinstance(w, ScalarField):
        if g.dim != 2:
            raise ShapeMismatch("scalar vorticity is 2D only")
        psi = w.coeffs / g.k_sq_safe
        u = np.stack([1j * g.k[1] * psi, -1j * g.k[0] * psi])
        u[:, 0, 0] = 0.0
        return SpectralField(g, u, divergence_free=True)
    # 3D: u_hat = i k x w_hat / |k|^2
    k = g.k
    c = w.coeffs
    u = np.stack([
        1j * (k[1] * c[2] - k[2] * c[1]),
        1j * (k[2] * c[0] - k[0] * c[2]),
        1j * (k[0] * c[1] - k[1] * c[0]),
    ]) / g.k_sq_safe
    u[(slice(None),) + (0,) * g.dim] = 0.0
    return SpectralField(g, u, divergence_free=True)


# ---------------------------------------------------------------------------
# Norms


def _component_list(f: ScalarField | SpectralField) -> list[np.ndarray]:
    if isinstance(f, ScalarField):
        return [f.coeffs]
    return [f.coeffs[i] for i in range(f.grid.dim)]


def _lp_of_magnitude(mag: np.ndarray, p: float, grid: Grid) -> float:
    if np.isinf(p):
        return float(np.max(mag))
    return float((np.sum(mag ** p) * grid.cell_volume) ** (1.0 / p))


def _derivative_multiindices(dim: int, order: int):
    """All multi-indices of exactly the given total order, as axis tuples."""
    return itertools.combinations_with_replacement(range(dim), order)


def _alpha_magnitude(comps: list[np.ndarray], axes: tuple[int, ...],
                     grid: Grid) -> np.ndarray:
    """Pointwise Euclidean magnitude of d^alpha applied to every component."""
    factor = np.ones(grid.shape, dtype=complex)
    for ax in axes:
        factor = factor * (1j * grid.k[ax])
    sq = np.zeros(grid.shape)
    for c in comps:
        sq += np.abs(np.fft.ifftn(factor * c).real) ** 2
    return np.sqrt(sq)


def lp_norm(f: ScalarField | SpectralField, p: float) -> float:
    """L^p norm of the pointwise magnitude, by collocation quadrature."""
    comps = _component_list(f)
    mag = _alpha_magnitude(comps, (), f.grid)
    return _lp_of_magnitude(mag, p, f.grid)


def l2_norm(f: ScalarField | SpectralField) -> float:
    """Spectral (Parseval) L^2 norm."""
    g = f.grid
    comps = _component_list(f)
    total = sum(float(np.sum(np.abs(c) ** 2)) for c in comps)
    return float(np.sqrt(total * g.length ** g.dim / g.n ** (2 * g.dim)))


def l2_inner(u: SpectralField, v: SpectralField) -> float:
    g = u.grid
    s = float(np.sum(np.conj(u.coeffs) * v.coeffs).real)
    return s * g.length ** g.dim / g.n ** (2 * g.dim)


def grad_sup_norm(f: ScalarField | SpectralField) -> float:
    """max over the grid of the Frobenius magnitude of the gradient."""
    g = f.grid
    comps = _component_list(f)
    sq = np.zeros(g.shape)
    for c in comps:
        for j in range(g.dim):
            sq += np.fft.ifftn(1j * g.k[j] * c).real ** 2
    return float(np.max(np.sqrt(sq)))


def sobolev_norm(f: ScalarField | SpectralField, req: NormRequest) -> float:
    """W^{m,p} norm: (sum_{|alpha|<=m} ||d^alpha f||_p^p)^{1/p}.

    For p = inf the W^{1,inf} norm is max|f| + max|grad f| on the
    collocation grid (m = 0 drops the gradient term).
    """
    g = f.grid
    comps = _component_list(f)
    if np.isinf(req.p):
        val = _lp_of_magnitude(_alpha_magnitude(comps, (), g), np.inf, g)
        if req.m >= 1:
            val += grad_sup_norm(f)
        return val
    total = 0.0
    for order in range(req.m + 1):
        for axes in _derivative_multiindices(g.dim, order):
            mag = _alpha_magnitude(comps, axes, g)
            total += np.sum(mag ** req.p) * g.cell_volume
    return float(total ** (1.0 / req.p))


def w1inf_norm(f: ScalarField | SpectralField) -> float:
    return sobolev_norm(f, NormRequest(1, np.inf))


# ---------------------------------------------------------------------------
# Mollifier, cut-off, BKM monitor


def mollify(u: SpectralField | ScalarField, eps: float):
    """Heat-kernel smoothing exp(-eps |k|^2), then Leray projection."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    g = u.grid
    mult = np.exp(-eps * g.k_sq)
    if isinstance(u, ScalarField):
        return ScalarField(g, u.coeffs * mult)
    return leray_project(SpectralField(g, u.coeffs * mult[None, ...]))


def cutoff_theta(x: float, R: float) -> float:
    """Smooth non-increasing cut-off: 1 on (-inf, R], 0 on [2R, inf)."""
    if R <= 0:
        raise ValueError("R must be positive")

    def q(t: float) -> float:
        return float(np.exp(-1.0 / t)) if t > 0 else 0.0

    a = q((2.0 * R - x) / R)
    b = q((x - R) / R)
    if a == 0.0:
        return 0.0
    return a / (a + b)


def bkm_upper_bound(u: SpectralField, m: int, p: float, C2: float) -> BkmBound:
    """Logarithmic bound C2 ||u||_2 + C2 ||w||_inf (1 + log+ of the norm ratio)."""
    w = curl(u)
    w_inf = lp_norm(w, np.inf)
    u_l2 = l2_norm(u)
    if w_inf < 1e-14:
        return BkmBound(C2 * u_l2, degenerate_vorticity=True)
    u_mp = sobolev_norm(u, NormRequest(m, p))
    log_plus = max(0.0, np.log(u_mp / w_inf))
    return BkmBound(C2 * u_l2 + C2 * w_inf * (1.0 + log_plus))


# ---------------------------------------------------------------------------
# Field constructors


def taylor_green(grid: Grid, amplitude: float = 1.0) -> SpectralField:
    """2D: (sin x1 cos x2, -cos x1 sin x2).  3D: the classical TG vortex."""
    x = grid.coordinates
    if grid.dim == 2:
        vals = np.stack([np.sin(x[0]) * np.cos(x[1]),
                         -np.cos(x[0]) * np.sin(x[1])]) * amplitude
    else:
        vals = np.stack([
            np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2]),
            -np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2]),
            np.zeros(grid.shape),
        ]) * amplitude
    return SpectralField.from_physical(grid, vals, divergence_free=True)


def shear_field(grid: Grid, amplitude: float = 1.0) -> SpectralField:
    """(sin x2, 0[, 0]): a single-mode shear with vanishing self-advection."""
    x = grid.coordinates
    vals = np.zeros((grid.dim,) + grid.shape)
    vals[0] = amplitude * np.sin(x[1])
    return SpectralField.from_physical(grid, vals, divergence_free=True)


def abc_field(grid: Grid, a: float = 1.0, b: float = 1.0,
              c: float = 1.0) -> SpectralField:
    """3D Arnold-Beltrami-Childress field; an eigenfunction of curl."""
    if grid.dim != 3:
        raise ShapeMismatch("ABC field is 3D only")
    x = grid.coordinates
    vals = np.stack([
        a * np.sin(x[2]) + c * np.cos(x[1]),
        b * np.sin(x[0]) + a * np.cos(x[2]),
        c * np.sin(x[1]) + b * np.cos(x[0]),
    ])
    return SpectralField.from_physical(grid, vals, divergence_free=True)


def random_divergence_free(grid: Grid, rng: np.random.Generator,
                           decay: float = 2.0, kmax: int | None = None,
                           amplitude: float = 1.0) -> SpectralField:
    """Random smooth divergence-free field with |u_hat(k)| ~ |k|^(-decay)."""
    if kmax is None:
        kmax = max(2, int(grid.dealias_fraction * grid.n / 2) - 1)
    shape = (grid.dim,) + grid.shape
    noise = rng.standard_normal(shape)
    coeffs = np.stack([np.fft.fftn(noise[i]) for i in range(grid.dim)])
    kmag = np.sqrt(np.sum(grid.k_index.astype(float) ** 2, axis=0))
    envelope = np.where((kmag > 0) & (kmag <= kmax), 1.0 / (1.0 + kmag) ** decay, 0.0)
    coeffs *= envelope[None, ...]
    f = leray_project(SpectralField(grid, coeffs))
    # re-symmetrize through physical space so the field is exactly real
    f = SpectralField.from_physical(grid, f.to_physical(), divergence_free=True)
    f = leray_project(f)
    nrm = l2_norm(f)
    if nrm > 0:
        f = f * (amplitude / nrm)
    return f


FIELD_REGISTRY = {
    "taylor_green": taylor_green,
    "shear": shear_field,
    "abc": abc_field,
}


def make_initial_field(grid: Grid, name: str, amplitude: float = 1.0,
                       seed: int = 0) -> SpectralField:
    """Build a named initial condition; 'random' uses the given seed."""
    if name == "random":
        rng = np.random.default_rng(seed)
        return random_divergence_free(grid, rng, amplitude=amplitude)
    if name not in FIELD_REGISTRY:
        raise KeyError(f"unknown initial field '{name}'")
    return FIELD_REGISTRY[name](grid, amplitude)


# ---------------------------------------------------------------------------
# Snapshot persistence


SNAPSHOT_VERSION = 1


def save_field(f: SpectralField, path: str) -> None:
    """Binary snapshot (npz); round-trips bit-exactly."""
    np.savez(path, version=SNAPSHOT_VERSION, dim=f.grid.dim, n=f.grid.n,
             length=f.grid.length, dealias_fraction=f.grid.dealias_fraction,
             coeffs=f.coeffs, divergence_free=f.divergence_free)


def load_field(path: str) -> SpectralField:
    data = np.load(path)
    grid = Grid(int(data["dim"]), int(data["n"]), float(data["length"]),
                float(data["dealias_fraction"]))
    return SpectralField(grid, data["coeffs"], bool(data["divergence_free"]))


def field_to_json(f: SpectralField) -> str:
    """JSON snapshot: one (k-vector, complex d-vector) record per mode."""
    g = f.grid
    modes = []
    it = np.ndindex(*g.shape)
    for idx in it:
        vec = f.coeffs[(slice(None),) + idx]
        if np.all(vec == 0):
            continue
        kvec = [int(g.k_index[(d,) + idx]) for d in range(g.dim)]
        modes.append([kvec, [[c.real, c.imag] for c in vec]])
    return json.dumps({
        "version": SNAPSHOT_VERSION, "dim": g.dim, "n": g.n,
        "length": g.length, "dealias_fraction": g.dealias_fraction,
        "divergence_free": f.divergence_free, "modes": modes,
    })


def field_from_json(text: str) -> SpectralField:
    rec = json.loads(text)
    grid = Grid(rec["dim"], rec["n"], rec["length"], rec["dealias_fraction"])
    coeffs = np.zeros((grid.dim,) + grid.shape, dtype=complex)
    index_of = {int(v): i for i, v in enumerate(
        np.fft.fftfreq(grid.n, d=1.0 / grid.n))}
    for kvec, comps in rec["modes"]:
        idx = tuple(index_of[k] for k in kvec)
        for d in range(grid.dim):
            coeffs[(d,) + idx] = complex(comps[d][0], comps[d][1])
    return SpectralField(grid, coeffs, rec["divergence_free"])
