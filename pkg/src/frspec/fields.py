"""Four-component spectral and physical fields on the torus.

A SpectralField4 stores the Fourier coefficients V_hat(n) in C^4 for every
lattice mode n in [-N, N]^3, in an (L, L, L, 4) array with L = 2N + 1 and
axis index i = n + N.  The first three components are a velocity, the
fourth is the buoyancy/density perturbation.  All fields have zero global
average (the n = 0 coefficient is pinned to zero) and represent real
fields, i.e. V_hat(-n) = conj(V_hat(n)).

Quadratic products are evaluated pseudo-spectrally on a padded collocation
grid (2/3-rule: at least 3N + 1 points per axis) so that the retained
modes of a product of two fields are alias-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len

from .geometry import TorusGeometry

__all__ = [
    "SpectralField4",
    "PhysicalField4",
    "zero_field",
    "single_mode_field",
    "to_physical",
    "to_spectral",
    "leray_project",
    "convolve_quadratic",
    "transport",
    "divergence_max",
    "l2_norm",
    "sobolev_norm",
    "inner_l2",
]


@dataclass
class SpectralField4:
    geometry: TorusGeometry
    coeffs: np.ndarray  # (L, L, L, 4) complex128

    def __post_init__(self):
        L = self.geometry.L
        if self.coeffs.shape != (L, L, L, 4):
            raise ValueError(
                f"coefficient array must have shape {(L, L, L, 4)}, got {self.coeffs.shape}"
            )
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    def copy(self) -> "SpectralField4":
        return SpectralField4(self.geometry, self.coeffs.copy())

    # -- algebra -------------------------------------------------------------

    def __add__(self, other):
        return SpectralField4(self.geometry, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField4(self.geometry, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return SpectralField4(self.geometry, self.coeffs * s)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField4(self.geometry, -self.coeffs)

    # -- structure -----------------------------------------------------------

    def pin_zero_mode(self) -> "SpectralField4":
        N = self.geometry.N
        self.coeffs[N, N, N, :] = 0.0
        return self

    def zero_mean(self, tol: float = 1e-13) -> bool:
        N = self.geometry.N
        return bool(np.max(np.abs(self.coeffs[N, N, N, :])) <= tol)

    def conj_reflect(self) -> np.ndarray:
        """conj(V_hat(-n)), same layout; equals coeffs for a real field."""
        return np.conj(self.coeffs[::-1, ::-1, ::-1, :])

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs - self.conj_reflect())))

    def make_hermitian(self) -> "SpectralField4":
        self.coeffs = 0.5 * (self.coeffs + self.conj_reflect())
        return self


@dataclass
class PhysicalField4:
    geometry: TorusGeometry
    values: np.ndarray  # (M, M, M, 4) real
    grid_points: int


def zero_field(geometry: TorusGeometry) -> SpectralField4:
    L = geometry.L
    return SpectralField4(geometry, np.zeros((L, L, L, 4), dtype=np.complex128))


def single_mode_field(geometry: TorusGeometry, n, vec, hermitian: bool = True) -> SpectralField4:
    """Field with coefficient `vec` at mode n (plus the conjugate at -n if asked)."""
    f = zero_field(geometry)
    i = tuple(np.asarray(n) + geometry.N)
    f.coeffs[i] = np.asarray(vec, dtype=np.complex128)
    if hermitian and any(c != 0 for c in n):
        j = tuple(-np.asarray(n) + geometry.N)
        f.coeffs[j] += np.conj(np.asarray(vec, dtype=np.complex128))
    return f


# -- transforms ---------------------------------------------------------------


def _pad_size(N: int) -> int:
    return next_fast_len(3 * N + 1)


def _embed(geometry: TorusGeometry, coeffs: np.ndarray, M: int) -> np.ndarray:
    """Place lattice coefficients into an M^3 FFT array (wrap-around order)."""
    L, N = geometry.L, geometry.N
    out = np.zeros((M, M, M) + coeffs.shape[3:], dtype=np.complex128)
    idx = (np.arange(L) - N) % M
    out[np.ix_(idx, idx, idx)] = coeffs
    return out


def _extract(geometry: TorusGeometry, arr: np.ndarray) -> np.ndarray:
    L, N = geometry.L, geometry.N
    M = arr.shape[0]
    idx = (np.arange(L) - N) % M
    return arr[np.ix_(idx, idx, idx)]


def to_physical(field: SpectralField4, grid_points: int | None = None) -> PhysicalField4:
    """Sample the field on a uniform collocation grid (padded for dealiasing)."""
    g = field.geometry
    M = grid_points or _pad_size(g.N)
    if M < 2 * g.N + 1:
        raise ValueError(f"grid of {M} points cannot hold modes up to N={g.N}")
    big = _embed(g, field.coeffs, M)
    vals = np.fft.ifftn(big, axes=(0, 1, 2)) * (M**3)
    return PhysicalField4(g, np.ascontiguousarray(vals.real), M)


def to_spectral(phys: PhysicalField4) -> SpectralField4:
    """Inverse of to_physical on the retained modes."""
    g = phys.geometry
    M = phys.grid_points
    hat = np.fft.fftn(phys.values, axes=(0, 1, 2)) / (M**3)
    return SpectralField4(g, _extract(g, hat))


# -- differential / projection operators --------------------------------------


def leray_project(field: SpectralField4, check_mean: bool = True) -> SpectralField4:
    """Per-mode projection of the first three components onto div-free vectors.

    The fourth component is untouched.  Idempotent and self-adjoint per mode.
    """
    g = field.geometry
    if check_mean and not field.zero_mean(tol=1e-12):
        raise ValueError("leray_project requires a zero-mean field")
    k1, k2, k3 = g.check_grid
    ksq = g.check_sq.copy()
    ksq[g.mask_zero] = 1.0  # avoid 0/0 at the pinned zero mode
    v = field.coeffs
    kdotv = k1 * v[..., 0] + k2 * v[..., 1] + k3 * v[..., 2]
    out = v.copy()
    out[..., 0] -= k1 * kdotv / ksq
    out[..., 1] -= k2 * kdotv / ksq
    out[..., 2] -= k3 * kdotv / ksq
    res = SpectralField4(g, out)
    res.pin_zero_mode()
    return res


def divergence_max(field: SpectralField4) -> float:
    """max_n |sum_i ncheck_i v_hat^i(n)|."""
    g = field.geometry
    k1, k2, k3 = g.check_grid
    v = field.coeffs
    div = k1 * v[..., 0] + k2 * v[..., 1] + k3 * v[..., 2]
    return float(np.max(np.abs(div)))


def _gradient_spectral(field: SpectralField4, horizontal_only: bool = False) -> np.ndarray:
    """i * ncheck_j * V_hat, shape (L, L, L, 4, 3)."""
    g = field.geometry
    k1, k2, k3 = g.check_grid
    v = field.coeffs
    out = np.empty(v.shape + (3,), dtype=np.complex128)
    out[..., 0] = 1j * k1[..., None] * v
    out[..., 1] = 1j * k2[..., None] * v
    if horizontal_only:
        out[..., 2] = 0.0
    else:
        out[..., 2] = 1j * k3[..., None] * v
    return out


def convolve_quadratic(
    A: SpectralField4,
    B: SpectralField4,
    stencil: str = "full",
) -> SpectralField4:
    """Dealiased Fourier coefficients of the transport a . grad B.

    `a` is the velocity (first three components) of A; all four components
    of B are advected.  stencil = "full" uses the 3D gradient, "horizontal"
    only grad_h (used by the 2.5D limit system).
    """
    if A.geometry is not B.geometry and A.geometry != B.geometry:
        raise ValueError("fields live on different geometries")
    g = A.geometry
    M = _pad_size(g.N)

    grad = _gradient_spectral(B, horizontal_only=(stencil == "horizontal"))
    big_a = np.fft.ifftn(_embed(g, A.coeffs[..., :3], M), axes=(0, 1, 2)) * (M**3)
    big_g = np.fft.ifftn(
        _embed(g, grad.reshape(g.L, g.L, g.L, 12), M), axes=(0, 1, 2)
    ) * (M**3)
    big_g = big_g.reshape(M, M, M, 4, 3)
    prod = np.einsum("xyzj,xyzcj->xyzc", big_a, big_g)
    hat = np.fft.fftn(prod, axes=(0, 1, 2)) / (M**3)
    out = SpectralField4(g, _extract(g, hat))
    out.pin_zero_mode()
    return out


def transport(A: SpectralField4, B: SpectralField4, stencil: str = "full") -> SpectralField4:
    """Symmetrized projected transport 1/2 P [a.grad B + b.grad A]."""
    raw = convolve_quadratic(A, B, stencil) + convolve_quadratic(B, A, stencil)
    return leray_project(0.5 * raw, check_mean=False)


# -- norms --------------------------------------------------------------------


def l2_norm(field: SpectralField4) -> float:
    """Coefficient l2 norm (sum_n |V_hat(n)|^2)^(1/2)."""
    return float(np.sqrt(np.sum(np.abs(field.coeffs) ** 2)))


def sobolev_norm(s: float, field: SpectralField4) -> float:
    """Non-homogeneous Sobolev norm (sum_n (1+|ncheck|^2)^s |V_hat(n)|^2)^(1/2)."""
    w = (1.0 + field.geometry.check_sq) ** s
    return float(np.sqrt(np.sum(w[..., None] * np.abs(field.coeffs) ** 2)))


def inner_l2(A: SpectralField4, B: SpectralField4) -> complex:
    """Coefficient inner product sum_n <A_hat(n), B_hat(n)>_{C^4}."""
    return complex(np.sum(A.coeffs * np.conj(B.coeffs)))
