"""Per-mode spectral analysis of the projected penalization operator.

For each mode n with n_h != 0 the operator P A (Leray projection composed
with the buoyancy coupling) has, on the divergence-free subspace, the
orthonormal eigenbasis

    e_0(n) = (-nc_2, nc_1, 0, 0) / |nc_h|
    e_pm(n) = (1/sqrt2) (-+ i nc_1 nc_3 / (|nc_h| |nc|),
                         -+ i nc_2 nc_3 / (|nc_h| |nc|),
                         +- i |nc_h| / |nc|,
                         1)

with PA e_0 = 0 and PA e_pm = -+ i omega(n) e_pm, omega(n) = |nc_h|/|nc|.
The sign of the imaginary entries is pinned by requiring that the
filtering group L(tau) = exp(-tau PA) multiplies the e_pm component by
exp(+- i tau omega), i.e. by exp(i tau omega^alpha); this is the unique
convention under which the semigroup, the mode solutions and the
generator check are mutually consistent.

On modes with n_h = 0 the kernel is spanned by f_1 = (1,0,0,0),
f_2 = (0,1,0,0), f_3 = (0,0,0,1); a divergence-free field has no third
component there, and L(tau) is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import SpectralField4, divergence_max, zero_field
from .geometry import TorusGeometry

__all__ = [
    "EigenBasis",
    "EigenTriple",
    "KernelDecomposition",
    "eigenbasis",
    "pa_symbol",
    "apply_pa",
    "apply_filter",
    "decompose",
    "recompose",
    "underline_part",
    "coefficients",
    "field_from_coefficients",
]

F_BASIS = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]
)


@dataclass(frozen=True)
class EigenTriple:
    """Eigen data of a single mode."""

    n: tuple[int, int, int]
    omega: float
    e0: np.ndarray | None  # None when n_h = 0
    ep: np.ndarray | None
    em: np.ndarray | None
    f: np.ndarray | None  # (3, 4) rows f_1, f_2, f_3 when n_h = 0


class EigenBasis:
    """Vectorized eigen data for every mode of a geometry (precomputed once)."""

    _instances: dict[TorusGeometry, "EigenBasis"] = {}

    def __init__(self, geometry: TorusGeometry):
        self.geometry = geometry
        g = geometry
        k1, k2, k3 = g.check_grid
        L = g.L
        kh2 = np.broadcast_to(g.check_h_sq, (L, L, L)).copy()
        ksq = g.check_sq.copy()
        osc = ~g.mask_h_zero  # modes with n_h != 0
        self.mask_osc = osc
        self.mask_vline = g.mask_h_zero & ~g.mask_zero  # n_h = 0, n != 0

        kh = np.sqrt(kh2)
        kn = np.sqrt(ksq)
        safe_kh = np.where(osc, kh, 1.0)
        safe_kn = np.where(ksq > 0, kn, 1.0)

        omega = np.where(osc, kh / safe_kn, 0.0)
        self.omega = omega

        k1b = np.broadcast_to(k1, (L, L, L))
        k2b = np.broadcast_to(k2, (L, L, L))
        k3b = np.broadcast_to(k3, (L, L, L))

        e0 = np.zeros((L, L, L, 4), dtype=np.complex128)
        e0[..., 0] = np.where(osc, -k2b / safe_kh, 0.0)
        e0[..., 1] = np.where(osc, k1b / safe_kh, 0.0)
        self.e0 = e0

        a1 = np.where(osc, k1b * k3b / (safe_kh * safe_kn), 0.0)
        a2 = np.where(osc, k2b * k3b / (safe_kh * safe_kn), 0.0)
        b = np.where(osc, kh / safe_kn, 0.0)
        inv_sqrt2 = 1.0 / np.sqrt(2.0)
        ep = np.zeros((L, L, L, 4), dtype=np.complex128)
        ep[..., 0] = -1j * a1 * inv_sqrt2
        ep[..., 1] = -1j * a2 * inv_sqrt2
        ep[..., 2] = 1j * b * inv_sqrt2
        ep[..., 3] = np.where(osc, inv_sqrt2, 0.0)
        self.ep = ep
        self.em = np.conj(ep)

        # velocity-part pairings used by the limit forms
        self.evec = {0: self.e0, 1: self.ep, -1: self.em}

    @classmethod
    def of(cls, geometry: TorusGeometry) -> "EigenBasis":
        inst = cls._instances.get(geometry)
        if inst is None:
            inst = cls(geometry)
            cls._instances[geometry] = inst
        return inst


def omega_signed(t: EigenTriple, sign: int) -> float:
    """omega^sign of a mode: sign * omega(n), with omega^0 identically 0."""
    return 0.0 if sign == 0 else sign * t.omega


def freq_combo_abc(tk: EigenTriple, tm: EigenTriple, tn: EigenTriple, a: int, b: int, c: int) -> float:
    """omega^a(k) + omega^b(m) - omega^c(n)."""
    return omega_signed(tk, a) + omega_signed(tm, b) - omega_signed(tn, c)


def freq_combo_pair(tk: EigenTriple, tm: EigenTriple, a: int, b: int) -> float:
    """omega^a(k) + omega^b(m)."""
    return omega_signed(tk, a) + omega_signed(tm, b)


def freq_combo_tilde(tm: EigenTriple, tn: EigenTriple, b: int, c: int) -> float:
    """omega^b(m) - omega^c(n)."""
    return omega_signed(tm, b) - omega_signed(tn, c)


def freq_combo_same(tn: EigenTriple, a: int, b: int) -> float:
    """omega^b(n) - omega^a(n), the phase difference of the conjugated
    dissipation at one mode (zero exactly when a = b)."""
    return omega_signed(tn, b) - omega_signed(tn, a)


def eigenbasis(geometry: TorusGeometry, n) -> EigenTriple:
    """Eigen data for a single mode n != 0."""
    n = tuple(int(c) for c in n)
    if n == (0, 0, 0):
        raise ValueError("the zero mode has no eigen decomposition")
    basis = EigenBasis.of(geometry)
    i = tuple(c + geometry.N for c in n)
    if n[0] == 0 and n[1] == 0:
        return EigenTriple(n, 0.0, None, None, None, F_BASIS.copy())
    return EigenTriple(
        n,
        float(basis.omega[i]),
        basis.e0[i].copy(),
        basis.ep[i].copy(),
        basis.em[i].copy(),
        None,
    )


def pa_symbol(geometry: TorusGeometry, n) -> np.ndarray:
    """The 4x4 symbol of P A at mode n != 0."""
    n = tuple(int(c) for c in n)
    if n == (0, 0, 0):
        raise ValueError("pa_symbol is undefined at n = 0")
    kc = np.asarray(n, dtype=float) / geometry.a
    ksq = float(np.dot(kc, kc))
    m = np.zeros((4, 4))
    m[0, 3] = -kc[0] * kc[2] / ksq
    m[1, 3] = -kc[1] * kc[2] / ksq
    m[2, 3] = 1.0 - kc[2] ** 2 / ksq
    m[3, 2] = -1.0
    return m


def apply_pa(field: SpectralField4) -> SpectralField4:
    """Apply the symbol of P A to every mode (zero mode untouched)."""
    g = field.geometry
    k1, k2, k3 = g.check_grid
    ksq = g.check_sq.copy()
    ksq[g.mask_zero] = 1.0
    v = field.coeffs
    out = np.zeros_like(v)
    out[..., 0] = -(k1 * k3 / ksq) * v[..., 3]
    out[..., 1] = -(k2 * k3 / ksq) * v[..., 3]
    out[..., 2] = (1.0 - k3 * k3 / ksq) * v[..., 3]
    out[..., 3] = -v[..., 2]
    res = SpectralField4(g, out)
    res.pin_zero_mode()
    return res


# -- eigen coefficients ---------------------------------------------------------


def coefficients(field: SpectralField4) -> dict[int, np.ndarray]:
    """Eigen coefficients c_alpha(n) = <V_hat(n), e_alpha(n)> on n_h != 0 modes.

    Returned as arrays over the full lattice (zero where n_h = 0).
    Keys: 0 -> e_0, +1 -> e_+, -1 -> e_-.
    """
    basis = EigenBasis.of(field.geometry)
    v = field.coeffs
    return {
        a: np.einsum("xyzc,xyzc->xyz", v, np.conj(basis.evec[a]))
        for a in (0, 1, -1)
    }


def field_from_coefficients(
    geometry: TorusGeometry, coeffs: dict[int, np.ndarray]
) -> SpectralField4:
    """Assemble sum_alpha c_alpha e_alpha into a spectral field."""
    basis = EigenBasis.of(geometry)
    out = zero_field(geometry)
    for a, c in coeffs.items():
        out.coeffs += c[..., None] * basis.evec[a]
    return out


@dataclass
class KernelDecomposition:
    """Three-way split V = underline + bar + osc."""

    underline: SpectralField4
    bar: SpectralField4
    osc: SpectralField4

    def total(self) -> SpectralField4:
        return self.underline + self.bar + self.osc


def underline_part(field: SpectralField4) -> SpectralField4:
    """Horizontal-average part: n_h = 0 modes, components (1, 2, 4) kept."""
    g = field.geometry
    basis = EigenBasis.of(g)
    out = zero_field(g)
    m = basis.mask_vline
    for c in (0, 1, 3):
        out.coeffs[..., c][m] = field.coeffs[..., c][m]
    return out


def decompose(field: SpectralField4, div_tol: float = 1e-8) -> KernelDecomposition:
    """Split a zero-mean divergence-free field into underline + bar + osc."""
    dv = divergence_max(field)
    scale = max(1.0, float(np.max(np.abs(field.coeffs))))
    if dv > div_tol * scale:
        raise ValueError(f"decompose requires a divergence-free field (max div {dv:.3e})")
    c = coefficients(field)
    g = field.geometry
    basis = EigenBasis.of(g)
    bar = field_from_coefficients(g, {0: c[0]})
    osc = field_from_coefficients(g, {1: c[1], -1: c[-1]})
    return KernelDecomposition(underline_part(field), bar, osc)


def recompose(dec: KernelDecomposition) -> SpectralField4:
    return dec.total()


# -- the filtering group ---------------------------------------------------------


def apply_filter(tau: float, field: SpectralField4) -> SpectralField4:
    """Apply L(tau) = exp(-tau P A): phase exp(i tau omega^alpha) per component.

    Identity on the kernel (e_0 components and all n_h = 0 modes); unitary.
    """
    if tau == 0.0:
        return field.copy()
    g = field.geometry
    basis = EigenBasis.of(g)
    c = coefficients(field)
    phase = np.exp(1j * tau * basis.omega)
    out = field.coeffs.copy()
    # remove the oscillating components, re-add them with their phases
    out -= c[1][..., None] * basis.ep
    out -= c[-1][..., None] * basis.em
    out += (c[1] * phase)[..., None] * basis.ep
    out += (c[-1] * np.conj(phase))[..., None] * basis.em
    return SpectralField4(g, out)
