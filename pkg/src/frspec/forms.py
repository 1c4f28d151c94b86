"""The oscillation-conjugated bilinear forms and their epsilon -> 0 limits.

Everything is built from one kernel, the symmetrized projected transport

    T(A, B) = 1/2 P [ a . grad B + b . grad A ],

computed pseudo-spectrally with 2/3-rule dealiasing.  The filtered form
conjugates T by the filtering group,

    Q_eps(t; V1, V2) = L(t/eps) T( L(-t/eps) V1, L(-t/eps) V2 ),

and the limit forms keep exactly those interactions whose phase is
identically zero.  In the eigen decomposition the interactions split into
sign classes: the (0,0,0) class is an unrestricted convolution of the
e_0 parts (evaluated by FFT), while every class with a nonzero sign is
supported on an exactly enumerated resonant set (evaluated by sparse
triad summation with exact-arithmetic membership decisions).

Per-row coupling weight: restricting the two inputs of T to eigen
components (a at k) and (b at m) and projecting the output on e_c(n),

    <T_row, e_c(n)> = (i/2) c1_a(k) c2_b(m) G,
    G = (ncheck(n) . e_a^vel(k)) <e_b(m), e_c(n)>
      + (ncheck(n) . e_b^vel(m)) <e_a(k), e_c(n)>,

which is the quantity tabulated below.  Rows come in (k,a) <-> (m,b)
swapped pairs, so evaluating with the symmetrized coefficient product
makes the forms bitwise symmetric in their arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import (
    SpectralField4,
    leray_project,
    transport,
    zero_field,
)
from .geometry import TorusGeometry
from .resonance import exact_sqrt_sum_is_zero, omega_ratio_ints
from .waves import (
    EigenBasis,
    apply_filter,
    coefficients,
    field_from_coefficients,
    underline_part,
)

__all__ = ["FormEngine", "project_tilde", "project_underline"]

_SIGN_ROW = {-1: 0, 0: 1, 1: 2}


def project_tilde(V: SpectralField4) -> SpectralField4:
    """Zero out the n_h = 0 modes."""
    g = V.geometry
    out = V.copy()
    out.coeffs[g.N, g.N, :, :] = 0.0
    return out


def project_underline(V: SpectralField4) -> SpectralField4:
    """Keep only the n_h = 0 modes (f-span: components 1, 2, 4)."""
    g = V.geometry
    out = zero_field(g)
    out.coeffs[g.N, g.N, :, :] = V.coeffs[g.N, g.N, :, :]
    out.coeffs[..., 2][g.mask_h_zero] = 0.0
    out.pin_zero_mode()
    return out


@dataclass
class TriadTable:
    """Sparse interaction rows for tilde-output sign classes."""

    kf: np.ndarray  # flat mode index of k
    mf: np.ndarray
    nf: np.ndarray
    ia: np.ndarray  # signs in {-1, 0, 1}
    ib: np.ndarray
    ic: np.ndarray
    G: np.ndarray  # complex coupling weight

    @property
    def rows(self) -> int:
        return len(self.kf)


@dataclass
class UnderTable:
    """Sparse rows with output on the vertical line (f-basis)."""

    kf: np.ndarray
    mf: np.ndarray
    n3i: np.ndarray  # index along the vertical line (0 .. L-1)
    ia: np.ndarray
    ib: np.ndarray
    G4: np.ndarray  # (rows, 4) f-projected coupling vector


@dataclass
class FormEvaluation:
    """Result of a limit-form evaluation with bookkeeping.

    The output is divergence-free and zero-mean (the forms project);
    `interactions` counts the sparse triad rows summed.
    """

    output: SpectralField4
    interactions: int
    seconds: float


class FormEngine:
    """All epsilon-forms and limit forms for one geometry and viscosity."""

    def __init__(self, geometry: TorusGeometry, nu: float):
        if nu < 0:
            raise ValueError("viscosity must be nonnegative")
        self.geometry = geometry
        self.nu = float(nu)
        self.basis = EigenBasis.of(geometry)
        g = geometry
        L = g.L
        self._modes = np.stack(
            np.meshgrid(g.n_axis, g.n_axis, g.n_axis, indexing="ij"), axis=-1
        ).reshape(-1, 3)
        self._H, self._S = omega_ratio_ints(g)
        Sf = np.where(self._S > 0, self._S, 1).astype(float)
        self._omega_flat = np.sqrt(self._H / Sf)
        self._hnz = (self._modes[:, 0] != 0) | (self._modes[:, 1] != 0)
        k1, k2, k3 = g.check_grid
        self._ncheck_flat = np.stack(
            [
                np.broadcast_to(k1, (L, L, L)).reshape(-1),
                np.broadcast_to(k2, (L, L, L)).reshape(-1),
                np.broadcast_to(k3, (L, L, L)).reshape(-1),
            ],
            axis=-1,
        )
        # eigenvectors flattened, stacked by sign row {-1, 0, +1} -> {0, 1, 2}
        self._evec = np.stack(
            [
                self.basis.em.reshape(-1, 4),
                self.basis.e0.reshape(-1, 4),
                self.basis.ep.reshape(-1, 4),
            ]
        )
        self._tab_t1: TriadTable | None = None
        self._tab_qu: UnderTable | None = None
        self._kstar_pairs: tuple[np.ndarray, np.ndarray] | None = None
        self.last_interactions = 0

    # -- coefficient packing ----------------------------------------------------

    def _coeff_matrix(self, V: SpectralField4) -> np.ndarray:
        """(3, L^3) eigen coefficients, rows ordered (-1, 0, +1)."""
        c = coefficients(V)
        return np.stack([c[-1].reshape(-1), c[0].reshape(-1), c[1].reshape(-1)])

    # -- table construction -------------------------------------------------------

    def _pair_arrays(self, fn: int):
        """Valid interaction partners k (and m = n - k) for output mode n."""
        g = self.geometry
        n = self._modes[fn]
        m = n[None, :] - self._modes
        ok = (
            self._hnz
            & (np.abs(m).max(axis=1) <= g.N)
            & ((m[:, 0] != 0) | (m[:, 1] != 0))
        )
        kf = np.nonzero(ok)[0]
        mm = m[ok]
        L = g.L
        mf = ((mm[:, 0] + g.N) * L + (mm[:, 1] + g.N)) * L + (mm[:, 2] + g.N)
        return kf.astype(np.int64), mf.astype(np.int64)

    def _G_rows(self, kf, ia, mf, ib, nf, ic) -> np.ndarray:
        ev = self._evec
        nck = self._ncheck_flat[nf]
        ea_k = ev[ia + 1, kf]
        eb_m = ev[ib + 1, mf]
        ec_n = np.conj(ev[ic + 1, nf])
        ndot_a = np.einsum("rj,rj->r", nck, ea_k[:, :3])
        ndot_b = np.einsum("rj,rj->r", nck, eb_m[:, :3])
        pair_bc = np.einsum("rj,rj->r", eb_m, ec_n)
        pair_ac = np.einsum("rj,rj->r", ea_k, ec_n)
        return ndot_a * pair_bc + ndot_b * pair_ac

    def _confirm_radical(self, k, m, n, a, b, c) -> bool:
        g = self.geometry
        return exact_sqrt_sum_is_zero(
            [
                (a, g.omega_sq_exact(k)),
                (b, g.omega_sq_exact(m)),
                (-c, g.omega_sq_exact(n)),
            ]
        )

    def _build_tables(self):
        g = self.geometry
        H, S = self._H, self._S
        om = self._omega_flat
        rows_t1 = {k: [] for k in ("kf", "mf", "nf", "ia", "ib", "ic")}
        Gparts_t1 = []
        rows_qu = {k: [] for k in ("kf", "mf", "n3i", "ia", "ib")}
        G4_qu = []

        ev = self._evec
        nflat_all = np.arange(g.nmodes)

        # tilde-output classes, one output mode at a time
        for fn in nflat_all[self._hnz]:
            kf, mf = self._pair_arrays(fn)
            if len(kf) == 0:
                continue
            eqMN = H[mf] * S[fn] == H[fn] * S[mf]
            eqKN = H[kf] * S[fn] == H[fn] * S[kf]
            eqKM = H[kf] * S[mf] == H[mf] * S[kf]

            def push(kk, mm, a, b, c):
                r = len(kk)
                if r == 0:
                    return
                rows_t1["kf"].append(kk)
                rows_t1["mf"].append(mm)
                rows_t1["nf"].append(np.full(r, fn, dtype=np.int64))
                rows_t1["ia"].append(np.full(r, a, dtype=np.int8))
                rows_t1["ib"].append(np.full(r, b, dtype=np.int8))
                rows_t1["ic"].append(np.full(r, c, dtype=np.int8))

            for b in (1, -1):  # (0, b, b): bar at k, omega(m) = omega(n)
                push(kf[eqMN], mf[eqMN], 0, b, b)
            for a in (1, -1):  # (a, 0, a): bar at m, omega(k) = omega(n)
                push(kf[eqKN], mf[eqKN], a, 0, a)
            for a in (1, -1):  # (a, -a, 0): oscillating pair onto the kernel
                push(kf[eqKM], mf[eqKM], a, -a, 0)
            # radical classes: all signs nonzero
            wk, wm, wn = om[kf], om[mf], om[fn]
            for a in (1, -1):
                for b in (1, -1):
                    for c in (1, -1):
                        cand = np.nonzero(np.abs(a * wk + b * wm - c * wn) < 1e-11)[0]
                        if len(cand) == 0:
                            continue
                        keep = [
                            i
                            for i in cand
                            if self._confirm_radical(
                                self._modes[kf[i]],
                                self._modes[mf[i]],
                                self._modes[fn],
                                a,
                                b,
                                c,
                            )
                        ]
                        if keep:
                            keep = np.asarray(keep)
                            push(kf[keep], mf[keep], a, b, c)

        if rows_t1["kf"]:
            tab = TriadTable(
                kf=np.concatenate(rows_t1["kf"]),
                mf=np.concatenate(rows_t1["mf"]),
                nf=np.concatenate(rows_t1["nf"]),
                ia=np.concatenate(rows_t1["ia"]),
                ib=np.concatenate(rows_t1["ib"]),
                ic=np.concatenate(rows_t1["ic"]),
                G=np.empty(0, dtype=np.complex128),
            )
            tab.G = self._G_rows(tab.kf, tab.ia, tab.mf, tab.ib, tab.nf, tab.ic)
        else:
            z = np.zeros(0, dtype=np.int64)
            zs = np.zeros(0, dtype=np.int8)
            tab = TriadTable(z, z, z, zs, zs, zs, np.zeros(0, dtype=np.complex128))
        self._tab_t1 = tab

        # underline-output class (a, -a): k + m on the vertical line
        L = g.L
        for i3 in range(L):
            n3 = i3 - g.N
            fn_line = (g.N * L + g.N) * L + i3  # mode (0, 0, n3)
            n = np.array([0, 0, n3])
            m = n[None, :] - self._modes
            ok = (
                self._hnz
                & (np.abs(m).max(axis=1) <= g.N)
                & ((m[:, 0] != 0) | (m[:, 1] != 0))
            )
            kf = np.nonzero(ok)[0].astype(np.int64)
            if len(kf) == 0:
                continue
            mm = m[ok]
            mf = ((mm[:, 0] + g.N) * L + (mm[:, 1] + g.N)) * L + (mm[:, 2] + g.N)
            eqKM = H[kf] * S[mf] == H[mf] * S[kf]
            kk, mmf = kf[eqKM], mf[eqKM]
            if len(kk) == 0:
                continue
            nc3 = self._ncheck_flat[fn_line, 2]
            for a in (1, -1):
                ea_k = ev[a + 1, kk]
                eb_m = ev[-a + 1, mmf]
                ndot_a = nc3 * ea_k[:, 2]
                ndot_b = nc3 * eb_m[:, 2]
                G4 = ndot_a[:, None] * eb_m + ndot_b[:, None] * ea_k
                G4[:, 2] = 0.0  # Leray at (0,0,n3) kills the third component
                rows_qu["kf"].append(kk)
                rows_qu["mf"].append(mmf)
                rows_qu["n3i"].append(np.full(len(kk), i3, dtype=np.int64))
                rows_qu["ia"].append(np.full(len(kk), a, dtype=np.int8))
                rows_qu["ib"].append(np.full(len(kk), -a, dtype=np.int8))
                G4_qu.append(G4)

        if rows_qu["kf"]:
            self._tab_qu = UnderTable(
                kf=np.concatenate(rows_qu["kf"]),
                mf=np.concatenate(rows_qu["mf"]),
                n3i=np.concatenate(rows_qu["n3i"]),
                ia=np.concatenate(rows_qu["ia"]),
                ib=np.concatenate(rows_qu["ib"]),
                G4=np.concatenate(G4_qu, axis=0),
            )
        else:
            z = np.zeros(0, dtype=np.int64)
            zs = np.zeros(0, dtype=np.int8)
            self._tab_qu = UnderTable(z, z, z, zs, zs, np.zeros((0, 4), dtype=np.complex128))

    @property
    def tables(self) -> tuple[TriadTable, UnderTable]:
        if self._tab_t1 is None:
            self._build_tables()
        return self._tab_t1, self._tab_qu

    # -- epsilon-dependent forms ---------------------------------------------------

    def q_eps(
        self, t: float, eps: float, V1: SpectralField4, V2: SpectralField4
    ) -> SpectralField4:
        """Filter-conjugated symmetrized transport (eq. level: the filtered
        system's bilinear term)."""
        if not eps > 0:
            raise ValueError("q_eps requires eps > 0 (use the limit forms at eps = 0)")
        theta = t / eps
        W1 = apply_filter(-theta, V1)
        W2 = apply_filter(-theta, V2)
        return apply_filter(theta, transport(W1, W2)).pin_zero_mode()

    def a2_symbol(self, W: SpectralField4) -> SpectralField4:
        """Plain dissipation symbol diag(-nu |ncheck|^2 x3, 0)."""
        g = self.geometry
        out = W.coeffs * 1.0
        lam = -self.nu * g.check_sq
        out[..., :3] *= lam[..., None]
        out[..., 3] = 0.0
        return SpectralField4(g, out)

    def a2_eps(self, t: float, eps: float, W: SpectralField4) -> SpectralField4:
        """Filter-conjugated dissipation."""
        if not eps > 0:
            raise ValueError("a2_eps requires eps > 0")
        theta = t / eps
        return apply_filter(theta, self.a2_symbol(apply_filter(-theta, W)))

    # -- limit forms ---------------------------------------------------------------

    def _apply_t1_tables(self, C1: np.ndarray, C2: np.ndarray) -> SpectralField4:
        tab, _ = self.tables
        g = self.geometry
        out = np.zeros((3, g.nmodes), dtype=np.complex128)
        if tab.rows:
            x1 = C1[tab.ia + 1, tab.kf]
            y2 = C2[tab.ib + 1, tab.mf]
            x2 = C2[tab.ia + 1, tab.kf]
            y1 = C1[tab.ib + 1, tab.mf]
            prod = 0.5 * (x1 * y2 + x2 * y1)
            contrib = 0.5j * prod * tab.G
            np.add.at(out, (tab.ic + 1, tab.nf), contrib)
        self.last_interactions = tab.rows
        return field_from_coefficients(
            g,
            {
                -1: out[0].reshape((g.L,) * 3),
                0: out[1].reshape((g.L,) * 3),
                1: out[2].reshape((g.L,) * 3),
            },
        )

    def _bar_field(self, V: SpectralField4) -> SpectralField4:
        c = coefficients(V)
        return field_from_coefficients(self.geometry, {0: c[0]})

    def _project_e0(self, W: SpectralField4) -> SpectralField4:
        c = coefficients(W)
        return field_from_coefficients(self.geometry, {0: c[0]})

    def _project_osc(self, W: SpectralField4) -> SpectralField4:
        c = coefficients(W)
        return field_from_coefficients(self.geometry, {1: c[1], -1: c[-1]})

    def q_tilde1(self, V1: SpectralField4, V2: SpectralField4) -> SpectralField4:
        """Resonance-restricted symmetrized transport (tilde output).

        Inputs are taken through their tilde parts; the (0,0,0) class is an
        unrestricted convolution of the e_0 parts, all other classes are
        sparse exact-resonant sums.
        """
        bar1 = self._bar_field(V1)
        bar2 = self._bar_field(V2)
        fft_part = self._project_e0(transport(bar1, bar2))
        table_part = self._apply_t1_tables(
            self._coeff_matrix(V1), self._coeff_matrix(V2)
        )
        return (fft_part + table_part).pin_zero_mode()

    def _b_sector(
        self, Vund: SpectralField4, Vtil: SpectralField4
    ) -> SpectralField4:
        """The (b, c) = (+-, +-) sector of the underline x tilde form:
        output n couples the underline field at (0, 0, 2 n3) with the tilde
        field at (n_h, -n3).  Carries the bare symmetrized kernel (no 1/2):
        this is the coupling exactly as it enters the wave limit equation."""
        g = self.geometry
        L, N = g.L, g.N
        basis = self.basis
        und = Vund.coeffs[N, N, :, :]  # (L, 4) along the vertical line
        C2 = coefficients(Vtil)

        out = {1: np.zeros((L, L, L), dtype=np.complex128),
               -1: np.zeros((L, L, L), dtype=np.complex128)}
        n3 = g.n_axis
        valid3 = np.abs(2 * n3) <= N  # underline partner inside the lattice
        i_k3 = np.where(valid3, 2 * n3 + N, 0)
        u_at = np.where(valid3[:, None], und[i_k3, :], 0.0)  # (L, 4) for each n3
        k1, k2, k3 = g.check_grid
        osc = basis.mask_osc

        # m = (n1, n2, -n3): flip the vertical index
        flip = slice(None, None, -1)
        for b in (1, -1):
            cb = C2[b][:, :, flip]
            eb = (basis.ep if b == 1 else basis.em)[:, :, flip, :]
            ndot_u = k1 * u_at[None, None, :, 0] + k2 * u_at[None, None, :, 1]
            ndot_eb = k1 * eb[..., 0] + k2 * eb[..., 1] + k3 * eb[..., 2]
            for c in (1, -1):
                if c != b:
                    continue  # resonance forces c = b
                ec = basis.ep if c == 1 else basis.em
                pair_bc = np.einsum("xyzj,xyzj->xyz", eb, np.conj(ec))
                pair_uc = np.einsum("zj,xyzj->xyz", u_at.astype(np.complex128), np.conj(ec))
                contrib = 1j * (ndot_u * cb * pair_bc + ndot_eb * cb * pair_uc)
                out[c] += np.where(osc, contrib, 0.0)
        return field_from_coefficients(g, out)

    def b_form(self, Vund: SpectralField4, Vosc: SpectralField4) -> SpectralField4:
        """Limit coupling of the horizontal average into the wave part."""
        und = project_underline(Vund)
        osc = self._project_osc(Vosc)
        return self._b_sector(und, osc).pin_zero_mode()

    def q_tilde2(self, V1: SpectralField4, V2: SpectralField4) -> SpectralField4:
        """Limit underline x tilde transport (tilde output), both slots."""
        und1 = project_underline(V1)
        und2 = project_underline(V2)
        til1 = project_tilde(V1)
        til2 = project_tilde(V2)
        bar1 = self._bar_field(til1)
        bar2 = self._bar_field(til2)
        fft_part = self._project_e0(transport(und1, bar2) + transport(bar1, und2))
        b_part = 0.5 * (self._b_sector(und1, til2) + self._b_sector(und2, til1))
        return (fft_part + b_part).pin_zero_mode()

    def q_underline(self, V1: SpectralField4, V2: SpectralField4) -> SpectralField4:
        """Limit tilde x tilde interaction with output on the vertical line."""
        g = self.geometry
        til1 = project_tilde(V1)
        til2 = project_tilde(V2)
        bar1 = self._bar_field(til1)
        bar2 = self._bar_field(til2)
        fft_part = project_underline(transport(bar1, bar2))

        _, qu = self.tables
        out_line = np.zeros((g.L, 4), dtype=np.complex128)
        if len(qu.kf):
            C1 = self._coeff_matrix(til1)
            C2 = self._coeff_matrix(til2)
            x1 = C1[qu.ia + 1, qu.kf]
            y2 = C2[qu.ib + 1, qu.mf]
            x2 = C2[qu.ia + 1, qu.kf]
            y1 = C1[qu.ib + 1, qu.mf]
            prod = 0.5 * (x1 * y2 + x2 * y1)
            contrib = (0.5j * prod)[:, None] * qu.G4
            np.add.at(out_line, qu.n3i, contrib)
        out = zero_field(g)
        out.coeffs[g.N, g.N, :, :] = out_line
        return (fft_part + out).pin_zero_mode()

    def q_limit(self, V1: SpectralField4, V2: SpectralField4) -> SpectralField4:
        """The full limit form Q = Qt1 + Qt2 + Qu."""
        t1 = self.q_tilde1(project_tilde(V1), project_tilde(V2))
        t2 = self.q_tilde2(V1, V2)
        qu = self.q_underline(V1, V2)
        return t1 + t2 + qu

    def evaluate(self, form: str, V1: SpectralField4, V2: SpectralField4) -> FormEvaluation:
        """Timed evaluation of a named limit form with its interaction count."""
        import time as _time

        fn = {
            "q_tilde1": self.q_tilde1,
            "q_tilde2": self.q_tilde2,
            "q_underline": self.q_underline,
            "q_limit": self.q_limit,
        }[form]
        self.last_interactions = 0
        t0 = _time.perf_counter()
        out = fn(V1, V2)
        return FormEvaluation(out, self.last_interactions, _time.perf_counter() - t0)

    def a2_limit(self, W: SpectralField4) -> SpectralField4:
        """Phase-free part of the conjugated dissipation.

        Underline: heat in x3 on the horizontal components, none on the
        fourth.  Bar: full Laplacian.  Oscillating: the diagonal
        <A2 e_pm, e_pm> = -nu |ncheck|^2 * |velocity share of e_pm|^2,
        i.e. half the Laplacian, since the wave vectors carry half their
        energy in the non-diffused fourth component.
        """
        g = self.geometry
        basis = self.basis
        c = coefficients(W)
        ksq = g.check_sq
        vshare_p = np.einsum("xyzj,xyzj->xyz", basis.ep[..., :3], np.conj(basis.ep[..., :3])).real
        vshare_m = np.einsum("xyzj,xyzj->xyz", basis.em[..., :3], np.conj(basis.em[..., :3])).real
        out = field_from_coefficients(
            g,
            {
                0: -self.nu * ksq * c[0],
                1: -self.nu * ksq * vshare_p * c[1],
                -1: -self.nu * ksq * vshare_m * c[-1],
            },
        )
        # underline part: nu * d33 on components 1, 2; fourth untouched
        _, _, k3 = g.check_grid
        line = W.coeffs[g.N, g.N, :, :]
        lam3 = -self.nu * (g.n_axis.astype(float) / g.a[2]) ** 2
        out.coeffs[g.N, g.N, :, 0] += lam3 * line[:, 0]
        out.coeffs[g.N, g.N, :, 1] += lam3 * line[:, 1]
        return out.pin_zero_mode()

    # -- resonant trilinear pairing -------------------------------------------------

    def kstar_pair_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """Flat (k, n) index arrays of the deduplicated resonant pair set."""
        if self._kstar_pairs is None:
            tab, _ = self.tables
            allpm = (tab.ia != 0) & (tab.ib != 0) & (tab.ic != 0)
            pairs = sorted({(int(k), int(n)) for k, n in zip(tab.kf[allpm], tab.nf[allpm])})
            if pairs:
                arr = np.array(pairs, dtype=np.int64)
                self._kstar_pairs = (arr[:, 0], arr[:, 1])
            else:
                z = np.zeros(0, dtype=np.int64)
                self._kstar_pairs = (z, z)
        return self._kstar_pairs

    def trilinear_resonant(self, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> complex:
        """sum over (k, n) in K* of a_hat(k) b_hat(n-k) c_hat(n) for scalar
        coefficient lattices."""
        g = self.geometry
        kf, nf = self.kstar_pair_indices()
        if len(kf) == 0:
            return 0.0 + 0.0j
        af = np.asarray(a, dtype=np.complex128).reshape(-1)
        bf = np.asarray(b, dtype=np.complex128).reshape(-1)
        cf = np.asarray(c, dtype=np.complex128).reshape(-1)
        mk = self._modes[nf] - self._modes[kf]
        L = g.L
        mfl = ((mk[:, 0] + g.N) * L + (mk[:, 1] + g.N)) * L + (mk[:, 2] + g.N)
        return complex(np.sum(af[kf] * bf[mfl] * cf[nf]))

    # -- Schochet remainders ----------------------------------------------------------

    def remainders(self, t: float, eps: float, U: SpectralField4):
        """Oscillating remainder fields (R_I, R_II, R_III, S).

        Each R is the non-resonant part of the corresponding interaction
        class, with its explicit phases; computed as the difference between
        the filtered form and its resonant (limit) part, which agree on the
        resonant set with phase exactly one.
        """
        til = project_tilde(U)
        und = project_underline(U)
        q_til_til = self.q_eps(t, eps, til, til)
        r1 = project_tilde(q_til_til) - self.q_tilde1(til, til)
        r2 = 2.0 * project_tilde(self.q_eps(t, eps, und, til)) - self.q_tilde2(U, U)
        r3 = project_underline(q_til_til) - self.q_underline(til, til)
        s = -1.0 * (self.a2_eps(t, eps, U) - self.a2_limit(U))
        return r1, r2, r3, s
