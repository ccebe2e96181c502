"""Element-local HDG matrices for the poroelastic first-order system.

Per-element unknown layout (component-major, orthonormal reference bases):

    sigma : 3 Voigt components x dim P_k      (xx, yy, xy)
    v_s   : 2 components x dim P_{k+1}
    v_f   : 2 components x dim P_k
    p     : dim P_k

Trace unknowns per face, in the face parameterization running from the
lower-indexed to the higher-indexed global vertex:

    vhat_s : 2 components x (k+1),   phat : (k+1)

The sign conventions are chosen so that for the composed blocks
z^T [[K, B], [C, G]] z equals the dissipation (drag + tau jump terms)
exactly, which is what makes the discrete energy identity hold to roundoff.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import fe
from .materials import VOIGT_ID

# traction rows of the Voigt components: (e_c n)_d = N[c, d, :] . n
_DIVMAP = {0: ((0, 0),), 1: ((1, 1),), 2: ((0, 1), (1, 0))}  # c -> ((d, alpha), ...)


@dataclass(frozen=True)
class Layout:
    """Offsets of the element-local unknown vector for one degree."""

    k: int
    nk: int
    nk1: int
    ke: int

    @property
    def o_sigma(self):
        return 0

    @property
    def o_vs(self):
        return 3 * self.nk

    @property
    def o_vf(self):
        return 3 * self.nk + 2 * self.nk1

    @property
    def o_p(self):
        return 5 * self.nk + 2 * self.nk1

    @property
    def n_interior(self):
        return 6 * self.nk + 2 * self.nk1

    @property
    def n_trace_face(self):
        return 3 * self.ke

    @property
    def n_trace(self):
        return 9 * self.ke

    def sigma_slice(self, c):
        return slice(c * self.nk, (c + 1) * self.nk)

    def vs_slice(self, d):
        return slice(self.o_vs + d * self.nk1, self.o_vs + (d + 1) * self.nk1)

    def vf_slice(self, d):
        return slice(self.o_vf + d * self.nk, self.o_vf + (d + 1) * self.nk)

    @property
    def p_slice(self):
        return slice(self.o_p, self.o_p + self.nk)

    def trace_vhat(self, lf, d):
        o = lf * self.n_trace_face + d * self.ke
        return slice(o, o + self.ke)

    def trace_phat(self, lf):
        o = lf * self.n_trace_face + 2 * self.ke
        return slice(o, o + self.ke)


@lru_cache(maxsize=None)
def layout(k):
    if k < 1:
        raise ValueError(f"polynomial degree must be >= 1, got {k}")
    return Layout(k, fe.dim_Pk(k), fe.dim_Pk(k + 1), k + 1)


@dataclass(frozen=True)
class RefTables:
    """Degree-dependent reference-element tables shared by all elements."""

    k: int
    vol: fe.QuadRule
    Vk: np.ndarray
    Vk1: np.ndarray
    Gk: np.ndarray
    Gk1: np.ndarray
    D1: tuple  # D1[b][i, j] = int  phi^k_i  d_b phi^{k+1}_j
    D3: tuple  # D3[b][i, j] = int (d_b phi^k_i)  phi^{k+1}_j
    D2: tuple  # D2[b][i, j] = int  phi^k_i  d_b phi^k_j
    edge: fe.QuadRule
    E: np.ndarray  # edge basis values at edge quad points
    trace_k: dict  # (local_face, flip) -> [nqf, nk]
    trace_k1: dict
    Mf_kk: dict  # kernels on the unit-length reference face
    Mf_k_k1: dict
    Cf: dict  # (E*w)^T pairing of P_k traces with the edge basis, transposed
    Pmat: dict  # L2(F) projection of P_{k+1} traces onto the edge basis
    cross: np.ndarray  # [nk1, nk] reference mass between P_{k+1} and P_k bases


@lru_cache(maxsize=None)
def ref_tables(k):
    lay = layout(k)
    vol = fe.quadrature("triangle", 2 * k + 3)
    bk, bk1 = fe.simplex_basis(k), fe.simplex_basis(k + 1)
    Vk, Vk1 = bk.eval(vol.points), bk1.eval(vol.points)
    Gk, Gk1 = bk.grad(vol.points), bk1.grad(vol.points)
    w = vol.weights
    D1 = tuple((Vk * w[:, None]).T @ Gk1[:, :, b] for b in range(2))
    D3 = tuple((Gk[:, :, b] * w[:, None]).T @ Vk1 for b in range(2))
    D2 = tuple((Vk * w[:, None]).T @ Gk[:, :, b] for b in range(2))
    cross = np.zeros((lay.nk1, lay.nk))
    cross[: lay.nk, :] = np.eye(lay.nk)  # nested hierarchical bases

    edge = fe.quadrature("edge", 2 * k + 3)
    E = fe.edge_basis(k).eval(edge.points)
    we = edge.weights
    trace_k, trace_k1, Mf_kk, Mf_k_k1, Cf, Pmat = {}, {}, {}, {}, {}, {}
    for lf in range(3):
        a, b = fe.LOCAL_FACE_VERTICES[lf]
        A, B = fe.REF_VERTICES[a], fe.REF_VERTICES[b]
        for flip in (0, 1):
            s = edge.points if flip == 0 else 1.0 - edge.points
            pts = A[None, :] + s[:, None] * (B - A)[None, :]
            tk = bk.eval(pts)
            tk1 = bk1.eval(pts)
            key = (lf, flip)
            trace_k[key], trace_k1[key] = tk, tk1
            Mf_kk[key] = (tk * we[:, None]).T @ tk
            Mf_k_k1[key] = (tk * we[:, None]).T @ tk1
            Cf[key] = (tk * we[:, None]).T @ E
            Pmat[key] = (E * we[:, None]).T @ tk1
    return RefTables(
        k, vol, Vk, Vk1, Gk, Gk1, D1, D3, D2, edge, E, trace_k, trace_k1, Mf_kk, Mf_k_k1, Cf, Pmat, cross
    )


class Stabilization:
    """Face-wise constant stabilization, stored per element side.

    ``tau_s`` and ``tau_f`` are (n_elements, 3) arrays indexed by local face;
    an interior face may carry different values on its two sides.
    """

    def __init__(self, tau_s, tau_f):
        self.tau_s = np.asarray(tau_s, dtype=float)
        self.tau_f = np.asarray(tau_f, dtype=float)
        if self.tau_s.shape != self.tau_f.shape or self.tau_s.ndim != 2:
            raise ValueError("tau_s and tau_f must both be (n_elements, 3) arrays")

    def validate(self):
        """Well-posedness assumptions: tau_f > 0 somewhere on every element."""
        if np.any(self.tau_s < 0.0) or np.any(self.tau_f < 0.0):
            raise ValueError("stabilization values must be nonnegative")
        if not np.all(self.tau_f.max(axis=1) > 0.0):
            raise ValueError("tau_f must be positive on at least one face of every element")


def stabilization_defaults(mesh, c_s=1.0, c_f=1.0):
    """tau_s = c_s / h_K on every face of K, tau_f = c_f everywhere."""
    if c_s <= 0.0 or c_f <= 0.0:
        raise ValueError("stabilization scales must be positive")
    tau_s = np.repeat((c_s / mesh.h_per_element)[:, None], 3, axis=1)
    tau_f = np.full((mesh.n_triangles, 3), float(c_f))
    return Stabilization(tau_s, tau_f)


def face_orientation(mesh, elem, local_face):
    """0 if the element's local face order matches the global lo->hi order."""
    a, b = fe.LOCAL_FACE_VERTICES[local_face]
    ga = mesh.triangles[elem, a]
    gf = mesh.elem_faces[elem, local_face]
    return 0 if ga == mesh.faces[gf, 0] else 1


def face_reduction(mesh, elem, local_face, k):
    """Matrix of the L2(F) projection of P_{k+1}(K) traces onto P_k(F).

    Returns the (k+1) x dim P_{k+1} coefficient map in the global face
    parameterization; vector traces are projected componentwise with the
    same matrix.
    """
    tab = ref_tables(k)
    return tab.Pmat[(local_face, face_orientation(mesh, elem, local_face))].copy()


@dataclass
class LocalBlocks:
    """All element matrices of the semidiscrete forms, plus composed blocks.

    ``M``, ``K`` act on the interior layout; ``B`` couples interior tests to
    traces, ``C``/``G`` are the trace-equation rows.  Face-block lists are
    indexed by local face.
    """

    layout: Layout
    elem: int
    material: object
    amap: fe.AffineMap
    detJ: float
    tau_s: np.ndarray
    tau_f: np.ndarray
    M_AA_ss: np.ndarray
    M_AA_sp: np.ndarray
    M_AA_pp: np.ndarray
    M_s0: np.ndarray
    M_rho: np.ndarray
    M_drag: np.ndarray
    D_div_sigma: np.ndarray
    D_grad_p: np.ndarray
    T_sn_vs: list
    T_sn_hat: list
    T_vfn: list
    T_vfn_hat: list
    S_s_vv: list
    S_s_vhat: list
    S_s_hh: list
    S_f_pp: list
    S_f_phat: list
    S_f_hh: list
    M: np.ndarray
    K: np.ndarray
    B: np.ndarray
    C: np.ndarray
    G: np.ndarray


def local_matrices(mesh, elem, material, k, stab, quad=None):
    """Assemble every element-local block required by the one-step scheme.

    ``quad`` overrides the volume rule; it must integrate degree 2k+2
    exactly (the P_{k+1} mass), otherwise the assembly is rejected.
    """
    tab = ref_tables(k)
    lay = layout(k)
    if quad is not None and quad.order < 2 * k + 2:
        raise ValueError(
            f"quadrature of order {quad.order} underresolves degree-{k} forms "
            f"(need at least {2 * k + 2})"
        )

    amap = fe.affine_map(mesh.vertices[mesh.triangles[elem]])
    detJ, Jinv = amap.det, amap.jac_inv
    nk, nk1, ke = lay.nk, lay.nk1, lay.ke

    # physical derivative tables: d_a phi = sum_b Jinv[b, a] dhat_b phi
    D1p = [detJ * (Jinv[0, a] * tab.D1[0] + Jinv[1, a] * tab.D1[1]) for a in range(2)]
    D3p = [detJ * (Jinv[0, a] * tab.D3[0] + Jinv[1, a] * tab.D3[1]) for a in range(2)]
    D2p = [detJ * (Jinv[0, a] * tab.D2[0] + Jinv[1, a] * tab.D2[1]) for a in range(2)]

    A = material.A
    alpha = material.alpha
    Am = A @ VOIGT_ID

    def diag_blocks(nrow, ncol, nb_r, nb_c, coef, n=None):
        """Block matrix whose (r, c) block is coef[r, c] * I (leading n)."""
        out = np.zeros((nb_r * nrow, nb_c * ncol))
        m = min(nrow, ncol) if n is None else n
        idx = np.arange(m)
        for r in range(nb_r):
            for c in range(nb_c):
                if coef[r, c] != 0.0:
                    out[r * nrow + idx, c * ncol + idx] = coef[r, c]
        return out

    M_AA_ss = diag_blocks(nk, nk, 3, 3, detJ * A)
    M_AA_sp = diag_blocks(nk, nk, 3, 1, detJ * alpha * Am[:, None])
    M_AA_pp = alpha**2 * material.trace_a_id * detJ * np.eye(nk)
    M_s0 = material.s0 * detJ * np.eye(nk)
    M_rho = np.zeros((2 * nk1 + 2 * nk, 2 * nk1 + 2 * nk))
    idx1, idx = np.arange(nk1), np.arange(nk)
    for d in range(2):
        M_rho[d * nk1 + idx1, d * nk1 + idx1] = detJ * material.rho11
        M_rho[d * nk1 + idx, 2 * nk1 + d * nk + idx] = detJ * material.rho12
        M_rho[2 * nk1 + d * nk + idx, d * nk1 + idx] = detJ * material.rho12
        for dd in range(2):
            if material.rho22[d, dd] != 0.0:
                M_rho[2 * nk1 + d * nk + idx, 2 * nk1 + dd * nk + idx] = detJ * material.rho22[d, dd]
    M_drag = diag_blocks(nk, nk, 2, 2, detJ * material.drag)

    # (div r, w_s): rows (c, i) over sigma, cols (d, j) over v_s
    D_div_sigma = np.zeros((3 * nk, 2 * nk1))
    for c, pairs in _DIVMAP.items():
        for d, a in pairs:
            D_div_sigma[lay.sigma_slice(c), d * nk1 : (d + 1) * nk1] += D3p[a]

    # (sigma, grad w_s): rows (d, i) over v_s, cols (c, j) over sigma
    E_grad = np.zeros((2 * nk1, 3 * nk))
    for c, pairs in _DIVMAP.items():
        for d, a in pairs:
            E_grad[d * nk1 : (d + 1) * nk1, c * nk : (c + 1) * nk] += D1p[a].T

    # (p, div w_f): rows (d, i) over v_f, cols j over p
    D_grad_p = np.concatenate([D2p[0].T, D2p[1].T], axis=0)

    ni, ntr = lay.n_interior, lay.n_trace
    M = np.zeros((ni, ni))
    K = np.zeros((ni, ni))
    B = np.zeros((ni, ntr))
    C = np.zeros((ntr, ni))
    G = np.zeros((ntr, ntr))

    ssl = slice(0, 3 * nk)
    vsl = slice(lay.o_vs, lay.o_vs + 2 * nk1)
    fsl = slice(lay.o_vf, lay.o_vf + 2 * nk)
    psl = lay.p_slice

    M[ssl, ssl] = M_AA_ss
    M[ssl, psl] = M_AA_sp
    M[psl, ssl] = M_AA_sp.T
    M[psl, psl] = M_AA_pp + M_s0
    M[lay.o_vs : lay.o_vf + 2 * nk, lay.o_vs : lay.o_vf + 2 * nk] = M_rho

    K[ssl, vsl] += D_div_sigma
    K[vsl, ssl] += E_grad
    K[fsl, fsl] += M_drag
    K[fsl, psl] -= D_grad_p
    K[psl, fsl] -= np.hstack([D2p[0].T, D2p[1].T])  # (v_f, grad q)

    T_sn_vs, T_sn_hat, T_vfn, T_vfn_hat = [], [], [], []
    S_s_vv, S_s_vhat, S_s_hh, S_f_pp, S_f_phat, S_f_hh = [], [], [], [], [], []

    for lf in range(3):
        flip = face_orientation(mesh, elem, lf)
        key = (lf, flip)
        n = amap.face_normals[lf]
        L = amap.face_lengths[lf]
        ts = stab.tau_s[elem, lf]
        tf = stab.tau_f[elem, lf]
        Nmat = np.array([[n[0], 0.0], [0.0, n[1]], [n[1], n[0]]])  # [c, d]

        Mkk = L * tab.Mf_kk[key]
        Mkk1 = L * tab.Mf_k_k1[key]
        Cf = L * tab.Cf[key]
        P = tab.Pmat[key]

        tsv = np.zeros((2 * nk1, 3 * nk))
        tsh = np.zeros((2 * ke, 3 * nk))
        for c in range(3):
            for d in range(2):
                if Nmat[c, d] == 0.0:
                    continue
                tsv[d * nk1 : (d + 1) * nk1, c * nk : (c + 1) * nk] += Nmat[c, d] * Mkk1.T
                tsh[d * ke : (d + 1) * ke, c * nk : (c + 1) * nk] += Nmat[c, d] * Cf.T
        tvf = np.hstack([n[0] * Mkk, n[1] * Mkk])
        tvfh = np.hstack([n[0] * Cf.T, n[1] * Cf.T])

        PtP = ts * L * (P.T @ P)
        ssvv = np.zeros((2 * nk1, 2 * nk1))
        ssvv[:nk1, :nk1] = PtP
        ssvv[nk1:, nk1:] = PtP
        ssvh = np.zeros((2 * nk1, 2 * ke))
        ssvh[:nk1, :ke] = ts * L * P.T
        ssvh[nk1:, ke:] = ts * L * P.T
        sshh = ts * L * np.eye(2 * ke)
        sfpp = tf * Mkk
        sfph = tf * Cf
        sfhh = tf * L * np.eye(ke)

        T_sn_vs.append(tsv)
        T_sn_hat.append(tsh)
        T_vfn.append(tvf)
        T_vfn_hat.append(tvfh)
        S_s_vv.append(ssvv)
        S_s_vhat.append(ssvh)
        S_s_hh.append(sshh)
        S_f_pp.append(sfpp)
        S_f_phat.append(sfph)
        S_f_hh.append(sfhh)

        K[vsl, ssl] -= tsv
        K[vsl, vsl] += ssvv
        K[psl, fsl] += tvf
        K[psl, psl] += sfpp

        vh = slice(lf * lay.n_trace_face, lf * lay.n_trace_face + 2 * ke)
        ph = lay.trace_phat(lf)
        B[ssl, vh] -= tsh.T
        B[vsl, vh] -= ssvh
        B[fsl, ph] += tvfh.T
        B[psl, ph] -= sfph
        C[vh, ssl] += tsh
        C[vh, vsl] -= ssvh.T
        C[ph, fsl] -= tvfh
        C[ph, psl] -= sfph.T
        G[vh, vh] += sshh
        G[ph, ph] += sfhh

    return LocalBlocks(
        layout=lay,
        elem=elem,
        material=material,
        amap=amap,
        detJ=detJ,
        tau_s=stab.tau_s[elem].copy(),
        tau_f=stab.tau_f[elem].copy(),
        M_AA_ss=M_AA_ss,
        M_AA_sp=M_AA_sp,
        M_AA_pp=M_AA_pp,
        M_s0=M_s0,
        M_rho=M_rho,
        M_drag=M_drag,
        D_div_sigma=D_div_sigma,
        D_grad_p=D_grad_p,
        T_sn_vs=T_sn_vs,
        T_sn_hat=T_sn_hat,
        T_vfn=T_vfn,
        T_vfn_hat=T_vfn_hat,
        S_s_vv=S_s_vv,
        S_s_vhat=S_s_vhat,
        S_s_hh=S_s_hh,
        S_f_pp=S_f_pp,
        S_f_phat=S_f_phat,
        S_f_hh=S_f_hh,
        M=M,
        K=K,
        B=B,
        C=C,
        G=G,
    )


@dataclass
class ElementSystem:
    """One element's contribution to the one-step linear system.

    Blocks are in the scaling of the zero-data reduction of the scheme:
    A_ii = M + dt/2 K, off-diagonal and trace blocks carry dt/2, so the
    trace-trace stabilization block is linear in dt.  ``rhs`` maps the
    previous level and the midpoint source load to the local right side.
    """

    elem: int
    dt: float
    blocks: LocalBlocks
    A_ii: np.ndarray
    A_ib: np.ndarray
    A_bi: np.ndarray
    A_bb: np.ndarray

    def rhs(self, u_prev, lam_prev, f_mid=None):
        b = self.blocks
        r_i = b.M @ u_prev - 0.5 * self.dt * (b.K @ u_prev + b.B @ lam_prev)
        if f_mid is not None:
            r_i = r_i + self.dt * f_mid
        r_b = -0.5 * self.dt * (b.C @ u_prev + b.G @ lam_prev)
        return r_i, r_b


def cn_element_system(blocks, dt):
    """One-step system of the implicit midpoint scheme for one element."""
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got {dt:g}")
    return ElementSystem(
        elem=blocks.elem,
        dt=dt,
        blocks=blocks,
        A_ii=blocks.M + 0.5 * dt * blocks.K,
        A_ib=0.5 * dt * blocks.B,
        A_bi=0.5 * dt * blocks.C,
        A_bb=0.5 * dt * blocks.G,
    )
