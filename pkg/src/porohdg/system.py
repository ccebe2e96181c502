"""Global trace system: static condensation, factorization, one-step solves.

The one-step scheme is solved in midpoint unknowns: with A_ii = M + dt/2 K
and the dt/2-scaled coupling blocks, the midpoint state satisfies

    A_ii u_m + A_ib lam_m = (dt/2) F_mid + M u^i,      A_bi u_m + A_bb lam_m = 0,

and the new level is u^{i+1} = 2 u_m - u^i (same for traces).  This is
algebraically the Crank-Nicolson step written in level-(i+1) unknowns, but
the right side only needs the (structured, matrix-free) mass apply, so the
condensed engine stores one dense inverse per element and nothing else of
that size.  A monolithic assembly of the same one-step system, solved in
level-(i+1) unknowns, is kept as an independent oracle.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fe
from .local import cn_element_system, face_orientation, layout, local_matrices, ref_tables
from .materials import VOIGT_ID


@dataclass
class State:
    """All coefficients of one time level: interiors (nE, ni) and traces."""

    t: float
    u: np.ndarray
    traces: np.ndarray

    def copy(self):
        return State(self.t, self.u.copy(), self.traces.copy())


class DofMap:
    """Global numbering of trace unknowns with essential-BC masks.

    Face f owns the slots [3(k+1) f, 3(k+1)(f+1)): first the two solid
    velocity components, then the pressure trace, each with k+1 modes in the
    lo->hi face parameterization.
    """

    def __init__(self, mesh, k):
        if k < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {k}")
        self.mesh = mesh
        self.k = k
        ke = k + 1
        self.ke = ke
        self.per_face = 3 * ke
        self.ndof = self.per_face * mesh.n_faces
        ess = np.zeros(self.ndof, dtype=bool)
        for f in mesh.boundary_faces():
            o = self.per_face * f
            if mesh.tag_elastic[f] == "d":
                ess[o : o + 2 * ke] = True
            if mesh.tag_flow[f] == "p":
                ess[o + 2 * ke : o + 3 * ke] = True
        self.is_essential = ess
        self.free = np.where(~ess)[0]
        self.essential = np.where(ess)[0]
        self._free_pos = -np.ones(self.ndof, dtype=int)
        self._free_pos[self.free] = np.arange(len(self.free))

        # element -> global trace scatter, matching the local face order
        nt = mesh.n_triangles
        scatter = np.empty((nt, 9 * ke), dtype=int)
        for e in range(nt):
            cols = []
            for lf in range(3):
                o = self.per_face * mesh.elem_faces[e, lf]
                cols.append(np.arange(o, o + 3 * ke))
            scatter[e] = np.concatenate(cols)
        self.elem_scatter = scatter

    def face_slice(self, f, field):
        o = self.per_face * f
        if field == "vhat":
            return slice(o, o + 2 * self.ke)
        if field == "phat":
            return slice(o + 2 * self.ke, o + 3 * self.ke)
        raise ValueError(f"unknown trace field {field!r}")


def build_dofmap(mesh, k):
    """Trace DOF numbering: 3(k+1) per face before boundary elimination."""
    return DofMap(mesh, k)


def dg_volume_dofs(k):
    """Globally coupled volumetric unknowns per element of an all-degree-k DG."""
    return 8 * fe.dim_Pk(k)


def hdg_trace_dofs(k):
    """Globally coupled trace unknowns per face of the hybridized scheme."""
    return 3 * (k + 1)


def dof_reduction(k, faces_per_element=1.5):
    """Fractional reduction of globally coupled unknowns, HDG versus DG."""
    return 1.0 - hdg_trace_dofs(k) * faces_per_element / dg_volume_dofs(k)


def _equilibrated_inv(A):
    """Inverse via row/column equilibration; tames mixed physical scales."""
    dr = 1.0 / np.abs(A).max(axis=1)
    As = A * dr[:, None]
    dc = 1.0 / np.abs(As).max(axis=0)
    return (np.linalg.inv(As * dc[None, :]) * dc[:, None]) * dr[None, :]


def element_systems(mesh, matfield, k, stab, dt):
    """Yield the one-step ElementSystem of every element."""
    for e in range(mesh.n_triangles):
        blocks = local_matrices(mesh, e, matfield.params_of(e), k, stab)
        es = cn_element_system(blocks, dt)
        es.elem = e
        yield es


def project_boundary_values(mesh, k, dofmap, vs_D=None, p_D=None, t=0.0):
    """Facewise L2 projection of Dirichlet data onto essential trace DOFs."""
    vals = np.zeros(dofmap.ndof)
    if vs_D is None and p_D is None:
        return vals
    edge = fe.quadrature("edge", 2 * k + 3)
    E = fe.edge_basis(k).eval(edge.points)
    w = edge.weights
    ke = k + 1
    for f in mesh.boundary_faces():
        a = mesh.vertices[mesh.faces[f, 0]]
        b = mesh.vertices[mesh.faces[f, 1]]
        pts = a[None, :] + edge.points[:, None] * (b - a)[None, :]
        o = dofmap.per_face * f
        if vs_D is not None and mesh.tag_elastic[f] == "d":
            v = np.asarray(vs_D(pts[:, 0], pts[:, 1], t))
            for d in range(2):
                vals[o + d * ke : o + (d + 1) * ke] = E.T @ (w * v[d])
        if p_D is not None and mesh.tag_flow[f] == "p":
            pv = np.asarray(p_D(pts[:, 0], pts[:, 1], t))
            vals[o + 2 * ke : o + 3 * ke] = E.T @ (w * pv)
    return vals


class CondensedSystem:
    """Schur-condensed trace system with retained element factorizations.

    The global sparse matrix is fixed for a fixed time step; it is
    factorized once and reused for every step.
    """

    def __init__(self, elements, dofmap):
        mesh = dofmap.mesh
        k = dofmap.k
        self.mesh = mesh
        self.k = k
        self.lay = layout(k)
        self.dofmap = dofmap
        self.tab = ref_tables(k)
        nE = mesh.n_triangles
        ni, ntr = self.lay.n_interior, self.lay.n_trace

        self.Ainv = np.empty((nE, ni, ni))
        self.A_ib = np.empty((nE, ni, ntr))
        self.A_bi = np.empty((nE, ntr, ni))
        self.A_bb = np.empty((nE, ntr, ntr))
        self.detJ = np.empty(nE)
        self.Amat = np.empty((nE, 3, 3))
        self.alpha = np.empty(nE)
        self.s0 = np.empty(nE)
        self.rho11 = np.empty(nE)
        self.rho12 = np.empty(nE)
        self.rho22 = np.empty((nE, 2))
        self.drag = np.empty((nE, 2))
        self.tau_s = np.empty((nE, 3))
        self.tau_f = np.empty((nE, 3))
        self.face_len = np.empty((nE, 3))
        self.face_flip = np.empty((nE, 3), dtype=int)
        self.phys_quad = np.empty((nE, self.tab.vol.npoints, 2))

        rows, cols, vals = [], [], []
        self.dt = None
        count = 0
        for es in elements:
            e = es.elem
            count += 1
            if self.dt is None:
                self.dt = es.dt
            elif es.dt != self.dt:
                raise ValueError("all element systems must share one time step")
            try:
                Ainv = _equilibrated_inv(es.A_ii)
            except np.linalg.LinAlgError as exc:
                raise RuntimeError(f"singular interior block in element {e}") from exc
            if not np.all(np.isfinite(Ainv)):
                raise RuntimeError(f"singular interior block in element {e}")
            self.Ainv[e] = Ainv
            self.A_ib[e] = es.A_ib
            self.A_bi[e] = es.A_bi
            self.A_bb[e] = es.A_bb
            S_e = es.A_bb - es.A_bi @ Ainv @ es.A_ib
            idx = dofmap.elem_scatter[e]
            rows.append(np.repeat(idx, ntr))
            cols.append(np.tile(idx, ntr))
            vals.append(S_e.ravel())

            b = es.blocks
            self.detJ[e] = b.detJ
            mat = b.material
            self.Amat[e] = mat.A
            self.alpha[e] = mat.alpha
            self.s0[e] = mat.s0
            self.rho11[e] = mat.rho11
            self.rho12[e] = mat.rho12
            self.rho22[e] = np.diag(mat.rho22)
            self.drag[e] = np.diag(mat.drag)
            self.tau_s[e] = b.tau_s
            self.tau_f[e] = b.tau_f
            self.face_len[e] = b.amap.face_lengths
            for lf in range(3):
                self.face_flip[e, lf] = face_orientation(mesh, e, lf)
            self.phys_quad[e] = b.amap.to_physical(self.tab.vol.points)
        if count != nE:
            raise ValueError(f"expected {nE} element systems, got {count}")

        self.S = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(dofmap.ndof, dofmap.ndof),
        )
        free = dofmap.free
        self.S_free = self.S[free][:, free].tocsc()
        self.S_free_ess = self.S[free][:, dofmap.essential].tocsc()
        self.factor_count = 0
        self._lu = None
        if len(free):
            try:
                self._lu = spla.splu(self.S_free)
            except RuntimeError as exc:
                raise RuntimeError(
                    "global trace factorization failed; check the stabilization "
                    f"assumptions and density coercivity ({exc})"
                ) from exc
            self.factor_count = 1

    # -- right-hand-side machinery -------------------------------------

    def mass_apply(self, U):
        """Block mass matrix times interior coefficients, elementwise."""
        lay = self.lay
        nk, nk1 = lay.nk, lay.nk1
        out = np.zeros_like(U)
        sig = U[:, : 3 * nk].reshape(-1, 3, nk)
        p = U[:, lay.p_slice]
        Am = np.einsum("ecd,d->ec", self.Amat, VOIGT_ID)
        out_sig = np.einsum("ecd,edi->eci", self.Amat, sig)
        out_sig += (self.alpha[:, None] * Am)[:, :, None] * p[:, None, :]
        out[:, : 3 * nk] = (self.detJ[:, None, None] * out_sig).reshape(-1, 3 * nk)
        tr_a = np.einsum("ec,c->e", Am, VOIGT_ID)
        coef = (self.s0 + self.alpha**2 * tr_a) * self.detJ
        out[:, lay.p_slice] = coef[:, None] * p + self.detJ[:, None] * self.alpha[:, None] * np.einsum(
            "ec,eci->ei", Am, sig
        )
        for d in range(2):
            vs = U[:, lay.vs_slice(d)]
            vf = U[:, lay.vf_slice(d)]
            out[:, lay.vs_slice(d)] = self.detJ[:, None] * self.rho11[:, None] * vs
            out[:, lay.vs_slice(d)][:, :nk] += self.detJ[:, None] * self.rho12[:, None] * vf
            out[:, lay.vf_slice(d)] = self.detJ[:, None] * (
                self.rho12[:, None] * vs[:, :nk] + self.rho22[:, d : d + 1] * vf
            )
        return out

    def project_sources(self, sources, t):
        """Quadrature projection of (f, g, f_f)(t) onto the test spaces."""
        if sources is None:
            return None
        f = getattr(sources, "f", None)
        g = getattr(sources, "g", None)
        ff = getattr(sources, "f_f", None)
        if f is None and g is None and ff is None:
            return None
        lay = self.lay
        w = self.tab.vol.weights
        X, Y = self.phys_quad[:, :, 0], self.phys_quad[:, :, 1]
        F = np.zeros((self.mesh.n_triangles, lay.n_interior))
        if f is not None:
            vals = np.asarray(f(X, Y, t))
            proj = np.einsum("q,deq,qi->dei", w, vals, self.tab.Vk1)
            for d in range(2):
                F[:, lay.vs_slice(d)] = self.detJ[:, None] * proj[d]
        if ff is not None:
            vals = np.asarray(ff(X, Y, t))
            proj = np.einsum("q,deq,qi->dei", w, vals, self.tab.Vk)
            for d in range(2):
                F[:, lay.vf_slice(d)] = self.detJ[:, None] * proj[d]
        if g is not None:
            vals = np.asarray(g(X, Y, t))
            F[:, lay.p_slice] = self.detJ[:, None] * np.einsum("q,eq,qi->ei", w, vals, self.tab.Vk)
        return F

    def _essential_values(self, sources, t):
        if sources is None:
            return np.zeros(self.dofmap.ndof)
        return project_boundary_values(
            self.mesh,
            self.k,
            self.dofmap,
            getattr(sources, "vs_D", None),
            getattr(sources, "p_D", None),
            t,
        )

    def solve_step(self, state, sources=None, bc_values_next=None):
        """Advance one step; exact one-step map of the midpoint scheme.

        ``bc_values_next`` overrides the essential trace values at t+dt
        (defaults to projecting the Dirichlet data carried by ``sources``).
        """
        dt = self.dt
        dof = self.dofmap
        F = self.project_sources(sources, state.t + 0.5 * dt)
        r = self.mass_apply(state.u)
        if F is not None:
            r += 0.5 * dt * F

        y = np.einsum("eij,ej->ei", self.Ainv, r)
        rhs_global = np.zeros(dof.ndof)
        np.add.at(rhs_global, dof.elem_scatter.ravel(), -np.einsum("eij,ej->ei", self.A_bi, y).ravel())

        lam_m = np.zeros(dof.ndof)
        if len(dof.essential):
            if bc_values_next is None:
                ess_next = self._essential_values(sources, state.t + dt)[dof.essential]
            else:
                ess_next = np.asarray(bc_values_next)[dof.essential]
            lam_m[dof.essential] = 0.5 * (state.traces[dof.essential] + ess_next)
        if len(dof.free):
            rhs_free = rhs_global[dof.free]
            if len(dof.essential):
                rhs_free = rhs_free - self.S_free_ess @ lam_m[dof.essential]
            lam_m[dof.free] = self._lu.solve(rhs_free)
        lam_elem = lam_m[dof.elem_scatter]
        u_m = y - np.einsum("eij,eja,ea->ei", self.Ainv, self.A_ib, lam_elem)

        return State(state.t + dt, 2.0 * u_m - state.u, 2.0 * lam_m - state.traces)

    def export_matrix(self, path):
        """Write the factorized global trace matrix in Matrix Market format."""
        from scipy.io import mmwrite

        mmwrite(path, self.S_free)


def condense(elements, dofmap):
    """Schur-condense the element systems onto the global trace unknowns."""
    return CondensedSystem(elements, dofmap)


class MonolithicSystem:
    """Uncondensed one-step system over all interior and free trace unknowns.

    Solves the same step as the condensed path but in level-(i+1) unknowns
    through one big sparse factorization; used as the condensation oracle on
    small meshes.
    """

    def __init__(self, elements, dofmap):
        self.dofmap = dofmap
        self.elements = list(elements)
        self.elements.sort(key=lambda es: es.elem)
        mesh = dofmap.mesh
        self.mesh = mesh
        self.k = dofmap.k
        self.lay = layout(self.k)
        self.tab = ref_tables(self.k)
        self.dt = self.elements[0].dt
        ni = self.lay.n_interior
        nE = mesh.n_triangles
        self.n_interior_total = nE * ni
        n_all = self.n_interior_total + dofmap.ndof

        rows, cols, vals = [], [], []
        for es in self.elements:
            e = es.elem
            oi = e * ni
            idx_i = np.arange(oi, oi + ni)
            idx_b = self.n_interior_total + dofmap.elem_scatter[e]
            for Ablk, ridx, cidx in (
                (es.A_ii, idx_i, idx_i),
                (es.A_ib, idx_i, idx_b),
                (es.A_bi, idx_b, idx_i),
                (es.A_bb, idx_b, idx_b),
            ):
                rows.append(np.repeat(ridx, len(cidx)))
                cols.append(np.tile(cidx, len(ridx)))
                vals.append(Ablk.ravel())
        A_full = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_all, n_all),
        )
        keep = np.concatenate([np.arange(self.n_interior_total), self.n_interior_total + dofmap.free])
        self._ess_cols = self.n_interior_total + dofmap.essential
        self.A_full = A_full
        self.matrix = A_full[keep][:, keep].tocsc()
        self._keep = keep
        self._A_keep_ess = A_full[keep][:, self._ess_cols].tocsc()
        self._lu = spla.splu(self.matrix)

    def solve_step(self, state, sources=None, bc_values_next=None):
        dof = self.dofmap
        ni = self.lay.n_interior
        t_mid = state.t + 0.5 * self.dt

        rhs = np.zeros(self.n_interior_total + dof.ndof)
        for es in self.elements:
            e = es.elem
            f_mid = _element_source_load(es.blocks, self.tab, self.lay, sources, t_mid)
            r_i, r_b = es.rhs(state.u[e], state.traces[dof.elem_scatter[e]], f_mid)
            rhs[e * ni : (e + 1) * ni] += r_i
            np.add.at(rhs, self.n_interior_total + dof.elem_scatter[e], r_b)

        lam_next = np.zeros(dof.ndof)
        if len(dof.essential):
            if bc_values_next is None:
                ess = project_boundary_values(
                    self.mesh,
                    self.k,
                    dof,
                    getattr(sources, "vs_D", None) if sources else None,
                    getattr(sources, "p_D", None) if sources else None,
                    state.t + self.dt,
                )[dof.essential]
            else:
                ess = np.asarray(bc_values_next)[dof.essential]
            lam_next[dof.essential] = ess
        b = rhs[self._keep]
        if len(dof.essential):
            b = b - self._A_keep_ess @ lam_next[dof.essential]
        x = self._lu.solve(b)
        u = x[: self.n_interior_total].reshape(-1, ni)
        lam_next[dof.free] = x[self.n_interior_total :]
        return State(state.t + self.dt, u, lam_next)


def _element_source_load(blocks, tab, lay, sources, t):
    if sources is None:
        return None
    f = getattr(sources, "f", None)
    g = getattr(sources, "g", None)
    ff = getattr(sources, "f_f", None)
    if f is None and g is None and ff is None:
        return None
    pts = blocks.amap.to_physical(tab.vol.points)
    w = tab.vol.weights
    out = np.zeros(lay.n_interior)
    if f is not None:
        vals = np.asarray(f(pts[:, 0], pts[:, 1], t))
        for d in range(2):
            out[lay.vs_slice(d)] = blocks.detJ * (tab.Vk1.T @ (w * vals[d]))
    if ff is not None:
        vals = np.asarray(ff(pts[:, 0], pts[:, 1], t))
        for d in range(2):
            out[lay.vf_slice(d)] = blocks.detJ * (tab.Vk.T @ (w * vals[d]))
    if g is not None:
        vals = np.asarray(g(pts[:, 0], pts[:, 1], t))
        out[lay.p_slice] = blocks.detJ * (tab.Vk.T @ (w * vals))
    return out


def assemble_monolithic(elements, dofmap):
    """One sparse system over all interior plus free trace unknowns."""
    return MonolithicSystem(elements, dofmap)
