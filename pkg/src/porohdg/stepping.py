"""Crank-Nicolson time stepping with compatible initial data.

Initial data defaults to the two static HDG solves that make the algebraic
trace equations hold exactly at t = 0 (fluid flux continuity and traction
continuity); an elementwise L2 interpolation is available as a fallback that
does not satisfy them.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fe
from .local import face_orientation, layout, local_matrices, ref_tables
from .system import (
    CondensedSystem,
    State,
    build_dofmap,
    condense,
    element_systems,
    project_boundary_values,
)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_i = i*dt, i = 0..N."""

    dt: float
    N: int

    def __post_init__(self):
        if self.dt <= 0.0 or self.N < 0:
            raise ValueError(f"invalid time grid (dt={self.dt:g}, N={self.N})")

    @property
    def tfinal(self):
        return self.dt * self.N

    def times(self):
        return self.dt * np.arange(self.N + 1)


@dataclass
class SourceSpec:
    """Space-time source and boundary data; every entry may be None (zero).

    Vector callables map (x, y, t) to an array of shape (2,) + x.shape;
    scalar callables map to x.shape.
    """

    f: object = None
    g: object = None
    f_f: object = None
    vs_D: object = None
    p_D: object = None

    @property
    def is_zero(self):
        return self.f is None and self.g is None and self.f_f is None


def midpoint_ops(g_i, g_ip1, dt):
    """Difference quotient and level average of two consecutive values."""
    if dt <= 0.0:
        raise ValueError(f"time step must be positive, got {dt:g}")
    return (g_ip1 - g_i) / dt, 0.5 * (g_i + g_ip1)


# ---------------------------------------------------------------------------
# static HDG solves for compatible initial data


@dataclass
class FluidInitData:
    """Closures (x, y) for the fluid initial fields."""

    v_f: object
    div_v_f: object
    p: object


@dataclass
class SolidInitData:
    """Closures (x, y) for the solid initial fields (sigma in Voigt form)."""

    sigma: object
    div_sigma: object
    v_s: object


def _phys_grad_k(tab, Jinv):
    return np.einsum("ba,qib->qia", Jinv, tab.Gk)


def init_fluid(mesh, matfield, k, stab, data):
    """Static HDG solve for (v_f, p, phat) at t = 0.

    The returned coefficients satisfy the discrete flux-continuity
    constraint exactly; it is one of the solved equations.
    """
    lay = layout(k)
    tab = ref_tables(k)
    nk, ke = lay.nk, lay.ke
    ni = 3 * nk  # v_f (2 nk) + p (nk)
    nE = mesh.n_triangles
    ndof = ke * mesh.n_faces

    ess = np.zeros(ndof, dtype=bool)
    for f in mesh.boundary_faces():
        if mesh.tag_flow[f] == "p":
            ess[ke * f : ke * (f + 1)] = True
    free = np.where(~ess)[0]

    edge = tab.edge
    E = fe.edge_basis(k).eval(edge.points)
    rows, cols, vals = [], [], []
    rhs = np.zeros(nE * ni + ndof)
    lam = np.zeros(ndof)

    for f in mesh.boundary_faces():
        if mesh.tag_flow[f] != "p":
            continue
        a, b = mesh.vertices[mesh.faces[f, 0]], mesh.vertices[mesh.faces[f, 1]]
        pts = a[None, :] + edge.points[:, None] * (b - a)[None, :]
        lam[ke * f : ke * (f + 1)] = E.T @ (edge.weights * np.asarray(data.p(pts[:, 0], pts[:, 1])))

    for e in range(nE):
        blk = local_matrices(mesh, e, matfield.params_of(e), k, stab)
        Tvfn = sum(blk.T_vfn)
        Sfpp = sum(blk.S_f_pp)
        psl_g = blk.layout.p_slice
        fsl_g = slice(blk.layout.o_vf, blk.layout.o_vf + 2 * nk)
        H = Tvfn - blk.K[psl_g, fsl_g]  # (v_f, grad q) block

        A = np.zeros((ni + 3 * ke, ni + 3 * ke))
        vf, p, ph = slice(0, 2 * nk), slice(2 * nk, 3 * nk), slice(3 * nk, 3 * nk + 3 * ke)
        A[vf, vf] = blk.detJ * np.eye(2 * nk)
        A[vf, p] = -blk.D_grad_p
        A[p, vf] = -H + Tvfn
        A[p, p] = Sfpp
        for lf in range(3):
            hph = slice(3 * nk + lf * ke, 3 * nk + (lf + 1) * ke)
            A[vf, hph] += blk.T_vfn_hat[lf].T
            A[p, hph] -= blk.S_f_phat[lf]
            A[hph, vf] += blk.T_vfn_hat[lf]
            A[hph, p] += blk.S_f_phat[lf].T
            A[hph, hph] -= blk.S_f_hh[lf]

        # right side: L11 over w_f, L12 over q
        X = blk.amap.to_physical(tab.vol.points)
        w = tab.vol.weights
        r = np.zeros(ni + 3 * ke)
        vfv = np.asarray(data.v_f(X[:, 0], X[:, 1]))
        pv = np.asarray(data.p(X[:, 0], X[:, 1]))
        Gp = _phys_grad_k(tab, blk.amap.jac_inv)
        for d in range(2):
            r[d * nk : (d + 1) * nk] = blk.detJ * (tab.Vk.T @ (w * vfv[d]))
            r[d * nk : (d + 1) * nk] -= blk.detJ * (Gp[:, :, d].T @ (w * pv))
        r[p] = blk.detJ * (tab.Vk.T @ (w * np.asarray(data.div_v_f(X[:, 0], X[:, 1]))))
        for lf in range(3):
            key = (lf, face_orientation(mesh, e, lf))
            n = blk.amap.face_normals[lf]
            L = blk.amap.face_lengths[lf]
            aF, bF = fe.LOCAL_FACE_VERTICES[lf]
            A0, B0 = fe.REF_VERTICES[aF], fe.REF_VERTICES[bF]
            s = edge.points if key[1] == 0 else 1.0 - edge.points
            ref = A0[None, :] + s[:, None] * (B0 - A0)[None, :]
            xy = blk.amap.to_physical(ref)
            pF = np.asarray(data.p(xy[:, 0], xy[:, 1]))
            tk = tab.trace_k[key]
            for d in range(2):
                r[d * nk : (d + 1) * nk] += n[d] * L * (tk.T @ (edge.weights * pF))

        gi = np.arange(e * ni, (e + 1) * ni)
        gb = nE * ni + np.concatenate(
            [np.arange(ke * mesh.elem_faces[e, lf], ke * (mesh.elem_faces[e, lf] + 1)) for lf in range(3)]
        )
        gidx = np.concatenate([gi, gb])
        rows.append(np.repeat(gidx, len(gidx)))
        cols.append(np.tile(gidx, len(gidx)))
        vals.append(A.ravel())
        np.add.at(rhs, gidx, r)

    A_full = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nE * ni + ndof, nE * ni + ndof),
    )
    keep = np.concatenate([np.arange(nE * ni), nE * ni + free])
    ess_cols = nE * ni + np.where(ess)[0]
    b = rhs[keep] - A_full[keep][:, ess_cols] @ lam[ess]
    try:
        x = spla.splu(A_full[keep][:, keep].tocsc()).solve(b)
    except RuntimeError as exc:
        raise RuntimeError(f"fluid initial-data solve failed: {exc}") from exc
    U = x[: nE * ni].reshape(nE, ni)
    lam[free] = x[nE * ni :]
    return U[:, :2 * nk], U[:, 2 * nk :], lam


def init_solid(mesh, matfield, k, stab, data):
    """Static HDG solve for (sigma, v_s, vhat_s) at t = 0.

    The discrete traction-continuity constraint holds exactly on output.
    """
    lay = layout(k)
    tab = ref_tables(k)
    nk, nk1, ke = lay.nk, lay.nk1, lay.ke
    ni = 3 * nk + 2 * nk1
    nE = mesh.n_triangles
    ndof = 2 * ke * mesh.n_faces

    ess = np.zeros(ndof, dtype=bool)
    for f in mesh.boundary_faces():
        if mesh.tag_elastic[f] == "d":
            ess[2 * ke * f : 2 * ke * (f + 1)] = True
    free = np.where(~ess)[0]

    edge = tab.edge
    E = fe.edge_basis(k).eval(edge.points)
    rows, cols, vals = [], [], []
    rhs = np.zeros(nE * ni + ndof)
    lam = np.zeros(ndof)

    for f in mesh.boundary_faces():
        if mesh.tag_elastic[f] != "d":
            continue
        a, b = mesh.vertices[mesh.faces[f, 0]], mesh.vertices[mesh.faces[f, 1]]
        pts = a[None, :] + edge.points[:, None] * (b - a)[None, :]
        vv = np.asarray(data.v_s(pts[:, 0], pts[:, 1]))
        for d in range(2):
            lam[2 * ke * f + d * ke : 2 * ke * f + (d + 1) * ke] = E.T @ (edge.weights * vv[d])

    for e in range(nE):
        mat = matfield.params_of(e)
        blk = local_matrices(mesh, e, mat, k, stab)
        Tsnvs = sum(blk.T_sn_vs)
        Svv = sum(blk.S_s_vv)
        ssl_g = slice(0, 3 * nk)
        vsl_g = slice(lay.o_vs, lay.o_vs + 2 * nk1)
        E_grad = blk.K[vsl_g, ssl_g] + Tsnvs

        A = np.zeros((ni + 6 * ke, ni + 6 * ke))
        sg, vs = slice(0, 3 * nk), slice(3 * nk, ni)
        A[sg, sg] = np.kron(mat.A, blk.detJ * np.eye(nk))
        A[sg, vs] = blk.D_div_sigma
        A[vs, sg] = -E_grad + Tsnvs
        A[vs, vs] = -Svv
        for lf in range(3):
            hv = slice(ni + lf * 2 * ke, ni + (lf + 1) * 2 * ke)
            A[sg, hv] -= blk.T_sn_hat[lf].T
            A[vs, hv] += blk.S_s_vhat[lf]
            A[hv, sg] += blk.T_sn_hat[lf]
            A[hv, vs] -= blk.S_s_vhat[lf].T
            A[hv, hv] += blk.S_s_hh[lf]

        X = blk.amap.to_physical(tab.vol.points)
        w = tab.vol.weights
        r = np.zeros(ni + 6 * ke)
        sv = np.asarray(data.sigma(X[:, 0], X[:, 1]))
        As = np.einsum("cd,dq->cq", mat.A, sv)
        for c in range(3):
            r[c * nk : (c + 1) * nk] = blk.detJ * (tab.Vk.T @ (w * As[c]))
        vsv = np.asarray(data.v_s(X[:, 0], X[:, 1]))
        Gp = _phys_grad_k(tab, blk.amap.jac_inv)
        divmap = {0: ((0, 0),), 1: ((1, 1),), 2: ((0, 1), (1, 0))}
        for c, pairs in divmap.items():
            for d, a in pairs:
                r[c * nk : (c + 1) * nk] += blk.detJ * (Gp[:, :, a].T @ (w * vsv[d]))
        dsv = np.asarray(data.div_sigma(X[:, 0], X[:, 1]))
        for d in range(2):
            r[3 * nk + d * nk1 : 3 * nk + (d + 1) * nk1] = blk.detJ * (tab.Vk1.T @ (w * dsv[d]))
        for lf in range(3):
            key = (lf, face_orientation(mesh, e, lf))
            n = blk.amap.face_normals[lf]
            L = blk.amap.face_lengths[lf]
            aF, bF = fe.LOCAL_FACE_VERTICES[lf]
            A0, B0 = fe.REF_VERTICES[aF], fe.REF_VERTICES[bF]
            s = edge.points if key[1] == 0 else 1.0 - edge.points
            ref = A0[None, :] + s[:, None] * (B0 - A0)[None, :]
            xy = blk.amap.to_physical(ref)
            vF = np.asarray(data.v_s(xy[:, 0], xy[:, 1]))
            tk = tab.trace_k[key]
            Nmat = np.array([[n[0], 0.0], [0.0, n[1]], [n[1], n[0]]])
            for c in range(3):
                for d in range(2):
                    if Nmat[c, d] != 0.0:
                        r[c * nk : (c + 1) * nk] -= Nmat[c, d] * L * (tk.T @ (edge.weights * vF[d]))

        gi = np.arange(e * ni, (e + 1) * ni)
        gb = nE * ni + np.concatenate(
            [
                np.arange(2 * ke * mesh.elem_faces[e, lf], 2 * ke * (mesh.elem_faces[e, lf] + 1))
                for lf in range(3)
            ]
        )
        gidx = np.concatenate([gi, gb])
        rows.append(np.repeat(gidx, len(gidx)))
        cols.append(np.tile(gidx, len(gidx)))
        vals.append(A.ravel())
        np.add.at(rhs, gidx, r)

    A_full = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nE * ni + ndof, nE * ni + ndof),
    )
    keep = np.concatenate([np.arange(nE * ni), nE * ni + free])
    ess_cols = nE * ni + np.where(ess)[0]
    b = rhs[keep] - A_full[keep][:, ess_cols] @ lam[ess]
    try:
        x = spla.splu(A_full[keep][:, keep].tocsc()).solve(b)
    except RuntimeError as exc:
        raise RuntimeError(f"solid initial-data solve failed: {exc}") from exc
    U = x[: nE * ni].reshape(nE, ni)
    lam[free] = x[nE * ni :]
    return U[:, : 3 * nk], U[:, 3 * nk :], lam


def l2_interpolate(sys, fn, field):
    """Orthonormal elementwise projection of a closure onto one field."""
    lay = sys.lay
    tab = sys.tab
    w = tab.vol.weights
    X, Y = sys.phys_quad[:, :, 0], sys.phys_quad[:, :, 1]
    vals = np.asarray(fn(X, Y))
    if field == "sigma":
        return np.einsum("q,ceq,qi->eci", w, vals, tab.Vk).reshape(len(X), -1)
    if field == "vs":
        return np.einsum("q,deq,qi->edi", w, vals, tab.Vk1).reshape(len(X), -1)
    if field == "vf":
        return np.einsum("q,deq,qi->edi", w, vals, tab.Vk).reshape(len(X), -1)
    if field == "p":
        return np.einsum("q,eq,qi->ei", w, vals, tab.Vk)
    raise ValueError(f"unknown field {field!r}")


def make_initial_state(sys, mesh, matfield, stab, solid_data=None, fluid_data=None, method="elliptic"):
    """Assemble the t = 0 state.

    ``method='elliptic'`` uses the two static HDG solves (constraint-exact);
    ``'l2'`` is plain elementwise interpolation with facewise trace
    projections, which does not satisfy the trace constraints.
    """
    lay = sys.lay
    k = sys.k
    dof = sys.dofmap
    nE = mesh.n_triangles
    U = np.zeros((nE, lay.n_interior))
    lam = np.zeros(dof.ndof)
    ke = lay.ke

    if method == "elliptic":
        if solid_data is not None:
            sg, vs, vhat = init_solid(mesh, matfield, k, stab, solid_data)
            U[:, : 3 * lay.nk] = sg
            U[:, lay.o_vs : lay.o_vs + 2 * lay.nk1] = vs
            for f in range(mesh.n_faces):
                lam[dof.face_slice(f, "vhat")] = vhat[2 * ke * f : 2 * ke * (f + 1)]
        if fluid_data is not None:
            vf, p, phat = init_fluid(mesh, matfield, k, stab, fluid_data)
            U[:, lay.o_vf : lay.o_vf + 2 * lay.nk] = vf
            U[:, lay.p_slice] = p
            for f in range(mesh.n_faces):
                lam[dof.face_slice(f, "phat")] = phat[ke * f : ke * (f + 1)]
    elif method == "l2":
        edge = sys.tab.edge
        E = fe.edge_basis(k).eval(edge.points)
        if solid_data is not None:
            U[:, : 3 * lay.nk] = l2_interpolate(sys, solid_data.sigma, "sigma")
            U[:, lay.o_vs : lay.o_vs + 2 * lay.nk1] = l2_interpolate(sys, solid_data.v_s, "vs")
        if fluid_data is not None:
            U[:, lay.o_vf : lay.o_vf + 2 * lay.nk] = l2_interpolate(sys, fluid_data.v_f, "vf")
            U[:, lay.p_slice] = l2_interpolate(sys, fluid_data.p, "p")
        for f in range(mesh.n_faces):
            a, b = mesh.vertices[mesh.faces[f, 0]], mesh.vertices[mesh.faces[f, 1]]
            pts = a[None, :] + edge.points[:, None] * (b - a)[None, :]
            if solid_data is not None:
                vv = np.asarray(solid_data.v_s(pts[:, 0], pts[:, 1]))
                sl = dof.face_slice(f, "vhat")
                lam[sl] = np.concatenate([E.T @ (edge.weights * vv[d]) for d in range(2)])
            if fluid_data is not None:
                pv = np.asarray(fluid_data.p(pts[:, 0], pts[:, 1]))
                lam[dof.face_slice(f, "phat")] = E.T @ (edge.weights * pv)
    else:
        raise ValueError(f"unknown initial-data method {method!r}")
    return State(0.0, U, lam)


# ---------------------------------------------------------------------------
# energy bookkeeping


def state_energy(sys, state):
    """Squared energy norm of one level: stress/pressure, storage, kinetic."""
    lay = sys.lay
    nk = lay.nk
    sig = state.u[:, : 3 * nk].reshape(-1, 3, nk)
    p = state.u[:, lay.p_slice]
    t = sig.copy()
    t[:, 0, :] += sys.alpha[:, None] * p
    t[:, 1, :] += sys.alpha[:, None] * p
    tot = np.einsum("e,eci,ecd,edi->", sys.detJ, t, sys.Amat, t)
    tot += np.einsum("e,ei,ei->", sys.detJ * sys.s0, p, p)
    for d in range(2):
        vs = state.u[:, lay.vs_slice(d)]
        vf = state.u[:, lay.vf_slice(d)]
        tot += np.einsum("e,ei,ei->", sys.detJ * sys.rho11, vs, vs)
        tot += 2.0 * np.einsum("e,ei,ei->", sys.detJ * sys.rho12, vs[:, :nk], vf)
        tot += np.einsum("e,ei,ei->", sys.detJ * sys.rho22[:, d], vf, vf)
    return float(tot)


def midpoint_dissipation(sys, state_i, state_ip1):
    """Dissipation rate Z_i^2 of one step: drag plus stabilization jumps."""
    lay = sys.lay
    tab = sys.tab
    ke = lay.ke
    u = 0.5 * (state_i.u + state_ip1.u)
    lam = 0.5 * (state_i.traces + state_ip1.traces)
    tot = 0.0
    for d in range(2):
        vf = u[:, lay.vf_slice(d)]
        tot += np.einsum("e,ei,ei->", sys.detJ * sys.drag[:, d], vf, vf)

    lam_e = lam[sys.dofmap.elem_scatter]  # (nE, 9 ke)
    for lf in range(3):
        for flip in (0, 1):
            sel = np.where(sys.face_flip[:, lf] == flip)[0]
            if not len(sel):
                continue
            P = tab.Pmat[(lf, flip)]
            Ck = tab.Cf[(lf, flip)].T
            Lw = sys.face_len[sel, lf]
            ts = sys.tau_s[sel, lf]
            tf = sys.tau_f[sel, lf]
            for d in range(2):
                proj = u[sel][:, lay.vs_slice(d)] @ P.T
                vh = lam_e[sel][:, lay.trace_vhat(lf, d)]
                tot += np.sum(ts * Lw * np.sum((proj - vh) ** 2, axis=1))
            ptr = u[sel][:, lay.p_slice] @ Ck.T
            ph = lam_e[sel][:, lay.trace_phat(lf)]
            tot += np.sum(tf * Lw * np.sum((ptr - ph) ** 2, axis=1))
    return float(tot)


def field_l2_norms(sys, state):
    """Coefficientwise L2 norms (sigma with the tensor shear weight)."""
    lay = sys.lay
    nk = lay.nk
    sig = state.u[:, : 3 * nk].reshape(-1, 3, nk)
    wts = np.array([1.0, 1.0, 2.0])
    n_sig = np.einsum("e,c,eci,eci->", sys.detJ, wts, sig, sig)
    n_vs = sum(
        np.einsum("e,ei,ei->", sys.detJ, state.u[:, lay.vs_slice(d)], state.u[:, lay.vs_slice(d)])
        for d in range(2)
    )
    n_vf = sum(
        np.einsum("e,ei,ei->", sys.detJ, state.u[:, lay.vf_slice(d)], state.u[:, lay.vf_slice(d)])
        for d in range(2)
    )
    p = state.u[:, lay.p_slice]
    n_p = np.einsum("e,ei,ei->", sys.detJ, p, p)
    return dict(
        sigma=float(np.sqrt(n_sig)), vs=float(np.sqrt(n_vs)), vf=float(np.sqrt(n_vf)), p=float(np.sqrt(n_p))
    )


# ---------------------------------------------------------------------------
# driver


@dataclass
class Trajectory:
    """Run results: diagnostics series, snapshots, final state."""

    times: np.ndarray
    X2: np.ndarray
    Y2: np.ndarray
    norms: dict
    snapshots: list
    final: State
    system: CondensedSystem

    def energy_series(self):
        return np.column_stack([self.times, self.X2, self.Y2])

    def write_diagnostics(self, path):
        """CSV with columns t, X2, Y2 and the per-field L2 norms."""
        cols = ["t", "X2", "Y2", "l2_sigma", "l2_vs", "l2_vf", "l2_p"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(len(self.times)):
                row = [
                    self.times[i],
                    self.X2[i],
                    self.Y2[i],
                    self.norms["sigma"][i],
                    self.norms["vs"][i],
                    self.norms["vf"][i],
                    self.norms["p"][i],
                ]
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


def advance(state, sys, sources=None):
    """One Crank-Nicolson step (sources evaluated at the midpoint time)."""
    return sys.solve_step(state, sources)


def run_problem(
    mesh,
    matfield,
    k,
    stab,
    grid,
    sources=None,
    solid_data=None,
    fluid_data=None,
    init_method="elliptic",
    snapshot_every=None,
    progress=None,
):
    """Factorize once, build compatible initial data, advance N steps."""
    dof = build_dofmap(mesh, k)
    sys = condense(element_systems(mesh, matfield, k, stab, grid.dt), dof)
    state = make_initial_state(sys, mesh, matfield, stab, solid_data, fluid_data, init_method)
    if sources is not None and (sources.vs_D is not None or sources.p_D is not None):
        vals = project_boundary_values(mesh, k, dof, sources.vs_D, sources.p_D, 0.0)
        state.traces[dof.essential] = vals[dof.essential]

    times = [0.0]
    X2 = [state_energy(sys, state)]
    Y2 = [0.0]
    norms = {key: [val] for key, val in field_l2_norms(sys, state).items()}
    snapshots = [(0.0, state.copy())] if snapshot_every is not None else []

    y_acc = 0.0
    for i in range(grid.N):
        new = sys.solve_step(state, sources)
        y_acc += grid.dt * midpoint_dissipation(sys, state, new)
        state = new
        times.append(state.t)
        X2.append(state_energy(sys, state))
        Y2.append(y_acc)
        for key, val in field_l2_norms(sys, state).items():
            norms[key].append(val)
        if snapshot_every is not None and ((i + 1) % snapshot_every == 0 or i + 1 == grid.N):
            snapshots.append((state.t, state.copy()))
        if progress is not None:
            progress(i + 1, grid.N, state)
        if not np.all(np.isfinite(state.u)):
            raise RuntimeError(f"non-finite state at step {i + 1} (t = {state.t:g})")

    return Trajectory(
        times=np.array(times),
        X2=np.array(X2),
        Y2=np.array(Y2),
        norms={key: np.array(val) for key, val in norms.items()},
        snapshots=snapshots,
        final=state,
        system=sys,
    )


def run(config):
    """Execute a parsed configuration end to end (see porohdg.config)."""
    from .config import expand_problem

    return expand_problem(config).execute()
