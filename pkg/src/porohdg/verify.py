"""Manufactured solutions, error norms, convergence orders, oracles.

The reference manufactured solution lives on the unit square with
homogeneous Dirichlet data on both boundary splittings:

    u_s = (sin(pi x) sin(pi y), x y (x-1)(y-1)) sin(pi t),
    p   = x (1-x) sin^2(pi y) (2 + cos(pi t)).

The seepage velocity is chosen in closed form as v_f = -grad p, and the
residual of the fluid momentum balance is carried as an auxiliary source so
that all four balance laws hold identically; every derivative below is
hand-derived and checked against finite differences in the test suite.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import fe
from .materials import MaterialField, MaterialParams, from_scalars, isotropic_stiffness
from .local import layout, ref_tables, stabilization_defaults
from .mesh import build_structured_rect
from .stepping import (
    FluidInitData,
    SolidInitData,
    SourceSpec,
    TimeGrid,
    midpoint_dissipation,
    run_problem,
    state_energy,
)
from .system import State, assemble_monolithic, build_dofmap, condense, element_systems

FIELDS = ("sigma", "vs", "vf", "p")


@dataclass
class ExactSolution:
    """Closed-form fields with the derivative closures the solver consumes.

    Vector/tensor closures return component-first arrays; sigma is in Voigt
    components (xx, yy, xy).
    """

    material: MaterialParams
    u_s: object
    v_s: object
    dv_s_dt: object
    div_v_s: object
    sigma: object
    dsigma_dt: object
    div_sigma: object
    p: object
    dp_dt: object
    grad_p: object
    v_f: object
    dv_f_dt: object
    div_v_f: object
    f: object
    g: object
    f_f: object

    def source_spec(self):
        return SourceSpec(
            f=self.f,
            g=self.g,
            f_f=self.f_f,
            vs_D=lambda x, y, t: self.v_s(x, y, t),
            p_D=lambda x, y, t: self.p(x, y, t),
        )

    def solid_init_data(self, t=0.0):
        return SolidInitData(
            sigma=lambda x, y: self.sigma(x, y, t),
            div_sigma=lambda x, y: self.div_sigma(x, y, t),
            v_s=lambda x, y: self.v_s(x, y, t),
        )

    def fluid_init_data(self, t=0.0):
        return FluidInitData(
            v_f=lambda x, y: self.v_f(x, y, t),
            div_v_f=lambda x, y: self.div_v_f(x, y, t),
            p=lambda x, y: self.p(x, y, t),
        )

    def field(self, name):
        return {"sigma": self.sigma, "vs": self.v_s, "vf": self.v_f, "p": self.p}[name]

    def residuals(self, x, y, t):
        """Pointwise residuals of the four balance laws with these sources."""
        A = self.material.A
        al = self.material.alpha
        m = np.array([1.0, 1.0, 0.0])
        ds = self.dsigma_dt(x, y, t)
        dp = self.dp_dt(x, y, t)
        work = ds + al * dp * m[:, None]
        a_work = np.einsum("cd,d...->c...", A, work)
        # constitutive law: A(sigma_t + alpha p_t I) = eps(v_s); compare via
        # the recomputed strain rate of v_s = du_s/dt
        eps_rate = self._eps_rate(x, y, t)
        r1 = a_work - eps_rate
        dvs = self.dv_s_dt(x, y, t)
        dvf = self.dv_f_dt(x, y, t)
        r2 = self.material.rho11 * dvs + self.material.rho12 * dvf - self.div_sigma(x, y, t) - self.f(x, y, t)
        drag = self.material.drag
        vf = self.v_f(x, y, t)
        r3 = (
            self.material.rho12 * dvs
            + np.einsum("de,e...->d...", self.material.rho22, dvf)
            + np.einsum("de,e...->d...", drag, vf)
            + self.grad_p(x, y, t)
            - self.f_f(x, y, t)
        )
        tr = a_work[0] + a_work[1]
        r4 = self.material.s0 * dp + self.div_v_f(x, y, t) + al * tr - self.g(x, y, t)
        return r1, r2, r3, r4

    _eps_rate: object = None


def example1_material(E=3.0, nu=0.3):
    return from_scalars(
        C=isotropic_stiffness(E, nu),
        alpha=1.0,
        s0=1.0,
        rho11=1.0,
        rho12=1.0,
        rho22=2.0,
        eta=1.0,
        kappa=1.0,
    )


def example1_solution(E=3.0, nu=0.3):
    """Manufactured unit-square solution with all derivative closures."""
    mat = example1_material(E, nu)
    C = mat.C
    al = mat.alpha
    pi = np.pi

    def S(t):
        return np.sin(pi * t)

    def Ct(t):
        return np.cos(pi * t)

    def T2(t):
        return 2.0 + np.cos(pi * t)

    def dT2(t):
        return -pi * np.sin(pi * t)

    def u_s(x, y, t):
        return np.stack([np.sin(pi * x) * np.sin(pi * y), (x * x - x) * (y * y - y)]) * S(t)

    def v_s(x, y, t):
        return np.stack([np.sin(pi * x) * np.sin(pi * y), (x * x - x) * (y * y - y)]) * (pi * Ct(t))

    def dv_s_dt(x, y, t):
        return np.stack([np.sin(pi * x) * np.sin(pi * y), (x * x - x) * (y * y - y)]) * (
            -pi * pi * S(t)
        )

    def div_v_s(x, y, t):
        return (pi * np.cos(pi * x) * np.sin(pi * y) + (x * x - x) * (2.0 * y - 1.0)) * (pi * Ct(t))

    def eps_spatial(x, y):
        return np.stack(
            [
                pi * np.cos(pi * x) * np.sin(pi * y),
                (x * x - x) * (2.0 * y - 1.0),
                pi * np.sin(pi * x) * np.cos(pi * y) + (2.0 * x - 1.0) * (y * y - y),
            ]
        )

    def eps_rate(x, y, t):
        return eps_spatial(x, y) * (pi * Ct(t))

    def p(x, y, t):
        return (x - x * x) * np.sin(pi * y) ** 2 * T2(t)

    def dp_dt(x, y, t):
        return (x - x * x) * np.sin(pi * y) ** 2 * dT2(t)

    def grad_p(x, y, t):
        return np.stack(
            [
                (1.0 - 2.0 * x) * np.sin(pi * y) ** 2,
                (x - x * x) * pi * np.sin(2.0 * pi * y),
            ]
        ) * T2(t)

    def v_f(x, y, t):
        return -grad_p(x, y, t)

    def dv_f_dt(x, y, t):
        return np.stack(
            [
                (1.0 - 2.0 * x) * np.sin(pi * y) ** 2,
                (x - x * x) * pi * np.sin(2.0 * pi * y),
            ]
        ) * (-dT2(t))

    def div_v_f(x, y, t):
        # -laplace(p)
        return (
            2.0 * np.sin(pi * y) ** 2 - 2.0 * pi * pi * (x - x * x) * np.cos(2.0 * pi * y)
        ) * T2(t)

    def sigma(x, y, t):
        s = np.einsum("cd,d...->c...", C, eps_spatial(x, y)) * S(t)
        pv = p(x, y, t)
        s[0] = s[0] - al * pv
        s[1] = s[1] - al * pv
        return s

    def dsigma_dt(x, y, t):
        s = np.einsum("cd,d...->c...", C, eps_spatial(x, y)) * (pi * Ct(t))
        dpv = dp_dt(x, y, t)
        s[0] = s[0] - al * dpv
        s[1] = s[1] - al * dpv
        return s

    def div_sigma(x, y, t):
        c11, c12, c22, c33 = C[0, 0], C[0, 1], C[1, 1], C[2, 2]
        de1_dx = -pi * pi * np.sin(pi * x) * np.sin(pi * y)
        de1_dy = pi * pi * np.cos(pi * x) * np.cos(pi * y)
        de2_dx = (2.0 * x - 1.0) * (2.0 * y - 1.0)
        de2_dy = 2.0 * (x * x - x)
        de3_dx = pi * pi * np.cos(pi * x) * np.cos(pi * y) + 2.0 * (y * y - y)
        de3_dy = -pi * pi * np.sin(pi * x) * np.sin(pi * y) + (2.0 * x - 1.0) * (2.0 * y - 1.0)
        gp = grad_p(x, y, t)
        d1 = (c11 * de1_dx + c12 * de2_dx) * S(t) - al * gp[0] + c33 * de3_dy * S(t)
        d2 = c33 * de3_dx * S(t) + (c12 * de1_dy + c22 * de2_dy) * S(t) - al * gp[1]
        return np.stack([d1, d2])

    def f(x, y, t):
        return mat.rho11 * dv_s_dt(x, y, t) + mat.rho12 * dv_f_dt(x, y, t) - div_sigma(x, y, t)

    def g(x, y, t):
        return mat.s0 * dp_dt(x, y, t) + div_v_f(x, y, t) + al * div_v_s(x, y, t)

    def f_f(x, y, t):
        return (
            mat.rho12 * dv_s_dt(x, y, t)
            + np.einsum("de,e...->d...", mat.rho22, dv_f_dt(x, y, t))
            + np.einsum("de,e...->d...", mat.drag, v_f(x, y, t))
            + grad_p(x, y, t)
        )

    return ExactSolution(
        material=mat,
        u_s=u_s,
        v_s=v_s,
        dv_s_dt=dv_s_dt,
        div_v_s=div_v_s,
        sigma=sigma,
        dsigma_dt=dsigma_dt,
        div_sigma=div_sigma,
        p=p,
        dp_dt=dp_dt,
        grad_p=grad_p,
        v_f=v_f,
        dv_f_dt=dv_f_dt,
        div_v_f=div_v_f,
        f=f,
        g=g,
        f_f=f_f,
        _eps_rate=eps_rate,
    )


@lru_cache(maxsize=None)
def _error_tables(k, order):
    rule = fe.quadrature("triangle", order)
    return rule, fe.simplex_basis(k).eval(rule.points), fe.simplex_basis(k + 1).eval(rule.points)


def l2_error(sys, state, exact, fieldname, order=None):
    """Elementwise-quadrature L2 error of one field at the state's time.

    The stress error uses the tensor inner product (factor 2 on the shear
    component).
    """
    if fieldname not in FIELDS:
        raise ValueError(f"unknown field {fieldname!r}")
    k = sys.k
    lay = sys.lay
    if order is None:
        order = 2 * (k + 2) + 1
    rule, Vk, Vk1 = _error_tables(k, order)
    # physical points of the error rule
    mesh = sys.mesh
    verts = mesh.vertices[mesh.triangles]
    J = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]], axis=2)
    pts = verts[:, None, 0, :] + np.einsum("edc,qc->eqd", J, rule.points)
    X, Y = pts[:, :, 0], pts[:, :, 1]
    w = rule.weights
    fn = exact.field(fieldname)

    if fieldname == "sigma":
        ex = np.asarray(fn(X, Y, state.t))
        nk = lay.nk
        coefs = state.u[:, : 3 * nk].reshape(-1, 3, nk)
        disc = np.einsum("eci,qi->ceq", coefs, Vk)
        diff = disc - ex
        wts = np.array([1.0, 1.0, 2.0])
        val = np.einsum("c,ceq,ceq,q->e", wts, diff, diff, w)
    elif fieldname == "p":
        ex = np.asarray(fn(X, Y, state.t))
        disc = np.einsum("ei,qi->eq", state.u[:, lay.p_slice], Vk)
        diff = disc - ex
        val = np.einsum("eq,eq,q->e", diff, diff, w)
    else:
        ex = np.asarray(fn(X, Y, state.t))
        V = Vk1 if fieldname == "vs" else Vk
        sl = lay.vs_slice if fieldname == "vs" else lay.vf_slice
        val = 0.0
        for d in range(2):
            disc = np.einsum("ei,qi->eq", state.u[:, sl(d)], V)
            diff = disc - ex[d]
            val = val + np.einsum("eq,eq,q->e", diff, diff, w)
    return float(np.sqrt(np.sum(sys.detJ * val)))


def eoc(errors, hs):
    """Empirical orders log(e/e') / log(h/h'); one fewer entry than inputs."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need matching error/mesh-size lists of length >= 2")
    if np.any(errors <= 0.0):
        raise ValueError("errors must be positive to take logarithms")
    return list(np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:]))


def fitted_slope(errors, hs, last=3):
    """Least-squares slope of log error against log h over the finest levels."""
    e = np.asarray(errors, dtype=float)[-last:]
    h = np.asarray(hs, dtype=float)[-last:]
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


@dataclass
class ErrorReport:
    """Final-time errors, mesh sizes, and orders for the four fields."""

    k: int
    hs: list
    errors: dict
    orders: dict

    def fitted(self, fieldname, last=3):
        return fitted_slope(self.errors[fieldname], self.hs, last)

    def ascii_table(self):
        head = f"{'h':>10} " + " ".join(f"{f:>12} {'eoc':>6}" for f in FIELDS)
        lines = [f"degree k = {self.k}", head]
        for i, h in enumerate(self.hs):
            cells = []
            for f in FIELDS:
                err = self.errors[f][i]
                oc = "-" if i == 0 else f"{self.orders[f][i - 1]:6.2f}"
                cells.append(f"{err:12.3e} {oc:>6}")
            lines.append(f"{h:10.4e} " + " ".join(cells))
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("h," + ",".join(f"err_{f},eoc_{f}" for f in FIELDS) + "\n")
            for i, h in enumerate(self.hs):
                row = [repr(float(h))]
                for f in FIELDS:
                    row.append(repr(float(self.errors[f][i])))
                    row.append("" if i == 0 else repr(float(self.orders[f][i - 1])))
                fh.write(",".join(row) + "\n")


def default_dt(h, k, tfinal=1.0):
    """Step size ~ h^((k+2)/2) snapped to divide the final time.

    The squared-step temporal error then tracks the fastest spatial rate
    (the degree-(k+1) solid velocity converges at k+2).
    """
    raw = h ** ((k + 2) / 2.0)
    n = max(1, int(np.ceil(tfinal / raw)))
    return tfinal / n, n


def run_example1(k, nx, E=3.0, nu=0.3, tfinal=1.0, dt=None, c_s=1.0, c_f=1.0, init_method="elliptic"):
    """One manufactured-solution run; returns (trajectory, exact)."""
    exact = example1_solution(E, nu)
    m = build_structured_rect(0.0, 1.0, 0.0, 1.0, nx, nx)
    mf = MaterialField.uniform(m, exact.material)
    stab = stabilization_defaults(m, c_s, c_f)
    h = 1.0 / nx
    if dt is None:
        dtv, n = default_dt(h, k, tfinal)
    else:
        dtv = dt
        n = int(round(tfinal / dt))
        if abs(n * dt - tfinal) > 1e-12 * tfinal:
            raise ValueError(f"dt = {dt:g} does not divide tfinal = {tfinal:g}")
    traj = run_problem(
        m,
        mf,
        k,
        stab,
        TimeGrid(dtv, n),
        sources=exact.source_spec(),
        solid_data=exact.solid_init_data(0.0),
        fluid_data=exact.fluid_init_data(0.0),
        init_method=init_method,
    )
    return traj, exact


def convergence_study(k, hs, material=(3.0, 0.3), tfinal=1.0, progress=None):
    """Manufactured-solution error table over a list of mesh sizes."""
    if k not in (1, 2, 3):
        raise ValueError(f"convergence study supports k in 1..3, got {k}")
    E, nu = material
    errors = {f: [] for f in FIELDS}
    for h in hs:
        nx = int(round(1.0 / h))
        traj, exact = run_example1(k, nx, E, nu, tfinal)
        for f in FIELDS:
            errors[f].append(l2_error(traj.system, traj.final, exact, f))
        if progress is not None:
            progress(h, {f: errors[f][-1] for f in FIELDS})
    orders = {f: eoc(errors[f], hs) for f in FIELDS}
    return ErrorReport(k=k, hs=list(hs), errors=errors, orders=orders)


def energy_series(trajectory):
    """(t_i, X_i^2, Y_i^2) rows of a stored trajectory."""
    return trajectory.energy_series()


def oracle_compare(mesh, k, material, dt, seed=0):
    """Condensed versus monolithic one-step solve from random coefficients."""
    if mesh.n_triangles > 128:
        raise ValueError("oracle comparison is limited to small meshes (<= 128 elements)")
    rng = np.random.default_rng(seed)
    mf = MaterialField.uniform(mesh, material)
    stab = stabilization_defaults(mesh, 1.0, 1.0)
    dof = build_dofmap(mesh, k)
    els = list(element_systems(mesh, mf, k, stab, dt))
    cond = condense(els, dof)
    mono = assemble_monolithic(els, dof)
    lay = cond.lay
    state = State(
        0.0,
        rng.standard_normal((mesh.n_triangles, lay.n_interior)),
        rng.standard_normal(dof.ndof),
    )
    a = cond.solve_step(state)
    b = mono.solve_step(state)
    scale = max(np.abs(b.u).max(), np.abs(b.traces).max(), 1e-300)
    return max(np.abs(a.u - b.u).max(), np.abs(a.traces - b.traces).max()) / scale


def init_compatibility_residuals(sys, state):
    """Max facewise moment residual of the two trace constraints.

    Uses the assembled trace-equation rows (the same moments the solver
    enforces): traction continuity against the solid trace test space and
    flux continuity against the pressure trace test space, both restricted
    to non-essential faces.
    """
    dof = sys.dofmap
    lam_e = state.traces[dof.elem_scatter]
    # trace rows of the one-step system are (dt/2) * (C u + G lam); rescale
    resid = np.zeros(dof.ndof)
    contrib = np.einsum("eij,ej->ei", sys.A_bi, state.u) + np.einsum(
        "eab,eb->ea", sys.A_bb, lam_e
    )
    np.add.at(resid, dof.elem_scatter.ravel(), contrib.ravel())
    resid *= 2.0 / sys.dt
    resid[dof.essential] = 0.0
    ke = dof.ke
    solid = 0.0
    fluidr = 0.0
    for f in range(sys.mesh.n_faces):
        o = dof.per_face * f
        solid = max(solid, np.abs(resid[o : o + 2 * ke]).max())
        fluidr = max(fluidr, np.abs(resid[o + 2 * ke : o + 3 * ke]).max())
    return solid, fluidr
