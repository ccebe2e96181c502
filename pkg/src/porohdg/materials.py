"""Poroelastic coefficient sets in Voigt form, constant per mesh region.

Voigt convention: symmetric 2x2 tensors are stored as (xx, yy, xy) with
engineering shear strain, so the stiffness maps (exx, eyy, 2*exy) to
(sxx, syy, sxy) and the tensor inner product carries the weight
diag(1, 1, 2) on the shear slot.  All quantities are SI.
"""

from dataclasses import dataclass, field

import numpy as np

# Voigt form of the 2x2 identity tensor and of the tensor inner product
VOIGT_ID = np.array([1.0, 1.0, 0.0])
VOIGT_WEIGHT = np.diag([1.0, 1.0, 2.0])


def isotropic_stiffness(E, nu):
    """Plane-strain Voigt stiffness from Young modulus and Poisson ratio."""
    if E <= 0.0:
        raise ValueError(f"Young modulus must be positive, got {E:g}")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio must lie in (-1, 0.5), got {nu:g}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return np.array(
        [[lam + 2.0 * mu, lam, 0.0], [lam, lam + 2.0 * mu, 0.0], [0.0, 0.0, mu]]
    )


def anisotropic_stiffness(c11, c13, c33, c55):
    """Voigt stiffness [[c11, c13, 0], [c13, c33, 0], [0, 0, c55]]; must be SPD."""
    C = np.array([[c11, c13, 0.0], [c13, c33, 0.0], [0.0, 0.0, c55]], dtype=float)
    ev = np.linalg.eigvalsh(C)
    if ev[0] <= 0.0:
        raise ValueError(
            f"stiffness matrix is not positive definite (smallest eigenvalue {ev[0]:g})"
        )
    return C


def compliance(C):
    """Inverse of an SPD Voigt matrix."""
    C = np.asarray(C, dtype=float)
    ev = np.linalg.eigvalsh(0.5 * (C + C.T))
    if ev[0] <= 0.0:
        raise ValueError(f"matrix is singular or indefinite (smallest eigenvalue {ev[0]:g})")
    return np.linalg.inv(C)


def validate_densities(rho11, rho12, rho22):
    """Smallest eigenvalue of rho11*rho22 - rho12^2 I; must be positive."""
    rho22 = np.asarray(rho22, dtype=float)
    if rho22.shape != (2, 2):
        raise ValueError("rho22 must be a 2x2 matrix")
    pencil = rho11 * rho22 - rho12**2 * np.eye(2)
    rho0 = float(np.linalg.eigvalsh(0.5 * (pencil + pencil.T))[0])
    if rho11 <= 0.0 or rho0 <= 0.0:
        raise ValueError(
            f"density coefficients violate coercivity (rho11 = {rho11:g}, rho0 = {rho0:g})"
        )
    return rho0


def drag_matrix(eta, kappa):
    """Viscous drag eta * kappa^{-1} for scalar viscosity, 2x2 diagonal permeability."""
    if eta < 0.0:
        raise ValueError(f"viscosity must be >= 0, got {eta:g}")
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (2, 2):
        raise ValueError("kappa must be a 2x2 matrix")
    if eta == 0.0:
        return np.zeros((2, 2))
    kd = np.diag(kappa)
    if np.any(kd <= 0.0):
        raise ValueError("permeability entries must be positive when eta > 0")
    return np.diag(eta / kd)


@dataclass(frozen=True)
class MaterialParams:
    """Coefficients of one poroelastic material.

    ``C`` is the 3x3 Voigt stiffness, ``A`` its inverse; ``rho22`` and
    ``drag`` are 2x2 diagonal matrices.  ``provenance`` keeps ingested but
    unused catalog values (porosity, grain/fluid bulk moduli).
    """

    C: np.ndarray
    alpha: float
    s0: float
    rho11: float
    rho12: float
    rho22: np.ndarray
    drag: np.ndarray
    A: np.ndarray = None
    rho0: float = field(default=0.0)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        if not np.allclose(C, C.T, rtol=0.0, atol=1e-9 * abs(C).max()):
            raise ValueError("stiffness matrix must be symmetric")
        object.__setattr__(self, "C", C)
        A = compliance(C) if self.A is None else np.asarray(self.A, dtype=float)
        resid = np.linalg.norm(A @ C - np.eye(3)) / np.linalg.norm(np.eye(3))
        if resid > 1e-12:
            raise ValueError(f"compliance does not invert stiffness (residual {resid:g})")
        object.__setattr__(self, "A", A)
        if self.s0 < 0.0:
            raise ValueError(f"specific storage must be >= 0, got {self.s0:g}")
        if self.alpha < 0.0:
            raise ValueError(f"Biot coefficient must be >= 0, got {self.alpha:g}")
        rho22 = np.asarray(self.rho22, dtype=float)
        object.__setattr__(self, "rho22", rho22)
        object.__setattr__(self, "rho0", validate_densities(self.rho11, self.rho12, rho22))
        drag = np.asarray(self.drag, dtype=float)
        if not np.allclose(drag, drag.T) or np.linalg.eigvalsh(0.5 * (drag + drag.T))[0] < -1e-12:
            raise ValueError("drag matrix must be symmetric positive semidefinite")
        object.__setattr__(self, "drag", drag)

    @property
    def a_voigt_id(self):
        """A applied to the identity tensor, in plain Voigt components."""
        return self.A @ VOIGT_ID

    @property
    def trace_a_id(self):
        """tr(A I) = (1,1,0) . A (1,1,0)."""
        return float(VOIGT_ID @ self.A @ VOIGT_ID)


def from_scalars(
    *,
    C,
    alpha,
    s0,
    rho11,
    rho12,
    rho22,
    eta,
    kappa,
    provenance=None,
):
    """Assemble MaterialParams from catalog-style scalars.

    ``rho22`` and ``kappa`` may be scalars (isotropic) or length-2 diagonals.
    """
    rho22 = np.atleast_1d(np.asarray(rho22, dtype=float))
    if rho22.size == 1:
        rho22 = np.repeat(rho22, 2)
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    if kappa.size == 1:
        kappa = np.repeat(kappa, 2)
    return MaterialParams(
        C=np.asarray(C, dtype=float),
        alpha=alpha,
        s0=s0,
        rho11=rho11,
        rho12=rho12,
        rho22=np.diag(rho22),
        drag=drag_matrix(eta, np.diag(kappa)),
        provenance=provenance or {},
    )


_GPA = 1.0e9

_LIBRARY_DATA = {
    # catalog of simulation materials; stiffnesses in GPa, s0 in 1/GPa,
    # densities in kg/m^3, permeability in m^2, viscosity in Pa*s
    "sandstone-iso": dict(
        c11=36.0, c13=12.0, c33=36.0, c55=12.0, s0=8.75e-2, alpha=0.5,
        rho11=2208.0, rho12=1040.0, rho22=(10400.0, 18720.0),
        kappa=(6e-13, 1e-13), eta=1e-3,
        phi=0.2, Ks=40.0, Kf=2.5, K=20.0,
    ),
    "glass-epoxy": dict(
        c11=39.4, c13=1.2, c33=13.1, c55=3.0, s0=9.8e-2, alpha=0.92,
        rho11=1660.0, rho12=1040.0, rho22=(10400.0, 18720.0),
        kappa=(6e-13, 1e-13), eta=1e-3,
        phi=0.2, Ks=40.0, Kf=2.5, K=3.2,
    ),
    "sandstone-het": dict(
        c11=36.0, c13=12.0, c33=36.0, c55=12.0, s0=8.75e-2, alpha=0.5,
        rho11=2208.0, rho12=1040.0, rho22=(10400.0, 10400.0),
        kappa=(6e-13, 6e-13), eta=0.0,
        phi=0.2, Ks=40.0, Kf=2.5, K=20.0,
    ),
    "shale": dict(
        c11=11.9, c13=3.9, c33=11.9, c55=3.9, s0=6.03e-2, alpha=0.13,
        rho11=2022.8, rho12=1040.0, rho22=(13000.0, 13000.0),
        kappa=(1e-13, 1e-13), eta=0.0,
        phi=0.16, Ks=7.6, Kf=2.5, K=6.6,
    ),
}


def material_library():
    """Built-in materials keyed by name, converted to SI."""
    out = {}
    for name, d in _LIBRARY_DATA.items():
        out[name] = from_scalars(
            C=anisotropic_stiffness(
                d["c11"] * _GPA, d["c13"] * _GPA, d["c33"] * _GPA, d["c55"] * _GPA
            ),
            alpha=d["alpha"],
            s0=d["s0"] / _GPA,
            rho11=d["rho11"],
            rho12=d["rho12"],
            rho22=d["rho22"],
            eta=d["eta"],
            kappa=d["kappa"],
            provenance=dict(
                phi=d["phi"], Ks=d["Ks"] * _GPA, Kf=d["Kf"] * _GPA, K=d["K"] * _GPA
            ),
        )
    return out


class MaterialField:
    """Region-wise constant material assignment over a mesh."""

    def __init__(self, regions, elem_region):
        self.regions = dict(regions)
        self.elem_region = np.asarray(elem_region, dtype=object)
        missing = {r for r in self.elem_region if r not in self.regions}
        if missing:
            raise ValueError(f"elements reference undefined regions: {sorted(missing)}")

    @classmethod
    def uniform(cls, mesh, params):
        return cls({"default": params}, ["default"] * mesh.n_triangles)

    @classmethod
    def from_predicates(cls, mesh, rules, default=None):
        """Assign regions by the first predicate matching the element centroid.

        ``rules`` is a list of (name, predicate, params); ``default`` is a
        (name, params) pair used when nothing matches.
        """
        centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        regions = {name: params for name, _, params in rules}
        if default is not None:
            regions[default[0]] = default[1]
        assignment = []
        for cx, cy in centroids:
            for name, pred, _ in rules:
                if pred(cx, cy):
                    assignment.append(name)
                    break
            else:
                if default is None:
                    raise ValueError(f"no material region matches centroid ({cx:g}, {cy:g})")
                assignment.append(default[0])
        return cls(regions, assignment)

    def params_of(self, elem):
        return self.regions[self.elem_region[elem]]


def plane_wave_speeds(mat, direction=(1.0, 0.0)):
    """Characteristic speeds of the lossless system for one direction.

    Solves the 8x8 plane-wave eigenproblem in (v_s, v_f, sigma, p); the drag
    term is dropped (it only damps).  Returns the nonnegative speeds sorted
    descending, so [0] is the fast compressional speed.
    """
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    A, al = mat.A, mat.alpha
    m = VOIGT_ID
    E = np.array([[n[0], 0.0], [0.0, n[1]], [n[1], n[0]]])  # strain of a plane wave
    Nsig = np.array([[n[0], 0.0, n[1]], [0.0, n[1], n[0]]])  # traction rows

    M = np.zeros((8, 8))
    B = np.zeros((8, 8))
    vs, vf, sg, p = slice(0, 2), slice(2, 4), slice(4, 7), slice(7, 8)
    M[sg, sg] = A
    M[sg, p] = (al * A @ m)[:, None]
    M[vs, vs] = mat.rho11 * np.eye(2)
    M[vs, vf] = mat.rho12 * np.eye(2)
    M[vf, vs] = mat.rho12 * np.eye(2)
    M[vf, vf] = mat.rho22
    M[p, sg] = al * (A @ m)[None, :]
    M[p, p] = mat.s0 + al**2 * mat.trace_a_id
    B[sg, vs] = E
    B[vs, sg] = Nsig
    B[vf, p] = -n[:, None]
    B[p, vf] = n[None, :]
    ev = np.linalg.eigvals(np.linalg.solve(M, B))
    speeds = np.abs(ev.real)
    return np.sort(speeds)[::-1]
