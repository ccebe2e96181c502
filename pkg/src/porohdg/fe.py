"""Reference elements: orthonormal polynomial bases, quadrature, affine maps.

Everything lives on the reference triangle T = {(x, y) : x, y >= 0, x + y <= 1}
or the reference edge [0, 1].  Bases are L2-orthonormal on the reference
domain and degree-nested: the first dim_Pk(k') functions of a degree-k basis
(k' <= k) span P_{k'} and coincide with the degree-k' basis.
"""

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

MAX_QUAD_ORDER = 40

# local face f is opposite reference vertex f, oriented counterclockwise
REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
LOCAL_FACE_VERTICES = ((1, 2), (2, 0), (0, 1))


def dim_Pk(k, domain="triangle"):
    """Dimension of P_k on a triangle ((k+1)(k+2)/2) or an edge (k+1)."""
    if k < 0:
        raise ValueError(f"polynomial degree must be >= 0, got {k}")
    if domain == "triangle":
        return (k + 1) * (k + 2) // 2
    if domain == "edge":
        return k + 1
    raise ValueError(f"unknown domain {domain!r}")


def _dubiner_pairs(k):
    """Graded ordering of Dubiner index pairs (i, j), i + j <= k."""
    return [(d - j, j) for d in range(k + 1) for j in range(d + 1)]


def _legendre_table(t, deg):
    """Values and derivatives of Legendre P_0..P_deg at points t in [-1, 1]."""
    t = np.asarray(t, dtype=float)
    V = np.ones((len(t), deg + 1))
    D = np.zeros((len(t), deg + 1))
    if deg >= 1:
        V[:, 1] = t
        D[:, 1] = 1.0
    for n in range(1, deg):
        V[:, n + 1] = ((2 * n + 1) * t * V[:, n] - n * V[:, n - 1]) / (n + 1)
        D[:, n + 1] = D[:, n - 1] + (2 * n + 1) * V[:, n]
    return V, D


def _orthonormal_coeffs(G):
    """Triangular change of basis C with C^T G C = I, by repeated Cholesky.

    Each pass divides the orthogonality loss of the previous one (the
    monomial Gram is badly conditioned); iterating drives the residual to
    roundoff, which the downstream mass matrices rely on.
    """
    n = G.shape[0]
    C = np.eye(n)
    for _ in range(5):
        Gc = C.T @ G @ C
        if np.abs(Gc - np.eye(n)).max() < 1e-14:
            break
        C = C @ np.linalg.inv(np.linalg.cholesky(Gc)).T
    return C


def _jacobi_table(t, alpha, deg):
    """Values and derivatives of Jacobi P_0..P_deg^(alpha,0) at t in [-1, 1]."""
    from scipy.special import eval_jacobi

    t = np.asarray(t, dtype=float)
    V = np.stack([eval_jacobi(n, alpha, 0.0, t) for n in range(deg + 1)], axis=1)
    D = np.zeros_like(V)
    for n in range(1, deg + 1):
        D[:, n] = 0.5 * (n + alpha + 1.0) * eval_jacobi(n - 1, alpha + 1.0, 1.0, t)
    return V, D


class Basis:
    """Orthonormal hierarchical polynomial basis on the triangle or edge.

    Triangle functions are normalized Dubiner polynomials in graded order
    (edge functions shifted Legendre), so the first dim_Pk(k') of them span
    P_{k'}; values and gradients evaluate stably at arbitrary points of the
    closed domain, vertices included.
    """

    def __init__(self, degree, domain):
        if degree < 0:
            raise ValueError(f"polynomial degree must be >= 0, got {degree}")
        self.degree = degree
        self.domain = domain
        if domain == "triangle":
            self.pairs = _dubiner_pairs(degree)
        elif domain == "edge":
            self.pairs = list(range(degree + 1))
        else:
            raise ValueError(f"unknown domain {domain!r}")
        self.dim = dim_Pk(degree, domain)
        rule = quadrature(domain, 2 * degree)
        P = self._primitive_values(rule.points)
        G = (P * rule.weights[:, None]).T @ P
        self.coeffs = _orthonormal_coeffs(G)

    def _collapsed(self, pts):
        """Collapsed coordinates (a, b, u); a is clamped at the top vertex."""
        x, y = pts[:, 0], pts[:, 1]
        u = 1.0 - y
        safe = np.where(u > 1e-300, u, 1.0)
        a = np.where(u > 1e-300, 2.0 * x / safe - 1.0, -1.0)
        return a, 2.0 * y - 1.0, u

    def _primitive_values(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.domain == "edge":
            V, _ = _legendre_table(2.0 * pts.reshape(-1) - 1.0, self.degree)
            return V[:, self.pairs]
        a, b, u = self._collapsed(pts)
        Pa, _ = _legendre_table(a, self.degree)
        jt = {i: _jacobi_table(b, 2.0 * i + 1.0, self.degree)[0] for i in range(self.degree + 1)}
        upow = np.stack([u**i for i in range(self.degree + 1)], axis=1)
        return np.stack(
            [Pa[:, i] * upow[:, i] * jt[i][:, j] for i, j in self.pairs], axis=1
        )

    def eval(self, points):
        """Basis values at points; shape (npts, dim)."""
        return self._primitive_values(points) @ self.coeffs

    def grad(self, points):
        """Basis gradients at points; shape (npts, dim, gdim)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.domain == "edge":
            _, D = _legendre_table(2.0 * pts.reshape(-1) - 1.0, self.degree)
            return (2.0 * D[:, self.pairs] @ self.coeffs)[:, :, None]
        a, b, u = self._collapsed(pts)
        Pa, Da = _legendre_table(a, self.degree)
        jtab = {
            i: _jacobi_table(b, 2.0 * i + 1.0, self.degree)
            for i in range(self.degree + 1)
        }
        upow = np.stack([u**i for i in range(self.degree + 1)], axis=1)
        # u^(i-1) terms stay polynomial because Da[:, i] carries degree i-1 in a
        um1 = np.stack(
            [np.zeros_like(u) if i == 0 else u ** (i - 1) for i in range(self.degree + 1)],
            axis=1,
        )
        cols_x, cols_y = [], []
        for i, j in self.pairs:
            Qj, dQj = jtab[i][0][:, j], jtab[i][1][:, j]
            gx = 2.0 * Da[:, i] * um1[:, i] * Qj
            gy = (
                Da[:, i] * (a + 1.0) * um1[:, i] * Qj
                - i * Pa[:, i] * um1[:, i] * Qj
                + 2.0 * Pa[:, i] * upow[:, i] * dQj
            )
            cols_x.append(gx)
            cols_y.append(gy)
        Mx = np.stack(cols_x, axis=1)
        My = np.stack(cols_y, axis=1)
        return np.stack([Mx @ self.coeffs, My @ self.coeffs], axis=2)


@lru_cache(maxsize=None)
def simplex_basis(k):
    """Orthonormal hierarchical basis of P_k on the reference triangle."""
    return Basis(k, "triangle")


@lru_cache(maxsize=None)
def edge_basis(k):
    """Orthonormal basis of P_k on the reference edge [0, 1]."""
    return Basis(k, "edge")


class QuadRule:
    """Quadrature rule with points in reference coordinates."""

    def __init__(self, points, weights, order, domain):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.order = order
        self.domain = domain

    @property
    def npoints(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def quadrature(domain, order):
    """Quadrature of at least the requested polynomial exactness.

    Triangle rules are collapsed Gauss-Legendre x Gauss-Jacobi products (the
    Duffy Jacobian is absorbed by the Jacobi weight), edge rules are
    Gauss-Legendre mapped to [0, 1].
    """
    if order < 0:
        raise ValueError(f"quadrature order must be >= 0, got {order}")
    if order > MAX_QUAD_ORDER:
        raise ValueError(
            f"quadrature order {order} not available (max {MAX_QUAD_ORDER})"
        )
    n = (order + 2) // 2  # 2n - 1 >= order
    xg, wg = leggauss(n)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    if domain == "edge":
        return QuadRule(u, wu, 2 * n - 1, "edge")
    if domain != "triangle":
        raise ValueError(f"unknown domain {domain!r}")
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    v = 0.5 * (xj + 1.0)
    wv = 0.25 * wj  # includes the (1 - v) Duffy factor
    U, V = np.meshgrid(u, v, indexing="ij")
    pts = np.stack([(U * (1.0 - V)).ravel(), V.ravel()], axis=1)
    wts = np.outer(wu, wv).ravel()
    return QuadRule(pts, wts, 2 * n - 1, "triangle")


class AffineMap:
    """Affine map from the reference triangle onto a physical triangle."""

    def __init__(self, verts):
        verts = np.asarray(verts, dtype=float)
        self.verts = verts
        self.jac = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
        self.det = float(np.linalg.det(self.jac))
        if self.det <= 0.0:
            raise ValueError(
                f"degenerate or negatively oriented triangle (det = {self.det:g})"
            )
        self.jac_inv = np.linalg.inv(self.jac)
        normals = np.empty((3, 2))
        lengths = np.empty(3)
        for f, (a, b) in enumerate(LOCAL_FACE_VERTICES):
            t = verts[b] - verts[a]
            L = float(np.hypot(*t))
            normals[f] = np.array([t[1], -t[0]]) / L
            lengths[f] = L
        self.face_normals = normals
        self.face_lengths = lengths

    def to_physical(self, ref_pts):
        ref_pts = np.atleast_2d(np.asarray(ref_pts, dtype=float))
        return self.verts[0] + ref_pts @ self.jac.T

    def to_reference(self, phys_pts):
        phys_pts = np.atleast_2d(np.asarray(phys_pts, dtype=float))
        return (phys_pts - self.verts[0]) @ self.jac_inv.T


def affine_map(verts):
    """Affine map for a (counterclockwise) physical triangle."""
    return AffineMap(verts)
