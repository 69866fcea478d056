"""Finite element spaces and assembly on TriMesh.

Scalar fields live in continuous P1 over the vertices; velocity/pressure use
the Taylor-Hood pair (vector P2 with zero boundary trace, P1 pressure with
zero lumped mean).  The discrete inner product (the "lumped" one) integrates
the nodal interpolant of a product, which makes the scalar mass matrix
diagonal with weights m_i = integral of the i-th hat function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import TriMesh, _p1_gradients

# ----------------------------------------------------------------------
# quadrature on the reference triangle (barycentric points, weights sum to 1)
# ----------------------------------------------------------------------
_Q2_PTS = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
_Q2_W = np.array([1.0, 1.0, 1.0]) / 3.0

_a4a, _a4b = 0.445948490915965, 0.091576213509771
_Q4_PTS = np.array(
    [
        [1 - 2 * _a4a, _a4a, _a4a],
        [_a4a, 1 - 2 * _a4a, _a4a],
        [_a4a, _a4a, 1 - 2 * _a4a],
        [1 - 2 * _a4b, _a4b, _a4b],
        [_a4b, 1 - 2 * _a4b, _a4b],
        [_a4b, _a4b, 1 - 2 * _a4b],
    ]
)
_Q4_W = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)

_a6a = 0.063089014491502
_a6b = 0.249286745170910
_b6, _c6 = 0.053145049844817, 0.310352451033784
_d6 = 1.0 - _b6 - _c6
_Q6_PTS = np.array(
    [
        [1 - 2 * _a6a, _a6a, _a6a],
        [_a6a, 1 - 2 * _a6a, _a6a],
        [_a6a, _a6a, 1 - 2 * _a6a],
        [1 - 2 * _a6b, _a6b, _a6b],
        [_a6b, 1 - 2 * _a6b, _a6b],
        [_a6b, _a6b, 1 - 2 * _a6b],
        [_b6, _c6, _d6],
        [_b6, _d6, _c6],
        [_c6, _b6, _d6],
        [_c6, _d6, _b6],
        [_d6, _b6, _c6],
        [_d6, _c6, _b6],
    ]
)
_Q6_W = np.array([0.050844906370207] * 3 + [0.116786275726379] * 3 + [0.082851075618374] * 6)

QUADRATURES = {2: (_Q2_PTS, _Q2_W), 4: (_Q4_PTS, _Q4_W), 6: (_Q6_PTS, _Q6_W)}


def quad_points_xy(mesh: TriMesh, degree: int):
    """Physical quadrature points, shape (T, nq, 2), and weights*area (T, nq)."""
    bary, w = QUADRATURES[degree]
    p = mesh.vertices[mesh.triangles]  # (T, 3, 2)
    xy = np.einsum("qk,tkd->tqd", bary, p)
    wa = mesh.areas[:, None] * w[None, :]
    return xy, wa


# ----------------------------------------------------------------------
# field containers
# ----------------------------------------------------------------------
@dataclass
class P1Field:
    """Nodal scalar field: one value per vertex."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.mesh.n_vertices,):
            raise ValueError("value count must equal vertex count")


@dataclass
class TaylorHoodField:
    """Velocity (two P2 components, zero trace) with a P1 pressure of zero lumped mean."""

    mesh: TriMesh
    velocity: np.ndarray  # (2, n_p2)
    pressure: np.ndarray  # (n_vertices,)

    def vertex_velocity(self):
        """Velocity sampled at the mesh vertices (vertex dofs come first)."""
        return self.velocity[:, : self.mesh.n_vertices]


# ----------------------------------------------------------------------
# P1 scalar operators
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ScalarOperators:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    lumped: np.ndarray  # m_i = integral of hat function i


def assemble_scalar_matrices(mesh: TriMesh) -> ScalarOperators:
    """Stiffness, consistent mass and lumped weights for P1."""
    T = mesh.n_triangles
    tris = mesh.triangles
    rows = np.empty(9 * T, dtype=np.int64)
    cols = np.empty(9 * T, dtype=np.int64)
    kvals = np.empty(9 * T)
    mvals = np.empty(9 * T)
    mass_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    for t in range(T):
        p = mesh.vertices[tris[t]]
        g = _p1_gradients(p)
        area = mesh.areas[t]
        ke = area * (g @ g.T)
        me = area * mass_ref
        sl = slice(9 * t, 9 * (t + 1))
        rows[sl] = np.repeat(tris[t], 3)
        cols[sl] = np.tile(tris[t], 3)
        kvals[sl] = ke.ravel()
        mvals[sl] = me.ravel()
    V = mesh.n_vertices
    K = sp.coo_matrix((kvals, (rows, cols)), shape=(V, V)).tocsr()
    M = sp.coo_matrix((mvals, (rows, cols)), shape=(V, V)).tocsr()
    lumped = np.asarray(M.sum(axis=1)).ravel()
    if np.any(lumped <= 0):
        raise ValueError("nonpositive lumped weight")
    return ScalarOperators(stiffness=K, mass=M, lumped=lumped)


def lumped_inner_product(x: P1Field, y: P1Field, lumped=None) -> float:
    """Sum of m_i * x_i * y_i; equals the integral of the nodal interpolant of x*y."""
    if x.mesh is not y.mesh:
        raise ValueError("fields live on different meshes")
    if lumped is None:
        lumped = assemble_scalar_matrices(x.mesh).lumped
    return float(np.sum(lumped * x.values * y.values))


def nodal_interpolate(mesh: TriMesh, f) -> P1Field:
    """Point evaluation of ``f`` at the vertices."""
    vals = np.array([float(f(x, y)) for x, y in mesh.vertices])
    return P1Field(mesh, vals)


def averaged_interpolate(mesh: TriMesh, f, degree: int = 6) -> P1Field:
    """Area-weighted mean of ``f`` over the macroelement of each vertex.

    Sign-preserving (convex combination of triangle means with positive
    quadrature weights) and bounded by the sampled sup of ``f``.  Because
    every triangle is shared by exactly three vertices and the lumped weight
    is a third of the macroelement area, the lumped mass of the interpolant
    reproduces the quadrature mass of ``f`` exactly; a single-triangle mean
    would instead drift by O(h |grad f|), which is far outside the accuracy
    needed for sharply peaked data on coarse meshes.
    """
    xy, wa = quad_points_xy(mesh, degree)
    samples = np.array(
        [[float(f(x, y)) for x, y in tri_pts] for tri_pts in xy]
    )
    if not np.all(np.isfinite(samples)):
        raise ValueError("non-finite sample while averaging")
    tri_ints = (samples * wa).sum(axis=1)
    values = np.empty(mesh.n_vertices)
    for i in range(mesh.n_vertices):
        patch = mesh.macroelement(i)
        values[i] = tri_ints[patch].sum() / mesh.areas[patch].sum()
    return P1Field(mesh, values)


def pair_values(mesh: TriMesh, A: sp.spmatrix) -> np.ndarray:
    """Off-diagonal entries of A gathered on the mesh adjacency pairs (i < j)."""
    A = A.tocsr()
    return np.asarray(A[mesh.pairs[:, 0], mesh.pairs[:, 1]]).ravel()


def export_matrix_coo(A: sp.spmatrix, path):
    """Debug dump in 'i j value' coordinate text format."""
    from .mesh import _atomic_write

    coo = A.tocoo()
    lines = [f"{i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)]
    _atomic_write(path, "\n".join(lines) + "\n")


# ----------------------------------------------------------------------
# P2 space for velocity
# ----------------------------------------------------------------------
class P2Space:
    """Scalar P2 dofs: vertices first, then edge midpoints (sorted pair order)."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        V = mesh.n_vertices
        self.n_dofs = V + mesh.n_pairs
        # local dofs per triangle: v0 v1 v2, m12, m02, m01  (midpoint opposite each vertex)
        T = mesh.n_triangles
        tri_dofs = np.empty((T, 6), dtype=np.int64)
        tri_dofs[:, :3] = mesh.triangles
        # mesh.tri_pairs columns correspond to local pairs (0,1), (1,2), (0,2)
        tri_dofs[:, 3] = V + mesh.tri_pairs[:, 1]  # edge (1,2), opposite v0
        tri_dofs[:, 4] = V + mesh.tri_pairs[:, 2]  # edge (0,2), opposite v1
        tri_dofs[:, 5] = V + mesh.tri_pairs[:, 0]  # edge (0,1), opposite v2
        self.tri_dofs = tri_dofs

        boundary = np.zeros(self.n_dofs, dtype=bool)
        boundary[: V][mesh.is_boundary_vertex] = True
        boundary[V + mesh.boundary_pairs] = True
        self.boundary_dofs = boundary
        self.interior = np.flatnonzero(~boundary)

    @staticmethod
    def basis(bary):
        """P2 basis values at barycentric points, shape (nq, 6)."""
        l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
        return np.column_stack(
            [
                l0 * (2 * l0 - 1),
                l1 * (2 * l1 - 1),
                l2 * (2 * l2 - 1),
                4 * l1 * l2,
                4 * l0 * l2,
                4 * l0 * l1,
            ]
        )

    @staticmethod
    def basis_grad_ref(bary):
        """Gradients w.r.t. (l1, l2) with l0 = 1 - l1 - l2; shape (nq, 6, 2)."""
        l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
        nq = len(l0)
        g = np.zeros((nq, 6, 2))
        g[:, 0, 0] = 1 - 4 * l0
        g[:, 0, 1] = 1 - 4 * l0
        g[:, 1, 0] = 4 * l1 - 1
        g[:, 2, 1] = 4 * l2 - 1
        g[:, 3, 0] = 4 * l2
        g[:, 3, 1] = 4 * l1
        g[:, 4, 0] = -4 * l2
        g[:, 4, 1] = 4 * (l0 - l2)
        g[:, 5, 0] = 4 * (l0 - l1)
        g[:, 5, 1] = -4 * l1
        return g

    def eval_at(self, coeffs, degree):
        """Evaluate a scalar P2 coefficient vector at quadrature points: (T, nq)."""
        bary, _ = QUADRATURES[degree]
        phi = self.basis(bary)  # (nq, 6)
        vals = coeffs[self.tri_dofs]  # (T, 6)
        return vals @ phi.T

    def jacobians(self):
        """Affine map Jacobian inverse-transpose pieces per triangle."""
        p = self.mesh.vertices[self.mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (T,2,2), cols
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = J[:, 1, 1]
        Jinv[:, 0, 1] = -J[:, 0, 1]
        Jinv[:, 1, 0] = -J[:, 1, 0]
        Jinv[:, 1, 1] = J[:, 0, 0]
        Jinv /= det[:, None, None]
        return J, Jinv, det

    def phys_gradients(self, degree):
        """Physical gradients of the 6 basis functions: (T, nq, 6, 2)."""
        bary, _ = QUADRATURES[degree]
        gref = self.basis_grad_ref(bary)  # (nq, 6, 2)
        _, Jinv, _ = self.jacobians()
        # grad_phys = Jinv^T . grad_ref
        return np.einsum("tab,qia->tqib", Jinv, gref)


@dataclass(frozen=True)
class VelocityOperators:
    """Static Taylor-Hood blocks (convection is assembled per frozen velocity)."""

    p2: P2Space
    mass: sp.csr_matrix        # scalar P2 mass (per component)
    laplacian: sp.csr_matrix   # scalar P2 stiffness (per component)
    div: sp.csr_matrix         # rows: P1 pressure dofs, cols: 2*n_p2 velocity dofs


def assemble_taylor_hood(mesh: TriMesh, p2: P2Space | None = None) -> VelocityOperators:
    """Velocity mass/stiffness and the divergence coupling (pressure x velocity)."""
    if p2 is None:
        p2 = P2Space(mesh)
    bary, w = QUADRATURES[4]
    nq = len(w)
    phi = P2Space.basis(bary)  # (nq, 6)
    gphi = p2.phys_gradients(4)  # (T, nq, 6, 2)
    wa = mesh.areas[:, None] * w[None, :]  # (T, nq)

    T = mesh.n_triangles
    dofs = p2.tri_dofs
    # mass and stiffness, vectorized over triangles
    Me = np.einsum("tq,qi,qj->tij", wa, phi, phi)
    Ke = np.einsum("tq,tqia,tqja->tij", wa, gphi, gphi)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = p2.n_dofs
    M = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    # divergence: D[q, (comp, j)] = int psi_q * d(phi_j)/d x_comp
    lam = bary  # P1 basis at quad points equals barycentric coords: (nq, 3)
    De = np.einsum("tq,qa,tqjc->tajc", wa, lam, gphi)  # (T, 3, 6, 2)
    prow = np.repeat(mesh.triangles, 12, axis=1).ravel()
    dcol = np.empty((T, 3, 6, 2), dtype=np.int64)
    dcol[..., 0] = dofs[:, None, :]
    dcol[..., 1] = dofs[:, None, :] + n
    D = sp.coo_matrix(
        (De.ravel(), (prow, dcol.ravel())), shape=(mesh.n_vertices, 2 * n)
    ).tocsr()
    return VelocityOperators(p2=p2, mass=M, laplacian=K, div=D)


def assemble_velocity_convection(ops: VelocityOperators, u_frozen: np.ndarray) -> sp.csr_matrix:
    """Skew-stabilized convection block (u_frozen . grad v, w) + 0.5 (div u_frozen v, w).

    Scalar block acting identically on each velocity component.  Degree-6
    quadrature: the integrands are quintic, and exactness is what makes the
    form exactly skew for zero-trace u_frozen.
    """
    p2 = ops.p2
    mesh = p2.mesh
    bary, w = QUADRATURES[6]
    phi = P2Space.basis(bary)
    gphi = p2.phys_gradients(6)
    wa = mesh.areas[:, None] * w[None, :]

    coeff = u_frozen[:, p2.tri_dofs]  # (2, T, 6)
    uq = np.einsum("ctk,qk->tqc", coeff, phi)  # (T, nq, 2)
    divq = np.einsum("ctk,tqkc->tq", coeff, gphi)

    # (u . grad phi_j, phi_i) + 0.5 (div u phi_j, phi_i)
    Ae = np.einsum("tq,qi,tqjc,tqc->tij", wa, phi, gphi, uq)
    Ae += 0.5 * np.einsum("tq,tq,qi,qj->tij", wa, divq, phi, phi)
    dofs = p2.tri_dofs
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = p2.n_dofs
    return sp.coo_matrix((Ae.ravel(), (rows, cols)), shape=(n, n)).tocsr()


# ----------------------------------------------------------------------
# Ritz-Darcy projection onto discretely divergence-free velocities
# ----------------------------------------------------------------------
def ritz_darcy_project(mesh: TriMesh, ops: VelocityOperators, u, degree: int = 4):
    """L2-type projection with a divergence constraint.

    ``u`` is either a callable (x, y) -> (ux, uy) or a (2, n_p2) coefficient
    array.  Returns the velocity coefficients (2, n_p2) with zero boundary
    trace; the projected field satisfies the discrete divergence constraint
    and does not increase the L2 norm.
    """
    p2 = ops.p2
    bary, w = QUADRATURES[degree]
    phi = P2Space.basis(bary)
    xy, wa = quad_points_xy(mesh, degree)
    if callable(u):
        uq = np.array(
            [[u(x, y) for x, y in tri] for tri in xy]
        )  # (T, nq, 2)
    else:
        coeff = np.asarray(u)[:, p2.tri_dofs]
        uq = np.einsum("ctk,qk->tqc", coeff, phi)

    # rhs_i = (u, phi_i) per component
    re = np.einsum("tq,qi,tqc->tic", wa, phi, uq)  # (T, 6, 2)
    n = p2.n_dofs
    rhs = np.zeros(2 * n)
    np.add.at(rhs, p2.tri_dofs.ravel(), re[..., 0].ravel())
    np.add.at(rhs, (p2.tri_dofs + n).ravel(), re[..., 1].ravel())

    sol_u, _ = solve_darcy_saddle(mesh, ops, rhs)
    return sol_u


def velocity_interior_indices(ops: VelocityOperators):
    n = ops.p2.n_dofs
    ii = ops.p2.interior
    return np.concatenate([ii, ii + n])


def solve_darcy_saddle(mesh: TriMesh, ops: VelocityOperators, rhs_full, A_block=None,
                       lumped=None):
    """Solve [A  -D^T; D  0] (u, p) = (rhs, 0) on interior velocity dofs.

    A defaults to the velocity mass (projection); the time-stepper passes its
    own momentum block.  One pressure dof is pinned (the constraint rows sum
    to zero, so no information is lost) and the lumped mean is removed from
    the returned pressure.
    """
    n = ops.p2.n_dofs
    idx = velocity_interior_indices(ops)
    if A_block is None:
        A_block = sp.block_diag([ops.mass, ops.mass]).tocsr()
    A = A_block[idx][:, idx]
    D = ops.div[:, idx].tolil()
    D[0, :] = 0.0
    D = D.tocsr()
    V = mesh.n_vertices
    pin = sp.coo_matrix(([1.0], ([0], [0])), shape=(V, V))
    sys = sp.bmat([[A, -D.T], [D, pin]], format="csc")
    rhs = np.concatenate([rhs_full[idx], np.zeros(V)])
    sol = spla.spsolve(sys, rhs)
    u = np.zeros(2 * n)
    u[idx] = sol[: len(idx)]
    p = sol[len(idx):]
    if lumped is None:
        lumped = assemble_scalar_matrices(mesh).lumped
    p = p - float(lumped @ p) / float(lumped.sum())
    resid = np.linalg.norm(sys @ sol - rhs) / max(1e-30, np.linalg.norm(rhs))
    if not np.isfinite(resid) or resid > 1e-8:
        raise RuntimeError(f"saddle solve residual {resid:.3e}")
    return np.vstack([u[:n], u[n:]]), p
