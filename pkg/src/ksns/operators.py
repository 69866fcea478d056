"""Edgewise discrete forms for the density equation.

The chemotaxis and convective terms are rewritten as sums over adjacent
vertex pairs with scalar edge coefficients: a geometric mean of truncated
densities for chemotaxis, and a difference quotient of the extended
logarithm against 1/(n+1) for convection.  Both collapse the trilinear
couplings onto the stiffness/adjacency sparsity pattern, which is what makes
entropy-compatible testing (and hence the lower bounds) possible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fespace import P2Space, QUADRATURES, VelocityOperators
from .mesh import TriMesh

# Relative gap below which the difference quotients switch to their
# equal-argument branch (0/0 regularisation).
EQUAL_BRANCH_REL = 1e-12


def extended_log(s, eps):
    """log s for s > eps, continued linearly (C^1) below: s/eps + log eps - 1."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    s = np.asarray(s, dtype=np.float64)
    out = np.where(s > eps, np.log(np.where(s > eps, s, 1.0)), s / eps + np.log(eps) - 1.0)
    return out if out.ndim else float(out)


def chemo_edge_coefficient(ni, nj):
    """Geometric mean of the positive parts: sqrt([ni]+ [nj]+)."""
    ni = np.maximum(np.asarray(ni, dtype=np.float64), 0.0)
    nj = np.maximum(np.asarray(nj, dtype=np.float64), 0.0)
    out = np.sqrt(ni * nj)
    return out if out.ndim else float(out)


def _conv_coefficient_arrays(ni, nj, eps):
    """Vectorized convective coefficient with the equal-value branch.

    Returns (gamma, degenerate_mask); degenerate marks entries where some
    n + 1 was smaller than 1e-30 in magnitude (positivity already lost).
    """
    ni = np.asarray(ni, dtype=np.float64)
    nj = np.asarray(nj, dtype=np.float64)
    a = ni + 1.0
    b = nj + 1.0
    degenerate = (np.abs(a) < 1e-30) | (np.abs(b) < 1e-30)
    equal = np.abs(nj - ni) <= EQUAL_BRANCH_REL * (1.0 + np.abs(ni))
    use_quotient = ~(equal | degenerate)
    a_safe = np.where(degenerate, 1.0, a)
    b_safe = np.where(degenerate, 1.0, b)
    num = extended_log(b_safe, eps) - extended_log(a_safe, eps)
    den = 1.0 / a_safe - 1.0 / b_safe
    den = np.where(use_quotient, den, 1.0)
    gamma = np.where(use_quotient, num / den, np.maximum(ni, 0.0) + 1.0)
    return gamma, degenerate


def convective_edge_coefficient(ni, nj, eps):
    """Scalar convective coefficient; warns if n + 1 is numerically singular."""
    gamma, degenerate = _conv_coefficient_arrays(ni, nj, eps)
    if np.any(degenerate):
        warnings.warn("convective coefficient hit |n+1| < 1e-30; positivity lost",
                      RuntimeWarning, stacklevel=2)
    return gamma if np.ndim(gamma) else float(gamma)


@dataclass(frozen=True)
class TransportData:
    """Velocity-dependent integrals gathered on the adjacency pairs.

    c_fwd[e] = (phi_j u, grad phi_i) and c_bwd[e] = (phi_i u, grad phi_j) for
    pair e = (i, j) with i < j; half_div_pair[e] = 0.5 (div u phi_j, phi_i).
    ``cc_matrix`` is the stabilized convection operator for the c-equation.
    """

    c_fwd: np.ndarray
    c_bwd: np.ndarray
    half_div_pair: np.ndarray
    cc_matrix: sp.csr_matrix


def assemble_transport(mesh: TriMesh, p2: P2Space, u: np.ndarray) -> TransportData:
    """Assemble all velocity-coupled scalar integrals for a frozen velocity."""
    bary, w = QUADRATURES[4]
    phi2 = P2Space.basis(bary)  # (nq, 6)
    gphi2 = p2.phys_gradients(4)  # (T, nq, 6, 2)
    lam = bary  # P1 basis values
    wa = mesh.areas[:, None] * w[None, :]

    coeff = u[:, p2.tri_dofs]  # (2, T, 6)
    uq = np.einsum("ctk,qk->tqc", coeff, phi2)  # (T, nq, 2)
    divq = np.einsum("ctk,tqkc->tq", coeff, gphi2)  # (T, nq)

    # P1 gradients are constant per triangle
    gp1 = np.stack([_grads_p1(mesh)], axis=0)[0]  # (T, 3, 2)

    # Cmat[i, j] = (phi_j u, grad phi_i): j carries lam, i carries gp1
    Ce = np.einsum("tq,qj,tqc,tic->tij", wa, lam, uq, gp1)
    De = 0.5 * np.einsum("tq,tq,qi,qj->tij", wa, divq, lam, lam)

    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    V = mesh.n_vertices
    Cmat = sp.coo_matrix((Ce.ravel(), (rows, cols)), shape=(V, V)).tocsr()
    Dmat = sp.coo_matrix((De.ravel(), (rows, cols)), shape=(V, V)).tocsr()

    pi, pj = mesh.pairs[:, 0], mesh.pairs[:, 1]
    c_fwd = np.asarray(Cmat[pi, pj]).ravel()
    c_bwd = np.asarray(Cmat[pj, pi]).ravel()
    half_div = np.asarray(Dmat[pi, pj]).ravel()
    return TransportData(
        c_fwd=c_fwd,
        c_bwd=c_bwd,
        half_div_pair=half_div,
        cc_matrix=(Cmat.T + Dmat).tocsr(),
    )


def _grads_p1(mesh: TriMesh):
    from .mesh import _p1_gradients

    return np.stack([_p1_gradients(mesh.vertices[t]) for t in mesh.triangles])


def chemotaxis_load(mesh: TriMesh, n_frozen, c, stiff_pair) -> np.ndarray:
    """Load vector of the pairwise chemotaxis form against each hat function.

    Pair (i, j) contributes gamma_ij (c_j - c_i) (grad phi_j, grad phi_i)
    with +/- signs on rows i/j.  Depends on the density only through the
    frozen geometric-mean coefficients.
    """
    pi, pj = mesh.pairs[:, 0], mesh.pairs[:, 1]
    gamma = chemo_edge_coefficient(n_frozen[pi], n_frozen[pj])
    wpair = gamma * (c[pj] - c[pi]) * stiff_pair
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, pi, wpair)
    np.add.at(out, pj, -wpair)
    return out


def convection_starred_load(mesh: TriMesh, n_frozen, transport: TransportData,
                            eps: float) -> np.ndarray:
    """Load vector of the pairwise convective form against each hat function."""
    pi, pj = mesh.pairs[:, 0], mesh.pairs[:, 1]
    gamma, degenerate = _conv_coefficient_arrays(n_frozen[pi], n_frozen[pj], eps)
    if np.any(degenerate):
        warnings.warn("convective load: |n+1| < 1e-30 on some pair", RuntimeWarning,
                      stacklevel=2)
    vpair = gamma * transport.c_fwd
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, pi, vpair)
    np.add.at(out, pj, -vpair)
    return out


def c_convection_matrix(mesh: TriMesh, p2: P2Space, u: np.ndarray) -> sp.csr_matrix:
    """(u . grad c, cb) + 0.5 (div u c, cb) as a P1 matrix (exactly skew)."""
    return assemble_transport(mesh, p2, u).cc_matrix
