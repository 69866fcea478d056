"""Shock detector and nonlinear artificial diffusion.

The detector compares, around each vertex, the signed sum of two-sided
directional derivative jumps against the sum of their magnitudes; it equals
one exactly at local minima and vanishes where the field is locally linear.
The diffusion operators scale edgewise coefficients by the detector and act
as graph Laplacians (symmetric, nonnegative off-diagonals moved against a
row-sum-zero diagonal), so constants are preserved and mass is untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh
from .operators import EQUAL_BRANCH_REL, extended_log, TransportData


def _require_sym(mesh: TriMesh):
    if not mesh.has_symmetric_nodes():
        raise RuntimeError("mesh has no opposite-node data; call compute_symmetric_nodes")


def _directed_slopes(mesh: TriMesh, eta: np.ndarray):
    """One-sided and opposite-sided slopes for both directions of every pair.

    Returns (one, sym, has_sym) each of shape (2, E); row 0 is the direction
    based at pairs[:, 0].  Pairs without an opposite node fall back to the
    one-sided jump (their sym slot contributes nothing).
    """
    _require_sym(mesh)
    E = mesh.n_pairs
    one = np.empty((2, E))
    symv = np.zeros((2, E))
    present = mesh._sym_present
    for side in (0, 1):
        base = mesh.pairs[:, side]
        other = mesh.pairs[:, 1 - side]
        one[side] = (eta[other] - eta[base]) / mesh.edge_lengths
        v1 = mesh._sym_seg[side, :, 0]
        v2 = mesh._sym_seg[side, :, 1]
        s = mesh._sym_s[side]
        eta_sym = (1.0 - s) * eta[v1] + s * eta[v2]
        with np.errstate(invalid="ignore", divide="ignore"):
            sl = (eta_sym - eta[base]) / mesh._sym_len[side]
        symv[side] = np.where(present[side], sl, 0.0)
    return one, symv, present


def gradient_jump_stats(mesh: TriMesh, eta: np.ndarray, i: int, j: int,
                        fallback: bool = True):
    """Two-sided jump and mean slope magnitude for the ordered pair (i, j).

    jump = (eta_j - eta_i)/|r_ij| + (eta_sym - eta_i)/|r_sym|; the mean is
    half the sum of the absolute one-sided slopes.  Without an opposite node
    the sym part is dropped from both (or an error is raised if ``fallback``
    is off).
    """
    _require_sym(mesh)
    e, side = mesh._pair_side(i, j)
    one = (eta[j] - eta[i]) / mesh.edge_lengths[e]
    if mesh._sym_present[side, e]:
        v1, v2 = mesh._sym_seg[side, e]
        s = mesh._sym_s[side, e]
        eta_sym = (1.0 - s) * eta[v1] + s * eta[v2]
        sym = (eta_sym - eta[i]) / mesh._sym_len[side, e]
        return {"jump": float(one + sym), "mean": float(0.5 * (abs(one) + abs(sym)))}
    if not fallback:
        raise ValueError(f"no opposite node for pair ({i}, {j}) and fallback disabled")
    return {"jump": float(one), "mean": float(0.5 * abs(one))}


def shock_detector_all(mesh: TriMesh, eta: np.ndarray, q: float) -> np.ndarray:
    """Detector value in [0, 1] at every vertex (vectorized)."""
    if q <= 0:
        raise ValueError("detector exponent q must be positive")
    one, symv, present = _directed_slopes(mesh, eta)
    V = mesh.n_vertices
    num = np.zeros(V)
    den = np.zeros(V)
    for side in (0, 1):
        base = mesh.pairs[:, side]
        np.add.at(num, base, one[side] + symv[side])
        np.add.at(den, base, np.abs(one[side]) + np.where(present[side], np.abs(symv[side]), 0.0))
    alpha = np.zeros(V)
    ok = den > 0.0
    ratio = np.clip(np.maximum(num[ok], 0.0) / den[ok], 0.0, 1.0)
    alpha[ok] = ratio**q
    return alpha


def shock_detector(mesh: TriMesh, eta: np.ndarray, i: int, q: float) -> float:
    return float(shock_detector_all(mesh, eta, q)[i])


@dataclass(frozen=True)
class StabilizationMatrix:
    """Symmetric nonnegative edge coefficients acting as a graph Laplacian."""

    mesh: TriMesh
    nu: np.ndarray  # one coefficient per adjacency pair (i < j)
    kind: str       # "density" or "chemoattractant"

    def __post_init__(self):
        if self.nu.shape != (self.mesh.n_pairs,):
            raise ValueError("one coefficient per adjacency pair required")
        if np.any(self.nu < 0):
            raise ValueError("stabilization coefficients must be nonnegative")

    def matrix(self) -> sp.csr_matrix:
        pi, pj = self.mesh.pairs[:, 0], self.mesh.pairs[:, 1]
        V = self.mesh.n_vertices
        rows = np.concatenate([pi, pj, pi, pj])
        cols = np.concatenate([pj, pi, pi, pj])
        vals = np.concatenate([-self.nu, -self.nu, self.nu, self.nu])
        return sp.coo_matrix((vals, (rows, cols)), shape=(V, V)).tocsr()

    def apply(self, x: np.ndarray) -> np.ndarray:
        pi, pj = self.mesh.pairs[:, 0], self.mesh.pairs[:, 1]
        d = self.nu * (x[pi] - x[pj])
        out = np.zeros_like(x)
        np.add.at(out, pi, d)
        np.add.at(out, pj, -d)
        return out

    def quadratic_form(self, x: np.ndarray, y: np.ndarray) -> float:
        pi, pj = self.mesh.pairs[:, 0], self.mesh.pairs[:, 1]
        return float(np.sum(self.nu * (x[pj] - x[pi]) * (y[pj] - y[pi])))


def density_pair_fluxes(mesh: TriMesh, n: np.ndarray, transport: TransportData,
                        stiff_pair: np.ndarray, eps: float):
    """f-values of the density stabilizer for both pair directions.

    f_ij couples the derivative of the convective coefficient with the
    stiffness entry; it vanishes by definition on (numerically) equal values.
    """
    pi, pj = mesh.pairs[:, 0], mesh.pairs[:, 1]
    ni, nj = n[pi], n[pj]
    dn = nj - ni
    equal = np.abs(dn) <= EQUAL_BRANCH_REL * (1.0 + np.abs(ni))
    dn_safe = np.where(equal, 1.0, dn)
    sigma = (nj + 1.0) * (ni + 1.0) * (
        extended_log(nj + 1.0, eps) - extended_log(ni + 1.0, eps)
    ) / dn_safe**2
    f_fwd = np.where(equal, 0.0, -sigma * transport.c_fwd + stiff_pair)
    f_bwd = np.where(equal, 0.0, -sigma * transport.c_bwd + stiff_pair)
    return f_fwd, f_bwd


def assemble_density_stabilization(mesh: TriMesh, n: np.ndarray,
                                   transport: TransportData,
                                   stiff_pair: np.ndarray, eps: float,
                                   q: float,
                                   alpha: np.ndarray | None = None) -> StabilizationMatrix:
    """Artificial diffusion for the density equation."""
    if alpha is None:
        alpha = shock_detector_all(mesh, n, q)
    f_fwd, f_bwd = density_pair_fluxes(mesh, n, transport, stiff_pair, eps)
    pi, pj = mesh.pairs[:, 0], mesh.pairs[:, 1]
    nu = np.maximum(np.maximum(alpha[pi] * f_fwd, alpha[pj] * f_bwd), 0.0)
    return StabilizationMatrix(mesh=mesh, nu=nu, kind="density")


def attractant_pair_fluxes(mesh: TriMesh, transport: TransportData,
                           stiff_pair: np.ndarray, mass_pair: np.ndarray,
                           k: float):
    """f-values of the chemoattractant stabilizer (full off-diagonal budget)."""
    base = mass_pair / k + transport.half_div_pair + stiff_pair + mass_pair
    f_fwd = base + transport.c_bwd  # (u . grad phi_j, phi_i)
    f_bwd = base + transport.c_fwd
    return f_fwd, f_bwd


def assemble_attractant_stabilization(mesh: TriMesh, c: np.ndarray,
                                      transport: TransportData,
                                      stiff_pair: np.ndarray,
                                      mass_pair: np.ndarray, k: float,
                                      q: float,
                                      alpha: np.ndarray | None = None) -> StabilizationMatrix:
    """Artificial diffusion for the chemoattractant equation."""
    if k <= 0:
        raise ValueError("time step must be positive")
    if alpha is None:
        alpha = shock_detector_all(mesh, c, q)
    f_fwd, f_bwd = attractant_pair_fluxes(mesh, transport, stiff_pair, mass_pair, k)
    pi, pj = mesh.pairs[:, 0], mesh.pairs[:, 1]
    nu = np.maximum(np.maximum(alpha[pi] * f_fwd, alpha[pj] * f_bwd), 0.0)
    return StabilizationMatrix(mesh=mesh, nu=nu, kind="chemoattractant")


def dump_stabilization(mesh: TriMesh, alpha: np.ndarray, f_fwd: np.ndarray,
                       f_bwd: np.ndarray, nu: np.ndarray, path=None):
    """Per-pair diagnostic rows ``i j alpha_i alpha_j f_ij f_ji nu_ij``."""
    pi, pj = mesh.pairs[:, 0], mesh.pairs[:, 1]
    lines = [
        f"{i} {j} {ai:.17g} {aj:.17g} {fij:.17g} {fji:.17g} {v:.17g}"
        for i, j, ai, aj, fij, fji, v in zip(
            pi, pj, alpha[pi], alpha[pj], f_fwd, f_bwd, nu
        )
    ]
    text = "\n".join(lines) + "\n"
    if path is not None:
        from .mesh import _atomic_write

        _atomic_write(path, text)
    return text
