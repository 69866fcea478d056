"""Semi-implicit time stepping for the coupled density/attractant/flow system.

Each step linearizes the density-attractant block by Picard sweeps: the edge
coefficients and both artificial-diffusion operators are frozen at the
previous iterate, which turns the attractant and density equations into
plain sparse linear solves; once the pair converges, a single linearized
momentum/pressure saddle solve advances the flow.  Convection uses the
velocity from the previous time level throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import diagnostics
from .fespace import (
    P1Field,
    P2Space,
    ScalarOperators,
    TaylorHoodField,
    VelocityOperators,
    assemble_scalar_matrices,
    assemble_taylor_hood,
    assemble_velocity_convection,
    averaged_interpolate,
    pair_values,
    ritz_darcy_project,
    solve_darcy_saddle,
)
from .mesh import TriMesh, compute_symmetric_nodes
from .operators import (
    TransportData,
    assemble_transport,
    chemotaxis_load,
    convection_starred_load,
)
from .stabilization import (
    StabilizationMatrix,
    assemble_attractant_stabilization,
    assemble_density_stabilization,
)

log = logging.getLogger(__name__)

LINEAR_RTOL = 1e-10


class PicardDivergence(RuntimeError):
    """Raised when the fixed-point sweep fails to reach tolerance."""

    def __init__(self, iterations, inc_n, inc_c):
        super().__init__(
            f"no Picard convergence in {iterations} sweeps "
            f"(increments n={inc_n:.3e}, c={inc_c:.3e})"
        )
        self.iterations = iterations
        self.inc_n = inc_n
        self.inc_c = inc_c


@dataclass(frozen=True)
class Discretization:
    """Mesh plus every velocity-independent assembled operator."""

    mesh: TriMesh
    scalar: ScalarOperators
    stiff_pair: np.ndarray
    mass_pair: np.ndarray
    p2: P2Space
    vel: VelocityOperators

    @classmethod
    def build(cls, mesh: TriMesh) -> "Discretization":
        if not mesh.has_symmetric_nodes():
            mesh = compute_symmetric_nodes(mesh)
        scalar = assemble_scalar_matrices(mesh)
        p2 = P2Space(mesh)
        vel = assemble_taylor_hood(mesh, p2)
        return cls(
            mesh=mesh,
            scalar=scalar,
            stiff_pair=pair_values(mesh, scalar.stiffness),
            mass_pair=pair_values(mesh, scalar.mass),
            p2=p2,
            vel=vel,
        )

    def lumped_mass_of(self, values: np.ndarray) -> float:
        return float(self.scalar.lumped @ values)

    def l2_lumped(self, values: np.ndarray) -> float:
        return float(np.sqrt(self.scalar.lumped @ values**2))

    def velocity_l2(self, u: np.ndarray) -> float:
        M = self.vel.mass
        return float(np.sqrt(u[0] @ (M @ u[0]) + u[1] @ (M @ u[1])))

    def velocity_h1semi(self, u: np.ndarray) -> float:
        K = self.vel.laplacian
        return float(np.sqrt(u[0] @ (K @ u[0]) + u[1] @ (K @ u[1])))


@dataclass(frozen=True)
class SimState:
    """One time level of the coupled system."""

    n: P1Field
    c: P1Field
    uh_p: TaylorHoodField
    step: int
    time: float

    def __post_init__(self):
        for arr in (self.n.values, self.c.values, self.uh_p.velocity, self.uh_p.pressure):
            arr.setflags(write=False)


@dataclass(frozen=True)
class PicardReport:
    iterations: int
    inc_n: float
    inc_c: float
    converged: bool
    invariants: "diagnostics.InvariantFlags | None" = None


@dataclass(frozen=True)
class StepParams:
    k: float
    eps: float = 1e-6
    q: float = 2.0
    tol: float = 1e-3
    max_iters: int = 50


def initialize(disc: Discretization, n0, c0, u0=None) -> SimState:
    """Averaged interpolation of the initial densities, projected initial flow.

    ``n0`` must be strictly positive; a non-positive interpolated vertex
    value is an input error, not something to clamp.
    """
    mesh = disc.mesh
    nf = averaged_interpolate(mesh, n0)
    cf = averaged_interpolate(mesh, c0)
    if np.any(nf.values <= 0.0):
        raise ValueError("interpolated initial density has a non-positive vertex")
    if np.any(cf.values < 0.0):
        raise ValueError("interpolated initial attractant is negative somewhere")
    if u0 is None:
        u = np.zeros((2, disc.p2.n_dofs))
    else:
        u = ritz_darcy_project(mesh, disc.vel, u0)
    th = TaylorHoodField(mesh=mesh, velocity=u, pressure=np.zeros(mesh.n_vertices))
    return SimState(n=nf, c=cf, uh_p=th, step=0, time=0.0)


def _check_linear_residual(A, x, b, what):
    num = np.linalg.norm(A @ x - b)
    den = max(np.linalg.norm(b), 1e-30)
    if not np.isfinite(num) or num > LINEAR_RTOL * den:
        raise RuntimeError(f"{what} solve residual {num / den:.3e} exceeds {LINEAR_RTOL}")


def solve_c_equation(disc: Discretization, n_new: np.ndarray, c_old: np.ndarray,
                     transport: TransportData, k: float,
                     stab: StabilizationMatrix) -> np.ndarray:
    """One linear attractant solve with frozen stabilization."""
    M = disc.scalar.mass
    K = disc.scalar.stiffness
    A = (M / k + transport.cc_matrix + K + M + stab.matrix()).tocsc()
    rhs = M @ c_old / k + disc.scalar.lumped * n_new
    c = spla.spsolve(A, rhs)
    _check_linear_residual(A, c, rhs, "attractant")
    return c


def solve_n_equation(disc: Discretization, n_old: np.ndarray, n_frozen: np.ndarray,
                     c_new: np.ndarray, transport: TransportData, k: float,
                     eps: float, stab: StabilizationMatrix) -> np.ndarray:
    """One linear density solve; transport and chemotaxis enter as loads."""
    mesh = disc.mesh
    lumped = disc.scalar.lumped
    A = (sp.diags(lumped / k) + disc.scalar.stiffness + stab.matrix()).tocsc()
    rhs = (
        lumped * n_old / k
        + convection_starred_load(mesh, n_frozen, transport, eps)
        + chemotaxis_load(mesh, n_frozen, c_new, disc.stiff_pair)
    )
    n = spla.spsolve(A, rhs)
    _check_linear_residual(A, n, rhs, "density")
    return n


def solve_ns_step(disc: Discretization, u_old: np.ndarray, n_new: np.ndarray,
                  grad_phi_vertices: np.ndarray, k: float):
    """Linearized momentum/pressure step with lumped buoyancy forcing.

    The forcing is the lumped pairing of the nodal interpolant of
    n * grad(potential) with the velocity tests; only vertex dofs receive it
    because the midpoint basis functions vanish at vertices.
    """
    vel = disc.vel
    n_dofs = disc.p2.n_dofs
    N = assemble_velocity_convection(vel, u_old)
    A_scalar = vel.mass / k + N + vel.laplacian
    A_block = sp.block_diag([A_scalar, A_scalar]).tocsr()

    rhs = np.empty(2 * n_dofs)
    rhs[:n_dofs] = vel.mass @ u_old[0] / k
    rhs[n_dofs:] = vel.mass @ u_old[1] / k
    V = disc.mesh.n_vertices
    f = disc.scalar.lumped * n_new  # m_i * n_i
    rhs[:V] += f * grad_phi_vertices[:, 0]
    rhs[n_dofs : n_dofs + V] += f * grad_phi_vertices[:, 1]

    u, p = solve_darcy_saddle(disc.mesh, vel, rhs, A_block=A_block,
                              lumped=disc.scalar.lumped)
    div_res = np.linalg.norm(vel.div @ u.ravel())
    if div_res > 1e-8 * max(1.0, disc.velocity_l2(u)):
        raise RuntimeError(f"velocity not discretely divergence-free: {div_res:.3e}")
    return u, p


def picard_step(disc: Discretization, state: SimState, params: StepParams,
                grad_phi_vertices: np.ndarray):
    """Advance one time level; returns (state, report).

    Sweep order: attractant first with the freshest density, then density
    with the freshest attractant.  Raises PicardDivergence after
    ``max_iters`` sweeps without meeting the relative-increment tolerance.
    """
    mesh = disc.mesh
    k = params.k
    u_m = state.uh_p.velocity
    transport = assemble_transport(mesh, disc.p2, u_m)

    n_old = state.n.values
    c_old = state.c.values
    n_l = n_old
    c_l = c_old
    converged = False
    inc_n = inc_c = np.inf
    sweeps = 0
    for sweeps in range(1, params.max_iters + 1):
        stab_c = assemble_attractant_stabilization(
            mesh, c_l, transport, disc.stiff_pair, disc.mass_pair, k, params.q
        )
        c_next = solve_c_equation(disc, n_l, c_old, transport, k, stab_c)
        stab_n = assemble_density_stabilization(
            mesh, n_l, transport, disc.stiff_pair, params.eps, params.q
        )
        n_next = solve_n_equation(disc, n_old, n_l, c_next, transport, k,
                                  params.eps, stab_n)
        inc_n = disc.l2_lumped(n_next - n_l) / max(disc.l2_lumped(n_next), 1e-30)
        inc_c = disc.l2_lumped(c_next - c_l) / max(disc.l2_lumped(c_next), 1e-30)
        n_l, c_l = n_next, c_next
        if max(inc_n, inc_c) <= params.tol:
            converged = True
            break
    if not converged:
        raise PicardDivergence(sweeps, inc_n, inc_c)

    u_new, p_new = solve_ns_step(disc, u_m, n_l, grad_phi_vertices, k)
    new_state = SimState(
        n=P1Field(mesh, n_l),
        c=P1Field(mesh, c_l),
        uh_p=TaylorHoodField(mesh=mesh, velocity=u_new, pressure=p_new),
        step=state.step + 1,
        time=state.time + k,
    )
    flags = diagnostics.verify_step_invariants(state, new_state, k, disc)
    report = PicardReport(
        iterations=sweeps, inc_n=inc_n, inc_c=inc_c, converged=True,
        invariants=flags,
    )
    return new_state, report


@dataclass
class RunResult:
    records: list
    states: list  # snapshot states (per cadence)
    final_state: SimState
    classification: str
    stop_reason: str
    aborted: bool


def run_simulation(config, mesh: TriMesh | None = None, disc: Discretization | None = None,
                   initial_state: SimState | None = None, sinks=None) -> RunResult:
    """Advance from t=0 to t=T or until a stop condition.

    ``config`` is a ScenarioConfig.  ``sinks``, if given, is a mapping with
    optional callables ``record(rec)``, ``snapshot(state)`` and
    ``checkpoint(state)`` invoked as the run produces output.
    """
    from .config import build_mesh, gaussian_initial_density, grad_potential_vertices

    sinks = sinks or {}
    if disc is None:
        if mesh is None:
            mesh = build_mesh(config)
        disc = Discretization.build(mesh)
    mesh = disc.mesh

    from .mesh import check_weak_acuteness

    audit = check_weak_acuteness(mesh)
    if not audit.passed:
        msg = f"mesh is not weakly acute ({len(audit.offenders)} offending pairs)"
        if getattr(config, "acuteness_policy", "warn") == "abort":
            raise RuntimeError(msg)
        log.warning(msg)

    grad_phi = grad_potential_vertices(config, mesh)
    if initial_state is None:
        state = initialize(disc, gaussian_initial_density(config),
                           lambda x, y: 0.0, None)
    else:
        state = initial_state
    params = StepParams(k=config.k, eps=config.eps, q=config.q,
                        tol=config.picard_tol, max_iters=config.picard_max_iters)

    records = [diagnostics.make_record(disc, state, picard_iters=0,
                                       flags=diagnostics.InvariantFlags())]
    snapshots = [state] if config.snapshot_cadence else []
    _emit(sinks, "record", records[-1])
    if config.snapshot_cadence:
        _emit(sinks, "snapshot", state)

    aborted = False
    stop_reason = "final-time"
    t_end = config.T * (1.0 - 1e-12)
    while state.time < t_end:
        ok = False
        k_try = params.k
        last_err = None
        for attempt in range(5):
            try:
                new_state, report = picard_step(
                    disc, state, StepParams(k=k_try, eps=params.eps, q=params.q,
                                            tol=params.tol,
                                            max_iters=params.max_iters),
                    grad_phi,
                )
                ok = True
                break
            except PicardDivergence as err:
                last_err = err
                k_try *= 0.5
                log.warning("step %d: %s; retrying with k=%.3e",
                            state.step + 1, err, k_try)
        if not ok:
            aborted = True
            stop_reason = f"picard-cascade: {last_err}"
            log.error("aborting run at t=%.6g: %s", state.time, stop_reason)
            break

        state = new_state
        rec = diagnostics.make_record(disc, state, picard_iters=report.iterations,
                                      flags=report.invariants)
        records.append(rec)
        _emit(sinks, "record", rec)
        if config.snapshot_cadence and state.step % config.snapshot_cadence == 0:
            snapshots.append(state)
            _emit(sinks, "snapshot", state)
        cadence = getattr(config, "checkpoint_cadence", 0)
        if cadence and state.step % cadence == 0:
            _emit(sinks, "checkpoint", state)
        if rec.max_n >= config.blowup_ceiling:
            stop_reason = "blow-up ceiling"
            break

    classification = diagnostics.classify_regime(
        records, ceiling=config.blowup_ceiling,
        plateau_window=config.plateau_window, aborted=aborted,
    )
    return RunResult(records=records, states=snapshots, final_state=state,
                     classification=classification, stop_reason=stop_reason,
                     aborted=aborted)


def _emit(sinks, name, payload):
    fn = sinks.get(name)
    if fn is not None:
        fn(payload)
