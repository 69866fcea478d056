"""Per-step monitors, domain constants, and regime classification.

The solver asserts nothing by itself; these monitors compute the invariant
flags (positivity, mass conservation, the attractant mass recursion) and the
energy-like functional, and the classifier turns a maxima series into
bounded / blow-up / undecided.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# per-step tolerances for the invariant flags
MASS_RTOL = 1e-8
RECURSION_RTOL = 1e-8


@dataclass(frozen=True)
class InvariantFlags:
    positivity: bool = True
    n_mass: bool = True
    c_recursion: bool = True
    log_domain: bool = True

    def all_ok(self):
        return self.positivity and self.n_mass and self.c_recursion and self.log_domain

    def token(self):
        if self.all_ok():
            return "ok"
        bad = [
            name
            for name, ok in (
                ("positivity", self.positivity),
                ("n_mass", self.n_mass),
                ("c_recursion", self.c_recursion),
                ("log_domain", self.log_domain),
            )
            if not ok
        ]
        return "|".join(bad)


@dataclass(frozen=True)
class DiagnosticsRecord:
    step: int
    time: float
    mass_n: float
    mass_c: float
    min_n: float
    max_n: float
    min_c: float
    max_c: float
    u_l2: float
    gradu_l2: float
    energy: float
    picard_iters: int
    flags: InvariantFlags = field(default_factory=InvariantFlags)


CSV_HEADER = ("step,time,mass_n,mass_c,min_n,max_n,min_c,max_c,"
              "u_l2,gradu_l2,energy,picard_iters,flags")


def make_record(disc, state, picard_iters: int, flags: InvariantFlags | None = None):
    n = state.n.values
    c = state.c.values
    u = state.uh_p.velocity
    return DiagnosticsRecord(
        step=state.step,
        time=state.time,
        mass_n=disc.lumped_mass_of(n),
        mass_c=disc.lumped_mass_of(c),
        min_n=float(n.min()),
        max_n=float(n.max()),
        min_c=float(c.min()),
        max_c=float(c.max()),
        u_l2=disc.velocity_l2(u),
        gradu_l2=disc.velocity_h1semi(u),
        energy=energy_functional(disc, n, c),
        picard_iters=picard_iters,
        flags=flags or InvariantFlags(),
    )


def energy_functional(disc, n: np.ndarray, c: np.ndarray) -> float:
    """-(log(n+1), 1)_h + ||c||_L2^2 (consistent mass for the quadratic part)."""
    if np.any(n <= -1.0):
        raise ValueError("energy undefined: density at or below -1")
    lumped = disc.scalar.lumped
    return float(-(lumped @ np.log1p(n)) + c @ (disc.scalar.mass @ c))


def relative_entropy(disc, n: np.ndarray, ref_mean: float) -> float:
    """Sum of m_i n_i log(n_i / ref_mean); nonnegative against the own mean."""
    if np.any(n <= 0.0) or ref_mean <= 0.0:
        raise ValueError("relative entropy needs positive density and reference")
    lumped = disc.scalar.lumped
    return float(lumped @ (n * np.log(n / ref_mean)))


def lumped_mean(disc, n: np.ndarray) -> float:
    lumped = disc.scalar.lumped
    return float(lumped @ n) / float(lumped.sum())


def verify_step_invariants(prev, next_state, k: float, disc) -> InvariantFlags:
    """Flags for positivity, density mass conservation, attractant recursion."""
    n1 = next_state.n.values
    c1 = next_state.c.values
    positivity = bool(np.all(n1 > 0.0) and np.all(c1 >= 0.0))
    m_prev = disc.lumped_mass_of(prev.n.values)
    m_next = disc.lumped_mass_of(n1)
    n_mass = abs(m_next - m_prev) <= MASS_RTOL * max(abs(m_prev), 1e-30)
    mc_prev = disc.lumped_mass_of(prev.c.values)
    mc_next = disc.lumped_mass_of(c1)
    lhs = (1.0 + k) * mc_next
    rhs = mc_prev + k * m_next
    c_rec = abs(lhs - rhs) <= RECURSION_RTOL * max(abs(rhs), 1e-30)
    log_domain = bool(np.all(n1 > -1.0))
    return InvariantFlags(positivity=positivity, n_mass=n_mass,
                          c_recursion=c_rec, log_domain=log_domain)


# ----------------------------------------------------------------------
# domain constants and thresholds
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class DomainConstants:
    alpha: float    # minimum interior angle of the boundary polygon
    beta: float     # 1 for convex domains (the only supported case)
    chi: float      # alpha / beta^2
    two_chi: float
    four_chi: float


def domain_constants(mesh) -> DomainConstants:
    """Constants of the exponential-integrability bound for the mesh's polygon.

    Only convex boundary polygons are supported; non-convex ones would need
    the boundary-dependent distortion constant that is not implemented.
    """
    loop = _boundary_loop(mesh)
    pts = mesh.vertices[loop]
    n = len(pts)
    cross = np.empty(n)
    angles = np.empty(n)
    for i in range(n):
        a = pts[i - 1]
        b = pts[i]
        c = pts[(i + 1) % n]
        u = a - b
        w = c - b
        cross[i] = u[0] * w[1] - u[1] * w[0]
        angles[i] = np.arccos(
            np.clip((u @ w) / (np.hypot(*u) * np.hypot(*w)), -1.0, 1.0)
        )
    if np.any(cross < -1e-12):
        raise ValueError("non-convex boundary polygon is unsupported")
    alpha = float(angles.min())
    beta = 1.0
    chi = alpha / beta**2
    return DomainConstants(alpha=alpha, beta=beta, chi=chi,
                           two_chi=2 * chi, four_chi=4 * chi)


def _boundary_loop(mesh):
    """Boundary vertices in CCW traversal order."""
    nxt = {}
    for e in mesh.boundary_pairs:
        i, j = (int(v) for v in mesh.pairs[e])
        # orient along the (CCW) triangle owning this edge
        tid = [t for t in mesh.macroelement(i) if j in mesh.triangles[t]][0]
        tri = list(mesh.triangles[tid])
        ia, ja = tri.index(i), tri.index(j)
        if (ia + 1) % 3 == ja:
            nxt[i] = j
        else:
            nxt[j] = i
    start = next(iter(nxt))
    loop = [start]
    while True:
        cur = nxt[loop[-1]]
        if cur == start:
            break
        loop.append(cur)
    if len(loop) != len(mesh.boundary_vertices):
        raise ValueError("boundary is not a single closed loop")
    return np.array(loop)


@dataclass(frozen=True)
class ThresholdReport:
    mass_n: float
    two_chi: float
    four_chi: float
    regime: str  # subcritical-existence | conjectured-window | supercritical


def threshold_report(mass_n: float, constants: DomainConstants) -> ThresholdReport:
    if mass_n < constants.two_chi:
        regime = "subcritical-existence"
    elif mass_n < constants.four_chi:
        regime = "conjectured-window"
    else:
        regime = "supercritical"
    return ThresholdReport(mass_n=mass_n, two_chi=constants.two_chi,
                           four_chi=constants.four_chi, regime=regime)


# ----------------------------------------------------------------------
# regime classification
# ----------------------------------------------------------------------
def classify_regime(records, ceiling: float, plateau_window: int,
                    aborted: bool = False) -> str:
    """bounded / blow-up / undecided from the density-maxima series.

    Blow-up: the ceiling was crossed, or the run aborted while the trailing
    maxima were rising monotonically.  Bounded: all steps accepted and the
    trailing window varies by at most 5%.  Anything else: undecided.
    """
    if not records:
        raise ValueError("empty series")
    maxima = np.array([r.max_n for r in records])
    if np.any(maxima >= ceiling):
        return "blow-up"
    tail = maxima[-plateau_window:]
    if aborted:
        if len(tail) >= 2 and np.all(np.diff(tail) > 0):
            return "blow-up"
        return "undecided"
    if len(maxima) <= plateau_window:
        return "undecided"
    if (tail.max() - tail.min()) <= 0.05 * tail.max():
        return "bounded"
    return "undecided"


# ----------------------------------------------------------------------
# CSV time series
# ----------------------------------------------------------------------
def format_record(rec: DiagnosticsRecord) -> str:
    nums = (rec.time, rec.mass_n, rec.mass_c, rec.min_n, rec.max_n,
            rec.min_c, rec.max_c, rec.u_l2, rec.gradu_l2, rec.energy)
    return ",".join([str(rec.step)] + [f"{v:.17g}" for v in nums]
                    + [str(rec.picard_iters), rec.flags.token()])


def write_series_csv(records, path):
    from .mesh import _atomic_write

    lines = [CSV_HEADER] + [format_record(r) for r in records]
    _atomic_write(path, "\n".join(lines) + "\n")


def read_series_csv(path):
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 13:
                raise ValueError(f"{path}: malformed row: {line!r}")
            flags_token = parts[12]
            flag_kwargs = dict(positivity=True, n_mass=True, c_recursion=True,
                               log_domain=True)
            if flags_token != "ok":
                for name in flags_token.split("|"):
                    flag_kwargs[name] = False
            rows.append(DiagnosticsRecord(
                step=int(parts[0]), time=float(parts[1]),
                mass_n=float(parts[2]), mass_c=float(parts[3]),
                min_n=float(parts[4]), max_n=float(parts[5]),
                min_c=float(parts[6]), max_c=float(parts[7]),
                u_l2=float(parts[8]), gradu_l2=float(parts[9]),
                energy=float(parts[10]), picard_iters=int(parts[11]),
                flags=InvariantFlags(**flag_kwargs),
            ))
    return rows
