"""Scenario configuration, presets, and the flat key-value config format.

All benchmark scenarios share the same family of data on the off-center unit
disc: a sharp Gaussian density bump of amplitude eta0 at the origin, zero
initial attractant and flow, and the linear buoyancy potential -phi0 * y.
Presets differ in eta0, phi0, the time step and the mesh refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .mesh import TriMesh, generate_disc_mesh, load_mesh, refine_region


@dataclass
class ScenarioConfig:
    # domain
    center_x: float = 0.0
    center_y: float = 0.1
    radius: float = 1.0
    target_h: float = 0.05
    mesh_file: str = ""            # overrides disc generation when set
    refine_box: tuple | None = None  # (x0, x1, y0, y1)
    refine_passes: int = 0
    # physics
    eta0: float = 350.0
    phi0: float = 10.0
    # discretization
    k: float = 1e-2
    T: float = 1.0
    eps: float = 1e-6
    q: float = 2.0
    picard_tol: float = 1e-3
    picard_max_iters: int = 50
    # run controls
    blowup_ceiling: float = 1e6
    plateau_window: int = 25
    snapshot_cadence: int = 25
    checkpoint_cadence: int = 0
    acuteness_policy: str = "warn"   # warn | abort
    deterministic: bool = True
    output_dir: str = "out"

    def validate(self):
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if not (0.0 < self.eps < 1.0):
            raise ValueError("eps must lie in (0, 1)")
        if self.q <= 0:
            raise ValueError("q must be positive")
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be positive")
        if self.picard_max_iters < 1:
            raise ValueError("picard_max_iters must be at least 1")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if not self.mesh_file and not (0 < self.target_h <= self.radius):
            raise ValueError("target_h must lie in (0, radius]")
        if self.acuteness_policy not in ("warn", "abort"):
            raise ValueError("acuteness_policy must be 'warn' or 'abort'")
        if self.refine_passes < 0:
            raise ValueError("refine_passes must be nonnegative")
        if self.refine_box is not None and len(self.refine_box) != 4:
            raise ValueError("refine_box needs exactly four numbers x0 x1 y0 y1")
        return self


PRESET_NAMES = ("case350", "case400", "case450", "case450_refined", "case450_phi50")

# Strip around the path the density peak travels (from the disc center down
# to the boundary), used by the refined blow-up preset.
REFINE_STRIP = (-0.25, 0.25, -1.0, 0.2)


def preset_scenario(name: str) -> ScenarioConfig:
    """Benchmark presets on the disc B((0, 0.1); 1) with Gaussian data."""
    base = ScenarioConfig()
    table = {
        "case350": dict(eta0=350.0, phi0=10.0, k=1e-2, T=2.0,
                        blowup_ceiling=1e6),
        "case400": dict(eta0=400.0, phi0=10.0, k=1e-2, T=2.0,
                        blowup_ceiling=1e6),
        "case450": dict(eta0=450.0, phi0=10.0, k=1e-3, T=1.0,
                        blowup_ceiling=1e4, plateau_window=100),
        "case450_refined": dict(eta0=450.0, phi0=10.0, k=1e-3, T=1.0,
                                blowup_ceiling=1e4, plateau_window=100,
                                refine_box=REFINE_STRIP, refine_passes=2),
        "case450_phi50": dict(eta0=450.0, phi0=50.0, k=1e-3, T=1.0,
                              blowup_ceiling=1e6, plateau_window=100),
    }
    if name not in table:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return replace(base, **table[name]).validate()


def gaussian_initial_density(config: ScenarioConfig):
    eta0 = config.eta0
    return lambda x, y: eta0 * np.exp(-100.0 * (x * x + y * y))


def grad_potential_vertices(config: ScenarioConfig, mesh: TriMesh) -> np.ndarray:
    """Nodal gradient of the buoyancy potential -phi0 * y."""
    g = np.zeros((mesh.n_vertices, 2))
    g[:, 1] = -config.phi0
    return g


def build_mesh(config: ScenarioConfig) -> TriMesh:
    if config.mesh_file:
        mesh = load_mesh(config.mesh_file)
    else:
        mesh = generate_disc_mesh((config.center_x, config.center_y),
                                  config.radius, config.target_h)
    if config.refine_box is not None and config.refine_passes > 0:
        x0, x1, y0, y1 = config.refine_box
        inside = lambda p: (x0 <= p[0] <= x1) and (y0 <= p[1] <= y1)
        for _ in range(config.refine_passes):
            mesh = refine_region(mesh, inside)
    return mesh


# ----------------------------------------------------------------------
# flat key-value config files
# ----------------------------------------------------------------------
_BOOL_FIELDS = {"deterministic"}
_INT_FIELDS = {"refine_passes", "picard_max_iters", "plateau_window",
               "snapshot_cadence", "checkpoint_cadence"}
_STR_FIELDS = {"mesh_file", "acuteness_policy", "output_dir"}


def write_config(config: ScenarioConfig, path):
    from .mesh import _atomic_write

    lines = ["# scenario configuration"]
    for f in fields(ScenarioConfig):
        v = getattr(config, f.name)
        if f.name == "refine_box":
            text = "none" if v is None else " ".join(f"{x:.17g}" for x in v)
        elif f.name in _BOOL_FIELDS:
            text = "true" if v else "false"
        elif f.name in _INT_FIELDS:
            text = str(int(v))
        elif f.name in _STR_FIELDS:
            text = str(v)
        else:
            text = f"{v:.17g}"
        lines.append(f"{f.name} = {text}")
    _atomic_write(path, "\n".join(lines) + "\n")


def load_config(path) -> ScenarioConfig:
    known = {f.name for f in fields(ScenarioConfig)}
    values = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, text = (s.strip() for s in line.partition("="))
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            if key in values:
                raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
            try:
                values[key] = _parse_value(key, text)
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from None
    config = ScenarioConfig(**values)
    try:
        config.validate()
    except ValueError as err:
        raise ValueError(f"{path}: {err}") from None
    return config


def _parse_value(key, text):
    if key == "refine_box":
        if text == "none":
            return None
        parts = text.split()
        if len(parts) != 4:
            raise ValueError("refine_box needs 'none' or four numbers")
        return tuple(float(p) for p in parts)
    if key in _BOOL_FIELDS:
        if text not in ("true", "false"):
            raise ValueError(f"{key} must be 'true' or 'false'")
        return text == "true"
    if key in _INT_FIELDS:
        return int(text)
    if key in _STR_FIELDS:
        return text
    return float(text)
