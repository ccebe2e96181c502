"""Strict sectioned key = value configuration schema (version header
"poro-hdg-config 1") and its expansion into runnable problems.

Values may carry a unit token ("36 GPa", "8.75e-2 1/GPa"); everything is
stored in SI.  Unknown sections, unknown keys, and wrong-dimension units are
rejected with the offending key path.
"""

import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import materials as mats
from .mesh import BoundarySpec, build_structured_rect, read_mesh, refine_near_point
from .local import stabilization_defaults
from .stepping import FluidInitData, SolidInitData, SourceSpec, TimeGrid, run_problem

HEADER = "poro-hdg-config 1"


class ConfigError(ValueError):
    """Invalid configuration text or values."""


# unit token -> (dimension, SI factor)
_UNITS = {
    "Pa": ("pressure", 1.0),
    "MPa": ("pressure", 1.0e6),
    "GPa": ("pressure", 1.0e9),
    "1/Pa": ("inv_pressure", 1.0),
    "1/GPa": ("inv_pressure", 1.0e-9),
    "kg/m3": ("density", 1.0),
    "m2": ("permeability", 1.0),
    "Pa.s": ("viscosity", 1.0),
    "kg/m.s": ("viscosity", 1.0),
    "m": ("length", 1.0),
    "s": ("time", 1.0),
}


@dataclass
class MeshSpec:
    kind: str = "rect"
    xmin: float = 0.0
    xmax: float = 1.0
    ymin: float = 0.0
    ymax: float = 1.0
    nx: int = 8
    ny: int = 8
    path: str = ""
    refine_center: tuple = (0.0, 0.0)
    refine_radius: float = 0.0
    refine_levels: int = 0


@dataclass
class MaterialSpec:
    model: str = "library"
    name: str = "sandstone-iso"
    E: float = 0.0
    nu: float = 0.0
    alpha: float = 0.0
    s0: float = 0.0
    rho11: float = 0.0
    rho12: float = 0.0
    rho22: tuple = (0.0, 0.0)
    eta: float = 0.0
    kappa: tuple = (0.0, 0.0)
    interface_y: float = 0.0
    below: str = ""
    above: str = ""


@dataclass
class BoundaryCfg:
    elastic_dirichlet: tuple = ("all",)
    flow_dirichlet: tuple = ("all",)


@dataclass
class InitialSpec:
    kind: str = "zero"
    field: str = "vs2"
    amplitude: float = 1.0
    l_x: float = 0.08
    l_y: float = 0.08
    center: tuple = (0.0, 0.0)
    method: str = "elliptic"


@dataclass
class OutputSpec:
    directory: str = "out"
    snapshots: int = 50
    prefix: str = "fields"


@dataclass
class ModeSpec:
    mode: str = "simulate"
    levels: int = 4
    seed: int = 0


@dataclass
class Config:
    mesh: MeshSpec = field(default_factory=MeshSpec)
    degree: int = 1
    c_s: float = 1.0
    c_f: float = 1.0
    material: MaterialSpec = field(default_factory=MaterialSpec)
    boundary: BoundaryCfg = field(default_factory=BoundaryCfg)
    initial: InitialSpec = field(default_factory=InitialSpec)
    sources: str = "none"
    dt: float = 0.0  # 0 means automatic (convergence studies)
    tfinal: float = 1.0
    output: OutputSpec = field(default_factory=OutputSpec)
    mode: ModeSpec = field(default_factory=ModeSpec)


def _parse_value(raw, dim, path):
    parts = raw.split()
    if len(parts) == 1:
        return float(parts[0])
    if len(parts) == 2:
        unit = parts[1]
        if unit not in _UNITS:
            raise ConfigError(f"{path}: unknown unit {unit!r}")
        udim, factor = _UNITS[unit]
        if dim is None or udim != dim:
            raise ConfigError(
                f"{path}: unit {unit!r} has dimension {udim}, expected {dim or 'dimensionless'}"
            )
        return float(parts[0]) * factor
    raise ConfigError(f"{path}: cannot parse value {raw!r}")


_SIDES = ("left", "right", "bottom", "top")


def _parse_sides(raw, path):
    toks = tuple(raw.split())
    if toks == ("all",) or toks == ("none",):
        return toks
    for t in toks:
        if t not in _SIDES:
            raise ConfigError(f"{path}: unknown boundary side {t!r}")
    return toks


# section -> key -> (setter path, kind, dimension)
def _read_sections(text):
    lines = [ln.split("#", 1)[0].rstrip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip()]
    if not lines or lines[0].strip() != HEADER:
        raise ConfigError(f"missing schema header {HEADER!r}")
    sections = {}
    current = None
    for ln in lines[1:]:
        s = ln.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1]
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]")
            sections[current] = {}
        else:
            if current is None:
                raise ConfigError(f"key outside of any section: {s!r}")
            if "=" not in s:
                raise ConfigError(f"[{current}]: malformed line {s!r}")
            key, val = (p.strip() for p in s.split("=", 1))
            if key in sections[current]:
                raise ConfigError(f"[{current}] {key}: duplicate key")
            sections[current][key] = val
    return sections


def parse_config(path_or_text):
    """Parse and validate a configuration file (or raw text)."""
    if "\n" not in path_or_text and os.path.exists(path_or_text):
        with open(path_or_text) as fh:
            text = fh.read()
    else:
        text = path_or_text
    sec = _read_sections(text)
    cfg = Config()

    known = {
        "mesh", "discretization", "materials", "boundary",
        "initial", "sources", "time", "output", "mode",
    }
    unknown = set(sec) - known
    if unknown:
        raise ConfigError(f"unknown section [{sorted(unknown)[0]}]")

    def take(section, key, kind="float", dim=None, default=None):
        d = sec.get(section, {})
        if key not in d:
            if default is None:
                raise ConfigError(f"[{section}] {key}: missing required key")
            return default
        raw = d.pop(key)
        path = f"[{section}] {key}"
        if kind == "float":
            return _parse_value(raw, dim, path)
        if kind == "int":
            try:
                return int(raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: expected integer, got {raw!r}") from exc
        if kind == "str":
            return raw
        if kind == "sides":
            return _parse_sides(raw, path)
        raise AssertionError(kind)

    m = cfg.mesh
    m.kind = take("mesh", "kind", "str", default="rect")
    if m.kind == "rect":
        m.xmin = take("mesh", "xmin", dim="length", default=0.0)
        m.xmax = take("mesh", "xmax", dim="length", default=1.0)
        m.ymin = take("mesh", "ymin", dim="length", default=0.0)
        m.ymax = take("mesh", "ymax", dim="length", default=1.0)
        m.nx = take("mesh", "nx", "int", default=8)
        m.ny = take("mesh", "ny", "int", default=8)
    elif m.kind == "file":
        m.path = take("mesh", "path", "str")
    else:
        raise ConfigError(f"[mesh] kind: unknown mesh kind {m.kind!r}")
    m.refine_levels = take("mesh", "refine_levels", "int", default=0)
    if m.refine_levels:
        m.refine_center = (
            take("mesh", "refine_center_x", dim="length"),
            take("mesh", "refine_center_y", dim="length"),
        )
        m.refine_radius = take("mesh", "refine_radius", dim="length")

    cfg.degree = take("discretization", "degree", "int", default=1)
    if cfg.degree < 1:
        raise ConfigError("[discretization] degree: must be >= 1")
    cfg.c_s = take("discretization", "c_s", default=1.0)
    cfg.c_f = take("discretization", "c_f", default=1.0)

    mt = cfg.material
    mt.model = take("materials", "model", "str")
    if mt.model == "library":
        mt.name = take("materials", "name", "str")
        if mt.name not in mats.material_library():
            raise ConfigError(f"[materials] name: unknown material {mt.name!r}")
    elif mt.model == "isotropic-enu":
        mt.E = take("materials", "E", dim="pressure")
        mt.nu = take("materials", "nu")
        mt.alpha = take("materials", "alpha")
        mt.s0 = take("materials", "s0", dim="inv_pressure")
        mt.rho11 = take("materials", "rho11", dim="density")
        mt.rho12 = take("materials", "rho12", dim="density")
        mt.rho22 = (
            take("materials", "rho22_1", dim="density"),
            take("materials", "rho22_2", dim="density"),
        )
        mt.eta = take("materials", "eta", dim="viscosity")
        if mt.eta > 0.0:
            mt.kappa = (
                take("materials", "kappa_1", dim="permeability"),
                take("materials", "kappa_2", dim="permeability"),
            )
        else:
            mt.kappa = (
                take("materials", "kappa_1", dim="permeability", default=1.0),
                take("materials", "kappa_2", dim="permeability", default=1.0),
            )
    elif mt.model == "split-y":
        mt.interface_y = take("materials", "interface_y", dim="length")
        mt.below = take("materials", "below", "str")
        mt.above = take("materials", "above", "str")
        lib = mats.material_library()
        for nm in (mt.below, mt.above):
            if nm not in lib:
                raise ConfigError(f"[materials]: unknown material {nm!r}")
    else:
        raise ConfigError(f"[materials] model: unknown model {mt.model!r}")

    cfg.boundary.elastic_dirichlet = take("boundary", "elastic_dirichlet", "sides", default=("all",))
    cfg.boundary.flow_dirichlet = take("boundary", "flow_dirichlet", "sides", default=("all",))

    ini = cfg.initial
    ini.kind = take("initial", "kind", "str", default="zero")
    if ini.kind not in ("zero", "manufactured", "pulse"):
        raise ConfigError(f"[initial] kind: unknown kind {ini.kind!r}")
    if ini.kind == "pulse":
        ini.field = take("initial", "field", "str")
        if ini.field not in ("vs2", "syy-and-p"):
            raise ConfigError(f"[initial] field: unknown pulse target {ini.field!r}")
        ini.amplitude = take("initial", "amplitude", default=1.0)
        ini.l_x = take("initial", "l_x", dim="length")
        ini.l_y = take("initial", "l_y", dim="length")
        ini.center = (
            take("initial", "center_x", dim="length"),
            take("initial", "center_y", dim="length"),
        )
    ini.method = take("initial", "method", "str", default="elliptic")
    if ini.method not in ("elliptic", "l2"):
        raise ConfigError(f"[initial] method: unknown method {ini.method!r}")

    cfg.sources = take("sources", "kind", "str", default="none")
    if cfg.sources not in ("none", "manufactured"):
        raise ConfigError(f"[sources] kind: unknown kind {cfg.sources!r}")
    if (cfg.sources == "manufactured" or ini.kind == "manufactured") and mt.model != "isotropic-enu":
        raise ConfigError("manufactured data requires the isotropic-enu material model")

    raw_dt = sec.get("time", {}).pop("dt", "auto")
    cfg.dt = 0.0 if raw_dt.strip() == "auto" else _parse_value(raw_dt, "time", "[time] dt")
    cfg.tfinal = take("time", "tfinal", dim="time", default=1.0)

    out = cfg.output
    out.directory = take("output", "directory", "str", default="out")
    out.snapshots = take("output", "snapshots", "int", default=50)
    out.prefix = take("output", "prefix", "str", default="fields")

    md = cfg.mode
    md.mode = take("mode", "mode", "str", default="simulate")
    if md.mode not in ("simulate", "convergence-study", "oracle-check"):
        raise ConfigError(f"[mode] mode: unknown mode {md.mode!r}")
    md.levels = take("mode", "levels", "int", default=4)
    md.seed = take("mode", "seed", "int", default=0)

    for name, d in sec.items():
        if d:
            raise ConfigError(f"[{name}] {sorted(d)[0]}: unknown key")

    _validate_material(cfg)
    return cfg


def _validate_material(cfg):
    try:
        build_material_field(cfg, mesh=None)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[materials]: {exc}") from exc


def serialize_config(cfg):
    """Config back to schema text (SI values, full round trip)."""
    L = [HEADER, "", "[mesh]", f"kind = {cfg.mesh.kind}"]
    if cfg.mesh.kind == "rect":
        for key in ("xmin", "xmax", "ymin", "ymax"):
            L.append(f"{key} = {getattr(cfg.mesh, key)!r}")
        L.append(f"nx = {cfg.mesh.nx}")
        L.append(f"ny = {cfg.mesh.ny}")
    else:
        L.append(f"path = {cfg.mesh.path}")
    L.append(f"refine_levels = {cfg.mesh.refine_levels}")
    if cfg.mesh.refine_levels:
        L.append(f"refine_center_x = {cfg.mesh.refine_center[0]!r}")
        L.append(f"refine_center_y = {cfg.mesh.refine_center[1]!r}")
        L.append(f"refine_radius = {cfg.mesh.refine_radius!r}")
    L += ["", "[discretization]", f"degree = {cfg.degree}", f"c_s = {cfg.c_s!r}", f"c_f = {cfg.c_f!r}"]
    mt = cfg.material
    L += ["", "[materials]", f"model = {mt.model}"]
    if mt.model == "library":
        L.append(f"name = {mt.name}")
    elif mt.model == "isotropic-enu":
        L.append(f"E = {mt.E!r}")
        L.append(f"nu = {mt.nu!r}")
        L.append(f"alpha = {mt.alpha!r}")
        L.append(f"s0 = {mt.s0!r}")
        L.append(f"rho11 = {mt.rho11!r}")
        L.append(f"rho12 = {mt.rho12!r}")
        L.append(f"rho22_1 = {mt.rho22[0]!r}")
        L.append(f"rho22_2 = {mt.rho22[1]!r}")
        L.append(f"eta = {mt.eta!r}")
        L.append(f"kappa_1 = {mt.kappa[0]!r}")
        L.append(f"kappa_2 = {mt.kappa[1]!r}")
    else:
        L.append(f"interface_y = {mt.interface_y!r}")
        L.append(f"below = {mt.below}")
        L.append(f"above = {mt.above}")
    L += [
        "",
        "[boundary]",
        f"elastic_dirichlet = {' '.join(cfg.boundary.elastic_dirichlet)}",
        f"flow_dirichlet = {' '.join(cfg.boundary.flow_dirichlet)}",
    ]
    ini = cfg.initial
    L += ["", "[initial]", f"kind = {ini.kind}"]
    if ini.kind == "pulse":
        L.append(f"field = {ini.field}")
        L.append(f"amplitude = {ini.amplitude!r}")
        L.append(f"l_x = {ini.l_x!r}")
        L.append(f"l_y = {ini.l_y!r}")
        L.append(f"center_x = {ini.center[0]!r}")
        L.append(f"center_y = {ini.center[1]!r}")
    L.append(f"method = {ini.method}")
    L += ["", "[sources]", f"kind = {cfg.sources}"]
    L += ["", "[time]", f"dt = {'auto' if cfg.dt == 0.0 else repr(cfg.dt)}", f"tfinal = {cfg.tfinal!r}"]
    L += [
        "",
        "[output]",
        f"directory = {cfg.output.directory}",
        f"snapshots = {cfg.output.snapshots}",
        f"prefix = {cfg.output.prefix}",
    ]
    L += [
        "",
        "[mode]",
        f"mode = {cfg.mode.mode}",
        f"levels = {cfg.mode.levels}",
        f"seed = {cfg.mode.seed}",
    ]
    return "\n".join(L) + "\n"


def gaussian_pulse(A0, l_x, l_y, center=(0.0, 0.0)):
    """Gaussian A0 exp(-((x/l_x)^2 + (y/l_y)^2)) translated to a center."""
    if l_x <= 0.0 or l_y <= 0.0:
        raise ValueError("pulse widths must be positive")
    cx, cy = center

    class Pulse:
        amplitude = A0
        widths = (l_x, l_y)

        def __call__(self, x, y):
            return A0 * np.exp(-(((x - cx) / l_x) ** 2 + ((y - cy) / l_y) ** 2))

        def dx(self, x, y):
            return self(x, y) * (-2.0 * (x - cx) / l_x**2)

        def dy(self, x, y):
            return self(x, y) * (-2.0 * (y - cy) / l_y**2)

    return Pulse()


def _side_predicate(sides, extents):
    xmin, xmax, ymin, ymax = extents
    tolx = 1e-9 * max(1.0, abs(xmax - xmin))
    toly = 1e-9 * max(1.0, abs(ymax - ymin))
    if sides == ("all",):
        return lambda x, y: True
    if sides == ("none",):
        return lambda x, y: False

    def pred(x, y):
        if "left" in sides and abs(x - xmin) < tolx:
            return True
        if "right" in sides and abs(x - xmax) < tolx:
            return True
        if "bottom" in sides and abs(y - ymin) < toly:
            return True
        if "top" in sides and abs(y - ymax) < toly:
            return True
        return False

    return pred


def build_mesh(cfg):
    if cfg.mesh.kind == "file":
        m = read_mesh(cfg.mesh.path)
    else:
        ext = (cfg.mesh.xmin, cfg.mesh.xmax, cfg.mesh.ymin, cfg.mesh.ymax)
        tags = BoundarySpec(
            _side_predicate(cfg.boundary.elastic_dirichlet, ext),
            _side_predicate(cfg.boundary.flow_dirichlet, ext),
        )
        m = build_structured_rect(*ext, cfg.mesh.nx, cfg.mesh.ny, tags)
    if cfg.mesh.refine_levels:
        m = refine_near_point(m, cfg.mesh.refine_center, cfg.mesh.refine_radius, cfg.mesh.refine_levels)
    return m


def build_material_field(cfg, mesh):
    mt = cfg.material
    lib = mats.material_library()
    if mt.model == "library":
        params = lib[mt.name]
        if mesh is None:
            return params
        return mats.MaterialField.uniform(mesh, params)
    if mt.model == "isotropic-enu":
        params = mats.from_scalars(
            C=mats.isotropic_stiffness(mt.E, mt.nu),
            alpha=mt.alpha,
            s0=mt.s0,
            rho11=mt.rho11,
            rho12=mt.rho12,
            rho22=mt.rho22,
            eta=mt.eta,
            kappa=mt.kappa,
        )
        if mesh is None:
            return params
        return mats.MaterialField.uniform(mesh, params)
    below, above = lib[mt.below], lib[mt.above]
    if mesh is None:
        return below
    yi = mt.interface_y
    return mats.MaterialField.from_predicates(
        mesh, [("below", lambda x, y: y < yi, below)], default=("above", above)
    )


def _pulse_data(cfg):
    ini = cfg.initial
    G = gaussian_pulse(ini.amplitude, ini.l_x, ini.l_y, ini.center)
    zero_v = lambda x, y: np.stack([np.zeros_like(x), np.zeros_like(x)])
    zero_s = lambda x, y: np.zeros_like(x)
    zero_t = lambda x, y: np.stack([np.zeros_like(x)] * 3)
    if ini.field == "vs2":
        solid = SolidInitData(
            sigma=zero_t,
            div_sigma=zero_v,
            v_s=lambda x, y: np.stack([np.zeros_like(x), G(x, y)]),
        )
        fluid = FluidInitData(v_f=zero_v, div_v_f=zero_s, p=zero_s)
    else:  # syy-and-p
        solid = SolidInitData(
            sigma=lambda x, y: np.stack([np.zeros_like(x), G(x, y), np.zeros_like(x)]),
            div_sigma=lambda x, y: np.stack([np.zeros_like(x), G.dy(x, y)]),
            v_s=zero_v,
        )
        fluid = FluidInitData(v_f=zero_v, div_v_f=zero_s, p=lambda x, y: G(x, y))
    return solid, fluid


class Problem:
    """A validated configuration bound to its runnable ingredients."""

    def __init__(self, cfg):
        self.cfg = cfg

    def execute(self, emit_matrix=False, echo=print):
        mode = self.cfg.mode.mode
        if mode == "simulate":
            return self._simulate(emit_matrix, echo)
        if mode == "convergence-study":
            return self._study(echo)
        return self._oracle(echo)

    def _simulate(self, emit_matrix, echo):
        from .vtkio import write_fields

        cfg = self.cfg
        m = build_mesh(cfg)
        mf = build_material_field(cfg, m)
        stab = stabilization_defaults(m, cfg.c_s, cfg.c_f)
        if cfg.dt <= 0.0:
            raise ConfigError("[time] dt: simulate mode needs an explicit time step")
        n = int(round(cfg.tfinal / cfg.dt))
        if abs(n * cfg.dt - cfg.tfinal) > 1e-9 * cfg.tfinal or n < 1:
            raise ConfigError("[time] dt: time step must divide tfinal")
        grid = TimeGrid(cfg.dt, n)

        sources = None
        solid = fluid = None
        if cfg.initial.kind == "pulse":
            solid, fluid = _pulse_data(cfg)
        elif cfg.initial.kind == "manufactured":
            from .verify import example1_solution

            exact = example1_solution(cfg.material.E, cfg.material.nu)
            solid, fluid = exact.solid_init_data(0.0), exact.fluid_init_data(0.0)
            if cfg.sources == "manufactured":
                sources = exact.source_spec()
        if cfg.sources == "manufactured" and sources is None:
            from .verify import example1_solution

            sources = example1_solution(cfg.material.E, cfg.material.nu).source_spec()

        every = max(1, n // max(1, cfg.output.snapshots))
        traj = run_problem(
            m, mf, cfg.degree, stab, grid,
            sources=sources, solid_data=solid, fluid_data=fluid,
            init_method=cfg.initial.method, snapshot_every=every,
        )
        outdir = cfg.output.directory
        os.makedirs(outdir, exist_ok=True)
        traj.write_diagnostics(os.path.join(outdir, "diagnostics.csv"))
        for i, (t, st) in enumerate(traj.snapshots):
            write_fields(traj.system, st, os.path.join(outdir, f"{cfg.output.prefix}_{i:04d}.vtk"))
        if emit_matrix:
            traj.system.export_matrix(os.path.join(outdir, "global_matrix.mtx"))
        echo(
            f"simulate: {m.n_triangles} elements, {n} steps, "
            f"final X^2 = {traj.X2[-1]:.6e} (X0^2 = {traj.X2[0]:.6e})"
        )
        return traj

    def _study(self, echo):
        from .verify import convergence_study

        cfg = self.cfg
        hs = [2.0 ** (-(i + 1)) for i in range(cfg.mode.levels)]
        rep = convergence_study(cfg.degree, hs, (cfg.material.E, cfg.material.nu), cfg.tfinal)
        echo(rep.ascii_table())
        outdir = cfg.output.directory
        os.makedirs(outdir, exist_ok=True)
        rep.write_csv(os.path.join(outdir, "convergence.csv"))
        return rep

    def _oracle(self, echo):
        from .verify import oracle_compare

        cfg = self.cfg
        m = build_mesh(cfg)
        if m.n_triangles > 128:
            m = build_structured_rect(0.0, 1.0, 0.0, 1.0, 4, 4)
        params = build_material_field(cfg, None)
        dt = cfg.dt if cfg.dt > 0.0 else 0.01
        diff = oracle_compare(m, cfg.degree, params, dt, cfg.mode.seed)
        echo(f"oracle-check: max relative difference condensed vs monolithic = {diff:.3e}")
        return diff


def expand_problem(cfg):
    return Problem(cfg)
