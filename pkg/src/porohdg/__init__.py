"""2D hybridizable discontinuous Galerkin solver for poroelastic waves.

The package discretizes the first-order velocity/stress/pressure form of the
low-frequency poroelastic wave equations with an HDG method: degree-(k+1)
interior solid velocity, degree-k stress/seepage velocity/pressure, and
degree-k traces of solid velocity and pressure on the mesh skeleton, with a
reduced face projection in the traction stabilization.  Element interiors
are condensed out of the one-step implicit-midpoint system, so the global
solve couples only the trace unknowns.  Verification machinery (manufactured
solutions, convergence tables, energy diagnostics, a condensed-versus-
monolithic oracle) and wave-propagation scenario presets ship alongside.
"""

from . import config, fe, local, materials, mesh, scenarios, stepping, system, verify, vtkio
from .config import Config, ConfigError, gaussian_pulse, parse_config, serialize_config
from .fe import affine_map, dim_Pk, edge_basis, quadrature, simplex_basis
from .local import (
    Stabilization,
    cn_element_system,
    face_reduction,
    local_matrices,
    stabilization_defaults,
)
from .materials import (
    MaterialField,
    MaterialParams,
    anisotropic_stiffness,
    compliance,
    drag_matrix,
    isotropic_stiffness,
    material_library,
    plane_wave_speeds,
    validate_densities,
)
from .mesh import (
    BoundarySpec,
    Mesh,
    build_structured_rect,
    mesh_size,
    read_mesh,
    refine_near_point,
    write_mesh,
)
from .scenarios import PRESETS, scenario
from .stepping import (
    FluidInitData,
    SolidInitData,
    SourceSpec,
    TimeGrid,
    Trajectory,
    advance,
    init_fluid,
    init_solid,
    make_initial_state,
    midpoint_ops,
    run,
    run_problem,
)
from .system import (
    CondensedSystem,
    DofMap,
    State,
    assemble_monolithic,
    build_dofmap,
    condense,
    element_systems,
)
from .verify import (
    ErrorReport,
    ExactSolution,
    convergence_study,
    energy_series,
    eoc,
    example1_solution,
    l2_error,
    oracle_compare,
)
from .vtkio import read_fields, write_fields

__version__ = "0.1.0"
