"""Benchmark problems, drivers, force functionals and output."""

from .export import export_fields, export_series, read_csv, read_vtk, write_csv
from .functionals import drag_lift, pressure_drop
from .problems import TaylorGreenProblem, packaged_mesh, packaged_mesh_path
from .runners import (
    BenchmarkReport,
    convergence_rates,
    relative_l2_difference,
    run_cylinder,
    run_step_flow,
    run_taylor_green,
    run_timing,
)

__all__ = [
    "BenchmarkReport", "TaylorGreenProblem", "convergence_rates", "drag_lift", "export_fields", "export_series",
    "packaged_mesh", "packaged_mesh_path", "pressure_drop", "read_csv", "read_vtk", "relative_l2_difference",
    "run_cylinder", "run_step_flow", "run_taylor_green", "run_timing", "write_csv",
]
