import math

import numpy as np
import pytest
import sympy

from gradiv.benchmarks import (
    TaylorGreenProblem,
    convergence_rates,
    drag_lift,
    export_fields,
    packaged_mesh,
    pressure_drop,
    read_csv,
    read_vtk,
    run_taylor_green,
    write_csv,
)
from gradiv.benchmarks.cli import main
from gradiv.benchmarks.functionals import force_test_vectors
from gradiv.benchmarks.problems import cylinder_profile, step_profile
from gradiv.benchmarks.runners import read_grid
from gradiv.fem import Evaluator, MixedSpace, assemble_operators, interpolate
from gradiv.mesh import CYLINDER, INLET, OUTLET, WALL, generate_step_channel, generate_unit_square, validate
from gradiv.stepper import FlowState


# -- Taylor-Green data -----------------------------------------------------------

def test_taylor_green_strong_residual_vanishes():
    tg = TaylorGreenProblem()
    space = MixedSpace(generate_unit_square(16), "th")
    ev = Evaluator(space)
    x, y = ev.points[..., 0], ev.points[..., 1]
    for t in (0.0, 0.37, 1.0):
        r1, r2 = tg.momentum_residual(x, y, t)
        assert math.sqrt(ev.l2_sq(r1) + ev.l2_sq(r2)) <= 1e-8


def test_taylor_green_derivatives_match_symbolic():
    x, y, t = sympy.symbols("x y t")
    k, tau = sympy.pi, 100
    e = sympy.exp(-2 * k ** 2 * t / tau)
    u1 = -sympy.cos(k * x) * sympy.sin(k * y) * e
    u2 = sympy.sin(k * x) * sympy.cos(k * y) * e
    p = -(sympy.cos(2 * k * x) + sympy.cos(2 * k * y)) * e ** 2 / 4
    ref = {
        "grad": [[sympy.diff(u1, x), sympy.diff(u1, y)], [sympy.diff(u2, x), sympy.diff(u2, y)]],
        "dt": [sympy.diff(u1, t), sympy.diff(u2, t)],
        "lap": [sympy.diff(u1, x, 2) + sympy.diff(u1, y, 2), sympy.diff(u2, x, 2) + sympy.diff(u2, y, 2)],
        "gradp": [sympy.diff(p, x), sympy.diff(p, y)],
    }
    assert sympy.simplify(ref["grad"][0][0] + ref["grad"][1][1]) == 0
    tg = TaylorGreenProblem()
    rng = np.random.default_rng(3)
    for xv, yv, tv in rng.random((5, 3)):
        sub = {x: xv, y: yv, t: tv}
        got = tg.velocity_gradient(xv, yv, tv)
        for i in range(2):
            for j in range(2):
                assert got[i][j] == pytest.approx(float(ref["grad"][i][j].subs(sub)), abs=1e-12)
        for name, fn in (("dt", tg.velocity_dt), ("lap", tg.velocity_laplacian), ("gradp", tg.pressure_gradient)):
            assert np.allclose(fn(xv, yv, tv), [float(v.subs(sub)) for v in ref[name]], atol=1e-12)
        assert tg.pressure(xv, yv, tv) == pytest.approx(float(p.subs(sub)), abs=1e-12)


def test_taylor_green_kinetic_energy_by_quadrature():
    tg = TaylorGreenProblem()
    space = MixedSpace(generate_unit_square(16), "th")
    ev = Evaluator(space)
    x, y = ev.points[..., 0], ev.points[..., 1]
    u1, u2 = tg.velocity(x, y, 0.5)
    assert tg.kinetic_energy(0.5) == pytest.approx(0.5 * (ev.l2_sq(u1) + ev.l2_sq(u2)), rel=1e-8)


def test_taylor_green_omega_zero_gives_zero_errors():
    # ω = 0 makes the exact velocity zero; the discrete solution stays at rest
    rep = run_taylor_green("th", "modular", 1.0, 0.2, [4], problem=TaylorGreenProblem(omega=0.0, t_final=0.25))
    row = rep.rows[0]
    for key in ("velocity_inf", "velocity_l2", "div_inf", "div_l2", "pressure_l2"):
        assert row[key] <= 1e-10


def test_convergence_rates_formula():
    rates = convergence_rates([16, 32, 64], [1.0, 0.25, 0.0625])
    assert math.isnan(rates[0]) and rates[1:] == pytest.approx([2.0, 2.0])
    assert math.isnan(convergence_rates([1, 2], [1.0, 0.0])[1])


def test_taylor_green_run_rows_and_series():
    rep = run_taylor_green("mini", "lagged", 1.0, 0.0, [4, 8], t_final=0.25, check_identities=True)
    assert [r["m"] for r in rep.rows] == [4, 8]
    for r in rep.rows:
        assert not r["failed"] and r["steps"] == round(0.25 * r["m"])
        assert r["identity_residual"] <= 1e-10
        assert len(rep.series[f"m={r['m']}"]) == r["steps"]
    assert rep.rows[1]["velocity_inf"] < rep.rows[0]["velocity_inf"]


def test_inflow_profiles():
    assert step_profile(0.0, np.array(5.0), 0.0)[0] == pytest.approx(1.0)
    assert step_profile(0.0, np.array([0.0, 10.0]), 0.0)[0] == pytest.approx([0.0, 0.0])
    # mean of the cylinder profile over the inlet is 2/3 of the peak 1.5 at t = 4
    y = np.linspace(0, 0.41, 20001)
    u = cylinder_profile(0.0, y, 4.0)[0]
    assert u.max() == pytest.approx(1.5, rel=1e-6)
    assert np.trapezoid(u, y) / 0.41 == pytest.approx(1.0, rel=1e-6)


# -- packaged meshes ---------------------------------------------------------------

@pytest.mark.parametrize("name, tags", [("step_coarse", {WALL, INLET, OUTLET}),
                                        ("cylinder_coarse", {WALL, INLET, OUTLET, CYLINDER})])
def test_packaged_meshes_are_valid(name, tags):
    mesh = packaged_mesh(name)
    assert validate(mesh).violations == []
    assert set(np.unique(mesh.boundary_tags)) == tags


def test_packaged_mesh_unknown():
    with pytest.raises(FileNotFoundError):
        packaged_mesh("nope")


# -- functionals -------------------------------------------------------------------

@pytest.fixture(scope="module")
def cylinder_space():
    space = MixedSpace(packaged_mesh("cylinder_coarse"), "th")
    return space, assemble_operators(space)


def test_drag_lift_vanish_for_fluid_at_rest(cylinder_space):
    space, ops = cylinder_space
    zero = np.zeros(space.n_velocity)
    for p in (np.zeros(space.n_pressure), np.full(space.n_pressure, 3.0)):
        state = FlowState(u=zero, p=p, u_hat=zero, u_old=zero)
        cd, cl = drag_lift(ops, state, 0.001, 0.001)
        assert abs(cd) <= 1e-12 and abs(cl) <= 1e-12
    assert drag_lift(ops, FlowState(u=zero, p=np.zeros(space.n_pressure)), 0.001, 0.001) == (0.0, 0.0)


def test_drag_from_hydrostatic_pressure(cylinder_space):
    # p = x at rest: ∫ p ∇·v over the domain equals ∫ p ∇·v computed by quadrature
    space, ops = cylinder_space
    zero = np.zeros(space.n_velocity)
    p = interpolate(space, lambda x, y, t: x, kind="pressure")
    cd, cl = drag_lift(ops, FlowState(u=zero, p=p, u_hat=zero, u_old=zero), 0.001, 0.001)
    vx, vy = force_test_vectors(space)
    ev = Evaluator(space)
    px = ev.points[..., 0]
    ref_x = ev.integrate(px * ev.velocity(vx).div)
    ref_y = ev.integrate(px * ev.velocity(vy).div)
    assert cd == pytest.approx(20.0 * ref_x, rel=1e-10)
    assert abs(cl - 20.0 * ref_y) <= 1e-10


def test_force_vectors_require_tag():
    space = MixedSpace(generate_unit_square(2), "th")
    with pytest.raises(ValueError):
        force_test_vectors(space, CYLINDER)


def test_pressure_drop_linear(cylinder_space):
    space, _ = cylinder_space
    p = interpolate(space, lambda x, y, t: 2.0 * x, kind="pressure")
    assert pressure_drop(space, p) == pytest.approx(-0.2, abs=1e-12)


# -- output ------------------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    rows = [dict(t=0.1 * k, value=math.pi / 3 ** k, flag=k % 2 == 0) for k in range(7)]
    path = write_csv(tmp_path / "s.csv", rows)
    back = read_csv(path)
    assert len(back) == len(rows)
    for a, b in zip(rows, back):
        assert float(b["value"]) == a["value"] and float(b["t"]) == a["t"]
        assert b["flag"] == str(int(a["flag"]))


VTK_FIELDS = {
    # element: (velocity, its divergence), reproduced exactly by the element
    "th": (lambda x, y, t: (x * y, x - y), lambda x, y: y - 1.0),
    "mini": (lambda x, y, t: (2 * x + y, x - y), lambda x, y: np.ones_like(x)),
}


@pytest.mark.parametrize("family, factor", [("th", 4), ("mini", 1)])
def test_vtk_round_trip(tmp_path, family, factor):
    field, div = VTK_FIELDS[family]
    space = MixedSpace(generate_unit_square(3), family)
    u = interpolate(space, field)
    p = interpolate(space, lambda x, y, t: x + 2 * y, kind="pressure")
    data = read_vtk(export_fields(tmp_path / "f.vtk", space, u, p))
    nt = len(space.mesh.triangles)
    assert len(data["cells"]) == factor * nt
    pts = data["points"]
    ex1, ex2 = field(pts[:, 0], pts[:, 1], 0.0)
    assert np.allclose(data["point_data"]["velocity"][:, :2], np.column_stack([ex1, ex2]), atol=1e-14)
    assert np.allclose(data["point_data"]["pressure"], pts[:, 0] + 2 * pts[:, 1], atol=1e-14)
    assert np.allclose(data["point_data"]["speed"], np.hypot(ex1, ex2), atol=1e-14)
    centroids = pts[data["cells"]].mean(axis=1)
    assert np.allclose(data["cell_data"]["divergence"], div(centroids[:, 0], centroids[:, 1]), atol=1e-12)


def test_read_grid(tmp_path):
    path = tmp_path / "grid.csv"
    path.write_text("beta,gamma\n# comment\n0,0.2\n800, 2000\n\n")
    assert read_grid(path) == [(0.0, 0.2), (800.0, 2000.0)]


# -- command line ------------------------------------------------------------------

def test_cli_taylor_green(tmp_path, capsys):
    assert main(["taylor-green", "--element", "th", "--m-list", "4,8", "--tstar", "0.25", "--out", str(tmp_path),
                 "--check-identities", "on"]) == 0
    errors = read_csv(tmp_path / "errors.csv")
    assert [int(r["m"]) for r in errors] == [4, 8]
    assert float(errors[0]["identity_residual"]) <= 1e-10
    assert "velocity_inf_rate" in read_csv(tmp_path / "rates.csv")[0]
    assert len(read_csv(tmp_path / "energy.csv")) == 1 + 2
    assert "m=  8" in capsys.readouterr().out


def test_cli_timing(tmp_path):
    grid = tmp_path / "grid.csv"
    grid.write_text("beta,gamma\n0,0\n0.2,1\n")
    assert main(["timing", "--grid", str(grid), "--m", "4", "--tstar", "0.5", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "timing.csv")
    assert len(rows) == 2 and rows[0]["coupled_failed"] == "0"


def test_cli_step(tmp_path):
    from gradiv.mesh import write_mesh
    mesh_path = tmp_path / "tiny.mesh"
    write_mesh(generate_step_channel(1), mesh_path)
    assert main(["step", "--mesh", str(mesh_path), "--dt", "0.05", "--tstar", "0.1", "--out", str(tmp_path)]) == 0
    div = read_csv(tmp_path / "divnorm.csv")
    assert len(div) == 3 * 2
    assert {r["scheme"] for r in div} == {"none", "coupled", "modular"}
    for s in ("none", "coupled", "modular"):
        assert (tmp_path / f"step_{s}.vtk").exists()


def test_cli_cylinder(tmp_path):
    assert main(["cylinder", "--tstar", "0.002", "--out", str(tmp_path)]) == 0
    forces = read_csv(tmp_path / "forces.csv")
    assert len(forces) == 2 * 2
    assert all(math.isfinite(float(r["c_d"])) for r in forces)
    summary = read_csv(tmp_path / "cylinder_summary.csv")
    assert {r["scheme"] for r in summary} == {"none", "modular"}
