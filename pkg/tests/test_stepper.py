import numpy as np
import pytest

from gradiv.fem import Evaluator, MixedSpace, interpolate, radon7
from gradiv.linsolve import GmresSettings, factor_spd
from gradiv.mesh import generate_unit_square
from gradiv.stepper import FlowState, GradientFlowOptions, RunConfig, Stepper, run

from conftest import random_interior


@pytest.fixture(scope="module", params=["mini", "th"])
def space(request):
    return MixedSpace(generate_unit_square(6), request.param)


def make(space, **kw):
    kw.setdefault("nu", 0.1)
    kw.setdefault("dt", 0.05)
    kw.setdefault("step1_solver", "direct")
    return Stepper(space, RunConfig(family=space.family, **kw))


def exact_evaluator(space):
    # MINI products reach degree 6; the 7-point rule integrates them exactly
    return Evaluator(space, radon7()) if space.family == "mini" else Evaluator(space)


def sq(ev, *vals):
    return sum(ev.l2_sq(v) for v in vals)


# -- configuration -----------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(scheme="lagged", beta=0.2), dict(dt=0.0), dict(nu=-1.0), dict(gamma=-1.0),
                                dict(scheme="bogus"), dict(step2_solver="cg")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RunConfig(**kw)


def test_scheme_aliases():
    assert RunConfig(scheme="modular-lagged").scheme == "lagged"
    assert RunConfig(scheme="modular", t_final=1.0, dt=1 / 32).n_steps == 32


# -- Step 1 ------------------------------------------------------------------------

def test_step1_zero(space):
    st = make(space)
    u_hat, p, rep = st.step1(st.initial_state())
    assert rep.converged and not u_hat.any() and np.abs(p).max() == 0.0


def test_step1_stokes_manufactured(space):
    # linear-in-time, linear-in-space Stokes solution is reproduced exactly by BDF1
    def u(x, y, t):
        return (1 + t) * (x + 2 * y), (1 + t) * (3 * x - y)

    def f(x, y, t):
        return x + 2 * y + 1.0, 3 * x - y + 1.0

    st = make(space, boundary=u, force=f, initial_velocity=u, convection=False)
    state = st.initial_state()
    u_hat, p, rep = st.step1(state)
    exact = interpolate(space, u, st.config.dt)
    p_exact = interpolate(space, lambda x, y, t: x + y - 1.0, kind="pressure")
    assert np.abs(u_hat - exact).max() <= 1e-9
    assert np.abs(p - p_exact).max() <= 1e-9


def test_step1_taylor_green_gmres():
    from gradiv.benchmarks import TaylorGreenProblem
    tg = TaylorGreenProblem()
    space = MixedSpace(generate_unit_square(32), "mini")
    st = Stepper(space, RunConfig(nu=tg.nu, dt=1 / 32, family="mini", boundary=tg.velocity,
                                  initial_velocity=tg.velocity))
    u_hat, p, rep = st.step1(st.initial_state())
    assert rep.converged and rep.residual <= st.config.gmres.tol
    assert np.isfinite(u_hat).all()


# -- Step 2 ------------------------------------------------------------------------

def test_step2_identity_filter(space, rng):
    st = make(space, beta=0.0, gamma=0.0)
    u_hat = random_interior(space, rng)
    assert np.array_equal(st.step2_modular(st.initial_state(), u_hat), u_hat)


def test_step2_fixed_point_for_divergence_free(space):
    def rot(x, y, t):
        return y, -x

    st = make(space, beta=0.2, gamma=1.0, boundary=rot)
    u = interpolate(space, rot)
    out = st.step2_modular(FlowState(u=u, p=np.zeros(space.n_pressure)), u)
    assert np.abs(out - u).max() <= 1e-10


def test_step2_modular_identity_by_quadrature(space, rng):
    beta, gamma, dt = 0.2, 1.0, 0.05
    st = make(space, beta=beta, gamma=gamma, dt=dt)
    ev = exact_evaluator(space)
    for _ in range(5):
        u_old, u_hat = random_interior(space, rng), random_interior(space, rng)
        u = st.step2_modular(FlowState(u=u_old, p=np.zeros(space.n_pressure)), u_hat)
        F, Fo, Fh = ev.velocity(u), ev.velocity(u_old), ev.velocity(u_hat)
        d = ev.velocity(u_hat - u)
        lhs = sq(ev, Fh.u1, Fh.u2)
        rhs = (sq(ev, F.u1, F.u2) + sq(ev, d.u1, d.u2) + 2 * gamma * dt * sq(ev, F.div)
               + beta * (sq(ev, F.div) - sq(ev, Fo.div) + sq(ev, F.div - Fo.div)))
        assert rhs == pytest.approx(lhs, rel=1e-10)
        assert st.step2_identity_residual(u_old, u_hat, u) <= 1e-10


def test_step2_lagged_identity_by_quadrature(space, rng):
    gamma, dt = 2.0, 0.05
    st = make(space, scheme="lagged", gamma=gamma, dt=dt)
    ev = exact_evaluator(space)
    c = gamma * dt
    for _ in range(5):
        u_old, u_hat = random_interior(space, rng), random_interior(space, rng)
        u = st.step2_lagged(FlowState(u=u_old, p=np.zeros(space.n_pressure)), u_hat)
        F, Fo, Fh = ev.velocity(u), ev.velocity(u_old), ev.velocity(u_hat)
        d = ev.velocity(u_hat - u)
        lhs = sq(ev, Fh.u1, Fh.u2)
        rhs = (sq(ev, F.u1, F.u2) + sq(ev, d.u1, d.u2)
               + c * (sq(ev, F.u1_x) - sq(ev, Fo.u1_x) + sq(ev, F.u2_y) - sq(ev, Fo.u2_y))
               + c * (sq(ev, F.u1_x + Fo.u2_y) + sq(ev, F.u2_y + Fo.u1_x)))
        assert rhs == pytest.approx(lhs, rel=1e-10)
        assert st.step2_identity_residual(u_old, u_hat, u) <= 1e-10


def test_step2_lagged_gamma_zero(space, rng):
    st = make(space, scheme="lagged", gamma=0.0)
    u_hat = random_interior(space, rng)
    assert np.array_equal(st.step2_lagged(st.initial_state(), u_hat), u_hat)


def test_step2_lagged_components_match_joint_system(space, rng):
    gamma, dt = 1.0, 0.05
    st = make(space, scheme="lagged", gamma=gamma, dt=dt)
    ops = st.ops
    u_old, u_hat = random_interior(space, rng), random_interior(space, rng)
    u = st.step2_lagged(FlowState(u=u_old, p=np.zeros(space.n_pressure)), u_hat)
    free = space.free_velocity_dofs
    A = (ops.mass + gamma * dt * ops.graddiv_diag).tocsr()[free][:, free]
    rhs = (ops.mass @ u_hat - gamma * dt * (ops.graddiv_cross @ u_old))[free]
    joint = factor_spd(A).solve(rhs)
    assert np.abs(u[free] - joint).max() <= 1e-12 * max(np.abs(joint).max(), 1.0)


def test_step2_cached_equals_fresh(space, rng):
    st = make(space, beta=0.2, gamma=1.0)
    state = FlowState(u=random_interior(space, rng), p=np.zeros(space.n_pressure))
    u_hat = random_interior(space, rng)
    first = st.step2_modular(state, u_hat)
    again = st.step2_modular(state, u_hat)           # cached factorization
    fresh = make(space, beta=0.2, gamma=1.0).step2_modular(state, u_hat)
    assert np.abs(first - again).max() <= 1e-12 and np.abs(first - fresh).max() <= 1e-12


# -- gradient flow -----------------------------------------------------------------

def test_gradient_flow_gamma_zero(space, rng):
    st = make(space, gamma=0.0, step2_solver="gradient-flow")
    u_hat = random_interior(space, rng)
    u, rep = st.step2_gradient_flow(st.initial_state(), u_hat)
    assert rep.converged and rep.sweeps == 1
    assert np.allclose(u, u_hat, atol=1e-14)


def test_gradient_flow_matches_direct(rng):
    space = MixedSpace(generate_unit_square(8), "th")
    tol = 1e-8
    st = make(space, gamma=1.0, dt=1 / 32, step2_solver="gradient-flow",
              gradient_flow=GradientFlowOptions(tol=tol))
    direct = make(space, gamma=1.0, dt=1 / 32)
    M = st.ops.mass
    for _ in range(3):
        state = FlowState(u=random_interior(space, rng), p=np.zeros(space.n_pressure))
        u_hat = random_interior(space, rng)
        u, rep = st.step2_gradient_flow(state, u_hat)
        ref = direct.step2_modular(state, u_hat)
        assert rep.converged
        err = np.sqrt((u - ref) @ M @ (u - ref) / (ref @ M @ ref))
        assert err <= 10 * tol


def test_gradient_flow_reports_divergence(space, rng):
    st = make(space, gamma=1.0, dt=1.0, step2_solver="gradient-flow",
              gradient_flow=GradientFlowOptions(tau=1e3, max_sweeps=500))
    u, rep = st.step2_gradient_flow(st.initial_state(), random_interior(space, rng))
    assert not rep.converged and rep.contraction > 1.0


# -- whole steps and runs ----------------------------------------------------------

def test_coupled_zero_parameters_equals_none(space, rng):
    u0 = random_interior(space, rng)
    a = make(space, scheme="none", initial_velocity=u0)
    b = make(space, scheme="coupled", initial_velocity=u0)
    ua, pa, _ = a.step1(a.initial_state())
    ub, pb, _ = b.coupled_step(b.initial_state())
    assert np.array_equal(ua, ub) and np.array_equal(pa, pb)


def test_zero_parameter_schemes_coincide(space, rng):
    u0 = random_interior(space, rng)
    finals = [run(RunConfig(scheme=s, nu=0.05, dt=0.1, t_final=0.5, family=space.family, initial_velocity=u0,
                            step1_solver="direct"), space).state.u for s in ("none", "coupled", "modular", "lagged")]
    for u in finals[1:]:
        assert np.abs(u - finals[0]).max() <= 1e-12 * np.abs(finals[0]).max()


@pytest.mark.parametrize("scheme, beta, gamma", [("modular", 0.2, 1.0), ("lagged", 0.0, 1.0),
                                                 ("coupled", 0.2, 1.0), ("none", 0.0, 0.0)])
@pytest.mark.parametrize("dt", [0.01, 100.0])
def test_energy_decreases(space, rng, scheme, beta, gamma, dt):
    u0 = random_interior(space, rng)
    cfg = RunConfig(scheme=scheme, nu=0.01, dt=dt, t_final=5 * dt, beta=beta, gamma=gamma, family=space.family,
                    initial_velocity=u0, step1_solver="direct")
    st = Stepper(space, cfg)
    e_prev = st.energy(st.initial_state().u)
    res = st.run()
    for d in res.diagnostics:
        assert d.energy <= e_prev + 1e-12
        e_prev = d.energy


def test_diagnostics_are_finite(space, rng):
    cfg = RunConfig(scheme="modular", nu=0.01, dt=0.1, t_final=0.3, beta=0.2, gamma=1.0, family=space.family,
                    initial_velocity=random_interior(space, rng), step1_solver="direct", check_identities=True)
    res = run(cfg, space)
    for d in res.diagnostics:
        row = d.row()
        assert all(np.isfinite(v) for v in row.values())
        assert set(d.dissipation) == {"split", "numerical", "dispersive", "graddiv", "viscous"}
        assert d.identity_residual <= 1e-10


def test_energy_balance_with_dissipation(space, rng):
    # with f=0 the reported rate (viscous weight ν/2) bounds the energy loss, and
    # adding the other half of the viscous term closes the balance exactly
    dt = 0.1
    cfg = RunConfig(scheme="modular", nu=0.05, dt=dt, t_final=0.3, beta=0.2, gamma=1.0, family=space.family,
                    initial_velocity=random_interior(space, rng), step1_solver="direct")
    st = Stepper(space, cfg)
    ke_prev = 0.5 * st.energy(st.initial_state().u)
    for d in st.run().diagnostics:
        balance = d.kinetic_energy - ke_prev + dt * sum(d.dissipation.values())
        assert balance <= 1e-10 * ke_prev
        assert abs(balance + dt * d.dissipation["viscous"]) <= 1e-10 * ke_prev
        ke_prev = d.kinetic_energy


def test_run_aborts_cleanly_on_solver_failure():
    from gradiv.benchmarks import TaylorGreenProblem
    tg = TaylorGreenProblem()
    space = MixedSpace(generate_unit_square(8), "th")
    cfg = RunConfig(scheme="coupled", nu=tg.nu, dt=1 / 8, t_final=1.0, gamma=1.0, family="th",
                    boundary=tg.velocity, initial_velocity=tg.velocity, gmres=GmresSettings(max_iter=3))
    res = run(cfg, space)
    assert res.failed and res.failure.step == 1 and res.diagnostics == []
    assert not res.failure.report.converged


def test_partial_diagnostics_kept(rng):
    space = MixedSpace(generate_unit_square(4), "th")
    cfg = RunConfig(scheme="none", nu=0.1, dt=0.1, t_final=1.0, family="th", step1_solver="direct",
                    initial_velocity=random_interior(space, rng))
    st = Stepper(space, cfg)
    calls = []

    def boom(state, diag):
        calls.append(diag.step)
        if diag.step == 3:
            st.config.step1_solver = "gmres"
            st.config.gmres = GmresSettings(max_iter=1, tol=1e-30)

    res = st.run(callback=boom)
    assert res.failed and [d.step for d in res.diagnostics] == [1, 2, 3]
