import numpy as np
import pytest

from mzeuler import integrate
from mzeuler.config import ConfigError, RunConfig
from mzeuler.diagnostics import energy
from mzeuler.integrate import (
    Derivative, ModelKind, ModelRHS, SimState, initial_state, random_resolved_field,
    run_simulation, step_modified_euler, step_rk4,
)
from mzeuler.memory import direct_window_integral
from mzeuler.spectral import RangeMask, divergence_norm, taylor_green_field
from mzeuler.terms import TermEvaluator

F, G, FG = RangeMask.F, RangeMask.G, RangeMask.FG
ALL_MODELS = ["galerkin-full", "galerkin-resolved", "t-model", "order-0", "order-1",
              "order-2", "hierarchy-0", "hierarchy-2"]


class LinearRHS:
    """``du/dt = lam u`` on the whole grid."""

    def __init__(self, grid, lam):
        self.grid, self.lam, self.support = grid, lam, FG

    def __call__(self, u, t, w=None, memory=None, step=None):
        return Derivative(self.lam * u)


def cfg(**kw):
    base = dict(model="order-0", n=4, dt=1e-3, t_end=0.05, t0=0.02, record_interval=10,
                fit_window=(0.01, 0.05))
    return RunConfig(**(base | kw))


class TestModelKind:
    @pytest.mark.parametrize("name, kind, order", [
        ("order-2", ModelKind.ORDER, 2), ("hierarchy-3", ModelKind.HIERARCHY, 3),
        ("t-model", ModelKind.T_MODEL, 0), ("galerkin-full", ModelKind.GALERKIN_FULL, 0),
    ])
    def test_parse(self, name, kind, order):
        assert ModelKind.parse(name) == (kind, order)

    def test_unknown(self):
        with pytest.raises(ValueError):
            ModelKind.parse("order-x")


class TestRHS:
    @pytest.mark.parametrize("model", ALL_MODELS)
    def test_zero_state(self, grid4, model):
        c = cfg(model=model)
        rhs = ModelRHS(grid4, model)
        st = initial_state(c, grid4, rhs, grid4.zeros())
        f = rhs(st.u, 0.0, st.w, st.memory, 0)
        assert not np.any(f.du)
        if f.dw is not None:
            assert not np.any(f.dw)

    def test_order0_at_start_is_rhat(self, grid4, field4):
        rhs = ModelRHS(grid4, "order-0")
        st = initial_state(cfg(), grid4, rhs, field4)
        f = rhs(st.u, 0.0, None, st.memory, 0)
        ref = TermEvaluator(grid4, field4).r_hat * grid4.mask_array(F)
        assert np.array_equal(f.du, ref)

    def test_tmodel_is_t_times_z0(self, grid4, field4):
        rhs = ModelRHS(grid4, "t-model")
        ev = TermEvaluator(grid4, field4)
        t = 0.37
        ref = (ev.r_hat + t * ev.z0) * grid4.mask_array(F)
        assert np.abs(rhs(field4, t).du - ref).max() <= 1e-14 * np.abs(ref).max()

    def test_hierarchy_structure(self, grid4, field4, rng):
        rhs = ModelRHS(grid4, "hierarchy-1")
        w = rng.normal(size=(2, 3, grid4.count(F))) + 0j
        f = rhs(field4, 0.0, w)
        ev = TermEvaluator(grid4, field4)
        assert np.allclose(f.du, ev.r_hat * grid4.mask_array(F) + grid4.expand_f(w[0]))
        assert np.allclose(f.dw[0], grid4.compress_f(ev.z(0)) + w[1])
        assert np.allclose(f.dw[1], grid4.compress_f(ev.z(1)))

    def test_galerkin_full_supports_fg(self, grid4):
        assert ModelRHS(grid4, "galerkin-full").support == FG
        assert ModelRHS(grid4, "order-1").n_memory == 2

    def test_integral_model_needs_memory(self, grid4, field4):
        with pytest.raises(ValueError):
            ModelRHS(grid4, "order-0")(field4, 0.0)

    def test_order3_uses_compiled_plan(self, grid4, field4):
        rhs = ModelRHS(grid4, "hierarchy-3")
        z = rhs.integrands(TermEvaluator(grid4, field4, check=False))
        assert z.shape == (4, 3, grid4.count(F))

    def test_memory_matches_direct_integral(self, grid4):
        c = cfg(t_end=0.06, t0=0.03)
        res = run_simulation(c, grid=grid4)
        mem = res.state.memory
        ref = direct_window_integral(mem.window, res.state.t, 0, c.t0)
        got = mem.contributions()
        assert np.abs(got - ref).max() <= 1e-12 * np.abs(ref).max()


class TestSteppers:
    def test_heun_linear(self, grid4, field4):
        lam, dt = -0.7, 0.1
        st = SimState(0.0, 0, field4)
        out, _ = step_modified_euler(st, LinearRHS(grid4, lam), dt)
        z = lam * dt
        assert np.abs(out.u - (1 + z + z * z / 2) * field4).max() < 1e-16

    def test_rk4_linear(self, grid4, field4):
        lam, dt = -0.7, 0.1
        st = SimState(0.0, 0, field4)
        out, _ = step_rk4(st, LinearRHS(grid4, lam), dt)
        z = lam * dt
        assert np.abs(out.u - (1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24) * field4).max() < 1e-16
        assert np.abs(out.u - np.exp(z) * field4).max() <= abs(z) ** 5 * np.abs(field4).max()

    @pytest.mark.parametrize("stepper", [step_modified_euler, step_rk4])
    def test_zero_fixed_point(self, grid4, stepper):
        rhs = ModelRHS(grid4, "order-1")
        st = initial_state(cfg(model="order-1"), grid4, rhs, grid4.zeros())
        for _ in range(3):
            st, _ = stepper(st, rhs, 1e-3)
        assert not np.any(st.u)


class TestRuns:
    def test_t_end_zero(self):
        res = run_simulation(cfg(t_end=0.0))
        assert len(res.records) == 1
        assert res.records[0].E == pytest.approx(0.125, abs=1e-15)

    @pytest.mark.parametrize("model", ["galerkin-full", "galerkin-resolved"])
    def test_galerkin_conserves_energy(self, model):
        res = run_simulation(cfg(model=model, t_end=0.2))
        e0 = res.records[0].E
        assert abs(res.records[-1].E - e0) / e0 <= 1e-9

    def test_drift_second_order(self):
        def drift(dt):
            r = run_simulation(cfg(model="galerkin-full", dt=dt, t_end=0.4, t0=None,
                                   initial="random", seed=3, record_interval=1000))
            return abs(r.records[-1].E - r.records[0].E)

        assert drift(4e-2) / drift(2e-2) >= 3.5

    def test_incompressible(self):
        res = run_simulation(cfg(model="order-1", t_end=0.1))
        assert divergence_norm(res.grid, res.state.u) <= 1e-14

    def test_records_increase_and_final_record(self):
        res = run_simulation(cfg(t_end=0.055, record_interval=20))
        ts = [r.t for r in res.records]
        assert ts == sorted(ts) and ts[-1] == pytest.approx(0.055)
        assert len(ts) == 4

    def test_deterministic(self):
        a = run_simulation(cfg(model="order-1"))
        b = run_simulation(cfg(model="order-1"))
        assert np.array_equal(a.state.u, b.state.u)

    def test_rms_recorded_per_order(self):
        res = run_simulation(cfg(model="order-1", t_end=0.03))
        assert all(len(r.rms) == 2 for r in res.records)

    def test_analytic_rate_matches_finite_difference(self):
        # untruncated: at t = t0 the window starts sliding and dE/dt has a kink
        res = run_simulation(cfg(model="order-0", t_end=0.4, t0=None, record_interval=1,
                                 initial="random", seed=1))
        rec = res.records
        e = np.array([r.E for r in rec])
        fd = (e[2:] - e[:-2]) / (2 * 1e-3)
        an = np.array([r.dEdt for r in rec[1:-1]])
        assert np.abs(fd - an).max() <= 1e-6 * np.abs(an).max()

    def test_hierarchy_w0_is_integral_of_z0(self, grid4):
        c = cfg(model="hierarchy-0", t0=None, t_end=0.05)
        res = run_simulation(c, grid=grid4)
        ref = cfg(model="order-0", t0=None, t_end=0.05)
        res2 = run_simulation(ref, grid=grid4)
        w0 = res.state.w[0]
        integral = res2.state.memory.contributions()[0]
        assert np.abs(w0 - integral).max() <= 1e-6 * np.abs(integral).max()

    def test_hierarchy0_matches_untruncated_order0(self):
        a = run_simulation(cfg(model="hierarchy-0", t0=None, t_end=0.2))
        b = run_simulation(cfg(model="order-0", t0=None, t_end=0.2))
        assert np.abs(a.state.u - b.state.u).max() <= 1e-6

    def test_blowup_reported(self, monkeypatch):
        real = integrate.STEPPERS["modified-euler"]

        def inflating(state, rhs, dt, **kw):
            new, f = real(state, rhs, dt, **kw)
            new.u = new.u * 3
            return new, f

        monkeypatch.setitem(integrate.STEPPERS, "modified-euler", inflating)
        res = run_simulation(cfg(t_end=1.0))
        # E grows ninefold per step and first exceeds 1e3 E(0) after four steps
        assert res.blowup is not None and res.blowup.step == 4
        assert "exceeded" in res.blowup.reason
        assert res.first_energy_increase == pytest.approx(1e-3)

    def test_nonfinite_reported(self, monkeypatch):
        real = integrate.STEPPERS["modified-euler"]

        def poison(state, rhs, dt, **kw):
            new, f = real(state, rhs, dt, **kw)
            new.u = new.u * np.nan
            return new, f

        monkeypatch.setitem(integrate.STEPPERS, "modified-euler", poison)
        res = run_simulation(cfg(t_end=1.0))
        assert res.blowup.reason == "non-finite coefficients" and res.blowup.step == 1

    def test_project_divergence_option(self):
        res = run_simulation(cfg(project_divergence=True))
        assert divergence_norm(res.grid, res.state.u) <= 1e-15

    def test_random_initial_field(self, grid4, rng):
        u = random_resolved_field(grid4, rng, amplitude=0.3)
        assert energy(grid4, u) == pytest.approx(0.5 * 0.09)
        assert divergence_norm(grid4, u) < 1e-15
        assert not np.any(u[:, ~grid4.in_f]) and not np.any(u[:, 0, 0, 0])

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            run_simulation(cfg(t0=0.0015))

    def test_rk4_direct_simpson(self):
        a = run_simulation(cfg(t_end=0.05))
        b = run_simulation(cfg(t_end=0.05, integrator="rk4", quadrature="simpson",
                               memory_mode="direct"))
        assert abs(a.records[-1].E - b.records[-1].E) <= 1e-9

    def test_initial_condition_is_taylor_green(self, grid4):
        rhs = ModelRHS(grid4, "order-0")
        st = initial_state(cfg(), grid4, rhs)
        assert np.array_equal(st.u, taylor_green_field(grid4))
