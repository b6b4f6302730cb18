"""Right-hand sides of the reduced models and explicit time stepping."""

from __future__ import annotations

import enum
import time as _time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .compiler.plan import EvaluationPlan, execute_plan, generate_Z
from .config import RunConfig, model_order
from .diagnostics import TimeSeriesRecord, energy, energy_decay_rate, rms
from .memory import MemoryConfig, MemoryEngine
from .spectral import (
    RangeMask, WavenumberGrid, build_grid, hermitian_enforce, masked_bilinear,
    project_divergence_free, restrict, taylor_green_field,
)
from .terms import TermEvaluator

F, G, FG = RangeMask.F, RangeMask.G, RangeMask.FG


class ModelKind(str, enum.Enum):
    GALERKIN_FULL = "galerkin-full"
    GALERKIN_RESOLVED = "galerkin-resolved"
    T_MODEL = "t-model"
    ORDER = "order"
    HIERARCHY = "hierarchy"

    @classmethod
    def parse(cls, name: str) -> tuple["ModelKind", int]:
        order = model_order(name)
        if name.startswith("order-"):
            return cls.ORDER, order
        if name.startswith("hierarchy-"):
            return cls.HIERARCHY, order
        return cls(name), 0


class BlowUpError(RuntimeError):
    pass


@dataclass
class BlowUp:
    t: float
    step: int
    reason: str
    energy: float

    def to_dict(self) -> dict:
        return {"t": self.t, "step": self.step, "reason": self.reason, "energy": self.energy}


@dataclass
class SimState:
    t: float
    step: int
    u: np.ndarray
    w: np.ndarray | None = None  # hierarchy auxiliaries, packed on F
    memory: MemoryEngine | None = None


@dataclass
class Derivative:
    du: np.ndarray
    dw: np.ndarray | None = None
    contributions: np.ndarray | None = None  # per-order memory terms, packed on F


class ModelRHS:
    """Evaluates ``d/dt`` of the state for one model kind."""

    def __init__(self, grid: WavenumberGrid, model: str, *, plans: dict | None = None,
                 real: bool = True):
        self.grid = grid
        self.kind, self.order = ModelKind.parse(model)
        self.real = real
        self.plans: dict[int, EvaluationPlan] = dict(plans or {})
        top = self.order if self.kind in (ModelKind.ORDER, ModelKind.HIERARCHY) else 0
        for j in range(3, top + 1):
            if j not in self.plans:
                self.plans[j] = generate_Z(j).plan
        self._fmask = grid.mask_array(F)

    @property
    def support(self) -> RangeMask:
        return FG if self.kind == ModelKind.GALERKIN_FULL else F

    @property
    def n_memory(self) -> int:
        if self.kind in (ModelKind.ORDER, ModelKind.HIERARCHY):
            return self.order + 1
        return 1 if self.kind == ModelKind.T_MODEL else 0

    def integrands(self, ev: TermEvaluator) -> np.ndarray:
        """``Z^j(u)`` on F for ``j = 0..order``, packed."""
        g = self.grid
        # higher orders consume Z0 (and Z1) on G too, so build them once on F u G
        if self.order >= 1:
            ev.z0
        if self.order >= 2:
            ev.z1
        out = []
        for j in range(self.order + 1):
            if j <= 2:
                z = ev.z(j, F)
            else:
                z = execute_plan(self.plans[j], g, ev.u, real=self.real, check=False).field
            out.append(g.compress_f(z))
        return np.stack(out)

    def __call__(self, u: np.ndarray, t: float, w: np.ndarray | None = None,
                 memory: MemoryEngine | None = None, step: int | None = None) -> Derivative:
        """``step`` marks an accepted state (pushed onto the memory); stages pass ``None``."""
        g = self.grid
        if self.kind == ModelKind.GALERKIN_FULL:
            return Derivative(masked_bilinear(g, u, FG, u, FG, FG, real=self.real))
        ev = TermEvaluator(g, u, check=False, real=self.real)
        rhat = ev.r_hat * self._fmask
        if self.kind == ModelKind.GALERKIN_RESOLVED:
            return Derivative(rhat)
        if self.kind == ModelKind.T_MODEL:
            c = t * g.compress_f(ev.z0_on(F))
            return Derivative(rhat + g.expand_f(c), contributions=c[None])
        z = self.integrands(ev)
        if self.kind == ModelKind.HIERARCHY:
            dw = z.copy()
            dw[:-1] += w[1:]
            return Derivative(rhat + g.expand_f(w[0]), dw, contributions=w.copy())
        if memory is None:
            raise ValueError("integral models need a memory engine")
        if step is not None:
            if memory.window.newest_step != step:
                memory.accept(step, z)
            contrib = memory.contributions()
        else:
            contrib = memory.stage_contributions(t, z)
        return Derivative(rhat + g.expand_f(contrib.sum(axis=0)), contributions=contrib)


def _finish(grid: WavenumberGrid, u: np.ndarray, support: RangeMask, project: bool):
    u = hermitian_enforce(grid, u)
    if project:
        u = project_divergence_free(grid, u)
    if support != FG:
        u = restrict(grid, u, support)
    return u


def step_modified_euler(state: SimState, rhs: ModelRHS, dt: float, *,
                        project: bool = False, f0: Derivative | None = None):
    """Heun predictor/corrector.  Returns the new state and ``f`` at the old one."""
    t = state.t
    if f0 is None:
        f0 = rhs(state.u, t, state.w, state.memory, state.step)
    u1 = state.u + dt * f0.du
    w1 = None if state.w is None else state.w + dt * f0.dw
    f1 = rhs(u1, t + dt, w1, state.memory, None)
    u = state.u + 0.5 * dt * (f0.du + f1.du)
    w = None if state.w is None else state.w + 0.5 * dt * (f0.dw + f1.dw)
    u = _finish(rhs.grid, u, rhs.support, project)
    return SimState(t + dt, state.step + 1, u, w, state.memory), f0


def step_rk4(state: SimState, rhs: ModelRHS, dt: float, *, project: bool = False,
             f0: Derivative | None = None):
    t, u0, w0 = state.t, state.u, state.w
    has_w = w0 is not None

    def stage(f: Derivative, h: float) -> Derivative:
        w = w0 + h * f.dw if has_w else None
        return rhs(u0 + h * f.du, t + h, w, state.memory, None)

    k1 = f0 or rhs(u0, t, w0, state.memory, state.step)
    k2 = stage(k1, dt / 2)
    k3 = stage(k2, dt / 2)
    k4 = stage(k3, dt)
    u = u0 + dt / 6 * (k1.du + 2 * k2.du + 2 * k3.du + k4.du)
    w = w0 + dt / 6 * (k1.dw + 2 * k2.dw + 2 * k3.dw + k4.dw) if has_w else None
    u = _finish(rhs.grid, u, rhs.support, project)
    return SimState(t + dt, state.step + 1, u, w, state.memory), k1


STEPPERS: dict[str, Callable] = {"modified-euler": step_modified_euler, "rk4": step_rk4}


# -- driver -------------------------------------------------------------------------


def initial_field(grid: WavenumberGrid, kind: str = "taylor-green", seed: int = 0,
                  amplitude: float = 0.1) -> np.ndarray:
    if kind == "taylor-green":
        return taylor_green_field(grid)
    if kind == "random":
        return random_resolved_field(grid, np.random.default_rng(seed), amplitude)
    raise ValueError(f"unknown initial condition {kind!r}")


def random_resolved_field(grid: WavenumberGrid, rng: np.random.Generator,
                          amplitude: float = 1.0) -> np.ndarray:
    """Hermitian, divergence-free, supported on F, with the zero mode removed."""
    u = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    u = restrict(grid, project_divergence_free(grid, hermitian_enforce(grid, u)), F)
    u[:, 0, 0, 0] = 0
    return amplitude * u / max(np.sqrt(np.sum(np.abs(u) ** 2)), 1e-300)


@dataclass
class SimulationResult:
    config: RunConfig
    grid: WavenumberGrid
    records: list[TimeSeriesRecord]
    state: SimState
    blowup: BlowUp | None
    wall_time: float
    first_energy_increase: float | None = None
    extra: dict = field(default_factory=dict)


def _make_memory(config: RunConfig, grid: WavenumberGrid, order: int) -> MemoryEngine:
    mc = MemoryConfig(t0=config.t0, dt=config.dt, order=order,
                      rebase_interval=config.rebase_interval, mode=config.memory_mode,
                      quadrature=config.quadrature)
    return MemoryEngine(mc, (3, grid.count(F)))


def initial_state(config: RunConfig, grid: WavenumberGrid, rhs: ModelRHS,
                  u0: np.ndarray | None = None) -> SimState:
    u = initial_field(grid, config.initial, config.seed) if u0 is None else u0.copy()
    u = restrict(grid, u, rhs.support)
    w = mem = None
    if rhs.kind == ModelKind.HIERARCHY:
        w = np.zeros((rhs.order + 1, 3, grid.count(F)), dtype=np.complex128)
    elif rhs.kind == ModelKind.ORDER:
        mem = _make_memory(config, grid, rhs.order)
    return SimState(0.0, 0, u, w, mem)


def run_simulation(config: RunConfig, *, u0: np.ndarray | None = None,
                   plans: dict | None = None, grid: WavenumberGrid | None = None,
                   progress: Callable | None = None) -> SimulationResult:
    """Step from ``t = 0`` to ``t_end``; halts early with a blow-up report."""
    config.validate()
    grid = grid or build_grid(config.n, config.m_total, workers=config.threads)
    rhs = ModelRHS(grid, config.model, plans=plans)
    state = initial_state(config, grid, rhs, u0)
    stepper = STEPPERS[config.integrator]
    mask = rhs.support
    e0 = energy(grid, state.u, mask)
    records: list[TimeSeriesRecord] = []
    blowup = None
    first_up = None
    n_steps = config.n_steps
    started = _time.perf_counter()

    def record(st: SimState, f: Derivative):
        rms_vals = ()
        if f.contributions is not None:
            rms_vals = tuple(rms(c) for c in f.contributions)
        records.append(TimeSeriesRecord(st.t, energy(grid, st.u, mask),
                                        energy_decay_rate(grid, st.u, f.du, mask), rms_vals))

    f = None
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            f = rhs(state.u, state.t, state.w, state.memory, state.step)
            if n % config.record_interval == 0:
                record(state, f)
            state, _ = stepper(state, rhs, config.dt, project=config.project_divergence, f0=f)
            state.t = (n + 1) * config.dt
            e = energy(grid, state.u, mask)
            if first_up is None and e > e0 * (1 + 1e-12) and e0 > 0:
                first_up = state.t
            if not np.isfinite(e) or not np.all(np.isfinite(state.u)):
                blowup = BlowUp(state.t, state.step, "non-finite coefficients", float(e))
                break
            if e0 > 0 and e > config.blowup_factor * e0:
                blowup = BlowUp(state.t, state.step,
                                f"energy exceeded {config.blowup_factor:g} E(0)", e)
                break
            if progress is not None:
                progress(state)
        if blowup is None or np.isfinite(energy(grid, state.u, mask)):
            f = rhs(state.u, state.t, state.w, state.memory, state.step)
            record(state, f)
    return SimulationResult(config, grid, records, state, blowup,
                            _time.perf_counter() - started, first_up)
