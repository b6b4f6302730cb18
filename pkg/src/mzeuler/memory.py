"""Truncated memory integrals over a sliding window of past model terms.

The order-n model needs, at time t,

    sum_j (1/j!) int_{max(0, t - t0)}^{t} (t - s)^j Z^j(u(s)) ds .

Expanding ``(t - s)^j`` binomially about an origin ``t_base`` reduces this to
moments ``M_{j,m} = int (s - t_base)^m Z^j ds`` that are independent of ``t``,
so each accepted step only adds the newest trapezoid panel and subtracts the
one that left the window.  Snapshots are stored compressed to F.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy import integrate

QUADRATURES = ("trapezoid", "simpson")
MODES = ("incremental", "direct")


class HistoryError(ValueError):
    pass


@dataclass(frozen=True)
class MemoryConfig:
    """``t0=None`` means an untruncated integral from time zero."""

    t0: float | None
    dt: float
    order: int = 0
    rebase_interval: float | None = None
    mode: str = "incremental"
    quadrature: str = "trapezoid"
    max_t0: float = 1.0e4

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.order < 0:
            raise ValueError("memory order must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"memory mode must be one of {MODES}")
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"quadrature must be one of {QUADRATURES}")
        if self.quadrature == "simpson" and self.mode != "direct":
            raise ValueError("simpson quadrature is only available in direct mode")
        if self.t0 is not None:
            if self.t0 <= 0:
                raise ValueError("t0 must be positive")
            if self.t0 > self.max_t0:
                raise ValueError(f"t0={self.t0} exceeds the configured bound {self.max_t0}")
            w = round(self.t0 / self.dt)
            if w < 1 or abs(w * self.dt - self.t0) > 1e-9 * max(self.t0, 1.0):
                raise ValueError(f"t0={self.t0} is not an integer multiple of dt={self.dt}")

    @property
    def window_steps(self) -> int | None:
        return None if self.t0 is None else round(self.t0 / self.dt)

    @property
    def rebase_every(self) -> float:
        if self.rebase_interval is not None:
            return self.rebase_interval
        return self.t0 if self.t0 is not None else 10.0


class HistoryWindow:
    """Consecutive accepted-step snapshots covering ``[t - t0, t]``.

    The window keeps ``W + 1`` trapezoid nodes, ``W = t0/dt``; pushing beyond
    that evicts the oldest node, whose time is ``t - t0 - dt``.
    """

    def __init__(self, capacity: int | None, dt: float):
        self.capacity = capacity
        self.dt = dt
        self._steps: deque[int] = deque()
        self._snaps: deque[np.ndarray] = deque()

    def __len__(self) -> int:
        return len(self._steps)

    def time(self, step: int) -> float:
        return step * self.dt

    @property
    def newest_step(self) -> int | None:
        return self._steps[-1] if self._steps else None

    @property
    def oldest_step(self) -> int | None:
        return self._steps[0] if self._steps else None

    def push(self, step: int, snapshot: np.ndarray):
        """Append a snapshot; returns the evicted ``(step, snapshot)`` or ``None``."""
        if self._steps and step != self._steps[-1] + 1:
            raise HistoryError(
                f"non-contiguous push: step {step} after {self._steps[-1]}")
        if not self._steps and step < 0:
            raise HistoryError("negative step index")
        self._steps.append(step)
        self._snaps.append(np.array(snapshot, copy=True))
        if self.capacity is not None and len(self._steps) > self.capacity + 1:
            return self._steps.popleft(), self._snaps.popleft()
        return None

    def snapshot(self, step: int) -> np.ndarray:
        i = step - self._steps[0]
        if i < 0 or i >= len(self._steps):
            raise HistoryError(f"step {step} is not in the window")
        return self._snaps[i]

    def value_at(self, t: float) -> np.ndarray:
        """Linear interpolation between stored nodes."""
        x = t / self.dt
        i = math.floor(x + 1e-9)
        frac = x - i
        if frac < 1e-9:
            return self.snapshot(i)
        return (1 - frac) * self.snapshot(i) + frac * self.snapshot(i + 1)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        times = np.array([s * self.dt for s in self._steps])
        return times, np.stack(list(self._snaps)) if self._snaps else np.empty((0,))


class MomentAccumulators:
    """``M[j, m] = int (s - t_base)^m Z^j(s) ds`` over the window, ``m <= j``."""

    def __init__(self, order: int, shape: tuple, t_base: float = 0.0):
        self.order = order
        self.t_base = t_base
        self.m = np.zeros((order + 1, order + 1) + tuple(shape), dtype=np.complex128)

    def add_panel(self, ta: float, za: np.ndarray, tb: float, zb: np.ndarray,
                  sign: float = 1.0) -> None:
        """Trapezoid panel on ``[ta, tb]``; ``za``/``zb`` hold one slice per order."""
        h = 0.5 * (tb - ta) * sign
        xa, xb = ta - self.t_base, tb - self.t_base
        for j in range(self.order + 1):
            for m in range(j + 1):
                self.m[j, m] += h * (xa ** m * za[j] + xb ** m * zb[j])

    def rebase(self, new_base: float) -> None:
        d = self.t_base - new_base
        old = self.m.copy()
        for j in range(self.order + 1):
            for m in range(j + 1):
                self.m[j, m] = sum(math.comb(m, i) * d ** (m - i) * old[j, i]
                                   for i in range(m + 1))
        self.t_base = new_base

    def contributions(self, t: float) -> np.ndarray:
        """Per-order ``(1/j!) int (t - s)^j Z^j ds``."""
        x = t - self.t_base
        out = np.zeros((self.order + 1,) + self.m.shape[2:], dtype=np.complex128)
        for j in range(self.order + 1):
            for m in range(j + 1):
                out[j] += math.comb(j, m) * x ** (j - m) * (-1) ** m * self.m[j, m]
            out[j] /= math.factorial(j)
        return out

    def copy(self) -> "MomentAccumulators":
        c = MomentAccumulators(self.order, self.m.shape[2:], self.t_base)
        c.m = self.m.copy()
        return c


def update_moments(acc: MomentAccumulators, window: HistoryWindow, step: int,
                   evicted=None) -> None:
    """Slide the moments after ``step`` was pushed onto ``window``."""
    if step > window.oldest_step:
        acc.add_panel(window.time(step - 1), window.snapshot(step - 1),
                      window.time(step), window.snapshot(step))
    if evicted is not None:
        old_step, old_snap = evicted
        if window.oldest_step != old_step + 1:
            raise HistoryError("missing history snapshot for the expired panel")
        acc.add_panel(window.time(old_step), old_snap,
                      window.time(old_step + 1), window.snapshot(old_step + 1), sign=-1.0)


def moments_from_scratch(window: HistoryWindow, order: int, t_base: float) -> np.ndarray:
    times, snaps = window.arrays()
    acc = MomentAccumulators(order, snaps.shape[2:], t_base)
    for a in range(len(times) - 1):
        acc.add_panel(times[a], snaps[a], times[a + 1], snaps[a + 1])
    return acc.m


def _weights(t: float, times: np.ndarray, order: int) -> np.ndarray:
    return np.stack([(t - times) ** j / math.factorial(j) for j in range(order + 1)])


def _quad(y: np.ndarray, x: np.ndarray, quadrature: str) -> np.ndarray:
    if len(x) < 2:
        return np.zeros(y.shape[1:], dtype=y.dtype)
    if quadrature == "simpson":
        return integrate.simpson(y, x=x, axis=0)
    return integrate.trapezoid(y, x=x, axis=0)


def direct_window_integral(window: HistoryWindow, t: float, order: int,
                           t0: float | None = None, quadrature: str = "trapezoid",
                           stage: tuple | None = None) -> np.ndarray:
    """Per-order memory contributions summed node by node (the O(W) reference).

    ``stage=(t_s, z_s)`` appends a provisional node past the newest accepted one.
    """
    times, snaps = window.arrays()
    if len(times) == 0:
        raise HistoryError("empty history")
    lo = 0.0 if t0 is None else max(0.0, t - t0)
    keep = times >= lo - 1e-9 * window.dt
    xs, ys = list(times[keep]), list(snaps[keep])
    if xs and xs[0] > lo + 1e-9 * window.dt:
        xs.insert(0, lo)
        ys.insert(0, window.value_at(lo))
    if stage is not None:
        ts, zs = stage
        if ts > xs[-1] + 1e-12:
            xs.append(ts)
            ys.append(zs)
    x = np.array(xs)
    y = np.stack(ys)  # (nodes, orders, ...)
    w = _weights(t, x, order)  # (orders, nodes)
    out = np.empty((order + 1,) + y.shape[2:], dtype=np.complex128)
    for j in range(order + 1):
        wy = w[j].reshape((-1,) + (1,) * (y.ndim - 2)) * y[:, j]
        out[j] = _quad(wy, x, quadrature)
    return out


class MemoryEngine:
    """History window plus moments for one simulation.

    Call :meth:`accept` once per accepted step (at the accepted state), then
    :meth:`contributions` for the memory at that time or
    :meth:`stage_contributions` for provisional stage states inside the step.
    """

    def __init__(self, config: MemoryConfig, shape: tuple):
        self.config = config
        self.window = HistoryWindow(config.window_steps, config.dt)
        self.acc = MomentAccumulators(config.order, shape)
        self._last_rebase = 0.0

    @property
    def t(self) -> float | None:
        s = self.window.newest_step
        return None if s is None else self.window.time(s)

    def accept(self, step: int, integrands: np.ndarray) -> None:
        evicted = self.window.push(step, integrands)
        if self.config.mode == "incremental":
            update_moments(self.acc, self.window, step, evicted)
            t = self.window.time(step)
            if t - self._last_rebase >= self.config.rebase_every - 1e-12:
                self.acc.rebase(t)
                self._last_rebase = t

    def _lo(self, t: float) -> float:
        return 0.0 if self.config.t0 is None else max(0.0, t - self.config.t0)

    def contributions(self) -> np.ndarray:
        t = self.t
        if self.config.mode == "direct":
            return direct_window_integral(self.window, t, self.config.order, self.config.t0,
                                          self.config.quadrature)
        return self.acc.contributions(t)

    def stage_contributions(self, t_s: float, z_s: np.ndarray) -> np.ndarray:
        """Memory at a stage time inside the step that starts at the newest node."""
        t_n = self.t
        if t_s <= t_n + 1e-12:
            return self.contributions()
        cfg = self.config
        if cfg.mode == "direct":
            return direct_window_integral(self.window, t_s, cfg.order, cfg.t0,
                                          cfg.quadrature, stage=(t_s, z_s))
        acc = self.acc.copy()
        acc.add_panel(t_n, self.window.snapshot(self.window.newest_step), t_s, z_s)
        lo_n, lo_s = self._lo(t_n), self._lo(t_s)
        if lo_s > lo_n + 1e-12:
            acc.add_panel(lo_n, self.window.value_at(lo_n), lo_s,
                          self.window.value_at(lo_s), sign=-1.0)
        return acc.contributions(t_s)


def memory_term(contributions: np.ndarray) -> np.ndarray:
    """Sum of the per-order contributions."""
    return contributions.sum(axis=0)
