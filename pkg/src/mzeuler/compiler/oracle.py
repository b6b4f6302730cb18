"""Independent polynomial-calculus oracle for the memory-expansion terms.

The full right-hand side ``R`` is a quadratic polynomial in the mode
coordinates.  ``L = sum_i R_i d/dx_i`` acts on polynomial functions, ``P``
substitutes zero for every G coordinate and ``Q = I - P``.  Writing out the
monomials of ``PL(QL)^n QL u_k`` is hopeless beyond toy sizes (the quintic
term alone has ~10^8 monomials on an N=4 grid), so the oracle evaluates the
same polynomial expression exactly through hyper-dual numbers: every ``L``
introduces a fresh nilpotent infinitesimal ``e`` and reads off the ``e``
coefficient of ``f(x + e R(x))``.  Quadratic arithmetic on hyper-duals is exact,
so the only error is floating-point round-off.

Nothing here uses FFTs or the F/G range decomposition of the printed sums; the
only ingredient shared with the fast path is the definition of the two sets.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..spectral import RangeMask, WavenumberGrid, direct_bilinear

HyperDual = dict  # bitmask of infinitesimals -> coefficient array


class OracleSizeError(RuntimeError):
    pass


def _hd_add(a: HyperDual, b: HyperDual, sign: float = 1.0) -> HyperDual:
    out = dict(a)
    for s, v in b.items():
        out[s] = out[s] + sign * v if s in out else sign * v
    return out


def _hd_bilinear(a: HyperDual, b: HyperDual, kernel: Callable) -> HyperDual:
    out: HyperDual = {}
    for sa, va in a.items():
        for sb, vb in b.items():
            if sa & sb:
                continue
            s = sa | sb
            term = kernel(va, vb)
            out[s] = out[s] + term if s in out else term
    return out


class PolynomialOracle:
    """Evaluates compositions of ``L``, ``P``, ``Q`` applied to the coordinate map.

    ``ops`` are read outermost first, e.g. ``"PLQL"`` is ``PLQL u``.
    """

    def __init__(self, grid: WavenumberGrid, max_grid: int = 8,
                 kernel: Callable | None = None, project: Callable | None = None):
        if grid.m_total > max_grid:
            raise OracleSizeError(
                f"oracle limited to M <= {max_grid} (got M={grid.m_total}); cost grows as M^6"
            )
        self.grid = grid
        fmask = grid.mask_array(RangeMask.F)
        self._kernel = kernel or (lambda x, y: direct_bilinear(
            grid, x, RangeMask.FG, y, RangeMask.FG, RangeMask.FG))
        self._project = project or (lambda x: x * fmask)

    def evaluate(self, ops: Sequence[str], x: np.ndarray) -> np.ndarray:
        res = self._ev(tuple(ops), {0: np.asarray(x, dtype=np.complex128)}, 0)
        return res.get(0, np.zeros_like(x, dtype=np.complex128))

    def _ev(self, ops: tuple, x: HyperDual, depth: int) -> HyperDual:
        if not ops:
            return x
        op, rest = ops[0], ops[1:]
        if op == "P":
            return self._ev(rest, {s: self._project(v) for s, v in x.items()}, depth)
        if op == "Q":
            whole = self._ev(rest, x, depth)
            proj = self._ev(rest, {s: self._project(v) for s, v in x.items()}, depth)
            return _hd_add(whole, proj, -1.0)
        if op == "L":
            bit = 1 << depth
            rx = _hd_bilinear(x, x, self._kernel)
            y = dict(x)
            for s, v in rx.items():
                y[s | bit] = v
            r = self._ev(rest, y, depth + 1)
            return {s & ~bit: v for s, v in r.items() if s & bit}
        raise ValueError(f"unknown operator {op!r}")


def z_ops(n: int) -> str:
    """Operator word for ``Z^n = PL (QL)^n QL``."""
    if n < 0:
        raise ValueError("order must be nonnegative")
    return "PL" + "QL" * n + "QL"


def poly_oracle_Z(n: int, grid: WavenumberGrid, u_hat: np.ndarray,
                  max_order: int = 4) -> np.ndarray:
    """``(PL(QL)^n QL u)_k`` evaluated at ``u_hat`` for every k on F u G."""
    if n > max_order:
        raise OracleSizeError(f"oracle order {n} exceeds guard {max_order}")
    return PolynomialOracle(grid).evaluate(z_ops(n), u_hat)
