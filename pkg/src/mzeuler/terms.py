"""Hand-coded model terms R, R-hat, Z0, B, Z1, Z2 and the t-model term.

Every term is a short composition of :func:`masked_bilinear` calls.  Inputs are
Hermitian fields supported on F; outputs live on F u G unless noted, because
higher-order terms consume lower-order ones at G wavenumbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import RangeMask, WavenumberGrid, masked_bilinear

F, G, FG = RangeMask.F, RangeMask.G, RangeMask.FG


class SupportError(ValueError):
    """Raised when a resolved-only input carries energy on G."""


@dataclass
class TermOutput:
    field: np.ndarray
    support: RangeMask


def _check_resolved(grid: WavenumberGrid, u: np.ndarray) -> None:
    grid.check(u)
    if np.any(u[:, ~grid.in_f] != 0):
        raise SupportError("input field has nonzero coefficients outside F")


class TermEvaluator:
    """Evaluates the model terms for one resolved state, sharing intermediates.

    Each quantity is computed at most once, so asking for ``z2`` after ``z1``
    reuses R-hat, Z0, B and Z1.
    """

    def __init__(self, grid: WavenumberGrid, u_hat: np.ndarray, *, check: bool = True,
                 real: bool = True):
        if check:
            _check_resolved(grid, u_hat)
        self.grid = grid
        self.u = u_hat
        self.real = real
        self._cache: dict[str, np.ndarray] = {}

    def _b(self, x, mx, y, my, mout=FG, coeff=1.0):
        return masked_bilinear(self.grid, x, mx, y, my, mout, coeff=coeff, real=self.real)

    def _pair(self, x, mx, y, my, mout=FG):
        """``b(x|mx, y|my) + b(y|my, x|mx)`` in one symmetric evaluation."""
        return masked_bilinear(self.grid, x, mx, y, my, mout, real=self.real, mirror=True)

    def _memo(self, name, fn):
        if name not in self._cache:
            self._cache[name] = fn()
        return self._cache[name]

    @property
    def r_hat(self) -> np.ndarray:
        return self._memo("r_hat", lambda: self._b(self.u, F, self.u, F))

    @property
    def z0(self) -> np.ndarray:
        def make():
            return self._pair(self.r_hat, G, self.u, F)
        return self._memo("z0", make)

    def z0_on(self, mout: RangeMask) -> np.ndarray:
        """Z0 restricted to ``mout`` without forcing the full F u G evaluation."""
        if "z0" in self._cache or mout == FG:
            return self.z0 * self.grid.mask_array(mout)
        key = f"z0_{mout.label}"
        return self._memo(key, lambda: self._pair(self.r_hat, G, self.u, F, mout))

    @property
    def b(self) -> np.ndarray:
        def make():
            return self._pair(self.r_hat, F, self.u, F)
        return self._memo("b", make)

    @property
    def z1(self) -> np.ndarray:
        def make():
            return self._pair(self.r_hat, FG, self.r_hat, G) + self._pair(self.z0, G, self.u, F)
        return self._memo("z1", make)

    def z1_on(self, mout: RangeMask) -> np.ndarray:
        if "z1" in self._cache or mout == FG:
            return self.z1 * self.grid.mask_array(mout)
        key = f"z1_{mout.label}"

        def make():
            return (self._pair(self.r_hat, FG, self.r_hat, G, mout)
                    + self._pair(self.z0, G, self.u, F, mout))
        return self._memo(key, make)

    @property
    def z2(self) -> np.ndarray:
        """Z2 on F with mirror pairs fused and like sums grouped (three evaluations)."""
        def make():
            r, u, z0, z1 = self.r_hat, self.u, self.z0, self.z1_on(G)
            left = 2.0 * z0 + self.b
            r_f2 = r + r * self.grid.mask_array(F)  # R-hat with its F part doubled
            return (self._pair(left, FG, r, G, F) + self._pair(z0, G, r_f2, FG, F)
                    + self._pair(z1, G, u, F, F))
        return self._memo("z2", make)

    @property
    def z2_verbatim(self) -> np.ndarray:
        """The twelve printed sums, one bilinear call each, output on F."""
        def make():
            r, u, z0, b, z1 = self.r_hat, self.u, self.z0, self.b, self.z1
            bb = self._b
            return (
                bb(z0, FG, r, G, F) + bb(r, G, z0, FG, F)
                + bb(b, FG, r, G, F) + bb(r, G, b, FG, F)
                + bb(z0, G, r, F, F) + bb(r, F, z0, G, F)
                + bb(z0, FG, r, G, F) + bb(r, G, z0, FG, F)
                + bb(z0, G, r, FG, F) + bb(r, FG, z0, G, F)
                + bb(z1, G, u, F, F) + bb(u, F, z1, G, F)
            )
        return self._memo("z2_verbatim", make)

    def z(self, order: int, mout: RangeMask = F) -> np.ndarray:
        if order == 0:
            return self.z0_on(mout)
        if order == 1:
            return self.z1_on(mout)
        if order == 2:
            if mout != F:
                raise ValueError("Z2 is only evaluated on F")
            return self.z2
        raise ValueError(f"no hand-coded term for order {order}")


def rhs_full(grid: WavenumberGrid, u: np.ndarray, real: bool = True) -> TermOutput:
    """Right-hand side of the full Galerkin system on F u G."""
    grid.check(u)
    return TermOutput(masked_bilinear(grid, u, FG, u, FG, FG, real=real), FG)


def rhs_resolved(grid: WavenumberGrid, u_hat: np.ndarray) -> TermOutput:
    return TermOutput(TermEvaluator(grid, u_hat).r_hat, FG)


def z0(grid: WavenumberGrid, u_hat: np.ndarray) -> TermOutput:
    return TermOutput(TermEvaluator(grid, u_hat).z0, FG)


def b_term(grid: WavenumberGrid, u_hat: np.ndarray) -> TermOutput:
    return TermOutput(TermEvaluator(grid, u_hat).b, FG)


def z1(grid: WavenumberGrid, u_hat: np.ndarray) -> TermOutput:
    return TermOutput(TermEvaluator(grid, u_hat).z1, FG)


def z2(grid: WavenumberGrid, u_hat: np.ndarray) -> TermOutput:
    return TermOutput(TermEvaluator(grid, u_hat).z2, F)


def tmodel_term(grid: WavenumberGrid, u_hat: np.ndarray, t: float) -> TermOutput:
    if t < 0:
        raise ValueError("t-model term needs t >= 0")
    return TermOutput(t * TermEvaluator(grid, u_hat).z0_on(F), F)
