"""Wavenumber bookkeeping and the masked bilinear convolution kernel.

Fields are stored as complex arrays of shape ``(3, M, M, M)`` in standard FFT
wrap-around order.  The resolved set ``F`` is the negation-symmetric cube
``|k_i| <= N/2 - 1``; ``G`` holds every other representable mode except the
"oddball" modes (a component equal to ``-M/2``), which have no negation on the
grid and are kept identically zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft


class RangeMask(enum.IntFlag):
    """Named subsets of the wavenumber cube, closed under intersection and union."""

    EMPTY = 0
    F = 1
    G = 2
    FG = 3

    @property
    def label(self) -> str:
        return {0: "0", 1: "F", 2: "G", 3: "FG"}[int(self)]

    @property
    def atoms(self) -> tuple["RangeMask", ...]:
        return tuple(m for m in (RangeMask.F, RangeMask.G) if m & self)


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class WavenumberGrid:
    n_resolved: int
    m_total: int
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        n, m = self.n_resolved, self.m_total
        if n < 2 or n % 2 or m % 2:
            raise ValueError(f"grid sizes must be even and >= 2, got N={n}, M={m}")
        if m < 2 * n:
            raise ValueError(
                f"m_total={m} < 2*n_resolved={2 * n}: quadratic interactions out of F "
                "would alias"
            )

    @classmethod
    def build(cls, n_resolved: int, m_total: int | None = None, workers: int = 1):
        return cls(n_resolved, 2 * n_resolved if m_total is None else m_total, workers)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        m = self.m_total
        return (3, m, m, m)

    @cached_property
    def k1d(self) -> np.ndarray:
        return np.rint(np.fft.fftfreq(self.m_total) * self.m_total).astype(np.int64)

    @cached_property
    def kvec(self) -> np.ndarray:
        """Integer wavevectors, shape ``(3, M, M, M)``."""
        return np.stack(np.meshgrid(self.k1d, self.k1d, self.k1d, indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.kvec**2, axis=0)

    @cached_property
    def oddball(self) -> np.ndarray:
        return np.any(self.kvec == -self.m_total // 2, axis=0)

    @cached_property
    def in_f(self) -> np.ndarray:
        return np.all(np.abs(self.kvec) <= self.n_resolved // 2 - 1, axis=0)

    @cached_property
    def in_g(self) -> np.ndarray:
        return ~self.in_f & ~self.oddball

    def mask_array(self, mask: RangeMask) -> np.ndarray:
        out = np.zeros(self.shape[1:], dtype=bool)
        if mask & RangeMask.F:
            out |= self.in_f
        if mask & RangeMask.G:
            out |= self.in_g
        return out

    def support_radius(self, mask: RangeMask) -> int:
        """Largest ``|k_i|`` occurring in ``mask`` (-1 for the empty mask)."""
        if mask & RangeMask.G:
            return self.m_total // 2 - 1
        if mask & RangeMask.F:
            return self.n_resolved // 2 - 1
        return -1

    def count(self, mask: RangeMask) -> int:
        return int(self.mask_array(mask).sum())

    @cached_property
    def neg_index(self) -> np.ndarray:
        """Index of ``-k`` along one axis (oddball maps to itself)."""
        return (-np.arange(self.m_total)) % self.m_total

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=np.complex128)

    def index_of(self, k) -> tuple[int, int, int]:
        m = self.m_total
        return tuple(int(c) % m for c in k)

    def check(self, u: np.ndarray) -> None:
        if u.shape != self.shape:
            raise GridMismatchError(f"field shape {u.shape} does not match grid {self.shape}")

    # compact storage of F-supported fields (history snapshots)
    @cached_property
    def f_flat_index(self) -> np.ndarray:
        return np.flatnonzero(self.in_f)

    def compress_f(self, u: np.ndarray) -> np.ndarray:
        return u.reshape(3, -1)[:, self.f_flat_index]

    def expand_f(self, packed: np.ndarray) -> np.ndarray:
        out = self.zeros()
        out.reshape(3, -1)[:, self.f_flat_index] = packed
        return out


def build_grid(n_resolved: int, m_total: int | None = None, workers: int = 1) -> WavenumberGrid:
    return WavenumberGrid.build(n_resolved, m_total, workers)


def leray_apply(k, v) -> np.ndarray:
    """Apply ``A_k = I - k k^T / |k|^2`` to a single complex 3-vector."""
    k = np.asarray(k, dtype=float)
    v = np.asarray(v, dtype=complex)
    kk = k @ k
    if kk == 0:
        return v.copy()
    return v - k * (k @ v) / kk


def leray_matrix(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    kk = k @ k
    if kk == 0:
        return np.eye(3)
    return np.eye(3) - np.outer(k, k) / kk


def _project(kvec: np.ndarray, k2: np.ndarray, v: np.ndarray) -> np.ndarray:
    kdotv = np.einsum("i...,i...->...", kvec, v)
    safe = np.where(k2 == 0, 1, k2)
    return v - kvec * (kdotv / safe)


def project_divergence_free(grid: WavenumberGrid, u: np.ndarray) -> np.ndarray:
    grid.check(u)
    return _project(grid.kvec, grid.k2, u)


def divergence_norm(grid: WavenumberGrid, u: np.ndarray) -> float:
    grid.check(u)
    return float(np.max(np.abs(np.einsum("i...,i...->...", grid.kvec, u))))


def hermitian_enforce(grid: WavenumberGrid, u: np.ndarray) -> np.ndarray:
    grid.check(u)
    n = grid.neg_index
    mirrored = np.conj(u[:, n][:, :, n][:, :, :, n])
    out = 0.5 * (u + mirrored)
    out[:, grid.oddball] = 0
    return out


def restrict(grid: WavenumberGrid, u: np.ndarray, mask: RangeMask) -> np.ndarray:
    return np.where(grid.mask_array(mask), u, 0)


def taylor_green_field(grid: WavenumberGrid) -> np.ndarray:
    """Coefficients of ``(sin x cos y cos z, -cos x sin y cos z, 0)``."""
    if grid.n_resolved < 4:
        raise ValueError("Taylor-Green modes (+-1,+-1,+-1) need n_resolved >= 4")
    u = grid.zeros()
    for s1 in (-1, 1):
        for s2 in (-1, 1):
            for s3 in (-1, 1):
                idx = grid.index_of((s1, s2, s3))
                u[(0,) + idx] = -1j * s1 / 8
                u[(1,) + idx] = 1j * s2 / 8
    return u


# ---------------------------------------------------------------------------
# masked bilinear kernel


@dataclass(frozen=True)
class _Scatter:
    """Flat indices moving the live modes of one masked sub-cube onto a padded grid."""

    src: np.ndarray  # into the M^3 grid
    dst_c: np.ndarray  # into the full L^3 padded grid
    src_r: np.ndarray  # subset stored in the rfft half spectrum ...
    dst_r: np.ndarray  # ... and its slots in the L x L x (L/2+1) array


@dataclass(frozen=True)
class _ConvPlan:
    size: int
    x: _Scatter
    y: _Scatter
    out_dst: np.ndarray  # flat output indices on the M^3 grid
    out_src_c: np.ndarray  # matching flat indices in the L^3 spectrum
    out_src_r: np.ndarray  # ... and in the half spectrum
    out_flip: np.ndarray  # read the conjugate of -k from the half spectrum
    kvec: np.ndarray  # (3, n_out)
    k2: np.ndarray


def padded_size(grid: WavenumberGrid, mx: RangeMask, my: RangeMask, mout: RangeMask) -> int:
    """Smallest FFT-friendly length for which the product is alias free on ``mout``.

    With input radii ``a``, ``b`` and output radius ``c``, a wrapped sum
    ``s - L`` can land on a kept output only if ``L <= a + b + c``.
    """
    a, b, c = (grid.support_radius(m) for m in (mx, my, mout))
    need = max(a + b + c + 1, 2 * c + 1)
    return sfft.next_fast_len(need)


def _live_modes(grid: WavenumberGrid, mask: RangeMask):
    """Flat grid indices of ``mask`` and their integer wavevectors."""
    flat = np.flatnonzero(grid.mask_array(mask))
    k = grid.kvec.reshape(3, -1)[:, flat]
    return flat, k


def _scatter(grid: WavenumberGrid, mask: RangeMask, size: int) -> _Scatter:
    half = size // 2 + 1
    src, k = _live_modes(grid, mask)
    sl = k % size
    dst_c = (sl[0] * size + sl[1]) * size + sl[2]
    keep = sl[2] < half
    dst_r = (sl[0, keep] * size + sl[1, keep]) * half + sl[2, keep]
    return _Scatter(src, dst_c, src[keep], dst_r)


_PLANS: dict = {}


def _conv_plan(grid: WavenumberGrid, mx: RangeMask, my: RangeMask, mout: RangeMask) -> _ConvPlan:
    key = (grid.n_resolved, grid.m_total, mx, my, mout)
    plan = _PLANS.get(key)
    if plan is not None:
        return plan
    size = padded_size(grid, mx, my, mout)
    half = size // 2 + 1
    out, k = _live_modes(grid, mout)
    sl = k % size
    flip = k[2] < 0
    neg = (-k) % size
    r = np.where(flip, neg, sl)
    plan = _ConvPlan(
        size=size,
        x=_scatter(grid, mx, size),
        y=_scatter(grid, my, size),
        out_dst=out,
        out_src_c=(sl[0] * size + sl[1]) * size + sl[2],
        out_src_r=(r[0] * size + r[1]) * half + r[2],
        out_flip=flip,
        kvec=k.astype(float),
        k2=np.sum(k.astype(float) ** 2, axis=0),
    )
    _PLANS[key] = plan
    return plan


def _to_physical(u: np.ndarray, sc: _Scatter, size: int, real: bool, workers: int):
    flat = u.reshape(3, -1)
    if real:
        half = size // 2 + 1
        pad = np.zeros((3, size * size * half), dtype=np.complex128)
        pad[:, sc.dst_r] = flat[:, sc.src_r]
        return sfft.irfftn(pad.reshape(3, size, size, half), s=(size,) * 3, axes=(1, 2, 3),
                           norm="forward", workers=workers)
    pad = np.zeros((3, size ** 3), dtype=np.complex128)
    pad[:, sc.dst_c] = flat[:, sc.src]
    return sfft.ifftn(pad.reshape(3, size, size, size), axes=(1, 2, 3), norm="forward",
                      workers=workers)


_SYM_PAIRS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
_SYM_INDEX = np.array([[0, 1, 2], [1, 3, 4], [2, 4, 5]])


def masked_bilinear(
    grid: WavenumberGrid,
    x: np.ndarray,
    mx: RangeMask,
    y: np.ndarray,
    my: RangeMask,
    mout: RangeMask = RangeMask.FG,
    coeff: complex = 1.0,
    real: bool = False,
    mirror: bool = False,
) -> np.ndarray:
    """``-i A_k sum_{p+q=k, p in mx, q in my} (k . x_p) y_q`` for ``k`` in ``mout``.

    Evaluated pseudospectrally on a zero-padded grid sized so that no aliased
    sum can reach a kept output wavenumber.  ``real=True`` takes a faster path
    that is only valid when both inputs are Hermitian (real in physical space).
    ``mirror=True`` adds the swapped term ``b(y|my, x|mx)``; the two share one
    symmetric product tensor, which halves the transform count.
    """
    grid.check(x)
    grid.check(y)
    out = grid.zeros()
    if not (mx and my and mout):
        return out
    plan = _conv_plan(grid, mx, my, mout)
    w = grid.workers
    L = plan.size
    same = y is x and my == mx
    xp = _to_physical(x, plan.x, L, real, w)
    yp = xp if same else _to_physical(y, plan.y, L, real, w)
    if same or mirror:
        # S_ij = x_j y_i (+ x_i y_j) is symmetric: six distinct components
        scale = 2.0 if (same and mirror) else 1.0
        prod = np.empty((6,) + xp.shape[1:], dtype=xp.dtype)
        for c, (i, j) in enumerate(_SYM_PAIRS):
            prod[c] = xp[j] * yp[i]
            if mirror and not same:
                prod[c] += xp[i] * yp[j]
            elif scale != 1.0:
                prod[c] *= scale
        index = _SYM_INDEX
    else:
        prod = (xp[:, None] * yp[None, :]).reshape((9,) + xp.shape[1:])  # (j, i) -> 3j + i
        index = np.arange(9).reshape(3, 3)  # index[j, i]
    if real:
        spec = sfft.rfftn(prod, axes=(1, 2, 3), norm="forward", workers=w)
        spec = spec.reshape(len(prod), -1)[:, plan.out_src_r]
        spec = np.where(plan.out_flip, np.conj(spec), spec)
    else:
        spec = sfft.fftn(prod, axes=(1, 2, 3), norm="forward", workers=w)
        spec = spec.reshape(len(prod), -1)[:, plan.out_src_c]
    k = plan.kvec
    conv = np.empty((3, spec.shape[1]), dtype=np.complex128)
    for i in range(3):
        conv[i] = k[0] * spec[index[0, i]] + k[1] * spec[index[1, i]] + k[2] * spec[index[2, i]]
    res = _project(k, plan.k2, conv) * (-1j * coeff)
    out.reshape(3, -1)[:, plan.out_dst] = res
    return out


# ---------------------------------------------------------------------------
# brute-force reference


@dataclass
class _Triples:
    k: np.ndarray
    p: np.ndarray
    q: np.ndarray


_TRIPLES: dict = {}


def convolution_triples(grid: WavenumberGrid) -> _Triples:
    """All flat-index triples ``(k, p, q)`` of non-oddball modes with ``p + q = k``."""
    key = (grid.n_resolved, grid.m_total)
    if key in _TRIPLES:
        return _TRIPLES[key]
    m = grid.m_total
    active = np.flatnonzero(~grid.oddball.ravel())
    kv = grid.kvec.reshape(3, -1)
    ks, ps, qs = [], [], []
    half = m // 2
    for p in active:
        s = kv[:, active] + kv[:, [p]]  # candidate k = p + q
        ok = np.all((s > -half) & (s < half), axis=0)
        q = active[ok]
        kk = s[:, ok] % m
        kflat = (kk[0] * m + kk[1]) * m + kk[2]
        ks.append(kflat)
        ps.append(np.full(q.size, p))
        qs.append(q)
    tri = _Triples(np.concatenate(ks), np.concatenate(ps), np.concatenate(qs))
    _TRIPLES[key] = tri
    return tri


def direct_bilinear(
    grid: WavenumberGrid,
    x: np.ndarray,
    mx: RangeMask,
    y: np.ndarray,
    my: RangeMask,
    mout: RangeMask = RangeMask.FG,
) -> np.ndarray:
    """Reference double sum over explicit ``(p, q)`` pairs; O(M^6)."""
    grid.check(x)
    grid.check(y)
    tri = convolution_triples(grid)
    xf = (x * grid.mask_array(mx)).reshape(3, -1)
    yf = (y * grid.mask_array(my)).reshape(3, -1)
    kv = grid.kvec.reshape(3, -1).astype(float)
    kdotx = np.einsum("it,it->t", kv[:, tri.k], xf[:, tri.p])
    n = grid.m_total**3
    acc = np.zeros((3, n), dtype=np.complex128)
    for i in range(3):
        vals = kdotx * yf[i, tri.q]
        acc[i] = np.bincount(tri.k, weights=vals.real, minlength=n) + 1j * np.bincount(
            tri.k, weights=vals.imag, minlength=n
        )
    acc = acc.reshape(grid.shape)
    out = -1j * _project(grid.kvec.astype(float), grid.k2, acc)
    return out * grid.mask_array(mout)
