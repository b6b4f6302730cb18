"""Bilinear expression trees and the operator algebra L, P, Q on them.

A tree is a hashable tuple:

* ``("u", mask)``             the state field restricted to ``mask``;
* ``("b", mask, left, right)`` the kernel ``b(left, right)`` restricted to ``mask``.

A child's own mask is the summation range of the corresponding argument, so
``("b", F, ("b", G, ...), ("u", F))`` reads ``sum_{p in G, q in F}``.  Sums of
trees are ``dict[tree, int]``.  The canonical form (:func:`simplify`) splits
every ``F u G`` mask into its two atoms, merges like terms and drops zeros.
The kernel is not symmetric, so children are never reordered.
"""

from __future__ import annotations

from collections import defaultdict
from functools import lru_cache
from typing import Iterable

from ..spectral import RangeMask

F, G, FG, EMPTY = RangeMask.F, RangeMask.G, RangeMask.FG, RangeMask.EMPTY

Tree = tuple
TermSum = dict


def leaf(mask: RangeMask = FG) -> Tree:
    return ("u", RangeMask(mask))


def node(mask: RangeMask, left: Tree, right: Tree) -> Tree:
    return ("b", RangeMask(mask), left, right)


def is_leaf(t: Tree) -> bool:
    return t[0] == "u"


def mask_of(t: Tree) -> RangeMask:
    return t[1]


def with_mask(t: Tree, mask: RangeMask) -> Tree:
    return (t[0], RangeMask(mask)) + t[2:]


@lru_cache(maxsize=None)
def degree(t: Tree) -> int:
    return 1 if is_leaf(t) else degree(t[2]) + degree(t[3])


def add_into(acc: dict, items, scale=1) -> dict:
    for t, c in (items.items() if isinstance(items, dict) else items):
        acc[t] = acc.get(t, 0) + scale * c
    return acc


def clean(s: TermSum) -> TermSum:
    return {t: c for t, c in s.items() if c != 0}


# -- canonical form ------------------------------------------------------------


@lru_cache(maxsize=None)
def _atomize(t: Tree) -> tuple:
    out: dict = defaultdict(int)
    for m in RangeMask(t[1]).atoms:
        if is_leaf(t):
            out[("u", m)] += 1
            continue
        for lt, lc in _atomize(t[2]):
            for rt, rc in _atomize(t[3]):
                out[("b", m, lt, rt)] += lc * rc
    return tuple(out.items())


def atomize(t: Tree) -> TermSum:
    return dict(_atomize(t))


def simplify(s: TermSum | Iterable) -> TermSum:
    """Atomic masks, like terms merged, zero and empty-range terms removed."""
    acc: dict = defaultdict(int)
    items = s.items() if isinstance(s, dict) else s
    for t, c in items:
        if c == 0:
            continue
        for at, ac in _atomize(t):
            acc[at] += c * ac
    return {t: c for t, c in acc.items() if c != 0}


# -- operators -------------------------------------------------------------------


def rhs_tree(mask: RangeMask = FG) -> Tree:
    """``R`` restricted to ``mask``: the full quadratic right-hand side."""
    return node(mask, leaf(FG), leaf(FG))


@lru_cache(maxsize=None)
def _apply_L(t: Tree) -> tuple:
    if is_leaf(t):
        return ((rhs_tree(t[1]), 1),)
    m, lt, rt = t[1], t[2], t[3]
    out: dict = defaultdict(int)
    for lt2, c in _apply_L(lt):
        out[node(m, lt2, rt)] += c
    for rt2, c in _apply_L(rt):
        out[node(m, lt, rt2)] += c
    return tuple(out.items())


def apply_L(s: TermSum, canonical: bool = True) -> TermSum:
    """Leibniz rule; ``L`` of a leaf restricted to a range is ``R`` on that range."""
    acc: dict = defaultdict(int)
    for t, c in s.items():
        for t2, c2 in _apply_L(t):
            acc[t2] += c * c2
    return simplify(acc) if canonical else clean(acc)


@lru_cache(maxsize=None)
def p_tree(t: Tree):
    """Substitute zero for every unresolved coordinate; ``None`` if the tree dies."""
    if is_leaf(t):
        m = t[1] & F
        return ("u", RangeMask(m)) if m else None
    lt, rt = p_tree(t[2]), p_tree(t[3])
    if lt is None or rt is None:
        return None
    return (t[0], t[1], lt, rt)


def apply_P(s: TermSum, canonical: bool = True) -> TermSum:
    acc: dict = defaultdict(int)
    for t, c in s.items():
        pt = p_tree(t)
        if pt is not None:
            acc[pt] += c
    return simplify(acc) if canonical else clean(acc)


def apply_Q(s: TermSum) -> TermSum:
    acc = add_into(defaultdict(int), s)
    add_into(acc, apply_P(s, canonical=False), -1)
    return simplify(acc)


def is_p_invariant(s: TermSum) -> bool:
    return simplify(apply_P(s)) == simplify(s)


def sum_degree(s: TermSum) -> set[int]:
    return {degree(t) for t in s}


# -- generation of Z^n ---------------------------------------------------------

MAX_ORDER = 4


class TermBudgetError(RuntimeError):
    pass


@lru_cache(maxsize=None)
def _orthogonal_chain(n: int) -> tuple:
    """Canonical ``(QL)^n QL u`` on F u G."""
    if n == 0:
        return tuple(apply_Q(apply_L({leaf(FG): 1})).items())
    return tuple(apply_Q(apply_L(dict(_orthogonal_chain(n - 1)))).items())


def orthogonal_chain(n: int) -> TermSum:
    return dict(_orthogonal_chain(n))


def z_trees(n: int, max_order: int = MAX_ORDER) -> TermSum:
    """Canonical tree-sum of ``Z^n = PL(QL)^n QL u`` on all outputs."""
    if n < 0:
        raise ValueError("order must be nonnegative")
    if n > max_order:
        raise TermBudgetError(
            f"Z^{n} exceeds the configured order bound {max_order}; the number of "
            "trees grows roughly tenfold per order"
        )
    return apply_P(apply_L(orthogonal_chain(n)))


def restrict_root(s: TermSum, mask: RangeMask) -> TermSum:
    return {t: c for t, c in s.items() if t[1] & mask}


# -- display -----------------------------------------------------------------------


def render(t: Tree) -> str:
    if is_leaf(t):
        return f"u|{t[1].label}"
    return f"b({render(t[2])}, {render(t[3])})|{t[1].label}"
