"""Ancestry classification of the terms of ``QL (QL)^{n-1} QL u``.

Write ``X = (QL)^{n-1} QL u``.  Then ``QLX = LX - Z^{n-1}``.  Every term of
``LX`` comes from a parent tree ``b(x, y)`` of ``X`` with ``L`` acting inside one
top-level child, while the sibling is left unchanged:

* type i   the sibling is a bare ``u|G`` leaf, which ``P`` kills outright;
* type ii  the sibling is a composite that ``P`` kills, i.e. of the form ``Qh``;
* type iii the sibling survives ``P``; these blocks ``h`` pair with the
  ``-Ph`` pieces that make up ``-Z^{n-1}``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .trees import (
    TermSum, Tree, _apply_L, apply_L, apply_P, is_leaf, node, orthogonal_chain, p_tree,
    simplify,
)

LABELS = ("i", "ii", "iii")


class ClassificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassifiedTerm:
    tree: Tree
    coeff: int
    label: str
    parent: Tree
    side: str  # "left" or "right": the child L acted on


@dataclass
class Classification:
    order: int
    terms: list[ClassifiedTerm]
    projected: TermSum  # -Z^{n-1}, the Ph half of the type iii pairs
    groups: dict[str, TermSum] = field(default_factory=dict)

    def counts(self) -> dict[str, int]:
        c = defaultdict(int)
        for t in self.terms:
            c[t.label] += 1
        return {k: c[k] for k in LABELS}

    def total(self) -> TermSum:
        acc: dict = defaultdict(int)
        for g in self.groups.values():
            for t, c in g.items():
                acc[t] += c
        return simplify(acc)


def _label(sibling: Tree) -> str:
    if p_tree(sibling) is not None:
        return "iii"
    return "i" if is_leaf(sibling) else "ii"


def classify_terms(trees_nm1: TermSum, trees_n: TermSum | None = None,
                   order: int | None = None) -> Classification:
    """Label each term of ``QL X`` where ``X = trees_nm1 = (QL)^{n-1} QL u``.

    When ``trees_n`` is given the groups are checked to add up to it.
    """
    terms: list[ClassifiedTerm] = []
    for parent, c in trees_nm1.items():
        if is_leaf(parent):
            raise ClassificationError(f"parent {parent!r} is a bare leaf")
        root, x, y = parent[1], parent[2], parent[3]
        for side, child, sib in (("left", x, y), ("right", y, x)):
            lab = _label(sib)
            for child2, c2 in _apply_L(child):
                t = node(root, child2, y) if side == "left" else node(root, x, child2)
                terms.append(ClassifiedTerm(t, c * c2, lab, parent, side))

    groups: dict[str, dict] = {k: defaultdict(int) for k in LABELS}
    for t in terms:
        groups[t.label][t.tree] += t.coeff
    iii_raw = dict(groups["iii"])
    projected = {t: -c for t, c in apply_P(iii_raw, canonical=False).items()}
    for t, c in projected.items():
        groups["iii"][t] += c
    out = Classification(order or 0, terms, simplify(projected),
                         {k: simplify(v) for k, v in groups.items()})

    if trees_n is not None and out.total() != simplify(trees_n):
        raise ClassificationError("classified groups do not reproduce QL(QL)^(n-1)QLu")
    return out


def classify_order(n: int) -> Classification:
    if n < 1:
        raise ValueError("classification needs n >= 1")
    return classify_terms(orthogonal_chain(n - 1), orthogonal_chain(n), order=n)


def z_contributions(cls: Classification) -> dict[str, TermSum]:
    """``PL`` applied to each group; the three parts add up to ``Z^n``."""
    return {k: apply_P(apply_L(v)) for k, v in cls.groups.items()}
