"""Factoring tree-sums into shared intermediates and executable plans.

The canonical tree-sum of ``Z^n`` lists every bilinear product at atomic
masks.  Factoring reverses the atomization: trees are grouped by their
top-level structure, each child group is recognised as a known quantity
(``u``, ``Rhat``, ``B``, ``Z0``, ...) or promoted to a new named intermediate,
and the atomic mask cells of each (left, right) pair are re-covered with the
fewest ``F``/``G``/``FG`` rectangles.  For n = 0, 1, 2 this recovers the
2, 4 and 12 printed sums.
"""

from __future__ import annotations

import itertools
import re
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ..spectral import RangeMask, WavenumberGrid, masked_bilinear
from ..terms import TermOutput, _check_resolved
from .trees import (
    F, FG, G, TermSum, apply_L, apply_P, degree, leaf, node, simplify, z_trees,
)

_MASKS = {"F": F, "G": G, "FG": FG}


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class BilinearSum:
    coeff: Fraction
    left: str
    mask_left: RangeMask
    right: str
    mask_right: RangeMask
    mask_out: RangeMask

    def render(self) -> str:
        c = "" if self.coeff == 1 else ("-" if self.coeff == -1 else f"{self.coeff}*")
        return (f"{c}b({self.left}|{self.mask_left.label}, "
                f"{self.right}|{self.mask_right.label})|{self.mask_out.label}")


# -- catalog of named quantities -----------------------------------------------


def rhat_sum() -> TermSum:
    return simplify({node(FG, leaf(F), leaf(F)): 1})


def b_sum() -> TermSum:
    return apply_P(apply_L(rhat_sum()))


class Catalog:
    """Named tree-sums, looked up by exact proportionality on one root atom."""

    def __init__(self):
        self.items: dict[str, TermSum] = {}
        self._anon = 0
        self._on: dict = {}

    def add(self, name: str, s: TermSum) -> None:
        self.items[name] = s
        self._on.clear()

    def anonymous(self, s: TermSum) -> str:
        for name, t in self.items.items():
            if t == s:
                return name
        self._anon += 1
        name = f"T{self._anon}"
        self.add(name, s)
        return name

    def degree(self, name: str) -> int:
        return degree(next(iter(self.items[name])))

    def on(self, name: str, atom: RangeMask) -> TermSum:
        key = (name, atom)
        if key not in self._on:
            self._on[key] = {t: c for t, c in self.items[name].items() if t[1] == atom}
        return self._on[key]

    def decompose(self, s: TermSum, atom: RangeMask) -> list[tuple[str, Fraction]]:
        rest = {t: Fraction(c) for t, c in s.items()}
        found = []
        cands = sorted(self.items, key=lambda n: -len(self.on(n, atom)))
        for name in cands:
            part = self.on(name, atom)
            if not part or not rest:
                continue
            t0 = next(iter(part))
            if t0 not in rest:
                continue
            ratio = rest[t0] / part[t0]
            if all(rest.get(t, 0) == ratio * c for t, c in part.items()):
                for t in part:
                    del rest[t]
                found.append((name, ratio))
        if rest:
            found.append((self.anonymous({t: c for t, c in rest.items()}), Fraction(1)))
        return found


def base_catalog(order: int) -> Catalog:
    cat = Catalog()
    cat.add("u", simplify({leaf(F): 1}))
    cat.add("Rhat", rhat_sum())
    cat.add("B", b_sum())
    for j in range(order):
        cat.add(f"Z{j}", z_trees(j))
    return cat


# -- rectangle covers ----------------------------------------------------------

_RECTS = [(a, b) for a in (FG, F, G) for b in (FG, F, G)]
_CELLS = [(F, F), (F, G), (G, F), (G, G)]
_RECT_VEC = {r: np.array([int(bool(r[0] & a) and bool(r[1] & b)) for a, b in _CELLS])
             for r in _RECTS}


@lru_cache(maxsize=None)
def _cover(target: tuple, prefer_left: bool) -> tuple:
    t = np.array(target, dtype=float)
    for k in range(1, 5):
        best = None
        for rects in itertools.combinations(_RECTS, k):
            a = np.stack([_RECT_VEC[r] for r in rects], axis=1).astype(float)
            c, *_ = np.linalg.lstsq(a, t, rcond=None)
            ci = np.rint(c).astype(int)
            if np.any(ci == 0) or not np.array_equal(a @ ci, t):
                continue
            side = 0 if prefer_left else 1
            wide = sum(abs(int(x)) for x, r in zip(ci, rects) if r[side] == FG)
            key = (int(np.abs(ci).sum()), int((ci < 0).sum()), -wide)
            if best is None or key < best[0]:
                best = (key, tuple((r[0], r[1], int(x)) for r, x in zip(rects, ci)))
        if best is not None:
            return best[1]
    return ()


def unit_cover(cells: dict, prefer_left: bool = True) -> list[tuple[RangeMask, RangeMask, Fraction]]:
    """Fewest distinct ``(mask_left, mask_right)`` rectangles reproducing ``cells``.

    Among minimal covers the one with the fewest unit sums wins, then the one
    with fewer negative coefficients, then the one putting ``FG`` on the
    preferred side.  Non-integer cells fall back to atoms.
    """
    vals = [Fraction(cells.get(c, 0)) for c in _CELLS]
    atoms = [(a, b, v) for (a, b), v in zip(_CELLS, vals) if v]
    if any(v.denominator != 1 for v in vals):
        return atoms
    found = _cover(tuple(int(v) for v in vals), prefer_left)
    return [(a, b, Fraction(c)) for a, b, c in found] if found else atoms


# -- factoring -------------------------------------------------------------------


def factor_sum(s: TermSum, catalog: Catalog) -> list[BilinearSum]:
    """Rewrite a canonical tree-sum as bilinear sums of catalog quantities."""
    by_right: dict = defaultdict(dict)
    for t, c in s.items():
        if t[0] != "b":
            raise PlanError("cannot factor a bare leaf")
        key = (t[1], t[2][1], t[3][1], t[3])
        by_right[key][t[2]] = c
    by_left: dict = defaultdict(dict)
    for (root, la, ra, rt), lsum in by_right.items():
        for lname, lc in catalog.decompose(lsum, la):
            d = by_left[(root, la, ra, lname)]
            d[rt] = d.get(rt, 0) + lc
    cells: dict = defaultdict(lambda: defaultdict(Fraction))
    for (root, la, ra, lname), rsum in by_left.items():
        rsum = {t: c for t, c in rsum.items() if c != 0}
        if not rsum:
            continue
        scale = next(iter(rsum.values()))
        for rname, rc in catalog.decompose({t: c / scale for t, c in rsum.items()}, ra):
            cells[(lname, rname)][(root, la, ra)] += scale * rc

    out: list[BilinearSum] = []
    for (lname, rname), cell in sorted(cells.items(), key=lambda kv: _pair_order(kv[0], catalog)):
        per_root = {r: {(a, b): v for (rr, a, b), v in cell.items() if rr == r and v != 0}
                    for r in (F, G)}
        roots = [(FG, per_root[F])] if per_root[F] == per_root[G] else [
            (F, per_root[F]), (G, per_root[G])]
        for mout, cc in roots:
            if not cc:
                continue
            prefer_left = catalog.degree(lname) >= catalog.degree(rname)
            for ma, mb, c in unit_cover(cc, prefer_left):
                if c.denominator == 1 and abs(c) <= 8:
                    unit = Fraction(1 if c > 0 else -1)
                    out += [BilinearSum(unit, lname, ma, rname, mb, mout)] * abs(int(c))
                else:
                    out.append(BilinearSum(c, lname, ma, rname, mb, mout))
    return out


def _pair_order(pair, catalog):
    ln, rn = pair
    return (-(catalog.degree(ln)), catalog.degree(rn), ln, rn)


# -- plans ------------------------------------------------------------------------


@dataclass
class PlanStep:
    name: str
    op: str  # "BILIN" or "SUM"
    args: tuple

    def to_text(self) -> str:
        if self.op == "SUM":
            return f"{self.name} = SUM({', '.join(self.args)})"
        c, l, ml, r, mr, mo = self.args
        return f"{self.name} = BILIN({c}, {l}, {ml.label}, {r}, {mr.label}, {mo.label})"


@dataclass
class EvaluationPlan:
    steps: list[PlanStep]
    output: str
    input_name: str = "u"
    output_mask: RangeMask = F
    sums: dict[str, list[BilinearSum]] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"# input {self.input_name}; output {self.output} on {self.output_mask.label}"]
        lines += [s.to_text() for s in self.steps]
        return "\n".join(lines) + "\n"

    @property
    def bilinear_count(self) -> int:
        return sum(s.op == "BILIN" for s in self.steps)

    def validate(self) -> None:
        known = {self.input_name}
        for s in self.steps:
            refs = s.args if s.op == "SUM" else (s.args[1], s.args[3])
            for r in refs:
                if r not in known:
                    raise PlanError(f"step {s.name!r} references undefined {r!r}")
            if s.name in known:
                raise PlanError(f"step name {s.name!r} defined twice")
            known.add(s.name)
        if self.output not in known:
            raise PlanError(f"plan output {self.output!r} is never defined")

    @classmethod
    def from_text(cls, text: str) -> "EvaluationPlan":
        steps, output, out_mask, inp = [], None, F, "u"
        pat = re.compile(r"^(\w+)\s*=\s*(BILIN|SUM)\((.*)\)\s*$")
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = re.match(r"#\s*input (\w+); output (\w+) on (\w+)", line)
                if m:
                    inp, output, out_mask = m.group(1), m.group(2), _MASKS[m.group(3)]
                continue
            m = pat.match(line)
            if not m:
                raise PlanError(f"cannot parse plan line: {line!r}")
            name, op, body = m.groups()
            args = [a.strip() for a in body.split(",")]
            if op == "BILIN":
                if len(args) != 6:
                    raise PlanError(f"BILIN needs 6 arguments: {line!r}")
                c = Fraction(args[0])
                args = (c, args[1], _MASKS[args[2]], args[3], _MASKS[args[4]], _MASKS[args[5]])
            steps.append(PlanStep(name, op, tuple(args)))
        if output is None:
            output = steps[-1].name
        plan = cls(steps, output, inp, out_mask)
        plan.validate()
        return plan


def compile_plan(target: TermSum, catalog: Catalog, name: str,
                 output_mask: RangeMask = F) -> EvaluationPlan:
    catalog.add(name, target)
    sums: dict[str, list[BilinearSum]] = {}
    pending = [name]
    while pending:
        item = pending.pop()
        if item == "u" or item in sums:
            continue
        sums[item] = factor_sum(catalog.items[item], catalog)
        pending += [x for s in sums[item] for x in (s.left, s.right)]

    need: dict[str, RangeMask] = defaultdict(lambda: RangeMask.EMPTY)
    need[name] = output_mask
    order = sorted(sums, key=lambda n: (-catalog.degree(n), n))
    for item in order:
        for s in sums[item]:
            if s.mask_out & need[item]:
                need[s.left] |= s.mask_left
                need[s.right] |= s.mask_right

    steps: list[PlanStep] = []
    for item in reversed(order):
        merged: dict = {}
        for s in sums[item]:
            mo = RangeMask(s.mask_out & need[item])
            if mo:
                key = (s.left, s.mask_left, s.right, s.mask_right, mo)
                merged[key] = merged.get(key, 0) + s.coeff
        live = [BilinearSum(c, l, ml, r, mr, mo) for (l, ml, r, mr, mo), c in merged.items()
                if c != 0]
        if not live:
            continue
        names = [item] if len(live) == 1 else [f"{item}_{i}" for i in range(len(live))]
        for nm, s in zip(names, live):
            steps.append(PlanStep(nm, "BILIN", (s.coeff, s.left, s.mask_left, s.right,
                                                s.mask_right, s.mask_out)))
        if len(live) > 1:
            steps.append(PlanStep(item, "SUM", tuple(names)))
    plan = EvaluationPlan(steps, name, "u", output_mask, sums)
    plan.validate()
    return plan


@dataclass
class CompiledTerm:
    order: int
    trees: TermSum
    plan: EvaluationPlan

    def sums_on_output(self) -> list[BilinearSum]:
        return [s for s in self.plan.sums[self.plan.output] if s.mask_out & F]


def generate_Z(n: int, max_order: int = 4) -> CompiledTerm:
    """Tree-sum and compiled plan for ``Z^n`` on F."""
    trees = z_trees(n, max_order=max_order)
    plan = compile_plan(trees, base_catalog(n), f"Z{n}", F)
    return CompiledTerm(n, trees, plan)


def execute_plan(plan: EvaluationPlan, grid: WavenumberGrid, u_hat: np.ndarray,
                 real: bool = True, check: bool = True) -> TermOutput:
    if check:
        _check_resolved(grid, u_hat)
    env = {plan.input_name: u_hat}
    for s in plan.steps:
        if s.op == "SUM":
            acc = env[s.args[0]].copy()
            for a in s.args[1:]:
                acc += env[a]
            env[s.name] = acc
        else:
            c, l, ml, r, mr, mo = s.args
            env[s.name] = masked_bilinear(grid, env[l], ml, env[r], mr, mo,
                                          coeff=complex(c), real=real)
    return TermOutput(env[plan.output] * grid.mask_array(plan.output_mask), plan.output_mask)
