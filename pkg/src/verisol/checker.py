"""Explicit-state CTL model checking over Kripke structures.

States without successors stutter (an implicit self-loop), so every path is
infinite.  `check` labels states bottom-up with the usual fixpoints and
extracts a shortest counterexample for violated universal formulas;
`oracle_check` is an independent path-enumerating evaluator used to test it.
"""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .abstraction import Kripke, build_kripke, initial_view
from .model import ContractModel
from .properties import (
    DEADLOCK_FREE, And, Atom, BT, Const, Formula, Implies, Not, Or, PropertySpec, UT, atoms_of,
    parse_property, render, resolve_formula, to_ctl,
)
from .transform import AugmentedModel, UnknownAtom, augment_model, resolve_atom

ORACLE_CAP = 2_000


# ------------------------------------------------------------------ labeling

class Labeler:
    def __init__(self, ks: Kripke):
        self.ks = ks
        self.n = len(ks.states)
        self.succ = [[j for _, j in ks.total_succ(i)] for i in range(self.n)]
        self.pred: list[list[int]] = [[] for _ in range(self.n)]
        for i, outs in enumerate(self.succ):
            for j in outs:
                self.pred[j].append(i)
        self.all = frozenset(range(self.n))
        self.known = set().union(*ks.atoms) if ks.atoms else set()
        self.memo: dict = {}

    def sat(self, f: Formula) -> frozenset:
        r = self.memo.get(f)
        if r is None:
            r = frozenset(self._sat(f))
            self.memo[f] = r
        return r

    def _sat(self, f: Formula) -> set:
        match f:
            case Atom(n):
                return {i for i in range(self.n) if n in self.ks.atoms[i]}
            case Const(v):
                return set(self.all) if v else set()
            case Not(a):
                return self.all - self.sat(a)
            case And(a, b):
                return self.sat(a) & self.sat(b)
            case Or(a, b):
                return self.sat(a) | self.sat(b)
            case Implies(a, b):
                return (self.all - self.sat(a)) | self.sat(b)
            case UT("EX", a):
                return self.ex(self.sat(a))
            case UT("AX", a):
                return self.all - self.ex(self.all - self.sat(a))
            case UT("EF", a):
                return self.eu(self.all, self.sat(a))
            case UT("AF", a):
                return self.all - self.eg(self.all - self.sat(a))
            case UT("EG", a):
                return self.eg(self.sat(a))
            case UT("AG", a):
                return self.all - self.eu(self.all, self.all - self.sat(a))
            case BT("EU", a, b):
                return self.eu(self.sat(a), self.sat(b))
            case BT("EW", a, b):
                return self.eu(self.sat(a), self.sat(b)) | self.eg(self.sat(a))
            case BT("AU", a, b):
                na, nb = self.all - self.sat(a), self.all - self.sat(b)
                return self.all - (self.eu(nb, na & nb) | self.eg(nb))
            case BT("AW", a, b):
                na, nb = self.all - self.sat(a), self.all - self.sat(b)
                return self.all - self.eu(nb, na & nb)
        raise TypeError(f)

    def ex(self, target: Iterable[int]) -> set:
        out = set()
        for j in target:
            out.update(self.pred[j])
        return out

    def eu(self, a: Iterable[int], b: Iterable[int]) -> set:
        a = set(a)
        res = set(b)
        queue = deque(res)
        while queue:
            j = queue.popleft()
            for i in self.pred[j]:
                if i not in res and i in a:
                    res.add(i)
                    queue.append(i)
        return res

    def eg(self, a: Iterable[int]) -> set:
        res = set(a)
        count = {i: sum(1 for j in self.succ[i] if j in res) for i in res}
        queue = deque(i for i, c in count.items() if c == 0)
        while queue:
            i = queue.popleft()
            if i not in res:
                continue
            res.discard(i)
            for p in self.pred[i]:
                if p in res:
                    count[p] -= 1
                    if count[p] == 0:
                        queue.append(p)
        return res

    # ----------------------------------------------------------- evidence
    def path_to(self, s: int, target: frozenset, within: Optional[frozenset] = None) -> list[int]:
        """Shortest path from s to a target state, staying inside `within` before the end."""
        parent = {s: None}
        queue = deque([s])
        while queue:
            x = queue.popleft()
            if x in target:
                out = []
                while x is not None:
                    out.append(x)
                    x = parent[x]
                return out[::-1]
            if within is not None and x not in within:
                continue
            for y in self.succ[x]:
                if y not in parent:
                    parent[y] = x
                    queue.append(y)
        return [s]

    def lasso(self, s: int, inside: frozenset) -> tuple[list[int], int]:
        """Path from s that stays in `inside` forever: (states, index the loop returns to)."""
        path, pos = [s], {s: 0}
        x = s
        while True:
            nxt = min((y for y in self.succ[x] if y in inside), default=None)
            if nxt is None:
                return path, len(path) - 1
            if nxt in pos:
                return path, pos[nxt]
            pos[nxt] = len(path)
            path.append(nxt)
            x = nxt

    def explain_false(self, f: Formula, s: int) -> tuple[list[int], Optional[int]]:
        """A path from s showing why f fails at s (loop index for lassos)."""
        match f:
            case UT("AG", a):
                bad = self.all - self.sat(a)
                p = self.path_to(s, bad)
                return self._join(p, self.explain_false(a, p[-1]))
            case UT("AF", a):
                p, loop = self.lasso(s, self.eg(self.all - self.sat(a)))
                return p, loop
            case UT("AX", a):
                bad = [y for y in self.succ[s] if y not in self.sat(a)]
                if bad:
                    return self._join([s, min(bad)], self.explain_false(a, min(bad)))
            case BT("AW", a, b) | BT("AU", a, b):
                na, nb = self.all - self.sat(a), self.all - self.sat(b)
                stop = self.eu(nb, na & nb)
                if s in stop:
                    p = self.path_to(s, na & nb, nb)
                    return self._join(p, self.explain_false(a, p[-1]))
                p, loop = self.lasso(s, self.eg(nb))
                return p, loop
            case Implies(a, b):
                return self.explain_false(b, s)
            case And(a, b):
                return self.explain_false(a if s not in self.sat(a) else b, s)
            case Or(a, b):
                return self.explain_false(a, s)
            case Not(UT("EF", a)):
                return self.explain_false(UT("AG", Not(a)), s)
        return [s], None

    @staticmethod
    def _join(prefix: list[int], rest: tuple[list[int], Optional[int]]) -> tuple[list[int], Optional[int]]:
        p, loop = rest
        out = prefix[:-1] + p
        return out, None if loop is None else loop + len(prefix) - 1


# ------------------------------------------------------------------- verdicts

@dataclass
class Verdict:
    formula: Formula
    result: str                     # holds | violated
    text: str = ""
    trace: list = field(default_factory=list)       # Kripke state indices
    loop: Optional[int] = None
    labels: list = field(default_factory=list)      # edge labels along the trace
    translated: list = field(default_factory=list)  # labels shown through aliases
    model: str = ""
    kind: str = ""

    @property
    def holds(self) -> bool:
        return self.result == "holds"

    def to_json(self) -> dict:
        d = {"property": self.text or render(self.formula), "formula": render(self.formula),
             "result": "Verified" if self.holds else "Violated", "kind": self.kind, "model": self.model}
        if not self.holds:
            d["trace"] = self.translated or self.labels
            d["labels"] = self.labels
            if self.loop is not None:
                d["loop"] = self.loop
        return d


def _edge_labels(ks: Kripke, trace: list[int]) -> list[str]:
    out = []
    for a, b in zip(trace, trace[1:]):
        lab = next((l for l, j in ks.succ[a] if j == b), None)
        if lab is not None:
            out.append(lab)
    return out


def check(ks: Kripke, f: Formula, text: str = "") -> Verdict:
    lab = Labeler(ks)
    sat = lab.sat(f)
    bad = [s for s in ks.initial if s not in sat]
    if not bad:
        return Verdict(f, "holds", text)
    trace, loop = lab.explain_false(f, bad[0])
    return Verdict(f, "violated", text, trace, loop, _edge_labels(ks, trace))


def check_deadlock(ks: Kripke) -> Verdict:
    return check(ks, DEADLOCK_FREE, "deadlock freedom")


# --------------------------------------------------------------------- oracle

def oracle_check(ks: Kripke, f: Formula) -> bool:
    """Brute force over simple paths; independent of the fixpoint labeling."""
    n = len(ks.states)
    if n > ORACLE_CAP:
        raise ValueError(f"oracle limited to {ORACLE_CAP} states (got {n})")
    succ = [[j for _, j in ks.total_succ(i)] for i in range(n)]
    memo: dict = {}

    def holds(g: Formula, s: int) -> bool:
        key = (g, s)
        if key not in memo:
            memo[key] = ev(g, s)
        return memo[key]

    def paths(s: int, ok):
        """Simple paths from s whose states (except possibly the last) satisfy ok."""
        stack = [[s]]
        while stack:
            p = stack.pop()
            yield p
            if not ok(p[-1]):
                continue
            for y in succ[p[-1]]:
                if y not in p:
                    stack.append(p + [y])

    def exists_until(a, b, s) -> bool:
        for p in paths(s, lambda x: holds(a, x) and not holds(b, x)):
            if holds(b, p[-1]):
                return True
        return False

    def exists_globally(a, s) -> bool:
        # a lasso of a-states: a simple path whose last state steps back onto the path
        for p in paths(s, lambda x: holds(a, x)):
            if all(holds(a, x) for x in p) and any(y in p for y in succ[p[-1]]):
                return True
        return False

    def ev(g: Formula, s: int) -> bool:
        match g:
            case Atom(name):
                return name in ks.atoms[s]
            case Const(v):
                return v
            case Not(a):
                return not holds(a, s)
            case And(a, b):
                return holds(a, s) and holds(b, s)
            case Or(a, b):
                return holds(a, s) or holds(b, s)
            case Implies(a, b):
                return (not holds(a, s)) or holds(b, s)
            case UT("EX", a):
                return any(holds(a, y) for y in succ[s])
            case UT("AX", a):
                return all(holds(a, y) for y in succ[s])
            case UT("EF", a):
                return any(holds(a, p[-1]) for p in paths(s, lambda x: True))
            case UT("AG", a):
                return all(holds(a, p[-1]) for p in paths(s, lambda x: True))
            case UT("EG", a):
                return exists_globally(a, s)
            case UT("AF", a):
                return not exists_globally(Not(a), s)
            case BT("EU", a, b):
                return exists_until(a, b, s)
            case BT("EW", a, b):
                return exists_until(a, b, s) or exists_globally(a, s)
            case BT("AU", a, b):
                # fails on a b-free path that breaks a first, or never sees b
                for p in paths(s, lambda x: not holds(b, x) and holds(a, x)):
                    last = p[-1]
                    if not holds(b, last) and not holds(a, last):
                        return False
                return not exists_globally(And(a, Not(b)), s)
            case BT("AW", a, b):
                for p in paths(s, lambda x: not holds(b, x) and holds(a, x)):
                    last = p[-1]
                    if not holds(b, last) and not holds(a, last):
                        return False
                return True
        raise TypeError(g)

    return all(holds(f, s) for s in ks.initial)


# ------------------------------------------------------------- verification

@dataclass
class ModelViews:
    model: ContractModel
    aug: AugmentedModel
    augmented: Kripke
    initial: Kripke
    seconds: float = 0.0


def build_views(model: ContractModel, cap: Optional[int] = None) -> ModelViews:
    t0 = time.perf_counter()
    aug = augment_model(model)
    k = build_kripke(aug, cap)
    v = initial_view(k, aug)
    return ModelViews(model, aug, k, v, time.perf_counter() - t0)


def _alias_to_origin(aug: AugmentedModel, name: str) -> Optional[str]:
    seen = set()
    while name in aug.aliases and name not in seen:
        seen.add(name)
        name = aug.aliases[name]
    return name if name in aug.origins() else None


def translate_labels(aug: AugmentedModel, labels: list[str]) -> list[str]:
    """Show labels by alias name, then by transition name for entry edges, else as `#n`.

    The `#` keeps raw labels apart from numeric alias keys such as `4`.
    """
    back: dict[str, str] = {}
    for key in aug.aliases:
        try:
            hits = resolve_atom(aug, key)
        except UnknownAtom:
            continue
        for h in hits:
            back.setdefault(h, key)
    out = []
    for lab in labels:
        if lab in back:
            out.append(back[lab])
        elif lab.isdigit() and int(lab) <= len(aug.transitions) and aug.edge(int(lab)).role == "guard-entry":
            out.append(aug.edge(int(lab)).origin)
        elif lab.isdigit():
            out.append(f"#{lab}")
        else:
            out.append(lab)
    return out


def plan_property(views: ModelViews, f: Formula, force_augmented: bool = False) -> tuple[Kripke, Formula, str]:
    """Pick the structure a formula is checked on and resolve its atoms to edge labels.

    Formulas whose names all denote whole transitions run on the initial
    view; anything naming statements or raw labels needs the augmented one.
    """
    aug = views.aug
    names = atoms_of(f)
    table: dict[str, set] = {}
    use_initial = not force_augmented
    if use_initial:
        for n in names:
            o = _alias_to_origin(aug, n) if n != "deadlock" else "deadlock"
            if o is None:
                use_initial = False
                break
            table[n] = {o}
    if not use_initial:
        table = {n: resolve_atom(aug, n) for n in names}
    ks = views.initial if use_initial else views.augmented
    return ks, resolve_formula(f, table), "initial" if use_initial else "augmented"


def verify_property(views: ModelViews, spec: PropertySpec, force_augmented: bool = False) -> Verdict:
    f = to_ctl(spec)
    ks, resolved, which = plan_property(views, f, force_augmented)
    v = check(ks, resolved, spec.text)
    v.formula = f
    v.kind = spec.kind
    v.model = which
    v.translated = v.labels if which == "initial" else translate_labels(views.aug, v.labels)
    return v


def verify(model: ContractModel, specs: Optional[list[PropertySpec]] = None, force_augmented: bool = False,
           views: Optional[ModelViews] = None) -> tuple[ModelViews, list[Verdict]]:
    views = views or build_views(model)
    if specs is None:
        specs = [parse_property(p.text, p.ctl) for p in model.properties]
    return views, [verify_property(views, s, force_augmented) for s in specs]
