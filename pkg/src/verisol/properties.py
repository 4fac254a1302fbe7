"""Natural-language property templates and their CTL translation.

Seven templates (five safety, two liveness) map to
fixed CTL shapes.  Formulas are plain dataclasses; `render` prints them in a
"table" style (operands of unary temporal operators always parenthesized,
disjunction as `|`) or a "compact" style (parentheses only where needed).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Union

from .lexer import ParseError, TokenStream, tokenize
from .model import Diagnostic


# ----------------------------------------------------------------- CTL syntax

@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Or:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


@dataclass(frozen=True)
class UT:
    """Unary temporal operator: EX AX EF AF EG AG."""
    op: str
    arg: "Formula"


@dataclass(frozen=True)
class BT:
    """Binary path operator: EU AU EW AW (printed as E[l U r] etc.)."""
    op: str
    lhs: "Formula"
    rhs: "Formula"


Formula = Union[Atom, Const, Not, And, Or, Implies, UT, BT]
UNARY_TEMPORAL = ("EX", "AX", "EF", "AF", "EG", "AG")
BINARY_TEMPORAL = ("EU", "AU", "EW", "AW")
TRUE, FALSE = Const(True), Const(False)


def AG(f): return UT("AG", f)
def AF(f): return UT("AF", f)
def AX(f): return UT("AX", f)
def EG(f): return UT("EG", f)
def EF(f): return UT("EF", f)
def EX(f): return UT("EX", f)
def AW(a, b): return BT("AW", a, b)
def AU(a, b): return BT("AU", a, b)
def EU(a, b): return BT("EU", a, b)
def EW(a, b): return BT("EW", a, b)


def disj(fs: Iterable[Formula]) -> Formula:
    fs = list(fs)
    if not fs:
        return FALSE
    out = fs[0]
    for f in fs[1:]:
        out = Or(out, f)
    return out


def atoms_of(f: Formula) -> set[str]:
    match f:
        case Atom(n):
            return {n}
        case Const():
            return set()
        case Not(a) | UT(_, a):
            return atoms_of(a)
        case And(a, b) | Or(a, b) | Implies(a, b) | BT(_, a, b):
            return atoms_of(a) | atoms_of(b)
    raise TypeError(f)


def map_atoms(f: Formula, fn: Callable[[str], Formula]) -> Formula:
    match f:
        case Atom(n):
            return fn(n)
        case Const():
            return f
        case Not(a):
            return Not(map_atoms(a, fn))
        case UT(op, a):
            return UT(op, map_atoms(a, fn))
        case And(a, b):
            return And(map_atoms(a, fn), map_atoms(b, fn))
        case Or(a, b):
            return Or(map_atoms(a, fn), map_atoms(b, fn))
        case Implies(a, b):
            return Implies(map_atoms(a, fn), map_atoms(b, fn))
        case BT(op, a, b):
            return BT(op, map_atoms(a, fn), map_atoms(b, fn))
    raise TypeError(f)


def depth(f: Formula) -> int:
    match f:
        case Atom() | Const():
            return 0
        case Not(a) | UT(_, a):
            return 1 + depth(a)
        case And(a, b) | Or(a, b) | Implies(a, b) | BT(_, a, b):
            return 1 + max(depth(a), depth(b))
    raise TypeError(f)


# ------------------------------------------------------------------ rendering

_PREC = {Implies: 1, Or: 2, And: 3}
_SYMBOLS = {
    "compact": {"not": "¬", "and": " ∧ ", "or": " ∨ ", "imp": " → "},
    "table": {"not": "¬", "and": " ∧ ", "or": " | ", "imp": " → "},
    "ascii": {"not": "!", "and": " & ", "or": " | ", "imp": " -> "},
}
_PLAIN_ATOM = re.compile(r"[A-Za-z0-9_]+")


def _prec(f: Formula) -> int:
    return _PREC.get(type(f), 4)


def render(f: Formula, style: str = "compact") -> str:
    sym = _SYMBOLS[style]

    def paren(x: Formula, need: bool) -> str:
        s = go(x)
        return f"({s})" if need else s

    def go(f: Formula) -> str:
        match f:
            case Atom(n):
                return n if _PLAIN_ATOM.fullmatch(n) else '"' + n.replace('"', '\\"') + '"'
            case Const(v):
                return "true" if v else "false"
            case Not(a):
                return sym["not"] + paren(a, _prec(a) < 4)
            case UT(op, a):
                if style == "table":
                    return f"{op} {go(a)}" if isinstance(a, BT) else f"{op}({go(a)})"
                return f"{op}({go(a)})" if _prec(a) < 4 else f"{op} {go(a)}"
            case BT(op, a, b):
                inner = "U" if op[1] == "U" else "W"
                need = (lambda x: isinstance(x, Implies)) if style == "table" else (lambda x: _prec(x) < 4)
                return f"{op[0]}[{paren(a, need(a))} {inner} {paren(b, need(b))}]"
            case And(a, b) | Or(a, b) | Implies(a, b):
                p = _prec(f)
                key = {And: "and", Or: "or", Implies: "imp"}[type(f)]
                left = paren(a, _prec(a) < p or (p == 1 and _prec(a) == 1))
                # ∧ and ∨ parse left-associative, → right-associative
                right = paren(b, _prec(b) < p or (p != 1 and _prec(b) == p))
                return left + sym[key] + right
        raise TypeError(f)

    return go(f)


# ---------------------------------------------------------------- CTL parsing

def parse_ctl(text: str) -> Formula:
    """Parse direct CTL.  Accepts ¬ ! ∧ & && ∨ | || → -> and A[..U..], A[..W..]."""
    ts = TokenStream(tokenize(text))

    def implies() -> Formula:
        lhs = disjunction()
        if ts.accept("→") or ts.accept("->"):
            return Implies(lhs, implies())
        return lhs

    def disjunction() -> Formula:
        f = conjunction()
        while ts.at("∨", "|", "||"):
            ts.advance()
            f = Or(f, conjunction())
        return f

    def conjunction() -> Formula:
        f = unary()
        while ts.at("∧", "&", "&&"):
            ts.advance()
            f = And(f, unary())
        return f

    def unary() -> Formula:
        t = ts.tok
        if ts.accept("¬") or ts.accept("!"):
            return Not(unary())
        if ts.accept("("):
            f = implies()
            ts.expect(")")
            return f
        if t.kind == "ident" and t.text in UNARY_TEMPORAL:
            ts.advance()
            return UT(t.text, unary())
        if t.kind == "ident" and t.text in ("A", "E") and ts.peek().text == "[":
            ts.advance()
            ts.advance()
            lhs = implies()
            k = ts.tok
            if k.text not in ("U", "W"):
                raise ts.error("expected U or W")
            ts.advance()
            rhs = implies()
            ts.expect("]")
            return BT(t.text + k.text, lhs, rhs)
        if t.kind == "ident" and t.text in ("true", "false"):
            ts.advance()
            return Const(t.text == "true")
        if t.kind in ("ident", "number"):
            ts.advance()
            name = t.text
            while ts.at(".") and ts.peek().kind in ("ident", "number"):
                ts.advance()
                name += "." + ts.advance().text
            return Atom(name)
        if t.kind == "string":
            ts.advance()
            return Atom(t.text[1:-1].replace('\\"', '"'))
        raise ts.error("expected a CTL formula")

    f = implies()
    if ts.tok.kind != "eof":
        raise ts.error("unexpected trailing input")
    return f


# ------------------------------------------------------------------ templates

TEMPLATES = ("CannotAfter", "OnlyAfter", "IfThenOnlyAfter", "CanNever", "NeverBefore",
             "EventuallyAfter", "Eventually", "Ctl")
SAFETY = {"CannotAfter", "OnlyAfter", "IfThenOnlyAfter", "CanNever", "NeverBefore"}
LIVENESS = {"EventuallyAfter", "Eventually"}


@dataclass(frozen=True)
class PropertySpec:
    template: str
    p: tuple[str, ...] = ()
    q: tuple[str, ...] = ()
    r: tuple[str, ...] = ()
    text: str = ""
    formula: Optional[Formula] = None      # only for direct CTL

    @property
    def kind(self) -> str:
        if self.template in SAFETY:
            return "Safety"
        if self.template in LIVENESS:
            return "Liveness"
        return "CTL"

    def names(self) -> tuple[str, ...]:
        if self.formula is not None:
            return tuple(sorted(atoms_of(self.formula)))
        return self.p + self.q + self.r


_NEG = r"(?:cannot|can\s+not|can\s+never)"
_PATTERNS = [
    ("IfThenOnlyAfter", rf"if\s+(?P<p>.+?)\s+happens\s*,?\s*(?P<q>.+?)\s+can\s+happen\s+only\s+after\s+(?P<r>.+?)(?:\s+happens)?"),
    ("CannotAfter", rf"(?P<p>.+?)\s+{_NEG}\s+happen\s+after\s+(?P<q>.+)"),
    ("NeverBefore", rf"(?P<p>.+?)\s+{_NEG}\s+happen\s+before\s+(?P<q>.+)"),
    ("OnlyAfter", r"(?P<p>.+?)\s+can\s+happen\s+only\s+after\s+(?P<q>.+)"),
    ("CanNever", rf"(?P<p>.+?)\s+{_NEG}\s+happen"),
    ("EventuallyAfter", r"(?P<p>.+?)\s+will\s+eventually\s+happen\s+after\s+(?P<q>.+)"),
    ("Eventually", r"(?P<p>.+?)\s+will\s+eventually\s+happen"),
]
_PATTERNS = [(n, re.compile(p, re.I | re.S)) for n, p in _PATTERNS]


def split_names(text: str) -> tuple[str, ...]:
    """Split an atom list on `;`, `or`, `|` and `∪` outside brackets.

    A `;` that ends a statement atom (`withdraw.x = 0;`) stays attached to it.
    """
    text = re.sub(r"\{([^{}]*)\}", r"\1", text).strip()
    parts, buf, depth, i = [], "", 0, 0
    while i < len(text):
        c = text[i]
        if c in "([":
            depth += 1
        elif c in ")]":
            depth -= 1
        if depth == 0:
            if c == ";":
                parts.append(buf + ";")
                buf = ""
                i += 1
                continue
            if c == "∪" or (c == "|" and text[i - 1:i] != "|" and text[i + 1:i + 2] != "|"):
                parts.append(buf)
                buf = ""
                i += 1
                continue
            m = re.match(r"\s+or\s+", text[i:], re.I)
            if m and buf.strip():
                parts.append(buf)
                buf = ""
                i += m.end()
                continue
        buf += c
        i += 1
    parts.append(buf)
    out = []
    for p in parts:
        p = p.strip()
        if not p or p == ";":
            continue
        head = p.rstrip(";").strip()
        # a bare name (`cancelABB;`) drops the separator, a statement keeps it
        out.append(head if re.fullmatch(r"[\w.<>]+", head) else p)
    return tuple(out)


def _fail(text: str, msg: str) -> ParseError:
    return ParseError([Diagnostic("unknown-template", f"{msg}: {text!r}", (0, max(1, len(text))))])


def parse_template(text: str) -> PropertySpec:
    norm = " ".join(text.split()).strip().rstrip(".").strip()
    for name, rx in _PATTERNS:
        m = rx.fullmatch(norm)
        if not m:
            continue
        groups = {k: split_names(v) for k, v in m.groupdict().items()}
        if any(not v for v in groups.values()):
            raise _fail(text, "empty atom list")
        return PropertySpec(name, groups.get("p", ()), groups.get("q", ()), groups.get("r", ()), text=norm)
    raise _fail(text, "property matches no template")


def parse_property(text: str, ctl: bool = False) -> PropertySpec:
    if ctl:
        return PropertySpec("Ctl", text=text, formula=parse_ctl(text))
    return parse_template(text)


def load_props(path: Union[str, Path]) -> list[PropertySpec]:
    """Sidecar file: one property per line, `ctl ` prefix for direct CTL, `#` comments."""
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("ctl "):
            out.append(parse_property(line[4:].strip().strip('"'), ctl=True))
        else:
            out.append(parse_property(line.strip('"')))
    return out


def to_ctl(spec: PropertySpec) -> Formula:
    """Instantiate the template's CTL shape; atoms carry the property's names."""
    p, q, r = (disj(Atom(n) for n in xs) for xs in (spec.p, spec.q, spec.r))
    match spec.template:
        case "CannotAfter":
            return AG(Implies(q, AG(Not(p))))
        case "OnlyAfter":
            return AW(Not(p), q)
        case "IfThenOnlyAfter":
            return AG(Implies(p, AX(AW(Not(q), r))))
        case "CanNever":
            return AG(Not(p))
        case "NeverBefore":
            return AW(Or(Not(p), AG(Not(q))), q)
        case "EventuallyAfter":
            return AG(Implies(q, AF(p)))
        case "Eventually":
            return AF(p)
        case "Ctl":
            return spec.formula
    raise ValueError(spec.template)


def resolve_formula(f: Formula, table: Mapping[str, Iterable[str]]) -> Formula:
    """Replace each name atom by the disjunction of its label atoms."""
    def sub(n: str) -> Formula:
        if n not in table:
            raise KeyError(n)
        return disj(Atom(x) for x in sorted(table[n], key=_label_key))
    return map_atoms(f, sub)


def _label_key(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


DEADLOCK_FREE = AG(Not(Atom("deadlock")))
