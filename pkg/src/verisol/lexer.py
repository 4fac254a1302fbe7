"""Tokenizer shared by the contract, statement, property and CTL parsers."""
from __future__ import annotations

import re
from dataclasses import dataclass

from .model import Diagnostic


class ParseError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class Token:
    kind: str      # ident | number | string | op | eof
    text: str
    start: int
    end: int


_OPS = sorted([
    "=>", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-=", "*=", "/=", "%=",
    "->", "<->", "+", "-", "*", "/", "%", "<", ">", "=", "!", "(", ")", "{", "}", "[", "]",
    ";", ",", ".", ":", "?", "|", "&", "¬", "∧", "∨", "→", "∪",
], key=len, reverse=True)

_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)|(?P<lc>//[^\n]*)|(?P<bc>/\*.*?\*/)"
    r"|(?P<number>0[xX][0-9a-fA-F]+|\d+)"
    r"|(?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)"
    r"|(?P<string>\"(?:[^\"\\\n]|\\.)*\")"
    r"|(?P<op>" + "|".join(re.escape(o) for o in _OPS) + ")",
    re.S,
)


def normalize_source(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def tokenize(text: str, base: int = 0) -> list[Token]:
    out: list[Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError([Diagnostic("syntax-error", f"unexpected character {text[pos]!r}",
                                         (base + pos, base + pos + 1))])
        kind = m.lastgroup
        if kind not in ("ws", "lc", "bc"):
            out.append(Token(kind, m.group(), base + pos, base + m.end()))
        pos = m.end()
    out.append(Token("eof", "", base + len(text), base + len(text)))
    return out


def token_texts(text: str) -> list[str]:
    return [t.text for t in tokenize(text) if t.kind != "eof"]


class TokenStream:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.tok
        return t.kind in ("op", "ident") and t.text in texts

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def error(self, msg: str, code: str = "syntax-error", tok: Token | None = None) -> ParseError:
        t = tok or self.tok
        found = t.text or "end of input"
        return ParseError([Diagnostic(code, f"{msg} (found {found!r})", (t.start, max(t.end, t.start + 1)))])

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        return self.advance()

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error("expected identifier")
        return self.advance()
