"""Recursive-descent parser for the expression language.

Grammar (round-trips with ``format_expr``):

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" integer)?
    atom   := number
            | ident primes "(" expr ("," expr)* ")"
            | ident "_{" integer ("," integer)* "}" "(" expr ("," expr)* ")"
            | ident
            | jetvar
            | "(" expr ")"
    jetvar := "z" digits? "t"?

Single-quote primes mark derivatives of single-argument formal functions;
the subscript form carries a derivative multi-index for several arguments.
``sin``, ``cos``, ``sinh``, ``cosh`` and ``exp`` are builtin and admit no
primes; any other identifier followed by "(" is a formal function, and a
bare identifier is a parameter.
"""

from __future__ import annotations

import re
from fractions import Fraction

from .expr import (
    BUILTINS, Add, Builtin, Div, Expr, Func, Jet, Mul, Param, Pow, Rat,
)

__all__ = ["parse", "ParseError"]


class ParseError(ValueError):
    def __init__(self, message, text, pos):
        super().__init__(f"{message} at position {pos}: {text!r}")
        self.pos = pos
        self.text = text


_TOKEN = re.compile(r"""
    (?P<num>\d+(\.\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9]*)
  | (?P<primes>'+)
  | (?P<op>[-+*/^(),]|_\{|\})
  | (?P<ws>\s+)
""", re.VERBOSE)

_JETVAR = re.compile(r"z(\d+)?t?\Z")


def _tokenize(text):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", text, pos)
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def next(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        kind, tok, pos = self.next()
        if tok != value:
            raise ParseError(f"expected {value!r}, found {tok or 'end of input'!r}",
                             self.text, pos)

    def fail(self, msg):
        _, tok, pos = self.peek()
        raise ParseError(msg, self.text, pos)

    # grammar

    def parse(self) -> Expr:
        e = self.expr()
        kind, tok, pos = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected trailing input {tok!r}", self.text, pos)
        return e

    def expr(self) -> Expr:
        terms = [self.term()]
        while self.peek()[1] in ("+", "-"):
            op = self.next()[1]
            t = self.term()
            terms.append(t if op == "+" else Mul((Rat(-1), t)))
        return terms[0] if len(terms) == 1 else Add(tuple(terms))

    def term(self) -> Expr:
        factors = [self.unary()]
        while self.peek()[1] in ("*", "/"):
            op = self.next()[1]
            u = self.unary()
            factors.append(u if op == "*" else Pow(u, -1))
        return factors[0] if len(factors) == 1 else Mul(tuple(factors))

    def unary(self) -> Expr:
        if self.peek()[1] == "-":
            self.next()
            return Mul((Rat(-1), self.unary()))
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[1] == "^":
            self.next()
            neg = False
            paren = self.peek()[1] == "("
            if paren:
                self.next()
            if self.peek()[1] == "-":
                self.next()
                neg = True
            kind, tok, pos = self.next()
            if kind != "num" or "." in tok:
                raise ParseError("exponent must be an integer", self.text, pos)
            if paren:
                self.expect(")")
            return Pow(base, -int(tok) if neg else int(tok))
        return base

    def atom(self) -> Expr:
        kind, tok, pos = self.peek()
        if kind == "num":
            self.next()
            if "." in tok:
                whole, frac = tok.split(".")
                return Rat(Fraction(int(whole + frac), 10 ** len(frac)))
            return Rat(Fraction(int(tok)))
        if tok == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        if kind == "ident":
            self.next()
            return self.after_ident(tok, pos)
        self.fail(f"expected an expression, found {tok or 'end of input'!r}")

    def after_ident(self, name, pos) -> Expr:
        nkind, ntok, npos = self.peek()

        primes = 0
        didx = None
        if nkind == "primes":
            primes = len(ntok)
            self.next()
        elif ntok == "_{":
            self.next()
            didx = [self.integer()]
            while self.peek()[1] == ",":
                self.next()
                didx.append(self.integer())
            self.expect("}")

        if self.peek()[1] == "(":
            self.next()
            args = [self.expr()]
            while self.peek()[1] == ",":
                self.next()
                args.append(self.expr())
            self.expect(")")
            if name in BUILTINS:
                if primes or didx is not None:
                    raise ParseError(
                        f"builtin {name!r} admits no derivative marks", self.text, pos)
                if len(args) != 1:
                    raise ParseError(
                        f"builtin {name!r} takes one argument", self.text, pos)
                return Builtin(name, args[0])
            if name in ("tan", "cot", "sec", "csc", "log", "ln", "sqrt",
                        "tanh", "coth", "arcsin", "arccos", "arctan"):
                raise ParseError(f"unknown builtin {name!r}", self.text, pos)
            if didx is not None:
                if len(didx) != len(args):
                    raise ParseError(
                        "derivative multi-index must match argument count",
                        self.text, pos)
                return Func(name, tuple(args), tuple(didx))
            if primes and len(args) != 1:
                raise ParseError(
                    "primes require a single-argument function", self.text, pos)
            return Func(name, tuple(args), (primes,) * 1 if len(args) == 1
                        else (0,) * len(args))

        if primes or didx is not None:
            raise ParseError("derivative marks require an argument list",
                             self.text, pos)
        m = _JETVAR.match(name)
        if m:
            order = int(m.group(1)) if m.group(1) else 0
            return Jet(order, name.endswith("t"))
        return Param(name)

    def integer(self) -> int:
        kind, tok, pos = self.next()
        if kind != "num" or "." in tok:
            raise ParseError("expected an integer", self.text, pos)
        return int(tok)


def parse(text: str) -> Expr:
    """Parse source text into an expression tree (no normalization)."""
    if not isinstance(text, str):
        raise ParseError("input must be a string", repr(text), 0)
    return _Parser(text).parse()
