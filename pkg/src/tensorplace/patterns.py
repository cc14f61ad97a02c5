"""Pattern DSL for describing backend-supported operator subgraphs.

Grammar:

    pattern     := op_pattern
    op_pattern  := IDENT "(" args? ")" constraints?
    args        := arg ("," arg)*
    arg         := op_pattern | "*"
    constraints := "{" constraint ("," constraint)* "}"
    constraint  := IDENT "=" literal
                 | IDENT "in" "[" literal ("," literal)* "]"
                 | IDENT "in" literal ".." literal

Examples: `relu(*)`, `conv2d(*, *){data_layout="NCHW"}`,
`relu(add(conv2d(*, *), *))`, `dense(*, *){units in 1..4096}`.

A pattern's root is the consumer end of the fragment: pattern argument i
descends to the producer of the matched node's i-th input. A wildcard stands
for exactly one input edge. An op pattern written with zero arguments,
e.g. `relu()`, accepts a node with any inputs. The full pattern must be an op
pattern; a bare `*` is rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

from tensorplace.errors import PatternSyntaxError

Literal = Union[int, float, str]


@dataclass(frozen=True)
class Equals:
    key: str
    value: Literal

    def matches(self, attrs) -> bool:
        return self.key in attrs and attrs[self.key] == self.value


@dataclass(frozen=True)
class OneOf:
    key: str
    values: tuple[Literal, ...]

    def matches(self, attrs) -> bool:
        return self.key in attrs and attrs[self.key] in self.values


@dataclass(frozen=True)
class IntRange:
    key: str
    lo: int
    hi: int

    def matches(self, attrs) -> bool:
        v = attrs.get(self.key)
        return (isinstance(v, int) and not isinstance(v, bool)
                and self.lo <= v <= self.hi)


AttrConstraint = Union[Equals, OneOf, IntRange]


@dataclass(frozen=True)
class Wildcard:
    """Matches exactly one input edge (node- or graph-input-valued)."""


@dataclass(frozen=True)
class OpPattern:
    """Matches one operator node and, positionally, its producers.

    Empty `args` matches a node with any number of inputs; non-empty `args`
    must equal the node's input count.
    """

    op_kind: str
    args: tuple[Pattern, ...] = ()
    constraints: tuple[AttrConstraint, ...] = ()


Pattern = Union[OpPattern, Wildcard]


def pattern_size(p: Pattern) -> int:
    """Number of op patterns (wildcards excluded)."""
    if isinstance(p, Wildcard):
        return 0
    return 1 + sum(pattern_size(a) for a in p.args)


def pattern_depth(p: Pattern) -> int:
    """Longest chain of op patterns from the root (wildcards excluded)."""
    if isinstance(p, Wildcard):
        return 0
    if not p.args:
        return 1
    return 1 + max(pattern_depth(a) for a in p.args)


# -- parsing -------------------------------------------------------------------

_PUNCT = ("(", ")", "{", "}", "[", "]", ",", "=", "..", "*")


@dataclass(frozen=True)
class _Token:
    kind: str  # 'ident' | 'int' | 'float' | 'str' | punctuation | 'end'
    text: str
    value: Literal | None
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        start_line, start_col = line, col
        if ch == "." and text[i:i + 2] == "..":
            tokens.append(_Token("..", "..", None, start_line, start_col))
            i += 2
            col += 2
            continue
        if ch in "(){}[],=*":
            tokens.append(_Token(ch, ch, None, start_line, start_col))
            i += 1
            col += 1
            continue
        if ch == '"':
            j = i + 1
            out = []
            while j < n and text[j] != '"':
                if text[j] == "\\" and j + 1 < n:
                    esc = text[j + 1]
                    out.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(
                        esc, esc))
                    j += 2
                else:
                    out.append(text[j])
                    j += 1
            if j >= n:
                raise PatternSyntaxError("unterminated string literal",
                                         start_line, start_col)
            tokens.append(_Token("str", text[i:j + 1], "".join(out),
                                 start_line, start_col))
            col += j + 1 - i
            i = j + 1
            continue
        if ch.isdigit() or (ch == "-" and i + 1 < n and text[i + 1].isdigit()):
            j = i + 1
            while j < n and text[j].isdigit():
                j += 1
            is_float = False
            if j < n and text[j] == "." and text[j:j + 2] != "..":
                is_float = True
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    is_float = True
                    j = k
                    while j < n and text[j].isdigit():
                        j += 1
            raw = text[i:j]
            value: Literal = float(raw) if is_float else int(raw)
            tokens.append(_Token("float" if is_float else "int", raw, value,
                                 start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i + 1
            while j < n and (text[j].isalnum() or text[j] in "_."):
                # A trailing ".." belongs to range syntax, not the identifier.
                if text[j] == "." and text[j:j + 2] == "..":
                    break
                j += 1
            tokens.append(_Token("ident", text[i:j], None, start_line, start_col))
            col += j - i
            i = j
            continue
        raise PatternSyntaxError(f"unexpected character {ch!r}",
                                 start_line, start_col)
    tokens.append(_Token("end", "", None, line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            raise PatternSyntaxError(
                f"expected {kind!r} but found {tok.text or 'end of input'!r}",
                tok.line, tok.column)
        return self.advance()

    def parse(self) -> OpPattern:
        tok = self.peek()
        if tok.kind == "*":
            raise PatternSyntaxError(
                "a full pattern must be an op pattern, not a bare wildcard",
                tok.line, tok.column)
        pattern = self.op_pattern()
        tail = self.peek()
        if tail.kind != "end":
            raise PatternSyntaxError(f"unexpected trailing input {tail.text!r}",
                                     tail.line, tail.column)
        return pattern

    def op_pattern(self) -> OpPattern:
        name = self.expect("ident")
        self.expect("(")
        args: list[Pattern] = []
        if self.peek().kind != ")":
            args.append(self.arg())
            while self.peek().kind == ",":
                self.advance()
                args.append(self.arg())
        self.expect(")")
        constraints: tuple[AttrConstraint, ...] = ()
        if self.peek().kind == "{":
            constraints = self.constraint_block()
        return OpPattern(name.text, tuple(args), constraints)

    def arg(self) -> Pattern:
        tok = self.peek()
        if tok.kind == "*":
            self.advance()
            return Wildcard()
        if tok.kind == "ident":
            return self.op_pattern()
        raise PatternSyntaxError(
            f"expected an op pattern or '*' but found {tok.text or 'end of input'!r}",
            tok.line, tok.column)

    def constraint_block(self) -> tuple[AttrConstraint, ...]:
        self.expect("{")
        out = [self.constraint()]
        while self.peek().kind == ",":
            self.advance()
            out.append(self.constraint())
        self.expect("}")
        return tuple(out)

    def constraint(self) -> AttrConstraint:
        key = self.expect("ident")
        tok = self.peek()
        if tok.kind == "=":
            self.advance()
            return Equals(key.text, self.literal())
        if tok.kind == "ident" and tok.text == "in":
            self.advance()
            if self.peek().kind == "[":
                self.advance()
                values = [self.literal()]
                while self.peek().kind == ",":
                    self.advance()
                    values.append(self.literal())
                self.expect("]")
                return OneOf(key.text, tuple(values))
            lo_tok = self.peek()
            lo = self.literal()
            self.expect("..")
            hi_tok = self.peek()
            hi = self.literal()
            if not isinstance(lo, int) or not isinstance(hi, int):
                raise PatternSyntaxError("range bounds must be integers",
                                         lo_tok.line, lo_tok.column)
            if lo > hi:
                raise PatternSyntaxError(f"empty range {lo}..{hi}",
                                         hi_tok.line, hi_tok.column)
            return IntRange(key.text, lo, hi)
        raise PatternSyntaxError(
            f"expected '=' or 'in' after constraint key {key.text!r}",
            tok.line, tok.column)

    def literal(self) -> Literal:
        tok = self.peek()
        if tok.kind in ("int", "float", "str"):
            self.advance()
            return tok.value  # type: ignore[return-value]
        raise PatternSyntaxError(
            f"expected a literal but found {tok.text or 'end of input'!r}",
            tok.line, tok.column)


def parse_pattern(text: str) -> OpPattern:
    """Parse DSL text into a pattern AST; raises PatternSyntaxError with
    line and column on malformed input."""
    return _Parser(text).parse()


# -- rendering -----------------------------------------------------------------

def _literal_text(value: Literal) -> str:
    if isinstance(value, str):
        return json.dumps(value)
    return repr(value)


def _constraint_text(c: AttrConstraint) -> str:
    if isinstance(c, Equals):
        return f"{c.key}={_literal_text(c.value)}"
    if isinstance(c, OneOf):
        return f"{c.key} in [{', '.join(_literal_text(v) for v in c.values)}]"
    return f"{c.key} in {c.lo}..{c.hi}"


def pattern_to_text(p: Pattern) -> str:
    """Render a pattern AST back to canonical DSL text (parse round-trips)."""
    if isinstance(p, Wildcard):
        return "*"
    args = ", ".join(pattern_to_text(a) for a in p.args)
    text = f"{p.op_kind}({args})"
    if p.constraints:
        text += "{" + ", ".join(_constraint_text(c) for c in p.constraints) + "}"
    return text


# -- pattern files ---------------------------------------------------------------

def _strip_comment(line: str) -> str:
    in_str = False
    i = 0
    while i < len(line):
        ch = line[i]
        if in_str:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "#":
            return line[:i]
        i += 1
    return line


def load_pattern_file(path: str) -> list[OpPattern]:
    """Read a pattern file: one pattern per line, '#' starts a comment."""
    patterns: list[OpPattern] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = _strip_comment(raw).strip()
            if not line:
                continue
            try:
                patterns.append(parse_pattern(line))
            except PatternSyntaxError as exc:
                raise PatternSyntaxError(
                    f"{path}:{lineno}: {exc.message}", lineno, exc.column
                ) from exc
    return patterns


def save_pattern_file(patterns: list[OpPattern], path: str,
                      comments: list[str] | None = None) -> None:
    """Write patterns one per line; `comments[i]` is appended to line i."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, p in enumerate(patterns):
            line = pattern_to_text(p)
            if comments and i < len(comments) and comments[i]:
                line += f"  # {comments[i]}"
            fh.write(line + "\n")
