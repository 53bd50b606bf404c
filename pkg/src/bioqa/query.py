"""Boolean query dialect: AST, parser, canonical printer, repair pass.

Grammar (operators are case-sensitive uppercase; bare adjacency defaults
to AND, configurable):

    expr  := or
    or    := and ( OR and )*
    and   := unary ( (AND | adjacency) unary )*
    unary := NOT unary | atom
    atom  := '(' expr ')' | FIELD ':' atom | PHRASE | TERM

The repair pass turns arbitrary (typically LLM-emitted) text into
something parse_query accepts, logging every edit.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional, Union

QUERY_FIELDS = ("title", "abstract")
MAX_DEPTH = 32

# characters the full dialect reserves but this subset does not support;
# repair strips them, parse rejects them
_UNSUPPORTED_CHARS = set("~^*?[]{}")
_SPECIAL_CHARS = set('()":') | _UNSUPPORTED_CHARS


@dataclass(frozen=True)
class Term:
    token: str

    def __post_init__(self):
        if not self.token:
            raise ValueError("term token must be nonempty")


@dataclass(frozen=True)
class Phrase:
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("phrase text must be nonempty")


@dataclass(frozen=True)
class Field:
    name: str
    child: "QueryAst"

    def __post_init__(self):
        if self.name not in QUERY_FIELDS:
            raise ValueError(f"field must be one of {QUERY_FIELDS}, got {self.name!r}")


@dataclass(frozen=True)
class Not:
    child: "QueryAst"


@dataclass(frozen=True)
class And:
    children: tuple["QueryAst", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("AND needs at least 2 children")


@dataclass(frozen=True)
class Or:
    children: tuple["QueryAst", ...]

    def __post_init__(self):
        if len(self.children) < 2:
            raise ValueError("OR needs at least 2 children")


@dataclass(frozen=True)
class Group:
    child: "QueryAst"


QueryAst = Union[Term, Phrase, Field, Not, And, Or, Group]


def ast_depth(node: QueryAst) -> int:
    if isinstance(node, (Term, Phrase)):
        return 1
    if isinstance(node, (Field, Not, Group)):
        return 1 + ast_depth(node.child)
    return 1 + max(ast_depth(c) for c in node.children)


class ParseError(ValueError):
    """Parse failure with error code and character position."""

    def __init__(self, code: str, pos: int, message: str = ""):
        self.code = code
        self.pos = pos
        super().__init__(f"{code} at position {pos}" + (f": {message}" if message else ""))


class IrreparableQueryError(ValueError):
    pass


# --- lexer -----------------------------------------------------------------

_TOK_LPAREN = "LPAREN"
_TOK_RPAREN = "RPAREN"
_TOK_AND = "AND"
_TOK_OR = "OR"
_TOK_NOT = "NOT"
_TOK_FIELD = "FIELD"
_TOK_PHRASE = "PHRASE"
_TOK_TERM = "TERM"


@dataclass(frozen=True)
class _Token:
    kind: str
    value: str
    pos: int


def _scan_phrase(text: str, start: int) -> tuple[str, int]:
    """Scan a quoted phrase starting at the opening quote; returns the
    unescaped text and the index just past the closing quote."""
    out = []
    i = start + 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\\" and i + 1 < n and text[i + 1] in ('"', "\\"):
            out.append(text[i + 1])
            i += 2
            continue
        if ch == '"':
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise ParseError("UnbalancedQuote", start)


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "(":
            tokens.append(_Token(_TOK_LPAREN, ch, i))
            i += 1
            continue
        if ch == ")":
            tokens.append(_Token(_TOK_RPAREN, ch, i))
            i += 1
            continue
        if ch == '"':
            phrase, end = _scan_phrase(text, i)
            tokens.append(_Token(_TOK_PHRASE, phrase, i))
            i = end
            continue
        if ch in _UNSUPPORTED_CHARS or ch == ":":
            raise ParseError("UnsupportedSyntax", i, f"unsupported character {ch!r}")
        start = i
        while i < n and not text[i].isspace() and text[i] not in _SPECIAL_CHARS:
            i += 1
        word = text[start:i]
        if i < n and text[i] == ":":
            tokens.append(_Token(_TOK_FIELD, word, start))
            i += 1
            continue
        if word == "AND":
            tokens.append(_Token(_TOK_AND, word, start))
        elif word == "OR":
            tokens.append(_Token(_TOK_OR, word, start))
        elif word == "NOT":
            tokens.append(_Token(_TOK_NOT, word, start))
        else:
            tokens.append(_Token(_TOK_TERM, word, start))
    return tokens


# --- parser ----------------------------------------------------------------

_ATOM_STARTERS = (_TOK_LPAREN, _TOK_FIELD, _TOK_PHRASE, _TOK_TERM, _TOK_NOT)


class _Parser:
    def __init__(self, tokens: list[_Token], text_len: int, default_operator: str):
        self.tokens = tokens
        self.pos = 0
        self.text_len = text_len
        self.default_operator = default_operator

    def peek(self) -> Optional[_Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def parse(self) -> QueryAst:
        node = self.expr(depth=1)
        trailing = self.peek()
        if trailing is not None:
            if trailing.kind == _TOK_RPAREN:
                raise ParseError("UnbalancedParen", trailing.pos, "unmatched ')'")
            raise ParseError("UnexpectedToken", trailing.pos, trailing.value)
        return node

    def expr(self, depth: int) -> QueryAst:
        return self.or_expr(depth)

    def or_expr(self, depth: int) -> QueryAst:
        children = [self.and_expr(depth)]
        while True:
            tok = self.peek()
            if tok is not None and tok.kind == _TOK_OR:
                self.next()
                children.append(self.and_expr(depth))
            else:
                break
        if len(children) == 1:
            return children[0]
        return Or(tuple(children))

    def and_expr(self, depth: int) -> QueryAst:
        children = [self.unary(depth)]
        implicit_only = True
        saw_join = False
        while True:
            tok = self.peek()
            if tok is None:
                break
            if tok.kind == _TOK_AND:
                self.next()
                children.append(self.unary(depth))
                saw_join = True
                implicit_only = False
            elif tok.kind in _ATOM_STARTERS:
                children.append(self.unary(depth))
                saw_join = True
            else:
                break
        if len(children) == 1:
            return children[0]
        if saw_join and implicit_only and self.default_operator == "OR":
            return Or(tuple(children))
        return And(tuple(children))

    def unary(self, depth: int) -> QueryAst:
        self._check_depth(depth)
        tok = self.peek()
        if tok is not None and tok.kind == _TOK_NOT:
            self.next()
            return Not(self.unary(depth + 1))
        return self.atom(depth)

    def atom(self, depth: int) -> QueryAst:
        self._check_depth(depth)
        tok = self.peek()
        if tok is None:
            raise ParseError("UnexpectedEnd", self.text_len, "expected an atom")
        if tok.kind == _TOK_LPAREN:
            self.next()
            inner = self.peek()
            if inner is not None and inner.kind == _TOK_RPAREN:
                raise ParseError("EmptyGroup", tok.pos)
            if inner is None:
                raise ParseError("UnbalancedParen", tok.pos)
            child = self.expr(depth + 1)
            closer = self.peek()
            if closer is None or closer.kind != _TOK_RPAREN:
                raise ParseError("UnbalancedParen", tok.pos)
            self.next()
            return Group(child)
        if tok.kind == _TOK_FIELD:
            self.next()
            if tok.value not in QUERY_FIELDS:
                raise ParseError("UnknownField", tok.pos, tok.value)
            child = self.atom(depth + 1)
            return Field(tok.value, child)
        if tok.kind == _TOK_PHRASE:
            self.next()
            if not tok.value:
                raise ParseError("EmptyPhrase", tok.pos)
            return Phrase(tok.value)
        if tok.kind == _TOK_TERM:
            self.next()
            return Term(tok.value)
        if tok.kind == _TOK_RPAREN:
            raise ParseError("UnbalancedParen", tok.pos, "unmatched ')'")
        raise ParseError("UnexpectedToken", tok.pos, tok.value)

    def _check_depth(self, depth: int):
        if depth > MAX_DEPTH:
            tok = self.peek()
            pos = tok.pos if tok else self.text_len
            raise ParseError("DepthExceeded", pos, f"depth > {MAX_DEPTH}")


def parse_query(text: str, *, default_operator: str = "AND") -> QueryAst:
    """Parse dialect text into an AST; raises ParseError with a character
    position on any malformed input (never crashes on arbitrary text)."""
    if default_operator not in ("AND", "OR"):
        raise ValueError("default_operator must be AND or OR")
    if not text or not text.strip():
        raise ParseError("EmptyQuery", 0)
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("EmptyQuery", 0)
    return _Parser(tokens, len(text), default_operator).parse()


# --- canonical printer -----------------------------------------------------

def _quote_phrase(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_query(ast: QueryAst) -> str:
    """Canonical text form: explicit AND/OR, minimal parentheses, phrases
    double-quoted, single spaces."""
    if isinstance(ast, Term):
        return ast.token
    if isinstance(ast, Phrase):
        return _quote_phrase(ast.text)
    if isinstance(ast, Group):
        return f"({render_query(ast.child)})"
    if isinstance(ast, Field):
        child = render_query(ast.child)
        if isinstance(ast.child, (And, Or, Not)):
            child = f"({child})"
        return f"{ast.name}:{child}"
    if isinstance(ast, Not):
        child = render_query(ast.child)
        if isinstance(ast.child, (And, Or)):
            child = f"({child})"
        return f"NOT {child}"
    if isinstance(ast, And):
        parts = []
        for c in ast.children:
            rendered = render_query(c)
            parts.append(f"({rendered})" if isinstance(c, Or) else rendered)
        return " AND ".join(parts)
    if isinstance(ast, Or):
        return " OR ".join(render_query(c) for c in ast.children)
    raise TypeError(f"not a query node: {ast!r}")


# --- repair ----------------------------------------------------------------

class RepairAction(enum.Enum):
    BALANCED_QUOTE = "BalancedQuote"
    BALANCED_PAREN = "BalancedParen"
    DROPPED_UNSUPPORTED_TOKEN = "DroppedUnsupportedToken"
    COLLAPSED_EMPTY_GROUP = "CollapsedEmptyGroup"
    DEFAULTED_OPERATOR = "DefaultedOperator"


@dataclass(frozen=True)
class RepairLog:
    original: str
    repaired: str
    actions: tuple[RepairAction, ...]

    def __post_init__(self):
        if (self.original == self.repaired) != (len(self.actions) == 0):
            raise ValueError("actions must be empty iff original == repaired")


# lenient token kinds used only by repair
_R_LP, _R_RP, _R_OP, _R_NOT, _R_FIELD, _R_WORD, _R_PHRASE = range(7)

_FIELD_PREFIX_RE = re.compile(r"^([A-Za-z][\w.-]*):(.*)$", re.DOTALL)
_BOOST_RE = re.compile(r"\^[0-9.]*")
_FUZZ_RE = re.compile(r"~[0-9.]*")


def _scan_phrase_lenient(text: str, start: int) -> tuple[str, int, bool]:
    """Like _scan_phrase but tolerates a missing closing quote (content
    runs to end of input, including a trailing lone backslash)."""
    out: list[str] = []
    i = start + 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\\" and i + 1 < n and text[i + 1] in ('"', "\\"):
            out.append(text[i + 1])
            i += 2
            continue
        if ch == '"':
            return "".join(out), i + 1, True
        out.append(ch)
        i += 1
    return "".join(out), n, False


def _lenient_tokens(text: str) -> tuple[list[tuple[int, str]], bool]:
    """Tokenize anything. Returns (tokens, quotes_balanced); an
    unterminated quote is treated as closed at end of input."""
    tokens: list[tuple[int, str]] = []
    balanced = True
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "(":
            tokens.append((_R_LP, "("))
            i += 1
            continue
        if ch == ")":
            tokens.append((_R_RP, ")"))
            i += 1
            continue
        if ch == '"':
            phrase, end, closed = _scan_phrase_lenient(text, i)
            tokens.append((_R_PHRASE, phrase))
            if not closed:
                balanced = False
            i = end
            continue
        start = i
        while i < n and not text[i].isspace() and text[i] not in ('(', ')', '"'):
            i += 1
        word = text[start:i]
        if word in ("AND", "OR"):
            tokens.append((_R_OP, word))
        elif word == "NOT":
            tokens.append((_R_NOT, word))
        else:
            tokens.append((_R_WORD, word))
    return tokens, balanced


def _balance_parens(tokens: list[tuple[int, str]]) -> tuple[list[tuple[int, str]], bool]:
    out: list[tuple[int, str]] = []
    depth = 0
    changed = False
    for tok in tokens:
        if tok[0] == _R_LP:
            depth += 1
            out.append(tok)
        elif tok[0] == _R_RP:
            if depth == 0:
                changed = True  # drop the stray closer
                continue
            depth -= 1
            out.append(tok)
        else:
            out.append(tok)
    if depth > 0:
        out.extend([(_R_RP, ")")] * depth)
        changed = True
    return out, changed


def _filter_dialect(tokens: list[tuple[int, str]]) -> tuple[list[tuple[int, str]], bool]:
    """Strip syntax outside the supported subset: wildcards, fuzziness,
    boosts, range brackets, unknown field prefixes, stray colons."""
    out: list[tuple[int, str]] = []
    dropped = False
    for kind, value in tokens:
        if kind != _R_WORD:
            out.append((kind, value))
            continue
        field_name = None
        rest = value
        m = _FIELD_PREFIX_RE.match(value)
        if m:
            name, rest = m.group(1), m.group(2)
            if name in QUERY_FIELDS:
                field_name = name
            else:
                dropped = True
        cleaned = _BOOST_RE.sub("", rest)
        cleaned = _FUZZ_RE.sub("", cleaned)
        cleaned = "".join(ch for ch in cleaned if ch not in _UNSUPPORTED_CHARS and ch != ":")
        if cleaned != rest:
            dropped = True
        if field_name is not None:
            out.append((_R_FIELD, field_name))
        if cleaned:
            out.append((_R_WORD, cleaned))
        elif field_name is None and not m:
            dropped = True  # the whole token vanished
    return out, dropped


def _collapse_empty_groups(tokens: list[tuple[int, str]]) -> tuple[list[tuple[int, str]], bool]:
    changed = False
    while True:
        for i in range(len(tokens) - 1):
            if tokens[i][0] == _R_LP and tokens[i + 1][0] == _R_RP:
                tokens = tokens[:i] + tokens[i + 2:]
                changed = True
                break
        else:
            return tokens, changed


def _normalize_operators(tokens: list[tuple[int, str]]) -> tuple[list[tuple[int, str]], bool, bool]:
    """Drop dangling or doubled operators and orphan field prefixes, then
    make bare adjacency explicit. Returns (tokens, dropped, defaulted)."""
    dropped = False

    def atom_starts(seq, i) -> bool:
        return i < len(seq) and seq[i][0] in (_R_LP, _R_NOT, _R_FIELD, _R_WORD, _R_PHRASE)

    while True:
        changed = False
        cleaned: list[tuple[int, str]] = []
        for i, tok in enumerate(tokens):
            kind = tok[0]
            prev_kind = cleaned[-1][0] if cleaned else None
            if kind == _R_OP:
                dangling_left = prev_kind is None or prev_kind in (_R_OP, _R_LP, _R_NOT, _R_FIELD)
                if dangling_left or not atom_starts(tokens, i + 1):
                    changed = dropped = True
                    continue
            if kind == _R_NOT and not atom_starts(tokens, i + 1):
                changed = dropped = True
                continue
            if kind == _R_FIELD and not (i + 1 < len(tokens)
                                         and tokens[i + 1][0] in (_R_LP, _R_WORD, _R_PHRASE)):
                changed = dropped = True
                continue
            cleaned.append(tok)
        tokens = cleaned
        if not changed:
            break

    defaulted = False
    out: list[tuple[int, str]] = []
    for tok in tokens:
        if out:
            ends_atom = out[-1][0] in (_R_WORD, _R_PHRASE, _R_RP)
            begins_atom = tok[0] in (_R_LP, _R_NOT, _R_FIELD, _R_WORD, _R_PHRASE)
            if ends_atom and begins_atom:
                out.append((_R_OP, "AND"))
                defaulted = True
        out.append(tok)
    return out, dropped, defaulted


def _join_tokens(tokens: list[tuple[int, str]]) -> str:
    parts: list[str] = []
    for kind, value in tokens:
        if kind == _R_PHRASE:
            rendered = _quote_phrase(value)
        elif kind == _R_FIELD:
            rendered = f"{value}:"
        else:
            rendered = value
        if parts and kind != _R_RP and parts[-1][-1] not in ("(", ":"):
            parts.append(" ")
        parts.append(rendered)
    return "".join(parts)


def _record(actions: list[RepairAction], action: RepairAction):
    if action not in actions:
        actions.append(action)


def repair_query(text: str, *, default_operator: str = "AND") -> tuple[str, RepairLog]:
    """Best-effort repair of arbitrary text into parseable dialect text.

    Already-valid text is a fixed point. Passes, in order: balance
    quotes, balance parens, strip unsupported syntax, collapse empty
    groups, normalize/insert operators. A final salvage pass (AND of the
    surviving atoms) guarantees the output parses; raises
    IrreparableQueryError only when no atom survives.
    """
    try:
        parse_query(text, default_operator=default_operator)
        return text, RepairLog(original=text, repaired=text, actions=())
    except ParseError:
        pass

    actions: list[RepairAction] = []
    tokens, quotes_ok = _lenient_tokens(text)
    if not quotes_ok:
        actions.append(RepairAction.BALANCED_QUOTE)

    tokens, paren_fixed = _balance_parens(tokens)
    if paren_fixed:
        actions.append(RepairAction.BALANCED_PAREN)

    tokens, dropped = _filter_dialect(tokens)
    if dropped:
        _record(actions, RepairAction.DROPPED_UNSUPPORTED_TOKEN)

    kept: list[tuple[int, str]] = []
    for kind, value in tokens:
        if kind == _R_PHRASE and not value.strip():
            _record(actions, RepairAction.DROPPED_UNSUPPORTED_TOKEN)
            continue
        kept.append((kind, value))
    tokens = kept

    tokens, collapsed = _collapse_empty_groups(tokens)
    if collapsed:
        _record(actions, RepairAction.COLLAPSED_EMPTY_GROUP)

    tokens, dropped_ops, defaulted = _normalize_operators(tokens)
    if dropped_ops:
        _record(actions, RepairAction.DROPPED_UNSUPPORTED_TOKEN)
    if defaulted:
        _record(actions, RepairAction.DEFAULTED_OPERATOR)

    # operator cleanup can empty groups again ("(AND)" -> "()")
    tokens, collapsed_again = _collapse_empty_groups(tokens)
    if collapsed_again:
        _record(actions, RepairAction.COLLAPSED_EMPTY_GROUP)
        tokens, _, _ = _normalize_operators(tokens)

    repaired = _join_tokens(tokens)
    if not repaired.strip():
        raise IrreparableQueryError(f"no query atoms survive repair of {text!r}")
    try:
        parse_query(repaired, default_operator=default_operator)
    except ParseError:
        atoms = [(k, v) for k, v in tokens if k in (_R_WORD, _R_PHRASE)]
        if not atoms:
            raise IrreparableQueryError(f"no query atoms survive repair of {text!r}") from None
        flattened: list[tuple[int, str]] = []
        for atom in atoms:
            if flattened:
                flattened.append((_R_OP, "AND"))
            flattened.append(atom)
        repaired = _join_tokens(flattened)
        _record(actions, RepairAction.DROPPED_UNSUPPORTED_TOKEN)
        _record(actions, RepairAction.DEFAULTED_OPERATOR)
        parse_query(repaired, default_operator=default_operator)

    return repaired, RepairLog(original=text, repaired=repaired, actions=tuple(actions))
