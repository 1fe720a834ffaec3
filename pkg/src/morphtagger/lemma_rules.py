"""Lemma rules: a casing script followed by an edit script.

A rule is written ``casing;edit``.  The casing part is a ``¦``-separated list
of ``↑n``/``↓n`` operations, each setting the case of the produced lemma from
character ``n`` up to the next operation.  The edit part is either ``a``
followed by a literal lemma (irregular words), or ``d`` followed by the prefix
operations, ``¦``, and the suffix operations.  Operations are ``→`` (copy a
character), ``-`` (delete a character) and ``+c`` (insert ``c``).  The form
characters between the prefix and the suffix form the root and are copied
unchanged.

Examples::

    the  -> the    ↓0;d¦
    Bush -> Bush   ↑0¦↓1;d¦
    has  -> have   ↓0;d¦-+v+e
    is   -> be     ↓0;abe
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional, Union

from .errors import InapplicableRuleError, InvalidInputError, RuleParseError

UP, DOWN = "↑", "↓"
SEP, END_CASING = "¦", ";"
COPY_SYM, DELETE_SYM, INSERT_SYM = "→", "-", "+"
ABSOLUTE_TAG, DELTA_TAG = "a", "d"


# Case mapping is done per character and only where it is reversible, so
# lowercasing never changes string length and uppercasing restores the
# original character.  Characters such as U+0130 or titlecase digraphs are
# treated as caseless.
@lru_cache(maxsize=None)
def lower_char(c: str) -> str:
    lo = c.lower()
    if len(lo) == 1 and lo != c and lo.upper() == c:
        return lo
    return c


@lru_cache(maxsize=None)
def upper_char(c: str) -> str:
    up = c.upper()
    if len(up) == 1 and up != c and lower_char(up) == c:
        return up
    return c


def lower(text: str) -> str:
    return "".join(map(lower_char, text))


def is_upper(c: str) -> bool:
    return lower_char(c) != c


@dataclass(frozen=True)
class CasingOp:
    upper: bool
    start: int

    def __post_init__(self):
        if self.start < 0:
            raise ValueError("casing op start must be >= 0")

    def __str__(self):
        return f"{UP if self.upper else DOWN}{self.start}"


@dataclass(frozen=True)
class CasingScript:
    ops: tuple[CasingOp, ...]

    def __post_init__(self):
        if not self.ops or self.ops[0].start != 0:
            raise ValueError("casing script must start at index 0")
        for a, b in zip(self.ops, self.ops[1:]):
            if b.start <= a.start:
                raise ValueError("casing ops must be strictly increasing")

    def __str__(self):
        return SEP.join(map(str, self.ops))

    def apply(self, lemma: str) -> str:
        out = []
        bounds = [op.start for op in self.ops[1:]] + [len(lemma)]
        for op, end in zip(self.ops, bounds):
            segment = lemma[op.start:end]
            out.append("".join(map(upper_char if op.upper else lower_char, segment)))
        return "".join(out)


@dataclass(frozen=True)
class EditOp:
    kind: str  # "copy" | "delete" | "insert"
    char: str = ""

    def __str__(self):
        if self.kind == "copy":
            return COPY_SYM
        if self.kind == "delete":
            return DELETE_SYM
        return INSERT_SYM + self.char


COPY = EditOp("copy")
DELETE = EditOp("delete")


def Insert(char: str) -> EditOp:
    if len(char) != 1:
        raise ValueError("insert carries exactly one character")
    return EditOp("insert", char)


@dataclass(frozen=True)
class Absolute:
    lemma: str

    def __str__(self):
        return ABSOLUTE_TAG + self.lemma


@dataclass(frozen=True)
class Delta:
    prefix_ops: tuple[EditOp, ...] = ()
    suffix_ops: tuple[EditOp, ...] = ()

    def __str__(self):
        return (DELTA_TAG + "".join(map(str, self.prefix_ops)) + SEP
                + "".join(map(str, self.suffix_ops)))

    @cached_property
    def prefix_consumed(self) -> int:
        return sum(op.kind != "insert" for op in self.prefix_ops)

    @cached_property
    def suffix_consumed(self) -> int:
        return sum(op.kind != "insert" for op in self.suffix_ops)

    @cached_property
    def produced(self) -> int:
        """Characters emitted by the prefix and suffix programs (root excluded)."""
        return sum(op.kind != "delete" for op in self.prefix_ops + self.suffix_ops)


EditScript = Union[Absolute, Delta]


@dataclass(frozen=True)
class LemmaRule:
    casing: CasingScript
    edit: EditScript

    def __str__(self):
        return f"{self.casing}{END_CASING}{self.edit}"


IDENTITY_RULE = LemmaRule(CasingScript((CasingOp(False, 0),)), Delta())


# -- induction ---------------------------------------------------------------

def casing_script(lemma: str) -> CasingScript:
    """One op per maximal run of upper / non-upper characters."""
    ops = []
    previous = None
    for i, c in enumerate(lemma):
        up = is_upper(c)
        if up != previous:
            ops.append(CasingOp(up, i))
        previous = up
    return CasingScript(tuple(ops))


def longest_common_substring(a: str, b: str) -> tuple[int, int, int]:
    """Return ``(length, start_in_a, start_in_b)``.

    Among equally long matches the leftmost in ``a`` wins, then the leftmost
    in ``b``.  Length 0 means no shared character.
    """
    best = (0, 0, 0)
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        ai = a[i - 1]
        for j in range(1, len(b) + 1):
            if ai == b[j - 1]:
                n = cur[j] = prev[j - 1] + 1
                start_a, start_b = i - n, j - n
                if (n > best[0] or (n == best[0] and (start_a, start_b) < (best[1], best[2]))):
                    best = (n, start_a, start_b)
        prev = cur
    return best


def min_edit_script(source: str, target: str) -> tuple[EditOp, ...]:
    """Cheapest copy/delete/insert program turning ``source`` into ``target``.

    Copies are free, deletions and insertions cost one.  On equal cost an
    insertion is preferred over a deletion, and a deletion over a copy; this
    yields e.g. ``-+v+e`` for ``s -> ve`` and ``-+o→`` for ``'t -> ot``.
    """
    n, m = len(source), len(target)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    back = [[""] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        for j in range(m + 1):
            if i == 0 and j == 0:
                continue
            best, how = None, ""
            if i and j and source[i - 1] == target[j - 1]:
                best, how = cost[i - 1][j - 1], "c"
            if i and (best is None or cost[i - 1][j] + 1 <= best):
                best, how = cost[i - 1][j] + 1, "d"
            if j and (best is None or cost[i][j - 1] + 1 <= best):
                best, how = cost[i][j - 1] + 1, "i"
            cost[i][j], back[i][j] = best, how
    ops = []
    i, j = n, m
    while i or j:
        how = back[i][j]
        if how == "c":
            ops.append(COPY)
            i, j = i - 1, j - 1
        elif how == "d":
            ops.append(DELETE)
            i -= 1
        else:
            ops.append(Insert(target[j - 1]))
            j -= 1
    return tuple(reversed(ops))


@lru_cache(maxsize=200_000)
def induce_rule(form: str, lemma: str) -> LemmaRule:
    if not form or not lemma:
        raise InvalidInputError("form and lemma must be non-empty")
    casing = casing_script(lemma)
    lf, ll = lower(form), lower(lemma)
    n, f, l = longest_common_substring(lf, ll)
    if n == 0:
        return LemmaRule(casing, Absolute(ll))
    return LemmaRule(casing, Delta(min_edit_script(lf[:f], ll[:l]),
                                   min_edit_script(lf[f + n:], ll[l + n:])))


# -- application ---------------------------------------------------------------

def _run_ops(ops, text: str, out: list) -> None:
    k = 0
    for op in ops:
        if op.kind == "copy":
            out.append(text[k])
            k += 1
        elif op.kind == "delete":
            k += 1
        else:
            out.append(op.char)


def is_applicable(rule: LemmaRule, form: str) -> bool:
    """True iff :func:`apply_rule` would succeed and give a non-empty lemma."""
    edit = rule.edit
    if isinstance(edit, Absolute):
        return bool(form) and bool(edit.lemma)
    consumed = edit.prefix_consumed + edit.suffix_consumed
    if consumed > len(form):
        return False
    return edit.produced + len(form) - consumed > 0


def apply_rule(rule: LemmaRule, form: str) -> str:
    if not is_applicable(rule, form):
        raise InapplicableRuleError(f"rule {rule} cannot be applied to {form!r}")
    edit = rule.edit
    if isinstance(edit, Absolute):
        lemma = edit.lemma
    else:
        lf = lower(form)
        p, s = edit.prefix_consumed, edit.suffix_consumed
        out: list[str] = []
        _run_ops(edit.prefix_ops, lf[:p], out)
        out.append(lf[p:len(lf) - s])
        _run_ops(edit.suffix_ops, lf[len(lf) - s:], out)
        lemma = "".join(out)
    return rule.casing.apply(lemma)


# -- text form -------------------------------------------------------------------

def serialize_rule(rule: LemmaRule) -> str:
    return str(rule)


def _parse_ops(text: str, pos: int, stop: Optional[str]) -> tuple[tuple[EditOp, ...], int]:
    ops = []
    while pos < len(text):
        c = text[pos]
        if stop is not None and c == stop:
            return tuple(ops), pos
        if c == COPY_SYM:
            ops.append(COPY)
        elif c == DELETE_SYM:
            ops.append(DELETE)
        elif c == INSERT_SYM:
            if pos + 1 >= len(text):
                raise RuleParseError("insert without a character", pos)
            pos += 1
            ops.append(Insert(text[pos]))
        else:
            raise RuleParseError(f"unexpected {c!r} in edit script", pos)
        pos += 1
    if stop is not None:
        raise RuleParseError(f"missing {stop!r} between prefix and suffix ops", pos)
    return tuple(ops), pos


@lru_cache(maxsize=100_000)
def parse_rule(text: str) -> LemmaRule:
    pos = 0
    ops = []
    while True:
        if pos >= len(text) or text[pos] not in (UP, DOWN):
            raise RuleParseError("expected ↑ or ↓", pos)
        upper = text[pos] == UP
        pos += 1
        start = pos
        while pos < len(text) and text[pos].isascii() and text[pos].isdigit():
            pos += 1
        digits = text[start:pos]
        if not digits:
            raise RuleParseError("expected casing index", pos)
        if len(digits) > 1 and digits[0] == "0":
            raise RuleParseError("leading zero in casing index", start)
        index = int(digits)
        if ops and index <= ops[-1].start:
            raise RuleParseError("casing indices must increase", start)
        if not ops and index != 0:
            raise RuleParseError("first casing op must start at 0", start)
        ops.append(CasingOp(upper, index))
        if pos >= len(text):
            raise RuleParseError("missing ';' after casing script", pos)
        if text[pos] == END_CASING:
            pos += 1
            break
        if text[pos] != SEP:
            raise RuleParseError(f"unexpected {text[pos]!r} in casing script", pos)
        pos += 1
    casing = CasingScript(tuple(ops))

    if pos >= len(text):
        raise RuleParseError("missing edit script", pos)
    tag = text[pos]
    pos += 1
    if tag == ABSOLUTE_TAG:
        literal = text[pos:]
        if not literal:
            raise RuleParseError("empty absolute lemma", pos)
        return LemmaRule(casing, Absolute(literal))
    if tag != DELTA_TAG:
        raise RuleParseError(f"edit script must start with 'a' or 'd', got {tag!r}", pos - 1)
    prefix, pos = _parse_ops(text, pos, SEP)
    suffix, _ = _parse_ops(text, pos + 1, None)
    return LemmaRule(casing, Delta(prefix, suffix))


# -- corpus level --------------------------------------------------------------------

def rule_text(form: str, lemma: str) -> str:
    return str(induce_rule(form, lemma))


def rule_inventory(corpus) -> dict[str, int]:
    """Count induced rules over all lemmatized tokens, most frequent first."""
    counts: Counter = Counter()
    for tok in corpus.tokens():
        if tok.lemma is None:
            continue
        counts[rule_text(tok.form, tok.lemma)] += 1
    return {r: counts[r] for r in sorted(counts, key=lambda r: (-counts[r], r))}
