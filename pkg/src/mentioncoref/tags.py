"""Bracket tag language for nested mentions.

A sentence of M words is tagged with a sequence over four symbols::

    [   a mention starts at the current word
    ]   the most recently opened mention ends at the current word
    +   move to the next word, some bracket still open
    -   move to the next word, no bracket open

The pointer into the sentence only moves on ``+``/``-``. Within a word the
canonical order is all ``[`` then all ``]`` then exactly one advance symbol.
Brackets match last-in first-out, so the representable span sets are exactly
the laminar families (any two spans nested or disjoint).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

OPEN, CLOSE, ADVANCE_IN, ADVANCE_OUT = "[", "]", "+", "-"
SYMBOLS: Tuple[str, ...] = (OPEN, CLOSE, ADVANCE_IN, ADVANCE_OUT)
SYMBOL_INDEX = {s: k for k, s in enumerate(SYMBOLS)}
ADVANCES = frozenset((ADVANCE_IN, ADVANCE_OUT))
DEFAULT_MAX_DEPTH = 8


class MentionSpan(NamedTuple):
    start: int
    end: int  # inclusive


class TagError(ValueError):
    """Invalid tag sequence or span set."""

    def __init__(self, message: str, position: Optional[int] = None, kind: str = ""):
        super().__init__(message)
        self.position = position
        self.kind = kind


@dataclass(frozen=True)
class TagSequence:
    symbols: Tuple[str, ...]
    alignment: Tuple[int, ...]  # word index each symbol was emitted at

    @classmethod
    def from_symbols(cls, symbols: Iterable[str]) -> "TagSequence":
        symbols = tuple(symbols)
        alignment, word = [], 0
        for s in symbols:
            alignment.append(word)
            if s in ADVANCES:
                word += 1
        return cls(symbols, tuple(alignment))

    @classmethod
    def parse(cls, text: str) -> "TagSequence":
        return cls.from_symbols(text.split())

    def render(self) -> str:
        return " ".join(self.symbols)

    def __len__(self):
        return len(self.symbols)

    @property
    def ids(self) -> List[int]:
        return [SYMBOL_INDEX[s] for s in self.symbols]


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    position: Optional[int] = None
    kind: str = ""
    message: str = ""

    def __bool__(self):
        return self.ok


def _as_symbols(tags) -> Tuple[str, ...]:
    if isinstance(tags, TagSequence):
        return tags.symbols
    if isinstance(tags, str):
        return tuple(tags.split())
    return tuple(tags)


def _scan(symbols: Sequence[str], M: Optional[int], max_depth: int, canonical: bool):
    """Walk the sequence; return (spans, report)."""
    stack: List[int] = []
    spans: List[MentionSpan] = []
    seen: Set[MentionSpan] = set()
    word, closed_here = 0, False

    def fail(pos, kind, msg):
        return spans, ValidationReport(False, pos, kind, f"{msg}, position {pos}")

    for pos, sym in enumerate(symbols):
        if sym not in SYMBOL_INDEX:
            return fail(pos, "unknown_symbol", f"unknown symbol {sym!r}")
        if M is not None and word >= M:
            return fail(pos, "advance_count", f"symbol {sym!r} after the final word (M={M})")
        if sym == OPEN:
            if canonical and closed_here:
                return fail(pos, "non_canonical", "OPEN after CLOSE within a word")
            if len(stack) >= max_depth:
                return fail(pos, "depth_cap", f"nesting depth exceeds cap {max_depth}")
            stack.append(word)
        elif sym == CLOSE:
            if not stack:
                return fail(pos, "close_at_depth_0", "CLOSE at depth 0")
            span = MentionSpan(stack.pop(), word)
            if span in seen:
                return fail(pos, "duplicate_span", f"duplicate span {tuple(span)}")
            seen.add(span)
            spans.append(span)
            closed_here = True
        elif sym == ADVANCE_IN:
            if not stack:
                return fail(pos, "advance_in_at_depth_0", "ADVANCE_IN at depth 0")
            word, closed_here = word + 1, False
        else:
            if stack:
                return fail(pos, "advance_out_at_depth", f"ADVANCE_OUT at depth {len(stack)}")
            word, closed_here = word + 1, False
    end = len(symbols)
    if stack:
        return fail(end, "unclosed", f"{len(stack)} unclosed bracket(s) at end")
    if M is not None and word != M:
        return fail(end, "advance_count", f"{word} advance symbols for M={M} words")
    if symbols and symbols[-1] not in ADVANCES:
        return fail(end, "trailing_symbols", "sequence does not end with an advance symbol")
    return spans, ValidationReport(True)


def validate(tags, M: Optional[int] = None, max_depth: int = DEFAULT_MAX_DEPTH,
             canonical: bool = True) -> ValidationReport:
    """Check the grammar; the report names the first violation and its position."""
    return _scan(_as_symbols(tags), M, max_depth, canonical)[1]


def decode_tags(tags, M: Optional[int] = None, max_depth: int = DEFAULT_MAX_DEPTH,
                canonical: bool = True) -> Set[MentionSpan]:
    spans, report = _scan(_as_symbols(tags), M, max_depth, canonical)
    if not report.ok:
        raise TagError(report.message, report.position, report.kind)
    return set(spans)


# ---------------------------------------------------------------------------
# span sets

def _crosses(a: Tuple[int, int], b: Tuple[int, int]) -> bool:
    (s1, e1), (s2, e2) = a, b
    return s1 < s2 <= e1 < e2 or s2 < s1 <= e2 < e1


def is_laminar(spans: Iterable[Tuple[int, int]]) -> bool:
    spans = list(spans)
    return not any(_crosses(a, b) for k, a in enumerate(spans) for b in spans[k + 1:])


def nesting_depth(spans: Iterable[Tuple[int, int]]) -> int:
    spans = list(spans)
    if not spans:
        return 0
    last = max(e for _, e in spans)
    return max(sum(1 for s, e in spans if s <= w <= e) for w in range(last + 1))


def encode_mentions(spans: Iterable[Tuple[int, int]], M: int,
                    max_depth: int = DEFAULT_MAX_DEPTH) -> TagSequence:
    spans = [MentionSpan(int(s), int(e)) for s, e in spans]
    if len(set(spans)) != len(spans):
        dup = next(s for s in spans if spans.count(s) > 1)
        raise TagError(f"duplicate span {tuple(dup)}", kind="duplicate_span")
    for s in spans:
        if not 0 <= s.start <= s.end < M:
            raise TagError(f"span {tuple(s)} out of range for M={M}", kind="out_of_range")
    for k, a in enumerate(spans):
        for b in spans[k + 1:]:
            if _crosses(a, b):
                raise TagError(f"crossing spans {tuple(a)} and {tuple(b)}", kind="not_laminar")
    if nesting_depth(spans) > max_depth:
        raise TagError(f"nesting depth {nesting_depth(spans)} exceeds cap {max_depth}", kind="depth_cap")
    starts: dict = {}
    ends: dict = {}
    for s in spans:
        starts.setdefault(s.start, []).append(s)
        ends.setdefault(s.end, []).append(s)
    symbols: List[str] = []
    depth = 0
    for w in range(M):
        n_open = len(starts.get(w, ()))
        n_close = len(ends.get(w, ()))
        symbols += [OPEN] * n_open + [CLOSE] * n_close
        depth += n_open - n_close
        symbols.append(ADVANCE_IN if depth > 0 else ADVANCE_OUT)
    return TagSequence.from_symbols(symbols)


def laminarize(spans: Iterable[Tuple[int, int]]) -> Set[MentionSpan]:
    """Greedy maximal laminar subset, scanning by (start asc, end desc)."""
    kept: List[MentionSpan] = []
    for s in sorted({MentionSpan(int(a), int(b)) for a, b in spans}, key=lambda x: (x.start, -x.end)):
        if not any(_crosses(s, k) for k in kept):
            kept.append(s)
    return set(kept)


# ---------------------------------------------------------------------------
# incremental grammar used to constrain decoding

@dataclass(frozen=True)
class GrammarState:
    """Decoder-side grammar state; every reachable state can still complete.

    ``stack`` holds the start word of each open bracket, ``closed_start`` the
    start of the span most recently closed at the current word (or -1).
    """

    M: int
    word: int = 0
    stack: Tuple[int, ...] = ()
    closed_start: int = -1
    max_depth: int = DEFAULT_MAX_DEPTH

    @property
    def done(self) -> bool:
        return self.word >= self.M

    def _feasible(self) -> bool:
        # Brackets sharing a start must end at distinct words, and within a
        # word closes pop at most one bracket per start. Emptying the stack
        # therefore needs 1 + sum(group_size - 1) words.
        remaining = self.M - self.word
        if not self.stack:
            return remaining >= 0
        groups = []
        for s in self.stack:
            if groups and groups[-1][0] == s:
                groups[-1][1] += 1
            else:
                groups.append([s, 1])
        need = 1 + sum(g - 1 for _, g in groups)
        if self.stack[-1] == self.closed_start:
            return need <= remaining - 1
        return need <= remaining

    def step(self, symbol: str) -> Optional["GrammarState"]:
        """Next state, or None if ``symbol`` is not allowed here."""
        if self.done:
            return None
        if symbol == OPEN:
            if self.closed_start >= 0 or len(self.stack) >= self.max_depth:
                return None
            nxt = GrammarState(self.M, self.word, self.stack + (self.word,), -1, self.max_depth)
        elif symbol == CLOSE:
            if not self.stack or self.stack[-1] == self.closed_start:
                return None
            nxt = GrammarState(self.M, self.word, self.stack[:-1], self.stack[-1], self.max_depth)
        elif symbol == ADVANCE_IN:
            if not self.stack:
                return None
            nxt = GrammarState(self.M, self.word + 1, self.stack, -1, self.max_depth)
        elif symbol == ADVANCE_OUT:
            if self.stack:
                return None
            nxt = GrammarState(self.M, self.word + 1, self.stack, -1, self.max_depth)
        else:
            return None
        return nxt if nxt._feasible() else None

    def allowed(self) -> List[str]:
        return [s for s in SYMBOLS if self.step(s) is not None]
