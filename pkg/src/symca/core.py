"""Rules, periodic configurations and evolution.

A cellular automaton is a pair (n, k) plus a local function from k-tuples of
states to a state; states are 0..n-1.  The global map applies the local
function synchronously at every cell, reading the asymmetric window
[-floor((k-1)/2), floor(k/2)] around each cell (for k=2 that is offsets
{0, +1}).  Bi-infinite configurations are represented by spatially periodic
ones, which are closed under evolution.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

from .errors import InvalidState, ParseError, ShapeError, TooLarge

DENSIFY_CAP = 2 ** 24  # max table entries we are willing to materialize


def window_lo(k: int) -> int:
    return -((k - 1) // 2)


def window_hi(k: int) -> int:
    return k // 2


def tuple_to_index(tup: Sequence[int], n: int) -> int:
    """Lexicographic index of a neighbourhood tuple, leftmost most significant."""
    idx = 0
    for s in tup:
        idx = idx * n + s
    return idx


def index_to_tuple(idx: int, n: int, k: int) -> tuple[int, ...]:
    out = [0] * k
    for i in range(k - 1, -1, -1):
        out[i] = idx % n
        idx //= n
    return tuple(out)


def all_tuples(n: int, k: int) -> Iterator[tuple[int, ...]]:
    tup = [0] * k
    while True:
        yield tuple(tup)
        i = k - 1
        while i >= 0 and tup[i] == n - 1:
            tup[i] = 0
            i -= 1
        if i < 0:
            return
        tup[i] += 1


@dataclass(frozen=True)
class Rule:
    """A local transition function, dense (tabular) or intensional.

    Dense rules store the full table in lexicographic tuple order; intensional
    rules carry a pure evaluator plus a stable identity string and are used
    when n**k is too large to materialize.
    """

    n: int
    k: int
    table: tuple[int, ...] | None = None
    fn: Callable[[tuple[int, ...]], int] | None = None
    name: str = ""

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError("need n >= 1 and k >= 1")
        if (self.table is None) == (self.fn is None):
            raise ValueError("exactly one of table/fn must be given")
        if self.table is not None:
            if len(self.table) != self.n ** self.k:
                raise ShapeError(
                    f"table has {len(self.table)} entries, expected {self.n ** self.k}")
            bad = [v for v in self.table if not (0 <= v < self.n)]
            if bad:
                raise InvalidState(f"table value {bad[0]} outside 0..{self.n - 1}")

    @property
    def is_dense(self) -> bool:
        return self.table is not None

    def __call__(self, tup: Sequence[int]) -> int:
        if len(tup) != self.k:
            raise ValueError(f"tuple of length {len(tup)}, rule has k={self.k}")
        if self.table is not None:
            return self.table[tuple_to_index(tup, self.n)]
        out = self.fn(tuple(tup))
        if not (0 <= out < self.n):
            raise InvalidState(f"evaluator returned {out} outside 0..{self.n - 1}")
        return out

    def densify(self, cap: int = DENSIFY_CAP) -> "Rule":
        if self.is_dense:
            return self
        size = self.n ** self.k
        if size > cap:
            raise TooLarge(f"n**k = {size} exceeds densify cap {cap}")
        table = tuple(self(t) for t in all_tuples(self.n, self.k))
        return Rule(self.n, self.k, table=table, name=self.name)

    def ident(self) -> str:
        """Stable identity string (hash of the table for dense rules)."""
        if self.is_dense:
            h = hashlib.blake2b(digest_size=8)
            h.update(f"{self.n},{self.k}:".encode())
            h.update(bytes(str(self.table), "ascii"))
            return h.hexdigest()
        return self.name or f"intensional-{self.n}-{self.k}"


def dense_rule(n: int, k: int, table: Iterable[int], name: str = "") -> Rule:
    return Rule(n, k, table=tuple(table), name=name)


def intensional_rule(n: int, k: int, fn: Callable[[tuple[int, ...]], int],
                     name: str) -> Rule:
    return Rule(n, k, fn=fn, name=name)


def rules_equal(a: Rule, b: Rule, cap: int = DENSIFY_CAP) -> bool:
    """Exhaustive comparison; refuses (TooLarge) beyond the densify cap."""
    if (a.n, a.k) != (b.n, b.k):
        return False
    if a.is_dense and b.is_dense:
        return a.table == b.table
    size = a.n ** a.k
    if size > cap:
        raise TooLarge(f"cannot compare intensional rules with n**k = {size}")
    return all(a(t) == b(t) for t in all_tuples(a.n, a.k))


@dataclass(frozen=True)
class PConfig:
    """A spatially periodic configuration: the bi-infinite repetition of word."""

    word: tuple[int, ...]

    def __post_init__(self):
        if len(self.word) < 1:
            raise ValueError("period must be >= 1")

    @property
    def period(self) -> int:
        return len(self.word)

    def __getitem__(self, z: int) -> int:
        return self.word[z % len(self.word)]

    def rotate(self, d: int) -> "PConfig":
        """The configuration shifted so that old cell d becomes cell 0."""
        p = len(self.word)
        return PConfig(tuple(self.word[(i + d) % p] for i in range(p)))

    def shift(self, z: int) -> "PConfig":
        """sigma_z: cell x of the result reads old cell x - z."""
        return self.rotate(-z)

    def replicate(self, times: int) -> "PConfig":
        return PConfig(self.word * times)

    def to_period(self, p: int) -> "PConfig":
        if p % len(self.word):
            raise ValueError(f"{p} is not a multiple of period {len(self.word)}")
        return self.replicate(p // len(self.word))

    def canonical(self) -> "PConfig":
        """Reduce to the minimal period (alignment preserved)."""
        p = len(self.word)
        for d in sorted(_divisors(p)):
            if self.word == self.word[:d] * (p // d):
                return PConfig(self.word[:d])
        return self

    def same_configuration(self, other: "PConfig") -> bool:
        return self.canonical() == other.canonical()


def _divisors(p: int) -> list[int]:
    return [d for d in range(1, p + 1) if p % d == 0]


def config(word: Iterable[int]) -> PConfig:
    return PConfig(tuple(word))


def _check_symbols(rule: Rule, word: Sequence[int]) -> None:
    for s in word:
        if not (0 <= s < rule.n):
            raise InvalidState(f"symbol {s} outside 0..{rule.n - 1}")


def apply_local(rule: Rule, word: Sequence[int]) -> tuple[int, ...]:
    """Extend the local function to finite words: length p+k maps to p+1.

    Returns the empty word when len(word) < k.
    """
    _check_symbols(rule, word)
    if len(word) < rule.k:
        return ()
    return tuple(rule(word[i:i + rule.k]) for i in range(len(word) - rule.k + 1))


def step(rule: Rule, c: PConfig) -> PConfig:
    """One application of the global map, with wrap-around indexing."""
    _check_symbols(rule, c.word)
    lo = window_lo(rule.k)
    p = c.period
    return PConfig(tuple(
        rule(tuple(c[z + lo + i] for i in range(rule.k))) for z in range(p)))


@dataclass(frozen=True)
class Trace:
    """Successive rows of an evolution, rows[t+1] = step(rows[t])."""

    rows: tuple[PConfig, ...]
    rule_id: str = ""

    @property
    def steps(self) -> int:
        return len(self.rows) - 1

    @property
    def last(self) -> PConfig:
        return self.rows[-1]


def evolve(rule: Rule, c: PConfig, steps: int) -> Trace:
    if steps < 0:
        raise ValueError("steps must be >= 0")
    rows = [c]
    for _ in range(steps):
        rows.append(step(rule, rows[-1]))
    return Trace(tuple(rows), rule_id=rule.ident())


def iterate(rule: Rule, c: PConfig, steps: int) -> PConfig:
    for _ in range(steps):
        c = step(rule, c)
    return c


# ---------------------------------------------------------------------------
# File formats.  Rule file: lines "n N", "k K", "table v v v ..." with the
# table in lexicographic tuple order (leftmost neighbour most significant).
# Trace file: header lines n/period/T, then T+1 state rows (digit strings for
# n <= 10, space-separated integers otherwise).

def serialize_rule(rule: Rule) -> str:
    if not rule.is_dense:
        raise ParseError("intensional rules must be densified before serializing")
    table = " ".join(str(v) for v in rule.table)
    return f"n {rule.n}\nk {rule.k}\ntable {table}\n"


def parse_rule(text: str) -> Rule:
    fields: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ParseError(f"malformed line: {line!r}")
        fields[parts[0]] = parts[1]
    for key in ("n", "k", "table"):
        if key not in fields:
            raise ParseError(f"missing field {key!r}")
    try:
        n = int(fields["n"])
        k = int(fields["k"])
        table = [int(v) for v in fields["table"].split()]
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if n < 1 or k < 1:
        raise ParseError("need n >= 1 and k >= 1")
    if len(table) != n ** k:
        raise ShapeError(f"table has {len(table)} entries, expected {n ** k}")
    for v in table:
        if not (0 <= v < n):
            raise InvalidState(f"table value {v} outside 0..{n - 1}")
    return dense_rule(n, k, table)


def _format_row(word: Sequence[int], n: int) -> str:
    if n <= 10:
        return "".join(str(s) for s in word)
    return " ".join(str(s) for s in word)


def _parse_row(line: str, n: int) -> tuple[int, ...]:
    try:
        if n <= 10:
            return tuple(int(ch) for ch in line.strip())
        return tuple(int(v) for v in line.split())
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def serialize_trace(trace: Trace, n: int) -> str:
    period = trace.rows[0].period
    lines = [f"n {n}", f"period {period}", f"T {trace.steps}"]
    lines += [_format_row(row.word, n) for row in trace.rows]
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> tuple[int, Trace]:
    """Returns (n, trace)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 4:
        raise ParseError("trace file too short")
    header = {}
    for ln in lines[:3]:
        parts = ln.split()
        if len(parts) != 2:
            raise ParseError(f"malformed header line: {ln!r}")
        header[parts[0]] = parts[1]
    try:
        n = int(header["n"])
        period = int(header["period"])
        steps = int(header["T"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad trace header: {exc}") from None
    rows = []
    if len(lines) - 3 != steps + 1:
        raise ParseError(f"expected {steps + 1} rows, found {len(lines) - 3}")
    for ln in lines[3:]:
        word = _parse_row(ln, n)
        if len(word) != period:
            raise ParseError(f"row of length {len(word)}, period is {period}")
        for s in word:
            if not (0 <= s < n):
                raise InvalidState(f"symbol {s} outside 0..{n - 1}")
        rows.append(PConfig(word))
    return n, Trace(tuple(rows))


def lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)
