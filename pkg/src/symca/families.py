"""Symmetry families of local rules.

A family constrains the local function either through an equivalence on
neighbourhood tuples (multiset / set / sum invariance, optionally sparing a
centered block of positions) or through a condition coupling input and output
(captive: the output must occur in the window; state-symmetric: the rule
commutes with every renaming of the states).  Families with tuple-equivalence
structure are products over key classes, which is what makes exact counting
and uniform sampling straightforward.
"""
from __future__ import annotations

import hashlib
import itertools
import random
from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial
from typing import Iterator, Sequence

from .core import DENSIFY_CAP, Rule, all_tuples, dense_rule, intensional_rule
from .errors import InvalidSpec, TooLarge, Unsupported

ENUM_CAP = 10 ** 7       # max family members enumerate_family will stream
CLASS_CAP = 10 ** 6      # max key classes / multisets iterated for counting
EXP_CAP = 10 ** 6        # max exponent for closed-form big-integer counts
PERM_CAP = 8             # max n for which we touch all n! state permutations

BASES = ("all", "ms", "set", "tot", "ss")


@dataclass(frozen=True)
class FamilySpec:
    """Which family a predicate / counter / sampler refers to.

    sym: the tuple-equivalence part ("all" = none); outer: size of the
    centered fully-dependent block for outer variants; captive: intersect
    with the captive condition.
    """

    sym: str = "all"
    outer: int | None = None
    captive: bool = False

    def __post_init__(self):
        if self.sym not in BASES:
            raise InvalidSpec(f"unknown base {self.sym!r}")
        if self.outer is not None:
            if self.sym not in ("ms", "set", "tot"):
                raise InvalidSpec("outer variants exist only for ms/set/tot")
            if self.outer < 0:
                raise InvalidSpec("outer size must be >= 0")
        if self.sym == "ss" and self.captive:
            # supported only through enumeration; no product structure
            pass

    def text(self) -> str:
        if self.outer is not None:
            base = f"o{self.sym}:{self.outer}"
        else:
            base = self.sym
        if self.captive:
            if base == "all":
                return "k"
            if base in ("ms", "set"):
                return "k" + base
            return "k+" + base
        return base

    def validate_for(self, k: int) -> None:
        if self.outer is not None and self.outer > k:
            raise InvalidSpec(f"outer size {self.outer} exceeds k={k}")


def parse_family(text: str) -> FamilySpec:
    sym = None
    outer = None
    captive = False
    for token in text.strip().lower().split("+"):
        token = token.strip()
        if token == "k":
            captive = True
            continue
        if token in ("kms", "kset", "ktot"):
            captive = True
            token = token[1:]
        if token.startswith("o") and ":" in token:
            name, _, num = token.partition(":")
            name = name[1:]
            if name not in ("ms", "set", "tot"):
                raise InvalidSpec(f"unknown outer family {token!r}")
            if sym is not None:
                raise InvalidSpec(f"two base families in {text!r}")
            sym = name
            try:
                outer = int(num)
            except ValueError:
                raise InvalidSpec(f"bad outer size in {token!r}") from None
        elif token in BASES:
            if sym is not None:
                raise InvalidSpec(f"two base families in {text!r}")
            sym = token
        else:
            raise InvalidSpec(f"unknown family token {token!r}")
    return FamilySpec(sym or "all", outer, captive)


# ---------------------------------------------------------------------------
# Canonical neighbourhood keys

def outer_split(k: int, kp: int) -> tuple[int, int]:
    """Start/end (exclusive) of the centered fully-dependent block."""
    start = (k - kp) // 2
    return start, start + kp


def family_key(spec: FamilySpec, tup: Sequence[int]) -> tuple:
    """Canonical key of a tuple under the family's equivalence.

    Captivity and state symmetry do not coarsen the key: they use the raw
    tuple.  Two tuples get equal keys iff the family forces equal outputs.
    """
    k = len(tup)
    spec.validate_for(k)
    tup = tuple(tup)
    if spec.outer is not None:
        start, end = outer_split(k, spec.outer)
        center = tup[start:end]
        rest = tup[:start] + tup[end:]
        return ("o", center, _plain_key(spec.sym, rest))
    if spec.sym in ("ms", "set", "tot"):
        return _plain_key(spec.sym, tup)
    return ("t", tup)


def _plain_key(sym: str, tup: tuple[int, ...]) -> tuple:
    if sym == "ms":
        return ("ms", tuple(sorted(tup)))
    if sym == "set":
        return ("set", tuple(sorted(set(tup))))
    if sym == "tot":
        return ("tot", sum(tup))
    raise InvalidSpec(f"no plain key for {sym!r}")


def key_support(key: tuple) -> tuple[int, ...] | None:
    """States guaranteed present in every tuple with this key, or None if the
    key does not determine them (sum keys)."""
    kind = key[0]
    if kind == "t":
        return tuple(sorted(set(key[1])))
    if kind in ("ms", "set"):
        return tuple(sorted(set(key[1])))
    if kind == "o":
        inner = key_support(key[2])
        if inner is None:
            return None
        return tuple(sorted(set(key[1]) | set(inner)))
    return None


def key_repr(key: tuple) -> str:
    """Stable text form, usable as a hash input and in reports."""
    kind = key[0]
    if kind == "o":
        center = ",".join(str(v) for v in key[1])
        return f"o[{center}]{key_repr(key[2])}"
    if kind == "tot":
        return f"tot{key[1]}"
    body = ",".join(str(v) for v in key[1])
    return f"{kind}{{{body}}}"


# ---------------------------------------------------------------------------
# Key classes (materialized for small n**k)

@dataclass(frozen=True)
class KeyClass:
    key: tuple
    rep: tuple[int, ...]          # lexicographically minimal member
    size: int                     # number of tuples in the class
    allowed: tuple[int, ...]      # outputs the family permits for the class


def class_table(spec: FamilySpec, n: int, k: int,
                cap: int = DENSIFY_CAP) -> list[KeyClass]:
    """All key classes of A_n^k in order of their minimal tuple.

    For captive families the allowed set is the intersection of the supports
    of the class members (an empty intersection makes the family empty).
    """
    spec.validate_for(k)
    if spec.sym == "ss":
        raise Unsupported("state-symmetric families have no per-class table")
    if n ** k > cap:
        raise TooLarge(f"n**k = {n ** k} exceeds cap {cap}")
    order: list[tuple] = []
    reps: dict[tuple, tuple[int, ...]] = {}
    sizes: dict[tuple, int] = {}
    allowed: dict[tuple, set[int]] = {}
    for tup in all_tuples(n, k):
        key = family_key(spec, tup)
        if key not in reps:
            order.append(key)
            reps[key] = tup
            sizes[key] = 0
            allowed[key] = set(tup) if spec.captive else set(range(n))
        sizes[key] += 1
        if spec.captive:
            allowed[key] &= set(tup)
    return [KeyClass(key, reps[key], sizes[key], tuple(sorted(allowed[key])))
            for key in order]


def allowed_outputs(spec: FamilySpec, key: tuple, n: int) -> tuple[int, ...]:
    """Allowed outputs for a key, computed from the key alone."""
    if not spec.captive:
        return tuple(range(n))
    support = key_support(key)
    if support is None:
        raise Unsupported(
            "captive+totalistic allowed sets need class enumeration")
    return support


# ---------------------------------------------------------------------------
# Membership

def _all_permutations(n: int) -> list[tuple[int, ...]]:
    if factorial(n) > factorial(PERM_CAP):
        raise TooLarge(f"n! too large for state-permutation work (n={n})")
    return list(itertools.permutations(range(n)))


def is_member(rule: Rule, spec: FamilySpec, cap: int = DENSIFY_CAP) -> bool:
    """Exhaustive membership test (rule dense or n**k within the cap)."""
    spec.validate_for(rule.k)
    r = rule.densify(cap)
    n, k = r.n, r.k
    if spec.sym in ("ms", "set", "tot") or spec.outer is not None:
        seen: dict[tuple, int] = {}
        for tup in all_tuples(n, k):
            key = family_key(spec, tup)
            out = r(tup)
            if seen.setdefault(key, out) != out:
                return False
    if spec.captive:
        for tup in all_tuples(n, k):
            if r(tup) not in set(tup):
                return False
    if spec.sym == "ss":
        _all_permutations(n)  # enforce the cap before the loop
        for i in range(n - 1):
            swap = list(range(n))
            swap[i], swap[i + 1] = swap[i + 1], swap[i]
            for tup in all_tuples(n, k):
                if swap[r(tup)] != r(tuple(swap[s] for s in tup)):
                    return False
    return True


# ---------------------------------------------------------------------------
# Exact counting

def _set_class_count(n: int, k: int) -> int:
    if k == 0:
        return 1
    return sum(comb(n, j) for j in range(1, min(n, k) + 1))


def _inner_class_count(sym: str, n: int, k: int) -> int:
    if k == 0:
        return 1
    if sym == "ms":
        return comb(n + k - 1, k)
    if sym == "set":
        return _set_class_count(n, k)
    if sym == "tot":
        return k * (n - 1) + 1
    raise InvalidSpec(sym)


def _guarded_power(base: int, exponent: int) -> int:
    if exponent > EXP_CAP:
        raise TooLarge(f"count exponent {exponent} exceeds cap {EXP_CAP}")
    return base ** exponent


def _multisets(n: int, k: int) -> Iterator[tuple[int, ...]]:
    return itertools.combinations_with_replacement(range(n), k)


def count_family(spec: FamilySpec, n: int, k: int) -> int:
    """Exact number of rules of size (n, k) in the family."""
    spec.validate_for(k)
    if spec.sym == "ss":
        return _count_ss(n, k, spec.captive)

    if not spec.captive:
        if spec.outer is not None:
            inner = _inner_class_count(spec.sym, n, k - spec.outer)
            return _guarded_power(n, _guarded_power(n, spec.outer) * inner
                                  if n ** spec.outer * inner <= EXP_CAP
                                  else EXP_CAP + 1)
        if spec.sym == "all":
            return _guarded_power(n, _guarded_power(n, k))
        return _guarded_power(n, _inner_class_count(spec.sym, n, k))

    # Captive (possibly intersected with an equivalence family): the count is
    # the product over key classes of the class's allowed-output count.
    if spec.outer is None and spec.sym == "all":
        if comb(n + k - 1, k) > CLASS_CAP or n ** k > EXP_CAP:
            raise TooLarge("captive count too large")
        total = 1
        for m in _multisets(n, k):
            perms = factorial(k)
            for s in set(m):
                perms //= factorial(m.count(s))
            total *= len(set(m)) ** perms
        return total
    if spec.outer is None and spec.sym == "ms":
        if comb(n + k - 1, k) > CLASS_CAP:
            raise TooLarge("too many multiset classes")
        total = 1
        for m in _multisets(n, k):
            total *= len(set(m))
        return total
    if spec.outer is None and spec.sym == "set":
        total = 1
        for j in range(1, min(n, k) + 1):
            total *= _guarded_power(j, comb(n, j))
        return total
    if spec.outer is None and spec.sym == "tot":
        if comb(n + k - 1, k) > CLASS_CAP:
            raise TooLarge("too many multiset classes")
        per_sum: dict[int, set[int]] = {}
        for m in _multisets(n, k):
            s = sum(m)
            per_sum[s] = per_sum.get(s, set(range(n))) & set(m)
        total = 1
        for s in sorted(per_sum):
            total *= len(per_sum[s])
        return total
    # outer + captive
    kp = spec.outer
    rest = k - kp
    if n ** kp * comb(n + rest - 1, rest) > CLASS_CAP:
        raise TooLarge("too many outer classes")
    total = 1
    for center in all_tuples(n, kp) if kp else [()]:
        if spec.sym in ("ms", "set"):
            seen: set[tuple] = set()
            for m in _multisets(n, rest) if rest else [()]:
                key = tuple(sorted(set(m))) if spec.sym == "set" else m
                if key in seen:
                    continue
                seen.add(key)
                total *= len(set(center) | set(m))
        else:  # tot
            per_sum = {}
            for m in _multisets(n, rest) if rest else [()]:
                s = sum(m)
                per_sum[s] = per_sum.get(s, set(range(n))) & (set(center) | set(m))
            for s in sorted(per_sum):
                total *= len(per_sum[s])
    return total


# ---------------------------------------------------------------------------
# State-symmetric machinery (orbit based)

def _ss_orbits(n: int, k: int):
    """Orbits of the simultaneous S_n action on tuples; per orbit the
    lexicographically minimal representative and Fix(Stab(rep))."""
    perms = _all_permutations(n)
    if n ** k > CLASS_CAP:
        raise TooLarge(f"n**k = {n ** k} exceeds cap {CLASS_CAP}")
    seen: set[tuple[int, ...]] = set()
    orbits = []
    for tup in all_tuples(n, k):
        if tup in seen:
            continue
        members = {tuple(p[s] for s in tup): p for p in perms}
        seen |= set(members)
        stab = [p for p in perms if tuple(p[s] for s in tup) == tup]
        fix = tuple(a for a in range(n) if all(p[a] == a for p in stab))
        orbits.append((tup, members, fix))
    return orbits


def _count_ss(n: int, k: int, captive: bool) -> int:
    if captive:
        return sum(1 for r in _enumerate_ss(n, k)
                   if is_member(r, FamilySpec("all", captive=True)))
    total = 1
    for _, _, fix in _ss_orbits(n, k):
        total *= len(fix)
    return total


def _enumerate_ss(n: int, k: int) -> Iterator[Rule]:
    orbits = _ss_orbits(n, k)
    from .core import tuple_to_index
    for choice in itertools.product(*[fix for _, _, fix in orbits]):
        table = [0] * (n ** k)
        for (rep, members, _), value in zip(orbits, choice):
            for tup, p in members.items():
                table[tuple_to_index(tup, n)] = p[value]
        yield dense_rule(n, k, table)


# ---------------------------------------------------------------------------
# Enumeration and sampling

def enumerate_family(spec: FamilySpec, n: int, k: int,
                     cap: int = ENUM_CAP) -> Iterator[Rule]:
    """Every member exactly once: classes ordered by minimal tuple, outputs
    in ascending order (lexicographic odometer over per-class choices)."""
    total = count_family(spec, n, k)
    if total > cap:
        raise TooLarge(f"family has {total} members, cap is {cap}")
    if spec.sym == "ss":
        if spec.captive:
            captive = FamilySpec("all", captive=True)
            yield from (r for r in _enumerate_ss(n, k) if is_member(r, captive))
        else:
            yield from _enumerate_ss(n, k)
        return
    classes = class_table(spec, n, k)
    from .core import tuple_to_index
    for choice in itertools.product(*[c.allowed for c in classes]):
        table = [0] * (n ** k)
        by_key = dict(zip((c.key for c in classes), choice))
        for tup in all_tuples(n, k):
            table[tuple_to_index(tup, n)] = by_key[family_key(spec, tup)]
        yield dense_rule(n, k, table)


def sample_rule(spec: FamilySpec, n: int, k: int, seed: int,
                cap: int = DENSIFY_CAP) -> Rule:
    """Uniform member: one independent uniform draw per key class."""
    if spec.sym == "ss":
        raise Unsupported("uniform sampling of state-symmetric rules "
                          "(orbit structure couples outputs)")
    classes = class_table(spec, n, k, cap)
    rng = random.Random(("sample", spec.text(), n, k, seed).__repr__())
    by_key = {}
    for c in classes:
        if not c.allowed:
            raise Unsupported(
                f"family {spec.text()} is empty at ({n},{k}): "
                f"class {key_repr(c.key)} admits no output")
        by_key[c.key] = c.allowed[rng.randrange(len(c.allowed))]
    from .core import tuple_to_index
    table = [0] * (n ** k)
    for tup in all_tuples(n, k):
        table[tuple_to_index(tup, n)] = by_key[family_key(spec, tup)]
    return dense_rule(n, k, table, name=f"sample-{spec.text()}-{n}-{k}-{seed}")


def _prf_draw(seed_material: str, count: int) -> int:
    digest = hashlib.blake2b(seed_material.encode(), digest_size=16).digest()
    return random.Random(int.from_bytes(digest, "big")).randrange(count)


def lazy_sampler(spec: FamilySpec, n: int, k: int, seed: int) -> Rule:
    """Intensional uniform member for sizes where no table fits in memory.

    Each key's output is a pseudorandom function of (seed, key): the same key
    always resolves to the same value, with the same distribution as
    sample_rule, and no memoization is needed.
    """
    spec.validate_for(k)
    if spec.sym == "ss":
        raise Unsupported("no lazy sampler for state-symmetric rules")
    if spec.captive and spec.sym == "tot":
        raise Unsupported("no lazy sampler for captive+totalistic "
                          "(allowed sets need class enumeration)")
    prefix = f"lazy|{spec.text()}|{n}|{k}|{seed}|"

    def fn(tup: tuple[int, ...]) -> int:
        key = family_key(spec, tup)
        allowed = allowed_outputs(spec, key, n)
        return allowed[_prf_draw(prefix + key_repr(key), len(allowed))]

    return intensional_rule(n, k, fn, name=prefix.rstrip("|"))


# ---------------------------------------------------------------------------
# Structural facts

@dataclass(frozen=True)
class SSCaptiveReport:
    holds: bool
    in_hypothesis: bool    # the guarantee needs 1 <= k <= n-2
    checked: int           # number of state-symmetric rules examined


def verify_ss_subset_captive(n: int, k: int) -> SSCaptiveReport:
    """Is every state-symmetric rule of size (n, k) captive?"""
    captive = FamilySpec("all", captive=True)
    holds = True
    checked = 0
    for r in _enumerate_ss(n, k):
        checked += 1
        if not is_member(r, captive):
            holds = False
            break
    return SSCaptiveReport(holds, 1 <= k <= n - 2, checked)


@dataclass(frozen=True)
class TotCaptiveReport:
    empty: bool
    witness: tuple[tuple[int, ...], tuple[int, ...]] | None  # disjoint-support, equal-sum


def verify_tot_captive_empty(n: int, k: int) -> TotCaptiveReport:
    """Is the totalistic-and-captive intersection empty at (n, k)?

    Empty iff some sum class has an empty intersection of supports.  A pair of
    equal-sum tuples with disjoint supports is reported when one exists (the
    emptiness can in principle occur without such a pair).
    """
    if comb(n + k - 1, k) > CLASS_CAP:
        raise TooLarge("too many multiset classes")
    per_sum: dict[int, set[int]] = {}
    members: dict[int, list[tuple[int, ...]]] = {}
    for m in _multisets(n, k):
        s = sum(m)
        per_sum[s] = per_sum.get(s, set(range(n))) & set(m)
        members.setdefault(s, []).append(m)
    empty = any(not allowed for allowed in per_sum.values())
    witness = None
    for s, group in members.items():
        for a, b in itertools.combinations(group, 2):
            if not (set(a) & set(b)):
                witness = (a, b)
                break
        if witness:
            break
    return TotCaptiveReport(empty, witness)


def exhaustive_filter_count(spec: FamilySpec, n: int, k: int) -> int:
    """Oracle: enumerate every rule of size (n, k) and count members."""
    total = n ** (n ** k)
    if total > ENUM_CAP:
        raise TooLarge(f"{total} rules is too many to filter")
    return sum(1 for r in enumerate_family(FamilySpec("all"), n, k)
               if is_member(r, spec))


def uniform_probability(spec: FamilySpec, key: tuple, n: int) -> Fraction:
    """Probability that a uniform family member takes a prescribed output on
    one key class (1 / allowed-output count)."""
    return Fraction(1, len(allowed_outputs(spec, key, n)))
