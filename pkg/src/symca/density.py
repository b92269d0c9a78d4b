"""Simulation densities: constraint sets, exact satisfaction probabilities,
the independence product bound, constrained sampling, mechanical verification
of the constructed simulations, and density curves along size paths.

Each construction plants a periodic "simulating structure" inside a larger
rule space: carrier cells holding translated source states, separated by a
fixed pattern word.  The finite set of (neighbourhood key -> required output)
pairs is generated mechanically by sliding a window over the structure and
reading the required output off the next-step structure (shifted by the
window radius).  A uniform family member satisfies all pairs with an exactly
computable probability, and distinct structures use disjoint keys, so the
union bound 1 - prod(1 - alpha_i) applies.
"""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .core import PConfig, Rule, config, intensional_rule, iterate, lcm, step
from .errors import (ConstructionError, InfeasibleConstraint, Inconclusive,
                     OutOfHypothesis, TooLarge)
from .families import (FamilySpec, allowed_outputs, class_table,
                       enumerate_family, family_key, is_member, key_repr,
                       lazy_sampler, parse_family)

CONSTRUCTIONS = ("ms", "tot", "oms", "kms", "kset", "captive-fullshift")


# ---------------------------------------------------------------------------
# Constraint sets

@dataclass(frozen=True)
class ConstraintSet:
    """The sufficient transitions of one simulating structure.

    entries maps canonical family keys to required outputs; reps holds one
    realizing tuple per key (how a sampled intensional rule is interrogated).
    pattern gives the fixed word following each carrier (may depend on the
    carrier slot modulo index_period); slide/drift describe how the structure
    and the carried source lattice move per step.
    """

    construction: str
    family: FamilySpec
    n: int
    k: int
    source: Rule
    params: dict
    entries: dict
    reps: dict
    iso_encode: Callable[[int], int]
    iso_decode: dict
    pattern: Callable[[int], tuple[int, ...]]
    pattern_len: int
    index_period: int
    slide: int
    drift: int

    def template(self, base: PConfig) -> PConfig:
        """The legal configuration carrying base."""
        blocks = lcm(base.period, self.index_period)
        word: list[int] = []
        for x in range(blocks):
            word.append(self.iso_encode(base[x]))
            word.extend(self.pattern(x % self.index_period))
        return PConfig(tuple(word))

    def expected(self, base: PConfig, steps: int) -> PConfig:
        """The exact configuration after the given number of steps."""
        blocks = lcm(base.period, self.index_period)
        blen = self.pattern_len + 1
        length = blocks * blen
        evolved = iterate(self.source, base, steps)
        word = [0] * length
        start = (steps * self.slide) % length
        for x in range(blocks):
            pos = (start + x * blen) % length
            word[pos] = self.iso_encode(evolved[x + steps * self.drift])
            for i, s in enumerate(self.pattern(x % self.index_period)):
                word[(pos + 1 + i) % length] = s
        return PConfig(tuple(word))

    def decode(self, c: PConfig, steps: int) -> PConfig:
        """Carrier values mapped back onto source-lattice alignment."""
        blen = self.pattern_len + 1
        if c.period % blen:
            raise ConstructionError(
                f"period {c.period} not a multiple of the block length {blen}")
        blocks = c.period // blen
        start = (steps * self.slide) % c.period
        values = [0] * blocks
        for x in range(blocks):
            s = c[start + x * blen]
            if s not in self.iso_decode:
                raise ConstructionError(f"cell {start + x * blen} is not a carrier")
            values[(x + steps * self.drift) % blocks] = self.iso_decode[s]
        return PConfig(tuple(values))


def _generate(construction: str, family: FamilySpec, n: int, k: int,
              source: Rule, params: dict,
              iso_encode: Callable[[int], int],
              pattern: Callable[[int], tuple[int, ...]],
              pattern_len: int, index_period: int) -> ConstraintSet:
    """Slide a window over the structure, enumerate carrier fills, and read
    the required output off the next-step structure."""
    n0, k0 = source.n, source.k
    blen = pattern_len + 1
    span = index_period * blen
    entries: dict = {}
    reps: dict = {}

    def cell(pos: int, fills: dict) -> int:
        slot, off = divmod(pos, blen)
        if off == 0:
            return fills[pos]
        return pattern(slot % index_period)[off - 1]

    for phase in range(span):
        iso_positions = [phase + i for i in range(k) if (phase + i) % blen == 0]
        n_iso = len(iso_positions)
        off = phase % blen
        if off == 0:
            if n_iso != k0:
                raise ConstructionError(
                    f"carrier window holds {n_iso} carriers, expected {k0}")
        else:
            if n_iso != k0 - 1:
                raise ConstructionError(
                    f"pattern window holds {n_iso} carriers, expected {k0 - 1}")
        for fill in itertools.product(range(n0), repeat=n_iso):
            fills = {pos: iso_encode(v) for pos, v in zip(iso_positions, fill)}
            word = tuple(cell(phase + i, fills) for i in range(k))
            if off == 0:
                out = iso_encode(source(fill))
            else:
                out = pattern((phase // blen) % index_period)[off - 1]
            key = family_key(family, word)
            if key in entries:
                if entries[key] != out:
                    raise ConstructionError(
                        f"key {key_repr(key)} required to map to both "
                        f"{entries[key]} and {out}")
                continue
            if out not in allowed_outputs(family, key, n):
                raise InfeasibleConstraint(
                    f"output {out} not allowed for key {key_repr(key)}")
            entries[key] = out
            reps[key] = word
    iso_decode = {iso_encode(v): v for v in range(n0)}
    return ConstraintSet(construction, family, n, k, source, params, entries,
                         reps, iso_encode, iso_decode, pattern, pattern_len,
                         index_period, slide=(k - 1) // 2, drift=(k0 - 1) // 2)


# ---------------------------------------------------------------------------
# The constructions

def _require(cond: bool, message: str) -> None:
    if not cond:
        raise OutOfHypothesis(message)


def _ms_geometry(n0: int, k0: int, k: int) -> tuple[int, int]:
    _require(k0 >= 2, "pattern constructions need k0 >= 2")
    _require(k >= k0 and (k - k0) % (k0 - 1) == 0,
             "(k0-1) must divide (k-k0)")
    l = (k - k0) // (k0 - 1)
    return l, k - l * (k0 - 1)


def build_constraints(construction: str, source: Rule, n: int, k: int,
                      j: int, block: int = 0,
                      family: FamilySpec | None = None,
                      outer: int = 1) -> ConstraintSet:
    """The finite transition set forcing one simulating structure.

    j indexes the structure: the pattern split for ms / tot / oms / kms, the
    translated source alphabet for kset and captive-fullshift; kms uses an
    additional alphabet block index.
    """
    n0, k0 = source.n, source.k
    params = {"n0": n0, "k0": k0, "n": n, "k": k, "j": j}

    if construction == "ms" or construction == "oms":
        _require(is_member(source, FamilySpec("ms")),
                 "source rule must be multiset-invariant")
        l, o = _ms_geometry(n0, k0, k)
        _require(n >= n0 + 2 * k0 + 4, "need n >= n0 + 2k0 + 4")
        _require(k0 + 1 <= j <= l - k0 - 1, "need k0+1 <= j <= l-k0-1")
        zero, one = n - 2, n - 1
        word = (zero,) * (l - j) + (one,) * j
        if construction == "oms":
            fam = FamilySpec("ms", outer=outer)
            _require(l >= outer, "pattern must be longer than the outer block")
        else:
            fam = FamilySpec("ms")
        params.update(l=l, o=o)
        return _generate(construction, fam, n, k, source, params,
                         lambda x: x, lambda slot: word, l, 1)

    if construction == "kms":
        _require(is_member(source, FamilySpec("ms", captive=True)),
                 "source rule must be captive and multiset-invariant")
        l, o = _ms_geometry(n0, k0, k)
        width = n0 + 2
        _require(0 <= block and (block + 1) * width <= n,
                 "alphabet block must fit in the state set")
        _require(k0 + 1 <= j <= l - k0 - 1, "need k0+1 <= j <= l-k0-1")
        base = block * width
        zero, one = base + n0, base + n0 + 1
        word = (zero,) * (l - j) + (one,) * j
        params.update(l=l, o=o, block=block)
        return _generate(construction, FamilySpec("ms", captive=True), n, k,
                         source, params, lambda x: base + x,
                         lambda slot: word, l, 1)

    if construction == "tot":
        _require(is_member(source, FamilySpec("tot")),
                 "source rule must be totalistic")
        l, o = _ms_geometry(n0, k0, k)
        # carriers are x*(n0+1); the pattern states are 1 and n0(n0+1)+2,
        # congruent to 1 and 2 mod n0+1, so window sums resolve uniquely
        # into (carrier sum, zero-count, one-count) on the structure.
        one_state = n0 * (n0 + 1) + 2
        _require(n >= one_state + 1, "need n >= n0(n0+1)+3")
        _require(k0 + 1 <= j <= l - k0 - 1, "need k0+1 <= j <= l-k0-1")
        word = (1,) * (l - j) + (one_state,) * j
        params.update(l=l, o=o)
        return _generate("tot", FamilySpec("tot"), n, k, source, params,
                         lambda x: x * (n0 + 1), lambda slot: word, l, 1)

    if construction == "kset":
        _require(is_member(source, FamilySpec("set", captive=True)),
                 "source rule must be captive and set-invariant")
        l, o = _ms_geometry(n0, k0, k)
        _require(l >= o + 1, "pattern needs both marker runs non-empty")
        markers = 2 * (k0 + 2)
        _require(n >= markers + (j + 1) * n0 and j >= 0,
                 "translated alphabet must fit above the marker states")
        sigma = markers + j * n0

        def pattern(slot: int) -> tuple[int, ...]:
            zero, one = 2 * slot, 2 * slot + 1
            return (zero,) * o + (one,) * (l - o)

        params.update(l=l, o=o)
        return _generate("kset", FamilySpec("set", captive=True), n, k,
                         source, params, lambda x: sigma + x, pattern, l,
                         k0 + 2)

    if construction == "captive-fullshift":
        fam = family or FamilySpec("all", captive=True)
        _require(fam.captive, "the fullshift construction needs captivity")
        check = FamilySpec(fam.sym, fam.outer, captive=True)
        _require(is_member(source, check),
                 f"source rule must belong to {check.text()}")
        _require(k == k0, "fullshift simulation needs k = k0")
        _require(0 <= j and (j + 1) * n0 <= n,
                 "translated alphabet must fit in the state set")
        base = j * n0
        return _generate("captive-fullshift", fam, n, k, source, params,
                         lambda x: base + x, lambda slot: (), 0, 1)

    raise ValueError(f"unknown construction {construction!r}")


def valid_subshifts(construction: str, source: Rule, n: int, k: int,
                    outer: int = 1) -> list[dict]:
    """Keyword sets for every structure available at this size, chosen so
    that distinct structures have pairwise disjoint key sets."""
    n0, k0 = source.n, source.k
    if construction in ("ms", "oms", "tot"):
        l, _ = _ms_geometry(n0, k0, k)
        # adjacent pattern splits share keys; stride 2 keeps them disjoint
        return [{"j": j} for j in range(k0 + 1, l - k0, 2)]
    if construction == "kms":
        l, _ = _ms_geometry(n0, k0, k)
        blocks = n // (n0 + 2)
        return [{"j": j, "block": b} for b in range(blocks)
                for j in range(k0 + 1, l - k0, 2)]
    if construction == "kset":
        count = (n - 2 * (k0 + 2)) // n0
        return [{"j": j} for j in range(max(count, 0))]
    if construction == "captive-fullshift":
        return [{"j": j} for j in range(n // n0)]
    raise ValueError(f"unknown construction {construction!r}")


# ---------------------------------------------------------------------------
# Exact satisfaction probability and the union bound

def exact_alpha(cs: ConstraintSet) -> Fraction:
    """Probability that a uniform family member satisfies the constraint set:
    the product over distinct constrained keys of 1 / (allowed outputs)."""
    alpha = Fraction(1)
    for key, out in cs.entries.items():
        allowed = allowed_outputs(cs.family, key, cs.n)
        if out not in allowed:
            raise InfeasibleConstraint(
                f"output {out} not allowed for key {key_repr(key)}")
        alpha /= len(allowed)
    return alpha


def bound_lower(alphas: Sequence[float | Fraction],
                counts: Sequence[int] | None = None) -> float:
    """1 - prod(1 - alpha_i), accumulated in log space so that tiny alphas
    with huge multiplicities stay accurate."""
    if counts is None:
        counts = [1] * len(alphas)
    log_miss = 0.0
    for a, c in zip(alphas, counts):
        a = float(a)
        if not (0.0 <= a <= 1.0):
            raise ValueError(f"alpha {a} outside [0, 1]")
        if a == 1.0:
            return 1.0
        log_miss += c * math.log1p(-a)
    return -math.expm1(log_miss) + 0.0


def independence_check(family: FamilySpec, n: int, k: int,
                       key_sets: Sequence[set], cap: int = 10 ** 5) -> bool:
    """Is the restriction map to the key regions (and their complement) a
    bijection?  Structurally true for pairwise disjoint key sets; otherwise
    decided by exhaustive enumeration when the family is small enough."""
    sets = [set(s) for s in key_sets]
    disjoint = all(not (sets[i] & sets[j])
                   for i in range(len(sets)) for j in range(i + 1, len(sets)))
    if disjoint:
        return True
    from .families import count_family
    if count_family(family, n, k) > cap:
        raise Inconclusive("family too large for the exhaustive "
                           "independence check")
    total = 0
    union: set = set().union(*sets) if sets else set()
    seen_off: set = set()
    seen_each: list[set] = [set() for _ in sets]
    members = enumerate_family(family, n, k, cap)
    classes = class_table(family, n, k)
    keys_off = [c.key for c in classes if c.key not in union]
    keys_each = [[c.key for c in classes if c.key in s] for s in sets]
    reps = {c.key: c.rep for c in classes}
    for rule in members:
        total += 1
        seen_off.add(tuple(rule(reps[key]) for key in keys_off))
        for i, keys in enumerate(keys_each):
            seen_each[i].add(tuple(rule(reps[key]) for key in keys))
    product = len(seen_off)
    for s in seen_each:
        product *= len(s)
    return product == total


# ---------------------------------------------------------------------------
# Constrained sampling and mechanical verification

def constrained_sample(cs: ConstraintSet, seed: int) -> Rule:
    """Uniform member of the family conditioned on satisfying cs: the lazy
    sampler with the constrained keys overridden."""
    free = lazy_sampler(cs.family, cs.n, cs.k, seed)
    entries = cs.entries
    family = cs.family

    def fn(tup: tuple[int, ...]) -> int:
        key = family_key(family, tup)
        if key in entries:
            return entries[key]
        return free(tup)

    return intensional_rule(cs.n, cs.k, fn,
                            name=f"constrained-{cs.construction}-{seed}")


def satisfies(cs: ConstraintSet) -> Callable[[Rule], bool]:
    """Predicate: does a rule realize every constrained transition?"""
    pairs = [(cs.reps[key], out) for key, out in cs.entries.items()]

    def pred(rule: Rule) -> bool:
        return all(rule(rep) == out for rep, out in pairs)

    return pred


def exhaustive_alpha(cs: ConstraintSet, cap: int = 10 ** 5) -> Fraction:
    """Oracle for exact_alpha: enumerate the family and count satisfiers."""
    pred = satisfies(cs)
    total = hits = 0
    for rule in enumerate_family(cs.family, cs.n, cs.k, cap):
        total += 1
        hits += pred(rule)
    return Fraction(hits, total)


def verify_construction(cs: ConstraintSet, seed: int, steps: int = 6,
                        base: PConfig | None = None) -> bool:
    """Sample a rule satisfying cs, evolve the carrier configuration, and
    compare every step exactly against the shifted source trace."""
    rng = random.Random(("construction", cs.construction, seed).__repr__())
    if base is None:
        period = rng.randint(1, 3)
        base = PConfig(tuple(rng.randrange(cs.source.n) for _ in range(period)))
    rule = constrained_sample(cs, seed)
    c = cs.template(base)
    for t in range(1, steps + 1):
        c = step(rule, c)
        if c != cs.expected(base, t):
            return False
        if not cs.decode(c, t).same_configuration(iterate(cs.source, base, t)):
            return False
    return True


def mutate_one_entry(cs: ConstraintSet, base: PConfig) -> ConstraintSet:
    """Flip one constrained output that the carrier of base realizes, to a
    different allowed value (for negative tests)."""
    template = cs.template(base)
    blen = cs.pattern_len + 1
    for start in range(template.period):
        word = tuple(template[start + i] for i in range(cs.k))
        key = family_key(cs.family, word)
        if key not in cs.entries:
            continue
        allowed = [v for v in allowed_outputs(cs.family, key, cs.n)
                   if v != cs.entries[key]]
        if not allowed:
            continue
        entries = dict(cs.entries)
        entries[key] = allowed[0]
        return ConstraintSet(cs.construction, cs.family, cs.n, cs.k,
                             cs.source, cs.params, entries, cs.reps,
                             cs.iso_encode, cs.iso_decode, cs.pattern,
                             cs.pattern_len, cs.index_period, cs.slide,
                             cs.drift)
    raise ConstructionError("no realized entry admits a different output")


# ---------------------------------------------------------------------------
# Density curves and Monte Carlo estimates

@dataclass(frozen=True)
class PathSpec:
    """An injective enumeration of sizes: fixed-n (x -> (n0, x)), fixed-k
    (x -> (x, k0)), or an explicit list of (n, k) pairs."""

    kind: str
    value: int = 0
    pairs: tuple[tuple[int, int], ...] = ()

    def size(self, x: int) -> tuple[int, int]:
        if self.kind == "fixed-n":
            return self.value, x
        if self.kind == "fixed-k":
            return x, self.value
        if self.kind == "explicit":
            return self.pairs[x]
        raise ValueError(f"unknown path kind {self.kind!r}")


def parse_path(text: str) -> PathSpec:
    kind, _, value = text.partition(":")
    if kind in ("fixed-n", "fixed-k"):
        return PathSpec(kind, int(value))
    raise ValueError(f"unknown path {text!r} (use fixed-n:N or fixed-k:K)")


@dataclass(frozen=True)
class CurveRow:
    x: int
    n: int
    k: int
    subshift_count: int
    alpha: Fraction | None
    bound: float | None
    marker: str = ""


def density_curve(path: PathSpec, construction: str, source: Rule,
                  xs: Iterable[int], outer: int = 1) -> list[CurveRow]:
    """Per size along the path: number of disjoint simulating structures,
    their exact per-structure probability, and the union lower bound."""
    rows = []
    for x in xs:
        n, k = path.size(x)
        try:
            kwargs = valid_subshifts(construction, source, n, k, outer=outer)
            alphas = []
            keysets = []
            for kw in kwargs:
                cs = build_constraints(construction, source, n, k,
                                       outer=outer, **kw)
                alphas.append(exact_alpha(cs))
                keysets.append(set(cs.entries))
            for i in range(len(keysets)):
                for j2 in range(i + 1, len(keysets)):
                    if keysets[i] & keysets[j2]:
                        raise ConstructionError(
                            "structures share constrained keys")
        except OutOfHypothesis as exc:
            rows.append(CurveRow(x, n, k, 0, None, None,
                                 marker=f"out-of-hypothesis: {exc.condition}"))
            continue
        if not alphas:
            rows.append(CurveRow(x, n, k, 0, None, 0.0, marker="no subshifts"))
            continue
        if len(set(alphas)) != 1:
            raise ConstructionError("structures disagree on alpha")
        bound = bound_lower([alphas[0]], [len(alphas)])
        rows.append(CurveRow(x, n, k, len(alphas), alphas[0], bound))
    return rows


@dataclass(frozen=True)
class DensityEstimate:
    value: float
    kind: str                      # exact | lower-bound | monte-carlo
    ci: tuple[float, float] | None
    samples: int

    def __post_init__(self):
        if self.ci is not None:
            lo, hi = self.ci
            if not (lo <= self.value <= hi):
                raise ValueError("estimate outside its own interval")


def wilson_interval(hits: int, n: int,
                    z: float = 1.959963984540054) -> tuple[float, float]:
    phat = hits / n
    denom = 1 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def derive_seed(master: int, index: int) -> int:
    import hashlib
    digest = hashlib.blake2b(f"{master}|{index}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


def empirical_density(family: FamilySpec, n: int, k: int,
                      predicate: Callable[[Rule], bool], samples: int,
                      seed: int) -> DensityEstimate:
    """Monte Carlo proportion of family members satisfying the predicate,
    with a Wilson 95% interval; trial seeds derive from (seed, index)."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    hits = 0
    for i in range(samples):
        rule = lazy_sampler(family, n, k, derive_seed(seed, i))
        hits += bool(predicate(rule))
    value = hits / samples
    return DensityEstimate(value, "monte-carlo",
                           wilson_interval(hits, samples), samples)
