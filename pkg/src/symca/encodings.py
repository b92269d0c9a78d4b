"""Two encodings that turn an arbitrary rule into a symmetric one while
preserving simulation of the original.

Set encoding: states are (value, label) pairs plus a reject state; legal
configurations cycle the label 0..k+1 so that every window's *set* of states
determines the positional order of the values, letting a set-invariant rule
compute the original one.  One encoded step simulates one source step.

Captive-set encoding: between consecutive carriers the configuration keeps a
"library" word holding every value with a fixed label, so each transition can
output a state already present in its window (captivity).  Two encoded steps
simulate one source step, alternating legal and intermediate configurations;
the structure slides by floor((k'-1)/2) cells per encoded step.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import (DENSIFY_CAP, PConfig, Rule, all_tuples, config, evolve,
                   intensional_rule, iterate, lcm, step)
from .errors import NotLegal, Unsupported
from .families import FamilySpec, is_member
from .rescale import RescaleParams, SimWitness, rescale_rule

# ---------------------------------------------------------------------------
# Set encoding


@dataclass(frozen=True)
class SetEncoding:
    """Source rule plus its set-invariant image.

    Encoded states: (a, i) with a a source state and i a label in 0..k+1,
    stored as a*(k+2)+i; the reject state is n*(k+2).
    """

    source: Rule
    rule: Rule

    @property
    def labels(self) -> int:
        return self.source.k + 2

    @property
    def reject(self) -> int:
        return self.source.n * self.labels

    def state(self, a: int, i: int) -> int:
        return a * self.labels + i % self.labels

    def split(self, s: int) -> tuple[int, int] | None:
        if s == self.reject:
            return None
        return divmod(s, self.labels)

    @property
    def label_shift(self) -> int:
        """Label advance of each cell per encoded step."""
        k = self.source.k
        return k // 2 - (k - 1) // 2


def encode_set(rule: Rule) -> SetEncoding:
    """Set-invariant image with n*(k+2)+1 states and the same window size.

    On a window whose set of states lists k distinct values with k cyclically
    consecutive labels, the image applies the source rule to the values in
    label order and relabels by the leftmost label plus floor(k/2); any other
    window set maps to the reject state.
    """
    n, k = rule.n, rule.k
    labels = k + 2
    reject = n * labels

    def fn(tup: tuple[int, ...]) -> int:
        states = set(tup)
        if reject in states or len(states) != k:
            return reject
        pairs = {}
        for s in states:
            a, i = divmod(s, labels)
            if i in pairs:
                return reject
            pairs[i] = a
        start = None
        for i0 in pairs:
            if all((i0 + j) % labels in pairs for j in range(k)):
                start = i0
                break
        if start is None:
            return reject
        values = tuple(pairs[(start + j) % labels] for j in range(k))
        return rule(values) * labels + (start + k // 2) % labels

    out = intensional_rule(n * labels + 1, k, fn, name=f"set({rule.ident()})")
    if (n * labels + 1) ** k <= DENSIFY_CAP:
        out = out.densify()
    return SetEncoding(rule, out)


def legal_config_set(enc: SetEncoding, base: PConfig) -> PConfig:
    """Carrier configuration: values spell base, labels cycle 0..k+1."""
    period = lcm(base.period, enc.labels)
    return PConfig(tuple(
        enc.state(base[z], z % enc.labels) for z in range(period)))


def decode_set(enc: SetEncoding, c: PConfig) -> tuple[PConfig, int]:
    """Invert legality: (value projection, label phase).  The label phase is
    the label of cell 0; labels must increase by one per cell."""
    if c.period % enc.labels:
        raise NotLegal(f"period {c.period} not a multiple of {enc.labels}")
    values = []
    phase = None
    for z in range(c.period):
        pair = enc.split(c[z])
        if pair is None:
            raise NotLegal(f"reject state at cell {z}")
        a, i = pair
        if phase is None:
            phase = i
        if i != (phase + z) % enc.labels:
            raise NotLegal(f"broken label cycle at cell {z}")
        values.append(a)
    return PConfig(tuple(values)), phase


def make_set_witness(enc: SetEncoding) -> SimWitness:
    """Simulation certificate source <= encoded: pack k+2 cells on both sides
    and shift by the per-step label advance; the block map sends a value
    block to the corresponding label-cycled encoded block."""
    n, k = enc.source.n, enc.source.k
    m = enc.labels
    shift = enc.label_shift
    n_enc = enc.rule.n
    pairs = []
    from .core import index_to_tuple, tuple_to_index
    for b in range(n ** m):
        cells = index_to_tuple(b, n, m)
        image = tuple(enc.state(a, i) for i, a in enumerate(cells))
        pairs.append((b, tuple_to_index(image, n_enc)))
    return SimWitness(RescaleParams(m, 1, shift), RescaleParams(m, 1, shift),
                      tuple(pairs))


# ---------------------------------------------------------------------------
# Captive-set encoding

SHARP = "#"
PRIME = "#'"


@dataclass
class KSetStats:
    """Observations collected while the encoded rule runs."""

    evaluations: int = 0
    fallbacks: int = 0
    ambiguous: list[frozenset] = field(default_factory=list)
    captive_violations: int = 0


@dataclass(frozen=True)
class KSetEncoding:
    """Source rule plus its captive-set image.

    Encoded states: (symbol, label) with symbol in {#, 0..n-1, #'} (codes
    0..n+1) and label in 0..2k-2, stored as label*(n+2)+code.  The library
    word for label i is (#,i)(0,i)...(n-1,i)(#',i).  The image has window
    k' = k + (k-1)(n+2) and is always intensional.
    """

    source: Rule
    rule: Rule
    stats: KSetStats

    @property
    def n_labels(self) -> int:
        return 2 * self.source.k - 1

    @property
    def n_codes(self) -> int:
        return self.source.n + 2

    @property
    def radius(self) -> int:
        return self.source.k // 2

    @property
    def block(self) -> int:
        return self.source.n + 3          # isolated cell + library word

    @property
    def window(self) -> int:
        return self.rule.k

    @property
    def slide(self) -> int:
        """Cells the structure moves per encoded step."""
        return (self.window - 1) // 2

    def state(self, code: int, label: int) -> int:
        return (label % self.n_labels) * self.n_codes + code

    def carrier(self, value: int, label: int) -> int:
        return self.state(value + 1, label)

    def split(self, s: int) -> tuple[int, int]:
        """(label, code)."""
        return divmod(s, self.n_codes)

    def library_word(self, label: int) -> tuple[int, ...]:
        """#, 0, ..., n-1, #' all carrying the given label."""
        return tuple(self.state(c, label) for c in range(self.n_codes))


def _kset_classifier(rule: Rule):
    """Build the window-set classifier for the captive-set image of rule.

    Returns a function set -> (output state or None, number of distinct
    parses).  Window sets are matched exactly against the four legal /
    intermediate patterns; the parse determines the output:

      T1 (legal, window starts on a carrier): apply the source rule to the k
         carrier values, relabel by iota + (2k-1-r);
      T2 (legal, window cuts a library): emit cell s of the library word,
         relabeled to the prefix library's label (rebuilds the shifted
         library);
      T3 (intermediate, starts on a carrier): copy the visible carrier of
         label iota+r-1 unchanged;
      T4 (intermediate, cuts a library): emit cell s of the library word at
         the prefix library's label.

    Every output is a member of the window set, so the image is captive by
    construction; it depends on the window only through its set, so it is
    set-invariant by construction.
    """
    n, k = rule.n, rule.k
    nl = 2 * k - 1
    nc = n + 2
    r = k // 2
    relabel = 2 * k - 1 - r              # T1 label offset above iota

    full = frozenset(range(nc))
    states = frozenset(range(1, n + 1))  # carrier codes

    def prefix(s: int) -> frozenset:
        return frozenset(range(s))

    def suffix(s: int) -> frozenset:
        return frozenset(range(s - 1, nc))

    def parses(profile: dict[int, frozenset]):
        found = []
        covered = set(profile)

        def singleton_value(label: int) -> int | None:
            got = profile.get(label % nl)
            if got is not None and len(got) == 1:
                code = next(iter(got))
                if code in states:
                    return code
            return None

        for iota in range(nl):
            # T1: k carriers at iota..iota+k-1, k-1 full libraries after.
            if len(covered) == nl:
                vals = [singleton_value(iota + j) for j in range(k)]
                if all(v is not None for v in vals) and all(
                        profile.get((iota + k + j) % nl) == full
                        for j in range(k - 1)):
                    a = tuple(v - 1 for v in vals)
                    out = (rule(a) + 1, (iota + relabel) % nl)
                    found.append(("T1", iota, 0, out))
            # T3: r visible carriers at iota..iota+r-1, k-1 full libraries.
            expect = {(iota + r + j) % nl for j in range(k - 1)}
            if covered == expect | {(iota + j) % nl for j in range(r)}:
                vals = [singleton_value(iota + j) for j in range(r)]
                if all(v is not None for v in vals) and all(
                        profile[(iota + r + j) % nl] == full
                        for j in range(k - 1)):
                    out = (vals[r - 1], (iota + r - 1) % nl)
                    found.append(("T3", iota, 0, out))
            for s in range(1, nc + 1):
                # T2: k-1 carriers, cut library (suffix s.. / prefix ..s).
                if len(covered) == nl:
                    vals = [singleton_value(iota + j) for j in range(k - 1)]
                    if (all(v is not None for v in vals)
                            and profile.get((iota + k - 1) % nl) == suffix(s)
                            and profile.get((iota + 2 * k - 2) % nl) == prefix(s)
                            and all(profile.get((iota + k + j) % nl) == full
                                    for j in range(k - 2))):
                        out = (s - 1, (iota + 2 * k - 2) % nl)
                        found.append(("T2", iota, s, out))
                # T4: cut library of an intermediate configuration; the
                # carrier of label iota+r-1 may sit inside the suffix set.
                expect = ({(iota + j) % nl for j in range(r - 1)}
                          | {(iota + r - 1 + j) % nl for j in range(k)})
                if covered == expect:
                    vals = [singleton_value(iota + j) for j in range(r - 1)]
                    suf = profile.get((iota + r - 1) % nl, frozenset())
                    extra = suf - suffix(s)
                    if (all(v is not None for v in vals)
                            and suf >= suffix(s)
                            and len(extra) <= 1 and extra <= states
                            and profile.get((iota + r + k - 2) % nl) == prefix(s)
                            and all(profile.get((iota + r + j) % nl) == full
                                    for j in range(k - 2))):
                        out = (s - 1, (iota + r + k - 2) % nl)
                        found.append(("T4", iota, s, out))
        return found

    def classify(window_set: frozenset):
        profile: dict[int, set] = {}
        for s in window_set:
            label, code = divmod(s, nc)
            profile.setdefault(label, set()).add(code)
        frozen = {lbl: frozenset(codes) for lbl, codes in profile.items()}
        found = parses(frozen)
        outputs = {label * nc + code for _, _, _, (code, label) in found}
        if not found:
            return None, 0
        return sorted(outputs), len(outputs)

    return classify


def encode_kset(rule: Rule) -> KSetEncoding:
    """Captive-set image; windows that match no legal or intermediate pattern
    fall back to the greatest state present (label-major order)."""
    if rule.k < 2:
        raise Unsupported("captive-set encoding needs k >= 2")
    classify = _kset_classifier(rule)
    stats = KSetStats()
    cache: dict[frozenset, int] = {}

    def fn(tup: tuple[int, ...]) -> int:
        window_set = frozenset(tup)
        stats.evaluations += 1
        out = cache.get(window_set)
        if out is None:
            outputs, distinct = classify(window_set)
            if outputs is None:
                stats.fallbacks += 1
                out = max(window_set)
            else:
                if distinct > 1:
                    stats.ambiguous.append(window_set)
                out = outputs[0]
            cache[window_set] = out
        if out not in window_set:
            stats.captive_violations += 1
            raise AssertionError("captive-set image produced a state "
                                 "outside its window")
        return out

    n_states = (2 * rule.k - 1) * (rule.n + 2)
    window = rule.k + (rule.k - 1) * (rule.n + 2)
    out_rule = intensional_rule(n_states, window, fn,
                                name=f"kset({rule.ident()})")
    return KSetEncoding(rule, out_rule, stats)


def legal_config_kset(enc: KSetEncoding, base: PConfig,
                      phase: str = "even") -> PConfig:
    """Carrier/library alternation; library labels run k (legal) or
    floor(k/2) (intermediate) above the preceding carrier's label."""
    if phase not in ("even", "odd"):
        raise ValueError("phase must be 'even' or 'odd'")
    offset = enc.source.k if phase == "even" else enc.radius
    blocks = lcm(base.period, enc.n_labels)
    word: list[int] = []
    for x in range(blocks):
        word.append(enc.carrier(base[x], x))
        word.extend(enc.library_word(x + offset))
    return PConfig(tuple(word))


def kset_expected_config(enc: KSetEncoding, base: PConfig, steps: int) -> PConfig:
    """The exact configuration after the given number of encoded steps,
    starting from legal_config_kset(enc, base, "even").

    Carriers sit at slot*block + steps*slide; after 2t steps slot x holds
    G^t(base) at x + t(k-2) with label x - t; odd steps hold the next source
    step shifted floor((k-1)/2) further, with labels raised by 2k-1-r.
    """
    n, k = enc.source.n, enc.source.k
    t, parity = divmod(steps, 2)
    blocks = lcm(base.period, enc.n_labels)
    length = blocks * enc.block
    evolved = iterate(enc.source, base, t + parity)
    drift = t * (k - 2) + (parity * ((k - 1) // 2))
    label_shift = -t + parity * (2 * k - 1 - enc.radius)
    lib_offset = k if parity == 0 else enc.radius
    word = [0] * length
    start = (steps * enc.slide) % length
    for x in range(blocks):
        label = x + label_shift
        pos = (start + x * enc.block) % length
        word[pos] = enc.carrier(evolved[x + drift], label)
        lib = enc.library_word(label + lib_offset)
        for i, s in enumerate(lib):
            word[(pos + 1 + i) % length] = s
    return PConfig(tuple(word))


def decode_kset(enc: KSetEncoding, c: PConfig, steps: int) -> PConfig:
    """Read the carrier values of an encoded configuration produced after the
    given number of steps, mapped back onto source-lattice alignment."""
    n, k = enc.source.n, enc.source.k
    if c.period % enc.block:
        raise NotLegal(f"period {c.period} not a multiple of {enc.block}")
    blocks = c.period // enc.block
    start = (steps * enc.slide) % c.period
    t, parity = divmod(steps, 2)
    drift = t * (k - 2) + (parity * ((k - 1) // 2))
    values = [0] * blocks
    for x in range(blocks):
        label, code = enc.split(c[start + x * enc.block])
        if not (1 <= code <= n):
            raise NotLegal(f"carrier slot {x} holds a sentinel")
        values[(x + drift) % blocks] = code - 1
    return PConfig(tuple(values))


# ---------------------------------------------------------------------------
# Mechanical verification of the simulation theorems


@dataclass(frozen=True)
class TrialResult:
    trial: int
    base: tuple[int, ...]
    ok: bool
    failed_step: int | None = None


@dataclass(frozen=True)
class EncodingReport:
    kind: str
    trials: tuple[TrialResult, ...]
    family_ok: bool            # encoded rule passes its family predicates
    captive_ok: bool = True    # kset only: every applied transition captive
    disjoint_ok: bool = True   # kset only: no window set parsed two ways

    @property
    def all_ok(self) -> bool:
        return (all(t.ok for t in self.trials) and self.family_ok
                and self.captive_ok and self.disjoint_ok)


def _random_base(rng: random.Random, n: int, max_period: int = 4) -> PConfig:
    period = rng.randint(1, max_period)
    return PConfig(tuple(rng.randrange(n) for _ in range(period)))


def _set_membership_check(rule: Rule, sample: int = 2000, seed: int = 7) -> bool:
    """is_member(SET) exhaustively when the table fits, by random
    permutation pairs otherwise."""
    if rule.n ** rule.k <= 100_000:
        return is_member(rule, FamilySpec("set"))
    rng = random.Random(seed)
    for _ in range(sample):
        tup = [rng.randrange(rule.n) for _ in range(rule.k)]
        alt = tup[:]
        rng.shuffle(alt)
        # same multiset, hence same set
        if rule(tuple(tup)) != rule(tuple(alt)):
            return False
        # duplicate one entry over another occurrence of the same value:
        # keeps the set, may change the multiset
        i, j = rng.randrange(rule.k), rng.randrange(rule.k)
        alt2 = tup[:]
        alt2[i] = alt2[j]
        if set(alt2) == set(tup) and rule(tuple(alt2)) != rule(tuple(tup)):
            return False
    return True


def verify_encoding(rule: Rule, kind: str, trials: int = 20, steps: int = 8,
                    seed: int = 0) -> EncodingReport:
    """Evolve encoded carrier configurations and compare the decoded trace
    with the source rule's own trace, step by step and exactly."""
    rng = random.Random(("verify-encoding", kind, seed).__repr__())
    if kind == "set":
        enc = encode_set(rule)
        results = []
        shift = enc.label_shift
        for trial in range(trials):
            base = _random_base(rng, rule.n)
            c = legal_config_set(enc, base)
            ok, failed = True, None
            for t in range(1, steps + 1):
                c = step(enc.rule, c)
                try:
                    values, phase = decode_set(enc, c)
                except NotLegal:
                    ok, failed = False, t
                    break
                if phase != (t * shift) % enc.labels or not \
                        values.same_configuration(iterate(rule, base, t)):
                    ok, failed = False, t
                    break
            results.append(TrialResult(trial, base.word, ok, failed))
        return EncodingReport("set", tuple(results),
                              family_ok=_set_membership_check(enc.rule))

    if kind == "kset":
        enc = encode_kset(rule)
        results = []
        for trial in range(trials):
            base = _random_base(rng, rule.n)
            c = legal_config_kset(enc, base, "even")
            ok, failed = True, None
            for s in range(1, 2 * steps + 1):
                c = step(enc.rule, c)
                if c != kset_expected_config(enc, base, s):
                    ok, failed = False, s
                    break
            results.append(TrialResult(trial, base.word, ok, failed))
        return EncodingReport(
            "kset", tuple(results),
            family_ok=_set_membership_check(enc.rule),
            captive_ok=enc.stats.captive_violations == 0,
            disjoint_ok=not enc.stats.ambiguous)

    raise ValueError(f"unknown encoding kind {kind!r}")
