"""Packing, rescaling, sub-automaton search and bounded simulation search.

A rescaling of a rule packs m cells into one super-cell, iterates t times and
composes with the translation sigma_z (sigma_z(c)_x = c_{x-z}).  One rule
simulates another when some rescaling of the simulated rule is a
sub-automaton (injective state embedding commuting with the dynamics) of some
rescaling of the simulator.  Bounded search can certify presence of a
simulation, never absence beyond its bounds.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import (DENSIFY_CAP, PConfig, Rule, all_tuples, apply_local, config,
                   dense_rule, index_to_tuple, intensional_rule, iterate, lcm,
                   step, tuple_to_index, window_hi, window_lo)
from .errors import Inconclusive, ParseError, TooLarge, WindowMismatch

SUB_TUPLE_CAP = 2 ** 20      # max tuples verify_commutation will iterate
DEFAULT_NODE_BUDGET = 200_000


@dataclass(frozen=True)
class RescaleParams:
    m: int = 1
    t: int = 1
    z: int = 0

    def __post_init__(self):
        if self.m < 1 or self.t < 1:
            raise ValueError("need m >= 1 and t >= 1")


# ---------------------------------------------------------------------------
# Packing

def pack(c: PConfig, m: int, n: int) -> PConfig:
    """Group m consecutive cells into one super-cell (base-n block codes).

    The word is replicated to lcm(period, m) first, so packing is total.
    """
    p = lcm(c.period, m)
    word = c.to_period(p).word
    blocks = tuple(tuple_to_index(word[i * m:(i + 1) * m], n)
                   for i in range(p // m))
    return PConfig(blocks)


def unpack(c: PConfig, m: int, n: int) -> PConfig:
    out: list[int] = []
    for b in c.word:
        out.extend(index_to_tuple(b, n, m))
    return PConfig(tuple(out))


# ---------------------------------------------------------------------------
# Window arithmetic

def _anchored_width(lo: int, hi: int) -> int:
    """Smallest k whose window [-floor((k-1)/2), floor(k/2)] covers [lo, hi]."""
    a = max(-lo, 0)
    b = max(hi, 0)
    return max(2 * a + 1, 2 * b, 1)


def extend_window(rule: Rule, k_new: int, cap: int = DENSIFY_CAP) -> Rule:
    """Dummy-extend to a wider window with the same global map."""
    if k_new < rule.k:
        raise ValueError("can only extend to a wider window")
    if k_new == rule.k:
        return rule
    start = (k_new - 1) // 2 - (rule.k - 1) // 2

    def fn(tup: tuple[int, ...]) -> int:
        return rule(tup[start:start + rule.k])

    ext = intensional_rule(rule.n, k_new, fn,
                           name=f"extend({rule.ident()},{k_new})")
    if rule.n ** k_new <= cap:
        return ext.densify(cap)
    return ext


def rescale_rule(rule: Rule, params: RescaleParams,
                 cap: int = DENSIFY_CAP) -> Rule:
    """The rule with global map  pack . sigma_z . G^t . unpack.

    State set has n**m states; the window is the smallest anchored one
    covering the true dependence interval in blocks.  Entries are computed by
    simulating t steps plus the shift on the unrolled word; the result is
    dense when the table fits under the cap, intensional otherwise.
    """
    m, t, z = params.m, params.t, params.z
    n, k = rule.n, rule.k
    o_lo, o_hi = window_lo(k), window_hi(k)
    blk_lo = (-z + t * o_lo) // m
    blk_hi = (m - 1 - z + t * o_hi) // m
    k_new = _anchored_width(blk_lo, blk_hi)
    wl = (k_new - 1) // 2
    n_new = n ** m

    def fn(blocks: tuple[int, ...]) -> int:
        cells: list[int] = []
        for b in blocks:
            cells.extend(index_to_tuple(b, n, m))
        start = -wl * m                      # cell index of cells[0]
        word = cells
        for _ in range(t):
            word = list(apply_local(rule, word))
            start -= o_lo
        start += z                           # sigma_z relabels cells
        lo = 0 - start
        assert 0 <= lo and lo + m <= len(word), "window too small"
        return tuple_to_index(word[lo:lo + m], n)

    name = f"rescale({rule.ident()},{m},{t},{z})"
    out = intensional_rule(n_new, k_new, fn, name=name)
    if n_new ** k_new <= cap:
        return out.densify(cap)
    return out


# ---------------------------------------------------------------------------
# Sub-automaton relation

def _check_state_map(phi: dict[int, int], n_from: int, n_to: int) -> None:
    if sorted(phi) != list(range(n_from)):
        raise ValueError("state map must be total on the simulated states")
    if len(set(phi.values())) != len(phi):
        raise ValueError("state map must be injective")
    for v in phi.values():
        if not (0 <= v < n_to):
            raise ValueError(f"state map value {v} outside target alphabet")


def verify_commutation(b: Rule, a: Rule, phi: dict[int, int],
                       align: bool = True, cap: int = SUB_TUPLE_CAP) -> bool:
    """Exhaustive check that phi conjugates b's global map into a's.

    With align=True the narrower rule is dummy-extended to the wider window
    first (this does not change its global map); with align=False unequal
    windows raise WindowMismatch.
    """
    _check_state_map(phi, b.n, a.n)
    if b.k != a.k:
        if not align:
            raise WindowMismatch(f"k={b.k} vs k={a.k}")
        width = max(b.k, a.k)
        b = extend_window(b, width)
        a = extend_window(a, width)
    if b.n ** b.k > cap:
        raise TooLarge(f"{b.n ** b.k} tuples exceed cap {cap}")
    for u in all_tuples(b.n, b.k):
        if phi[b(u)] != a(tuple(phi[s] for s in u)):
            return False
    return True


def find_subautomaton(b: Rule, a: Rule,
                      node_budget: int = DEFAULT_NODE_BUDGET,
                      cap: int = SUB_TUPLE_CAP) -> dict[int, int] | None:
    """Search for an injective state map phi with phi.Gb = Ga.phi.

    Backtracking over partial injections with constraint propagation: once
    all states of a tuple are mapped, the image of its output is forced.
    Returns None only after exhausting the space; raises Inconclusive when
    the node budget runs out first.
    """
    if b.n > a.n:
        return None
    width = max(b.k, a.k)
    bb = extend_window(b, width)
    aa = extend_window(a, width)
    if b.n ** width > cap:
        raise TooLarge(f"{b.n ** width} tuples exceed cap {cap}")
    tuples = list(all_tuples(b.n, width))
    outs = {u: bb(u) for u in tuples}
    nodes = 0

    def closure(phi: dict[int, int]) -> dict[int, int] | None:
        """Propagate forced assignments; None on contradiction."""
        phi = dict(phi)
        used = set(phi.values())
        changed = True
        while changed:
            changed = False
            for u in tuples:
                if any(s not in phi for s in u):
                    continue
                img = aa(tuple(phi[s] for s in u))
                w = outs[u]
                if w in phi:
                    if phi[w] != img:
                        return None
                else:
                    if img in used:
                        return None
                    phi[w] = img
                    used.add(img)
                    changed = True
        return phi

    def dfs(phi: dict[int, int]) -> dict[int, int] | None:
        nonlocal nodes
        missing = [s for s in range(b.n) if s not in phi]
        if not missing:
            return phi
        s = missing[0]
        for v in range(a.n):
            if v in phi.values():
                continue
            nodes += 1
            if nodes > node_budget:
                raise Inconclusive(f"node budget {node_budget} exhausted")
            ext = closure({**phi, s: v})
            if ext is None:
                continue
            found = dfs(ext)
            if found is not None:
                return found
        return None

    start = closure({})
    if start is None:
        return None
    return dfs(start)


# ---------------------------------------------------------------------------
# Simulation search

@dataclass(frozen=True)
class SimWitness:
    """Certificate that b is simulated by a: rescaling parameters for both
    sides plus the injective block map between the rescaled state sets."""

    params1: RescaleParams   # applied to the simulated rule
    params2: RescaleParams   # applied to the simulator
    phi: tuple[tuple[int, int], ...]

    @property
    def phi_map(self) -> dict[int, int]:
        return dict(self.phi)

    @property
    def cost(self) -> int:
        p1, p2 = self.params1, self.params2
        return p1.m * p2.m * p1.t * p2.t * (1 + abs(p1.z) + abs(p2.z))


@dataclass(frozen=True)
class SimBounds:
    max_m1: int = 2
    max_t1: int = 2
    max_z1: int = 1
    max_m2: int = 2
    max_t2: int = 2
    max_z2: int = 1

    @classmethod
    def uniform(cls, m: int, t: int | None = None, z: int | None = None) -> "SimBounds":
        t = m if t is None else t
        z = (m - 1) if z is None else z
        return cls(m, t, z, m, t, z)


def _candidates(bounds: SimBounds):
    def zs(zmax):
        return range(-zmax, zmax + 1)

    items = []
    for m1, t1, z1, m2, t2, z2 in itertools.product(
            range(1, bounds.max_m1 + 1), range(1, bounds.max_t1 + 1),
            zs(bounds.max_z1), range(1, bounds.max_m2 + 1),
            range(1, bounds.max_t2 + 1), zs(bounds.max_z2)):
        cost = m1 * m2 * t1 * t2 * (1 + abs(z1) + abs(z2))
        key = (cost, m1, t1, abs(z1), z1 < 0, m2, t2, abs(z2), z2 < 0)
        items.append((key, (m1, t1, z1), (m2, t2, z2)))
    items.sort(key=lambda it: it[0])
    return items


def verify_witness_dynamic(b: Rule, a: Rule, w: SimWitness, trials: int = 10,
                           steps: int = 5, seed: int = 0) -> bool:
    """Run the simulation: encode random periodic configurations of b through
    the witness, evolve both sides, decode, and compare exactly."""
    p1, p2 = w.params1, w.params2
    phi = w.phi_map
    inv = {v: s for s, v in phi.items()}
    rb = rescale_rule(b, p1)
    ra = rescale_rule(a, p2)
    rng = random.Random(("dynamic", seed).__repr__())
    for _ in range(trials):
        period = rng.randint(1, 4)
        c = PConfig(tuple(rng.randrange(b.n) for _ in range(period)))
        x = pack(c, p1.m, b.n)
        y = PConfig(tuple(phi[s] for s in x.word))
        for s in range(1, steps + 1):
            x = step(rb, x)
            y = step(ra, y)
            if tuple(phi[v] for v in x.word) != y.word:
                return False
            if any(v not in inv for v in y.word):
                return False
            decoded = unpack(PConfig(tuple(inv[v] for v in y.word)), p1.m, b.n)
            expected = iterate(b, c, s * p1.t).shift(s * p1.z)
            if not decoded.same_configuration(expected):
                return False
    return True


def search_simulation(b: Rule, a: Rule, bounds: SimBounds,
                      node_budget: int = DEFAULT_NODE_BUDGET,
                      state_cap: int = 4096,
                      dynamic_trials: int = 10,
                      dynamic_steps: int = 5) -> SimWitness | None:
    """First witness of b's simulation by a, in increasing cost order.

    Every returned witness has been re-verified by verify_commutation and by
    the dynamic decode check.  None means the whole bounded space was
    exhausted; Inconclusive is raised when some probe ran out of budget and
    no witness was found (presence beyond the budget remains open).
    """
    cache_b: dict[tuple, Rule] = {}
    cache_a: dict[tuple, Rule] = {}
    ran_out = False
    for _, bp, ap in _candidates(bounds):
        if b.n ** bp[0] > a.n ** ap[0]:
            continue
        if b.n ** bp[0] > state_cap or a.n ** ap[0] > state_cap:
            continue
        rb = cache_b.get(bp)
        if rb is None:
            rb = cache_b[bp] = rescale_rule(b, RescaleParams(*bp))
        ra = cache_a.get(ap)
        if ra is None:
            ra = cache_a[ap] = rescale_rule(a, RescaleParams(*ap))
        try:
            phi = find_subautomaton(rb, ra, node_budget=node_budget)
        except Inconclusive:
            ran_out = True
            continue
        if phi is None:
            continue
        w = SimWitness(RescaleParams(*bp), RescaleParams(*ap),
                       tuple(sorted(phi.items())))
        if not verify_commutation(rb, ra, phi):
            raise AssertionError("witness failed commutation re-check")
        if not verify_witness_dynamic(b, a, w, trials=dynamic_trials,
                                      steps=dynamic_steps):
            raise AssertionError("witness failed the dynamic decode check")
        return w
    if ran_out:
        raise Inconclusive("search budget exhausted before any witness")
    return None


# ---------------------------------------------------------------------------
# Simulation support

def witness_support(w: SimWitness, b: Rule, a: Rule, length: int) -> set[tuple[int, ...]]:
    """All words of the given length over a's states occurring in encoded
    images of b-configurations (the support subshift, word by word)."""
    if length < 1:
        raise ValueError("length must be >= 1")
    m2 = w.params2.m
    tiles = [tuple(index_to_tuple(w.phi_map[bstate], a.n, m2))
             for bstate in range(b.n ** w.params1.m)]
    words: set[tuple[int, ...]] = set()
    for phase in range(m2):
        need = (phase + length + m2 - 1) // m2
        for seq in itertools.product(tiles, repeat=need):
            flat = tuple(itertools.chain.from_iterable(seq))
            words.add(flat[phase:phase + length])
    return words


# ---------------------------------------------------------------------------
# Witness files

def serialize_witness(w: SimWitness) -> str:
    lines = [
        f"m1 {w.params1.m}", f"t1 {w.params1.t}", f"z1 {w.params1.z}",
        f"m2 {w.params2.m}", f"t2 {w.params2.t}", f"z2 {w.params2.z}",
        "map " + " ".join(f"{s}:{v}" for s, v in w.phi),
    ]
    return "\n".join(lines) + "\n"


def parse_witness(text: str) -> SimWitness:
    fields: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        fields[key] = rest.strip()
    try:
        p1 = RescaleParams(int(fields["m1"]), int(fields["t1"]), int(fields["z1"]))
        p2 = RescaleParams(int(fields["m2"]), int(fields["t2"]), int(fields["z2"]))
        pairs = []
        for item in fields["map"].split():
            s, _, v = item.partition(":")
            pairs.append((int(s), int(v)))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad witness file: {exc}") from None
    return SimWitness(p1, p2, tuple(sorted(pairs)))
