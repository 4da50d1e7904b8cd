"""Seeded random models, states and closed terms for property-based suites."""

import hashlib

import numpy as np

from . import quantum as q
from .term import (
    CLASSICAL, DELTA_T, QUANTUM, TAU_T, TICK, Abstract, Atom, Choice, CommMerge, Encap, History,
    Model, Parallel, Rename, Seq, StaticPar,
)

QUANTUM_ACTIONS = ("q1", "q2", "q3")
CLASSICAL_ACTIONS = ("c1", "c2", "c3", "c4")
COMM_RESULTS = {("c1", "c2"): "k1", ("c3", "c4"): "k2", ("c1", "c3"): "k3"}
ALIAS_PREFIX = "r_"

BINARY = {"+": Choice, ".": Seq, "|": StaticPar, "<>": CommMerge, "||": Parallel}


def rng_for(seed, *labels):
    """Independent generator per (seed, label) so suites do not share streams."""
    digest = hashlib.sha256("/".join(map(str, labels)).encode()).digest()
    return np.random.default_rng([int(seed), int.from_bytes(digest[:8], "little")])


def random_model(rng, dims=(2, 4), aliases=True):
    """Model with three quantum ops, four communicating actions and a small gamma.

    Every action also gets an alias ``r_<name>`` of the same kind (bound to
    the same superoperator for quantum ops) so renamings can be
    state-consistent.
    """
    dim = int(rng.choice(dims))
    m = Model(dim=dim)
    for name in QUANTUM_ACTIONS:
        m.declare(name, QUANTUM)
        kind = ["unitary", "unitary", "general"][int(rng.integers(0, 3))]
        m.bind(name, q.random_superop(dim, rng, kind=kind, name=name))
    for name in CLASSICAL_ACTIONS + tuple(sorted(set(COMM_RESULTS.values()))):
        m.declare(name, CLASSICAL)
    for (a, b), c in sorted(COMM_RESULTS.items()):
        m.add_gamma(a, b, c)
    if aliases:
        for name in QUANTUM_ACTIONS:
            m.declare(ALIAS_PREFIX + name, QUANTUM)
            m.bind(ALIAS_PREFIX + name, m.ops[name])
        for name in CLASSICAL_ACTIONS:
            m.declare(ALIAS_PREFIX + name, CLASSICAL)
    m.initial = q.random_density(dim, rng)
    return m


def pick(rng, seq):
    return seq[int(rng.integers(0, len(seq)))]


def random_term(rng, alphabet, ops=("+", "."), depth=3, stop=0.45, extra_leaves=()):
    """Random closed history-free term of at most ``depth`` operator levels."""
    if depth == 0 or rng.random() < stop:
        if extra_leaves and rng.random() < 0.15:
            return pick(rng, extra_leaves)
        return Atom(pick(rng, alphabet))
    op = BINARY[pick(rng, ops)]
    return op(random_term(rng, alphabet, ops, depth - 1, stop, extra_leaves),
              random_term(rng, alphabet, ops, depth - 1, stop, extra_leaves))


def random_action_set(rng, alphabet, keys=(), history_names=()):
    """Random subset of plain symbols, optionally with some histories."""
    out = {Atom(a) for a in alphabet if rng.random() < 0.5}
    for name in history_names:
        for k in keys:
            if rng.random() < 0.5:
                out.add(History(name, k))
    return frozenset(out)


def alias_mapping(rng, alphabet):
    """Injective renaming of a random subset of symbols onto their aliases."""
    return tuple((a, ALIAS_PREFIX + a) for a in alphabet if rng.random() < 0.6)


CONTEXTS = {
    "_+r": lambda t, r, rng: Choice(t, r),
    "r+_": lambda t, r, rng: Choice(r, t),
    "_.r": lambda t, r, rng: Seq(t, r),
    "r._": lambda t, r, rng: Seq(r, t),
    "_|r": lambda t, r, rng: StaticPar(t, r),
    "_<>r": lambda t, r, rng: CommMerge(t, r),
    "encap": lambda t, r, rng: Encap(random_action_set(rng, CLASSICAL_ACTIONS + QUANTUM_ACTIONS), t),
    "abstract": lambda t, r, rng: Abstract(random_action_set(rng, CLASSICAL_ACTIONS + QUANTUM_ACTIONS), t),
    "rename": lambda t, r, rng: Rename(alias_mapping(rng, CLASSICAL_ACTIONS + QUANTUM_ACTIONS), t),
}


def random_variant(rng, t, silent=False):
    """A term expected (not assumed) to be equivalent to ``t``.

    Callers must confirm the relation with a checker before relying on it.
    """
    makers = [
        lambda: Choice(t, t),
        lambda: Choice(t, DELTA_T),
        lambda: _commute(t),
        lambda: _reassociate(t),
    ]
    if silent:
        makers += [lambda: Seq(t, TAU_T), lambda: Seq(Seq(t, TAU_T), TAU_T)]
    return makers[int(rng.integers(0, len(makers)))]()


def _commute(t):
    if isinstance(t, Choice):
        return Choice(t.right, t.left)
    if isinstance(t, Seq):
        return Seq(t.left, _commute(t.right))
    return Choice(t, t)


def _reassociate(t):
    if isinstance(t, (Choice, Seq)) and isinstance(t.left, type(t)):
        cls = type(t)
        return cls(t.left.left, cls(t.left.right, t.right))
    if isinstance(t, (Choice, Seq)) and isinstance(t.right, type(t)):
        cls = type(t)
        return cls(cls(t.left, t.right.left), t.right.right)
    return Choice(t, DELTA_T)


def random_system(rng, max_states=5, alphabet=("a", "b", "tau"), states=2, edges=(1, 7)):
    """Small random forward-reverse system for checker/oracle comparisons.

    Every forward edge gets a mirrored reverse edge keyed 1 or 2; node states
    come from a pool of ``states`` random qubit states and a few nodes are
    marked terminated.
    """
    from .semantics import FWD, REV, Configuration, Label, TransitionSystem

    n = int(rng.integers(1, max_states + 1))
    pool = [q.random_density(2, rng) for _ in range(states)]
    ts = TransitionSystem("concrete")
    for i in range(n):
        term = TICK if rng.random() < 0.15 else Atom(f"s{i}")
        ts.nodes.append(Configuration(term, pool[int(rng.integers(0, states))]))
    seen = set()
    for _ in range(int(rng.integers(edges[0], edges[1] + 1))):
        s, d = int(rng.integers(0, n)), int(rng.integers(0, n))
        sym = pick(rng, alphabet)
        key = int(rng.integers(1, 3))
        if (s, sym, d) in seen:
            continue
        seen.add((s, sym, d))
        ts.edges.append((s, Label(FWD, sym), d))
        ts.edges.append((d, Label(REV, sym, key), s))
    return ts


def system_variant(rng, ts, max_states=5, mutate=0.5):
    """Relabel the nodes of ``ts``, maybe split one node in two, maybe mutate.

    Without the mutation the result is strongly bisimilar to ``ts``; the
    mutation (add a silent edge pair or drop an edge pair) yields near misses.
    """
    from .semantics import FWD, REV, Label, TransitionSystem

    n = len(ts.nodes)
    nodes = list(ts.nodes)
    pairs = [(s, lab, d) for s, lab, d in ts.edges if lab.direction == FWD]
    back = {(d, lab.symbol, s): lab.key for s, lab, d in ts.edges if lab.direction == REV}
    if n < max_states and rng.random() < 0.6:
        split = int(rng.integers(0, n))
        nodes.append(nodes[split])
        moved = []
        for s, lab, d in pairs:
            s2 = n if s == split else s
            d2 = n if d == split and rng.random() < 0.5 else d
            moved.append((s2, lab, d2, back[(s, lab.symbol, d)]))
            if s == split:
                moved.append((s, lab, d2, back[(s, lab.symbol, d)]))
        keyed = moved
    else:
        keyed = [(s, lab, d, back[(s, lab.symbol, d)]) for s, lab, d in pairs]
    if rng.random() < mutate:
        if keyed and rng.random() < 0.5:
            keyed.pop(int(rng.integers(0, len(keyed))))
        else:
            m = len(nodes)
            keyed.append((int(rng.integers(0, m)), Label(FWD, "tau"), int(rng.integers(0, m)), 1))
    order = [int(i) for i in rng.permutation(len(nodes))]
    pos = {old: new for new, old in enumerate(order)}
    out = TransitionSystem(ts.mode)
    out.nodes = [nodes[i] for i in order]
    out.root = pos[ts.root]
    seen = set()
    for s, lab, d, key in keyed:
        if (s, lab.symbol, d) in seen:
            continue
        seen.add((s, lab.symbol, d))
        out.edges.append((pos[s], lab, pos[d]))
        out.edges.append((pos[d], Label(REV, lab.symbol, key), pos[s]))
    return out


ALL_ACTIONS = QUANTUM_ACTIONS + CLASSICAL_ACTIONS
__all__ = [
    "ALL_ACTIONS", "CLASSICAL_ACTIONS", "COMM_RESULTS", "CONTEXTS", "QUANTUM_ACTIONS",
    "alias_mapping", "pick", "random_action_set", "random_model", "random_term",
    "random_system", "random_variant", "system_variant", "rng_for",
]
