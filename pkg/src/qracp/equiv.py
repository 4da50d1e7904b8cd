"""Strong, branching and rooted branching forward-reverse bisimulation.

Systems are compared on their disjoint union. Two nodes may only be
related when their quantum states agree (trace distance within the
interning tolerance) and they satisfy the same predicates.
"""

import copy
import json
from dataclasses import dataclass, field

from . import quantum as q
from .config import DEFAULT_TOLERANCES
from .semantics import FWD, REV
from .term import TAU, Atom, History, print_term, subterms

STRONG = "strong"
BRANCHING = "branching"
ROOTED = "rooted-branching"
FLAVORS = (STRONG, BRANCHING, ROOTED)


class EquivalenceError(ValueError):
    pass


@dataclass
class EquivalenceVerdict:
    related: bool
    flavor: str
    witness: list = field(default_factory=list)         # [(node of A, node of B)]
    counterexample: list = field(default_factory=list)  # distinguishing play

    def to_json(self):
        out = {"related": self.related, "flavor": self.flavor}
        if self.related:
            out["witness"] = [list(p) for p in self.witness]
        else:
            out["counterexample"] = self.counterexample
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


class _Union:
    """Disjoint union of two systems with precomputed move tables."""

    def __init__(self, a, b, tol):
        for ts in (a, b):
            if ts.truncated:
                raise EquivalenceError(f"cannot check a truncated system ({ts.reason})")
        self.a, self.b = a, b
        self.na = len(a.nodes)
        self.n = self.na + len(b.nodes)
        self.root_a, self.root_b = a.root, self.na + b.root
        self.moves = [[] for _ in range(self.n)]      # (letter, dst)
        for off, ts in ((0, a), (self.na, b)):
            for s, lab, d in ts.edges:
                self.moves[off + s].append((lab.letter, off + d))
        self.text = [a.node_text(i) for i in range(self.na)] + [b.node_text(i) for i in range(len(b.nodes))]
        self.state_class = self._state_classes(tol)
        self.preds = [a.predicates(i) for i in range(self.na)] + [b.predicates(i) for i in range(len(b.nodes))]
        self.initial = [(self.state_class[i], self.preds[i]) for i in range(self.n)]

    def _state_classes(self, tol):
        reps = []
        out = []
        for ts in (self.a, self.b):
            for i in range(len(ts.nodes)):
                st = ts.state_of(i)
                if st is None:
                    out.append(-1)
                    continue
                for cid, rep in enumerate(reps):
                    if rep.dim == st.dim and q.trace_distance(rep, st) <= tol.intern:
                        out.append(cid)
                        break
                else:
                    reps.append(st)
                    out.append(len(reps) - 1)
        return out

    def side(self, n):
        return ("A", n) if n < self.na else ("B", n - self.na)

    def compatible(self, x, y):
        return self.initial[x] == self.initial[y]

    def tau_reach(self, x, direction):
        """Nodes reachable from ``x`` by silent moves of one direction."""
        letter = (FWD, TAU) if direction == FWD else (REV, TAU, None)
        seen = [x]
        stack = [x]
        while stack:
            u = stack.pop()
            for l, d in self.moves[u]:
                if l == letter and d not in seen:
                    seen.append(d)
                    stack.append(d)
        return seen

    def render(self, letter):
        if letter[0] == FWD:
            return letter[1]
        if letter[2] is None:
            return f"{letter[1]}~rev"
        return f"{letter[1]}[{letter[2]}]~rev"


def _is_tau(letter):
    return letter[1] == TAU


# --------------------------------------------------------------------------
# strong: partition refinement

def _refine(u):
    """Return the list of successive partitions (block id per node)."""
    keys = {}
    block = [keys.setdefault(k, len(keys)) for k in u.initial]
    history = [block]
    while True:
        sigs = {}
        new = []
        for x in range(u.n):
            sig = (block[x], frozenset((l, block[d]) for l, d in u.moves[x]))
            new.append(sigs.setdefault(sig, len(sigs)))
        history.append(new)
        if len(sigs) == len(set(block)):
            return history
        block = new


def strong_fr_bisim(a, b, tol=DEFAULT_TOLERANCES):
    u = _Union(a, b, tol)
    history = _refine(u)
    final = history[-1]
    ra, rb = u.root_a, u.root_b
    if final[ra] == final[rb]:
        witness = sorted((x, y - u.na) for x in range(u.na) for y in range(u.na, u.n)
                         if final[x] == final[y])
        return EquivalenceVerdict(True, STRONG, witness=witness)
    return EquivalenceVerdict(False, STRONG, counterexample=_strong_play(u, history, ra, rb))


def _strong_play(u, history, x, y):
    play = []
    while True:
        r = next(i for i, p in enumerate(history) if p[x] != p[y])
        if r == 0:
            play.append({"round": 0, "reason": "states or predicates differ",
                         "A": u.text[x] if x < u.na else u.text[y],
                         "B": u.text[y] if y >= u.na else u.text[x]})
            return play
        prev = history[r - 1]
        move = None
        for attacker, defender in ((x, y), (y, x)):
            for l, d in u.moves[attacker]:
                answers = [d2 for l2, d2 in u.moves[defender] if l2 == l]
                if all(prev[d2] != prev[d] for d2 in answers):
                    move = (attacker, defender, l, d, answers)
                    break
            if move:
                break
        attacker, defender, l, d, answers = move
        side, _ = u.side(attacker)
        play.append({"round": r, "attacker": side, "label": u.render(l), "from": u.text[attacker],
                     "to": u.text[d], "answers": [u.text[a] for a in answers]})
        if not answers:
            return play
        x, y = d, answers[0]


# --------------------------------------------------------------------------
# branching: naive greatest fixpoint

def _branching_relation(u):
    rel = {(x, y) for x in range(u.n) for y in range(u.n) if u.compatible(x, y)}
    fwd_reach = [u.tau_reach(x, FWD) for x in range(u.n)]
    rev_reach = [u.tau_reach(x, REV) for x in range(u.n)]
    removed_at = {}
    round_no = 0
    changed = True
    while changed:
        changed = False
        round_no += 1
        drop = [(x, y) for (x, y) in rel
                if not _branching_ok(u, rel, x, y, fwd_reach, rev_reach)]
        if drop:
            changed = True
            for p in drop:
                rel.discard(p)
                rel.discard((p[1], p[0]))
                removed_at.setdefault(p, round_no)
                removed_at.setdefault((p[1], p[0]), round_no)
    return rel, removed_at


def _branching_ok(u, rel, x, y, fwd_reach, rev_reach):
    return (_branching_half(u, rel, x, y, fwd_reach, rev_reach)
            and _branching_half(u, rel, y, x, fwd_reach, rev_reach))


def _branching_half(u, rel, x, y, fwd_reach, rev_reach):
    """Every move of ``x`` is matched from ``y`` (clauses for one side)."""
    for l, d in u.moves[x]:
        if _is_tau(l) and (d, y) in rel:
            continue
        reach = fwd_reach[y] if l[0] == FWD else rev_reach[y]
        if not any((x, y0) in rel and any(l2 == l and (d, d2) in rel for l2, d2 in u.moves[y0])
                   for y0 in reach):
            return False
    if u.preds[x]:
        for reach in (fwd_reach[y], rev_reach[y]):
            if not any((x, y0) in rel and u.preds[y0] == u.preds[x] for y0 in reach):
                return False
    return True


def _branching_play(u, removed_at, x, y, rel):
    """Describe why (x, y) left the relation: the first unmatched move."""
    for attacker, defender in ((x, y), (y, x)):
        for l, d in u.moves[attacker]:
            if _is_tau(l) and (d, defender) in rel:
                continue
            answers = [d2 for l2, d2 in u.moves[defender] if l2 == l]
            if not any((d, d2) in rel for d2 in answers):
                side, _ = u.side(attacker)
                return [{"round": removed_at.get((x, y), 0), "attacker": side, "label": u.render(l),
                         "from": u.text[attacker], "to": u.text[d],
                         "answers": [u.text[a] for a in answers]}]
    return [{"round": 0, "reason": "states or predicates differ",
             "A": u.text[x], "B": u.text[y]}]


def branching_fr_bisim(a, b, tol=DEFAULT_TOLERANCES):
    u = _Union(a, b, tol)
    rel, removed_at = _branching_relation(u)
    ra, rb = u.root_a, u.root_b
    if (ra, rb) in rel:
        witness = sorted((x, y - u.na) for (x, y) in rel if x < u.na <= y)
        return EquivalenceVerdict(True, BRANCHING, witness=witness)
    return EquivalenceVerdict(False, BRANCHING, counterexample=_branching_play(u, removed_at, ra, rb, rel))


def rooted_branching_fr_bisim(a, b, tol=DEFAULT_TOLERANCES):
    u = _Union(a, b, tol)
    rel, removed_at = _branching_relation(u)
    ra, rb = u.root_a, u.root_b
    problem = _root_problem(u, rel, ra, rb)
    if problem is None:
        # the root pair comes first; the rest is the branching continuation relation
        cont = sorted((x, y - u.na) for (x, y) in rel if x < u.na <= y)
        return EquivalenceVerdict(True, ROOTED, witness=[(a.root, b.root)] + cont)
    return EquivalenceVerdict(False, ROOTED, counterexample=[problem])


def _root_problem(u, rel, x, y):
    if not u.compatible(x, y):
        return {"round": 0, "reason": "root states or predicates differ", "A": u.text[x], "B": u.text[y]}
    for attacker, defender in ((x, y), (y, x)):
        for l, d in u.moves[attacker]:
            answers = [d2 for l2, d2 in u.moves[defender] if l2 == l]
            if not any((d, d2) in rel for d2 in answers):
                side, _ = u.side(attacker)
                return {"round": 1, "attacker": side, "label": u.render(l), "root": True,
                        "from": u.text[attacker], "to": u.text[d],
                        "answers": [u.text[a] for a in answers]}
    return None


CHECKERS = {STRONG: strong_fr_bisim, BRANCHING: branching_fr_bisim, ROOTED: rooted_branching_fr_bisim}


def check(a, b, flavor, tol=DEFAULT_TOLERANCES):
    try:
        fn = CHECKERS[flavor]
    except KeyError:
        raise EquivalenceError(f"unknown flavor {flavor!r}") from None
    return fn(a, b, tol)


def validate_witness(a, b, verdict, tol=DEFAULT_TOLERANCES):
    """Re-check every clause of the flavor's definition on the witness."""
    u = _Union(a, b, tol)
    pairs = {(x, y + u.na) for x, y in verdict.witness}
    rel = pairs | {(y, x) for x, y in pairs}
    root = (u.root_a, u.root_b)
    if verdict.flavor == STRONG:
        return root in pairs and all(_strong_clause(u, rel, x, y) for x, y in pairs)
    fwd_reach = [u.tau_reach(x, FWD) for x in range(u.n)]
    rev_reach = [u.tau_reach(x, REV) for x in range(u.n)]
    if verdict.flavor == BRANCHING:
        return root in pairs and all(_branching_ok_cross(u, rel, x, y, fwd_reach, rev_reach)
                                     for x, y in pairs)
    cont = {(x, y + u.na) for x, y in verdict.witness[1:]}
    crel = cont | {(y, x) for x, y in cont}
    ok_cont = all(_branching_ok_cross(u, crel, x, y, fwd_reach, rev_reach) for x, y in cont)
    return ok_cont and _root_problem(u, crel, *root) is None


def _strong_clause(u, rel, x, y):
    if not u.compatible(x, y):
        return False
    for s, t in ((x, y), (y, x)):
        for l, d in u.moves[s]:
            if not any(l2 == l and (d, d2) in rel for l2, d2 in u.moves[t]):
                return False
    return True


def _branching_ok_cross(u, rel, x, y, fwd_reach, rev_reach):
    return u.compatible(x, y) and _branching_ok(u, rel, x, y, fwd_reach, rev_reach)


# --------------------------------------------------------------------------
# exhaustive oracle

ORACLE_LIMIT = 36


def brute_force_bisim(a, b, flavor, tol=DEFAULT_TOLERANCES):
    """Decide the flavor by exhaustive search for a relation over A x B.

    The search grows a candidate relation from the root pair, branching over
    every way of discharging the first unmet obligation of the definition.
    It succeeds exactly when some relation containing the root pair meets
    every clause.
    """
    if len(a.nodes) * len(b.nodes) > ORACLE_LIMIT:
        raise EquivalenceError(f"oracle limited to {ORACLE_LIMIT} node pairs")
    u = _Union(a, b, tol)
    fwd_reach = [u.tau_reach(x, FWD) for x in range(u.n)]
    rev_reach = [u.tau_reach(x, REV) for x in range(u.n)]
    root = (u.root_a, u.root_b)
    failed = set()

    def orient(x, y):
        return (x, y) if x < u.na else (y, x)

    def obligations(rel, strict_root):
        """Yield lists of alternative pair-sets; each list is one unmet clause."""
        todo = []
        if strict_root:
            todo.append(("root",) + root)
        todo += [("pair", x, y) for x, y in sorted(rel)]
        for kind, x, y in todo:
            if not u.compatible(x, y):
                return [[]]
            for att, dfn in ((x, y), (y, x)):
                for l, d in u.moves[att]:
                    alts = _alternatives(u, kind, flavor, att, dfn, l, d, fwd_reach, rev_reach)
                    alts = [frozenset(orient(p, r) for p, r in alt) for alt in alts]
                    alts = [alt for alt in alts if all(u.compatible(p, r) for p, r in alt)]
                    if any(alt <= rel for alt in alts):
                        continue
                    return [alts]
                if flavor != STRONG and kind == "pair" and u.preds[att]:
                    for reach in (fwd_reach[dfn], rev_reach[dfn]):
                        alts = [frozenset({orient(att, y0)}) for y0 in reach
                                if u.preds[y0] == u.preds[att] and u.compatible(att, y0)]
                        if any(alt <= rel for alt in alts):
                            continue
                        return [alts]
                elif u.preds[att] != u.preds[dfn]:
                    return [[]]
        return None

    strict = flavor == ROOTED

    def search(rel):
        if rel in failed:
            return None
        need = obligations(rel, strict)
        if need is None:
            return rel
        for alt in need[0]:
            found = search(rel | alt)
            if found is not None:
                return found
        failed.add(rel)
        return None

    start = frozenset() if strict else frozenset({root})
    if not u.compatible(*root):
        return EquivalenceVerdict(False, flavor, counterexample=[{"reason": "root states differ"}])
    found = search(start)
    if found is None:
        return EquivalenceVerdict(False, flavor, counterexample=[{"reason": "no relation exists"}])
    witness = sorted((x, y - u.na) for x, y in found)
    if strict:
        witness = [(a.root, b.root)] + [p for p in witness if p != (a.root, b.root)]
    return EquivalenceVerdict(True, flavor, witness=witness)


def _alternatives(u, kind, flavor, att, dfn, l, d, fwd_reach, rev_reach):
    answers = [d2 for l2, d2 in u.moves[dfn] if l2 == l]
    if flavor == STRONG or kind == "root":
        return [[(d, d2)] for d2 in answers]
    alts = []
    if _is_tau(l):
        alts.append([(d, dfn)])
    reach = fwd_reach[dfn] if l[0] == FWD else rev_reach[dfn]
    for y0 in reach:
        for l2, d2 in u.moves[y0]:
            if l2 == l:
                pair = [(d, d2)] if y0 == dfn else [(att, y0), (d, d2)]
                alts.append(pair)
    return alts


# --------------------------------------------------------------------------
# congruence probing

PROBE_CONTEXTS = ("_+r", "_.r", "_|r", "_<>r", "encap", "rename")


@dataclass
class ProbeReport:
    flavor: str
    context: str
    samples: int
    violations: list = field(default_factory=list)
    rejected: int = 0      # candidate pairs the checker did not relate

    @property
    def ok(self):
        return not self.violations

    def to_json(self):
        return {"flavor": self.flavor, "context": self.context, "samples": self.samples,
                "violations": self.violations, "rejected_candidates": self.rejected}


def congruence_probe(flavor, context, samples=100, seed=0, limits=None, tol=DEFAULT_TOLERANCES,
                     max_leaves=5):
    """Check that ``C[p]`` and ``C[q]`` stay related for checker-confirmed pairs.

    Pairs come from small random terms and rewritten variants of them; a
    candidate only counts once ``check`` relates it under ``flavor``.
    """
    from . import sampling as smp
    from .semantics import Configuration, build_lts

    make = smp.CONTEXTS[context]
    rng = smp.rng_for(seed, "congruence", flavor, context)
    report = ProbeReport(flavor, context, samples)
    silent = flavor != STRONG
    done = 0
    while done < samples:
        model = smp.random_model(rng)

        def lts(t):
            return build_lts(Configuration.initial(t, model.initial), model, limits, tol=tol)

        p = smp.random_term(rng, smp.ALL_ACTIONS, ("+", ".", "|"), depth=2)
        qv = smp.random_variant(rng, p, silent=silent)
        r = smp.random_term(rng, smp.ALL_ACTIONS, ("+", "."), depth=1)
        replay = copy.deepcopy(rng)    # same random action sets and renamings for both
        cp, cq = make(p, r, rng), make(qv, r, replay)
        if max(_leaves(cp), _leaves(cq)) > max_leaves:
            continue
        if not check(lts(p), lts(qv), flavor, tol).related:
            report.rejected += 1
            continue
        done += 1
        verdict = check(lts(cp), lts(cq), flavor, tol)
        if not verdict.related:
            report.violations.append({"p": print_term(p), "q": print_term(qv),
                                      "C[p]": print_term(cp), "C[q]": print_term(cq),
                                      "play": verdict.counterexample})
    return report


def _leaves(t):
    return sum(1 for u in subterms(t) if isinstance(u, (Atom, History)))
