"""Forward and reverse transition rules over quantum configurations.

Steps are computed symbolically first (label, key, residual term, applied
operation) and the quantum state is updated once at the top level. All
sub-derivations of one step share the same fresh key, which is the
smallest positive integer not used by the configuration.
"""

import json
from collections import deque
from dataclasses import dataclass

from . import quantum as q
from .config import DEFAULT_TOLERANCES, Limits
from .term import (
    CLASSICAL, DELTA, QUANTUM, TAU, TICK, Abstract, Atom, Choice, CommMerge, Encap,
    History, Parallel, RecVar, Rename, Seq, StaticPar, Terminated, check_guarded_linear,
    gamma, histories, history_keys, is_history_complete, is_history_free, linear_form, occurs, print_term,
)

FWD = "fwd"
REV = "rev"


class SemanticsError(RuntimeError):
    pass


@dataclass(frozen=True)
class Label:
    direction: str
    symbol: str
    key: object = None

    @property
    def letter(self):
        """The alphabet letter used by equivalence checking."""
        if self.direction == FWD:
            return (FWD, self.symbol)
        if self.symbol == TAU:
            return (REV, TAU, None)
        return (REV, self.symbol, self.key)

    @property
    def silent(self):
        return self.symbol == TAU

    def __str__(self):
        if self.direction == FWD:
            return self.symbol
        if self.key is None:
            return f"{self.symbol}~rev"
        return f"{self.symbol}[{self.key}]~rev"


@dataclass(frozen=True)
class Step:
    symbol: str
    key: object      # int, or None when no history is left behind
    residual: object
    op: object       # name of the quantum operation applied, or None


@dataclass(frozen=True)
class LedgerEntry:
    key: int
    op: object         # operation name or None
    pre: object        # DensityMatrix snapshot, None in inverse mode


class Configuration:
    """A term, a quantum state and the ledger of executed histories."""

    __slots__ = ("term", "state", "ledger")

    def __init__(self, term, state, ledger=()):
        self.term = term
        self.state = state
        self.ledger = tuple(ledger)

    @classmethod
    def initial(cls, term, state):
        # histories present in a source term count as executed with no recorded effect
        return cls(term, state)

    @property
    def ledger_id(self):
        return tuple((e.key, e.op) for e in self.ledger)

    def used_keys(self):
        return {e.key for e in self.ledger} | history_keys(self.term)

    def fresh_key(self):
        used = self.used_keys()
        k = 1
        while k in used:
            k += 1
        return k

    def snapshots(self):
        return {e.key: e.pre for e in self.ledger}

    def __repr__(self):
        return f"<{print_term(self.term)}, {self.state!r}>"


def _spent(step):
    """True when the step leaves nothing but its own history behind."""
    r = step.residual
    return r == TICK or (step.key is not None and is_history_complete(r)
                         and history_keys(r) == {step.key})


def _bare_rev(step):
    return step.residual == TICK or step.residual == Atom(step.symbol)


def _committed_to(branch, other):
    """True when every history of ``other`` is shared with ``branch``."""
    return set(histories(other)) <= set(histories(branch))


def _occurs_history(name, key, t):
    if name == TAU or key is None:
        return False
    return occurs(History(name, key), t)


class Semantics:
    """Rule engine bound to one model; step derivations are memoised."""

    def __init__(self, model, reversal="snapshot", tol=DEFAULT_TOLERANCES):
        self.model = model
        self.reversal = reversal
        self.tol = tol
        self._fwd_cache = {}
        self._rev_cache = {}

    # -- symbolic rules ---------------------------------------------------

    def fwd(self, t, m):
        key = (t, m)
        hit = self._fwd_cache.get(key)
        if hit is None:
            hit = tuple(self._fwd(t, m))
            self._fwd_cache[key] = hit
        return hit

    def rev(self, t):
        hit = self._rev_cache.get(t)
        if hit is None:
            hit = tuple(self._rev(t))
            self._rev_cache[t] = hit
        return hit

    def _kind(self, name):
        k = self.model.kinds.get(name)
        if k is None:
            raise SemanticsError(f"undeclared action {name!r}")
        return k

    def _fwd(self, t, m):
        if isinstance(t, Atom):
            if t.name == DELTA:
                return []
            if t.name == TAU:
                return [Step(TAU, None, TICK, None)]
            kind = self._kind(t.name)
            op = None
            if kind == QUANTUM:
                if t.name not in self.model.ops:
                    raise SemanticsError(f"quantum operation {t.name!r} is unbound")
                op = t.name
            return [Step(t.name, m, History(t.name, m), op)]
        if isinstance(t, (History, Terminated)):
            return []
        if isinstance(t, RecVar):
            try:
                rhs = self.model.recursion_rhs(t)
            except KeyError as exc:
                raise SemanticsError(str(exc)) from None
            return self.fwd(rhs, m)
        if isinstance(t, Choice):
            x, y = t.left, t.right
            left, right = self.fwd(x, m), self.fwd(y, m)
            out = []
            # a branch steps alone only while the other one has not progressed on its own
            for s in left:
                if not occurs(s.symbol, y) and _committed_to(x, y):
                    out.append(Step(s.symbol, s.key, Choice(s.residual, y), s.op))
            for s in right:
                if not occurs(s.symbol, x) and _committed_to(y, x):
                    out.append(Step(s.symbol, s.key, Choice(x, s.residual), s.op))
            joint = set(histories(x)) == set(histories(y))
            for s in left:
                for r in right:
                    if not joint or (s.symbol, s.key, s.op) != (r.symbol, r.key, r.op):
                        continue
                    # both residues are kept so that reversal restores the sum exactly
                    out.append(Step(s.symbol, s.key, Choice(s.residual, r.residual), s.op))
            return _dedupe(out)
        if isinstance(t, Seq):
            x, y = t.left, t.right
            out = [Step(s.symbol, s.key, Seq(s.residual, y), s.op) for s in self.fwd(x, m)]
            if is_history_complete(x):
                out += [Step(s.symbol, s.key, Seq(x, s.residual), s.op) for s in self.fwd(y, m)]
            return out
        if isinstance(t, StaticPar):
            x, y = t.left, t.right
            out = [Step(s.symbol, s.key, StaticPar(s.residual, y), s.op) for s in self.fwd(x, m)]
            out += [Step(s.symbol, s.key, StaticPar(x, s.residual), s.op) for s in self.fwd(y, m)]
            return _dedupe(out)
        if isinstance(t, (CommMerge, Parallel)):
            return self._par_fwd(t, m)
        if isinstance(t, Encap):
            out = []
            for s in self.fwd(t.body, m):
                if Atom(s.symbol) in t.actions:
                    continue
                res = s.residual if s.residual == TICK else Encap(t.actions, s.residual)
                out.append(Step(s.symbol, s.key, res, s.op))
            return out
        if isinstance(t, Abstract):
            out = []
            for s in self.fwd(t.body, m):
                if Atom(s.symbol) in t.actions:
                    if _spent(s):
                        out.append(Step(TAU, None, TICK, None))
                    else:
                        out.append(Step(TAU, s.key, Abstract(t.actions, s.residual), None))
                else:
                    res = s.residual if s.residual == TICK else Abstract(t.actions, s.residual)
                    out.append(Step(s.symbol, s.key, res, s.op))
            return _dedupe(out)
        if isinstance(t, Rename):
            out = []
            for s in self.fwd(t.body, m):
                name = t.apply(s.symbol)
                res = s.residual if s.residual == TICK else Rename(t.mapping, s.residual)
                out.append(Step(name, s.key, res, s.op))
            return out
        raise SemanticsError(f"unknown term {t!r}")

    def _communicating(self, name):
        return name not in (TAU, DELTA) and self._kind(name) == CLASSICAL

    def _par_fwd(self, t, m):
        # The node stays in place after firing; its mode is read off the histories.
        # Only shared (communication) keys so far: another synchronisation may come next.
        # Any one-sided history: the components only interleave from then on.
        x, y = t.left, t.right
        kx, ky = set(history_keys(x)), set(history_keys(y))
        cls = type(t)
        if not self._synchronised(x, y, kx & ky):
            return []
        out = []
        if cls is Parallel or kx or ky:
            out += [Step(s.symbol, s.key, cls(s.residual, y), s.op) for s in self.fwd(x, m)]
            out += [Step(s.symbol, s.key, cls(x, s.residual), s.op) for s in self.fwd(y, m)]
        if kx ^ ky:
            return _dedupe(out)
        for s in self.fwd(x, m):
            if not self._communicating(s.symbol) or s.key is None:
                continue
            for r in self.fwd(y, m):
                if not self._communicating(r.symbol) or r.key != s.key:
                    continue
                g = gamma(self.model, s.symbol, r.symbol)
                if g != DELTA:
                    out.append(Step(g, m, cls(s.residual, r.residual), None))
        return _dedupe(out)

    def _synchronised(self, x, y, shared):
        # a key held on both sides must name partners that gamma actually merges
        for k in shared:
            hx = [h.name for h in histories(x) if h.key == k]
            hy = [h.name for h in histories(y) if h.key == k]
            if not any(gamma(self.model, a, b) != DELTA for a in hx for b in hy):
                return False
        return True

    def _par_rev(self, t):
        # A key present on both sides is a synchronisation and is undone jointly.
        x, y = t.left, t.right
        kx, ky = set(history_keys(x)), set(history_keys(y))
        cls = type(t)
        left, right = self.rev(x), self.rev(y)
        out = [Step(s.symbol, s.key, cls(s.residual, y), None) for s in left if s.key not in ky]
        out += [Step(s.symbol, s.key, cls(x, s.residual), None) for s in right if s.key not in kx]
        for s in left:
            if s.key not in ky or not self._communicating(s.symbol):
                continue
            for r in right:
                if r.key != s.key or not self._communicating(r.symbol):
                    continue
                g = gamma(self.model, s.symbol, r.symbol)
                if g != DELTA:
                    out.append(Step(g, s.key, cls(s.residual, r.residual), None))
        return _dedupe(out)

    def _rev(self, t):
        if isinstance(t, History):
            return [Step(t.name, t.key, Atom(t.name), None)]
        if isinstance(t, (Atom, Terminated, RecVar)):
            return []
        if isinstance(t, Choice):
            x, y = t.left, t.right
            left, right = self.rev(x), self.rev(y)
            out = []
            for s in left:
                if not _occurs_history(s.symbol, s.key, y):
                    out.append(Step(s.symbol, s.key, Choice(s.residual, y), None))
            for s in right:
                if not _occurs_history(s.symbol, s.key, x):
                    out.append(Step(s.symbol, s.key, Choice(x, s.residual), None))
            for s in left:
                for r in right:
                    if (s.symbol, s.key) != (r.symbol, r.key):
                        continue
                    out.append(Step(s.symbol, s.key, Choice(s.residual, r.residual), None))
            return _dedupe(out)
        if isinstance(t, Seq):
            x, y = t.left, t.right
            out = []
            if is_history_free(y):
                out += [Step(s.symbol, s.key, Seq(s.residual, y), None) for s in self.rev(x)]
            if is_history_complete(x):
                out += [Step(s.symbol, s.key, Seq(x, s.residual), None) for s in self.rev(y)]
            return out
        if isinstance(t, StaticPar):
            x, y = t.left, t.right
            out = [Step(s.symbol, s.key, StaticPar(s.residual, y), None) for s in self.rev(x)]
            out += [Step(s.symbol, s.key, StaticPar(x, s.residual), None) for s in self.rev(y)]
            return _dedupe(out)
        if isinstance(t, (CommMerge, Parallel)):
            return self._par_rev(t)
        if isinstance(t, Encap):
            out = []
            for s in self.rev(t.body):
                if s.symbol != TAU and History(s.symbol, s.key) in t.actions:
                    continue
                res = s.residual if s.residual == TICK else Encap(t.actions, s.residual)
                out.append(Step(s.symbol, s.key, res, None))
            return out
        if isinstance(t, Abstract):
            out = []
            for s in self.rev(t.body):
                bare = _bare_rev(s)
                hidden = s.symbol == TAU or History(s.symbol, s.key) in t.actions
                if hidden:
                    res = TICK if bare else Abstract(t.actions, s.residual)
                    out.append(Step(TAU, s.key, res, None))
                else:
                    res = s.residual if s.residual == TICK else Abstract(t.actions, s.residual)
                    out.append(Step(s.symbol, s.key, res, None))
            return _dedupe(out)
        if isinstance(t, Rename):
            out = []
            for s in self.rev(t.body):
                name = t.apply(s.symbol)
                res = s.residual if s.residual == TICK else Rename(t.mapping, s.residual)
                out.append(Step(name, s.key, res, None))
            return out
        raise SemanticsError(f"unknown term {t!r}")

    # -- configurations ---------------------------------------------------

    def initial(self, term, state=None):
        return Configuration.initial(term, state if state is not None else self.model.initial)

    def forward_steps(self, c):
        m = c.fresh_key()
        out = []
        for s in self.fwd(c.term, m):
            state = c.state
            if s.op is not None:
                try:
                    state = q.apply(self.model.ops[s.op], state, self.tol)
                except q.QuantumError:
                    continue  # a branch of probability zero contributes no transition
            ledger = c.ledger
            if s.op is not None:
                pre = c.state if self.reversal == "snapshot" else None
                ledger = ledger + (LedgerEntry(s.key, s.op, pre),)
            out.append((Label(FWD, s.symbol, s.key), Configuration(s.residual, state, ledger)))
        return out

    def reverse_steps(self, c):
        out = []
        for s in self.rev(c.term):
            if s.key is None:
                raise SemanticsError("reverse step without a history key")
            if all(e.key != s.key for e in c.ledger):
                # classical and hidden steps never touched the state
                state, ledger = c.state, c.ledger
            else:
                state, ledger = self._undo(c, s.key)
            out.append((Label(REV, s.symbol, s.key), Configuration(s.residual, state, ledger)))
        return out

    def steps(self, c):
        return self.forward_steps(c) + self.reverse_steps(c)

    def _undo(self, c, key):
        idx = next((i for i, e in enumerate(c.ledger) if e.key == key), None)
        entry = c.ledger[idx]
        rest = c.ledger[idx + 1:]
        if self.reversal == "inverse":
            state = c.state
            if entry.op is not None:
                state = q.apply(q.inverse_of(self.model.ops[entry.op]), state, self.tol)
            return state, c.ledger[:idx] + rest
        # snapshot mode: restore the recorded pre-state, replaying later entries
        state = q.reverse_apply(None, key, {key: entry.pre}, c.state)
        replayed = []
        for e in rest:
            replayed.append(LedgerEntry(e.key, e.op, state))
            if e.op is not None:
                state = q.apply(self.model.ops[e.op], state, self.tol)
        return state, c.ledger[:idx] + tuple(replayed)


def _dedupe(steps):
    seen = set()
    out = []
    for s in steps:
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


def forward_steps(c, model, reversal="snapshot"):
    return Semantics(model, reversal).forward_steps(c)


def reverse_steps(c, model, reversal="snapshot"):
    return Semantics(model, reversal).reverse_steps(c)


# --------------------------------------------------------------------------
# transition systems

class TransitionSystem:
    """A rooted, finitely branching graph of configurations.

    Nodes are configurations (or recursion variables in skeleton mode);
    edges are ``(src, Label, dst)`` triples with integer node ids.
    """

    def __init__(self, mode="concrete"):
        self.mode = mode
        self.nodes = []       # Configuration, or (name, term) in skeleton mode
        self.edges = []
        self.root = 0
        self.truncated = False
        self.reason = ""
        self._out = None

    def __len__(self):
        return len(self.nodes)

    def out_edges(self, n):
        if self._out is None:
            self._out = [[] for _ in self.nodes]
            for s, lab, d in self.edges:
                self._out[s].append((lab, d))
        return self._out[n]

    def term_of(self, n):
        node = self.nodes[n]
        return node.term if isinstance(node, Configuration) else node[1]

    def state_of(self, n):
        node = self.nodes[n]
        return node.state if isinstance(node, Configuration) else None

    def fingerprint(self, n):
        st = self.state_of(n)
        return "-" if st is None else st.fingerprint()

    def predicates(self, n):
        return frozenset({"tick"}) if self.term_of(n) == TICK else frozenset()

    def node_text(self, n):
        node = self.nodes[n]
        if isinstance(node, Configuration):
            return print_term(node.term)
        return node[0]

    def labels(self):
        return sorted({str(lab) for _, lab, _ in self.edges})

    def to_json(self):
        data = {
            "mode": self.mode,
            "nodes": [{"id": i, "term": self.node_text(i), "state-fingerprint": self.fingerprint(i)}
                      for i in range(len(self.nodes))],
            "edges": [{"src": s, "label": str(lab), "dir": lab.direction, "symbol": lab.symbol,
                       "key": lab.key, "dst": d} for s, lab, d in self.edges],
            "root": self.root,
            "truncated": self.truncated,
            "reason": self.reason,
        }
        return data

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def to_dot(self, name="lts"):
        lines = [f"digraph {name} {{", "  rankdir=LR;", '  node [shape=box, fontname="monospace"];']
        for i in range(len(self.nodes)):
            text = self.node_text(i).replace('"', '\\"')
            shape = ", peripheries=2" if i == self.root else ""
            lines.append(f'  n{i} [label="{text}"{shape}];')
        for s, lab, d in self.edges:
            style = ", style=dashed" if lab.direction == REV else ""
            lines.append(f'  n{s} -> n{d} [label="{lab}"{style}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_lts(c, model, limits=None, mode="concrete", reversal="snapshot",
              tol=DEFAULT_TOLERANCES, semantics=None):
    """Explore ``c`` breadth-first (concrete) or read a linear spec (skeleton).

    ``c`` is a :class:`Configuration` in concrete mode and a :class:`RecVar`
    (or configuration holding one) in skeleton mode.
    """
    limits = limits or Limits()
    if mode == "skeleton":
        var = c.term if isinstance(c, Configuration) else c
        return skeleton_lts(var, model)
    if mode != "concrete":
        raise ValueError(f"unknown mode {mode!r}")
    sem = semantics or Semantics(model, reversal, tol)
    ts = TransitionSystem("concrete")
    index = {}

    def intern(conf):
        k = (conf.term, conf.ledger_id)
        for nid in index.get(k, ()):
            if q.trace_distance(ts.nodes[nid].state, conf.state) <= tol.intern:
                return nid, False
        nid = len(ts.nodes)
        ts.nodes.append(conf)
        index.setdefault(k, []).append(nid)
        return nid, True

    intern(c)
    depth = {0: 0}
    frontier = deque([0])
    while frontier:
        n = frontier.popleft()
        succ = sem.steps(ts.nodes[n])
        if depth[n] >= limits.max_depth:
            if succ:
                ts.truncated = True
                ts.reason = f"depth limit {limits.max_depth} reached"
            continue
        for lab, conf in succ:
            nid, new = intern(conf)
            if new:
                if len(ts.nodes) > limits.max_nodes:
                    ts.nodes.pop()
                    k = (conf.term, conf.ledger_id)
                    index[k].pop()
                    ts.truncated = True
                    ts.reason = f"node limit {limits.max_nodes} reached"
                    frontier.clear()
                    break
                depth[nid] = depth[n] + 1
                frontier.append(nid)
            ts.edges.append((n, lab, nid))
    return ts


def skeleton_lts(var, model):
    """Graph over recursion variables of a guarded linear specification."""
    if not isinstance(var, RecVar):
        raise SemanticsError("skeleton mode needs a recursion variable as root")
    spec = model.specs.get(var.spec)
    if spec is None:
        raise SemanticsError(f"no recursive specification {var.spec!r}")
    report = check_guarded_linear(spec)
    if not (report.linear and report.guarded):
        raise SemanticsError("skeleton mode requires a guarded linear specification: "
                             + "; ".join(report.diagnostics))
    ts = TransitionSystem("skeleton")
    ids = {}

    def node(name):
        if name not in ids:
            ids[name] = len(ts.nodes)
            # the terminal node stands for an executed exit, not for termination
            ts.nodes.append(("exit", None) if name is None else (name, RecVar(name, var.spec)))
        return ids[name]

    node(var.name)
    queue = deque([var.name])
    seen = {var.name}
    while queue:
        v = queue.popleft()
        src = ids[v]
        for action, target in linear_form(spec.rhs(v)):
            dst = node(target)
            ts.edges.append((src, Label(FWD, action), dst))
            ts.edges.append((dst, Label(REV, action), src))
            if target is not None and target not in seen:
                seen.add(target)
                queue.append(target)
    return ts


def process_lts(model, name, limits=None, mode="concrete", reversal="snapshot",
                tol=DEFAULT_TOLERANCES):
    """Transition system of a named process.

    Concrete mode roots the graph at the unfolded body of the definition, so
    the root is the configuration every full reversal returns to.
    """
    var = model.process(name)
    if mode == "skeleton":
        return skeleton_lts(var, model)
    term = model.recursion_rhs(var)
    return build_lts(Configuration.initial(term, model.initial), model, limits, mode, reversal, tol)


@dataclass
class RoundTrip:
    """Outcome of replaying every maximal forward path backwards."""

    paths: int = 0
    failures: list = None

    @property
    def ok(self):
        return not self.failures


def roundtrip(term, model, reversal="snapshot", tol=DEFAULT_TOLERANCES, max_paths=10_000,
              exact=1e-12):
    """Run every maximal forward path of ``term`` and undo it one step at a time.

    Each undo must find a reverse step carrying the key of the most recent
    forward step; the final configuration must be the root term with a state
    within ``exact`` trace distance of the initial one.
    """
    sem = Semantics(model, reversal, tol)
    root = sem.initial(term)
    report = RoundTrip(failures=[])
    stack = [(root, ())]
    while stack and report.paths < max_paths:
        conf, path = stack.pop()
        succ = sem.forward_steps(conf)
        if succ:
            stack.extend((c, path + (lab,)) for lab, c in reversed(succ))
            continue
        report.paths += 1
        problem = _unwind(sem, conf, path, root, exact)
        if problem:
            report.failures.append({"term": print_term(term),
                                    "path": [str(lab) for lab in path], "problem": problem})
    return report


def _unwind(sem, conf, path, root, exact):
    for lab in reversed(path):
        if lab.key is None:
            return f"forward step {lab} left no history to undo"
        back = [c for l, c in sem.reverse_steps(conf)
                if l.symbol == lab.symbol and l.key == lab.key]
        if not back:
            return f"no reverse step for {lab.symbol}[{lab.key}]"
        conf = back[0]
    if conf.term != root.term:
        return f"ended at {print_term(conf.term)}"
    if q.trace_distance(conf.state, root.state) > exact:
        return "state differs from the initial state"
    return ""
