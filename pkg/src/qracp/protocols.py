"""The BB84 key-distribution model and a machine check of its external behaviour.

Alice and Bob are guarded linear specifications over data-indexed symbols
such as ``receive_A(d1)``. :func:`derive_composition` expands the
encapsulated parallel composition into a linear specification over pairs of
their variables, and :func:`verify_bb84` hides the internal actions and
compares the result with the receive/send loop on skeleton graphs.
"""

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import equiv
from . import quantum as q
from .config import DEFAULT_TOLERANCES
from .rewrite import find_clusters, linear_skeleton
from .term import (
    CLASSICAL, DELTA, DELTA_T, QUANTUM, Abstract, Atom, Encap, Model, Parallel, RecVar,
    RecursiveSpec, Seq, check_guarded_linear, choice_of, gamma, linear_form, print_term,
)

SPEC = "bb84"
SYSTEM = "AB"

QUANTUM_OPS = ("Rand(B_a)", "Rand(K_a)", "Set(K_a)", "H(B_a)", "Rand(B_b)", "M(K_b)")
CHANNELS = (
    ("send_Q(q)", "receive_Q(q)", "c_Q(q)"),
    ("send_P(B_b)", "receive_P(B_b)", "c_P(B_b)"),
    ("send_P(B_a)", "receive_P(B_a)", "c_P(B_a)"),
)
CMP = "cmp(K_ab)"
BINDINGS = ("qubit", "two-qubit")


def base_name(symbol):
    """``receive_A(d1)`` -> ``receive_A``."""
    return symbol.split("(", 1)[0]


def inputs(n):
    return [f"receive_A(d{i})" for i in range(1, n + 1)]


def outputs(n):
    return [f"send_B(o{i})" for i in range(1, n + 1)]


def _dephase(dim, name):
    kraus = []
    for i in range(dim):
        p = np.zeros((dim, dim), dtype=complex)
        p[i, i] = 1.0
        kraus.append(p)
    return q.SuperOp(name, kraus, kind="general")


def _bind(model, binding):
    if binding == "qubit":
        ops = {
            "Rand(B_a)": _dephase(2, "Rand(B_a)"),
            "Rand(K_a)": _dephase(2, "Rand(K_a)"),
            "Set(K_a)": q.named_gate("X", "Set(K_a)"),
            "H(B_a)": q.named_gate("H", "H(B_a)"),
            "Rand(B_b)": _dephase(2, "Rand(B_b)"),
            "M(K_b)": _dephase(2, "M(K_b)"),
        }
    elif binding == "two-qubit":
        h = q.named_gate("H")
        ops = {
            "Rand(B_a)": q.embed(h, 0, 2, "Rand(B_a)"),
            "Rand(K_a)": _dephase(4, "Rand(K_a)"),
            "Set(K_a)": q.named_gate("CNOT", "Set(K_a)"),
            "H(B_a)": q.embed(h, 1, 2, "H(B_a)"),
            "Rand(B_b)": q.embed(q.named_gate("X"), 1, 2, "Rand(B_b)"),
            "M(K_b)": _dephase(4, "M(K_b)"),
        }
    else:
        raise ValueError(f"unknown binding {binding!r}; choose from {', '.join(BINDINGS)}")
    for name, op in ops.items():
        model.bind(name, op)


def _prefix(action, var):
    return Seq(Atom(action), RecVar(var, SPEC))


def build_bb84(inputs_n=1, outputs_n=1, binding="qubit", omit=()):
    """Model holding Alice (A..A8), Bob (B..B6), the channel gamma and the system term.

    ``omit`` names communication results (``c_P(B_b)`` ...) whose gamma entry
    is left out, for experiments with a broken channel. The system term
    ``abstract(I, encap(H, A || B))`` is stored as process ``AB``.
    """
    if inputs_n < 1 or outputs_n < 1:
        raise ValueError("data domains need at least one element")
    dim = 2 if binding == "qubit" else 4
    model = Model(dim=dim)
    for name in QUANTUM_OPS:
        model.declare(name, QUANTUM)
    # channel actions carry the register symbol only; they leave the state alone
    for send, recv, comm in CHANNELS:
        for s in (send, recv, comm):
            model.declare(s, CLASSICAL)
    for s in inputs(inputs_n) + outputs(outputs_n) + [CMP]:
        model.declare(s, CLASSICAL)
    for send, recv, comm in CHANNELS:
        if comm not in omit:
            model.add_gamma(send, recv, comm)
    _bind(model, binding)

    alice = [
        ("A", choice_of([_prefix(a, "A1") for a in inputs(inputs_n)])),
        ("A1", _prefix("Rand(B_a)", "A2")),
        ("A2", _prefix("Rand(K_a)", "A3")),
        ("A3", _prefix("Set(K_a)", "A4")),
        ("A4", _prefix("H(B_a)", "A5")),
        ("A5", _prefix("send_Q(q)", "A6")),
        ("A6", _prefix("receive_P(B_b)", "A7")),
        ("A7", _prefix("send_P(B_a)", "A8")),
        ("A8", _prefix(CMP, "A")),
    ]
    bob = [
        ("B", _prefix("receive_Q(q)", "B1")),
        ("B1", _prefix("Rand(B_b)", "B2")),
        ("B2", _prefix("M(K_b)", "B3")),
        ("B3", _prefix("send_P(B_b)", "B4")),
        ("B4", _prefix("receive_P(B_a)", "B5")),
        ("B5", _prefix(CMP, "B6")),
        ("B6", choice_of([_prefix(o, "B") for o in outputs(outputs_n)])),
    ]
    model.specs[SPEC] = RecursiveSpec(SPEC, tuple(alice + bob))
    hidden = frozenset(Atom(a) for a in QUANTUM_OPS + (CMP,) + tuple(c for _, _, c in CHANNELS))
    blocked = frozenset(Atom(s) for send, recv, _ in CHANNELS for s in (send, recv))
    model.processes[SYSTEM] = Abstract(hidden, Encap(blocked, Parallel(RecVar("A", SPEC),
                                                                       RecVar("B", SPEC))))
    return model


def system_sets(model):
    """``(H, I, left, right)`` read back from the stored system term."""
    t = model.processes[SYSTEM]
    if not (isinstance(t, Abstract) and isinstance(t.body, Encap)
            and isinstance(t.body.body, Parallel)):
        raise ValueError("process AB is not of the form abstract(I, encap(H, X || Y))")
    par = t.body.body
    names = lambda s: frozenset(a.name for a in s)
    return names(t.body.actions), names(t.actions), par.left.name, par.right.name


# --------------------------------------------------------------------------
# composition

SCHEDULES = ("rounds", "interleaving")


class CompositionError(RuntimeError):
    pass


@dataclass
class Composition:
    spec: RecursiveSpec
    pairs: dict                      # X_i -> (left variable, right variable)
    schedule: str
    deadlocks: list = field(default_factory=list)

    def chain(self):
        """Base names along the first summand of each equation, from X1."""
        out, v, seen = [], "X1", set()
        while v is not None and v not in seen:
            seen.add(v)
            form = linear_form(self.spec.rhs(v))
            if not form:
                break
            action, v = form[0]
            out.append(base_name(action))
        return out


def _moves(model, spec, a, b, blocked, schedule, start):
    fa, fb = linear_form(spec.rhs(a)), linear_form(spec.rhs(b))
    comms = []
    classical = lambda s: model.kinds.get(s) == CLASSICAL
    for x, ta in fa:
        for y, tb in fb:
            if not (classical(x) and classical(y)):
                continue
            g = gamma(model, x, y)
            if g != DELTA:
                comms.append((g, (ta, tb)))
    left = [(x, (ta, b)) for x, ta in fa if x not in blocked]
    right = [(y, (a, tb)) for y, tb in fb if y not in blocked]
    if schedule == "interleaving":
        return left + comms + right
    # rounds schedule: Alice starts a new round only once Bob has finished his,
    # and Alice's own steps go before synchronisations and Bob's steps
    if a == start[0] and b != start[1]:
        left = []
    return left or comms or right


def derive_composition(model, schedule="rounds", max_vars=10_000):
    """Expand ``encap(H, A || B)`` into a linear specification ``E`` over X1, X2, ...

    Each reachable pair of component variables becomes one equation, in
    breadth-first order from ``(A, B)``. A pair without moves gets the
    equation ``X = delta``.
    """
    if schedule not in SCHEDULES:
        raise ValueError(f"unknown schedule {schedule!r}")
    blocked, _, a0, b0 = system_sets(model)
    spec = model.specs[SPEC]
    names = {(a0, b0): "X1"}
    order = [(a0, b0)]
    queue = deque(order)
    equations, deadlocks = {}, []
    while queue:
        pair = queue.popleft()
        moves = _moves(model, spec, *pair, blocked, schedule, (a0, b0))
        parts = []
        for action, target in moves:
            if target not in names:
                if len(names) >= max_vars:
                    raise CompositionError(f"expansion exceeds {max_vars} variables")
                names[target] = f"X{len(names) + 1}"
                order.append(target)
                queue.append(target)
            parts.append(Seq(Atom(action), RecVar(names[target], "E")))
        if not parts:
            deadlocks.append(names[pair])
        equations[names[pair]] = choice_of(parts) if parts else DELTA_T
    spec_e = RecursiveSpec("E", tuple((names[p], equations[names[p]]) for p in order))
    return Composition(spec_e, {names[p]: p for p in order}, schedule, deadlocks)


# --------------------------------------------------------------------------
# verification

@dataclass
class BB84Verdict:
    related: bool
    sizes: tuple
    binding: str
    schedule: str
    target: str
    variables: int
    chain: list
    trace: list
    eliminations: int
    deadlocks: list
    state_trace: list
    equivalence: object

    def to_json(self):
        return {
            "related": self.related,
            "sizes": list(self.sizes),
            "binding": self.binding,
            "schedule": self.schedule,
            "target": self.target,
            "variables": self.variables,
            "chain": self.chain,
            "tau_eliminations": self.eliminations,
            "trace": self.trace,
            "deadlocks": self.deadlocks,
            "state_trace": self.state_trace,
            "equivalence": self.equivalence.to_json(),
        }

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


TARGETS = ("joint", "factored")


def target_spec(inputs_n, outputs_n, form="joint"):
    """The receive/send loop as a linear specification rooted at ``Y``.

    ``joint`` sums over input and output jointly, so the output is fixed
    when the input arrives. ``factored`` sums over outputs after the input.
    """
    ins, outs = inputs(inputs_n), outputs(outputs_n)
    if form == "joint":
        eqs = [("Y", choice_of([Seq(Atom(i), RecVar(f"Y_{j}", "T"))
                                for i in ins for j in range(len(outs))]))]
        eqs += [(f"Y_{j}", Seq(Atom(o), RecVar("Y", "T"))) for j, o in enumerate(outs)]
    elif form == "factored":
        eqs = [("Y", choice_of([Seq(Atom(i), RecVar("Z", "T")) for i in ins])),
               ("Z", choice_of([Seq(Atom(o), RecVar("Y", "T")) for o in outs]))]
    else:
        raise ValueError(f"unknown target form {form!r}")
    return RecursiveSpec("T", tuple(eqs))


def _derivation(comp, hidden):
    """Equation chain of the hidden system, one line per followed variable."""
    spec = comp.spec
    lines, eliminations = [], 0
    first = linear_form(spec.rhs("X1"))
    if not first:
        return ["tau_I(<X1|E>) = delta"], 0
    head = " + ".join(a for a, _ in first)
    v = first[0][1]
    lines.append(f"tau_I(<X1|E>) = ({head}) . tau_I(<{v}|E>)")
    seen = {"X1"}
    while v is not None and v not in seen:
        seen.add(v)
        form = linear_form(spec.rhs(v))
        if not form:
            lines.append(f"tau_I(<{v}|E>) = delta")
            break
        action, nxt = form[0]
        if all(a in hidden for a, _ in form):
            eliminations += 1
            lines.append(f"tau_I(<{v}|E>) = tau . tau_I(<{nxt}|E>) = tau_I(<{nxt}|E>)"
                         f"   [{action} in I: RQTI2, RQTI7, then RQB3 under the visible prefix]")
        else:
            alts = " + ".join(a for a, _ in form)
            lines.append(f"tau_I(<{v}|E>) = ({alts}) . tau_I(<{nxt}|E>)")
        v = nxt
    clusters = [c for c in find_clusters(spec, hidden) if not c["trivial"]]
    lines.append("CFAR: no tau-clusters" if not clusters else
                 f"CFAR: clusters {[sorted(c['cluster']) for c in clusters]}")
    return lines, eliminations


def _state_trace(model, comp, tol):
    """States along the followed chain, as rounded diagonals, for the report."""
    rho = model.initial
    out = []
    v, seen = "X1", set()
    while v is not None and v not in seen:
        seen.add(v)
        form = linear_form(comp.spec.rhs(v))
        if not form:
            break
        action, v = form[0]
        if action in model.ops:
            rho = q.apply(model.ops[action], rho, tol)
            diag = np.real(np.diag(rho.entries)).round(9) + 0.0
            out.append({"action": action, "diagonal": [float(x) for x in diag]})
    return out


def verify_bb84(model, schedule="rounds", target="joint", tol=DEFAULT_TOLERANCES):
    """Hide ``I`` in the derived specification and compare with the receive/send loop.

    Both sides are skeleton graphs with mirrored reverse edges, compared by
    rooted branching forward-reverse bisimulation.
    """
    _, hidden, _, _ = system_sets(model)
    comp = derive_composition(model, schedule)
    report = check_guarded_linear(comp.spec)
    if not (report.linear and report.guarded):
        raise CompositionError("derived specification is not guarded linear")
    n_in = sum(1 for s in model.kinds if s.startswith("receive_A("))
    n_out = sum(1 for s in model.kinds if s.startswith("send_B("))
    goal = target_spec(n_in, n_out, target)
    left = linear_skeleton("X1", comp.spec, hidden)
    right = linear_skeleton("Y", goal)
    verdict = equiv.rooted_branching_fr_bisim(left, right, tol)
    trace, eliminations = _derivation(comp, hidden)
    binding = "qubit" if model.dim == 2 else "two-qubit"
    return BB84Verdict(verdict.related, (n_in, n_out), binding, schedule, target,
                       len(comp.spec.variables), comp.chain(), trace, eliminations,
                       comp.deadlocks, _state_trace(model, comp, tol), verdict)


def describe_spec(spec):
    return [f"{v} = {print_term(t)}" for v, t in spec.equations]
