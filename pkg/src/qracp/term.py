"""Process terms, recursive specifications and the model file language.

Concrete syntax of terms (loosest binding first)::

    t ::= t + t                      choice
        | t || t | t '|' t | t <> t  parallel, static parallel, communication merge
        | t . t                      sequential composition
        | encap({a, b[1]}, t) | abstract({a}, t) | rename({a -> b}, t)
        | sum(d in {v1, v2}, t)      finite sum, expanded while parsing
        | a | a[3] | a(v) | delta | tau | X | X@E | ( t )

All binary operators associate to the left.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .quantum import DensityMatrix, QuantumError, SuperOp, basis_state, named_gate

DELTA = "delta"
TAU = "tau"
RESERVED = {DELTA, TAU}
KEYWORDS = {"encap", "abstract", "rename", "sum", "in", "tick"}

QUANTUM = "quantum-op"
CLASSICAL = "classical"
SILENT = "silent"
DEADLOCK = "deadlock"


class ParseError(ValueError):
    def __init__(self, message, line=0, column=0, kind="syntax"):
        self.message = message
        self.line = line
        self.column = column
        self.kind = kind
        super().__init__(f"{line}:{column}: {kind} error: {message}")


# --------------------------------------------------------------------------
# terms

class Term:
    """Base class for immutable process terms (hash is cached)."""

    __slots__ = ()

    def __hash__(self):
        try:
            return object.__getattribute__(self, "_h")
        except AttributeError:
            h = hash((type(self).__name__,) + self._fields())
            object.__setattr__(self, "_h", h)
            return h

    def _fields(self):
        return tuple(getattr(self, f) for f in self.__dataclass_fields__)

    def __str__(self):
        return print_term(self)


@dataclass(frozen=True, eq=True, repr=False)
class Atom(Term):
    name: str

    def __repr__(self):
        return f"Atom({self.name})"


@dataclass(frozen=True, eq=True, repr=False)
class History(Term):
    name: str
    key: int

    def __post_init__(self):
        if self.name in RESERVED:
            raise ValueError("histories never wrap delta or tau")
        if self.key < 1:
            raise ValueError("history keys are positive")

    def __repr__(self):
        return f"History({self.name},{self.key})"


@dataclass(frozen=True, eq=True, repr=False)
class Terminated(Term):
    def __repr__(self):
        return "Terminated()"


@dataclass(frozen=True, eq=True, repr=False)
class Binary(Term):
    left: Term
    right: Term

    def __repr__(self):
        return f"{type(self).__name__}({self.left!r}, {self.right!r})"


class Choice(Binary):
    pass


class Seq(Binary):
    pass


class Parallel(Binary):
    pass


class StaticPar(Binary):
    pass


class CommMerge(Binary):
    pass


for _cls in (Choice, Seq, Parallel, StaticPar, CommMerge):
    dataclass(frozen=True, eq=True, repr=False)(_cls)


@dataclass(frozen=True, eq=True, repr=False)
class Encap(Term):
    actions: frozenset
    body: Term

    def __repr__(self):
        return f"Encap({_set_text(self.actions)}, {self.body!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Abstract(Term):
    actions: frozenset
    body: Term

    def __repr__(self):
        return f"Abstract({_set_text(self.actions)}, {self.body!r})"


@dataclass(frozen=True, eq=True, repr=False)
class Rename(Term):
    mapping: tuple  # sorted (source, target) pairs
    body: Term

    def __post_init__(self):
        object.__setattr__(self, "mapping", tuple(sorted(dict(self.mapping).items())))

    def apply(self, name):
        for src, dst in self.mapping:
            if src == name:
                return dst
        return name

    def __repr__(self):
        return f"Rename({_map_text(self.mapping)}, {self.body!r})"


@dataclass(frozen=True, eq=True, repr=False)
class RecVar(Term):
    name: str
    spec: str = ""

    def __repr__(self):
        return f"RecVar({self.name}@{self.spec})" if self.spec else f"RecVar({self.name})"


for _cls in (Atom, History, Terminated, Binary, Choice, Seq, Parallel, StaticPar, CommMerge,
             Encap, Abstract, Rename, RecVar):
    _cls.__hash__ = Term.__hash__

DELTA_T = Atom(DELTA)
TAU_T = Atom(TAU)
TICK = Terminated()

BINARY_OPS = {Choice: "+", Parallel: "||", StaticPar: "|", CommMerge: "<>", Seq: "."}
_LEVEL = {Choice: 1, Parallel: 2, StaticPar: 2, CommMerge: 2, Seq: 3}


def choice_of(terms):
    """Left-nested sum; the empty sum is deadlock."""
    terms = list(terms)
    if not terms:
        return DELTA_T
    out = terms[0]
    for t in terms[1:]:
        out = Choice(out, t)
    return out


def seq_of(terms):
    terms = list(terms)
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = Seq(t, out)
    return out


def subterms(t):
    """Pre-order iteration over ``t`` without entering recursion bodies."""
    stack = [t]
    while stack:
        s = stack.pop()
        yield s
        if isinstance(s, Binary):
            stack.append(s.right)
            stack.append(s.left)
        elif isinstance(s, (Encap, Abstract, Rename)):
            stack.append(s.body)


def occurs(s, t):
    """Syntactic occurrence of a plain symbol or a history in ``t``.

    ``s`` may be a string, an :class:`Atom` or a :class:`History`. Plain
    symbols match atom leaves only; histories match exactly. Below a
    renaming a leaf also occurs under its renamed symbol.
    """
    if isinstance(s, str):
        s = Atom(s)
    return _occurs(s, t, ())


def _occurs(s, t, maps):
    if isinstance(t, (Atom, History)):
        if t == s:
            return True
        name = t.name
        for mapping in maps:
            name = dict(mapping).get(name, name)
        return name != t.name and type(t)(name, *([t.key] if isinstance(t, History) else [])) == s
    if isinstance(t, Binary):
        return _occurs(s, t.left, maps) or _occurs(s, t.right, maps)
    if isinstance(t, Rename):
        return _occurs(s, t.body, (t.mapping,) + maps)
    if isinstance(t, (Encap, Abstract)):
        return _occurs(s, t.body, maps)
    return False


def atoms_of(t):
    return {u.name for u in subterms(t) if isinstance(u, (Atom, History))}


def history_keys(t):
    return {u.key for u in subterms(t) if isinstance(u, History)}


def histories(t):
    return [u for u in subterms(t) if isinstance(u, History)]


def is_history_free(t):
    return not any(isinstance(u, History) for u in subterms(t))


def is_history_complete(t):
    """True when ``t`` is fully executed.

    Every action leaf must have become a history. A deadlock summand beside
    an executed summand was simply not chosen and does not hold completion
    back; deadlock on its own never completes.
    """
    if isinstance(t, (History, Terminated)):
        return True
    if isinstance(t, Choice):
        parts = [u for u in (t.left, t.right) if not _only_deadlock(u)]
        return bool(parts) and all(is_history_complete(u) for u in parts)
    if isinstance(t, Binary):
        return is_history_complete(t.left) and is_history_complete(t.right)
    if isinstance(t, (Encap, Abstract, Rename)):
        return is_history_complete(t.body)
    return False


def _only_deadlock(t):
    return all(isinstance(u, Atom) and u.name == DELTA
               for u in subterms(t) if not isinstance(u, (Binary, Encap, Abstract, Rename)))


def map_leaves(t, fn):
    """Rebuild ``t`` bottom-up, replacing leaves with ``fn(leaf)``."""
    if isinstance(t, Binary):
        return type(t)(map_leaves(t.left, fn), map_leaves(t.right, fn))
    if isinstance(t, (Encap, Abstract)):
        return type(t)(t.actions, map_leaves(t.body, fn))
    if isinstance(t, Rename):
        return Rename(t.mapping, map_leaves(t.body, fn))
    return fn(t)


def term_size(t):
    return sum(1 for _ in subterms(t))


def term_depth(t):
    if isinstance(t, Binary):
        return 1 + max(term_depth(t.left), term_depth(t.right))
    if isinstance(t, (Encap, Abstract, Rename)):
        return 1 + term_depth(t.body)
    return 0


# --------------------------------------------------------------------------
# printing

def _leaf_text(t):
    if isinstance(t, History):
        return f"{t.name}[{t.key}]"
    return t.name


def _set_text(actions):
    return "{" + ", ".join(sorted(_leaf_text(a) for a in actions)) + "}"


def _map_text(mapping):
    return "{" + ", ".join(f"{a} -> {b}" for a, b in mapping) + "}"


def print_term(t):
    """Render ``t`` in the concrete syntax with minimal parentheses."""
    return _print(t, 0)


def _print(t, ctx):
    if isinstance(t, Atom):
        return t.name
    if isinstance(t, History):
        return f"{t.name}[{t.key}]"
    if isinstance(t, Terminated):
        return "tick"
    if isinstance(t, RecVar):
        return f"{t.name}@{t.spec}" if t.spec else t.name
    if isinstance(t, Encap):
        return f"encap({_set_text(t.actions)}, {_print(t.body, 0)})"
    if isinstance(t, Abstract):
        return f"abstract({_set_text(t.actions)}, {_print(t.body, 0)})"
    if isinstance(t, Rename):
        return f"rename({_map_text(t.mapping)}, {_print(t.body, 0)})"
    level = _LEVEL[type(t)]
    sym = BINARY_OPS[type(t)]
    text = f"{_print(t.left, level)} {sym} {_print(t.right, level + 1)}"
    return f"({text})" if level < ctx else text


# --------------------------------------------------------------------------
# recursive specifications

@dataclass(frozen=True)
class RecursiveSpec:
    name: str
    equations: tuple  # ordered (variable, rhs) pairs

    def __post_init__(self):
        seen = set()
        for v, _ in self.equations:
            if v in seen:
                raise ValueError(f"duplicate recursion variable {v}")
            seen.add(v)

    @property
    def variables(self):
        return [v for v, _ in self.equations]

    def rhs(self, var):
        for v, t in self.equations:
            if v == var:
                return t
        raise KeyError(f"variable {var!r} not defined in spec {self.name!r}")

    def __contains__(self, var):
        return any(v == var for v, _ in self.equations)


@dataclass
class LinearityReport:
    linear: bool
    guarded: bool
    diagnostics: list = field(default_factory=list)


def _linear_summands(rhs):
    """Split a right-hand side into summands; None if not of linear shape."""
    out = []
    stack = [rhs]
    while stack:
        s = stack.pop()
        if isinstance(s, Choice):
            stack.append(s.right)
            stack.append(s.left)
        else:
            out.append(s)
    return out


def linear_form(rhs, spec_name=""):
    """Return ``[(action, var-or-None), ...]`` or raise ValueError."""
    if rhs == DELTA_T:
        return []
    pairs = []
    for s in _linear_summands(rhs):
        if isinstance(s, Atom):
            if s.name == DELTA:
                continue
            pairs.append((s.name, None))
        elif isinstance(s, Seq) and isinstance(s.left, Atom) and isinstance(s.right, RecVar) \
                and s.left.name != DELTA:
            pairs.append((s.left.name, s.right.name))
        else:
            raise ValueError(f"summand {print_term(s)!r} is not an action or action.variable")
    return pairs


def check_guarded_linear(spec, silent=frozenset({TAU})):
    """Decide linearity and guardedness of ``spec``.

    Guardedness is acyclicity of the graph whose edges are the silent
    summands ``tau . Y`` of each equation.
    """
    diagnostics = []
    forms = {}
    linear = True
    for v, rhs in spec.equations:
        try:
            forms[v] = linear_form(rhs)
        except ValueError as exc:
            linear = False
            diagnostics.append(f"{v} = {print_term(rhs)}: {exc}")
    graph = {v: [w for a, w in forms.get(v, []) if a in silent and w is not None]
             for v in spec.variables}
    cycle = _find_cycle(graph)
    guarded = cycle is None
    if cycle:
        diagnostics.append("silent cycle: " + " -> ".join(cycle))
    if not linear:
        # fall back to a syntactic silent-guard check on non-linear equations
        for v, rhs in spec.equations:
            if v not in forms and _unguarded_silent(rhs):
                guarded = False
    return LinearityReport(linear, guarded, diagnostics)


def _unguarded_silent(rhs):
    for s in _linear_summands(rhs):
        if isinstance(s, RecVar):
            return True
    return False


def _find_cycle(graph):
    color = {}
    path = []

    def visit(v):
        color[v] = 1
        path.append(v)
        for w in graph.get(v, []):
            if color.get(w) == 1:
                return path[path.index(w):] + [w]
            if w not in color:
                found = visit(w)
                if found:
                    return found
        path.pop()
        color[v] = 2
        return None

    for v in graph:
        if v not in color:
            found = visit(v)
            if found:
                return found
    return None


# --------------------------------------------------------------------------
# model

@dataclass
class Model:
    kinds: dict = field(default_factory=dict)          # symbol -> kind
    gamma: dict = field(default_factory=dict)          # (sym, sym) -> sym
    ops: dict = field(default_factory=dict)            # symbol -> SuperOp
    processes: dict = field(default_factory=dict)      # name -> term
    specs: dict = field(default_factory=dict)          # spec name -> RecursiveSpec
    dim: int = 2
    initial: object = None                             # DensityMatrix

    def __post_init__(self):
        self.kinds.setdefault(DELTA, DEADLOCK)
        self.kinds.setdefault(TAU, SILENT)
        if self.initial is None:
            self.initial = basis_state(self.dim)

    def kind(self, symbol):
        try:
            return self.kinds[symbol]
        except KeyError:
            raise KeyError(f"undeclared action {symbol!r}") from None

    def is_quantum(self, symbol):
        return self.kinds.get(symbol) == QUANTUM

    def declare(self, symbol, kind):
        if symbol in RESERVED:
            raise ValueError(f"{symbol!r} is reserved")
        self.kinds[symbol] = kind

    def bind(self, symbol, op):
        if op.dim != self.dim:
            raise QuantumError(f"operation {symbol!r} has dimension {op.dim}, model has {self.dim}")
        self.ops[symbol] = op

    def add_gamma(self, a, b, c):
        for s in (a, b):
            if self.kinds.get(s) != CLASSICAL:
                raise ValueError(f"communication entries need classical actions, got {s!r}")
        if self.kinds.get(c) != CLASSICAL:
            raise ValueError(f"communication result {c!r} must be a classical action")
        self.gamma[(a, b)] = c

    def recursion_rhs(self, var):
        spec = self.specs.get(var.spec)
        if spec is None:
            raise KeyError(f"no recursive specification {var.spec!r}")
        return spec.rhs(var.name)

    def main_spec(self):
        return self.specs.get("")

    def process(self, name):
        if name in self.processes:
            return self.processes[name]
        for sname, spec in self.specs.items():
            if name in spec:
                return RecVar(name, sname)
        raise KeyError(name)

    def copy(self):
        return Model(dict(self.kinds), dict(self.gamma), dict(self.ops), dict(self.processes),
                     dict(self.specs), self.dim, self.initial)


def gamma(model, a, b):
    """Communication lookup; undefined pairs yield ``delta``."""
    for s in (a, b):
        k = model.kinds.get(s)
        if k is None:
            raise KeyError(f"undeclared action {s!r}")
        if k != CLASSICAL:
            raise ValueError(f"{s!r} is not a communicating action")
    # communication is commutative: an entry for (a, b) also serves (b, a)
    return model.gamma.get((a, b), model.gamma.get((b, a), DELTA))


# --------------------------------------------------------------------------
# lexer and parser

_TOKEN = re.compile(r"""
    (?P<ws>[ \t]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>-?\d+(\.\d*)?([eE][-+]?\d+)?)
  | (?P<op>\|\||<>|->|[+.|(){}\[\],=:@*])
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
""", re.VERBOSE)


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text):
    toks = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            toks.append(Tok("nl", s, line, col))
            line, col = line + 1, 1
        else:
            if kind not in ("ws", "comment"):
                toks.append(Tok(kind, s, line, col))
            col += len(s)
        pos = m.end()
    toks.append(Tok("eof", "", line, col))
    return toks


class _TermParser:
    """Recursive-descent parser over one logical line of tokens."""

    def __init__(self, toks, resolve, allow_tick=False):
        self.toks = toks
        self.i = 0
        self.resolve = resolve
        self.allow_tick = allow_tick
        self.bindings = {}

    def peek(self, k=0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        t = self.peek()
        self.i += 1
        return t

    def expect(self, text):
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.line, t.col)
        return t

    def at(self, text):
        return self.peek().text == text

    def parse(self):
        t = self.choice()
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col)
        return t

    def choice(self):
        t = self.par()
        while self.at("+"):
            self.next()
            t = Choice(t, self.par())
        return t

    def par(self):
        t = self.seq()
        while self.peek().text in ("||", "|", "<>"):
            op = self.next().text
            cls = {"||": Parallel, "|": StaticPar, "<>": CommMerge}[op]
            t = cls(t, self.seq())
        return t

    def seq(self):
        t = self.primary()
        while self.at("."):
            self.next()
            t = Seq(t, self.primary())
        return t

    def symbol(self):
        """identifier with optional glued data index: ``name(v)``."""
        tok = self.next()
        if tok.kind != "ident":
            raise ParseError(f"expected identifier, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        name = tok.text
        nxt = self.peek()
        if nxt.text == "(" and nxt.line == tok.line and nxt.col == tok.col + len(tok.text) \
                and name not in KEYWORDS:
            self.next()
            args = [self._index_arg()]
            while self.at(","):
                self.next()
                args.append(self._index_arg())
            self.expect(")")
            name = f"{name}({','.join(args)})"
        return name, tok

    def _index_arg(self):
        tok = self.next()
        if tok.kind not in ("ident", "num"):
            raise ParseError("expected data value", tok.line, tok.col)
        return self.bindings.get(tok.text, tok.text)

    def action_set(self):
        self.expect("{")
        items = set()
        if not self.at("}"):
            while True:
                name, tok = self.symbol()
                if self.at("["):
                    self.next()
                    k = self.next()
                    if k.kind != "num":
                        raise ParseError("expected history key", k.line, k.col)
                    self.expect("]")
                    items.add(History(name, int(k.text)))
                else:
                    self.resolve(name, tok, want_action=True)
                    items.add(Atom(name))
                if not self.at(","):
                    break
                self.next()
        self.expect("}")
        return frozenset(items)

    def mapping(self):
        self.expect("{")
        pairs = []
        if not self.at("}"):
            while True:
                a, ta = self.symbol()
                self.expect("->")
                b, tb = self.symbol()
                self.resolve(a, ta, want_action=True)
                self.resolve(b, tb, want_action=True)
                pairs.append((a, b))
                if not self.at(","):
                    break
                self.next()
        self.expect("}")
        return tuple(pairs)

    def primary(self):
        tok = self.peek()
        if tok.text == "(":
            self.next()
            t = self.choice()
            self.expect(")")
            return t
        if tok.kind != "ident":
            raise ParseError(f"unexpected {tok.text or 'end of input'!r}", tok.line, tok.col)
        if tok.text in ("encap", "abstract") and self.peek(1).text == "(":
            self.next()
            self.expect("(")
            acts = self.action_set()
            self.expect(",")
            body = self.choice()
            self.expect(")")
            return (Encap if tok.text == "encap" else Abstract)(acts, body)
        if tok.text == "rename" and self.peek(1).text == "(":
            self.next()
            self.expect("(")
            mp = self.mapping()
            self.expect(",")
            body = self.choice()
            self.expect(")")
            return Rename(mp, body)
        if tok.text == "sum" and self.peek(1).text == "(":
            return self.sum_expr()
        if tok.text == "tick":
            if not self.allow_tick:
                raise ParseError("termination marker is not allowed in source terms", tok.line, tok.col)
            self.next()
            return TICK
        name, ntok = self.symbol()
        if self.at("["):
            self.next()
            k = self.next()
            if k.kind != "num" or "." in k.text or int(k.text) < 1:
                raise ParseError("history key must be a positive integer", k.line, k.col)
            self.expect("]")
            if name in RESERVED:
                raise ParseError(f"{name} cannot carry a history", ntok.line, ntok.col)
            self.resolve(name, ntok, want_action=True)
            return History(name, int(k.text))
        if self.at("@"):
            self.next()
            sname, stok = self.symbol()
            return RecVar(name, sname)
        return self.resolve(name, ntok)

    def sum_expr(self):
        self.next()
        self.expect("(")
        var = self.next()
        if var.kind != "ident":
            raise ParseError("expected summation variable", var.line, var.col)
        self.expect("in")
        self.expect("{")
        values = []
        while not self.at("}"):
            v = self.next()
            if v.kind not in ("ident", "num"):
                raise ParseError("expected data value", v.line, v.col)
            values.append(v.text)
            if self.at(","):
                self.next()
        self.expect("}")
        self.expect(",")
        start = self.i
        summands = []
        for v in values:
            self.i = start
            saved = dict(self.bindings)
            self.bindings[var.text] = v
            summands.append(self.choice())
            self.bindings = saved
        if not values:
            self.i = start
            self._skip_balanced()
        self.expect(")")
        return choice_of(summands)

    def _skip_balanced(self):
        depth = 0
        while True:
            t = self.peek()
            if t.kind == "eof" or (depth == 0 and t.text == ")"):
                return
            if t.text in "({[":
                depth += 1
            elif t.text in ")}]":
                depth -= 1
            self.next()


def _free_resolver(variables=(), spec=""):
    variables = set(variables)

    def resolve(name, tok, want_action=False):
        if name in variables and not want_action:
            return RecVar(name, spec)
        return Atom(name)
    return resolve


def parse_term(text, variables=(), spec="", allow_tick=True):
    """Parse a standalone term; identifiers in ``variables`` become recursion variables."""
    toks = [t for t in tokenize(text) if t.kind != "nl"]
    return _TermParser(toks, _free_resolver(variables, spec), allow_tick=allow_tick).parse()


# model files ---------------------------------------------------------------

_SECTIONS = ("actions", "gamma", "quantum", "process", "spec")


def _logical_lines(toks):
    """Group tokens into lines; a line continues while brackets are open."""
    lines, cur, depth = [], [], 0
    for t in toks:
        if t.kind == "eof":
            break
        if t.kind == "nl":
            if depth > 0:
                continue
            if cur:
                lines.append(cur)
                cur = []
            continue
        if t.text in "([{":
            depth += 1
        elif t.text in ")]}":
            depth -= 1
        cur.append(t)
    if cur:
        lines.append(cur)
    return lines


def _eof_after(line):
    last = line[-1]
    return line + [Tok("eof", "", last.line, last.col + len(last.text))]


def parse_model(text):
    """Parse a model file into a :class:`Model`; raise :class:`ParseError`."""
    lines = _logical_lines(tokenize(text))
    model = Model()
    section = None
    spec_name = None
    raw_processes = []   # (spec, name, tokens, name-token)
    quantum_lines = []
    gamma_lines = []
    for line in lines:
        head = line[0]
        if head.kind == "ident" and head.text in _SECTIONS and (
                (len(line) == 2 and line[1].text == ":")
                or (head.text == "spec" and len(line) == 3 and line[2].text == ":")):
            section = head.text
            if section == "spec":
                if len(line) != 3 or line[1].kind != "ident":
                    raise ParseError("expected 'spec NAME:'", head.line, head.col)
                spec_name = line[1].text
                if spec_name in model.specs:
                    raise ParseError(f"duplicate spec {spec_name!r}", head.line, head.col, "duplicate")
                model.specs[spec_name] = None
            continue
        if section is None:
            raise ParseError("content outside of a section", head.line, head.col)
        if section == "actions":
            _parse_action_decl(line, model)
        elif section == "gamma":
            gamma_lines.append(line)
        elif section == "quantum":
            quantum_lines.append(line)
        elif section in ("process", "spec"):
            if len(line) < 3 or line[0].kind != "ident" or line[1].text != "=":
                raise ParseError("expected 'NAME = term'", head.line, head.col)
            owner = "" if section == "process" else spec_name
            raw_processes.append((owner, head.text, line[2:], head))
    for line in quantum_lines:
        _parse_quantum_line(line, model)
    for line in gamma_lines:
        _parse_gamma_line(line, model)
    _build_processes(model, raw_processes)
    for sym, kind in model.kinds.items():
        if kind == QUANTUM and sym not in model.ops:
            raise ParseError(f"quantum operation {sym!r} has no binding", 0, 0, "undefined symbol")
    return model


def _parse_action_decl(line, model):
    head = line[0]
    kinds = {"quantum": QUANTUM, "classical": CLASSICAL}
    if head.text not in kinds:
        raise ParseError("expected 'quantum' or 'classical' declaration", head.line, head.col)
    p = _TermParser(_eof_after(line[1:]), None)
    while p.peek().kind != "eof":
        name, tok = p.symbol()
        if name in RESERVED or name in KEYWORDS:
            raise ParseError(f"{name!r} is reserved", tok.line, tok.col)
        if "(" in name and "{" in name:
            raise ParseError("bad data index", tok.line, tok.col)
        model.kinds[name] = kinds[head.text]
        if p.at(","):
            p.next()
        elif p.peek().kind != "eof":
            t = p.peek()
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col)


def _parse_gamma_line(line, model):
    p = _TermParser(_eof_after(line), None)
    a, ta = p.symbol()
    p.expect(",")
    b, tb = p.symbol()
    p.expect("->")
    c, tc = p.symbol()
    if p.peek().kind != "eof":
        t = p.peek()
        raise ParseError(f"unexpected {t.text!r}", t.line, t.col)
    for s, tok in ((a, ta), (b, tb), (c, tc)):
        if s not in model.kinds:
            raise ParseError(f"undefined symbol {s!r}", tok.line, tok.col, "undefined symbol")
        if model.kinds[s] == QUANTUM:
            raise ParseError(f"communication entry references quantum operation {s!r}",
                             tok.line, tok.col, "gamma")
    model.gamma[(a, b)] = c


def _parse_number(p):
    tok = p.next()
    if tok.kind != "num":
        raise ParseError("expected number", tok.line, tok.col)
    return float(tok.text)


def _parse_matrix(p):
    rows = []
    p.expect("[")
    while True:
        p.expect("[")
        row = []
        while True:
            p.expect("(")
            re_ = _parse_number(p)
            p.expect(",")
            im = _parse_number(p)
            p.expect(")")
            row.append(complex(re_, im))
            if not p.at(","):
                break
            p.next()
        p.expect("]")
        rows.append(row)
        if not p.at(","):
            break
        p.next()
    p.expect("]")
    if any(len(r) != len(rows) for r in rows):
        t = p.peek()
        raise ParseError("matrix literal must be square", t.line, t.col)
    return np.array(rows, dtype=complex)


def _parse_quantum_line(line, model):
    head = line[0]
    p = _TermParser(_eof_after(line), None)
    if head.text == "dim":
        p.next()
        n = _parse_number(p)
        model.dim = int(n)
        model.initial = basis_state(model.dim)
        return
    name, tok = p.symbol()
    p.expect("=")
    try:
        if name == "init":
            if p.at("["):
                model.initial = DensityMatrix(_parse_matrix(p))
            else:
                word = p.next().text
                if word == "mixed":
                    model.initial = DensityMatrix(np.eye(model.dim) / model.dim)
                elif word == "zero":
                    model.initial = basis_state(model.dim)
                else:
                    raise ParseError(f"unknown initial state {word!r}", tok.line, tok.col)
            return
        if name not in model.kinds:
            raise ParseError(f"undefined symbol {name!r}", tok.line, tok.col, "undefined symbol")
        if model.kinds[name] != QUANTUM:
            raise ParseError(f"{name!r} is not declared as a quantum operation", tok.line, tok.col)
        kraus = []
        if p.peek().kind == "ident" and p.peek().text == "kraus":
            p.next()
            p.expect("(")
            kraus.append(_parse_matrix(p))
            while p.at(","):
                p.next()
                kraus.append(_parse_matrix(p))
            p.expect(")")
        elif p.at("["):
            kraus.append(_parse_matrix(p))
        else:
            g = p.next()
            if g.text not in ("I", "X", "Z", "H", "CNOT"):
                raise ParseError(f"unknown gate {g.text!r}", g.line, g.col)
            kraus.append(named_gate(g.text).kraus[0])
        kind, reverse = None, None
        while p.peek().kind == "ident":
            w = p.next()
            if w.text in ("unitary", "branch", "general"):
                kind = "measurement-branch" if w.text == "branch" else w.text
            elif w.text == "reverse":
                r, rt = p.symbol()
                if r not in model.ops:
                    raise ParseError(f"reverse {r!r} must be bound earlier", rt.line, rt.col,
                                     "undefined symbol")
                reverse = model.ops[r]
            else:
                raise ParseError(f"unexpected {w.text!r}", w.line, w.col)
        if p.peek().kind != "eof":
            t = p.peek()
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col)
        if kind is None:
            u = kraus[0]
            kind = "unitary" if len(kraus) == 1 and np.allclose(u.conj().T @ u, np.eye(len(u))) \
                else "general"
        op = SuperOp(name, kraus, kind=kind, reverse=reverse)
        model.bind(name, op)
    except QuantumError as exc:
        raise ParseError(str(exc), tok.line, tok.col, "quantum") from None


def _build_processes(model, raw):
    scopes = {}
    for owner, name, _, tok in raw:
        names = scopes.setdefault(owner, set())
        if name in names:
            raise ParseError(f"duplicate recursion variable {name!r}", tok.line, tok.col, "duplicate")
        if name in model.kinds:
            raise ParseError(f"{name!r} is already declared as an action", tok.line, tok.col, "duplicate")
        names.add(name)
    equations = {}
    for owner, name, toks, tok in raw:
        local = scopes[owner]
        top = scopes.get("", set())

        def resolve(sym, stok, want_action=False, local=local, owner=owner, top=top):
            if sym in model.kinds and not (sym in local and not want_action):
                return Atom(sym)
            if not want_action:
                if sym in local:
                    return RecVar(sym, owner)
                if sym in top:
                    return RecVar(sym, "")
            raise ParseError(f"undefined symbol {sym!r}", stok.line, stok.col, "undefined symbol")

        term = _TermParser(_eof_after(toks), resolve).parse()
        equations.setdefault(owner, []).append((name, term))
    for owner, eqs in equations.items():
        model.specs[owner] = RecursiveSpec(owner, tuple(eqs))
    for sname in list(model.specs):
        if model.specs[sname] is None:
            model.specs[sname] = RecursiveSpec(sname, ())
    main = model.specs.get("")
    if main is not None:
        for v, _ in main.equations:
            model.processes[v] = RecVar(v, "")
    # references to other specs must name defined variables
    for owner, eqs in equations.items():
        for _, t in eqs:
            for u in subterms(t):
                if isinstance(u, RecVar):
                    sp = model.specs.get(u.spec)
                    if sp is None or u.name not in sp:
                        raise ParseError(f"undefined recursion variable {u.name}@{u.spec}", 0, 0,
                                         "undefined symbol")


def print_model(model):
    """Render a model back to the file language (matrices as literals)."""
    out = ["actions:"]
    q = sorted(s for s, k in model.kinds.items() if k == QUANTUM)
    c = sorted(s for s, k in model.kinds.items() if k == CLASSICAL)
    if q:
        out.append("  quantum " + ", ".join(q))
    if c:
        out.append("  classical " + ", ".join(c))
    if model.gamma:
        out.append("gamma:")
        for (a, b), r in sorted(model.gamma.items()):
            out.append(f"  {a}, {b} -> {r}")
    out.append("quantum:")
    out.append(f"  dim {model.dim}")
    for name in sorted(model.ops):
        op = model.ops[name]
        mats = ", ".join(_matrix_text(k) for k in op.kraus)
        kind = {"measurement-branch": "branch"}.get(op.kind, op.kind)
        out.append(f"  {name} = kraus({mats}) {kind}")
    for sname, spec in model.specs.items():
        out.append("process:" if sname == "" else f"spec {sname}:")
        for v, t in spec.equations:
            out.append(f"  {v} = {print_term(t)}")
    return "\n".join(out) + "\n"


def _matrix_text(m):
    rows = ["[" + ", ".join(f"({float(z.real)!r}, {float(z.imag)!r})" for z in row) + "]" for row in m]
    return "[" + ", ".join(rows) + "]"
