"""Command-line front end: ``qracp <subcommand> ...``.

Exit codes: 0 success or related, 1 unrelated or failing axioms, 2 truncated
state space, 64 usage or parse error, 65 unknown process name.
"""

import argparse
import json
import os
import sys
from pathlib import Path

from . import equiv, protocols, rewrite
from .config import REVERSAL_MODES, Limits, RunConfig, Tolerances
from .semantics import SemanticsError, process_lts
from .term import ParseError, parse_model, parse_term, print_model, print_term

EXIT_OK, EXIT_DIFFERENT, EXIT_TRUNCATED, EXIT_USAGE, EXIT_UNKNOWN = 0, 1, 2, 64, 65
SEED_ENV = "QRACP_SEED"
SOUNDNESS_SETS = ("E_BRQPA", "E_RQPAP", "E_ARQCP", "abstraction", "renaming", "silent-step")
REPORT_RULE = "=" * 72


class UsageError(Exception):
    pass


class UnknownProcess(LookupError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 is taken by truncation here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {n}")
    return n


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run configuration")
    g.add_argument("--seed", type=int, default=0,
                   help=f"seed for randomized suites (the {SEED_ENV} environment variable wins)")
    g.add_argument("--max-nodes", type=_positive, default=Limits.max_nodes,
                   help="node budget for state-space exploration (default %(default)s)")
    g.add_argument("--max-depth", type=_positive, default=Limits.max_depth,
                   help="depth budget for state-space exploration (default %(default)s)")
    g.add_argument("--reversal", choices=REVERSAL_MODES, default="snapshot",
                   help="how reverse steps restore the quantum state (default %(default)s)")
    g.add_argument("--intern-tol", type=float, default=Tolerances.intern,
                   help="trace distance under which two states count as equal (default %(default)s)")
    return p


def _config(args):
    seed = args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    fmt = getattr(args, "format", "text")
    return RunConfig(tolerances=Tolerances(intern=args.intern_tol),
                     limits=Limits(args.max_nodes, args.max_depth),
                     seed=seed, output_format=fmt, reversal=args.reversal)


def _load(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    return parse_model(text)


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _figures_dir(path):
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _save(fig, path):
    # no timestamp or version metadata, so reruns give identical files
    fig.savefig(path, dpi=100, metadata={"Software": None})


# --------------------------------------------------------------------------
# subcommands

def cmd_parse(args, cfg):
    model = _load(args.file)
    if cfg.output_format == "json":
        data = {
            "actions": dict(sorted(model.kinds.items())),
            "gamma": [[a, b, c] for (a, b), c in sorted(model.gamma.items())],
            "dim": model.dim,
            "specs": {name or "": [[v, print_term(t)] for v, t in spec.equations]
                      for name, spec in sorted(model.specs.items())},
        }
        sys.stdout.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    else:
        sys.stdout.write(print_model(model))
    return EXIT_OK


def _lts(model, name, cfg, mode):
    try:
        model.process(name)
    except KeyError:
        raise UnknownProcess(name) from None
    return process_lts(model, name, cfg.limits, mode, cfg.reversal, cfg.tolerances)


def cmd_lts(args, cfg):
    model = _load(args.file)
    ts = _lts(model, args.process, cfg, args.mode)
    text = ts.to_dot(_dot_name(args.process)) if cfg.output_format == "dot" else ts.dumps() + "\n"
    _emit(text, args.output)
    if ts.truncated:
        print(f"warning: exploration truncated ({ts.reason})", file=sys.stderr)
        if args.strict:
            return EXIT_TRUNCATED
    return EXIT_OK


def _dot_name(name):
    return "".join(ch if ch.isalnum() else "_" for ch in name) or "lts"


def cmd_check(args, cfg):
    model = _load(args.file)
    a = _lts(model, args.p, cfg, args.mode)
    b = _lts(model, args.q, cfg, args.mode)
    for name, ts in ((args.p, a), (args.q, b)):
        if ts.truncated:
            print(f"error: {name}: exploration truncated ({ts.reason})", file=sys.stderr)
            return EXIT_TRUNCATED
    verdict = equiv.check(a, b, args.flavor, cfg.tolerances)
    sys.stdout.write(verdict.dumps() + "\n")
    return EXIT_OK if verdict.related else EXIT_DIFFERENT


def cmd_normalize(args, cfg):
    model = _load(args.model) if args.model else None
    variables = ()
    if model is not None and model.main_spec() is not None:
        variables = model.main_spec().variables
    term = parse_term(args.term, variables)
    sets = args.set or list(rewrite.NORMALIZING)
    try:
        rules = rewrite.rules_of(sets)
    except rewrite.RewriteError as exc:
        raise UsageError(str(exc)) from None
    res = rewrite.normalize(term, rules, args.fuel, model)
    if cfg.output_format == "json":
        sys.stdout.write(json.dumps(res.to_json(), indent=2, sort_keys=True) + "\n")
    else:
        for rule, path in res.trace:
            print(f"  {rule:6} at {'.'.join(map(str, path)) or 'root'}")
        print(print_term(res.term))
    return EXIT_DIFFERENT if res.exhausted else EXIT_OK


def _soundness_figure(reports, directory):
    plt = _pyplot()
    names = [r.axiom for r in reports]
    passed = [r.passed for r in reports]
    failed = [r.failed for r in reports]
    colors = ["tab:orange" if r.finding else "tab:red" for r in reports]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.28 * len(names)), 3.6))
    xs = range(len(names))
    ax.bar(xs, passed, color="tab:green", label="pass")
    ax.bar(xs, failed, bottom=passed, color=colors, label="fail")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_ylabel("instances")
    ax.set_title("axiom soundness (orange: recorded finding)")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    path = directory / "soundness.png"
    _save(fig, path)
    plt.close(fig)
    return path


def cmd_soundness(args, cfg):
    if args.samples <= 0:
        raise UsageError("--samples must be positive")
    try:
        if args.axiom:
            rules = [rewrite.find_rule(n) for n in args.axiom]
            reports = [rewrite.soundness_check(r, args.samples, cfg.seed) for r in rules]
        else:
            reports = rewrite.soundness_suite(args.set or list(SOUNDNESS_SETS), args.samples, cfg.seed)
    except rewrite.RewriteError as exc:
        raise UsageError(str(exc)) from None
    if not args.allow_findings:
        for r in reports:
            r.finding = ""
    if cfg.output_format == "json":
        sys.stdout.write(rewrite.suite_json(reports, cfg.seed) + "\n")
    else:
        print(f"{'axiom':8} {'checker':16} {'pass':>5} {'fail':>5}  status")
        for r in reports:
            status = "ok" if r.ok else ("finding" if r.finding else "FAIL")
            print(f"{r.axiom:8} {r.flavor:16} {r.passed:5} {r.failed:5}  {status}")
        findings = [r for r in reports if not r.ok and r.finding]
        print("findings:" if findings else "findings: none")
        for r in findings:
            print(f"  {r.axiom}: {r.finding}")
    if args.figures:
        path = _soundness_figure(reports, _figures_dir(args.figures))
        print(f"figure: {path}", file=sys.stderr)
    hard = [r for r in reports if not r.ok and not r.finding]
    return EXIT_DIFFERENT if hard else EXIT_OK


def _bb84_figure(verdict, directory):
    plt = _pyplot()
    rows = verdict.state_trace
    fig, ax = plt.subplots(figsize=(5.0, 0.6 + 0.4 * max(1, len(rows))))
    if rows:
        data = [r["diagonal"] for r in rows]
        im = ax.imshow(data, aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0)
        ax.set_yticks(range(len(rows)))
        ax.set_yticklabels([r["action"] for r in rows], fontsize=8)
        ax.set_xticks(range(len(data[0])))
        ax.set_xlabel("basis state")
        fig.colorbar(im, ax=ax, label="population")
    ax.set_title(f"BB84 register along the derived chain ({verdict.binding})")
    fig.tight_layout()
    path = directory / f"bb84_{verdict.binding}.png"
    _save(fig, path)
    plt.close(fig)
    return path


def cmd_bb84(args, cfg):
    model = protocols.build_bb84(args.inputs, args.outputs, args.binding, tuple(args.omit))
    try:
        verdict = protocols.verify_bb84(model, args.schedule, args.target, cfg.tolerances)
    except protocols.CompositionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRUNCATED
    print(REPORT_RULE)
    print(f"BB84 derivation, |D_i|={args.inputs} |D_o|={args.outputs} binding={args.binding} "
          f"schedule={args.schedule} target={args.target}")
    print(REPORT_RULE)
    for line in verdict.trace:
        print(line)
    print(f"variables: {verdict.variables}  hidden steps eliminated: {verdict.eliminations}")
    if verdict.deadlocks:
        print("deadlocked variables: " + ", ".join(verdict.deadlocks))
    print("verdict: " + ("related" if verdict.related else "unrelated"))
    print(REPORT_RULE)
    text = verdict.dumps() + "\n"
    sys.stdout.write(text)
    if args.json:
        Path(args.json).write_text(text)
    if args.figures:
        path = _bb84_figure(verdict, _figures_dir(args.figures))
        print(f"figure: {path}", file=sys.stderr)
    return EXIT_OK if verdict.related else EXIT_DIFFERENT


def cmd_dump_axioms(args, cfg):
    names = args.set or None
    for n in names or ():
        if n not in rewrite.AXIOM_SETS:
            raise UsageError(f"unknown axiom set {n!r}; choose from {', '.join(rewrite.AXIOM_SETS)}")
    sys.stdout.write(rewrite.dump_axioms(names))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

def build_parser():
    common = _common()
    top = _Parser(prog="qracp", description="Reversible quantum process algebra workbench.")
    sub = top.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("parse", parents=[common], help="parse a model file and print it back",
                       description="Parse a model file; errors report line and column.")
    p.add_argument("file", help="model file")
    p.add_argument("--format", choices=("text", "json"), default="text", help="output format")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("lts", parents=[common], help="export the transition system of a process",
                       description="Explore a process and write its transition system.")
    p.add_argument("file", help="model file")
    p.add_argument("process", help="process or recursion variable name")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--dot", dest="format", action="store_const", const="dot",
                     help="Graphviz output")
    fmt.add_argument("--json", dest="format", action="store_const", const="json",
                     help="JSON output (default)")
    p.add_argument("--mode", choices=("concrete", "skeleton"), default="concrete",
                   help="configuration graph or variable graph of a linear spec")
    p.add_argument("-o", "--output", help="write to this file instead of stdout")
    p.add_argument("--strict", action="store_true", help="exit 2 when exploration is truncated")
    p.set_defaults(func=cmd_lts, format="json")

    p = sub.add_parser("check", parents=[common], help="decide FR bisimilarity of two processes",
                       description="Compare two processes; exit 0 related, 1 unrelated, 2 truncated.")
    p.add_argument("file", help="model file")
    p.add_argument("p", help="first process")
    p.add_argument("q", help="second process")
    p.add_argument("--flavor", choices=equiv.FLAVORS, default=equiv.STRONG,
                   help="equivalence to decide (default %(default)s)")
    p.add_argument("--mode", choices=("concrete", "skeleton"), default="concrete",
                   help="configuration graph or variable graph of a linear spec")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("normalize", parents=[common], help="rewrite a term to normal form",
                       description="Leftmost-innermost rewriting with the axioms, sums ordered AC.")
    p.add_argument("term", help="term text, e.g. 'a . (b + b)'")
    p.add_argument("--model", help="model file providing communication and quantum bindings")
    p.add_argument("--set", action="append", metavar="NAME",
                   help="axiom set to use (repeatable; default: all equational sets)")
    p.add_argument("--fuel", type=_positive, default=1000, help="maximum rewrite steps")
    p.add_argument("--format", choices=("text", "json"), default="text", help="output format")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("soundness", parents=[common], help="check axioms on random closed instances",
                       description="Per-axiom pass/fail table; exit 1 iff a failure is not a "
                                   "recorded finding.")
    p.add_argument("--set", action="append", metavar="NAME",
                   help="axiom set to check (repeatable; default: all closed-term tables)")
    p.add_argument("--axiom", action="append", metavar="NAME", help="single axiom (repeatable)")
    p.add_argument("--samples", type=int, default=100, help="instances per axiom (default %(default)s)")
    p.add_argument("--allow-findings", action="store_true",
                   help="treat failures of axioms with a recorded analysis as findings")
    p.add_argument("--format", choices=("text", "json"), default="text", help="output format")
    p.add_argument("--figures", metavar="DIR", help="also write a pass/fail bar chart here")
    p.set_defaults(func=cmd_soundness)

    p = sub.add_parser("bb84", parents=[common], help="derive and verify the BB84 composition",
                       description="Prints the derivation transcript, then the JSON verdict.")
    p.add_argument("--inputs", type=_positive, default=1, help="size of the input data set")
    p.add_argument("--outputs", type=_positive, default=1, help="size of the output data set")
    p.add_argument("--binding", choices=protocols.BINDINGS, default="qubit",
                   help="matrices behind the quantum operations")
    p.add_argument("--schedule", choices=protocols.SCHEDULES, default="rounds",
                   help="order of local moves in the expansion")
    p.add_argument("--target", choices=protocols.TARGETS, default="joint",
                   help="shape of the receive/send loop to compare against")
    p.add_argument("--omit", action="append", default=[], metavar="SYMBOL",
                   help="drop the communication entry producing SYMBOL (repeatable)")
    p.add_argument("--json", metavar="FILE", help="also write the JSON verdict here")
    p.add_argument("--figures", metavar="DIR", help="also plot the register populations here")
    p.set_defaults(func=cmd_bb84)

    p = sub.add_parser("dump-axioms", parents=[common], help="print the compiled-in axiom tables",
                       description="Print the axiom tables as text.")
    p.add_argument("--set", action="append", metavar="NAME", help="only this set (repeatable)")
    p.set_defaults(func=cmd_dump_axioms)
    return top


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"qracp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"{getattr(args, 'file', '<term>')}:{exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnknownProcess as exc:
        print(f"qracp: unknown process {exc.args[0]!r}", file=sys.stderr)
        return EXIT_UNKNOWN
    except SemanticsError as exc:
        print(f"qracp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
