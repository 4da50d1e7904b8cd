"""Acceptance suite: one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
written straight to the terminal, bypassing output capture.
"""

import json
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from qracp import equiv as E
from qracp import protocols as P
from qracp import quantum as q
from qracp import rewrite as R
from qracp import sampling as smp
from qracp.semantics import roundtrip
from qracp.term import Encap, Rename, print_term

SEED = 0
CLOSED_TABLES = ("E_BRQPA", "E_RQPAP", "E_ARQCP", "abstraction", "renaming")
EXPECTED_CHAIN = ["receive_A", "Rand", "Rand", "Set", "H", "c_Q", "Rand", "M", "c_P", "c_P",
                  "cmp", "cmp", "send_B"]


@pytest.fixture
def say(capsys):
    def emit(number, ok, text, seconds):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {text} ({seconds:.1f} s)")
    return emit


def test_axiom_soundness(say):
    start = time.perf_counter()
    reports = R.soundness_suite(list(CLOSED_TABLES), n=100, seed=SEED)
    silent = R.soundness_suite(["silent-step"], n=100, seed=SEED)
    took = time.perf_counter() - start
    failing = [f"{r.axiom} {r.passed}/100" for r in reports if r.passed != 100]
    silent_text = ", ".join(f"{r.axiom} {r.passed}/100" for r in silent)
    ok = not failing and took < 60 and all(r.samples == 100 for r in silent)
    detail = (f"{len(reports) - len(failing)}/{len(reports)} closed-table axioms at 100/100"
              f"; below: {', '.join(failing) or 'none'}; silent-step findings: {silent_text}")
    say(1, ok, detail + "; limit 60 s", took)
    assert took < 60
    assert not failing, "axioms failing random instances: " + ", ".join(failing)


def test_reversibility(say):
    rng = smp.rng_for(SEED, "acceptance-reversibility")
    start = time.perf_counter()
    failures, paths = [], 0
    for _ in range(500):
        model = smp.random_model(rng)
        term = smp.random_term(rng, smp.ALL_ACTIONS, ("+", ".", "|", "<>", "||"), depth=3)
        wrap = int(rng.integers(0, 3))
        if wrap == 1:
            term = Encap(smp.random_action_set(rng, smp.ALL_ACTIONS), term)
        elif wrap == 2:
            term = Rename(smp.alias_mapping(rng, smp.ALL_ACTIONS), term)
        report = roundtrip(term, model, exact=1e-12)
        paths += report.paths
        if not report.ok:
            failures.append(print_term(term))
    took = time.perf_counter() - start
    ok = not failures and took < 30
    say(2, ok, f"{500 - len(failures)}/500 terms, {paths} maximal paths restored exactly "
               f"(trace distance <= 1e-12); limit 30 s", took)
    assert not failures, failures[:3]
    assert took < 30


def test_checker_oracle_agreement(say):
    rng = smp.rng_for(SEED, "acceptance-oracle")
    start = time.perf_counter()
    agree = total = 0
    for i in range(200):
        a = smp.random_system(rng, max_states=4)
        b = smp.system_variant(rng, a) if i % 4 else smp.random_system(rng, max_states=5)
        assert len(a.nodes) <= 5 and len(b.nodes) <= 5
        for flavor in E.FLAVORS:
            total += 1
            agree += E.check(a, b, flavor).related == E.brute_force_bisim(a, b, flavor).related
    took = time.perf_counter() - start
    ok = agree == total and took < 60
    say(3, ok, f"{agree}/{total} verdicts agree with the relation-enumeration oracle "
               f"(200 pairs, 3 flavors); limit 60 s", took)
    assert agree == total
    assert took < 60


def test_bb84_external_behaviour(say):
    rows, slowest = [], 0.0
    start = time.perf_counter()
    for sizes in ((1, 1), (2, 2)):
        for binding in P.BINDINGS:
            t0 = time.perf_counter()
            verdict = P.verify_bb84(P.build_bb84(*sizes, binding=binding))
            slowest = max(slowest, time.perf_counter() - t0)
            rows.append((sizes, binding, verdict))
    took = time.perf_counter() - start
    base = rows[0][2]
    shape_ok = base.variables == 13 and base.chain == EXPECTED_CHAIN
    bad = [f"{s[0]}x{s[1]}/{b}" for s, b, v in rows if not v.related]
    factored = all(P.verify_bb84(P.build_bb84(*s, binding=b), target="factored").related
                   for s, b, _ in rows)
    ok = shape_ok and not bad and slowest < 10
    say(4, ok, f"13-variable chain {'matches' if shape_ok else 'differs'}; unrelated against "
               f"the receive.send loop: {', '.join(bad) or 'none'}; factored loop related in all "
               f"runs: {factored}; slowest run {slowest:.3f} s, limit 10 s", took)
    assert shape_ok
    assert slowest < 10
    assert not bad, "verify_bb84 unrelated for " + ", ".join(bad)


def test_quantum_core(say):
    rng = smp.rng_for(SEED, "acceptance-quantum")
    start = time.perf_counter()
    physical = unitary_ok = 0
    worst_trace = 0.0
    for dim in (2, 4):
        for i in range(1000):
            kind = q.KINDS[i % 3]
            op = q.random_superop(dim, rng, kind=kind)
            rho = q.random_density(dim, rng)
            out = q.apply(op, rho).entries
            herm = np.max(np.abs(out - out.conj().T)) <= 1e-12
            pos = np.linalg.eigvalsh(out).min() >= -1e-12
            physical += bool(herm and pos)
            if kind == "unitary":
                err = abs(np.real(np.trace(out)) - rho.weight)
                worst_trace = max(worst_trace, err)
                unitary_ok += err <= 1e-12
    n_unitary = sum(1 for i in range(1000) if i % 3 == 0) * 2
    corpus = _kraus_corpus(rng, 200)
    wrong = sum(q.kraus_valid(m, trace_preserving=True) != valid for m, valid in corpus)
    took = time.perf_counter() - start
    ok = physical == 2000 and unitary_ok == n_unitary and wrong == 0
    say(5, ok, f"{physical}/2000 outputs Hermitian and positive; {unitary_ok}/{n_unitary} unitary "
               f"traces within 1e-12 (worst {worst_trace:.1e}); {wrong} misclassified of 200 "
               f"Kraus sets at threshold 1e-8", took)
    assert physical == 2000 and unitary_ok == n_unitary and wrong == 0


def _kraus_corpus(rng, n):
    out = []
    for i in range(n):
        dim = (2, 4)[i % 2]
        mats = q.random_kraus(dim, int(rng.integers(1, 4)), rng)
        if i % 2:
            out.append((mats, True))
        else:
            # scaling by sqrt(1 + delta) makes the Kraus sum exactly (1 + delta) I
            delta = float(10 ** rng.uniform(-7.9, -1)) * (1 if i % 4 else -1)
            out.append(([np.sqrt(1 + delta) * m for m in mats], False))
    return out


def test_congruence_probes(say):
    start = time.perf_counter()
    counts = {}
    for flavor in (E.STRONG, E.ROOTED):
        for context in E.PROBE_CONTEXTS:
            report = E.congruence_probe(flavor, context, samples=100, seed=SEED)
            counts[(flavor, context)] = len(report.violations)
    took = time.perf_counter() - start
    strong = sum(v for (f, _), v in counts.items() if f == E.STRONG)
    rooted = sum(v for (f, _), v in counts.items() if f == E.ROOTED)
    ok = strong == 0 and rooted == 0
    say(6, ok, f"{len(E.PROBE_CONTEXTS)} contexts x 100 related pairs; strong violations {strong}, "
               f"rooted-branching violations {rooted}", took)
    assert strong == 0
    assert rooted == 0


def _cli(*argv):
    env = dict(os.environ, QRACP_SEED=str(SEED))
    return subprocess.Popen([sys.executable, "-m", "qracp.cli", *argv], stdout=subprocess.PIPE,
                            stderr=subprocess.PIPE, env=env)


def test_determinism(say):
    start = time.perf_counter()
    soundness = ["soundness", "--allow-findings", "--format", "json", "--samples", "100"]
    bb84 = ["bb84", "--inputs", "2", "--outputs", "2", "--binding", "two-qubit"]
    procs = [_cli(*soundness), _cli(*soundness), _cli(*bb84), _cli(*bb84)]
    outs = [p.communicate()[0] for p in procs]
    took = time.perf_counter() - start
    same_soundness = outs[0] == outs[1] and len(outs[0]) > 0
    same_bb84 = outs[2] == outs[3] and len(outs[2]) > 0
    axioms = len(json.loads(outs[0])["axioms"]) if same_soundness else 0
    say(7, same_soundness and same_bb84,
        f"soundness report ({axioms} axioms, {len(outs[0])} bytes) identical: {same_soundness}; "
        f"BB84 report identical: {same_bb84}", took)
    assert same_soundness and same_bb84
