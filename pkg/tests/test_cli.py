import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from qracp import cli

GOLDEN = Path(__file__).parent / "golden"
COMMANDS = ["parse", "lts", "check", "normalize", "soundness", "bb84", "dump-axioms"]


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def help_text(command, capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    with pytest.raises(SystemExit) as done:
        cli.main([command, "--help"] if command else ["--help"])
    assert done.value.code == 0
    return capsys.readouterr().out


@pytest.mark.parametrize("command", [""] + COMMANDS)
def test_help_matches_golden_file(command, capsys, monkeypatch):
    text = help_text(command, capsys, monkeypatch)
    golden = GOLDEN / f"help_{command or 'qracp'}.txt"
    assert text == golden.read_text()


@pytest.mark.parametrize("command", COMMANDS)
def test_help_documents_every_flag(command, capsys, monkeypatch):
    text = help_text(command, capsys, monkeypatch)
    sub = next(a for a in cli.build_parser()._actions if a.dest == "command").choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text
        if action.option_strings and action.dest != "help":
            assert action.help


def test_lts_dot_of_sequence(model_file, capsys):
    code, out, _ = run(["lts", model_file, "P", "--dot"], capsys)
    assert code == 0
    assert out.count("[label=") == 3 + 4
    assert out.startswith("digraph P {")


def test_lts_json_to_file(model_file, tmp_path, capsys):
    target = tmp_path / "p.json"
    code, out, _ = run(["lts", model_file, "P", "--json", "-o", target], capsys)
    assert code == 0 and out == ""
    data = json.loads(target.read_text())
    assert len(data["nodes"]) == 3 and data["truncated"] is False


def test_unknown_process_exit_code(model_file, capsys):
    code, _, err = run(["lts", model_file, "Nope"], capsys)
    assert code == 65 and "Nope" in err


def test_truncation_exit_code(model_file, capsys):
    assert run(["lts", model_file, "L", "--max-depth", "3", "--strict"], capsys)[0] == 2
    assert run(["lts", model_file, "L", "--max-depth", "3"], capsys)[0] == 0
    assert run(["check", model_file, "L", "L", "--max-depth", "3"], capsys)[0] == 2


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.q"
    bad.write_text("actions:\n  quantum a\nprocess:\n  P = a +\n")
    code, _, err = run(["parse", bad], capsys)
    assert code == 64
    assert "bad.q:4:" in err


def test_missing_file_is_a_usage_error(tmp_path, capsys):
    assert run(["parse", tmp_path / "absent.q"], capsys)[0] == 64


def test_bad_arguments_exit_64(capsys):
    with pytest.raises(SystemExit) as done:
        cli.main(["check"])
    assert done.value.code == 64


def test_parse_roundtrip(model_file, capsys):
    code, out, _ = run(["parse", model_file], capsys)
    assert code == 0 and "P = a . b" in out
    code, out, _ = run(["parse", model_file, "--format", "json"], capsys)
    assert json.loads(out)["gamma"] == [["c", "d", "k"]]


def test_check_exit_codes(model_file, capsys):
    code, out, _ = run(["check", model_file, "R", "S"], capsys)
    assert code == 0 and json.loads(out)["related"] is True
    code, out, _ = run(["check", model_file, "S", "W"], capsys)
    assert code == 1 and json.loads(out)["counterexample"]
    code, _, _ = run(["check", model_file, "T", "U", "--flavor", "rooted-branching"], capsys)
    assert code == 0


def test_normalize(capsys):
    code, out, _ = run(["normalize", "(a + a) . b"], capsys)
    assert code == 0 and out.strip().splitlines()[-1] == "a . b"
    code, out, _ = run(["normalize", "a + delta", "--format", "json"], capsys)
    assert json.loads(out)["term"] == "a"
    assert run(["normalize", "a +"], capsys)[0] == 64


def test_soundness_sample_count_must_be_positive(capsys):
    assert run(["soundness", "--samples", "0"], capsys)[0] == 64


def test_soundness_findings(capsys):
    code, out, _ = run(["soundness", "--set", "silent-step", "--samples", "10", "--allow-findings"],
                       capsys)
    assert code == 0 and "RQB3" in out.split("findings:")[1]
    code, out, _ = run(["soundness", "--set", "silent-step", "--samples", "10"], capsys)
    assert code == 1 and "FAIL" in out


def test_soundness_json_is_reproducible(capsys, monkeypatch, tmp_path):
    argv = ["soundness", "--axiom", "RQA4", "--axiom", "RQC8", "--samples", "8", "--format",
            "json", "--figures", tmp_path]
    monkeypatch.setenv(cli.SEED_ENV, "17")
    first = run(argv, capsys)[1]
    second = run(argv, capsys)[1]
    assert first == second and json.loads(first)["seed"] == 17
    assert (tmp_path / "soundness.png").stat().st_size > 0


def test_seed_environment_overrides_flag(capsys, monkeypatch):
    monkeypatch.setenv(cli.SEED_ENV, "5")
    out = run(["soundness", "--axiom", "RQA1", "--samples", "3", "--seed", "9", "--format",
               "json"], capsys)[1]
    assert json.loads(out)["seed"] == 5
    monkeypatch.setenv(cli.SEED_ENV, "x")
    assert run(["soundness", "--axiom", "RQA1", "--samples", "3"], capsys)[0] == 64


def test_bb84_report(tmp_path, capsys):
    code, out, _ = run(["bb84", "--json", tmp_path / "v.json", "--figures", tmp_path], capsys)
    assert code == 0
    parts = out.split(cli.REPORT_RULE + "\n")
    assert "verdict: related" in parts[2]
    assert json.loads(parts[3])["variables"] == 13
    assert json.loads((tmp_path / "v.json").read_text())["related"] is True
    assert (tmp_path / "bb84_qubit.png").exists()


def test_bb84_broken_communication(capsys):
    code, out, _ = run(["bb84", "--omit", "c_P(B_b)"], capsys)
    assert code == 1 and "deadlocked variables: X9" in out


def test_dump_axioms(capsys):
    code, out, _ = run(["dump-axioms", "--set", "renaming"], capsys)
    assert code == 0 and out.startswith("[renaming]")
    assert run(["dump-axioms", "--set", "bogus"], capsys)[0] == 64


def test_console_script_runs():
    env = dict(os.environ, COLUMNS="100")
    done = subprocess.run([sys.executable, "-m", "qracp.cli", "bb84", "--target", "factored",
                           "--inputs", "2", "--outputs", "2"], capture_output=True, text=True,
                          env=env)
    assert done.returncode == 0, done.stderr
