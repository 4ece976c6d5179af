import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rationality import __version__, envsim
from rationality.cli import run
from rationality.envsim import Environment


def test_elicit_round_trip(capsys):
    assert run(["elicit", "--belief", "0.25 0.75", "--tol", "1e-6"]) == 0
    out = capsys.readouterr().out
    line = next(l for l in out.splitlines() if l.startswith("recovered belief:"))
    got = [float(v) for v in line.split(":")[1].split()]
    assert np.max(np.abs(np.array(got) - [0.25, 0.75])) <= 1e-5


def test_elicit_preset_and_file(tmp_path, capsys):
    assert run(["elicit"]) == 0
    (tmp_path / "b.txt").write_text("1 2 1\n")
    out = tmp_path / "r.json"
    assert run(["elicit", "--belief-file", str(tmp_path / "b.txt"), "--out", str(out), "--format", "json"]) == 0
    data = json.loads(out.read_text())
    assert [r["recovered"] for r in data["rows"]] == pytest.approx([0.25, 0.5, 0.25], abs=1e-5)
    assert data["metadata"]["version"] == __version__


@pytest.mark.parametrize("dm, clean", [("belief", True), ("affine", False), ("always-accept", False), ("sign-flipped", False)])
def test_axioms(dm, clean, capsys):
    assert run(["axioms", "--dm", dm, "--belief", "0.3 0.7", "--samples", "100"]) == 0
    out = capsys.readouterr().out
    assert ("violations: 0" in out) == clean
    if not clean:
        assert "witness" in out


def test_plan_null_env(capsys):
    assert run(["plan", "--env", "null.env"]) == 0
    out = capsys.readouterr().out
    assert "V* = 0.0" in out
    assert all("action 0" in l for l in out.splitlines() if l.strip().startswith("step"))


def test_plan_writes_file(tmp_path):
    out = tmp_path / "plan.csv"
    assert run(["plan", "--env", "two_step.env", "--horizon", "3", "--out", str(out)]) == 0
    rows = [r for r in csv.reader(l for l in out.read_text().splitlines() if not l.startswith("#"))]
    assert rows[0] == ["step", "action", "percept", "reward"] and len(rows) == 4


def test_mixture_demo(tmp_path):
    out = tmp_path / "w.csv"
    assert run(["mixture", "--class", "demo5.cls", "--true", "env3", "--steps", "12", "--out", str(out)]) == 0
    text = out.read_text()
    header = [l for l in text.splitlines() if l.startswith("#")]
    assert any(l.startswith("# command: rationality mixture") and "--out" not in l for l in header)
    assert "# seed: 0" in header and f"# version: {__version__}" in header
    rows = list(csv.DictReader(l for l in text.splitlines() if not l.startswith("#")))
    assert list(rows[0]) == ["step", "action", "percept", "reward", "W", "Delta", "surviving_envs"]
    W = [float(r["W"]) for r in rows]
    first = next(k for k, w in enumerate(W) if abs(w - 1) <= 1e-9)
    assert all(abs(w - 1) <= 1e-9 for w in W[first:])


def test_mixture_json_to_stdout(capsys):
    assert run(["mixture", "--class", "demo5.cls", "--true", "env2", "--steps", "4", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["metadata"]["true_env"] == "env2" and len(data["rows"]) == 4


def _stochastic_class(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(2):
        table = {(0, a): [(0.5, 0, float(rng.uniform(0.1, 1)), 0), (0.5, 1, float(rng.uniform(0.1, 1)), 0)]
                 for a in range(2)}
        envsim.save(Environment.from_table(f"s{i}", table, num_states=1, num_actions=2, num_percepts=2),
                    tmp_path / f"s{i}.env")
    (tmp_path / "s.cls").write_text("env s0.env 1\nenv s1.env 1\n")
    return tmp_path / "s.cls"


def test_determinism(tmp_path):
    cls = _stochastic_class(tmp_path)
    outs = []
    for name in ("a.csv", "b.csv"):
        assert run(["mixture", "--class", str(cls), "--true", "s1", "--seed", "7", "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_seqspace(capsys, tmp_path):
    assert run(["seqspace"]) == 0
    out = capsys.readouterr().out
    assert "all-ones" in out and "converged: False" in out
    assert run(["seqspace", "--out", str(tmp_path / "s.json"), "--format", "json"]) == 0
    rows = json.loads((tmp_path / "s.json").read_text())["rows"]
    assert {r["sequence"]: r["converged"] for r in rows} == {"all-ones": True, "finite": True, "boundary": False}


def test_exit_codes(tmp_path, capsys):
    (tmp_path / "bad.env").write_text("id x\nstates two\n")
    assert run(["plan", "--env", str(tmp_path / "bad.env")]) == 2
    assert "bad.env:2:" in capsys.readouterr().err
    assert run(["plan", "--env", str(tmp_path / "missing.env")]) == 2
    assert run(["mixture", "--class", "demo5.cls", "--true", "nope"]) == 3
    assert run(["elicit", "--belief", "0 0"]) == 3
    assert run(["elicit", "--belief", "a b"]) == 2
    assert run(["bogus"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "rationality", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == __version__
