"""Command-line interface: scenarios, artifacts, exit codes and determinism."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from paradiff import __version__
from paradiff.cli import EXIT_CODES, initial_data, load_scenario, main
from paradiff.errors import NonlinearityError, ScenarioError, ThresholdError
from paradiff.serialization import field_csv, read_field_csv
from paradiff.spectral_core import Grid, SpectralField

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
ARTIFACTS = {"solution.csv", "trace.jsonl", "norms.json", "summary.json"}

SMALL_KDV = """\
name: small_kdv
nonlinearity:
  - {c: -6, a0: 1, a1: 1, a2: 0}
initial_data: {profile: sech2, amplitude: 0.5, width: 2.0}
grid: {n_points: 256, length: 64.0}
n_times: 16
solver: {s: 4.0, n_cap: 512}
output: {every: 4}
"""


def write(tmp_path, text, name="sc.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def run(argv):
    return main([str(a) for a in argv])


def test_version(capsys):
    assert run(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_zero_scenario_writes_zero_snapshots(tmp_path):
    out = tmp_path / "out"
    assert run(["solve", "--scenario", SCENARIOS / "zero.yaml", "--out", out, "--threads", 1]) == 0
    assert {p.name for p in out.iterdir()} == ARTIFACTS
    with open(out / "solution.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(float(r["re"]) == 0.0 and float(r["im"]) == 0.0 for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["k"] == 0 and summary["converged"]


def test_small_kdv_scenario(tmp_path):
    out = tmp_path / "out"
    assert run(["solve", "--scenario", write(tmp_path, SMALL_KDV), "--out", out, "--threads", 1]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] and summary["lambda"] == "-2" and summary["s0"] == "3/2"
    # 16 time samples: the time-difference floor sits near 1e-6
    assert summary["residual"]["relative"] <= 1e-5
    trace = [json.loads(x) for x in (out / "trace.jsonl").read_text().splitlines()]
    assert len(trace) == summary["outer_iterations"]
    times = sorted({float(r["t"]) for r in csv.DictReader(open(out / "solution.csv"))})
    assert len(times) == 5


def test_repeated_runs_byte_identical(tmp_path):
    sc = write(tmp_path, SMALL_KDV)
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert run(["solve", "--scenario", sc, "--out", o, "--threads", 1, "--seed", 5]) == 0
    for name in ARTIFACTS:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def _scalars(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _scalars(v, f"{prefix}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _scalars(v, f"{prefix}[{i}]")
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        yield prefix, float(obj)


def test_threads_agree_to_roundoff(tmp_path):
    sc = write(tmp_path, SMALL_KDV)
    for n, o in ((1, "t1"), (4, "t4")):
        assert run(["solve", "--scenario", sc, "--out", tmp_path / o, "--threads", n]) == 0
    for name in ("summary.json", "norms.json"):
        a = dict(_scalars(json.loads((tmp_path / "t1" / name).read_text())))
        b = dict(_scalars(json.loads((tmp_path / "t4" / name).read_text())))
        assert a.keys() == b.keys()
        for key in a:
            assert abs(a[key] - b[key]) <= 1e-12 * max(1.0, abs(a[key])), key


@pytest.mark.parametrize("text", [
    "nonlinearity: [",
    "just a string",
    "nonlinearity: []\n",
    "nonlinearity:\n  - {c: 1, a0: 1, a1: 1}\ninitial_data: {profile: sech2}\n",
    "nonlinearity:\n  - {c: 1, a0: 1, a1: 1}\ninitial_data: {profile: blob}\ngrid: {n_points: 64, length: 8}\n",
    "nonlinearity:\n  - {c: 1, a0: 1, a1: 1}\ninitial_data: {profile: zero}\ngrid: {n_points: 60, length: 8}\n",
    "nonlinearity:\n  - {c: 1, a0: 1, a1: 1, a3: 1}\ninitial_data: {profile: zero}\ngrid: {n_points: 64, length: 8}\n",
    "nonlinearity:\n  - {c: 1, a0: 1, a1: 1}\ninitial_data: {profile: zero}\ngrid: {n_points: 64, length: 8}\nextra: 1\n",
    "nonlinearity:\n  - {c: 1, a0: 1, a1: 1}\ninitial_data: {profile: zero}\ngrid: {n_points: 64, length: 8}\n"
    "solver: {outer_max: -3}\n",
])
def test_malformed_scenario_exit_code_and_no_artifacts(tmp_path, text):
    out = tmp_path / "out"
    code = run(["solve", "--scenario", write(tmp_path, text), "--out", out])
    assert code == EXIT_CODES["PARSE"]
    assert not out.exists() or not any(out.iterdir())


def test_rejected_nonlinearity_exit_code(tmp_path):
    text = "nonlinearity:\n  - {c: 1, a0: 1, a2: 1}\ninitial_data: {profile: zero}\ngrid: {n_points: 64, length: 8}\n"
    with pytest.raises(NonlinearityError):
        load_scenario(write(tmp_path, text))
    assert run(["solve", "--scenario", tmp_path / "sc.yaml", "--out", tmp_path / "o"]) == EXIT_CODES["NONLINEARITY"]


def test_threshold_exit_code(tmp_path):
    text = SMALL_KDV.replace("s: 4.0", "s: 1.0")
    with pytest.raises(ThresholdError):
        load_scenario(write(tmp_path, text))
    assert run(["solve", "--scenario", tmp_path / "sc.yaml", "--out", tmp_path / "o"]) == EXIT_CODES["THRESHOLD"]


def test_missing_scenario_is_io_error(tmp_path):
    assert run(["solve", "--scenario", tmp_path / "nope.yaml", "--out", tmp_path]) == EXIT_CODES["IO"]


def test_non_convergence_exit_code(tmp_path):
    text = SMALL_KDV.replace("n_cap: 512}", "n_cap: 512, outer_max: 1}")
    out = tmp_path / "out"
    assert run(["solve", "--scenario", write(tmp_path, text), "--out", out]) == EXIT_CODES["CONVERGENCE"]
    assert {p.name for p in out.iterdir()} == ARTIFACTS


def test_complex_coefficient_and_profiles(tmp_path):
    for profile in ("sech2", "sech", "gaussian", "random"):
        text = ("nonlinearity:\n  - {c: [1.0, 0.5], a0: 2}\n"
                f"initial_data: {{profile: {profile}, amplitude: 0.3, seed: 2}}\n"
                "grid: {n_points: 64, length: 16}\n")
        sc = load_scenario(write(tmp_path, text))
        assert sc.F.monomials[0].coeff == 1.0 + 0.5j
        u = initial_data(sc)
        assert 0 < u.sup() <= 0.3 + 1e-12


def test_file_profile(tmp_path):
    g = Grid(64, 16.0)
    u = SpectralField.from_values(g, np.exp(-g.x ** 2))
    (tmp_path / "u0.csv").write_text(field_csv(u))
    text = "nonlinearity:\n  - {c: 1, a0: 2}\ninitial_data: {profile: file, path: u0.csv}\n"
    sc = load_scenario(write(tmp_path, text))
    v = initial_data(sc)
    assert v.grid == g and np.allclose(v.values, u.values, atol=1e-15)


def test_read_field_csv_rejects_bad_files(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n1,2\n")
    with pytest.raises(ScenarioError):
        read_field_csv(p)
    p.write_text("x,re,im\n0,1,0\n1,1,0\n3,1,0\n")
    with pytest.raises(ScenarioError):
        read_field_csv(p)


def test_diagnose_zero_field(tmp_path, capsys):
    g = Grid(64, 8.0)
    (tmp_path / "z.csv").write_text(field_csv(SpectralField.zeros(g)))
    assert run(["diagnose", "--field", tmp_path / "z.csv"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["mizohata"] == 0.0 and rep["sup"] == 0.0 and rep["l2"] == 0.0


def test_diagnose_sech2_field(tmp_path):
    g = Grid(2048, 80.0)
    (tmp_path / "a.csv").write_text(field_csv(SpectralField.from_values(g, 1 / np.cosh(g.x) ** 2)))
    assert run(["diagnose", "--field", tmp_path / "a.csv", "--out", tmp_path / "d"]) == 0
    rep = json.loads((tmp_path / "d" / "diagnose.json").read_text())
    assert rep["mizohata"] == pytest.approx(2.0, abs=1e-6)


def test_diagnose_requires_field():
    assert run(["diagnose"]) == EXIT_CODES["PARSE"]


def test_probe_stdout_and_file(tmp_path, capsys):
    assert run(["probe", "--tag", "est:alg", "--trials", 3, "--seed", 2, "--threads", 1]) == 0
    first = capsys.readouterr().out
    assert run(["probe", "--tag", "est:alg", "--trials", 3, "--seed", 2, "--out", tmp_path, "--threads", 2]) == 0
    assert (tmp_path / "probe.json").read_text() == first
    assert json.loads(first)["trials"] == 3


def test_probe_unknown_tag_exit_code():
    assert run(["probe", "--tag", "est:unknown", "--trials", 1]) == EXIT_CODES["UNKNOWN_TAG"]
    assert run(["probe", "--trials", 1]) == EXIT_CODES["UNKNOWN_TAG"]


def test_usage_errors():
    assert run(["probe", "--tag", "est:alg", "--trials", 0]) == EXIT_CODES["USAGE"]
    assert run(["probe", "--tag", "est:alg", "--threads", 0]) == EXIT_CODES["USAGE"]
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == EXIT_CODES["USAGE"]


def test_readme_scenario_example_loads(tmp_path):
    import re

    readme = (Path(__file__).resolve().parents[1] / "README.md").read_text()
    block = re.search(r"```yaml\n(.*?)```", readme, re.S).group(1)
    sc = load_scenario(write(tmp_path, block))
    assert sc.config().theta_value == pytest.approx(0.01)
    assert initial_data(sc).sup() == pytest.approx(0.5)
