import csv
import io
import math
import subprocess
import sys

import pytest

from supergeo.cli import EXIT_DOMAIN, EXIT_FAIL, EXIT_INPUT, EXIT_PASS, main
from supergeo.modelfile import bundled_path


def model(name):
    return str(bundled_path(name))


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_geodesic_csv_layout(capsys):
    code, out, _ = run(capsys, "geodesic", "--model", model("log_1d"), "--step", "0.01")
    assert code == EXIT_PASS
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["t", "x[body]", "x[1]", "x[2]", "x[12]", "v_x[body]", "v_x[1]", "v_x[2]", "v_x[12]"]
    assert len(rows) == 102
    assert float(rows[-1][0]) == 1.0
    assert abs(float(rows[-1][1]) - math.log(2.0)) < 1e-9


def test_geodesic_csv_has_energy_column_for_metric_models(capsys):
    code, out, _ = run(capsys, "geodesic", "--model", model("surface"), "--t-end", "0.1")
    header = out.splitlines()[0].split(",")
    assert code == EXIT_PASS and header[-1] == "energy[12]"
    rows = [list(map(float, r.split(","))) for r in out.splitlines()[1:]]
    body = header.index("energy[body]")
    assert max(abs(r[body] - rows[0][body]) for r in rows) < 1e-12


def test_geodesic_report_and_output_file(capsys, tmp_path):
    target = tmp_path / "report.txt"
    code, out, _ = run(capsys, "geodesic", "--model", model("surface"), "--format", "report", "--out", str(target))
    assert code == EXIT_PASS and out == ""
    text = target.read_text()
    assert "energy drift" in text and "x1(t_end) =" in text


def test_geodesic_output_is_deterministic(capsys):
    args = ("geodesic", "--model", model("nilpotent_12"), "--t-end", "0.2")
    _, first, _ = run(capsys, *args)
    _, second, _ = run(capsys, *args)
    assert first == second


def test_command_line_initial_values(capsys):
    code, out, _ = run(capsys, "geodesic", "--model", model("flat_1d"), "--x", "1@body,0.5@12", "--v", "2",
                       "--t-end", "0.5", "--step", "0.25")
    assert code == EXIT_PASS
    last = out.splitlines()[-1].split(",")
    assert [float(c) for c in last[:5]] == [0.5, 2.0, 0.0, 0.0, 0.5]


def test_blowup_exits_with_domain_code(capsys):
    code, out, err = run(capsys, "geodesic", "--model", model("blowup_1d"))
    assert code == EXIT_DOMAIN and out == ""
    assert "last valid time" in err


@pytest.mark.parametrize("argv", [
    ("geodesic", "--model", "/nonexistent.model"),
    ("geodesic", "--model", model("flat_1d"), "--x", "1;2"),
    ("geodesic", "--model", model("flat_1d"), "--x", "1@1"),
    ("check", "compatibility", "--model", model("flat_1d")),
    ("check", "transform", "--model", model("surface")),
    ("check", "curvature", "--model", model("surface")),
    ("projective", "--model", model("log_1d")),
    ("projective", "--model", model("surface"), "--model-b", model("flat_1d")),
    (),
])
def test_input_errors_exit_with_code_two(capsys, argv):
    code, out, _ = run(capsys, *argv)
    assert code == EXIT_INPUT and out == ""


def test_check_pass_and_fail(capsys):
    code, out, _ = run(capsys, "check", "compatibility", "--model", model("surface"))
    assert code == EXIT_PASS and out.rstrip().endswith("PASS")
    code, out, _ = run(capsys, "check", "compatibility", "--model", model("perturbed_metric"))
    assert code == EXIT_FAIL and out.rstrip().endswith("FAIL")
    code, out, _ = run(capsys, "check", "torsion", "--model", model("torsion_22"), "--samples", "5", "--seed", "3")
    assert code == EXIT_FAIL and "odd auto-commutator obstruction" in out
    code, _, _ = run(capsys, "check", "compatibility", "--model", model("perturbed_metric"), "--tol", "1.0")
    assert code == EXIT_PASS


def test_projective_with_inits_file(capsys, tmp_path):
    inits = tmp_path / "inits.txt"
    inits.write_text("# x | v\n0.8;0.5;0.1@1;0.2@2 | 0.3;0.2;0.1@2;0.2@1\n1;1;0;0 | 0.1;0.1;0;0\n")
    code, out, _ = run(capsys, "projective", "--model", model("super_metric_22"), "--inits", str(inits), "--t-end", "0.5")
    assert code == EXIT_PASS and out.rstrip().endswith("EQUIVALENT")
    inits.write_text("no separator here\n")
    code, _, err = run(capsys, "projective", "--model", model("super_metric_22"), "--inits", str(inits))
    assert code == EXIT_INPUT and "inits" in err


def test_projective_partner_is_not_equivalent(capsys):
    code, out, _ = run(capsys, "projective", "--model", model("geodesic_pair_a"))
    assert code == EXIT_FAIL and "NOT-EQUIVALENT" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "supergeo", "check", "torsion", "--model", model("flat_1d")],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_PASS and "PASS" in proc.stdout
