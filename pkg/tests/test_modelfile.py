import pytest

from supergeo.cli import EXIT_DOMAIN, EXIT_FAIL, EXIT_PASS, main, run_check
from supergeo.errors import ParityError, ParseError
from supergeo.modelfile import bundled_models, bundled_path, load_model, parse_model

CHECKS = ("torsion", "compatibility", "intertwine", "transform")

FLAT = """
[model]
even = x
[christoffel]
"""


def test_minimal_model_and_defaults():
    m = parse_model(FLAT + "# trailing comment\n")
    assert m.coords.names == ("x",)
    assert m.metric is None and m.oneform is None and m.change is None
    assert m.num_generators == 2
    assert m.settings["h"] > 0


def test_settings_are_typed():
    m = parse_model(FLAT + "[settings]\nh = 0.01\ngenerators = 3\nx = \"0.5\"\n")
    assert m.settings["h"] == 0.01 and m.num_generators == 3 and m.settings["x"] == "0.5"


@pytest.mark.parametrize("text, message", [
    ("[model]\neven = x\n[christofel]\n", "line 3: unknown section"),
    (FLAT + "[christoffel]\n", "line 5: duplicate section"),
    ("even = x\n", "line 1: entry outside"),
    (FLAT + "Gamma(1,1,1)\n", "line 5: expected 'key = value'"),
    (FLAT + "Gamma(1,1) = \"1\"\n", "line 5: expected Gamma(i,j,k)"),
    (FLAT + "Gamma(1,1,2) = \"1\"\n", "line 5: index (1, 1, 2) out of range"),
    (FLAT + "Gamma(1,1,1) = \"1\"\nGamma(1,1,1) = \"2\"\n", "line 6: duplicate entry"),
    (FLAT + "Gamma(1,1,1) = \"1 +\"\n", "line 5:"),
    (FLAT + "Gamma(1,1,1) = \"1\n", "line 5: unbalanced quotes"),
    ("[model]\neven = x\n", "exactly one of"),
    ("[model]\neven = x\n[christoffel]\n[metric]\ng(1,1) = \"1\"\n", "exactly one of"),
    ("[model]\neven = x, y\n[metric]\ng(2,1) = \"1\"\n", "line 4: give metric entries with i <= j"),
    (FLAT + "[perturbation]\nGamma(1,1,1) = \"1\"\n", "requires a [metric]"),
    (FLAT + "[target_christoffel]\n", "requires a [change]"),
    (FLAT + "[change]\neven = y\n", "needs formulas"),
    (FLAT + "[change]\neven = y, z\ny(1) = \"x\"\n", "same graded dimension"),
    (FLAT + "[settings]\nspeed = 1\n", "line 6: unknown setting"),
    (FLAT + "[settings]\nh = fast\n", "line 6: bad value"),
    ("[christoffel]\n", "missing [model]"),
    ("[model]\n[christoffel]\n", "no coordinates"),
])
def test_parse_errors_name_the_line(text, message):
    with pytest.raises(ParseError) as info:
        parse_model(text)
    assert message in str(info.value)


def test_parity_errors_in_entries():
    with pytest.raises(ParityError):
        parse_model("[model]\neven = x\nodd = xi\n[christoffel]\nGamma(1,1,1) = \"xi\"\n")
    with pytest.raises(ParityError):
        parse_model("[model]\neven = x\nodd = xi\n[metric]\ng(1,1) = \"1\"\ng(1,2) = \"x\"\ng(2,2) = \"1\"\n")
    with pytest.raises(ParityError):
        parse_model("[model]\neven = x\nodd = xi\n[christoffel]\n[oneform]\nalpha(2) = \"x\"\n")


def test_missing_file_and_unknown_bundle():
    with pytest.raises(ParseError):
        load_model("/nonexistent/model.model")
    with pytest.raises(ParseError):
        bundled_path("no_such_model")


def test_bundled_models_load():
    names = bundled_models()
    assert {"flat_1d", "surface", "super_metric_22", "nilpotent_12", "torsion_22"} <= set(names)
    for name in names:
        m = load_model(bundled_path(name))
        assert m.name == name and m.expect


@pytest.mark.parametrize("name", bundled_models())
def test_bundled_model_meets_its_expectations(name, capsys):
    m = load_model(bundled_path(name))
    path = str(bundled_path(name))
    for key, want in m.expect.items():
        if key in CHECKS:
            ok, lines = run_check(m, key)
            assert ok == (want == "pass"), (key, lines)
        elif key == "geodesic":
            code = main(["geodesic", "--model", path, "--format", "report"])
            assert code == {"ok": EXIT_PASS, "domain": EXIT_DOMAIN}[want]
        elif key == "projective":
            code = main(["projective", "--model", path])
            assert code == {"equivalent": EXIT_PASS, "not-equivalent": EXIT_FAIL}[want]
        else:
            pytest.fail(f"unknown expectation {key!r}")
    capsys.readouterr()
