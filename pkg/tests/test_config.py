import pytest

from qdiss.config import SCHEMA, ConfigError, parse_config, schema_doc

MINIMAL = """\
# harmonic wave-function run
solver = kostin
b = 0.5
"""


def test_defaults_filled():
    s = parse_config(MINIMAL)
    assert s.solver == "kostin"
    assert s.b == 0.5
    assert s.m == 1.0 and s.potential == "harmonic" and s.grid == "periodic"
    assert s.init_var == pytest.approx(0.5)
    assert s.dt is None


def test_echo_covers_schema_and_reparses():
    s = parse_config(MINIMAL)
    echo = s.echo()
    assert [line.split(" = ")[0] for line in echo.splitlines()] == list(SCHEMA)
    again = parse_config("\n".join(l for l in echo.splitlines() if not l.endswith("= auto") and "coeffs =" not in l))
    assert again.echo() == echo


def test_hash_stable_and_sensitive():
    a, b = parse_config(MINIMAL), parse_config(MINIMAL + "\n# comment only\n")
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != parse_config(MINIMAL + "seed = 1\n").config_hash()
    assert len(a.config_hash()) == 64


def test_strong_friction_defaults():
    s = parse_config("solver = smoluchowski\n")
    assert s.b == 1.0 and s.grid == "clamped"


@pytest.mark.parametrize("text,key,line", [
    ("solver = smoluchowski\nb = 0\n", "b", 2),
    ("solver = phasespace\nfriction = true\nx_model = coffey\nkT = 0\n", "x_model", 3),
    ("solver = kostin\nfoo = 1\n", "foo", 2),
    ("solver = kostin\nn = 64\nn = 128\n", "n", 3),
    ("solver = kostin\nn = many\n", "n", 2),
    ("solver = kostin\nquantum = maybe\n", "quantum", 2),
    ("solver = kostin\nx_min = 1\nx_max = 0\n", "x_max", 3),
    ("solver = langevin\nN = 10\n", "N", 2),
    ("solver = kostin\ngrid = clamped\n", "grid", 2),
    ("solver = kostin\noutput_dir = ../up\n", "output_dir", 2),
    ("solver = kostin\nbandwidth = -1\n", "bandwidth", 2),
    ("solver = smoluchowski\ninit = point\n", "init", 2),
])
def test_errors_name_key_and_line(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key
    assert info.value.line == line
    assert f"key '{key}'" in str(info.value) and f"line {line}" in str(info.value)


def test_missing_solver():
    with pytest.raises(ConfigError, match="solver"):
        parse_config("m = 1\n")


def test_malformed_line():
    with pytest.raises(ConfigError) as info:
        parse_config("solver = kostin\njust words\n")
    assert info.value.line == 2


def test_with_value():
    s = parse_config(MINIMAL)
    t = s.with_value("hbar", "0.5")
    assert t.hbar == 0.5 and s.hbar == 1.0
    assert t.init_var == pytest.approx(0.25)
    with pytest.raises(ConfigError):
        s.with_value("nope", "1")
    with pytest.raises(ConfigError):
        s.with_value("n", "x")
    with pytest.raises(ConfigError):
        parse_config("solver = smoluchowski\n").with_value("b", "0")


def test_schema_doc():
    doc = schema_doc()
    assert len(doc.splitlines()) == len(SCHEMA)
    assert "required" in doc.splitlines()[0]
