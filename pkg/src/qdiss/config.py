"""Plain-text ``key = value`` scenario files.

Blank lines and ``#`` comments are ignored; there are no sections.  Every key
is declared in :data:`SCHEMA` with a type and a default.  Unknown keys,
duplicates, type mismatches and constraint violations raise
:class:`ConfigError` naming the key and line.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

SOLVERS = ("kostin", "smoluchowski", "nonlinear_smoluchowski", "phasespace", "langevin", "oracle")
AUTO = object()


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _choice(*options):
    def parse(s: str) -> str:
        v = s.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {v!r}")
        return v
    parse.options = options
    return parse


def _bandwidth(s: str):
    v = s.strip()
    if v in ("force", "silverman"):
        return v
    x = float(v)
    if not x > 0:
        raise ValueError("bandwidth must be positive")
    return x


# key: (parser, default, description)
SCHEMA = {
    "solver": (_choice(*SOLVERS), None, "which solver to run (required)"),
    "m": (float, 1.0, "mass"),
    "b": (float, AUTO, "friction coefficient; default 1 for strong-friction solvers, else 0"),
    "kT": (float, 0.0, "bath temperature in energy units"),
    "hbar": (float, 1.0, "Planck constant"),
    "potential": (_choice("free", "harmonic", "quartic", "double_well", "poly"), "harmonic", "potential family"),
    "omega0": (float, 1.0, "harmonic frequency"),
    "g": (float, 0.25, "quartic coefficient, U = g x^4"),
    "depth": (float, 1.0, "double-well barrier height"),
    "well": (float, 1.0, "double-well minimum position"),
    "coeffs": (_floats, (), "polynomial coefficients c0, c1, ... for potential = poly"),
    "x_min": (float, -10.0, "left grid edge"),
    "x_max": (float, 10.0, "right grid edge"),
    "n": (int, 256, "grid points"),
    "grid": (_choice("periodic", "clamped", "auto"), "auto", "grid boundary mode"),
    "p_max": (float, 8.0, "phase-space momentum half-range"),
    "n_p": (int, 128, "phase-space momentum points"),
    "init": (_choice("gaussian", "ground", "thermal", "point"), "gaussian", "initial condition"),
    "init_mean": (float, 0.0, "initial mean position"),
    "init_var": (float, AUTO, "initial position variance; default hbar/2 m omega0"),
    "init_v": (float, 0.0, "initial mean velocity"),
    "dt": (float, AUTO, "time step; solver default when omitted"),
    "t_max": (float, 1.0, "final time"),
    "cadence": (int, 10, "record every this many steps"),
    "checkpoints": (int, 20, "output times for the diffusion solvers"),
    "method": (_choice("implicit", "explicit"), "implicit", "diffusion integrator"),
    "adaptive": (_bool, True, "adaptive steps for the implicit diffusion integrator"),
    "beta_nodes": (int, 1, "nodes of the inverse-temperature quadrature"),
    "quantum": (_bool, True, "include quantum terms (phase space)"),
    "friction": (_bool, False, "include the collision term (phase space)"),
    "x_model": (_choice("none", "coffey", "gaussian_nonlinear"), "none", "thermo-quantum operator model"),
    "scheme": (_choice("rk2", "rk4"), "rk2", "phase-space time integrator"),
    "N": (int, 10000, "ensemble size"),
    "seed": (int, 0, "master random seed"),
    "thermal": (_bool, False, "thermal Langevin force"),
    "quantum_force": (_choice("none", "meanfield"), "none", "trajectory quantum force model"),
    "bandwidth": (_bandwidth, "force", "kernel width rule or value"),
    "oracle": (_choice("harmonic", "gaussian_ode", "free_quantum", "einstein", "thermo_quantum_free",
                       "commutator"), "gaussian_ode", "reference curve for solver = oracle and sweeps"),
    "snapshots": (_bool, False, "write the final field"),
    "output_dir": (str, "out", "output directory, relative to the output root"),
}


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


@dataclass(frozen=True)
class Scenario:
    values: dict
    source: str = ""

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def with_value(self, key: str, raw: str) -> "Scenario":
        """Copy with one key overridden from its text form, re-validated."""
        if key not in SCHEMA:
            raise ConfigError("unknown key", key)
        given = dict(self.values["_given"])
        try:
            given[key] = SCHEMA[key][0](raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value {raw!r}: {exc}", key) from None
        return _resolve(given, {}, self.source)

    def echo(self) -> str:
        """Resolved configuration, one ``key = value`` line per schema key."""
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in SCHEMA)

    def config_hash(self) -> str:
        return hashlib.sha256(self.echo().encode()).hexdigest()


def parse_config(text: str) -> Scenario:
    given, lines = {}, {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=no)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError("unknown key", key, no)
        if key in given:
            raise ConfigError("duplicate key", key, no)
        try:
            given[key] = SCHEMA[key][0](val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value {val!r}: {exc}", key, no) from None
        lines[key] = no
    return _resolve(given, lines, text)


def _resolve(given: dict, lines: dict, source: str) -> Scenario:
    def fail(msg, key):
        raise ConfigError(msg, key, lines.get(key))

    if "solver" not in given:
        raise ConfigError("missing required key", "solver")
    v = {k: spec[1] for k, spec in SCHEMA.items()}
    v.update(given)
    solver = v["solver"]
    strong = solver in ("smoluchowski", "nonlinear_smoluchowski")
    if v["b"] is AUTO:
        v["b"] = 1.0 if strong else 0.0
    if v["grid"] == "auto":
        v["grid"] = "clamped" if strong else "periodic"
    harmonic = v["potential"] == "harmonic"
    if v["init_var"] is AUTO:
        v["init_var"] = (v["hbar"] / (2 * v["m"] * v["omega0"])
                         if harmonic and v["hbar"] > 0 and v["omega0"] > 0 else 1.0)

    for key in ("m", "t_max"):
        if not v[key] > 0:
            fail("must be positive", key)
    for key in ("b", "kT", "hbar"):
        if not (v[key] >= 0 and math.isfinite(v[key])):
            fail("must be finite and non-negative", key)
    if v["omega0"] < 0:
        fail("must be non-negative", "omega0")
    if v["x_max"] <= v["x_min"]:
        fail("x_max must exceed x_min", "x_max")
    if v["n"] < 8:
        fail("needs at least 8 points", "n")
    if v["n_p"] < 8 or v["n_p"] % 2:
        fail("must be even and at least 8", "n_p")
    if v["p_max"] <= 0:
        fail("must be positive", "p_max")
    if v["dt"] is AUTO:
        v["dt"] = None
    elif not v["dt"] > 0:
        fail("must be positive", "dt")
    if v["cadence"] < 1:
        fail("must be at least 1", "cadence")
    if v["checkpoints"] < 1:
        fail("must be at least 1", "checkpoints")
    if v["beta_nodes"] < 1:
        fail("must be at least 1", "beta_nodes")
    if not v["init_var"] >= 0:
        fail("must be non-negative", "init_var")
    if v["seed"] < 0 or v["seed"] >= 2**64:
        fail("must lie in [0, 2^64)", "seed")
    if v["potential"] == "poly" and not v["coeffs"]:
        fail("potential = poly needs coefficients", "coeffs")

    if strong and v["b"] <= 0:
        fail(f"solver = {solver} needs b > 0", "b")
    if solver == "nonlinear_smoluchowski" and v["beta_nodes"] > 1 and v["kT"] <= 0:
        fail("a beta quadrature needs kT > 0", "beta_nodes")
    if v["x_model"] == "coffey" and v["kT"] <= 0:
        fail("x_model = coffey requires kT > 0", "x_model")
    if solver == "phasespace":
        if v["friction"] and v["b"] <= 0:
            fail("friction needs b > 0", "friction")
        if v["grid"] != "periodic":
            fail("phase space needs a periodic grid", "grid")
    if solver == "kostin" and v["grid"] != "periodic":
        fail("the wave-function solver needs a periodic grid", "grid")
    if solver == "langevin":
        if v["thermal"] and v["b"] <= 0:
            fail("thermal forcing needs b > 0", "thermal")
        if v["N"] < 100:
            fail("ensembles need N >= 100", "N")
        if v["quantum_force"] == "meanfield" and v["N"] < 1000:
            fail("the mean-field force needs N >= 1000", "N")
    if v["init"] == "thermal" and (v["kT"] <= 0 or not harmonic):
        fail("init = thermal needs kT > 0 and a harmonic potential", "init")
    if v["init"] == "ground" and not (harmonic and v["omega0"] > 0):
        fail("init = ground needs a harmonic potential", "init")
    if v["init"] == "point" and solver != "langevin":
        fail("init = point is only defined for ensembles", "init")
    if v["init"] in ("gaussian", "ground") and solver != "langevin" and not v["init_var"] > 0:
        fail("must be positive", "init_var")
    if not v["output_dir"] or v["output_dir"].startswith("/") or ".." in v["output_dir"].split("/"):
        fail("must be a relative path inside the output root", "output_dir")

    v["_given"] = dict(given)
    return Scenario(v, source)


def schema_doc() -> str:
    """One line per key with its default, for help texts and the README."""
    out = []
    for k, (_p, d, desc) in SCHEMA.items():
        dv = "required" if d is None else ("solver dependent" if d is AUTO else _fmt(d))
        out.append(f"{k:15s} {dv:18s} {desc}")
    return "\n".join(out)


__all__ = ["ConfigError", "Scenario", "parse_config", "SCHEMA", "SOLVERS", "schema_doc"]
