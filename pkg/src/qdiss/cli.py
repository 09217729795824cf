"""Command-line batch runner.

    qdiss run <config>
    qdiss sweep <config> --axis key=v1,v2,... [--oracle NAME] [--metric max_rel|final_rel|l1_marginal]
    qdiss oracle <name> [--params k=v,...] [--t t1,t2,...]
    qdiss compare <a.csv> <b.csv> --metric l1|linf

Outputs go to ``$QDISS_OUTPUT_ROOT/<output_dir>`` (root defaults to the working
directory).  Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 I/O error.  Failures print a one-line JSON record on stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import _backend
from .config import SCHEMA, ConfigError, Scenario, parse_config
from .core import (Grid1D, NumericalError, PhysicalParams, PotentialSpec, gaussian_density,
                   gaussian_wavefunction)
from .io import csv_text, json_text, output_root, read_csv, snapshot_bytes, staged_directory

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
SWEEP_ORACLES = ("harmonic", "gaussian_ode", "free_quantum", "einstein", "thermo_quantum_free", "mb")
RESOLUTION_AXES = {"n": lambda v: 1.0 / v, "n_p": lambda v: 1.0 / v, "dt": lambda v: v, "N": lambda v: 1.0 / v}


@dataclass
class RunResult:
    table: dict
    diagnostics: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)


def build_params(s: Scenario) -> PhysicalParams:
    return PhysicalParams(m=s.m, b=s.b, kT=s.kT, hbar=s.hbar)


def build_potential(s: Scenario) -> PotentialSpec:
    if s.potential == "free":
        return PotentialSpec.free()
    if s.potential == "harmonic":
        return PotentialSpec.harmonic(s.omega0, s.m)
    if s.potential == "quartic":
        return PotentialSpec.quartic(s.g)
    if s.potential == "double_well":
        return PotentialSpec.double_well(s.depth, s.well)
    return PotentialSpec(tuple(s.coeffs))


def build_grid(s: Scenario) -> Grid1D:
    return Grid1D(s.x_min, s.x_max, s.n, s.grid)


def _initial_variance(s: Scenario) -> float:
    if s.init == "ground":
        return s.hbar / (2 * s.m * s.omega0)
    if s.init == "thermal":
        return s.kT / (s.m * s.omega0**2)
    return s.init_var


def _run_kostin(s, params, pot):
    from .kostin import evolve_kostin, stable_dt
    if params.hbar <= 0:
        raise ConfigError("the wave-function solver needs hbar > 0", "hbar")
    g = build_grid(s)
    psi0 = gaussian_wavefunction(s.init_mean, _initial_variance(s), g, s.init_v, params)
    dt = s.dt if s.dt is not None else min(0.5 * stable_dt(g, params), s.t_max / 100)
    rec = evolve_kostin(psi0, params, pot, s.t_max, dt, cadence=s.cadence, snapshots=s.snapshots)
    a = rec.as_arrays()
    table = {k: a[k] for k in ("t", "norm", "mean_x", "var_x", "mean_p", "energy")}
    diag = {"dt": float(rec.dt), "max_norm_drift": float(np.max(np.abs(a["norm"] - a["norm"][0])))}
    files = {}
    if s.snapshots and rec.snapshots:
        psi = np.asarray(rec.snapshots[-1])
        files["final_psi.csv"] = csv_text({"x": g.x, "re": psi.real, "im": psi.imag})
    return RunResult(table, diag, files)


def _run_diffusion(s, params, pot):
    from .diffusion import evolve_smoluchowski
    g = build_grid(s)
    rho0 = gaussian_density(s.init_mean, _initial_variance(s), g)
    beta_nodes = s.beta_nodes if s.solver == "nonlinear_smoluchowski" else 1
    res = evolve_smoluchowski(rho0, params, pot, s.t_max, s.checkpoints, method=s.method,
                              beta_nodes=beta_nodes, dt=s.dt, adaptive=s.adaptive)
    ser = res.series
    table = {"t": ser.t, "sigma2": ser.sigma2, "mean_x": ser.mean}
    diag = {"steps": res.steps, "rejected": res.rejected, "newton_iterations": res.newton_iterations,
            "max_mass_defect": res.max_mass_defect, "max_clip_mass": res.max_clip_mass}
    files = {}
    if s.snapshots:
        files["final_rho.csv"] = csv_text({"x": g.x, "rho": res.rho.values})
    return RunResult(table, diag, files)


def _run_phasespace(s, params, pot):
    from .oracle import equilibrium_references
    from .phasespace import PhaseSpaceGrid, XModel, evolve_phase_space, from_function
    psg = PhaseSpaceGrid(build_grid(s), s.p_max, s.n_p)
    if s.init == "thermal":
        W0 = from_function(psg, equilibrium_references(params, pot).mb_phase_density, params)
    else:
        if params.hbar <= 0:
            raise ConfigError("a Gaussian Wigner state needs hbar > 0", "hbar")
        var = _initial_variance(s)
        p0 = s.m * s.init_v
        W0 = from_function(psg, lambda x, p: np.exp(-(x - s.init_mean) ** 2 / (2 * var)
                                                    - 2 * var * (p - p0) ** 2 / params.hbar**2), params)
    W, rec = evolve_phase_space(W0, params, pot, s.t_max, s.dt, s.quantum, s.friction, XModel(s.x_model),
                                s.scheme, s.cadence)
    a = rec.as_arrays()
    table = {k: a[k] for k in ("t", "norm", "mean_x", "var_x", "var_p", "kinetic")}
    diag = {"max_norm_drift": float(np.max(np.abs(a["norm"] - a["norm"][0]))),
            "boundary_ratio": W.boundary_ratio()}
    files = {}
    if s.snapshots:
        files["final_W.bin"] = snapshot_bytes(W.values)
    return RunResult(table, diag, files)


def _run_langevin(s, params, pot):
    from .langevin import (ForceModel, GaussianSpec, StepDiagnostics, evolve_ensemble,
                           sample_wigner_initial)
    if s.init == "thermal":
        spec = GaussianSpec.thermal(params, s.omega0)
    elif s.init == "ground":
        spec = GaussianSpec.ground_state(params, s.omega0, s.init_mean, s.init_v)
    elif s.init == "point":
        spec = GaussianSpec(s.init_mean, 0.0, s.init_v, 0.0)
    elif params.hbar > 0:
        spec = GaussianSpec.minimal(params, s.init_var, s.init_mean, s.init_v)
    else:
        spec = GaussianSpec(s.init_mean, s.init_var, s.init_v, 0.0)
    if s.quantum_force == "meanfield":
        # the quantum force carries the momentum spread; particles start on the flow field V = v0
        spec = GaussianSpec(spec.mean_x, spec.var_x, spec.mean_v, 0.0, 0.0)
    ens = sample_wigner_initial(spec, s.N, s.seed)
    model = ForceModel(pot, thermal=s.thermal, quantum=s.quantum_force, bandwidth=s.bandwidth)
    dt = s.dt if s.dt is not None else min(0.01 / max(s.omega0, 1e-12) if s.potential == "harmonic" else 0.01,
                                           s.t_max / 100)
    diag = StepDiagnostics()
    ens, rec = evolve_ensemble(ens, params, model, s.t_max, dt, s.cadence, diagnostics=diag)
    a = rec.as_arrays()
    table = {k: a[k] for k in ("t", "mean_x", "var_x", "se_var_x", "mean_v", "var_v", "se_var_v")}
    files = {}
    if s.snapshots:
        files["ensemble.csv"] = csv_text({"id": ens.ids.astype(float), "x": ens.x, "v": ens.v})
    return RunResult(table, {"outside_support": diag.outside, "dt": dt, "backend": _backend.BACKEND}, files)


def _run_oracle(s, params, pot):
    from .oracle import reference_curve
    omega0 = s.omega0 if s.potential == "harmonic" else 0.0
    t = np.linspace(0.0, s.t_max, s.checkpoints + 1)
    curve = reference_curve(s.oracle, params, omega0, _initial_variance(s))
    return RunResult({"t": t, "value": np.asarray(curve(t), dtype=float)}, {"provenance": curve.provenance})


RUNNERS = {"kostin": _run_kostin, "smoluchowski": _run_diffusion, "nonlinear_smoluchowski": _run_diffusion,
           "phasespace": _run_phasespace, "langevin": _run_langevin, "oracle": _run_oracle}


def compute_scenario(s: Scenario) -> RunResult:
    """Run the solver in memory."""
    params = build_params(s)
    pot = build_potential(s)
    t0 = time.perf_counter()
    res = RUNNERS[s.solver](s, params, pot)
    res.diagnostics["wall_time"] = time.perf_counter() - t0
    return res


def _summary(s: Scenario, res: RunResult) -> dict:
    final = {k: float(np.asarray(v)[-1]) for k, v in res.table.items()}
    return {"solver": s.solver, "config_hash": s.config_hash(), "seed": s.seed, "backend": _backend.BACKEND,
            "final": final, "diagnostics": res.diagnostics, "wall_time": res.diagnostics.get("wall_time")}


def _write_outputs(directory, s: Scenario, res: RunResult):
    (directory / "timeseries.csv").write_text(csv_text(res.table))
    (directory / "config.echo").write_text(s.echo())
    (directory / "summary.json").write_text(json_text(_summary(s, res)))
    for name, content in res.files.items():
        path = directory / name
        if isinstance(content, bytes):
            path.write_bytes(content)
        else:
            path.write_text(content)


def run_scenario(s: Scenario, root=None):
    """Run and write outputs atomically; returns the output directory."""
    target = (output_root() if root is None else output_root(root)) / s.output_dir
    res = compute_scenario(s)
    with staged_directory(target) as stage:
        _write_outputs(stage, s, res)
    return target


# ----------------------------------------------------------------------------
# sweeps


def _mb_bin_l1(x: np.ndarray, sigma2: float, bins: int = 32) -> float:
    """L1 distance between the x-histogram and Gaussian bin probabilities on +-4 sigma."""
    sd = math.sqrt(sigma2)
    edges = np.linspace(-4 * sd, 4 * sd, bins + 1)
    cnt, _ = np.histogram(x, edges)
    prob = 0.5 * np.diff(erf(edges / (sd * math.sqrt(2))))
    return float(np.abs(cnt / x.size - prob).sum())


def sweep_error(s: Scenario, res: RunResult, oracle: str, metric: str) -> float:
    from .oracle import reference_curve
    params = build_params(s)
    if oracle == "mb":
        raise ConfigError("the mb oracle is evaluated on ensembles; use metric l1_marginal", "oracle")
    col = "sigma2" if "sigma2" in res.table else "var_x"
    t = np.asarray(res.table["t"])
    val = np.asarray(res.table[col])
    omega0 = s.omega0 if s.potential == "harmonic" else 0.0
    ref = np.asarray(reference_curve(oracle, params, omega0, _initial_variance(s))(t), dtype=float)
    sel = t > 0
    rel = np.abs(val[sel] - ref[sel]) / np.abs(ref[sel])
    if metric == "max_rel":
        return float(rel.max())
    if metric == "final_rel":
        return float(rel[-1])
    raise ConfigError(f"unknown metric {metric!r}", "metric")


def run_sweep(base: Scenario, key: str, raw_values: list, oracle: str | None = None,
              metric: str = "max_rel", root=None) -> dict:
    """Run one scenario per axis value, score each against an oracle and fit an order."""
    if key not in SCHEMA:
        raise ConfigError("unknown axis key", key)
    if SCHEMA[key][0] not in (int, float):
        raise ConfigError("sweep axes must be numeric", key)
    oracle = oracle or base.oracle
    if oracle not in SWEEP_ORACLES:
        raise ConfigError(f"unknown oracle {oracle!r}", "oracle")
    target = (output_root() if root is None else output_root(root)) / base.output_dir
    rows = []
    with staged_directory(target) as stage:
        for raw in raw_values:
            s = base.with_value(key, raw)
            if oracle == "mb" or metric == "l1_marginal":
                from .langevin import (ForceModel, GaussianSpec, evolve_ensemble, sample_wigner_initial)
                if s.solver != "langevin" or s.potential != "harmonic" or s.kT <= 0:
                    raise ConfigError("the mb oracle needs a thermal harmonic langevin scenario", "oracle")
                params = build_params(s)
                spec = GaussianSpec.thermal(params, s.omega0) if s.init == "thermal" else GaussianSpec(
                    s.init_mean, _initial_variance(s), s.init_v, 0.0)
                ens = sample_wigner_initial(spec, s.N, s.seed)
                dt = s.dt if s.dt is not None else min(0.01 / s.omega0, s.t_max / 100)
                t0 = time.perf_counter()
                ens, rec = evolve_ensemble(ens, params, ForceModel(build_potential(s), thermal=s.thermal),
                                           s.t_max, dt, s.cadence)
                a = rec.as_arrays()
                res = RunResult({k: a[k] for k in ("t", "mean_x", "var_x", "se_var_x", "mean_v", "var_v",
                                                   "se_var_v")}, {"wall_time": time.perf_counter() - t0})
                err = _mb_bin_l1(ens.x - 0.0, s.kT / (s.m * s.omega0**2))
            else:
                res = compute_scenario(s)
                err = sweep_error(s, res, oracle, metric)
            sub = stage / f"{key}={raw}"
            sub.mkdir()
            _write_outputs(sub, s, res)
            rows.append((float(s.values[key]), err))
        vals = np.array([r[0] for r in rows])
        errs = np.array([r[1] for r in rows])
        report = {"axis": key, "values": vals.tolist(), "errors": errs.tolist(), "oracle": oracle,
                  "metric": metric if oracle != "mb" else "l1_marginal",
                  "monotone_decreasing": bool(np.all(np.diff(errs) < 0)),
                  "monotone_increasing": bool(np.all(np.diff(errs) > 0)), "fitted_order": None}
        if key in RESOLUTION_AXES and len(rows) >= 2 and np.all(errs > 0):
            h = np.array([RESOLUTION_AXES[key](v) for v in vals])
            report["fitted_order"] = float(np.polyfit(np.log(h), np.log(errs), 1)[0])
        (stage / "sweep_report.json").write_text(json_text(report))
        (stage / "sweep_report.csv").write_text(csv_text({key: vals, "error": errs}))
        (stage / "config.echo").write_text(base.echo())
    return report


# ----------------------------------------------------------------------------
# command line


def _parse_params(text: str | None) -> dict:
    out = {}
    if not text:
        return out
    for item in text.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = (p.strip() for p in item.split("=", 1))
        if k not in ("m", "b", "kT", "hbar", "omega0", "sigma2_0"):
            raise ConfigError("unknown oracle parameter", k)
        out[k] = float(v)
    return out


def oracle_table(name: str, params_text: str | None, t_text: str | None) -> str:
    from .oracle import ORACLE_NAMES, equilibrium_references, reference_curve
    p = _parse_params(params_text)
    params = PhysicalParams(m=p.get("m", 1.0), b=p.get("b", 1.0), kT=p.get("kT", 0.0), hbar=p.get("hbar", 1.0))
    omega0 = p.get("omega0", 1.0)
    if name == "equilibrium":
        ref = equilibrium_references(params, PotentialSpec.harmonic(omega0, params.m))
        cols = {"ground_sigma2": [ref.ground_sigma2 if ref.ground_sigma2 is not None else math.nan],
                "classical_sigma2": [ref.classical_sigma2 if ref.classical_sigma2 is not None else math.nan]}
        return csv_text(cols)
    if name not in ORACLE_NAMES:
        raise ConfigError(f"unknown oracle {name!r}; choose from {', '.join(ORACLE_NAMES + ('equilibrium',))}")
    t = np.array([float(v) for v in t_text.split(",")]) if t_text else np.linspace(0.0, 1.0, 11)
    curve = reference_curve(name, params, omega0, p.get("sigma2_0", 0.0))
    return csv_text({"t": t, "value": np.asarray(curve(t), dtype=float)})


def compare_csv(path_a, path_b, metric: str) -> dict:
    a, b = read_csv(path_a), read_csv(path_b)
    cols = [k for k in a if k in b and k != "t"]
    if not cols:
        raise ConfigError("the two files share no data columns")
    if "t" in a and "t" in b:
        same = a["t"].shape == b["t"].shape and np.allclose(a["t"], b["t"], rtol=1e-12, atol=0)
        if not same:
            raise ConfigError("time columns differ")
    elif len(a[cols[0]]) != len(b[cols[0]]):
        raise ConfigError("files have different row counts")
    out = {}
    for k in cols:
        d = np.abs(a[k] - b[k])
        out[k] = float(d.mean()) if metric == "l1" else float(d.max())
    return out


def _error_record(kind: str, exc: BaseException, code: int):
    print(json.dumps({"error": kind, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def _read_config(path) -> Scenario:
    try:
        text = open(path).read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="qdiss", description="Dissipative quantum dynamics solvers.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("config")
    sw = sub.add_parser("sweep", help="run a scenario over one axis and score against an oracle")
    sw.add_argument("config")
    sw.add_argument("--axis", required=True, help="key=v1,v2,...")
    sw.add_argument("--oracle", choices=SWEEP_ORACLES)
    sw.add_argument("--metric", default="max_rel", choices=("max_rel", "final_rel", "l1_marginal"))
    o = sub.add_parser("oracle", help="print a reference table as CSV")
    o.add_argument("name")
    o.add_argument("--params", help="k=v,... from m, b, kT, hbar, omega0, sigma2_0")
    o.add_argument("--t", help="comma-separated times")
    c = sub.add_parser("compare", help="compare two CSV files column by column")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--metric", choices=("l1", "linf"), default="linf")
    args = ap.parse_args(argv)

    try:
        if args.cmd == "run":
            out = run_scenario(_read_config(args.config))
            print(out)
        elif args.cmd == "sweep":
            if "=" not in args.axis:
                raise ConfigError("--axis expects key=v1,v2,...")
            key, vals = args.axis.split("=", 1)
            report = run_sweep(_read_config(args.config), key.strip(),
                               [v.strip() for v in vals.split(",") if v.strip()], args.oracle, args.metric)
            print(json.dumps(report))
        elif args.cmd == "oracle":
            sys.stdout.write(oracle_table(args.name, args.params, args.t))
        else:
            print(json.dumps(compare_csv(args.a, args.b, args.metric), sort_keys=True))
    except ConfigError as exc:
        return _error_record("config", exc, EXIT_CONFIG)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _error_record("numerical", exc, EXIT_NUMERIC)
    except OSError as exc:
        return _error_record("io", exc, EXIT_IO)
    except ValueError as exc:
        return _error_record("config", exc, EXIT_CONFIG)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
