"""Command-line driver: ``spinmz <command> --config file.ini``.

Config files are INI. Every section has a fixed schema (see ``SCHEMA``);
unknown sections or keys are errors. Quantities accept the unit grammar of
:mod:`spinmz.units`. Lists are comma separated.

Outputs go to ``--out`` (default ``[run] out``). CSV and JSON outputs depend
only on the config and seed, never on ``--threads``. Each invocation appends
one record to ``runs.jsonl`` with the resolved config snapshot, the library
version, the output files and wall-clock timings.

Exit codes: 0 success, 1 validation or adiabaticity failure, 2 configuration
error.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .boson_validation import SpinBosonSystem, effective_prefactor
from .circuit_readout import readout_sequence
from .collective_spin import cat_state, make_basis
from .decoherence import (
    GAMMA_CONVENTIONS,
    DephasingParams,
    coherence_magnitude,
    dephase_analytic,
    dephase_numeric,
    dephasing_rate,
    ghz_initial,
    trace_distance,
    write_decoherence_csv,
)
from .dynamics import free_evolve
from .metrology import metrology_summary_json, monte_carlo_estimate, uncertainty_curve, write_metrology_csv
from .model import PhysicalParams, spectrum_physical, gamma0_from_physical, lambda_from_physical, dephasing_physical
from .parallel import default_workers
from .protocol import AdiabaticityError, ProtocolConfig, fringe_scan, ideal_readout, suggested_dt, write_fringe_csv
from .spectra import degeneracy_threshold, spectrum_sweep, write_spectrum_csv
from .units import UnitError, parse_frequency, parse_ramp_rate, parse_time

__all__ = ["SCHEMA", "ConfigError", "RunConfig", "RunLogRecord", "parse_config", "load_config",
           "config_snapshot", "main", "COMMANDS"]

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- value types

@dataclass(frozen=True)
class _Type:
    name: str
    parse: object
    fmt: object


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ConfigError(f"not an integer: {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text.strip())
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def _list_of(t: _Type) -> _Type:
    def parse(text):
        items = [x for x in text.split(",") if x.strip()]
        if not items:
            raise ConfigError("empty list")
        return tuple(t.parse(x) for x in items)
    return _Type(f"list of {t.name}", parse, lambda v: ", ".join(t.fmt(x) for x in v))


def _choice(*options: str) -> _Type:
    def parse(text):
        value = text.strip()
        if value not in options:
            raise ConfigError(f"{value!r} not one of {options}")
        return value
    return _Type("one of " + "|".join(options), parse, str)


_fmt_float = lambda v: repr(float(v))  # noqa: E731

INT = _Type("integer", _parse_int, str)
FLOAT = _Type("number", _parse_float, _fmt_float)
BOOL = _Type("boolean", _parse_bool, lambda v: "true" if v else "false")
STR = _Type("string", lambda s: s.strip(), str)
FREQ = _Type("angular frequency", parse_frequency, _fmt_float)
TIME = _Type("time", parse_time, _fmt_float)
RATE = _Type("ramp rate", parse_ramp_rate, _fmt_float)
INTS = _list_of(INT)

# section -> key -> (type, default). A default of None means "derived" or "off".
SCHEMA: dict[str, dict[str, tuple[_Type, object]]] = {
    "run": {
        "out": (STR, "out"),
        "threads": (INT, 0),          # 0: all available cores
        "seed": (INT, 0),
        "svg": (BOOL, False),
    },
    "physical": {
        "omega_z": (FREQ, None),
        "eta_z": (FLOAT, None),
        "big_delta": (FREQ, None),
        "nu": (FREQ, 2 * math.pi * 1e6),
        "omega0": (FREQ, 2 * math.pi * 3e9),
        "gamma0_prime": (FREQ, 2 * math.pi * 20e6),
        "delta_prime": (FREQ, 2 * math.pi * 20e9),
    },
    "spectrum": {
        "n_ions": (INTS, (10, 40)),
        "lambda": (FREQ, None),
        "delta": (FREQ, None),
        "delta_over_lambda": (FLOAT, 0.0),
        "bx_max_over_lambda": (FLOAT, None),  # default: N
        "bx_points": (INT, 201),
        "refine_below": (FLOAT, 1e-8),
        "degeneracy_eps_over_lambda": (FLOAT, 1e-9),
    },
    "protocol": {
        "n_ions": (INT, 10),
        "lambda": (FREQ, None),
        "alpha": (FREQ, 2 * math.pi * 5e5),
        "beta": (RATE, 2 * math.pi * 5e7),
        "delta_recombine": (FREQ, None),
        "t_free": (TIME, 5e-3),
        "dt": (TIME, None),
        "phase_per_step": (FLOAT, 0.4),
        "phase_points": (INT, 32),
        "shots": (INT, None),
        "recombine_sign": (INT, -1),
        "adiabatic_floor": (FLOAT, 0.98),
        "leakage_tol": (FLOAT, 0.02),
        "initial": (_choice("coherent", "ground"), "coherent"),
        "strict": (BOOL, False),              # raise on non-adiabatic passages
    },
    "decoherence": {
        "n_ions": (INTS, (2, 4, 8)),
        "gamma0": (FLOAT, None),             # 1/s; default from the physical chain
        "convention": (_choice(*GAMMA_CONVENTIONS), "single_ion"),
        "n_reference": (INT, 40),
        "omega0": (FREQ, 0.0),                # rotating frame by default
        "t_max": (TIME, 5e-3),
        "t_points": (INT, 51),
        "method": (_choice("analytic", "numeric", "both"), "both"),
        "dt": (TIME, None),
        "tolerance": (FLOAT, 1e-8),
    },
    "metrology": {
        "n_grid": (INTS, tuple(range(1, 41))),
        "t_free": (TIME, 5e-3),
        "k": (INT, 100),
        "gamma0": (FLOAT, None),
        "omega0": (FREQ, 2 * math.pi * 3e9),
        "convention": (_choice(*GAMMA_CONVENTIONS), "single_ion"),
        "n_reference": (INT, 40),
        "monte_carlo": (BOOL, False),
        "mc_n_ions": (INT, 3),
        "mc_estimates": (INT, 200),
        "mc_alpha": (FREQ, 2 * math.pi * 5e5),
        "mc_beta": (RATE, 2 * math.pi * 5e7),
        "mc_lambda": (FREQ, None),
        "mc_phase_per_step": (FLOAT, 0.4),
    },
    "validate": {
        "n_ions": (INT, 4),
        "n_max": (INT, 60),
        "omega_z": (FREQ, None),
        "eta_z": (FLOAT, None),
        "big_delta": (FREQ, None),
        "residual_tol": (FLOAT, 1e-8),
        "readout_n_ions": (INT, 5),
        "readout_phases": (INT, 16),
        "readout_tol": (FLOAT, 1e-10),
    },
}

COMMANDS = ("spectrum", "protocol", "decoherence", "metrology", "validate")


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration: every schema key of the present sections."""

    sections: dict

    def get(self, section: str, key: str):
        if section in self.sections:
            return self.sections[section][key]
        return SCHEMA[section][key][1]

    def has(self, section: str) -> bool:
        return section in self.sections

    def with_overrides(self, **run_values) -> "RunConfig":
        sections = {name: dict(values) for name, values in self.sections.items()}
        run = sections.setdefault("run", {k: d for k, (_, d) in SCHEMA["run"].items()})
        for key, value in run_values.items():
            if value is not None:
                run[key] = value
        return RunConfig(sections)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__",
                                       inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    sections = {}
    for name in parser.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]; known: {', '.join(SCHEMA)}")
        schema = SCHEMA[name]
        values = {key: default for key, (_, default) in schema.items()}
        for key, raw in parser.items(name):
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{name}]; known: {', '.join(schema)}")
            kind = schema[key][0]
            if raw.strip().lower() == "none" and schema[key][1] is None:
                values[key] = None
                continue
            try:
                values[key] = kind.parse(raw)
            except (ConfigError, UnitError) as exc:
                raise ConfigError(f"[{name}] {key}: expected {kind.name}: {exc}") from None
        sections[name] = values
    return RunConfig(sections)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def config_snapshot(cfg: RunConfig) -> str:
    """INI text that re-parses to ``cfg`` exactly (values in SI, repr floats)."""
    out = io.StringIO()
    for name in SCHEMA:
        if name not in cfg.sections:
            continue
        out.write(f"[{name}]\n")
        for key, (kind, _) in SCHEMA[name].items():
            value = cfg.sections[name][key]
            out.write(f"{key} = {'none' if value is None else kind.fmt(value)}\n")
        out.write("\n")
    return out.getvalue()


# ---------------------------------------------------------------- outputs

@dataclass
class RunLogRecord:
    """One line of ``runs.jsonl``."""

    command: str
    status: str
    exit_code: int
    config: str
    version: str = __version__
    outputs: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    error: str = ""

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


class _Outputs:
    def __init__(self, root: Path, svg: bool):
        self.root = root
        self.svg = svg
        self.files: list[str] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        return p

    def write_json(self, name: str, obj) -> Path:
        return self.write_text(name, json.dumps(_jsonable(obj), sort_keys=True, indent=2))

    def plot(self, name: str, x, series: dict, *, xlabel: str, ylabel: str, logy: bool = False):
        if not self.svg:
            return
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        with matplotlib.rc_context({"svg.hashsalt": "spinmz", "svg.fonttype": "none"}):
            fig, ax = plt.subplots(figsize=(6, 4))
            for label, y in series.items():
                ax.plot(x, y, label=label)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if logy:
                ax.set_yscale("log")
            ax.legend()
            fig.tight_layout()
            fig.savefig(self.path(name), format="svg", metadata={"Date": None})
            plt.close(fig)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _physical(cfg: RunConfig, n: int, fallback) -> PhysicalParams:
    """Physical parameters from ``[physical]``, or the named built-in set."""
    if not cfg.has("physical"):
        return fallback(n)
    sec = cfg.sections["physical"]
    missing = [k for k in ("omega_z", "eta_z", "big_delta") if sec[k] is None]
    if missing:
        raise ConfigError(f"[physical] requires {', '.join(missing)}")
    return PhysicalParams(n_ions=n, **sec)


# ---------------------------------------------------------------- commands

def cmd_spectrum(cfg: RunConfig, out: _Outputs, workers: int) -> tuple[bool, dict]:
    sec = "spectrum"
    ok, diag = True, {}
    for n in cfg.get(sec, "n_ions"):
        lam = cfg.get(sec, "lambda")
        if lam is None:
            lam = lambda_from_physical(_physical(cfg, n, spectrum_physical))
        delta = cfg.get(sec, "delta")
        if delta is None:
            delta = cfg.get(sec, "delta_over_lambda") * lam
        bx_max = cfg.get(sec, "bx_max_over_lambda")
        bx_max = (n if bx_max is None else bx_max) * lam
        grid = np.linspace(0.0, bx_max, cfg.get(sec, "bx_points"))
        sweep = spectrum_sweep(make_basis(n), lam, delta, grid, workers=workers,
                               refine_below=cfg.get(sec, "refine_below"))
        write_spectrum_csv(sweep, out.path(f"spectrum_N{n}.csv"))
        out.plot(f"spectrum_N{n}.svg", grid / lam, {"E0/lambda": sweep.e0 / lam, "E1/lambda": sweep.e1 / lam},
                 xlabel="Bx / lambda", ylabel="E / lambda")
        positive = bool(np.all(sweep.gap[grid > 0] > 0))
        ok &= positive
        eps = cfg.get(sec, "degeneracy_eps_over_lambda") * lam
        diag[f"N{n}"] = {
            "lambda": lam, "delta": delta,
            "gap_at_zero": float(sweep.gap[0]),
            "min_gap_positive_bx": float(sweep.gap[grid > 0].min()) if grid.size > 1 else None,
            "gap_positive_for_bx_gt_0": positive,
            "degeneracy_threshold": degeneracy_threshold(sweep, eps),
        }
    out.write_json("spectrum_summary.json", diag)
    return ok, diag


def _protocol_config(n: int, lam: float, alpha: float, beta: float, pps: float, **kw) -> ProtocolConfig:
    base = ProtocolConfig(make_basis(n), lam, alpha, beta, **kw)
    if base.dt is None:
        kw["dt"] = suggested_dt(base, pps)
        base = ProtocolConfig(make_basis(n), lam, alpha, beta, **kw)
    return base


def cmd_protocol(cfg: RunConfig, out: _Outputs, workers: int) -> tuple[bool, dict]:
    sec = "protocol"
    g = lambda k: cfg.get(sec, k)  # noqa: E731
    n = g("n_ions")
    lam = g("lambda")
    if lam is None:
        lam = lambda_from_physical(_physical(cfg, n, spectrum_physical))
    config = _protocol_config(
        n, lam, g("alpha"), g("beta"), g("phase_per_step"),
        delta_recombine=g("delta_recombine"), t_free=g("t_free"), dt=g("dt"), shots=g("shots"),
        rng_seed=cfg.get("run", "seed"), recombine_sign=g("recombine_sign"),
        adiabatic_floor=g("adiabatic_floor"), leakage_tol=g("leakage_tol"), initial=g("initial"), strict=g("strict"),
    )
    grid = np.linspace(0.0, 2 * math.pi, g("phase_points"), endpoint=False)
    result = fringe_scan(config, grid, workers=workers, keep_records=True)
    write_fringe_csv(result, out.path(f"fringe_N{n}.csv"))
    out.plot(f"fringe_N{n}.svg", grid, {"p_a": result.p_pole_a, "p_b": result.p_pole_b,
                                        "fit": result.fitted_curve()},
             xlabel="phi = omega0 T (rad)", ylabel="probability")
    first = result.records[0]
    ideal_a = np.cos(n * grid / 2) ** 2
    flags = {k: any(r.flags[k] for r in result.records) for k in first.flags}
    flags["fit"] = not result.fit_ok
    diag = {
        "params": config.as_dict(),
        "split_fidelity": first.split_fidelity,
        "diagnostics": first.diagnostics,
        "total_duration": first.total_duration,
        "visibility": result.visibility,
        "fitted_period": result.fitted_period,
        "period_relative_error": abs(result.fitted_period * n / (2 * math.pi) - 1),
        "fit_params": result.fit_params,
        "fit_message": result.message,
        "max_deviation_from_cos2": float(np.max(np.abs(result.p_pole_a - ideal_a))),
        "max_leakage": max(r.leakage for r in result.records),
        "flags": flags,
    }
    out.write_json(f"protocol_N{n}.json", diag)
    return not any(flags.values()), {"flags": flags, "visibility": result.visibility}


def _gamma0(cfg: RunConfig, sec: str, n: int) -> float:
    g0 = cfg.get(sec, "gamma0")
    return gamma0_from_physical(_physical(cfg, n, dephasing_physical)) if g0 is None else g0


def cmd_decoherence(cfg: RunConfig, out: _Outputs, workers: int) -> tuple[bool, dict]:
    sec = "decoherence"
    g = lambda k: cfg.get(sec, k)  # noqa: E731
    times = np.linspace(0.0, g("t_max"), g("t_points"))
    method = g("method")
    ok, diag = True, {}
    rates = []
    ns = g("n_ions")
    for n in ns:
        basis = make_basis(n)
        gamma = dephasing_rate(_gamma0(cfg, sec, n), n, g("convention"), g("n_reference"))
        p = DephasingParams(g("omega0"), gamma)
        rho0 = ghz_initial(basis)
        analytic = [dephase_analytic(rho0, p, float(t)) for t in times]
        entry = {"gamma": gamma, "gamma_n2_tmax": gamma * n * n * float(times[-1])}
        if method in ("analytic", "both"):
            write_decoherence_csv(times, analytic, out.path(f"decoherence_N{n}_analytic.csv"))
        if method in ("numeric", "both"):
            numeric = [rho0]
            for t0, t1 in zip(times[:-1], times[1:]):
                numeric.append(dephase_numeric(numeric[-1], p, float(t1 - t0), g("dt")))
            write_decoherence_csv(times, numeric, out.path(f"decoherence_N{n}_numeric.csv"))
            dist = max(trace_distance(a, b) for a, b in zip(analytic, numeric))
            entry["max_trace_distance"] = dist
            ok &= dist <= g("tolerance")
        coh = np.array([coherence_magnitude(r) for r in analytic])
        mask = coh > 1e-300
        slope = np.polyfit(times[mask], np.log(coh[mask]), 1)[0] if mask.sum() > 1 else float("nan")
        entry["decay_rate"] = float(-slope)
        rates.append(-slope)
        diag[f"N{n}"] = entry
        out.plot(f"decoherence_N{n}.svg", times, {"|rho(+N/2,-N/2)|": coh},
                 xlabel="t (s)", ylabel="coherence")
    if len(ns) > 1 and all(r > 0 for r in rates):
        exponent = float(np.polyfit(np.log(ns), np.log(rates), 1)[0])
        diag["decay_rate_exponent_in_N"] = exponent
    out.write_json("decoherence_summary.json", diag)
    return bool(ok), diag


def cmd_metrology(cfg: RunConfig, out: _Outputs, workers: int) -> tuple[bool, dict]:
    sec = "metrology"
    g = lambda k: cfg.get(sec, k)  # noqa: E731
    n_grid = np.array(g("n_grid"))
    g0 = _gamma0(cfg, sec, int(n_grid.max()))
    curve = uncertainty_curve(n_grid, g("t_free"), g("k"), g0, g("omega0"),
                              convention=g("convention"), n_reference=g("n_reference"))
    write_metrology_csv(curve, out.path("metrology.csv"))
    norm = curve.normalized()
    out.plot("metrology.svg", n_grid, {"entangled": norm["entangled"], "SQL": norm["sql"], "HL": norm["hl"]},
             xlabel="N", ylabel="delta omega / omega0", logy=True)
    mc = None
    ok = True
    if g("monte_carlo"):
        n = g("mc_n_ions")
        lam = g("mc_lambda")
        if lam is None:
            lam = lambda_from_physical(_physical(cfg, n, dephasing_physical))
        config = _protocol_config(n, lam, g("mc_alpha"), g("mc_beta"), g("mc_phase_per_step"),
                                  t_free=g("t_free"))
        gamma = dephasing_rate(_gamma0(cfg, sec, n), n, g("convention"), g("n_reference"))
        mc = monte_carlo_estimate(config, g("k"), cfg.get("run", "seed"), gamma=gamma,
                                  n_estimates=g("mc_estimates"))
        ok = not mc.flagged
    summary = metrology_summary_json(curve, mc)
    out.write_text("metrology_summary.json", summary)
    return ok, json.loads(summary)


def cmd_validate(cfg: RunConfig, out: _Outputs, workers: int) -> tuple[bool, dict]:
    sec = "validate"
    g = lambda k: cfg.get(sec, k)  # noqa: E731
    n = g("n_ions")
    fallback = _physical(cfg, n, spectrum_physical)
    system = SpinBosonSystem(
        make_basis(n), g("n_max"),
        fallback.omega_z if g("omega_z") is None else g("omega_z"),
        fallback.eta_z if g("eta_z") is None else g("eta_z"),
        fallback.big_delta if g("big_delta") is None else g("big_delta"),
    )
    report = effective_prefactor(system, residual_tol=g("residual_tol"), workers=workers)
    out.write_text("boson_report.json", report.to_json())
    out.write_text("boson_summary.txt", report.summary())

    nr = g("readout_n_ions")
    basis = make_basis(nr)
    phases = np.linspace(0.0, 2 * math.pi, g("readout_phases"), endpoint=False)
    rows, worst = [], 0.0
    for phi in phases:
        circuit = readout_sequence(cat_state(basis), phase=float(phi))
        ideal = ideal_readout(free_evolve(cat_state(basis), phase=float(phi)))
        exact = (math.cos(nr * phi / 2) ** 2, math.sin(nr * phi / 2) ** 2)
        err = max(abs(circuit[0] - exact[0]), abs(circuit[1] - exact[1]),
                  abs(circuit[0] - ideal[0]), abs(circuit[1] - ideal[1]))
        worst = max(worst, err)
        rows.append([phi, *circuit, *ideal, *exact])
    path = out.path(f"readout_N{nr}.csv")
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("phi,circuit_down,circuit_up,collective_a,collective_b,cos2,sin2\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    readout_ok = worst <= g("readout_tol")
    diag = {"boson_flagged": report.flagged, "ratio_to_model": report.ratio_to_model,
            "readout_max_error": worst, "readout_ok": readout_ok}
    return (not report.flagged) and readout_ok, diag


_DISPATCH = {
    "spectrum": cmd_spectrum,
    "protocol": cmd_protocol,
    "decoherence": cmd_decoherence,
    "metrology": cmd_metrology,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------- entry point

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spinmz", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--out", help="output directory (overrides [run] out)")
    ap.add_argument("--threads", type=int, help="worker processes (0 = all cores)")
    ap.add_argument("--seed", type=int, help="RNG seed, unsigned 64-bit (overrides [run] seed)")
    ap.add_argument("--version", action="version", version=f"spinmz {__version__}")
    return ap


def main(argv=None) -> int:
    ap = _build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    started = time.perf_counter()
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 0:
            raise ConfigError("--threads must be >= 0")
        cfg = load_config(args.config).with_overrides(out=args.out, threads=args.threads, seed=args.seed)
        if not 0 <= cfg.get("run", "seed") < 2**64:
            raise ConfigError("[run] seed must be an unsigned 64-bit integer")
    except ConfigError as exc:
        print(f"spinmz: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    threads = cfg.get("run", "threads") or default_workers()
    out = _Outputs(Path(cfg.get("run", "out")), cfg.get("run", "svg"))
    record = RunLogRecord(command=args.command, status="ok", exit_code=EXIT_OK, config=config_snapshot(cfg))
    try:
        ok, diag = _DISPATCH[args.command](cfg, out, threads)
        record.diagnostics = _jsonable(diag)
        if not ok:
            record.status, record.exit_code = "validation_failed", EXIT_FAILED
    except AdiabaticityError as exc:
        record.status, record.exit_code, record.error = "adiabaticity_failed", EXIT_FAILED, str(exc)
    except (ConfigError, UnitError, ValueError) as exc:
        record.status, record.exit_code, record.error = "config_error", EXIT_CONFIG, str(exc)
    record.outputs = list(out.files)
    record.timings = {"wall_seconds": time.perf_counter() - started, "threads": threads}
    with (out.root / "runs.jsonl").open("a", encoding="utf-8") as fh:
        fh.write(record.to_json() + "\n")
    if record.error:
        print(f"spinmz: {record.status}: {record.error}", file=sys.stderr)
    elif record.exit_code:
        print(f"spinmz: {args.command}: validation failed; see {out.root / 'runs.jsonl'}", file=sys.stderr)
    return record.exit_code


if __name__ == "__main__":
    sys.exit(main())
