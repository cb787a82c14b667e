"""Command-line runner: ``reservoir-sense run <scenario>`` and ``reservoir-sense sweep``.

Configuration is INI-style ``key = value`` text with sections.  Values are
resolved in order: schema defaults, scenario defaults, config file, then
``--key value`` pairs on the command line.  Unknown keys are rejected.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import itertools
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, dynamics, qfi
from .exceptions import ConfigError, ReservoirSenseError
from .model import MATSUBARA_RTOL
from .scenarios import (COLUMNS, SCENARIO_DEFAULTS, build_jobs, finalize, grid_from,
                        probe_from, reservoir_from, sweep_point)

log = logging.getLogger("reservoir_sense")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3
SCENARIOS = tuple(COLUMNS)
MAX_AXIS_POINTS = 10_000
MAX_SWEEP_JOBS = 100_000


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text) -> list[float]:
    """``a, b, c`` or ``linspace(start, stop, n)``."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    t = str(text).strip()
    if t.startswith("linspace(") and t.endswith(")"):
        parts = [p.strip() for p in t[len("linspace("):-1].split(",")]
        if len(parts) != 3:
            raise ValueError("linspace needs (start, stop, n)")
        return [float(v) for v in np.linspace(float(parts[0]), float(parts[1]), int(parts[2]))]
    return [float(v) for v in t.split(",") if v.strip()]


def _choice(*options):
    def parse(text):
        t = str(text).strip()
        if t not in options:
            raise ValueError(f"expected one of {options}, got {t!r}")
        return t
    return parse


# key -> (section, parser, default)
SCHEMA = {
    "omega0": ("probe", float, 1.0),
    "omega0_thz": ("probe", float, 1.0),  # label only, all math is in omega0 units
    "theta": ("probe", float, 0.0),
    "alpha": ("probe", float, 0.0),
    "alpha_imag": ("probe", float, 0.0),
    "r": ("probe", float, 0.0),
    "F0": ("probe", float, 0.0),
    "omega_f": ("probe", float, 1.0),
    "gamma": ("reservoir", float, 3.0),
    "Omega": ("reservoir", float, 10.0),
    "temperature": ("reservoir", float, 1.0),
    "t_max": ("grid", float, 10.0),
    "n_points": ("grid", int, 401),
    "spacing": ("grid", _choice("uniform", "log"), "uniform"),
    "target": ("numerics", _choice("gamma", "Omega", "both"), "both"),
    "backend": ("numerics", _choice("expsum", "quad2d"), "expsum"),
    "n_matsubara": ("numerics", int, 0),
    "delta_rel": ("numerics", float, qfi.DELTA_REL),
    "literal_g6": ("numerics", _bool, False),
    "literal_xp": ("numerics", _bool, False),
    "oracle_modes": ("numerics", int, 0),
    "oracle_omega_max": ("numerics", float, 0.0),
    "temperatures": ("scan", _float_list, [1.0]),
    "rs": ("scan", _float_list, [0.0]),
    "thetas": ("scan", _float_list, [0.0]),
    "n_bars": ("scan", _float_list, [0.0]),
    "zetas": ("scan", _float_list, [0.0]),
    "omega_fs": ("scan", _float_list, [1.0]),
    "F0s": ("scan", _float_list, [0.0]),
    "plot": ("output", _bool, False),
}
SWEEPABLE = [k for k, (sec, _, _) in SCHEMA.items()
             if sec in ("probe", "reservoir") and k != "omega0_thz"]


def parse_value(key: str, text):
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r}")
    try:
        return SCHEMA[key][1](text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None


def read_config(path) -> tuple[dict, dict, str | None]:
    """Returns (settings, sweep axes as raw text, scenario or None)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (gamma vs Omega)
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    settings, axes, scenario = {}, {}, None
    for section in cp.sections():
        for key, text in cp.items(section):
            if section == "sweep":
                if key not in SWEEPABLE:
                    raise ConfigError(f"cannot sweep over {key!r}")
                axes[key] = text
            elif section == "run" and key == "scenario":
                scenario = text.strip()
            else:
                if key not in SCHEMA:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                if SCHEMA[key][0] != section:
                    raise ConfigError(f"key {key!r} belongs in [{SCHEMA[key][0]}], not [{section}]")
                settings[key] = parse_value(key, text)
    return settings, axes, scenario


def resolve(scenario: str, file_settings: dict | None = None,
            overrides: dict | None = None) -> dict:
    cfg = {k: spec[2] for k, spec in SCHEMA.items()}
    cfg.update(SCENARIO_DEFAULTS.get(scenario, {}))
    cfg.update(file_settings or {})
    cfg.update(overrides or {})
    return cfg


def validate(cfg: dict) -> None:
    """Builds every domain object once so bad parameters fail as usage errors."""
    try:
        probe_from(cfg)
        reservoir_from(cfg)
        grid_from(cfg)
    except ReservoirSenseError as exc:
        raise ConfigError(str(exc)) from None
    if cfg["n_matsubara"] < 0 or cfg["oracle_modes"] < 0 or not cfg["delta_rel"] > 0:
        raise ConfigError("n_matsubara, oracle_modes must be >= 0 and delta_rel > 0")


# -- output ----------------------------------------------------------------------

def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format_cell(v) for v in row])
    return buf.getvalue()


def _manifest_cell(v) -> str:
    # shortest round-trip repr; the data files keep the fixed 17 digits
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return format_cell(v)


def manifest_text(entries: dict) -> str:
    lines = []
    for k, v in entries.items():
        if isinstance(v, (list, tuple)):
            v = ", ".join(_manifest_cell(x) for x in v)
        else:
            v = _manifest_cell(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def tolerances() -> dict:
    return {
        "tol.delta_rel_default": qfi.DELTA_REL,
        "tol.pinv_rtol": qfi.PINV_RTOL,
        "tol.range_tol": qfi.RANGE_TOL,
        "tol.clip_tol": qfi.CLIP_TOL,
        "tol.physical_tol": qfi.PHYSICAL_TOL,
        "tol.quad_tol": dynamics.QUAD_TOL,
        "tol.near_pole": dynamics.NEAR_POLE,
        "tol.temperature_shift": dynamics.T_SHIFT,
        "tol.matsubara_rtol": MATSUBARA_RTOL,
    }


# plot blocks: scenario -> (group columns, x column, y columns)
PLOT_LAYOUT = {
    "fig2": (["r", "T"], "t", ["F_gamma", "F_Omega"]),
    "fig3": (["T"], "theta", ["maxF_gamma", "maxF_Omega"]),
    "fig4": (["target", "zeta"], "n_bar", ["maxF"]),
    "fig5": (["target"], "T", ["spp_inf", "spp_markov", "F_inf_exact"]),
    "fig6": (["scan", "target"], None, ["deltaF"]),
    "fig7": (["T"], "t", ["sxx_exact", "sxx_markov"]),
    "custom": ([], "t", ["F", "sxx", "spp"]),
}


def write_plot_files(out: Path, name: str, columns, rows) -> None:
    groups, xcol, ycols = PLOT_LAYOUT.get(name, ([], columns[0], columns[1:]))
    idx = {c: i for i, c in enumerate(columns)}
    blocks: dict[tuple, list] = {}
    for row in rows:
        blocks.setdefault(tuple(row[idx[g]] for g in groups), []).append(row)
    lines, titles = [], []
    for key, block in blocks.items():
        x = xcol
        if x is None:  # fig6: x axis depends on which scan the block belongs to
            x = block[0][idx["scan"]]
        label = ",".join(f"{g}={format_cell(v)}" for g, v in zip(groups, key)) or name
        titles.append((label, x))
        lines.append(f"# {label}")
        lines.append("# " + " ".join([x] + ycols))
        for row in block:
            lines.append(" ".join(format_cell(row[idx[c]]) for c in [x] + ycols))
        lines += ["", ""]
    (out / f"{name}.dat").write_text("\n".join(lines), encoding="utf-8")
    plots = []
    for i, (label, x) in enumerate(titles):
        for j, y in enumerate(ycols):
            plots.append(f"'{name}.dat' index {i} using 1:{j + 2} with lines title '{y} {label}'")
    script = [f"set xlabel '{titles[0][1] if titles else ''}'", "set key outside",
              "plot " + ", \\\n     ".join(plots)]
    (out / f"{name}.gp").write_text("\n".join(script) + "\n", encoding="utf-8")


# -- execution -------------------------------------------------------------------

def worker_count() -> int:
    env = os.environ.get("RS_WORKERS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"RS_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("RS_WORKERS must be >= 1")
        return n
    return os.cpu_count() or 1


def _call(job):
    fn, cfg, kwargs = job
    return fn(cfg, **kwargs)


def _call_safe(job):
    try:
        return _call(job), None
    except Exception as exc:  # recorded per point, the sweep continues
        return None, f"{type(exc).__name__}: {exc}"


def run_jobs(jobs, workers: int, safe: bool = False):
    """Ordered results; the first failure propagates unless ``safe``."""
    fn = _call_safe if safe else _call
    if workers <= 1 or len(jobs) <= 1:
        for job in jobs:
            yield fn(job)
        return
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        yield from pool.map(fn, jobs)


def run_scenario(scenario: str, cfg: dict, out_dir, verify: bool = False,
                 workers: int | None = None) -> int:
    """Runs one scenario and writes ``<scenario>.csv`` and ``<scenario>.manifest``."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    validate(cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = worker_count() if workers is None else workers
    jobs = [(fn, cfg, kw) for fn, kw in build_jobs(scenario, cfg, verify=verify)]
    start = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    rows, summary, failure = [], {}, None
    try:
        for job_rows, job_summary in run_jobs(jobs, workers):
            rows.extend(job_rows)
            summary.update(job_summary)
    except Exception as exc:
        failure = exc
        log.error("scenario %s failed: %s", scenario, exc)
    if failure is None:
        summary.update(finalize(scenario, rows, summary))
    manifest = {"timestamp": stamp, "version": __version__, "scenario": scenario,
                "verify": verify, "workers": workers, "jobs": len(jobs)}
    manifest.update({f"config.{k}": cfg[k] for k in sorted(cfg)})
    manifest.update(tolerances())
    manifest["wall_time_s"] = round(time.perf_counter() - start, 3)
    suffix = ""
    if failure is None:
        manifest["status"] = "ok"
    else:
        suffix = ".partial"
        manifest.update({"status": "error", "error_type": type(failure).__name__,
                         "error_message": str(failure).replace("\n", " "),
                         "rows_completed": len(rows)})
    manifest.update({f"result.{k}": v for k, v in summary.items()})
    (out / f"{scenario}.csv{suffix}").write_text(csv_text(COLUMNS[scenario], rows), encoding="utf-8")
    (out / f"{scenario}.manifest{suffix}").write_text(manifest_text(manifest), encoding="utf-8")
    if failure is None and cfg["plot"]:
        write_plot_files(out, scenario, COLUMNS[scenario], rows)
    return EXIT_OK if failure is None else EXIT_NUMERICAL


def sweep_axes(axes_text: dict) -> dict:
    if not 1 <= len(axes_text) <= 3:
        raise ConfigError("a sweep needs between one and three axes in [sweep]")
    axes = {}
    for key, text in axes_text.items():
        try:
            values = _float_list(text)
        except ValueError as exc:
            raise ConfigError(f"bad sweep axis {key!r}: {exc}") from None
        if not 1 <= len(values) <= MAX_AXIS_POINTS:
            raise ConfigError(f"axis {key!r} needs 1..{MAX_AXIS_POINTS} points")
        if SCHEMA[key][1] is int:
            values = [int(v) for v in values]
        axes[key] = values
    if math.prod(len(v) for v in axes.values()) > MAX_SWEEP_JOBS:
        raise ConfigError(f"sweep exceeds {MAX_SWEEP_JOBS} points")
    return axes


def run_sweep(cfg: dict, axes: dict, out_dir, workers: int | None = None) -> int:
    """Cartesian product of the axes in the given order; one row per point."""
    if cfg["target"] == "both":
        cfg = dict(cfg, target="gamma")
        log.info("sweep target 'both' narrowed to 'gamma'")
    validate(cfg)
    names = list(axes)
    points = list(itertools.product(*axes.values()))
    jobs = [(_sweep_job_entry, dict(cfg, **dict(zip(names, p))), {}) for p in points]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    workers = worker_count() if workers is None else workers
    start = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    rows, n_err = [], 0
    for p, (res, err) in zip(points, run_jobs(jobs, workers, safe=True)):
        if err is None:
            rows.append(list(p) + list(res) + [""])
        else:
            n_err += 1
            rows.append(list(p) + [math.nan] * 3 + [err])
    columns = names + ["t_star", "F_star", "F_inf", "error"]
    manifest = {"timestamp": stamp, "version": __version__, "scenario": "sweep",
                "workers": workers, "jobs": len(jobs)}
    manifest.update({f"sweep.{k}": v for k, v in axes.items()})
    manifest.update({f"config.{k}": cfg[k] for k in sorted(cfg) if k not in axes})
    manifest.update(tolerances())
    manifest["wall_time_s"] = round(time.perf_counter() - start, 3)
    manifest["status"] = "ok" if n_err == 0 else "partial"
    manifest["failed_points"] = n_err
    (out / "sweep.csv").write_text(csv_text(columns, rows), encoding="utf-8")
    (out / "sweep.manifest").write_text(manifest_text(manifest), encoding="utf-8")
    return EXIT_OK if n_err == 0 else EXIT_PARTIAL


def _sweep_job_entry(cfg):
    return sweep_point(cfg)


# -- argument parsing ------------------------------------------------------------

class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="reservoir-sense",
                description="Quantum Fisher information of a harmonic probe in a structured reservoir.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run a figure scenario or a custom point",
                         epilog="Any config key may be given as --key value.")
    run.add_argument("scenario", choices=SCENARIOS)
    run.add_argument("--config", help="INI config file")
    run.add_argument("--verify", action="store_true",
                     help="check the moments against the explicit-bath simulation (custom only)")
    run.add_argument("--out", default="results", help="output directory")
    sw = sub.add_parser("sweep", help="grid sweep defined in a config file")
    sw.add_argument("--config", required=True, help="INI config with a [sweep] section")
    sw.add_argument("--out", default=None, help="output directory")
    return p


def parse_overrides(extra: list[str]) -> dict:
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, text = key.split("=", 1)
        else:
            text = next(it, None)
            if text is None:
                raise ConfigError(f"missing value for --{key}")
        key = key.replace("-", "_")
        out[key] = parse_value(key, text)
    return out


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RS_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if args.command == "run":
            overrides = parse_overrides(extra)
            file_settings = read_config(args.config)[0] if args.config else {}
            cfg = resolve(args.scenario, file_settings, overrides)
            if args.verify and args.scenario != "custom":
                raise ConfigError("--verify is only available for the custom scenario")
            return run_scenario(args.scenario, cfg, args.out, verify=args.verify)
        if extra:
            raise ConfigError(f"sweep takes its settings from the config file, got {extra}")
        settings, axes_text, _ = read_config(args.config)
        out = args.out or "results"
        return run_sweep(resolve("custom", settings), sweep_axes(axes_text), out)
    except (UsageError, ConfigError) as exc:
        print(f"reservoir-sense: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ReservoirSenseError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"reservoir-sense: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
