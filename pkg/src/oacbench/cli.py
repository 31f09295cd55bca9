"""Command line front end: run scenarios, analyze traces, list options.

Exit codes follow the usual batch-tool convention: 0 on success, 1 for
configuration problems (the message names the valid choices), 2 when a
simulation aborted mid-run.  An aborted run still writes the partial trace
so the failure can be inspected offline.

Run settings resolve in three layers: built-in defaults, then a YAML config
file (``--config`` or the ``OACBENCH_CONFIG`` environment variable), then
command line flags, with ``--set`` parameter overrides applied last.
``run_meta.json`` written next to each trace echoes the fully resolved
configuration and is sufficient to reproduce the run bit for bit (see
``run_from_meta``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import yaml

from .controllers import CONTROLLERS, ControllerParams
from .metrics import report, write_curves, write_metrics
from .scenario_sim import (
    SCENARIOS,
    Scenario,
    SimConfig,
    TargetReference,
    Trace,
    load_scenario,
    read_trace,
    run,
    scenario_from_dict,
    scenario_to_dict,
    write_trace,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORTED = 2

ENV_CONFIG = "OACBENCH_CONFIG"

_PARAM_FIELDS = tuple(f.name for f in dataclasses.fields(ControllerParams))
_CONFIG_KEYS = (
    "scenario", "controller", "dt", "duration", "k_p", "decay_rate",
    "out", "params",
)

_CONTROLLER_NOTES = {
    "baseline": "tracks the task velocity; no obstacle terms",
    "flacco": "repulsive end-effector velocity plus per-joint speed caps"
              " near obstacles",
    "ding": "approach-speed inequality rows plus a weighted"
            " escape-direction row",
    "escobedo": "approach-speed rows, goal-speed scaling near obstacles,"
                " mid-range posture pull",
}


class ConfigError(Exception):
    """User-facing configuration problem; the message names valid options."""


# --- settings resolution ----------------------------------------------------------


def _load_config_file(path) -> dict:
    try:
        with open(path) as handle:
            data = yaml.safe_load(handle)
    except OSError as error:
        raise ConfigError(f"cannot read config file: {error}") from None
    except yaml.YAMLError as error:
        raise ConfigError(f"bad YAML in config file {path}: {error}") from None
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    extra = sorted(set(data) - set(_CONFIG_KEYS))
    if extra:
        raise ConfigError(
            f"unknown config keys {extra}; known: {', '.join(_CONFIG_KEYS)}"
        )
    params = data.get("params")
    if params is not None and not isinstance(params, dict):
        raise ConfigError("config key 'params' must be a mapping")
    return data


def _parse_set(entries) -> dict:
    overrides = {}
    for entry in entries or ():
        key, sep, raw = entry.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VALUE, got {entry!r}")
        try:
            overrides[key] = yaml.safe_load(raw)
        except yaml.YAMLError as error:
            raise ConfigError(f"bad --set value {entry!r}: {error}") from None
    return overrides


def _build_params(overrides: dict) -> ControllerParams:
    unknown = sorted(set(overrides) - set(_PARAM_FIELDS))
    if unknown:
        raise ConfigError(
            f"unknown controller parameter(s) {unknown};"
            f" valid: {', '.join(_PARAM_FIELDS)}"
        )
    cleaned = {}
    for key, value in overrides.items():
        if key == "static_control_links":
            cleaned[key] = None if value is None else tuple(
                int(v) for v in value
            )
        else:
            cleaned[key] = float(value)
    try:
        return ControllerParams(**cleaned)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"invalid controller parameters: {error}") from None


def _resolve_scenario(token: str) -> Scenario:
    if token in SCENARIOS:
        return SCENARIOS[token]()
    path = Path(token)
    if path.exists():
        try:
            return load_scenario(path)
        except (TypeError, ValueError) as error:
            raise ConfigError(f"bad scenario file {token}: {error}") from None
        except yaml.YAMLError as error:
            raise ConfigError(
                f"bad YAML in scenario file {token}: {error}"
            ) from None
    known = ", ".join(sorted(SCENARIOS))
    raise ConfigError(
        f"unknown scenario {token!r}; valid ids: {known}"
        " (or pass a YAML scenario file path)"
    )


def _check_controller(name: str) -> str:
    if name not in CONTROLLERS:
        known = ", ".join(sorted(CONTROLLERS))
        raise ConfigError(f"unknown controller {name!r}; valid ids: {known}")
    return name


# --- reproducible job descriptions ------------------------------------------------


def job_meta(scenario: Scenario, config: SimConfig) -> dict:
    """Everything needed to repeat a run and get identical bytes back."""
    params = dataclasses.asdict(config.params)
    links = params["static_control_links"]
    if links is not None:
        params["static_control_links"] = list(links)
    return {
        "scenario": scenario_to_dict(scenario),
        "controller": config.controller,
        "dt": config.dt,
        "k_p": config.k_p,
        "decay_rate": config.decay_rate,
        "params": params,
    }


def run_from_meta(meta: dict) -> Trace:
    """Re-run a simulation from a ``run_meta.json`` payload."""
    scenario = scenario_from_dict(meta["scenario"])
    config = SimConfig(
        controller=meta["controller"],
        dt=float(meta["dt"]),
        k_p=float(meta["k_p"]),
        params=_build_params(dict(meta["params"])),
        decay_rate=float(meta["decay_rate"]),
    )
    return run(scenario, config)


def _execute_job(meta: dict, out_dir: str) -> tuple[int, str]:
    """Run one job and write its outputs; returns (exit code, note)."""
    trace = run_from_meta(meta)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "trace.csv"
    write_trace(trace, trace_path)
    with open(out / "run_meta.json", "w") as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
        handle.write("\n")
    if "aborted" in trace.meta:
        note = (f"{trace_path}: run aborted at {trace.meta['aborted']};"
                " partial trace written")
        return EXIT_ABORTED, note
    return EXIT_OK, f"wrote {trace_path}"


# --- subcommands -------------------------------------------------------------------


def cmd_run(args) -> int:
    settings = {
        "scenario": "srdo",
        "controller": "baseline",
        "dt": 0.01,
        "duration": None,
        "k_p": 2.0,
        "decay_rate": 0.4,
        "out": ".",
    }
    params: dict = {}

    config_path = args.config or os.environ.get(ENV_CONFIG)
    if config_path:
        file_data = _load_config_file(config_path)
        params.update(file_data.pop("params", None) or {})
        settings.update(file_data)
    for key in ("scenario", "controller", "dt", "duration", "out"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    params.update(_parse_set(args.set))

    scenarios = [
        _resolve_scenario(tok)
        for tok in str(settings["scenario"]).split(",") if tok
    ]
    controllers = [
        _check_controller(tok)
        for tok in str(settings["controller"]).split(",") if tok
    ]
    if not scenarios or not controllers:
        raise ConfigError("need at least one scenario and one controller")

    built = _build_params(params)
    jobs = []
    out_root = Path(settings["out"])
    multi = len(scenarios) * len(controllers) > 1
    try:
        duration = settings["duration"]
        for scenario in scenarios:
            if duration is not None:
                scenario = dataclasses.replace(
                    scenario, duration=float(duration)
                )
            for controller in controllers:
                config = SimConfig(
                    controller=controller,
                    dt=float(settings["dt"]),
                    k_p=float(settings["k_p"]),
                    params=built,
                    decay_rate=float(settings["decay_rate"]),
                )
                sub = (out_root / f"{scenario.name}_{controller}"
                       if multi else out_root)
                jobs.append((job_meta(scenario, config), str(sub)))
    except (TypeError, ValueError) as error:
        raise ConfigError(f"invalid run settings: {error}") from None

    workers = max(1, args.jobs)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_execute_job, *job) for job in jobs]
            results = [future.result() for future in futures]
    else:
        results = [_execute_job(*job) for job in jobs]

    code = EXIT_OK
    for job_code, note in results:
        print(note, file=sys.stderr if job_code else sys.stdout)
        code = max(code, job_code)
    return code


def cmd_analyze(args) -> int:
    trace_path = Path(args.trace)
    try:
        table = read_trace(trace_path)
    except OSError as error:
        print(f"cannot read trace: {error}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as error:
        print(f"{trace_path}: {error}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else trace_path.parent
    out.mkdir(parents=True, exist_ok=True)
    rep = report(table)
    write_metrics(rep, out / "metrics.csv")
    write_curves(rep.curves, out / "curves.csv")
    print(f"wrote {out / 'metrics.csv'} and {out / 'curves.csv'}")
    return EXIT_OK


def cmd_list(args) -> int:
    print("scenarios:")
    for name in sorted(SCENARIOS):
        scenario = SCENARIOS[name]()
        if isinstance(scenario.ee_reference, TargetReference):
            motion = "hold a fixed end-effector goal"
        else:
            motion = "track a Cartesian circle"
        print(
            f"  {name:<10} {motion}; {len(scenario.scripts)} scripted"
            f" obstacle(s), {scenario.duration:g} s on {scenario.chain_name}"
        )
    print("controllers:")
    for name in sorted(CONTROLLERS):
        print(f"  {name:<10} {_CONTROLLER_NOTES[name]}")
    print("default parameters:")
    for key, value in dataclasses.asdict(ControllerParams()).items():
        print(f"  {key} = {value}")
    return EXIT_OK


# --- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oacbench",
        description="Kinematic obstacle-avoidance benchmark: simulate"
                    " controllers, record traces, analyze them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser(
        "run", help="simulate scenario/controller pairs and write traces"
    )
    runp.add_argument(
        "--scenario",
        help="scenario id, YAML scenario file, or comma-separated sweep",
    )
    runp.add_argument(
        "--controller", help="controller id or comma-separated sweep"
    )
    runp.add_argument(
        "--config",
        help=f"YAML config file (default: ${ENV_CONFIG} when set)",
    )
    runp.add_argument("--dt", type=float, help="control period in seconds")
    runp.add_argument(
        "--duration", type=float,
        help="simulated seconds, overriding the scenario's duration",
    )
    runp.add_argument(
        "--out", help="output directory (default: current directory)"
    )
    runp.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="controller parameter override; repeatable",
    )
    runp.add_argument(
        "--jobs", type=int, default=1,
        help="parallel workers for sweep runs (default 1)",
    )

    ana = sub.add_parser(
        "analyze", help="compute metrics and curves from a recorded trace"
    )
    ana.add_argument(
        "--trace", required=True, help="trace CSV produced by the run command"
    )
    ana.add_argument(
        "--out", help="output directory (default: next to the trace)"
    )

    sub.add_parser(
        "list", help="print scenario and controller ids with default"
                     " parameters"
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "analyze": cmd_analyze, "list": cmd_list}
    try:
        return handlers[args.command](args)
    except ConfigError as error:
        print(str(error), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
