"""Command-line entry point: scenario simulation, single-method runs, full
method comparisons, and network checkpointing.

Runs are driven by a key-value config file plus a handful of flag overrides;
the fully resolved configuration is echoed into ``manifest.json`` next to the
outputs so any run can be replayed exactly.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

from . import __version__
from .errors import ConfigError, SpikeKalError
from .hybrid import SpikeKalConfig
from .plasticity import PlasticityParams
from .scenarios import (
    SCENARIO_NAMES,
    UAV_CSV,
    ScenarioConfig,
    build_scenario,
    comparison_report_dict,
    run_comparison,
    write_synthetic_uav_csv,
    write_trace_csv,
)
from .snn import LifParams, load_checkpoint, save_checkpoint
from .hybrid import SpikeKalFilter

METHODS = ("kf", "ekf", "snn_baseline", "spikekal")

_SCENARIO_KEYS = {
    "scenario": str,
    "dt": float,
    "duration": float,
    "seed": int,
    "x0": tuple,
    "q_diag": tuple,
    "r_diag": tuple,
    "mismatch_q_scale": float,
    "mismatch_r_scale": float,
    "uav_csv": str,
    "warmup_fraction": float,
}

_SPIKEKAL_KEYS = {
    "teacher_steps": int,
    "snn_substeps": int,
    "input_gain": float,
    "lms_rate": float,
    "tau_dec": float,
    "tau_elig": float,
    "reward_scale": float,
    "global_reward": bool,
    "post_teacher_adapt": bool,
    "w_init_max": float,
    "early_stop_error": float,
    "early_stop_window": int,
}

_LIF_KEYS = {
    "tau1": float,
    "tau2": float,
    "tau3": float,
    "v_rest": float,
    "v_thresh": float,
    "v_reset": float,
    "snn_dt": float,
}

_PLASTICITY_KEYS = {
    "a_plus": float,
    "a_minus": float,
    "tau_plus": float,
    "tau_minus": float,
    "stdp_lr": float,
    "w_min": float,
    "w_max": float,
}

_ALL_KEYS = {**_SCENARIO_KEYS, **_SPIKEKAL_KEYS, **_LIF_KEYS, **_PLASTICITY_KEYS}


def _coerce(key: str, raw: str, line: int):
    kind = _ALL_KEYS[key]
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(float(v) for v in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(str(exc), line=line, key=key) from None


def load_config(path) -> dict:
    """Parse a `key = value` config file. Unknown keys are errors; `#` starts
    a comment; missing keys simply fall back to documented defaults."""
    values: dict[str, object] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw_line in enumerate(fh, start=1):
            line = raw_line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("expected 'key = value'", line=lineno)
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _ALL_KEYS:
                raise ConfigError("unknown key", line=lineno, key=key)
            if key in values:
                raise ConfigError("duplicate key", line=lineno, key=key)
            values[key] = _coerce(key, value, lineno)
    return values


def resolve_configs(
    raw: dict, overrides: dict | None = None
) -> tuple[ScenarioConfig, SpikeKalConfig]:
    """Merge defaults < config file < CLI overrides into the two run configs."""
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    name = merged.pop("scenario", "linear_motion")
    if name not in SCENARIO_NAMES:
        raise ConfigError(f"unknown scenario {name!r}", key="scenario")
    scenario_kwargs = {
        k: merged.pop(k) for k in list(merged) if k in _SCENARIO_KEYS
    }
    try:
        scenario = ScenarioConfig.defaults(name, **scenario_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None

    sk_kwargs = {k: merged.pop(k) for k in list(merged) if k in _SPIKEKAL_KEYS}
    lif_kwargs = {k: merged.pop(k) for k in list(merged) if k in _LIF_KEYS}
    plast_kwargs = {k: merged.pop(k) for k in list(merged) if k in _PLASTICITY_KEYS}
    if "stdp_lr" in plast_kwargs:
        plast_kwargs["lr"] = plast_kwargs.pop("stdp_lr")
    try:
        substeps = sk_kwargs.get("snn_substeps", SpikeKalConfig.snn_substeps)
        lif_kwargs.setdefault("snn_dt", scenario.dt / substeps)
        skcfg = SpikeKalConfig(
            lif=LifParams(**lif_kwargs),
            plasticity=PlasticityParams(**plast_kwargs),
            **sk_kwargs,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return scenario, skcfg


def _json_dump(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def write_manifest(
    out_dir: Path,
    command: str,
    scenario: ScenarioConfig,
    skcfg: SpikeKalConfig,
    config_file: str | None,
    method: str | None = None,
) -> None:
    lif = skcfg.lif if skcfg.lif is not None else skcfg.resolve_lif(scenario.dt)
    manifest = {
        "tool": "spikekal",
        "version": __version__,
        "command": command,
        "method": method,
        "config_file": config_file,
        "output_dir": str(out_dir),
        "seed": scenario.seed,
        "scenario_config": asdict(scenario),
        "spikekal_config": {
            **{
                f.name: getattr(skcfg, f.name)
                for f in fields(skcfg)
                if f.name not in ("lif", "plasticity")
            },
            "lif": asdict(lif),
            "plasticity": asdict(skcfg.plasticity),
        },
    }
    _json_dump(out_dir / "manifest.json", manifest)


def _prepare(args, command: str) -> tuple[ScenarioConfig, SpikeKalConfig, Path]:
    raw = load_config(args.config) if args.config else {}
    overrides = {
        "scenario": args.scenario,
        "seed": args.seed,
        "teacher_steps": getattr(args, "teacher_steps", None),
        "uav_csv": getattr(args, "uav_csv", None),
        "mismatch_q_scale": getattr(args, "mismatch_q_scale", None),
        "mismatch_r_scale": getattr(args, "mismatch_r_scale", None),
    }
    scenario, skcfg = resolve_configs(raw, overrides)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if scenario.name == UAV_CSV and scenario.uav_csv is None:
        # no capture supplied: synthesize one so the run is self-contained
        track = out_dir / "uav_track.csv"
        write_synthetic_uav_csv(track, scenario)
        scenario = replace(scenario, uav_csv=str(track))
    write_manifest(
        out_dir, command, scenario, skcfg, args.config,
        method=getattr(args, "method", None),
    )
    return scenario, skcfg, out_dir


def cmd_simulate(args) -> int:
    scenario, skcfg, out_dir = _prepare(args, "simulate")
    _, trajectory = build_scenario(scenario)
    trajectory.write_csv(out_dir / "trajectory.csv")
    print(f"wrote {out_dir / 'trajectory.csv'} ({len(trajectory)} steps)")
    return 0


def cmd_run(args) -> int:
    scenario, skcfg, out_dir = _prepare(args, "run")
    method = args.method
    if method == "kf" and scenario.name == "lorenz":
        method = "ekf"
    if method == "ekf" and scenario.name != "lorenz":
        method = "kf"
    result = run_comparison(scenario, skcfg, methods=[method])
    _json_dump(out_dir / "report.json", comparison_report_dict(result))
    write_trace_csv(out_dir / "trace.csv", result)
    rep = result.reports[0]
    if rep.error:
        print(f"{method} failed: {rep.error}", file=sys.stderr)
        return 3
    print(f"{method}: mae={_fmt_mae(rep.mae)} wall={rep.wall_time_s:.2f}s")
    return 0


def cmd_compare(args) -> int:
    scenario, skcfg, out_dir = _prepare(args, "compare")
    result = run_comparison(scenario, skcfg)
    _json_dump(out_dir / "report.json", comparison_report_dict(result))
    write_trace_csv(out_dir / "trace.csv", result)
    for rep in result.reports:
        status = rep.error or f"mae={_fmt_mae(rep.mae_post_warmup)}"
        print(f"{rep.method:<14} neurons={rep.neurons:<3} {status}")
    if any(rep.error for rep in result.reports):
        return 3
    return 0


def cmd_checkpoint(args) -> int:
    if args.info:
        params, topo, decoder = load_checkpoint(args.info)
        print(f"checkpoint: {topo.n_in} input / {topo.n_out} output neurons")
        print(
            f"tau1={params.tau1} tau2={params.tau2} tau3={params.tau3} "
            f"snn_dt={params.snn_dt}"
        )
        print(f"decoder tau_dec={decoder.tau_dec} lms_rate={decoder.lms_rate}")
        return 0
    scenario, skcfg, out_dir = _prepare(args, "checkpoint")
    model, trajectory = build_scenario(scenario)
    filt = SpikeKalFilter(model, skcfg, seed=scenario.seed)
    for y in trajectory.observations:
        filt.step(y)
    path = out_dir / "checkpoint.txt"
    save_checkpoint(path, filt.net, filt.decoder)
    print(f"wrote {path}")
    return 0


def _fmt_mae(values: dict[str, float]) -> str:
    return "{" + ", ".join(f"{k}: {v:.4g}" for k, v in values.items()) + "}"


def _add_common(parser: argparse.ArgumentParser, with_method: bool = False) -> None:
    parser.add_argument("--config", help="path to a key=value config file")
    parser.add_argument(
        "--scenario", choices=SCENARIO_NAMES, help="scenario to build"
    )
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--teacher-steps", type=int, dest="teacher_steps")
    parser.add_argument("--uav-csv", dest="uav_csv", help="UAV capture CSV path")
    parser.add_argument(
        "--mismatch-q-scale", type=float, dest="mismatch_q_scale",
        help="process-noise scale handed to baseline filters",
    )
    parser.add_argument(
        "--mismatch-r-scale", type=float, dest="mismatch_r_scale",
        help="observation-noise scale handed to baseline filters",
    )
    if with_method:
        parser.add_argument(
            "--method", choices=METHODS, default="spikekal",
            help="estimator to run",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikekal",
        description="State estimation with a spiking-network-assisted Kalman "
        "filter, classic baselines, and a comparison harness.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="emit a trajectory CSV for a scenario")
    _add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_run = sub.add_parser("run", help="run a single method on a scenario")
    _add_common(p_run, with_method=True)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser(
        "compare", help="run the full method comparison (JSON report + trace CSV)"
    )
    _add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_ckpt = sub.add_parser("checkpoint", help="save or inspect network weights")
    _add_common(p_ckpt)
    p_ckpt.add_argument("--info", help="print the header of a checkpoint file")
    p_ckpt.set_defaults(func=cmd_checkpoint)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SpikeKalError as exc:
        print(f"runtime fault: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
