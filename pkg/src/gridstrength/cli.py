"""Command-line interface.

    gridstrength <command> --config <path> [--format json|csv|table]
                 [--out <dir>] [--strict|--lenient] [--threads N]
                 [--no-figures]

Commands: strength, modes, cscr, sweep, verify.  Exit codes: 0 success,
1 computation error, 2 configuration error, 3 flagged verdict
inconsistency.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .assembly import decouple, mpeis_modes
from .config import AnalysisConfig, parse_config
from .errors import ConfigError, GridStrengthError
from .network import OperatingPoint, build_susceptance
from .report import (
    SPECTRUM_COLUMNS,
    SWEEP_COLUMNS,
    CsvTable,
    FigureSpec,
    ReportBundle,
    cnum,
    emit,
    mode_rows,
    provenance_block,
)
from .strength import (
    capacity_eigensystem,
    operation_eigensystem,
    participation,
    sensitivities,
)
from .studies import (
    ParamPath,
    calibrate_dclink,
    cscr_search,
    decoupling_verify,
    param_sweep,
    scr_sweep,
    stability_assess,
)

COMMANDS = ("strength", "modes", "cscr", "sweep", "verify")


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("GRIDSTRENGTH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"GRIDSTRENGTH_THREADS must be an integer, got {env!r}")
    return 1


def _prepare(config: AnalysisConfig):
    b = build_susceptance(config.grid, [d.bus for d in config.devices])
    op = OperatingPoint.flat(config.devices)
    return b, op


def _calibrated_models(config: AnalysisConfig):
    """Models with the dc link calibrated when the study asks for it."""
    copts = config.study["cscr"]
    calibrate = copts.get("calibrate_dclink", False)
    models = config.models(allow_missing_dclink=calibrate)
    info = None
    if calibrate:
        # identical devices (enforced downstream), so one fit serves all
        target = copts.get("target_scr", 2.86)
        cal_model, info = calibrate_dclink(models[0], target_scr=target, omega0=config.omega0)
        models = [cal_model] * len(models)
    return models, info


def cmd_strength(config: AnalysisConfig, threads: int) -> ReportBundle:
    b, op = _prepare(config)
    eig_cap = capacity_eigensystem(b, config.devices)
    eig_op = operation_eigensystem(b, config.devices, op, weighting=config.weighting)
    part = participation(eig_op, 0)
    sens = sensitivities(eig_op, b, config.devices, op, weighting=config.weighting)
    results = {
        "gscr": float(eig_cap.lambda_min),
        "ogscr": float(eig_op.lambda_min),
        "eigenvalues_capacity": [float(v) for v in eig_cap.eigenvalues],
        "eigenvalues_operation": [float(v) for v in eig_op.eigenvalues],
        "participation": {
            "mode_index": 1,
            "buses": list(b.buses),
            "raw": [float(v) for v in part.raw],
            "normalized": [float(v) for v in part.normalized],
        },
        "sensitivities": {
            "s_b": [float(v) for v in sens.wrt_s_b],
            "p_b": None if sens.wrt_p_b is None else [float(v) for v in sens.wrt_p_b],
            "branches": {f"{i}-{j}": float(v) for (i, j), v in sens.wrt_branches.items()},
        },
        "critical": None,
        "margin": None,
        "stable": None,
    }
    try:
        models, cal = _calibrated_models(config)
        verdict = stability_assess(
            models,
            b,
            config.devices,
            op,
            weighting=config.weighting,
            critical_bracket=tuple(config.study["cscr"]["bracket"]),
            omega0=config.omega0,
        )
        results["critical"] = {"value": verdict.critical_value, "name": "cogscr"}
        results["margin"] = verdict.margin
        results["stable"] = verdict.stable
    except ConfigError:
        pass  # static indices remain available without converter models
    figures = [
        FigureSpec(
            name="strength_participation",
            kind="participation",
            payload={"buses": list(b.buses), "values": results["participation"]["normalized"]},
        )
    ]
    return ReportBundle(
        command="strength",
        results=results,
        provenance=provenance_block(config, "strength"),
        figures=figures,
    )


def cmd_modes(config: AnalysisConfig, threads: int) -> ReportBundle:
    b, op = _prepare(config)
    models, cal = _calibrated_models(config)
    svis = decouple(
        models, b, config.devices, op, pathway="ogscr",
        weighting=config.weighting, omega0=config.omega0,
    )
    system = mpeis_modes(models, b, op, simplified=True, omega0=config.omega0)
    rows = []
    svis_json = []
    for eq in svis:
        rows.extend(mode_rows(eq.modes))
        svis_json.append(
            {
                "index": eq.index,
                "lam": eq.lam,
                "scr": eq.scr,
                "equivalent": {"p_b": eq.p_b, "q_b": eq.q_b, "u": eq.u},
                "modes": [
                    {"mode": cnum(m.s), "zeta": m.zeta, "freq_hz": m.freq_hz} for m in eq.modes
                ],
            }
        )
    rows.extend(mode_rows(system))
    weakest = system.weakest_oscillatory()
    results = {
        "ogscr": svis[0].lam,
        "svis": svis_json,
        "system_modes": [
            {"mode": cnum(m.s), "zeta": m.zeta, "freq_hz": m.freq_hz} for m in system
        ],
        "weakest": None
        if weakest is None
        else {"mode": cnum(weakest.s), "zeta": weakest.zeta, "freq_hz": weakest.freq_hz},
        "calibration": cal,
    }
    tables = [CsvTable("modes_spectrum.csv", SPECTRUM_COLUMNS, rows)]
    figures = [
        FigureSpec(
            name="modes_spectrum",
            kind="spectrum",
            payload={
                "svis": [(m.s.real, m.s.imag) for eq in svis for m in eq.modes],
                "system": [(m.s.real, m.s.imag) for m in system],
                "svis_label": "decoupled single-infeed",
                "system_label": "assembled system",
            },
        )
    ]
    return ReportBundle(
        command="modes",
        results=results,
        provenance=provenance_block(config, "modes"),
        tables=tables,
        figures=figures,
    )


def cmd_cscr(config: AnalysisConfig, threads: int) -> ReportBundle:
    models, cal = _calibrated_models(config)
    copts = config.study["cscr"]
    crit = cscr_search(models[0], tuple(copts["bracket"]), omega0=config.omega0)
    grid = np.arange(copts["sweep_start"], copts["sweep_stop"] + 1e-12, copts["sweep_step"])
    sweep = scr_sweep(models[0], grid, omega0=config.omega0, threads=threads)
    rows = [
        (p.param, p.zeta, None if p.mode is None else p.mode.real, None if p.mode is None else p.mode.imag)
        for p in sweep.points
    ]
    results = {
        "cscr": crit.value,
        "kind": crit.kind,
        "crossing": cnum(crit.crossing),
        "crossing_freq_hz": crit.crossing_freq_hz,
        "bracket": list(crit.search_interval),
        "bracket_width": crit.bracket_width,
        "calibration": cal,
        "sweep": [
            {"scr": p.param, "zeta": p.zeta, "mode": None if p.mode is None else cnum(p.mode)}
            for p in sweep.points
        ],
    }
    tables = [CsvTable("cscr_sweep.csv", SWEEP_COLUMNS, rows)]
    figures = [
        FigureSpec(
            name="cscr_damping_vs_scr",
            kind="damping_curve",
            payload={
                "x": [p.param for p in sweep.points],
                "y": [p.zeta for p in sweep.points],
                "critical": crit.value,
            },
        )
    ]
    return ReportBundle(
        command="cscr",
        results=results,
        provenance=provenance_block(config, "cscr"),
        tables=tables,
        figures=figures,
    )


def cmd_sweep(config: AnalysisConfig, threads: int) -> ReportBundle:
    sw = config.study.get("sweep")
    if not sw:
        raise ConfigError("study.sweep: required for the sweep command")
    path = ParamPath(kind=sw["kind"], device=sw.get("device"), from_bus=sw.get("from"), to_bus=sw.get("to"))
    result = param_sweep(
        config.grid, config.devices, path, sw["values"],
        weighting=config.weighting, threads=threads,
    )
    rows = [(p.param, p.index, None, None) for p in result.points]
    results = {
        "path": result.path,
        "sensitivity_consistent": result.sensitivity_consistent,
        "points": [{"param": p.param, "ogscr": p.index} for p in result.points],
    }
    tables = [CsvTable("param_sweep.csv", SWEEP_COLUMNS, rows)]
    figures = [
        FigureSpec(
            name="param_sweep",
            kind="index_sweep",
            payload={"x": [p.param for p in result.points], "y": [p.index for p in result.points],
                     "xlabel": result.path},
        )
    ]
    return ReportBundle(
        command="sweep",
        results=results,
        provenance=provenance_block(config, "sweep"),
        tables=tables,
        figures=figures,
    )


def cmd_verify(config: AnalysisConfig, threads: int) -> ReportBundle:
    b, op = _prepare(config)
    models, cal = _calibrated_models(config)
    rep = decoupling_verify(
        models, b, config.devices, op, weighting=config.weighting, omega0=config.omega0
    )
    verdict = stability_assess(
        models, b, config.devices, op,
        weighting=config.weighting,
        critical_bracket=tuple(config.study["cscr"]["bracket"]),
        omega0=config.omega0,
    )
    results = {
        "decoupling": {
            "svis_count": rep.svis_count,
            "simplified_count": rep.simplified_count,
            "full_count": rep.full_count,
            "max_distance": rep.max_distance,
            "tolerance_exceeded": rep.tolerance_exceeded,
            "matches": [
                {
                    "svis": cnum(m.svis_mode),
                    "system": cnum(m.system_mode),
                    "distance": m.distance,
                    "provenance": m.provenance,
                }
                for m in rep.matches
            ],
            "unmatched": [
                {"mode": cnum(z), "distance_to_resonance": d}
                for z, d in rep.unmatched_system_modes
            ],
            "frobenius_max_ratio": rep.frobenius.max_ratio,
        },
        "verdict": {
            "index": verdict.index_name,
            "index_value": verdict.index_value,
            "critical_value": verdict.critical_value,
            "margin": verdict.margin,
            "stable": verdict.stable,
            "spectral_stable": verdict.spectral_stable,
            "consistent": verdict.consistent,
        },
        "calibration": cal,
    }
    rows = []
    for m in rep.matches:
        rows.append((m.svis_mode.real, m.svis_mode.imag, m.system_mode.real, m.system_mode.imag, m.distance))
    tables = [
        CsvTable(
            "verify_matches.csv",
            ["svis_re", "svis_im", "system_re", "system_im", "distance"],
            rows,
        )
    ]
    figures = [
        FigureSpec(
            name="verify_spectrum",
            kind="spectrum",
            payload={
                "svis": [(m.svis_mode.real, m.svis_mode.imag) for m in rep.matches],
                "system": [(m.system_mode.real, m.system_mode.imag) for m in rep.matches],
                "svis_label": "decoupled single-infeed",
                "system_label": "assembled system",
            },
        )
    ]
    return ReportBundle(
        command="verify",
        results=results,
        provenance=provenance_block(config, "verify"),
        tables=tables,
        figures=figures,
        inconsistent=not verdict.consistent,
    )


_DISPATCH = {
    "strength": cmd_strength,
    "modes": cmd_modes,
    "cscr": cmd_cscr,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gridstrength",
        description="Grid-strength indices and small-signal modes of multi-converter AC systems",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} study")
        p.add_argument("--config", required=True, help="analysis configuration (JSON)")
        p.add_argument("--format", choices=("json", "csv", "table"), default="json")
        p.add_argument("--out", default=None, help="directory for report.json, CSV files and figures")
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--strict", dest="strict", action="store_true", default=True,
                          help="reject unknown config keys (default)")
        mode.add_argument("--lenient", dest="strict", action="store_false",
                          help="downgrade unknown config keys to warnings")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for sweeps (env GRIDSTRENGTH_THREADS)")
        p.add_argument("--no-figures", dest="figures", action="store_false", default=True)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        config = parse_config(args.config, strict=args.strict)
        threads = _threads(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = _DISPATCH[args.command](config, threads)
        text = emit(report, fmt=args.format, out_dir=args.out, figures=args.figures)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GridStrengthError as exc:
        print(f"computation error ({args.config}): {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(text)
    if report.inconsistent:
        print("verdict inconsistency flagged: index and spectrum disagree", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
