"""Report assembly and emission: JSON, CSV, tables and figures.

The machine-readable report is a single JSON document carrying a
provenance block (config digest, tool version, selected weighting and
branch interpretation) so every number is traceable to a config and a
command.  CSV plot files use fixed, documented columns:

* sweep files:   param_value, index_or_zeta, mode_re, mode_im
* spectra files: re, im, zeta, freq_hz, provenance

Figures are rendered to PNG next to the delimited output when an output
directory is given.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__ as _fallback_version
from .errors import GridStrengthError

SWEEP_COLUMNS = ["param_value", "index_or_zeta", "mode_re", "mode_im"]
SPECTRUM_COLUMNS = ["re", "im", "zeta", "freq_hz", "provenance"]


def _version() -> str:
    return _fallback_version


@dataclass
class CsvTable:
    name: str
    header: list[str]
    rows: list[tuple]

    def render(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow(["" if v is None else v for v in row])
        return buf.getvalue()


@dataclass
class FigureSpec:
    name: str
    kind: str          # "damping_curve" | "spectrum" | "index_sweep" | "participation"
    payload: dict


@dataclass
class ReportBundle:
    """Everything one command produced, ready for serialisation."""

    command: str
    results: dict
    provenance: dict
    tables: list[CsvTable] = field(default_factory=list)
    figures: list[FigureSpec] = field(default_factory=list)
    inconsistent: bool = False

    def to_document(self) -> dict:
        return {
            "command": self.command,
            "provenance": self.provenance,
            "results": self.results,
            "csv_files": [t.name for t in self.tables],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2, sort_keys=True) + "\n"


def provenance_block(config, command: str, extra: dict | None = None) -> dict:
    block = {
        "tool": "gridstrength",
        "version": _version(),
        "command": command,
        "config_digest": config.digest(),
        "config_path": config.path,
        "weighting": config.weighting,
        "branch_value_kinds": sorted({br["value_kind"] for br in config.document["grid"]["branches"]}),
        "warnings": list(config.warnings),
    }
    if extra:
        block.update(extra)
    return block


def cnum(z: complex) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def mode_rows(modes, provenance: str | None = None) -> list[tuple]:
    rows = []
    for m in modes:
        rows.append(
            (
                float(m.s.real),
                float(m.s.imag),
                float(m.zeta),
                float(m.freq_hz),
                provenance or m.provenance,
            )
        )
    return rows


def emit(report: ReportBundle, fmt: str = "json", out_dir: str | Path | None = None,
         figures: bool = True) -> str:
    """Serialise the report; write the file bundle when out_dir is given.

    Returns the stdout rendering in the requested format.
    """
    if fmt not in ("json", "csv", "table"):
        raise GridStrengthError(f"unknown output format {fmt!r}")
    if out_dir is not None:
        out = Path(out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.json").write_text(report.to_json())
            for t in report.tables:
                (out / t.name).write_text(t.render())
        except OSError as exc:
            raise GridStrengthError(f"cannot write to {out}: {exc}") from exc
        if figures:
            render_figures(report, out)
    if fmt == "json":
        return report.to_json()
    if fmt == "csv":
        chunks = []
        for t in report.tables:
            chunks.append(f"# {t.name}\n{t.render()}")
        return "\n".join(chunks) if chunks else ""
    return render_table(report)


def _fmt(v, width: int = 12) -> str:
    if v is None:
        return " " * (width - 1) + "-"
    if isinstance(v, bool):
        return f"{str(v):>{width}}"
    if isinstance(v, float):
        return f"{v:>{width}.6g}"
    return f"{str(v):>{width}}"


def render_table(report: ReportBundle) -> str:
    """Human-readable rendering (6 significant digits)."""
    lines = [f"== gridstrength {report.command} ==",
             f"config digest: {report.provenance['config_digest'][:16]}...",
             f"weighting: {report.provenance['weighting']}"]
    r = report.results
    if report.command == "strength":
        lines.append(f"gSCR  = {r['gscr']:.6g}    OgSCR = {r['ogscr']:.6g}")
        if r.get("critical") is not None:
            lines.append(
                f"critical = {r['critical']['value']:.6g}   margin = {r['margin']:.6g}   stable = {r['stable']}"
            )
        part = r["participation"]
        lines.append("participation in the weakest mode (descending):")
        order = np.argsort(-np.asarray(part["normalized"]))
        lines.append(f"{'bus':>6}{'normalized':>14}{'raw':>14}")
        for i in order:
            lines.append(
                f"{part['buses'][i]:>6}{part['normalized'][i]:>14.6g}{part['raw'][i]:>14.6g}"
            )
        sens = r["sensitivities"]
        lines.append("sensitivities of the index:")
        lines.append(f"{'bus':>6}{'d/dS_B':>14}{'d/dP_b':>14}")
        for i, bus in enumerate(part["buses"]):
            pb = sens["p_b"][i] if sens["p_b"] is not None else None
            lines.append(f"{bus:>6}{_fmt(sens['s_b'][i], 14)}{_fmt(pb, 14)}")
        lines.append(f"{'branch':>12}{'d/db':>14}")
        for name, v in sens["branches"].items():
            lines.append(f"{name:>12}{v:>14.6g}")
    elif report.command == "modes":
        lines.append(f"OgSCR = {r['ogscr']:.6g}")
        w = r["weakest"]
        if w is not None:
            lines.append(
                f"weakest mode {w['mode']['re']:.6g} + {w['mode']['im']:.6g}j   "
                f"zeta = {w['zeta']:.6g}   f = {w['freq_hz']:.6g} Hz"
            )
        lines.append(f"{'re':>14}{'im':>14}{'zeta':>12}{'freq_hz':>12}  provenance")
        for t in report.tables:
            if t.name == "modes_spectrum.csv":
                for row in t.rows:
                    lines.append(
                        f"{row[0]:>14.6g}{row[1]:>14.6g}{row[2]:>12.6g}{row[3]:>12.6g}  {row[4]}"
                    )
    elif report.command == "cscr":
        lines.append(
            f"critical SCR = {r['cscr']:.6g} ({r['kind']} crossing at "
            f"{r['crossing']['im']:.6g} rad/s)"
        )
        if r.get("calibration"):
            cal = r["calibration"]
            lines.append(
                f"dc-link calibration: c_dc = {cal['c_dc']:.8g} at u_dc = {cal['u_dc']:.6g}"
            )
        lines.append(f"{'SCR':>10}{'zeta':>14}")
        for row in _find(report, "cscr_sweep.csv").rows:
            lines.append(f"{row[0]:>10.6g}{_fmt(row[1], 14)}")
    elif report.command == "sweep":
        lines.append(f"parameter: {r['path']}   sensitivity-consistent: {r['sensitivity_consistent']}")
        lines.append(f"{'value':>14}{'OgSCR':>14}")
        for row in _find(report, "param_sweep.csv").rows:
            lines.append(f"{row[0]:>14.6g}{_fmt(row[1], 14)}")
    elif report.command == "verify":
        d = r["decoupling"]
        lines.append(
            f"modes: svis {d['svis_count']}  simplified {d['simplified_count']}  full {d['full_count']}"
        )
        lines.append(
            f"max match distance = {d['max_distance']:.6g}   beyond tolerance: {d['tolerance_exceeded']}"
        )
        lines.append(f"unmatched line modes: {len(d['unmatched'])}")
        lines.append(f"max Frobenius ratio = {d['frobenius_max_ratio']:.6g}")
        v = r["verdict"]
        lines.append(
            f"index {v['index_value']:.6g} vs critical {v['critical_value']:.6g} -> "
            f"stable={v['stable']}   spectral stable={v['spectral_stable']}   consistent={v['consistent']}"
        )
    lines.append("")
    return "\n".join(lines)


def _find(report: ReportBundle, name: str) -> CsvTable:
    for t in report.tables:
        if t.name == name:
            return t
    raise GridStrengthError(f"report has no table {name}")


def render_figures(report: ReportBundle, out_dir: Path) -> list[Path]:
    """Render the report's figures to PNG files."""
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    written = []
    for spec in report.figures:
        fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=130)
        p = spec.payload
        if spec.kind == "damping_curve":
            ax.plot(p["x"], p["y"], "o-", ms=3, lw=1.2, color="tab:blue")
            ax.axhline(0.0, color="0.6", lw=0.8)
            if p.get("critical") is not None:
                ax.axvline(p["critical"], color="tab:red", lw=0.9, ls="--",
                           label=f"critical = {p['critical']:.3g}")
                ax.legend(frameon=False)
            ax.set_xlabel("SCR")
            ax.set_ylabel("damping ratio of weakest oscillatory mode")
        elif spec.kind == "spectrum":
            for label, marker, color in (
                ("svis", "o", "tab:blue"),
                ("system", "x", "tab:red"),
            ):
                pts = p.get(label, [])
                if pts:
                    xs = [q[0] for q in pts]
                    ys = [q[1] for q in pts]
                    ax.scatter(xs, ys, marker=marker, s=28, c=color,
                               label=p.get(f"{label}_label", label), alpha=0.75)
            ax.axvline(0.0, color="0.6", lw=0.8)
            ax.set_xlabel("Re(s) [rad/s]")
            ax.set_ylabel("Im(s) [rad/s]")
            ax.legend(frameon=False)
        elif spec.kind == "index_sweep":
            ax.plot(p["x"], p["y"], "o-", ms=3, lw=1.2, color="tab:green")
            ax.set_xlabel(p.get("xlabel", "parameter"))
            ax.set_ylabel("OgSCR")
        elif spec.kind == "participation":
            order = np.argsort(-np.asarray(p["values"]))
            buses = [p["buses"][i] for i in order]
            vals = [p["values"][i] for i in order]
            ax.bar(range(len(vals)), vals, color="tab:blue", width=0.6)
            ax.set_xticks(range(len(vals)), [f"bus {b}" for b in buses])
            ax.set_ylabel("participation (max-normalised)")
        else:  # pragma: no cover
            plt.close(fig)
            continue
        ax.grid(alpha=0.25)
        fig.tight_layout()
        target = out_dir / f"{spec.name}.png"
        fig.savefig(target)
        plt.close(fig)
        written.append(target)
    return written
