"""Analysis configuration: a single self-describing JSON document.

The document carries the network, the converter fleet and per-study
options; commands select what to compute.  Parsing is strict by default
(unknown keys are errors); the lenient mode downgrades them to warnings
that are echoed in the report provenance.  All defaults are applied during
parsing so that the normalised document round-trips byte-identically.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .converter import DC_VOLTAGE, PQ, DeviceModel, PIGains
from .errors import ConfigError
from .network import Branch, DeviceSpec, GridSpec

_BASE_DEFAULTS = {"frequency_hz": 50.0, "s_base": 1.0}
_DEVICE_DEFAULTS = {"q_b": 0.0, "u": 1.0, "c_f": 0.0}
_STUDY_DEFAULTS = {
    "weighting": "absolute_power",
    "cscr": {
        "bracket": [1.0, 10.0],
        "target_scr": 2.86,
        "calibrate_dclink": False,
        "sweep_start": 2.86,
        "sweep_stop": 10.0,
        "sweep_step": 0.25,
    },
    "sweep": None,
    "randomized_checks": 0,
}

_GAIN_KEYS = ("current", "pll", "power", "dc_voltage")


@dataclass
class AnalysisConfig:
    """Parsed and normalised analysis document."""

    document: dict
    grid: GridSpec
    devices: list[DeviceSpec]
    warnings: list[str] = field(default_factory=list)
    path: str | None = None

    @property
    def base_frequency(self) -> float:
        return self.document["base"]["frequency_hz"]

    @property
    def omega0(self) -> float:
        return 2.0 * 3.141592653589793 * self.base_frequency

    @property
    def weighting(self) -> str:
        return self.document["study"]["weighting"]

    @property
    def study(self) -> dict:
        return self.document["study"]

    def models(self, allow_missing_dclink: bool = False) -> list[DeviceModel]:
        """Converter models for every device, in bus order."""
        out = []
        for i, dev in enumerate(self.document["devices"]):
            out.append(_build_model(dev, f"devices[{i}]", allow_missing_dclink))
        return out

    def digest(self) -> str:
        return sha256_of_document(self.document)

    def dumps(self) -> str:
        return json.dumps(self.document, indent=2, sort_keys=True) + "\n"


def sha256_of_document(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _type_name(v) -> str:
    return type(v).__name__


def _expect(d: dict, key: str, types, path: str, required: bool = True, default=None):
    if key not in d:
        if required:
            raise ConfigError(f"{path}.{key}: missing required key")
        return default
    v = d[key]
    if types is float:
        types = (int, float)
    if not isinstance(v, types) or isinstance(v, bool) and types != (bool,):
        want = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"{path}.{key}: expected {want}, got {_type_name(v)}")
    return float(v) if set(types if isinstance(types, tuple) else (types,)) == {int, float} else v


def _check_keys(d: dict, allowed: set, path: str, strict: bool, warnings: list[str]):
    unknown = sorted(set(d) - allowed)
    if unknown:
        msg = f"{path}: unknown keys {unknown}"
        if strict:
            raise ConfigError(msg)
        warnings.append(msg)


def _parse_gains(d: dict, path: str, strict: bool, warnings: list[str]) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected object of PI gain pairs")
    _check_keys(d, set(_GAIN_KEYS), path, strict, warnings)
    out = {}
    for key, pair in d.items():
        if (
            not isinstance(pair, (list, tuple))
            or len(pair) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in pair)
        ):
            raise ConfigError(f"{path}.{key}: expected [kp, ki] pair of numbers")
        out[key] = [float(pair[0]), float(pair[1])]
    return out


def _build_model(dev: dict, path: str, allow_missing_dclink: bool) -> DeviceModel:
    gains = dev.get("gains")
    if gains is None:
        raise ConfigError(f"{path}.gains: converter gains are required for mode studies")
    mode = dev["control_mode"]

    def pi(name: str, required: bool) -> PIGains | None:
        if name not in gains:
            if required:
                raise ConfigError(f"{path}.gains.{name}: required for {mode} control")
            return None
        kp, ki = gains[name]
        return PIGains(kp, ki)

    c_dc = dev.get("c_dc")
    u_dc = dev.get("u_dc")
    if mode == DC_VOLTAGE and c_dc is None:
        if not allow_missing_dclink:
            raise ConfigError(
                f"{path}.c_dc: required for dc_voltage control "
                "(set study.cscr.calibrate_dclink to fit it)"
            )
        c_dc = 1.0  # placeholder, replaced by calibration
    return DeviceModel(
        control_mode=mode,
        current=pi("current", True),
        pll=pi("pll", True),
        power=pi("power", mode == PQ),
        dc_voltage=pi("dc_voltage", mode == DC_VOLTAGE),
        l_f=dev["l_f"],
        c_f=dev.get("c_f", 0.0),
        c_dc=c_dc,
        u_dc=u_dc,
    )


def parse_config(path: str | Path, strict: bool = True) -> AnalysisConfig:
    """Load, validate and normalise an analysis document from a file."""
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    cfg = parse_document(raw, strict=strict)
    cfg.path = str(p)
    return cfg


def parse_document(raw: dict, strict: bool = True) -> AnalysisConfig:
    """Validate a config dict and apply defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config root: expected a JSON object")
    warnings: list[str] = []
    _check_keys(raw, {"description", "base", "grid", "devices", "study"}, "config", strict, warnings)

    base_in = raw.get("base", {})
    if not isinstance(base_in, dict):
        raise ConfigError("base: expected object")
    _check_keys(base_in, {"frequency_hz", "s_base"}, "base", strict, warnings)
    base = dict(_BASE_DEFAULTS)
    for k in ("frequency_hz", "s_base"):
        if k in base_in:
            base[k] = _expect(base_in, k, float, "base")
    if base["frequency_hz"] <= 0:
        raise ConfigError("base.frequency_hz: must be positive")

    grid_in = raw.get("grid")
    if not isinstance(grid_in, dict):
        raise ConfigError("grid: expected object")
    _check_keys(grid_in, {"buses", "branches"}, "grid", strict, warnings)
    buses = grid_in.get("buses")
    if not isinstance(buses, list) or not all(isinstance(b, str) for b in buses):
        raise ConfigError("grid.buses: expected list of strings")
    branches_in = grid_in.get("branches")
    if not isinstance(branches_in, list) or not branches_in:
        raise ConfigError("grid.branches: expected non-empty list")
    branches = []
    branch_docs = []
    for i, br in enumerate(branches_in):
        bpath = f"grid.branches[{i}]"
        if not isinstance(br, dict):
            raise ConfigError(f"{bpath}: expected object")
        _check_keys(br, {"from", "to", "value", "value_kind"}, bpath, strict, warnings)
        frm = br.get("from")
        to = br.get("to")
        if not isinstance(frm, str) or not isinstance(to, str):
            raise ConfigError(f"{bpath}: 'from' and 'to' must be bus-id strings")
        value = _expect(br, "value", float, bpath)
        kind = br.get("value_kind", "reactance")
        if kind not in ("reactance", "susceptance"):
            raise ConfigError(f"{bpath}.value_kind: expected 'reactance' or 'susceptance'")
        known = set(buses) | {"0"}
        for end in (frm, to):
            if end not in known:
                raise ConfigError(f"{bpath}: references unknown bus {end!r}")
        branches.append(Branch(frm, to, value, kind))
        branch_docs.append({"from": frm, "to": to, "value": value, "value_kind": kind})

    devices_in = raw.get("devices")
    if not isinstance(devices_in, list) or not devices_in:
        raise ConfigError("devices: expected non-empty list")
    device_docs = []
    devices = []
    seen_buses = set()
    for i, dev in enumerate(devices_in):
        dpath = f"devices[{i}]"
        if not isinstance(dev, dict):
            raise ConfigError(f"{dpath}: expected object")
        _check_keys(
            dev,
            {"bus", "s_b", "p_b", "q_b", "u", "control_mode", "gains", "l_f", "c_f", "c_dc", "u_dc"},
            dpath,
            strict,
            warnings,
        )
        bus = dev.get("bus")
        if not isinstance(bus, str):
            raise ConfigError(f"{dpath}.bus: expected string")
        if bus not in buses:
            raise ConfigError(f"{dpath}.bus: unknown bus {bus!r}")
        if bus in seen_buses:
            raise ConfigError(f"{dpath}.bus: duplicate device at bus {bus!r}")
        seen_buses.add(bus)
        doc = {"bus": bus}
        doc["s_b"] = _expect(dev, "s_b", float, dpath)
        doc["p_b"] = _expect(dev, "p_b", float, dpath)
        for k in ("q_b", "u"):
            doc[k] = _expect(dev, k, float, dpath, required=False, default=_DEVICE_DEFAULTS[k])
        mode = dev.get("control_mode")
        if mode not in (PQ, DC_VOLTAGE):
            raise ConfigError(f"{dpath}.control_mode: expected 'pq' or 'dc_voltage'")
        doc["control_mode"] = mode
        if "gains" in dev:
            doc["gains"] = _parse_gains(dev["gains"], f"{dpath}.gains", strict, warnings)
            doc["l_f"] = _expect(dev, "l_f", float, dpath)
            doc["c_f"] = _expect(dev, "c_f", float, dpath, required=False, default=0.0)
            if "c_dc" in dev and dev["c_dc"] is not None:
                doc["c_dc"] = _expect(dev, "c_dc", float, dpath)
            if "u_dc" in dev and dev["u_dc"] is not None:
                doc["u_dc"] = _expect(dev, "u_dc", float, dpath)
            if mode == DC_VOLTAGE and "u_dc" not in doc:
                raise ConfigError(f"{dpath}.u_dc: required for dc_voltage control")
        if doc["s_b"] <= 0:
            raise ConfigError(f"{dpath}.s_b: must be positive")
        device_docs.append(doc)
        devices.append(DeviceSpec(bus=bus, s_b=doc["s_b"], p_b=doc["p_b"], q_b=doc["q_b"], u=doc["u"]))

    study_in = raw.get("study", {})
    if not isinstance(study_in, dict):
        raise ConfigError("study: expected object")
    _check_keys(
        study_in, {"weighting", "cscr", "sweep", "randomized_checks"}, "study", strict, warnings
    )
    study = json.loads(json.dumps(_STUDY_DEFAULTS))
    if "weighting" in study_in:
        w = study_in["weighting"]
        if w not in ("absolute_power", "per_unit_power"):
            raise ConfigError("study.weighting: expected 'absolute_power' or 'per_unit_power'")
        study["weighting"] = w
    if "cscr" in study_in:
        c = study_in["cscr"]
        if not isinstance(c, dict):
            raise ConfigError("study.cscr: expected object")
        _check_keys(c, set(_STUDY_DEFAULTS["cscr"]), "study.cscr", strict, warnings)
        for k, v in c.items():
            if k == "bracket":
                if not (isinstance(v, list) and len(v) == 2):
                    raise ConfigError("study.cscr.bracket: expected [lo, hi]")
                study["cscr"]["bracket"] = [float(v[0]), float(v[1])]
            elif k == "calibrate_dclink":
                if not isinstance(v, bool):
                    raise ConfigError("study.cscr.calibrate_dclink: expected boolean")
                study["cscr"][k] = v
            else:
                study["cscr"][k] = _expect(c, k, float, "study.cscr")
    if "sweep" in study_in and study_in["sweep"] is not None:
        sw = study_in["sweep"]
        if not isinstance(sw, dict):
            raise ConfigError("study.sweep: expected object")
        _check_keys(sw, {"kind", "device", "from", "to", "values"}, "study.sweep", strict, warnings)
        kind = sw.get("kind")
        if kind not in ("p_b", "s_b", "branch_susceptance"):
            raise ConfigError("study.sweep.kind: expected p_b, s_b or branch_susceptance")
        values = sw.get("values")
        if not isinstance(values, list) or not values:
            raise ConfigError("study.sweep.values: expected non-empty list of numbers")
        study["sweep"] = {
            "kind": kind,
            "device": sw.get("device"),
            "from": sw.get("from"),
            "to": sw.get("to"),
            "values": [float(v) for v in values],
        }
    if "randomized_checks" in study_in:
        rc = study_in["randomized_checks"]
        if not isinstance(rc, int) or isinstance(rc, bool) or rc < 0:
            raise ConfigError("study.randomized_checks: expected nonnegative integer")
        study["randomized_checks"] = rc

    document = {
        "description": raw.get("description", ""),
        "base": base,
        "grid": {"buses": list(buses), "branches": branch_docs},
        "devices": device_docs,
        "study": study,
    }
    grid = GridSpec(buses=tuple(buses), branches=tuple(branches), base_frequency=base["frequency_hz"])
    return AnalysisConfig(document=document, grid=grid, devices=devices, warnings=warnings)


def bundled_config_path(name: str) -> Path:
    """Path of a configuration shipped with the package (e.g. 'paper_5vsc')."""
    ref = resources.files("gridstrength.data").joinpath(f"{name}.json")
    return Path(str(ref))


def load_bundled(name: str, strict: bool = True) -> AnalysisConfig:
    return parse_config(bundled_config_path(name), strict=strict)
