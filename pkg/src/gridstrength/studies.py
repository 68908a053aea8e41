"""Analysis drivers: critical-SCR search, sweeps, decoupling verification,
stability assessment and parameter trajectories.

All drivers are deterministic; sweep points are independent and emitted in
input order.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .assembly import (
    FrobeniusReport,
    SvisEquivalent,
    decouple,
    frobenius_check,
    mpeis_modes,
    svis_modes,
)
from .converter import DC_VOLTAGE, DeviceModel
from .errors import BracketError, ValidationError
from .network import (
    Branch,
    DeviceSpec,
    GridSpec,
    OperatingPoint,
    SusceptanceMatrix,
    build_susceptance,
)
from .rational import Mode, ModeSet
from .strength import operation_eigensystem

#: bisection stops when the bracket is narrower than this
CSCR_BRACKET_WIDTH = 1e-3
#: modes with |Im s| above this are considered oscillatory
OSCILLATORY_IM_MIN = 1.0


@dataclass(frozen=True)
class CriticalIndex:
    """Critical value of an SCR-type index and the mode that crosses."""

    value: float
    crossing: complex
    kind: str                      # "oscillatory" or "real"
    search_interval: tuple[float, float]
    bracket_width: float
    calibration: dict | None = None

    @property
    def crossing_freq_hz(self) -> float:
        return abs(self.crossing.imag) / (2.0 * np.pi)


@dataclass(frozen=True)
class SweepPoint:
    param: float
    index: float | None
    zeta: float | None
    mode: complex | None


@dataclass(frozen=True)
class SweepResult:
    """Ordered samples of one swept parameter."""

    path: str
    points: list[SweepPoint]
    sensitivity_consistent: bool | None = None

    @property
    def params(self) -> np.ndarray:
        return np.array([p.param for p in self.points])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float if name != "mode" else complex)


@dataclass(frozen=True)
class MatchEntry:
    svis_mode: complex
    system_mode: complex
    distance: float
    provenance: str


@dataclass(frozen=True)
class DecouplingReport:
    """Mode-by-mode comparison of the decoupled and assembled systems."""

    matches: list[MatchEntry]
    unmatched_system_modes: list[tuple[complex, float]]  # (mode, distance to +-j w0)
    svis_count: int
    simplified_count: int
    full_count: int
    max_distance: float
    tolerance_exceeded: int
    frobenius: FrobeniusReport
    svis: list[SvisEquivalent] = field(default_factory=list)


@dataclass(frozen=True)
class StabilityVerdict:
    """Static-index verdict cross-checked against the closed-loop spectrum."""

    index_name: str
    index_value: float
    critical_value: float
    margin: float
    stable: bool
    spectral_stable: bool
    consistent: bool
    weakest_mode: complex | None
    weakest_zeta: float | None


def _max_real(modes: ModeSet) -> float:
    return modes.max_real()


def cscr_search(
    model: DeviceModel,
    bracket: tuple[float, float],
    p_b: float = 1.0,
    q_b: float = 0.0,
    u: float = 1.0,
    omega0: float = 2.0 * np.pi * 50.0,
    grid_points: int = 25,
    width: float = CSCR_BRACKET_WIDTH,
) -> CriticalIndex:
    """Bisect the SCR at which the weakest mode crosses the imaginary axis.

    The interval is first scanned on a grid; among the sign-change
    subintervals of the largest-real-part mode the one at the highest SCR is
    refined, which is the boundary of the stable high-SCR region.
    """
    lo, hi = bracket
    if not (0 < lo < hi):
        raise ValidationError("bracket must satisfy 0 < lo < hi")

    def f(lam: float) -> float:
        return _max_real(svis_modes(model, lam, p_b=p_b, q_b=q_b, u=u, omega0=omega0))

    grid = np.linspace(lo, hi, grid_points)
    vals = np.array([f(x) for x in grid])
    spans = [
        (grid[i], grid[i + 1], vals[i], vals[i + 1])
        for i in range(len(grid) - 1)
        if np.sign(vals[i]) != np.sign(vals[i + 1]) and vals[i] != 0.0
    ]
    if not spans:
        raise BracketError(
            f"weakest-mode real part has no sign change on [{lo}, {hi}] "
            f"(f({lo})={vals[0]:.3g}, f({hi})={vals[-1]:.3g})"
        )
    a, b_, fa, _ = spans[-1]
    while (b_ - a) > width:
        mid = 0.5 * (a + b_)
        fm = f(mid)
        if np.sign(fm) == np.sign(fa):
            a, fa = mid, fm
        else:
            b_ = mid
    lam_c = 0.5 * (a + b_)
    modes = svis_modes(model, lam_c, p_b=p_b, q_b=q_b, u=u, omega0=omega0)
    crossing = max(modes, key=lambda m: (m.s.real, m.s.imag))
    kind = "oscillatory" if abs(crossing.s.imag) > OSCILLATORY_IM_MIN else "real"
    return CriticalIndex(
        value=float(lam_c),
        crossing=complex(crossing.s),
        kind=kind,
        search_interval=(float(lo), float(hi)),
        bracket_width=float(b_ - a),
    )


def _ordered_map(fn, items, threads: int = 1) -> list:
    """Apply fn to items, possibly in parallel, preserving input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def scr_sweep(
    model: DeviceModel,
    scr_values,
    p_b: float = 1.0,
    q_b: float = 0.0,
    u: float = 1.0,
    omega0: float = 2.0 * np.pi * 50.0,
    threads: int = 1,
) -> SweepResult:
    """Weakest oscillatory mode and its damping ratio per SCR value."""
    for lam in scr_values:
        if not lam > 0:
            raise ValidationError("SCR values must be positive")

    def point(lam: float) -> SweepPoint:
        modes = svis_modes(model, float(lam), p_b=p_b, q_b=q_b, u=u, omega0=omega0)
        weakest = modes.weakest_oscillatory(OSCILLATORY_IM_MIN)
        if weakest is None:
            return SweepPoint(param=float(lam), index=None, zeta=None, mode=None)
        return SweepPoint(param=float(lam), index=float(lam), zeta=weakest.zeta, mode=complex(weakest.s))

    return SweepResult(path="scr", points=_ordered_map(point, scr_values, threads))


def calibrate_dclink(
    model: DeviceModel,
    target_scr: float = 2.86,
    omega0: float = 2.0 * np.pi * 50.0,
    k_range: tuple[float, float] = (1e-4, 10.0),
    k_points: int = 61,
    verify_bracket: tuple[float, float] = (1.0, 10.0),
) -> tuple[DeviceModel, dict]:
    """Fit the dc-link constant so the critical SCR equals ``target_scr``.

    Only the product u_dc * c_dc enters the admittance, so with u_dc fixed
    by configuration this is a one-parameter fit: scan the product for sign
    changes of the weakest-mode real part at SCR = target, bisect each
    candidate, and keep the first one whose refined critical SCR verifies
    against a full search.
    """
    if model.control_mode != DC_VOLTAGE:
        raise ValidationError("dc-link calibration applies to dc_voltage control only")
    u_dc = model.u_dc if model.u_dc is not None else 1.0

    def with_k(k: float) -> DeviceModel:
        return model.with_dclink(c_dc=k / u_dc, u_dc=u_dc)

    def f(k: float) -> float:
        return _max_real(svis_modes(with_k(k), target_scr, omega0=omega0))

    ks = np.geomspace(k_range[0], k_range[1], k_points)
    vals = np.array([f(k) for k in ks])
    candidates = [
        (ks[i], ks[i + 1], vals[i])
        for i in range(len(ks) - 1)
        if np.sign(vals[i]) != np.sign(vals[i + 1])
    ]
    if not candidates:
        raise BracketError("no dc-link constant in range places the crossing at the target SCR")
    last_error: Exception | None = None
    for a, b_, fa in candidates:
        while (b_ - a) > 1e-10 * b_:
            mid = np.sqrt(a * b_)
            fm = f(mid)
            if np.sign(fm) == np.sign(fa):
                a, fa = mid, fm
            else:
                b_ = mid
        k_star = float(np.sqrt(a * b_))
        cal = with_k(k_star)
        try:
            crit = cscr_search(cal, verify_bracket, omega0=omega0)
        except BracketError as exc:
            last_error = exc
            continue
        if abs(crit.value - target_scr) <= 0.02 * target_scr:
            info = {
                "u_dc": float(u_dc),
                "c_dc": float(k_star / u_dc),
                "dclink_constant": k_star,
                "target_scr": float(target_scr),
                "achieved_cscr": crit.value,
                "crossing_re": float(crit.crossing.real),
                "crossing_im": float(crit.crossing.imag),
            }
            return cal, info
    raise BracketError(f"dc-link calibration did not verify against the target SCR: {last_error}")


def decoupling_verify(
    models: list[DeviceModel],
    b: SusceptanceMatrix,
    devices: list[DeviceSpec],
    op: OperatingPoint | None = None,
    weighting: str = "absolute_power",
    omega0: float = 2.0 * np.pi * 50.0,
) -> DecouplingReport:
    """Match every decoupled single-infeed mode to a system mode.

    The match is a globally optimal assignment against the simplified
    assembled system.  System modes left unmatched are reported with their
    distance to +-j omega0; they are the line modes that the decoupling
    cannot see.
    """
    if op is None:
        op = OperatingPoint.flat(devices)
    svis = decouple(models, b, devices, op, pathway="ogscr", weighting=weighting, omega0=omega0)
    simplified = mpeis_modes(models, b, op, simplified=True, omega0=omega0)
    full_unfiltered = mpeis_modes(models, b, op, simplified=False, omega0=omega0, keep_spurious=True)

    svis_all: list[Mode] = [m for eq in svis for m in eq.modes]
    sys_vals = simplified.values
    sv = np.array([m.s for m in svis_all], dtype=complex)
    if len(sv) == 0 or len(sys_vals) == 0:
        raise ValidationError("empty mode sets; nothing to match")
    dist = np.abs(sv[:, None] - sys_vals[None, :])
    rows, cols = linear_sum_assignment(dist)
    matches = [
        MatchEntry(
            svis_mode=complex(sv[i]),
            system_mode=complex(sys_vals[j]),
            distance=float(dist[i, j]),
            provenance=svis_all[i].provenance,
        )
        for i, j in zip(rows, cols)
    ]
    max_distance = max((m.distance for m in matches), default=0.0)
    exceeded = sum(
        1
        for m in matches
        if m.distance > max(1e-3 * abs(m.svis_mode), 0.1)
    )

    # line modes: full-system modes not claimed by any decoupled mode
    full_vals = full_unfiltered.values
    unmatched: list[tuple[complex, float]] = []
    if len(full_vals):
        dist_f = np.abs(sv[:, None] - full_vals[None, :])
        r2, c2 = linear_sum_assignment(dist_f)
        taken = set(c2.tolist())
        for j in range(len(full_vals)):
            if j not in taken:
                z = complex(full_vals[j])
                unmatched.append((z, float(min(abs(z - 1j * omega0), abs(z + 1j * omega0)))))
    frob = frobenius_check(models, b, op, simplified, omega0=omega0)
    return DecouplingReport(
        matches=matches,
        unmatched_system_modes=unmatched,
        svis_count=len(sv),
        simplified_count=len(sys_vals),
        full_count=len(full_vals),
        max_distance=float(max_distance),
        tolerance_exceeded=exceeded,
        frobenius=frob,
        svis=svis,
    )


def stability_assess(
    models: list[DeviceModel],
    b: SusceptanceMatrix,
    devices: list[DeviceSpec],
    op: OperatingPoint | None = None,
    weighting: str = "absolute_power",
    critical_bracket: tuple[float, float] = (1.0, 10.0),
    omega0: float = 2.0 * np.pi * 50.0,
) -> StabilityVerdict:
    """Index-based verdict (margin sign) against the spectral verdict.

    The critical value comes from a search on the weakest equivalent
    single-infeed system; both routes are computed and compared, and a
    disagreement is returned flagged, not swallowed.
    """
    if op is None:
        op = OperatingPoint.flat(devices)
    eig = operation_eigensystem(b, devices, op, weighting=weighting)
    index = eig.lambda_min
    model = models[0]
    crit = cscr_search(model, critical_bracket, omega0=omega0)
    margin = index - crit.value
    spectrum = mpeis_modes(models, b, op, simplified=True, omega0=omega0)
    spectral_stable = spectrum.stable()
    stable = margin > 0
    weakest = spectrum.weakest_oscillatory(OSCILLATORY_IM_MIN)
    return StabilityVerdict(
        index_name="ogscr",
        index_value=float(index),
        critical_value=crit.value,
        margin=float(margin),
        stable=stable,
        spectral_stable=spectral_stable,
        consistent=stable == spectral_stable,
        weakest_mode=None if weakest is None else complex(weakest.s),
        weakest_zeta=None if weakest is None else weakest.zeta,
    )


@dataclass(frozen=True)
class ParamPath:
    """Identifies one swept parameter.

    kind "p_b" or "s_b" with ``device`` (bus id), or "branch_susceptance"
    with ``from_bus``/``to_bus``.
    """

    kind: str
    device: str | None = None
    from_bus: str | None = None
    to_bus: str | None = None

    def label(self) -> str:
        if self.kind in ("p_b", "s_b"):
            return f"{self.kind}[{self.device}]"
        return f"b[{self.from_bus},{self.to_bus}]"


def param_sweep(
    grid: GridSpec,
    devices: list[DeviceSpec],
    path: ParamPath,
    values,
    weighting: str = "absolute_power",
    threads: int = 1,
) -> SweepResult:
    """Static-index trajectory along one parameter.

    The first-difference slope at the sweep midpoint is sign-checked against
    the analytic sensitivity of the minimum eigenvalue.
    """
    from .strength import sensitivities

    values = list(values)
    if not values:
        raise ValidationError("empty sweep")
    bus_order = [d.bus for d in devices]

    def evaluate(v: float) -> float:
        devs = list(devices)
        g = grid
        if path.kind in ("p_b", "s_b"):
            idx = _device_index(devices, path.device)
            devs[idx] = replace(devs[idx], **{path.kind: float(v)})
        elif path.kind == "branch_susceptance":
            g = _with_branch_susceptance(grid, path.from_bus, path.to_bus, float(v))
        else:
            raise ValidationError(f"unknown parameter path kind {path.kind!r}")
        b = build_susceptance(g, bus_order)
        eig = operation_eigensystem(b, devs, OperatingPoint.flat(devs), weighting=weighting)
        return eig.lambda_min

    indices = _ordered_map(evaluate, values, threads)
    pts = [SweepPoint(param=float(v), index=ix, zeta=None, mode=None) for v, ix in zip(values, indices)]

    consistent = None
    if len(values) >= 2:
        mid = len(values) // 2
        lo = max(mid - 1, 0)
        slope = (pts[mid].index - pts[lo].index) / (values[mid] - values[lo]) if values[mid] != values[lo] else 0.0
        b0 = build_susceptance(grid, bus_order)
        eig0 = operation_eigensystem(b0, devices, OperatingPoint.flat(devices), weighting=weighting)
        rep = sensitivities(eig0, b0, devices, weighting=weighting)
        if path.kind == "p_b":
            ana = rep.wrt_p_b[_device_index(devices, path.device)]
        elif path.kind == "s_b":
            ana = rep.wrt_s_b[_device_index(devices, path.device)]
        else:
            key = (path.from_bus, path.to_bus) if path.to_bus == "0" else tuple(
                sorted((path.from_bus, path.to_bus), key=bus_order.index)
            )
            ana = rep.wrt_branches.get(key, 0.0)
        consistent = bool(np.sign(slope) == np.sign(ana)) if slope != 0.0 and ana != 0.0 else True
    return SweepResult(path=path.label(), points=pts, sensitivity_consistent=consistent)


def _device_index(devices: list[DeviceSpec], bus: str | None) -> int:
    for i, d in enumerate(devices):
        if d.bus == bus:
            return i
    raise ValidationError(f"no device at bus {bus!r}")


def _with_branch_susceptance(grid: GridSpec, from_bus: str, to_bus: str, b_new: float) -> GridSpec:
    hit = False
    branches = []
    for br in grid.branches:
        if {br.from_bus, br.to_bus} == {from_bus, to_bus}:
            branches.append(Branch(br.from_bus, br.to_bus, b_new, "susceptance"))
            hit = True
        else:
            branches.append(br)
    if not hit:
        raise ValidationError(f"no branch between {from_bus!r} and {to_bus!r}")
    return GridSpec(buses=grid.buses, branches=tuple(branches), base_frequency=grid.base_frequency)
