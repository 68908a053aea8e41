"""Nodal susceptance matrix and extended Jacobian construction.

The AC grid is described declaratively (buses, inductive branches, converter
ratings).  From that description this module builds:

* the grounded nodal susceptance matrix ``B`` (symmetric positive definite,
  Laplacian sign convention: positive diagonal, nonpositive off-diagonal),
* the capacity-weighted extended Jacobian ``J_eq = diag(1/S_B) @ B``,
* the operating-point-weighted Jacobian ``J_eqo = diag(U/P) @ B``.

Resistance is neglected throughout; branches are purely inductive.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import SingularMatrixError, TopologyError, ValidationError

GROUND = "0"

#: weighting choices for the operating-point Jacobian.  ``absolute_power``
#: divides by the injection on the system base (P_b * S_B); it is the default
#: because it is the variant that reproduces the reference five-converter
#: eigenvalue set (see operation_jacobian).
WEIGHTINGS = ("absolute_power", "per_unit_power")


@dataclass(frozen=True)
class Branch:
    """Single inductive branch.  ``to`` may be the ground bus "0".

    ``value`` is interpreted per ``value_kind``: a per-unit reactance
    (susceptance = 1/value) or a per-unit susceptance used directly.
    """

    from_bus: str
    to_bus: str
    value: float
    value_kind: str = "reactance"

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ValidationError(f"branch {self.from_bus}-{self.to_bus}: endpoints coincide")
        if not self.value > 0:
            raise ValidationError(
                f"branch {self.from_bus}-{self.to_bus}: value must be positive, got {self.value}"
            )
        if self.value_kind not in ("reactance", "susceptance"):
            raise ValidationError(f"unknown value_kind {self.value_kind!r}")

    @property
    def susceptance(self) -> float:
        return 1.0 / self.value if self.value_kind == "reactance" else self.value


@dataclass(frozen=True)
class GridSpec:
    """Declarative AC-grid description.

    ``buses`` lists every non-ground bus (device buses plus optional passive
    buses); the ground reference is the distinguished id "0" and must not be
    listed.  The branch graph, including grounding branches, must be connected
    through ground.
    """

    buses: tuple[str, ...]
    branches: tuple[Branch, ...]
    base_frequency: float = 50.0

    def __post_init__(self):
        buses = tuple(str(b) for b in self.buses)
        object.__setattr__(self, "buses", buses)
        object.__setattr__(self, "branches", tuple(self.branches))
        if GROUND in buses:
            raise ValidationError('ground bus "0" must not appear in the bus list')
        if len(set(buses)) != len(buses):
            raise ValidationError("bus identifiers must be unique")
        if not self.base_frequency > 0:
            raise ValidationError("base_frequency must be positive")
        known = set(buses) | {GROUND}
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in known:
                    raise ValidationError(f"branch references unknown bus {end!r}")
        if not any(GROUND in (br.from_bus, br.to_bus) for br in self.branches):
            raise SingularMatrixError("grid has no grounding branch; B would be singular")
        self._check_connected()

    def _check_connected(self):
        adj: dict[str, set[str]] = {b: set() for b in self.buses}
        adj[GROUND] = set()
        for br in self.branches:
            adj[br.from_bus].add(br.to_bus)
            adj[br.to_bus].add(br.from_bus)
        seen = {GROUND}
        stack = [GROUND]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        missing = set(self.buses) - seen
        if missing:
            raise TopologyError(f"buses not connected to ground: {sorted(missing)}")

    @property
    def omega0(self) -> float:
        return 2.0 * np.pi * self.base_frequency


@dataclass(frozen=True)
class DeviceSpec:
    """Converter rating, loading and control description at one bus.

    ``s_b`` is the rated capacity on the system base, ``p_b``/``q_b`` the
    output on the device base.  ``model`` (a converter DeviceModel) is needed
    only for mode computations, not for the static indices.
    """

    bus: str
    s_b: float
    p_b: float
    q_b: float = 0.0
    u: float = 1.0
    model: object | None = None

    def __post_init__(self):
        if not self.s_b > 0:
            raise ValidationError(f"device at bus {self.bus}: s_b must be positive")
        if not self.u > 0:
            raise ValidationError(f"device at bus {self.bus}: u must be positive")

    @property
    def p_system(self) -> float:
        """Active power on the system base."""
        return self.p_b * self.s_b


@dataclass(frozen=True)
class SusceptanceMatrix:
    """Grounded nodal susceptance matrix over an ordered set of buses."""

    matrix: np.ndarray
    buses: tuple[str, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "buses", tuple(self.buses))
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != len(self.buses):
            raise ValidationError("matrix shape does not match bus list")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def grounding(self) -> np.ndarray:
        """Total grounding susceptance seen at each bus (= row sums)."""
        return self.matrix.sum(axis=1)

    def branch_susceptance(self, i: int, j: int) -> float:
        """Effective branch susceptance between buses i and j (i != j)."""
        return -self.matrix[i, j]

    def validate(self, tol: float = 1e-9) -> None:
        """Check symmetry, sign pattern and positive definiteness."""
        m = self.matrix
        if not np.allclose(m, m.T, rtol=0, atol=tol * max(1.0, np.abs(m).max())):
            raise ValidationError("susceptance matrix is not symmetric")
        if np.any(np.diag(m) <= 0):
            raise ValidationError("diagonal entries must be strictly positive")
        off = m - np.diag(np.diag(m))
        if np.any(off > tol * max(1.0, np.abs(m).max())):
            raise ValidationError("off-diagonal entries must be nonpositive")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError("susceptance matrix is not positive definite") from exc


@dataclass(frozen=True)
class OperatingPoint:
    """Per-device steady-state data on the system power base.

    ``theta`` is optional; when omitted the flat-angle regime is assumed
    (all angles zero, no angle-dependent coupling).
    """

    p: np.ndarray
    q: np.ndarray
    u: np.ndarray
    theta: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))
        if self.theta is not None:
            object.__setattr__(self, "theta", np.atleast_1d(np.asarray(self.theta, dtype=float)))
        n = len(self.p)
        if not (len(self.q) == len(self.u) == n) or (self.theta is not None and len(self.theta) != n):
            raise ValidationError("operating point arrays must have equal length")
        if np.any(self.u <= 0):
            raise ValidationError("voltages must be positive")

    @property
    def n(self) -> int:
        return len(self.p)

    @classmethod
    def flat(cls, devices: Sequence[DeviceSpec]) -> "OperatingPoint":
        """Rated-injection, flat-angle operating point (theta omitted)."""
        return cls(
            p=np.array([d.p_system for d in devices]),
            q=np.array([d.q_b * d.s_b for d in devices]),
            u=np.array([d.u for d in devices]),
        )


def build_susceptance(grid: GridSpec, device_buses: Sequence[str] | None = None) -> SusceptanceMatrix:
    """Assemble the grounded susceptance matrix and eliminate passive buses.

    Each branch (i, j) with susceptance b adds b to B_ii and B_jj (the ground
    term is dropped) and subtracts b from B_ij/B_ji.  Buses not listed in
    ``device_buses`` are treated as passive and removed by Kron reduction.
    """
    order = list(grid.buses)
    idx = {b: k for k, b in enumerate(order)}
    n = len(order)
    m = np.zeros((n, n))
    for br in grid.branches:
        b = br.susceptance
        for end in (br.from_bus, br.to_bus):
            if end != GROUND:
                m[idx[end], idx[end]] += b
        if br.from_bus != GROUND and br.to_bus != GROUND:
            i, j = idx[br.from_bus], idx[br.to_bus]
            m[i, j] -= b
            m[j, i] -= b
    full = SusceptanceMatrix(m, tuple(order))
    if device_buses is None:
        full.validate()
        return full
    device_buses = [str(b) for b in device_buses]
    missing = [b for b in device_buses if b not in idx]
    if missing:
        raise ValidationError(f"device buses not in grid: {missing}")
    passive = [b for b in order if b not in set(device_buses)]
    reduced = kron_reduce(full, passive)
    # restore the requested device ordering
    perm = [reduced.buses.index(b) for b in device_buses]
    out = SusceptanceMatrix(reduced.matrix[np.ix_(perm, perm)], tuple(device_buses))
    out.validate()
    return out


def kron_reduce(full: SusceptanceMatrix, passive: Iterable[str]) -> SusceptanceMatrix:
    """Eliminate ``passive`` buses by the Schur complement.

    B_red = B_kk - B_kp @ inv(B_pp) @ B_pk over the kept index set k.
    """
    passive = [str(b) for b in passive]
    if not passive:
        return full
    unknown = [b for b in passive if b not in full.buses]
    if unknown:
        raise ValidationError(f"cannot eliminate unknown buses: {unknown}")
    keep = [k for k, b in enumerate(full.buses) if b not in set(passive)]
    drop = [k for k, b in enumerate(full.buses) if b in set(passive)]
    m = full.matrix
    bpp = m[np.ix_(drop, drop)]
    try:
        x = np.linalg.solve(bpp, m[np.ix_(drop, keep)])
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("passive-bus block is singular; cannot Kron-reduce") from exc
    reduced = m[np.ix_(keep, keep)] - m[np.ix_(keep, drop)] @ x
    reduced = 0.5 * (reduced + reduced.T)
    return SusceptanceMatrix(reduced, tuple(full.buses[k] for k in keep))


def extended_jacobian(b: SusceptanceMatrix, devices: Sequence[DeviceSpec]) -> np.ndarray:
    """Capacity-weighted Jacobian ``diag(1/S_B) @ B``.

    Similar to a symmetric positive-definite matrix, hence all eigenvalues
    are real and positive; the smallest one is the gSCR.
    """
    _check_device_order(b, devices)
    s = np.array([d.s_b for d in devices])
    return np.diag(1.0 / s) @ b.matrix


def operation_jacobian(
    b: SusceptanceMatrix,
    devices: Sequence[DeviceSpec],
    op: OperatingPoint | None = None,
    weighting: str = "absolute_power",
) -> np.ndarray:
    """Operating-point-weighted Jacobian.

    ``absolute_power`` uses diag(U_i / P_i) @ B with P_i on the system base,
    ``per_unit_power`` uses diag(U_i / P_bi) @ B.  Both variants exist because
    the source material is ambiguous; ``absolute_power`` is the one verified
    against the reference five-converter eigenvalues and is the default.
    """
    _check_device_order(b, devices)
    if weighting not in WEIGHTINGS:
        raise ValidationError(f"unknown weighting {weighting!r}; expected one of {WEIGHTINGS}")
    if op is None:
        op = OperatingPoint.flat(devices)
    if op.n != b.n:
        raise ValidationError("operating point size does not match matrix")
    if weighting == "absolute_power":
        p = op.p
    else:
        p = op.p / np.array([d.s_b for d in devices])
    if np.any(p <= 0):
        raise ValidationError("all active powers must be positive for the operation Jacobian")
    return np.diag(op.u / p) @ b.matrix


def power_injections(b: SusceptanceMatrix, u: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lossless power-flow injections implied by (u, theta).

    Grounding branches connect to the reference source at 1 p.u., zero angle.
    Returns (P, Q) on the system base.
    """
    u = np.asarray(u, float)
    theta = np.asarray(theta, float)
    n = b.n
    g = b.grounding()
    p = np.zeros(n)
    q = np.zeros(n)
    for i in range(n):
        p[i] = g[i] * u[i] * np.sin(theta[i])
        q[i] = g[i] * (u[i] ** 2 - u[i] * np.cos(theta[i]))
        for j in range(n):
            if j == i:
                continue
            bij = -b.matrix[i, j]
            if bij == 0.0:
                continue
            dth = theta[i] - theta[j]
            p[i] += bij * u[i] * u[j] * np.sin(dth)
            q[i] += bij * (u[i] ** 2 - u[i] * u[j] * np.cos(dth))
    return p, q


def operating_point_from_angles(
    b: SusceptanceMatrix, theta: np.ndarray, u: np.ndarray | None = None
) -> OperatingPoint:
    """Build a power-balance-consistent operating point from bus angles."""
    theta = np.asarray(theta, float)
    if u is None:
        u = np.ones(b.n)
    p, q = power_injections(b, u, theta)
    return OperatingPoint(p=p, q=q, u=np.asarray(u, float), theta=theta)


def _check_device_order(b: SusceptanceMatrix, devices: Sequence[DeviceSpec]) -> None:
    if len(devices) != b.n:
        raise ValidationError(f"expected {b.n} devices, got {len(devices)}")
    for d, bus in zip(devices, b.buses):
        if d.bus != bus:
            raise ValidationError(f"device order mismatch: device at {d.bus!r} vs matrix bus {bus!r}")
