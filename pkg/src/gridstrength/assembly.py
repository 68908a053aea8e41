"""Characteristic-equation assembly for single- and multi-infeed systems.

The closed loop of converters against the inductive network is
det(J_device + J_network) = 0.  Network blocks are dressed by the
frequency pair alpha(s), beta(s); converter blocks come from the VSC
Jacobian.  For the multi-infeed system the sign conventions are fixed so
that the n = 1 case reduces exactly to the single-infeed entries

    J_Ptheta = alpha b U^2 - Q     J_PU = beta b U^2 + P
    J_Qtheta = -beta b U^2 + P     J_QU = alpha b U^2 + Q

with the network entering the loop with a leading minus.  In the
characteristic matrix the constant +-P terms of the device and network
parts cancel analytically; the assembled blocks are

    [[-a M - b N + diag(Q),  diag(P U Y11) - b M + a N],
     [-diag(P U Y22) + b M - a N,  -a M - b N - diag(Q)]]

written here with a = alpha(s), b = beta(s).  The simplified variant
replaces M by the bare susceptance matrix, drops N, and evaluates the
converters at unit terminal voltage; it then decouples exactly into n
independent single-infeed systems through the eigenvalues of the weighted
susceptance matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .converter import DeviceModel, vsc_admittance, vsc_jacobian
from .errors import AssumptionError, OperatingPointError, ValidationError
from .network import DeviceSpec, OperatingPoint, SusceptanceMatrix, power_injections
from .rational import (
    MatrixPolynomial,
    ModeSet,
    RationalFn,
    TransferMatrix,
    alpha_beta,
    poly_eigs,
    proots,
    scalar_modes,
)

POWER_BALANCE_TOL = 1e-6


def grid_jacobian_single(
    b: float, p: float = 0.0, q: float = 0.0, u: float = 1.0, omega0: float = 2.0 * np.pi * 50.0
) -> TransferMatrix:
    """Network Jacobian of one device behind a single inductive link."""
    if not b > 0:
        raise ValidationError("branch susceptance must be positive")
    al, be = alpha_beta(omega0)
    bu2 = b * u * u
    return TransferMatrix(
        [
            [al * bu2 - q, be * bu2 + p],
            [-(be * bu2) + p, al * bu2 + q],
        ]
    )


def coupling_matrices(b: SusceptanceMatrix, op: OperatingPoint) -> tuple[np.ndarray, np.ndarray]:
    """Voltage/angle-dressed coupling matrices M and N.

    M_ij = U_i U_j B_ij cos(theta_ij), N_ij = U_i U_j B_ij sin(theta_ij)
    over the susceptance-matrix entries (so N has a zero diagonal).  With
    theta omitted the flat-angle values M = diag(U) B diag(U), N = 0 are
    returned.
    """
    u = op.u
    m = u[:, None] * b.matrix * u[None, :]
    n = np.zeros_like(m)
    if op.theta is not None:
        th = op.theta
        dth = th[:, None] - th[None, :]
        m = m * np.cos(dth)
        n = u[:, None] * b.matrix * u[None, :] * np.sin(dth)
        np.fill_diagonal(n, 0.0)
        np.fill_diagonal(m, (u**2) * np.diag(b.matrix))
    return m, n


def _check_power_balance(b: SusceptanceMatrix, op: OperatingPoint) -> None:
    if op.theta is None:
        return
    p_calc, _ = power_injections(b, op.u, op.theta)
    resid = np.abs(p_calc - op.p).max()
    if resid > POWER_BALANCE_TOL:
        raise OperatingPointError(
            f"operating point violates power balance (residual {resid:.3e})"
        )


def grid_jacobian_multi(
    b: SusceptanceMatrix,
    op: OperatingPoint,
    include_n: bool = True,
    omega0: float = 2.0 * np.pi * 50.0,
) -> TransferMatrix:
    """Network Jacobian blocks of the n-device system.

    Returns the 2n x 2n matrix whose n = 1 specialisation equals
    grid_jacobian_single; the closed-loop characteristic matrix is
    J_device - J_network.
    """
    _check_power_balance(b, op)
    n = b.n
    m, nn = coupling_matrices(b, op)
    if not include_n:
        nn = np.zeros_like(nn)
    al, be = alpha_beta(omega0)
    out = TransferMatrix.zeros(2 * n, 2 * n)
    for i in range(n):
        for j in range(n):
            out[i, j] = al * m[i, j] + be * nn[i, j] - (op.q[i] if i == j else 0.0)
            out[i, n + j] = be * m[i, j] - al * nn[i, j] + (op.p[i] if i == j else 0.0)
            out[n + i, j] = -(be * m[i, j]) + al * nn[i, j] + (op.p[i] if i == j else 0.0)
            out[n + i, n + j] = al * m[i, j] + be * nn[i, j] + (op.q[i] if i == j else 0.0)
    return out


def _require_identical(models: list[DeviceModel]) -> DeviceModel:
    first = models[0]
    for other in models[1:]:
        if not first.same_dynamics(other):
            raise AssumptionError(
                "multi-infeed decoupling requires identical per-unit converter dynamics"
            )
    return first


def mpeis_char_matrix(
    models: list[DeviceModel],
    b: SusceptanceMatrix,
    op: OperatingPoint,
    simplified: bool = True,
    omega0: float = 2.0 * np.pi * 50.0,
) -> MatrixPolynomial:
    """Closed-loop characteristic matrix of the multi-infeed system.

    ``simplified`` applies the flat-voltage regime: M -> B, N -> 0 and the
    converters evaluated at U = 1, which is the form that decouples into
    single-infeed systems.  The full variant keeps the angle/voltage
    dressing (requires a power-balance-consistent operating point).
    """
    if len(models) != b.n or op.n != b.n:
        raise ValidationError("models, matrix and operating point sizes disagree")
    _require_identical(models)
    n = b.n
    al, be = alpha_beta(omega0)
    if simplified:
        m = b.matrix.copy()
        nn = np.zeros_like(m)
        u = np.ones(n)
    else:
        _check_power_balance(b, op)
        m, nn = coupling_matrices(b, op)
        u = op.u
    tm = TransferMatrix.zeros(2 * n, 2 * n)
    for i in range(n):
        y = vsc_admittance(models[i], u=u[i], omega0=omega0)
        y11 = u[i] * y[0, 0]
        y22 = u[i] * y[1, 1]
        for j in range(n):
            qd = op.q[i] if i == j else 0.0
            tm[i, j] = -(al * m[i, j]) - be * nn[i, j] + qd
            tm[i, n + j] = -(be * m[i, j]) + al * nn[i, j]
            tm[n + i, j] = be * m[i, j] - al * nn[i, j]
            tm[n + i, n + j] = -(al * m[i, j]) - be * nn[i, j] - qd
        tm[i, n + i] = tm[i, n + i] + op.p[i] * y11
        tm[n + i, i] = tm[n + i, i] - op.p[i] * y22
    return MatrixPolynomial.from_transfer_matrix(tm)


def mpeis_modes(
    models: list[DeviceModel],
    b: SusceptanceMatrix,
    op: OperatingPoint,
    simplified: bool = True,
    omega0: float = 2.0 * np.pi * 50.0,
    keep_spurious: bool = False,
) -> ModeSet:
    """Closed-loop modes of the multi-infeed system."""
    mp = mpeis_char_matrix(models, b, op, simplified=simplified, omega0=omega0)
    tag = "full-simplified" if simplified else "full"
    return poly_eigs(mp, scale=omega0, provenance=tag, keep_spurious=keep_spurious)


def svis_char(
    model: DeviceModel,
    lam: float,
    p_b: float = 1.0,
    q_b: float = 0.0,
    u: float = 1.0,
    omega0: float = 2.0 * np.pi * 50.0,
) -> RationalFn:
    """Characteristic determinant of one equivalent single-infeed system.

    det([[G_Ptheta + Q_b, G_PU - P_b], [G_Qtheta - P_b, G_QU - Q_b]]
        + [[-a lam, -b lam], [b lam, -a lam]])
    """
    if not lam > 0:
        raise ValidationError("equivalent grid strength lam must be positive")
    g = vsc_jacobian(model, p_b=p_b, q_b=q_b, u=u, omega0=omega0)
    al, be = alpha_beta(omega0)
    tm = TransferMatrix(
        [
            [g[0, 0] + q_b - al * lam, g[0, 1] - p_b - be * lam],
            [g[1, 0] - p_b + be * lam, g[1, 1] - q_b - al * lam],
        ]
    )
    return tm.det2().cancelled()


def svis_modes(
    model: DeviceModel,
    lam: float,
    p_b: float = 1.0,
    q_b: float = 0.0,
    u: float = 1.0,
    omega0: float = 2.0 * np.pi * 50.0,
    provenance: str | None = None,
) -> ModeSet:
    """Closed-loop modes of one equivalent single-infeed system."""
    det = svis_char(model, lam, p_b=p_b, q_b=q_b, u=u, omega0=omega0)
    # det is in minimal (cancelled) form, so every numerator root is a
    # genuine mode; clearing artifacts cannot occur here.  Genuine modes may
    # legitimately sit within 1e-5 of an open-loop converter pole at weak
    # coupling, which is why no pole-proximity filter is applied.
    return scalar_modes(
        det.num,
        den_roots=np.array([], dtype=complex),
        provenance=provenance or "svis",
    )


@dataclass(frozen=True)
class SvisEquivalent:
    """One decoupled single-infeed system: eigenvalue, SCR and its modes."""

    index: int          # 1-based, ascending eigenvalue order
    lam: float
    scr: float
    p_b: float
    q_b: float
    u: float
    modes: ModeSet


def decouple(
    models: list[DeviceModel],
    b: SusceptanceMatrix,
    devices: list[DeviceSpec],
    op: OperatingPoint | None = None,
    pathway: str = "ogscr",
    weighting: str = "absolute_power",
    omega0: float = 2.0 * np.pi * 50.0,
) -> list[SvisEquivalent]:
    """Split the n-infeed system into n equivalent single-infeed systems.

    The ``ogscr`` pathway weights the susceptance matrix by the operating
    point and maps each eigenvalue lam to a rated-point single-infeed system
    (P_b, Q_b, U, SCR) = (1, 0, 1, lam).  The ``gscr`` pathway uses the
    capacity weighting and keeps the common per-unit loading; it requires
    identical per-unit loading on every device.
    """
    from .strength import capacity_eigensystem, operation_eigensystem

    model = _require_identical(list(models))
    if op is None:
        op = OperatingPoint.flat(devices)
    if pathway == "ogscr":
        eig = operation_eigensystem(b, devices, op, weighting=weighting)
        params = [(1.0, 0.0, 1.0)] * b.n
    elif pathway == "gscr":
        p_b = op.p / np.array([d.s_b for d in devices])
        q_b = op.q / np.array([d.s_b for d in devices])
        if np.ptp(p_b) > 1e-9 or np.ptp(q_b) > 1e-9:
            raise AssumptionError(
                "gscr pathway requires identical per-unit loading; use the ogscr pathway"
            )
        eig = capacity_eigensystem(b, devices)
        params = [(float(p_b[0]), float(q_b[0]), 1.0)] * b.n
    else:
        raise ValidationError(f"unknown pathway {pathway!r}")
    out = []
    for i, lam in enumerate(eig.eigenvalues):
        pb, qb, u = params[i]
        modes = svis_modes(
            model, float(lam), p_b=pb, q_b=qb, u=u, omega0=omega0, provenance=f"svis({i + 1})"
        )
        out.append(
            SvisEquivalent(index=i + 1, lam=float(lam), scr=float(lam), p_b=pb, q_b=qb, u=u, modes=modes)
        )
    return out


def scr_quadratic_coeffs(
    model: DeviceModel,
    s: complex,
    p_b: float = 1.0,
    q_b: float = 0.0,
    u: float = 1.0,
    omega0: float = 2.0 * np.pi * 50.0,
) -> tuple[complex, complex]:
    """Coefficients (a, b) of SCR^2 + a(s) SCR + b(s) = 0 at one point s.

    Derived from the single-infeed determinant by collecting powers of the
    SCR; diverges where alpha, beta have their pole (s = +-j omega0) or at a
    pole of any converter entry.
    """
    al, be = alpha_beta(omega0)
    a_v, b_v = al(s), be(s)
    g = vsc_jacobian(model, p_b=p_b, q_b=q_b, u=u, omega0=omega0)
    with np.errstate(all="ignore"):
        gm = g(s)
    vals = np.array([a_v, b_v, *gm.ravel()])
    if not np.all(np.isfinite(vals)):
        raise OperatingPointError(f"pole evaluation at s={s}")
    denom = a_v**2 + b_v**2
    if abs(denom) < 1e-14:
        raise OperatingPointError(f"alpha^2 + beta^2 vanishes at s={s}")
    g_pt, g_pu = gm[0, 0], gm[0, 1]
    g_qt, g_qu = gm[1, 0], gm[1, 1]
    a_c = (-a_v * (g_pt + g_qu) + b_v * (g_qt - g_pu)) / (denom * u**2)
    b_c = (
        g_pt * g_qu
        - g_pu * g_qt
        + (g_qu - g_pt) * q_b
        + (g_pu + g_qt) * p_b
        - p_b**2
        - q_b**2
    ) / (denom * u**4)
    return complex(a_c), complex(b_c)


@dataclass(frozen=True)
class FrobeniusReport:
    """Relative size of the neglected angle-coupling term at each mode."""

    ratios: np.ndarray
    modes: np.ndarray
    skipped: int

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max()) if len(self.ratios) else 0.0


def frobenius_check(
    models: list[DeviceModel],
    b: SusceptanceMatrix,
    op: OperatingPoint,
    modes: ModeSet,
    omega0: float = 2.0 * np.pi * 50.0,
) -> FrobeniusReport:
    """||N_neg(s_i)||_F / ||J_sim(s_i)||_F at each simplified-system mode.

    N_neg = [[-b N, a N], [-a N, -b N]] is the part dropped by the
    flat-angle simplification; a small ratio justifies it.
    """
    n = b.n
    _, nn = coupling_matrices(b, op)
    al, be = alpha_beta(omega0)
    # simplified system matrix, evaluated numerically per mode
    mp = mpeis_char_matrix(models, b, op, simplified=True, omega0=omega0)
    jsim = mp.source
    ratios = []
    used = []
    skipped = 0
    for mode in modes:
        s = mode.s
        with np.errstate(all="ignore"):
            a_v, b_v = al(s), be(s)
            js = jsim(s)
        if not (np.isfinite(a_v) and np.isfinite(b_v) and np.all(np.isfinite(js))):
            skipped += 1
            continue
        nneg = np.block([[-b_v * nn, a_v * nn], [-a_v * nn, -b_v * nn]])
        ratios.append(np.linalg.norm(nneg, "fro") / np.linalg.norm(js, "fro"))
        used.append(s)
    return FrobeniusReport(ratios=np.array(ratios), modes=np.array(used, dtype=complex), skipped=skipped)
